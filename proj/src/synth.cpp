#include "ttbd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "ttbd/rng.hpp"

namespace ttbd {

namespace {

struct Pt {
    float x, y;
};

using Strokes = std::vector<std::pair<Pt, Pt>>;

// Digit glyphs as line segments in a unit box (x right, y down).
Strokes glyph(int digit) {
    auto seg = [](float x0, float y0, float x1, float y1) {
        return std::make_pair(Pt{x0, y0}, Pt{x1, y1});
    };
    switch (digit) {
        case 0:
            return {seg(.32f, .25f, .68f, .25f), seg(.68f, .25f, .68f, .75f),
                    seg(.68f, .75f, .32f, .75f), seg(.32f, .75f, .32f, .25f)};
        case 1:
            return {seg(.40f, .32f, .52f, .22f), seg(.52f, .22f, .52f, .78f),
                    seg(.38f, .78f, .66f, .78f)};
        case 2:
            return {seg(.32f, .30f, .45f, .22f), seg(.45f, .22f, .62f, .24f),
                    seg(.62f, .24f, .68f, .36f), seg(.68f, .36f, .32f, .78f),
                    seg(.32f, .78f, .70f, .78f)};
        case 3:
            return {seg(.32f, .24f, .66f, .24f), seg(.66f, .24f, .48f, .48f),
                    seg(.48f, .48f, .68f, .62f), seg(.68f, .62f, .56f, .78f),
                    seg(.56f, .78f, .32f, .72f)};
        case 4:
            return {seg(.42f, .22f, .32f, .56f), seg(.32f, .56f, .70f, .56f),
                    seg(.60f, .22f, .60f, .80f)};
        case 5:
            return {seg(.68f, .23f, .34f, .23f), seg(.34f, .23f, .34f, .48f),
                    seg(.34f, .48f, .60f, .48f), seg(.60f, .48f, .68f, .62f),
                    seg(.68f, .62f, .55f, .78f), seg(.55f, .78f, .32f, .74f)};
        case 6:
            return {seg(.62f, .22f, .40f, .42f), seg(.40f, .42f, .33f, .60f),
                    seg(.33f, .60f, .36f, .75f), seg(.36f, .75f, .58f, .79f),
                    seg(.58f, .79f, .67f, .66f), seg(.67f, .66f, .58f, .53f),
                    seg(.58f, .53f, .35f, .57f)};
        case 7:
            return {seg(.31f, .24f, .69f, .24f), seg(.69f, .24f, .46f, .79f)};
        case 8:
            return {seg(.37f, .24f, .63f, .24f), seg(.63f, .24f, .63f, .49f),
                    seg(.63f, .49f, .37f, .49f), seg(.37f, .49f, .37f, .24f),
                    seg(.33f, .49f, .33f, .77f), seg(.33f, .77f, .67f, .77f),
                    seg(.67f, .77f, .67f, .49f)};
        case 9:
        default:
            return {seg(.64f, .46f, .40f, .49f), seg(.40f, .49f, .33f, .35f),
                    seg(.33f, .35f, .43f, .22f), seg(.43f, .22f, .62f, .24f),
                    seg(.62f, .24f, .66f, .40f), seg(.66f, .40f, .52f, .79f)};
    }
}

float point_segment_dist(float px, float py, const Pt& a, const Pt& b) {
    const float dx = b.x - a.x, dy = b.y - a.y;
    const float len2 = dx * dx + dy * dy;
    float t = len2 > 0.0f ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0f;
    t = std::clamp(t, 0.0f, 1.0f);
    const float cx = a.x + t * dx - px, cy = a.y + t * dy - py;
    return std::sqrt(cx * cx + cy * cy);
}

}  // namespace

LabeledDataset make_synth_digits(std::size_t count, std::uint64_t seed) {
    constexpr std::size_t kSide = 28;
    LabeledDataset out;
    out.images = Tensor({count, 1, kSide, kSide});
    out.labels.resize(count);
    out.poison_flags.assign(count, 0);

    for (std::size_t i = 0; i < count; ++i) {
        const int digit = static_cast<int>(i % 10);
        out.labels[i] = digit;
        Rng rng(derive_seed(seed, i));

        const float angle = rng.next_float(-0.14f, 0.14f);
        const float scale = rng.next_float(0.85f, 1.12f);
        const float tx = rng.next_float(-0.07f, 0.07f);
        const float ty = rng.next_float(-0.07f, 0.07f);
        const float thickness = rng.next_float(0.045f, 0.075f);
        const float intensity = rng.next_float(0.75f, 1.0f);
        const float noise_sigma = 0.025f;

        const float ca = std::cos(angle), sa = std::sin(angle);
        Strokes strokes = glyph(digit);
        for (auto& [a, b] : strokes) {
            auto xform = [&](Pt p) {
                const float cx = p.x - 0.5f, cy = p.y - 0.5f;
                return Pt{0.5f + scale * (ca * cx - sa * cy) + tx,
                          0.5f + scale * (sa * cx + ca * cy) + ty};
            };
            a = xform(a);
            b = xform(b);
        }

        float* img = out.images.ptr() + i * kSide * kSide;
        for (std::size_t y = 0; y < kSide; ++y) {
            for (std::size_t x = 0; x < kSide; ++x) {
                const float px = (static_cast<float>(x) + 0.5f) / kSide;
                const float py = (static_cast<float>(y) + 0.5f) / kSide;
                float d = 1e9f;
                for (const auto& [a, b] : strokes) {
                    d = std::min(d, point_segment_dist(px, py, a, b));
                }
                // soft-edged stroke
                float v = (thickness - d) / 0.02f;
                v = std::clamp(v, 0.0f, 1.0f) * intensity;
                v += noise_sigma * rng.next_gaussian();
                v = std::clamp(v, 0.0f, 1.0f);
                // byte grid so IDX round-trips are exact
                img[y * kSide + x] =
                    static_cast<float>(static_cast<int>(v * 255.0f + 0.5f)) / 255.0f;
            }
        }
    }
    return out;
}

void write_synth_corpus(const std::string& dir, std::size_t train_count, std::size_t test_count,
                        std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const LabeledDataset train = make_synth_digits(train_count, derive_seed(seed, 0x7261));
    const LabeledDataset test = make_synth_digits(test_count, derive_seed(seed, 0x7465));
    write_mnist_idx(train, (fs::path(dir) / "train-images-idx3-ubyte").string(),
                    (fs::path(dir) / "train-labels-idx1-ubyte").string());
    write_mnist_idx(test, (fs::path(dir) / "t10k-images-idx3-ubyte").string(),
                    (fs::path(dir) / "t10k-labels-idx1-ubyte").string());
}

}  // namespace ttbd
