#include "ttbd/corruptions.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ttbd/rng.hpp"

namespace ttbd {

namespace {

constexpr float kNoiseSigma[5] = {0.04f, 0.08f, 0.12f, 0.18f, 0.26f};
constexpr float kBlurSigma[5] = {0.4f, 0.6f, 0.9f, 1.3f, 1.8f};
constexpr float kBrightnessDelta[5] = {0.08f, 0.16f, 0.24f, 0.32f, 0.40f};
constexpr float kContrastFactor[5] = {0.75f, 0.60f, 0.45f, 0.30f, 0.20f};
constexpr std::size_t kPixelateBlock[5] = {2, 3, 4, 6, 8};
constexpr float kSaltPepperProb[5] = {0.02f, 0.04f, 0.07f, 0.11f, 0.16f};

void check_severity(int severity) {
    if (severity < kMinSeverity || severity > kMaxSeverity) {
        throw std::invalid_argument("corruption severity " + std::to_string(severity) +
                                    " outside [1,5]");
    }
}

Tensor gaussian_noise(const Tensor& img, float sigma, std::uint64_t seed) {
    Tensor out = img;
    Rng rng(seed);
    for (float& v : out.data) v = std::clamp(v + sigma * rng.next_gaussian(), 0.0f, 1.0f);
    return out;
}

Tensor gaussian_blur(const Tensor& img, float sigma) {
    const std::size_t c = img.shape[0], h = img.shape[1], w = img.shape[2];
    const int radius = std::max(1, static_cast<int>(std::ceil(2.5f * sigma)));
    std::vector<float> kernel(2 * radius + 1);
    float sum = 0.0f;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5f * static_cast<float>(i * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (float& k : kernel) k /= sum;

    // separable, clamped borders
    Tensor tmp = img, out = img;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const float* src = img.ptr() + ch * h * w;
        float* dst = tmp.ptr() + ch * h * w;
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                float acc = 0.0f;
                for (int k = -radius; k <= radius; ++k) {
                    const int xx = std::clamp(static_cast<int>(x) + k, 0, static_cast<int>(w) - 1);
                    acc += kernel[k + radius] * src[y * w + xx];
                }
                dst[y * w + x] = acc;
            }
        }
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
        const float* src = tmp.ptr() + ch * h * w;
        float* dst = out.ptr() + ch * h * w;
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                float acc = 0.0f;
                for (int k = -radius; k <= radius; ++k) {
                    const int yy = std::clamp(static_cast<int>(y) + k, 0, static_cast<int>(h) - 1);
                    acc += kernel[k + radius] * src[yy * w + x];
                }
                dst[y * w + x] = std::clamp(acc, 0.0f, 1.0f);
            }
        }
    }
    return out;
}

Tensor brightness(const Tensor& img, float delta) {
    Tensor out = img;
    for (float& v : out.data) v = std::clamp(v + delta, 0.0f, 1.0f);
    return out;
}

Tensor contrast(const Tensor& img, float factor) {
    float mean = 0.0f;
    for (float v : img.data) mean += v;
    mean /= static_cast<float>(img.size());
    Tensor out = img;
    for (float& v : out.data) v = std::clamp((v - mean) * factor + mean, 0.0f, 1.0f);
    return out;
}

Tensor pixelate(const Tensor& img, std::size_t block) {
    const std::size_t c = img.shape[0], h = img.shape[1], w = img.shape[2];
    Tensor out = img;
    for (std::size_t ch = 0; ch < c; ++ch) {
        float* plane = out.ptr() + ch * h * w;
        for (std::size_t by = 0; by < h; by += block) {
            for (std::size_t bx = 0; bx < w; bx += block) {
                const std::size_t ey = std::min(by + block, h), ex = std::min(bx + block, w);
                float acc = 0.0f;
                for (std::size_t y = by; y < ey; ++y) {
                    for (std::size_t x = bx; x < ex; ++x) acc += plane[y * w + x];
                }
                const float mean = acc / static_cast<float>((ey - by) * (ex - bx));
                for (std::size_t y = by; y < ey; ++y) {
                    for (std::size_t x = bx; x < ex; ++x) plane[y * w + x] = mean;
                }
            }
        }
    }
    return out;
}

Tensor salt_pepper(const Tensor& img, float prob, std::uint64_t seed) {
    const std::size_t c = img.shape[0], h = img.shape[1], w = img.shape[2];
    Tensor out = img;
    Rng rng(seed);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            if (rng.next_float() < prob) {
                const float v = rng.next_float() < 0.5f ? 0.0f : 1.0f;
                for (std::size_t ch = 0; ch < c; ++ch) out.data[(ch * h + y) * w + x] = v;
            }
        }
    }
    return out;
}

}  // namespace

const char* corruption_name(CorruptionKind k) {
    switch (k) {
        case CorruptionKind::GaussianNoise: return "gaussian-noise";
        case CorruptionKind::GaussianBlur: return "gaussian-blur";
        case CorruptionKind::Brightness: return "brightness";
        case CorruptionKind::Contrast: return "contrast";
        case CorruptionKind::Pixelate: return "pixelate";
        case CorruptionKind::SaltPepper: return "salt-pepper";
    }
    return "?";
}

std::vector<CorruptionKind> all_corruptions() {
    return {CorruptionKind::GaussianNoise, CorruptionKind::GaussianBlur,
            CorruptionKind::Brightness,    CorruptionKind::Contrast,
            CorruptionKind::Pixelate,      CorruptionKind::SaltPepper};
}

Tensor corrupt(const Tensor& image, CorruptionKind kind, int severity, std::uint64_t seed) {
    if (image.rank() != 3) throw std::invalid_argument("corrupt expects a CxHxW image");
    check_severity(severity);
    const std::size_t s = static_cast<std::size_t>(severity - 1);
    switch (kind) {
        case CorruptionKind::GaussianNoise: return gaussian_noise(image, kNoiseSigma[s], seed);
        case CorruptionKind::GaussianBlur: return gaussian_blur(image, kBlurSigma[s]);
        case CorruptionKind::Brightness: return brightness(image, kBrightnessDelta[s]);
        case CorruptionKind::Contrast: return contrast(image, kContrastFactor[s]);
        case CorruptionKind::Pixelate: return pixelate(image, kPixelateBlock[s]);
        case CorruptionKind::SaltPepper: return salt_pepper(image, kSaltPepperProb[s], seed);
    }
    throw std::invalid_argument("unknown corruption kind");
}

namespace {

Tensor as_single(const Tensor& sample) {
    if (sample.rank() == 3) return sample;
    if (sample.rank() == 4 && sample.shape[0] == 1) return sample.slice_sample(0);
    throw std::invalid_argument("expected a single CxHxW sample, got " + sample.shape_str());
}

Tensor as_batch1(const Tensor& chw) {
    Tensor b({1, chw.shape[0], chw.shape[1], chw.shape[2]});
    b.data = chw.data;
    return b;
}

}  // namespace

int recorded_severity(const Model& model, const Tensor& sample, CorruptionKind kind,
                      std::uint64_t seed, int clean_prediction) {
    const Tensor img = as_single(sample);
    for (int sev = kMinSeverity; sev <= kMaxSeverity; ++sev) {
        const Tensor corrupted =
            corrupt(img, kind, sev, derive_seed(seed, static_cast<std::uint64_t>(sev)));
        const int pred = predict(model, as_batch1(corrupted))[0];
        if (pred != clean_prediction) return sev;
    }
    return kNeverFlips;
}

int recorded_severity(const Model& model, const Tensor& sample, CorruptionKind kind,
                      std::uint64_t seed) {
    const Tensor img = as_single(sample);
    const int clean = predict(model, as_batch1(img))[0];
    return recorded_severity(model, img, kind, seed, clean);
}

double severity_deviation(const std::vector<int>& severities) {
    const double n = static_cast<double>(severities.size());
    double mean = 0.0;
    for (int s : severities) mean += s;
    mean /= n;
    double var = 0.0;
    for (int s : severities) var += (s - mean) * (s - mean);
    return std::sqrt(var / n);
}

double crc_score(const Model& model, const Tensor& sample, const std::vector<CorruptionKind>& kinds,
                 std::uint64_t seed) {
    if (kinds.size() < 2) {
        throw std::invalid_argument("crc_score needs at least 2 corruption kinds");
    }
    const Tensor img = as_single(sample);
    const int clean = predict(model, as_batch1(img))[0];
    std::vector<int> sev;
    sev.reserve(kinds.size());
    for (CorruptionKind k : kinds) {
        sev.push_back(recorded_severity(model, img, k,
                                        derive_seed(seed, static_cast<std::uint64_t>(k)), clean));
    }
    return severity_deviation(sev);
}

std::string severity_table_text() {
    std::ostringstream os;
    os << "# corruption severity table v1\n";
    os << "# kind: severity 1..5 parameter\n";
    auto row = [&os](const char* name, const char* param, const auto(&vals)[5]) {
        os << name << " " << param << " =";
        for (int i = 0; i < 5; ++i) os << " " << vals[i];
        os << "\n";
    };
    row("gaussian-noise", "sigma", kNoiseSigma);
    row("gaussian-blur", "sigma", kBlurSigma);
    row("brightness", "delta", kBrightnessDelta);
    row("contrast", "factor", kContrastFactor);
    row("pixelate", "block", kPixelateBlock);
    row("salt-pepper", "prob", kSaltPepperProb);
    return os.str();
}

}  // namespace ttbd
