#include "ttbd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ttbd {

namespace {

constexpr char kMagic[4] = {'T', 'T', 'B', 'D'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>((v >> 8) & 0xff),
                                static_cast<unsigned char>((v >> 16) & 0xff),
                                static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error(std::string("checkpoint truncated while reading ") + what);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32_buf(std::ostream& os, const Tensor& t) {
    for (float f : t.data) {
        std::uint32_t v;
        std::memcpy(&v, &f, 4);
        put_u32(os, v);
    }
}

void get_f32_buf(std::istream& is, Tensor& t, const char* what) {
    for (float& f : t.data) {
        const std::uint32_t v = get_u32(is, what);
        std::memcpy(&f, &v, 4);
    }
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(model.num_classes));
    put_u32(os, static_cast<std::uint32_t>(model.layers.size()));
    for (const Layer& l : model.layers) {
        put_u32(os, static_cast<std::uint32_t>(l.kind));
        switch (l.kind) {
            case LayerKind::Conv2D:
                put_u32(os, static_cast<std::uint32_t>(l.out_channels));
                put_u32(os, static_cast<std::uint32_t>(l.in_channels));
                put_u32(os, static_cast<std::uint32_t>(l.kernel_h));
                put_u32(os, static_cast<std::uint32_t>(l.kernel_w));
                put_u32(os, static_cast<std::uint32_t>(l.stride));
                put_f32_buf(os, l.weights);
                put_f32_buf(os, l.biases);
                break;
            case LayerKind::Dense:
                put_u32(os, static_cast<std::uint32_t>(l.out_units));
                put_u32(os, static_cast<std::uint32_t>(l.in_units));
                put_f32_buf(os, l.weights);
                put_f32_buf(os, l.biases);
                break;
            case LayerKind::MaxPool2D:
                put_u32(os, static_cast<std::uint32_t>(l.window));
                put_u32(os, static_cast<std::uint32_t>(l.pool_stride));
                break;
            case LayerKind::ReLU:
            case LayerKind::Flatten:
                break;
        }
    }
    if (!os) throw std::runtime_error("write failed for checkpoint: " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("checkpoint magic mismatch in " + path);
    }
    const std::uint32_t version = get_u32(is, "version");
    if (version != kVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    Model model;
    model.num_classes = get_u32(is, "num_classes");
    const std::uint32_t n_layers = get_u32(is, "layer count");
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        const std::uint32_t tag = get_u32(is, "layer tag");
        switch (static_cast<LayerKind>(tag)) {
            case LayerKind::Conv2D: {
                const std::uint32_t oc = get_u32(is, "out_channels");
                const std::uint32_t ic = get_u32(is, "in_channels");
                const std::uint32_t kh = get_u32(is, "kernel_h");
                const std::uint32_t kw = get_u32(is, "kernel_w");
                const std::uint32_t s = get_u32(is, "stride");
                Layer l = Layer::conv2d(oc, ic, kh, kw, s);
                get_f32_buf(is, l.weights, "conv weights");
                get_f32_buf(is, l.biases, "conv biases");
                model.layers.push_back(std::move(l));
                break;
            }
            case LayerKind::Dense: {
                const std::uint32_t out = get_u32(is, "out_units");
                const std::uint32_t in = get_u32(is, "in_units");
                Layer l = Layer::dense(out, in);
                get_f32_buf(is, l.weights, "dense weights");
                get_f32_buf(is, l.biases, "dense biases");
                model.layers.push_back(std::move(l));
                break;
            }
            case LayerKind::MaxPool2D: {
                const std::uint32_t win = get_u32(is, "window");
                const std::uint32_t s = get_u32(is, "pool stride");
                model.layers.push_back(Layer::maxpool2d(win, s));
                break;
            }
            case LayerKind::ReLU:
                model.layers.push_back(Layer::relu());
                break;
            case LayerKind::Flatten:
                model.layers.push_back(Layer::flatten());
                break;
            default:
                throw std::runtime_error("unknown layer tag " + std::to_string(tag) + " in " + path);
        }
    }
    return model;
}

}  // namespace ttbd
