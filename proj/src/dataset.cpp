#include "ttbd/dataset.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace ttbd {

void LabeledDataset::check_consistent() const {
    if (images.rank() != 4) throw std::runtime_error("dataset images must be NxCxHxW");
    const std::size_t n = images.shape[0];
    if (labels.size() != n || poison_flags.size() != n) {
        throw std::runtime_error("dataset images/labels/flags lengths disagree");
    }
    for (float v : images.data) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw std::runtime_error("dataset pixel outside [0,1]");
        }
    }
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
    LabeledDataset out;
    std::vector<std::size_t> shape = images.shape;
    shape[0] = indices.size();
    out.images = Tensor(shape);
    out.labels.resize(indices.size());
    out.poison_flags.resize(indices.size());
    const std::size_t stride = images.size() / images.shape[0];
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        if (src >= size()) throw std::out_of_range("subset index out of range");
        std::copy(images.data.begin() + static_cast<std::ptrdiff_t>(src * stride),
                  images.data.begin() + static_cast<std::ptrdiff_t>((src + 1) * stride),
                  out.images.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
        out.labels[i] = labels[src];
        out.poison_flags[i] = poison_flags[src];
    }
    return out;
}

LabeledDataset LabeledDataset::truncated(std::size_t n) const {
    if (n == 0 || n >= size()) return *this;
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return subset(idx);
}

DataFormat parse_data_format(const std::string& name) {
    if (name == "mnist-idx") return DataFormat::MnistIdx;
    if (name == "cifar10-binary") return DataFormat::Cifar10Binary;
    throw std::invalid_argument("unknown dataset format: " + name);
}

const char* data_format_name(DataFormat f) {
    return f == DataFormat::MnistIdx ? "mnist-idx" : "cifar10-binary";
}

namespace {

std::uint32_t read_be32(std::istream& is, const std::string& path, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error(path + ": truncated while reading " + what);
    }
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void write_be32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>((v >> 24) & 0xff),
                                static_cast<unsigned char>((v >> 16) & 0xff),
                                static_cast<unsigned char>((v >> 8) & 0xff),
                                static_cast<unsigned char>(v & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

}  // namespace

LabeledDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw std::runtime_error("cannot open " + images_path);
    const std::uint32_t magic = read_be32(imgs, images_path, "magic");
    if (magic != kIdxImagesMagic) {
        throw std::runtime_error(images_path + ": bad IDX image magic (got " +
                                 std::to_string(magic) + ")");
    }
    const std::uint32_t n = read_be32(imgs, images_path, "count");
    const std::uint32_t h = read_be32(imgs, images_path, "rows");
    const std::uint32_t w = read_be32(imgs, images_path, "cols");

    std::vector<unsigned char> raw(static_cast<std::size_t>(n) * h * w);
    if (!imgs.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw std::runtime_error(images_path + ": truncated image data");
    }

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw std::runtime_error("cannot open " + labels_path);
    const std::uint32_t lmagic = read_be32(labs, labels_path, "magic");
    if (lmagic != kIdxLabelsMagic) {
        throw std::runtime_error(labels_path + ": bad IDX label magic (got " +
                                 std::to_string(lmagic) + ")");
    }
    const std::uint32_t ln = read_be32(labs, labels_path, "count");
    if (ln != n) {
        throw std::runtime_error(labels_path + ": label count " + std::to_string(ln) +
                                 " != image count " + std::to_string(n));
    }
    std::vector<unsigned char> raw_labels(ln);
    if (!labs.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(ln))) {
        throw std::runtime_error(labels_path + ": truncated label data");
    }

    LabeledDataset out;
    out.images = Tensor({n, 1, h, w});
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out.images.data[i] = static_cast<float>(raw[i]) / 255.0f;
    }
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.labels[i] = raw_labels[i];
    out.poison_flags.assign(n, 0);
    return out;
}

LabeledDataset load_cifar10_batch(const std::string& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw std::runtime_error("cannot open " + path);
    const std::streamsize bytes = is.tellg();
    constexpr std::streamsize kRecord = 1 + 3 * 32 * 32;
    if (bytes <= 0 || bytes % kRecord != 0) {
        throw std::runtime_error(path + ": size " + std::to_string(bytes) +
                                 " is not a multiple of the 3073-byte CIFAR-10 record");
    }
    const std::size_t n = static_cast<std::size_t>(bytes / kRecord);
    is.seekg(0);

    LabeledDataset out;
    out.images = Tensor({n, 3, 32, 32});
    out.labels.resize(n);
    out.poison_flags.assign(n, 0);
    std::vector<unsigned char> rec(kRecord);
    for (std::size_t i = 0; i < n; ++i) {
        if (!is.read(reinterpret_cast<char*>(rec.data()), kRecord)) {
            throw std::runtime_error(path + ": truncated record " + std::to_string(i));
        }
        if (rec[0] > 9) {
            throw std::runtime_error(path + ": label byte " + std::to_string(rec[0]) +
                                     " out of range in record " + std::to_string(i));
        }
        out.labels[i] = rec[0];
        float* dst = out.images.ptr() + i * 3 * 32 * 32;
        for (std::size_t k = 0; k < 3 * 32 * 32; ++k) {
            dst[k] = static_cast<float>(rec[1 + k]) / 255.0f;
        }
    }
    return out;
}

namespace {

LabeledDataset concat(const std::vector<LabeledDataset>& parts) {
    std::size_t total = 0;
    for (const auto& p : parts) total += p.size();
    LabeledDataset out;
    std::vector<std::size_t> shape = parts.front().images.shape;
    shape[0] = total;
    out.images = Tensor(shape);
    out.labels.reserve(total);
    out.poison_flags.reserve(total);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.images.data.begin(), p.images.data.end(),
                  out.images.data.begin() + static_cast<std::ptrdiff_t>(off));
        off += p.images.size();
        out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
        out.poison_flags.insert(out.poison_flags.end(), p.poison_flags.begin(),
                                p.poison_flags.end());
    }
    return out;
}

}  // namespace

DatasetPair load_dataset_dir(const std::string& dir, DataFormat format) {
    namespace fs = std::filesystem;
    DatasetPair pair;
    if (format == DataFormat::MnistIdx) {
        pair.train = load_mnist_idx((fs::path(dir) / "train-images-idx3-ubyte").string(),
                                    (fs::path(dir) / "train-labels-idx1-ubyte").string());
        pair.test = load_mnist_idx((fs::path(dir) / "t10k-images-idx3-ubyte").string(),
                                   (fs::path(dir) / "t10k-labels-idx1-ubyte").string());
    } else {
        std::vector<LabeledDataset> parts;
        for (int i = 1; i <= 5; ++i) {
            const fs::path p = fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin");
            if (fs::exists(p)) parts.push_back(load_cifar10_batch(p.string()));
        }
        if (parts.empty()) throw std::runtime_error("no data_batch_*.bin found in " + dir);
        pair.train = concat(parts);
        pair.test = load_cifar10_batch((fs::path(dir) / "test_batch.bin").string());
    }
    return pair;
}

void write_mnist_idx(const LabeledDataset& data, const std::string& images_path,
                     const std::string& labels_path) {
    if (data.channels() != 1) {
        throw std::runtime_error("write_mnist_idx: IDX image files are single-channel");
    }
    std::ofstream imgs(images_path, std::ios::binary | std::ios::trunc);
    if (!imgs) throw std::runtime_error("cannot open " + images_path + " for writing");
    write_be32(imgs, kIdxImagesMagic);
    write_be32(imgs, static_cast<std::uint32_t>(data.size()));
    write_be32(imgs, static_cast<std::uint32_t>(data.height()));
    write_be32(imgs, static_cast<std::uint32_t>(data.width()));
    std::vector<unsigned char> raw(data.images.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const float v = data.images.data[i];
        raw[i] = static_cast<unsigned char>(v * 255.0f + 0.5f);
    }
    imgs.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));

    std::ofstream labs(labels_path, std::ios::binary | std::ios::trunc);
    if (!labs) throw std::runtime_error("cannot open " + labels_path + " for writing");
    write_be32(labs, kIdxLabelsMagic);
    write_be32(labs, static_cast<std::uint32_t>(data.size()));
    for (int l : data.labels) {
        const unsigned char b = static_cast<unsigned char>(l);
        labs.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!imgs || !labs) throw std::runtime_error("write failed for IDX pair");
}

}  // namespace ttbd
