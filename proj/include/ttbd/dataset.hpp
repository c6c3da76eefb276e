#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttbd/tensor.hpp"

namespace ttbd {

/// Images in [0,1], ground-truth labels, and per-sample poison flags
/// (true = trigger applied). Flags and labels are evaluation-only state;
/// defense-path code never receives them.
struct LabeledDataset {
    Tensor images;  // [N,C,H,W]
    std::vector<int> labels;
    std::vector<std::uint8_t> poison_flags;

    std::size_t size() const { return labels.size(); }
    std::size_t channels() const { return images.shape.at(1); }
    std::size_t height() const { return images.shape.at(2); }
    std::size_t width() const { return images.shape.at(3); }

    void check_consistent() const;

    /// Copies the selected samples (in the given order) into a new dataset.
    LabeledDataset subset(const std::vector<std::size_t>& indices) const;

    /// Keeps the first n samples (n == 0 keeps everything).
    LabeledDataset truncated(std::size_t n) const;
};

enum class DataFormat { MnistIdx, Cifar10Binary };

DataFormat parse_data_format(const std::string& name);
const char* data_format_name(DataFormat f);

/// MNIST IDX pair (big-endian magic 0x00000803 / 0x00000801).
LabeledDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

/// One CIFAR-10 binary batch file (1 label byte + 3072 pixel bytes per record).
LabeledDataset load_cifar10_batch(const std::string& path);

struct DatasetPair {
    LabeledDataset train;
    LabeledDataset test;
};

/// Loads train+test from a directory laid out with the standard file names
/// (train-images-idx3-ubyte/... for MNIST-IDX, data_batch_*.bin/test_batch.bin
/// for CIFAR-10).
DatasetPair load_dataset_dir(const std::string& dir, DataFormat format);

/// Writes a dataset as an MNIST-style IDX pair. Pixel values are quantized to
/// bytes; inputs produced by the synthetic generator round-trip losslessly.
void write_mnist_idx(const LabeledDataset& data, const std::string& images_path,
                     const std::string& labels_path);

}  // namespace ttbd
