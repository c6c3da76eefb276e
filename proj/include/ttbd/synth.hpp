#pragma once

#include <cstdint>

#include "ttbd/dataset.hpp"

namespace ttbd {

/// Procedurally rendered 28x28 grayscale digit corpus (stroke glyphs with
/// per-sample affine jitter, stroke-width/intensity variation and noise).
/// Labels cycle 0..9. Pixels are byte-quantized, so writing the result with
/// write_mnist_idx and loading it back is lossless.
LabeledDataset make_synth_digits(std::size_t count, std::uint64_t seed);

/// Writes a train/test pair of IDX files into `dir` using the standard MNIST
/// file names.
void write_synth_corpus(const std::string& dir, std::size_t train_count, std::size_t test_count,
                        std::uint64_t seed);

}  // namespace ttbd
