#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ttbd {

/// Dense row-major float32 tensor. The single numeric carrier for images,
/// batches, weights and logits.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s);
    Tensor(std::vector<std::size_t> s, float fill);

    std::size_t size() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    std::size_t rank() const { return shape.size(); }

    float* ptr() { return data.data(); }
    const float* ptr() const { return data.data(); }

    float& at(std::size_t i) { return data[i]; }
    float at(std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    /// True unless some element is NaN or infinite.
    bool all_finite() const;

    /// "N x C x H x W" style description for error messages.
    std::string shape_str() const;

    /// Single sample n of an NCHW batch, copied out as [C,H,W].
    Tensor slice_sample(std::size_t n) const;

    static std::size_t shape_product(const std::vector<std::size_t>& s);
};

}  // namespace ttbd
