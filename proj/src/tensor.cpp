#include "ttbd/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ttbd {

std::size_t Tensor::shape_product(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(shape_product(shape), 0.0f);
}

Tensor::Tensor(std::vector<std::size_t> s, float fill) : shape(std::move(s)) {
    data.assign(shape_product(shape), fill);
}

bool Tensor::all_finite() const {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    return os.str();
}

Tensor Tensor::slice_sample(std::size_t n) const {
    if (shape.empty()) throw std::runtime_error("slice_sample: tensor has no batch dimension");
    if (n >= shape[0]) {
        throw std::runtime_error("slice_sample: index " + std::to_string(n) +
                                 " out of range for batch of " + std::to_string(shape[0]));
    }
    std::vector<std::size_t> sub(shape.begin() + 1, shape.end());
    Tensor out(sub);
    const std::size_t stride = out.size();
    std::copy(data.begin() + static_cast<std::ptrdiff_t>(n * stride),
              data.begin() + static_cast<std::ptrdiff_t>((n + 1) * stride), out.data.begin());
    return out;
}

}  // namespace ttbd
