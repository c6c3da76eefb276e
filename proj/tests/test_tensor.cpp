#include <doctest.h>

#include <cmath>

#include "ttbd/tensor.hpp"

using namespace ttbd;

TEST_CASE("tensor shape product matches buffer length") {
    Tensor t({2, 3, 4});
    CHECK(t.size() == 24);
    CHECK(t.shape_str() == "2x3x4");
    for (float v : t.data) CHECK(v == 0.0f);
}

TEST_CASE("fill constructor") {
    Tensor t({3, 2}, 1.5f);
    CHECK(t.size() == 6);
    for (float v : t.data) CHECK(v == 1.5f);
}

TEST_CASE("all_finite flags NaN and Inf") {
    Tensor t({2, 2}, 1.0f);
    CHECK(t.all_finite());
    t.data[1] = std::nanf("");
    CHECK_FALSE(t.all_finite());
    t.data[1] = std::numeric_limits<float>::infinity();
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("slice_sample copies one NCHW sample") {
    Tensor t({2, 1, 2, 2});
    for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = static_cast<float>(i);
    const Tensor s = t.slice_sample(1);
    CHECK(s.shape == std::vector<std::size_t>{1, 2, 2});
    CHECK(s.data == std::vector<float>{4, 5, 6, 7});
    CHECK_THROWS(t.slice_sample(2));
}
