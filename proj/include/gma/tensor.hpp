#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gma/errors.hpp"

namespace gma {

// Dense row-major tensor of 64-bit floats, the universal value type.
// Rank 0 (shape == {}) is a scalar with one element.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> dims);
    Tensor(std::vector<int64_t> dims, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<int64_t> dims) { return Tensor(std::move(dims)); }
    static Tensor full(std::vector<int64_t> dims, double v);

    int64_t rank() const { return static_cast<int64_t>(shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    bool empty() const { return data.empty() && shape.empty(); }

    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    // rank-2 access
    int64_t rows() const { return shape.at(0); }
    int64_t cols() const { return shape.at(1); }
    double& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
    double at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
};

int64_t shape_numel(const std::vector<int64_t>& dims);
std::string shape_str(const std::vector<int64_t>& dims);

// Throws NumericError naming `what` if any entry is NaN/Inf.
void require_finite(const Tensor& t, const char* what);

// Exact equality of shape and bits.
bool bit_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace gma
