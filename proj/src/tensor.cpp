#include "gma/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace gma {

int64_t shape_numel(const std::vector<int64_t>& dims) {
    int64_t n = 1;
    for (int64_t d : dims) {
        if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(dims));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int64_t>& dims) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < dims.size(); ++i) {
        if (i) os << "x";
        os << dims[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int64_t> dims) : shape(std::move(dims)) {
    data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
}

Tensor::Tensor(std::vector<int64_t> dims, std::vector<double> values)
    : shape(std::move(dims)), data(std::move(values)) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.data.assign(1, v);
    return t;
}

Tensor Tensor::full(std::vector<int64_t> dims, double v) {
    Tensor t(std::move(dims));
    for (double& x : t.data) x = v;
    return t;
}

bool Tensor::all_finite() const {
    for (double x : data) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void require_finite(const Tensor& t, const char* what) {
    if (!t.all_finite()) {
        throw NumericError(std::string("non-finite value in ") + what);
    }
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return false;
    if (a.data.size() != b.data.size()) return false;
    return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.data.size() != b.data.size()) return std::numeric_limits<double>::infinity();
    double m = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    }
    return m;
}

}  // namespace gma
