#pragma once

#include <cstdint>
#include <vector>

#include "gma/tape.hpp"
#include "gma/tensor.hpp"

namespace gma {

// Count-sketch projection: h maps each input index to a bucket in [0, D),
// s flips its sign. Both are regenerated bit-identically from the seed.
struct SketchSpec {
    int64_t input_dim = 0;
    int64_t sketch_dim = 0;
    uint64_t seed = 0;
    std::vector<int64_t> h;
    std::vector<int8_t> s;

    static SketchSpec make(int64_t input_dim, int64_t sketch_dim, uint64_t seed);
};

// out[h[i]] += s[i] * x[i]; linear in x.
Value count_sketch(Value x, const SketchSpec& spec);

// Tape op wrapping the FFT kernel; both inputs must share a length.
Value circular_convolve(Value a, Value b);

// Compact bilinear pooling: circular convolution of the two sketches, an
// unbiased estimator of the count sketch of the outer product x (x) y.
Value mcb_pool(Value x, Value y, const SketchSpec& sx, const SketchSpec& sy);

// Non-tape reference used by tests and the saliency/metrics tooling.
Tensor count_sketch_tensor(const Tensor& x, const SketchSpec& spec);

}  // namespace gma
