#include "gma/compact_bilinear.hpp"

#include "gma/fft.hpp"
#include "gma/rng.hpp"

namespace gma {

SketchSpec SketchSpec::make(int64_t input_dim, int64_t sketch_dim, uint64_t seed) {
    if (input_dim < 1 || sketch_dim < 1) {
        throw ContractError("SketchSpec: dimensions must be positive");
    }
    SketchSpec spec;
    spec.input_dim = input_dim;
    spec.sketch_dim = sketch_dim;
    spec.seed = seed;
    spec.h.resize(static_cast<size_t>(input_dim));
    spec.s.resize(static_cast<size_t>(input_dim));
    SplitMix64 rng(seed);
    for (int64_t i = 0; i < input_dim; ++i) {
        spec.h[i] = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(sketch_dim)));
        spec.s[i] = (rng.next_u64() & 1) ? int8_t{1} : int8_t{-1};
    }
    return spec;
}

Tensor count_sketch_tensor(const Tensor& x, const SketchSpec& spec) {
    if (x.rank() != 1 || x.numel() != spec.input_dim) {
        throw ShapeError("count_sketch: input shape " + shape_str(x.shape) +
                         " does not match spec input_dim " + std::to_string(spec.input_dim));
    }
    Tensor out({spec.sketch_dim});
    for (int64_t i = 0; i < spec.input_dim; ++i) {
        out.data[spec.h[i]] += static_cast<double>(spec.s[i]) * x.data[i];
    }
    return out;
}

Value count_sketch(Value x, const SketchSpec& spec) {
    Tape* t = x.tape;
    if (t == nullptr) throw ContractError("count_sketch: invalid value");
    Tensor out = count_sketch_tensor(t->val(x), spec);
    Node node;
    node.op = Op::CountSketch;
    node.in[0] = x.id;
    node.nin = 1;
    node.sketch = &spec;
    return t->emit(node, std::move(out));
}

Value circular_convolve(Value a, Value b) {
    Tape* t = a.tape;
    if (t == nullptr || b.tape != t) throw ContractError("circular_convolve: tape mismatch");
    const Tensor& A = t->val(a);
    const Tensor& B = t->val(b);
    if (A.rank() != 1 || B.rank() != 1 || A.numel() != B.numel()) {
        throw ShapeError("circular_convolve: need equal-length vectors, got " +
                         shape_str(A.shape) + " and " + shape_str(B.shape));
    }
    Tensor out({A.numel()}, circular_convolve_fft(A.data, B.data));
    Node node;
    node.op = Op::CircularConvolve;
    node.in[0] = a.id;
    node.in[1] = b.id;
    node.nin = 2;
    return t->emit(node, std::move(out));
}

Value mcb_pool(Value x, Value y, const SketchSpec& sx, const SketchSpec& sy) {
    if (sx.sketch_dim != sy.sketch_dim) {
        throw ShapeError("mcb_pool: sketch dims differ (" + std::to_string(sx.sketch_dim) +
                         " vs " + std::to_string(sy.sketch_dim) + ")");
    }
    return circular_convolve(count_sketch(x, sx), count_sketch(y, sy));
}

}  // namespace gma
