#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gma/tensor.hpp"

namespace gma {

class Tape;
struct SketchSpec;

// Handle to a tensor recorded on a tape.
struct Value {
    Tape* tape = nullptr;
    int32_t id = -1;
    bool valid() const { return tape != nullptr && id >= 0; }
};

// Named trainable tensor. `grad` accumulates across backward passes until
// zero_grad() is called.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, std::vector<int64_t> dims)
        : name(std::move(n)), value(dims), grad(std::move(dims)) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

enum class Op : uint8_t {
    Leaf,
    Matmul,
    Add,
    Sub,
    Mul,
    Tanh,
    Sigmoid,
    Softmax,
    SignedSqrt,
    L2Normalize,
    L2NormalizeRows,
    Reshape,
    SelectRow,
    SelectIndex,
    GatherRows,
    StackRows,
    Concat,
    Sum,
    Scale,
    ElmanStep,
    CountSketch,
    CircularConvolve,
    CrossEntropyLogits,
    EmbedIndices,
};

struct Node {
    Op op = Op::Leaf;
    int32_t out = -1;
    std::array<int32_t, 5> in{-1, -1, -1, -1, -1};
    int32_t nin = 0;
    int64_t a = 0;       // axis / row / index, op-specific
    double c = 0.0;      // scale constant
    int32_t moff = 0;    // offset into the tape's int pool
    int32_t mcnt = 0;
    const SketchSpec* sketch = nullptr;  // borrowed; must outlive the tape
};

// Record of a forward computation. Ops append nodes in topological order;
// backward() walks them exactly once in reverse. Reusable via reset().
class Tape {
public:
    Value leaf(Tensor t);
    Value leaf_scalar(double v) { return leaf(Tensor::scalar(v)); }

    // Binds a parameter: first call copies the value in, later calls return
    // the same handle. backward() adds the leaf's gradient into p.grad.
    Value param(Parameter& p);

    const Tensor& val(Value v) const;

    // Gradient of the last backward()'s loss w.r.t. v. Zero tensor if no
    // gradient reached v.
    const Tensor& grad(Value v) const;

    // Reverse accumulation from a scalar loss. Tape-internal gradients are
    // recomputed from scratch (two calls on the same tape are bit-identical);
    // bound parameter grads accumulate.
    void backward(Value loss);

    void reset();
    size_t node_count() const { return nodes_.size(); }

    // internal plumbing for the op functions
    Value emit(Node n, Tensor out);
    int32_t intern_ints(std::span<const int64_t> xs);
    const Tensor& val_at(int32_t id) const { return vals_[static_cast<size_t>(id)]; }
    std::span<const int64_t> ints(const Node& n) const {
        return {ipool_.data() + n.moff, static_cast<size_t>(n.mcnt)};
    }

private:
    void accumulate(int32_t id, const Tensor& g);
    Tensor& grad_buf(int32_t id, const std::vector<int64_t>& dims);
    void backward_node(const Node& n);

    std::vector<Tensor> vals_;
    std::vector<Tensor> grads_;
    std::vector<Node> nodes_;
    std::vector<int64_t> ipool_;
    std::vector<std::pair<int32_t, Parameter*>> bound_;
    Tensor zero_ = Tensor::scalar(0.0);
};

// --- operator set -----------------------------------------------------------
// Rank-1 operands of matmul are promoted: a [k] acts as [1xk], b [k] as [kx1],
// and promoted dims are squeezed from the result ([k]x[k] is a dot product).
Value matmul(Value a, Value b);

// add/sub/mul accept equal shapes or trailing broadcast: the smaller operand's
// shape must be a suffix of the larger one's.
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);

Value tanh(Value a);
Value sigmoid(Value a);
Value softmax(Value a, int64_t axis);
Value signed_sqrt(Value a);
Value l2_normalize(Value a);        // whole tensor
Value l2_normalize_rows(Value a);   // each row of a rank-2 tensor
Value reshape(Value a, std::vector<int64_t> dims);
Value select_row(Value a, int64_t row);
Value select_index(Value a, int64_t flat_index);  // scalar pick
Value gather_rows(Value table, std::span<const int64_t> ids);
Value stack_rows(std::span<const Value> rows);
Value concat(std::span<const Value> parts);  // rank-1 concatenation
Value sum(Value a);
Value scale(Value a, double c);

// Scatters a [K] vector into a length-`size` vector at `indices`, zeros
// elsewhere. Used to embed granule weights back into a full grid.
Value embed_indices(Value a, std::span<const int64_t> indices, int64_t size);

// Numerically stable -log softmax(logits)[target]; gradient w.r.t. logits is
// softmax(logits) - one_hot(target).
Value cross_entropy_with_logits(Value logits, int64_t target);

inline Value operator+(Value a, Value b) { return add(a, b); }
inline Value operator-(Value a, Value b) { return sub(a, b); }
inline Value operator*(Value a, Value b) { return mul(a, b); }

// --- recurrent encoder ------------------------------------------------------
struct RecurrentParams {
    Parameter* w_in = nullptr;   // [d_in x d]
    Parameter* w_rec = nullptr;  // [d x d]
    Parameter* bias = nullptr;   // [d]
};

struct EncodeResult {
    Value per_step;  // [T x d]
    Value final;     // [d]
};

// Elman recurrence h_t = tanh(x_t W_in + h_{t-1} W_rec + b), h_0 = 0.
EncodeResult recurrent_encode(Tape& tape, Value tokens, const RecurrentParams& p);

// Single fused step; `t` selects the token row.
Value elman_step(Value tokens, int64_t t, Value h_prev, Value w_in, Value w_rec, Value bias);

const char* op_name(Op op);

}  // namespace gma
