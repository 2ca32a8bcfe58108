#include "gma/tape.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "gma/compact_bilinear.hpp"
#include "gma/fft.hpp"

namespace gma {

namespace {

Tape* same_tape(Value a, Value b) {
    if (!a.valid() || !b.valid() || a.tape != b.tape) {
        throw ContractError("op arguments must be valid values on the same tape");
    }
    return a.tape;
}

Tape* one_tape(Value a) {
    if (!a.valid()) throw ContractError("op argument is not a valid tape value");
    return a.tape;
}

// C[m x n] += A[m x k] * B[k x n]
void matmul_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = A + i * k;
        double* crow = C + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;  // one-hot features make this common
            const double* brow = B + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[k x n] += A^T[m x k] * B[m x n]
void matmul_at_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = A + i * k;
        const double* brow = B + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = C + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x k] += A[m x n] * B^T[k x n]
void matmul_bt_acc(const double* A, const double* B, double* C, int64_t m, int64_t n, int64_t k) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = A + i * n;
        double* crow = C + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double* brow = B + p * n;
            double acc = 0.0;
            for (int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

// 0: same shape; 1: b broadcasts over a; -1: a broadcasts over b.
int broadcast_mode(const Tensor& a, const Tensor& b, const char* opname) {
    if (a.shape == b.shape) return 0;
    auto is_suffix = [](const std::vector<int64_t>& big, const std::vector<int64_t>& small) {
        if (small.size() > big.size()) return false;
        const size_t off = big.size() - small.size();
        for (size_t i = 0; i < small.size(); ++i) {
            if (big[off + i] != small[i]) return false;
        }
        return true;
    };
    if (is_suffix(a.shape, b.shape)) return 1;
    if (is_suffix(b.shape, a.shape)) return -1;
    throw ShapeError(std::string(opname) + ": shapes not broadcastable: " + shape_str(a.shape) +
                     " vs " + shape_str(b.shape));
}

struct Norm2 {
    double norm;   // overflow-safe ||x||_2
};

Norm2 l2_norm(const double* x, int64_t n) {
    double m = 0.0;
    for (int64_t i = 0; i < n; ++i) m = std::max(m, std::fabs(x[i]));
    if (m == 0.0) return {0.0};
    double ss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double u = x[i] / m;
        ss += u * u;
    }
    return {m * std::sqrt(ss)};
}

constexpr double kL2Eps = 1e-12;
constexpr double kSignedSqrtEps = 1e-8;

}  // namespace

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Matmul: return "matmul";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Tanh: return "tanh";
        case Op::Sigmoid: return "sigmoid";
        case Op::Softmax: return "softmax";
        case Op::SignedSqrt: return "signed_sqrt";
        case Op::L2Normalize: return "l2_normalize";
        case Op::L2NormalizeRows: return "l2_normalize_rows";
        case Op::Reshape: return "reshape";
        case Op::SelectRow: return "select_row";
        case Op::SelectIndex: return "select_index";
        case Op::GatherRows: return "gather_rows";
        case Op::StackRows: return "stack_rows";
        case Op::Concat: return "concat";
        case Op::Sum: return "sum";
        case Op::Scale: return "scale";
        case Op::ElmanStep: return "elman_step";
        case Op::CountSketch: return "count_sketch";
        case Op::CircularConvolve: return "circular_convolve";
        case Op::CrossEntropyLogits: return "cross_entropy_with_logits";
        case Op::EmbedIndices: return "embed_indices";
    }
    return "?";
}

Value Tape::leaf(Tensor t) {
    require_finite(t, "leaf");
    Node n;
    n.op = Op::Leaf;
    return emit(n, std::move(t));
}

Value Tape::param(Parameter& p) {
    for (const auto& [id, bp] : bound_) {
        if (bp == &p) return Value{this, id};
    }
    Value v = leaf(p.value);
    bound_.emplace_back(v.id, &p);
    return v;
}

const Tensor& Tape::val(Value v) const {
    if (v.tape != this || v.id < 0 || static_cast<size_t>(v.id) >= vals_.size()) {
        throw ContractError("value does not belong to this tape");
    }
    return vals_[static_cast<size_t>(v.id)];
}

const Tensor& Tape::grad(Value v) const {
    val(v);  // bounds check
    const Tensor& g = grads_.size() > static_cast<size_t>(v.id) ? grads_[static_cast<size_t>(v.id)]
                                                                : zero_;
    return g.data.empty() ? zero_ : g;
}

Value Tape::emit(Node n, Tensor out) {
    require_finite(out, op_name(n.op));
    const int32_t id = static_cast<int32_t>(vals_.size());
    vals_.push_back(std::move(out));
    n.out = id;
    if (n.op != Op::Leaf) nodes_.push_back(n);
    return Value{this, id};
}

int32_t Tape::intern_ints(std::span<const int64_t> xs) {
    const int32_t off = static_cast<int32_t>(ipool_.size());
    ipool_.insert(ipool_.end(), xs.begin(), xs.end());
    return off;
}

void Tape::reset() {
    vals_.clear();
    grads_.clear();
    nodes_.clear();
    ipool_.clear();
    bound_.clear();
}

Tensor& Tape::grad_buf(int32_t id, const std::vector<int64_t>& dims) {
    Tensor& g = grads_[static_cast<size_t>(id)];
    if (g.data.empty()) g = Tensor(dims);
    return g;
}

void Tape::backward(Value loss) {
    if (loss.tape != this) throw ContractError("backward: loss from another tape");
    const Tensor& lt = val(loss);
    if (lt.numel() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_str(lt.shape));
    }
    grads_.assign(vals_.size(), Tensor{});
    grad_buf(loss.id, lt.shape).data[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        backward_node(*it);
    }
    for (const auto& [id, p] : bound_) {
        const Tensor& g = grads_[static_cast<size_t>(id)];
        if (g.data.empty()) continue;
        for (size_t i = 0; i < g.data.size(); ++i) p->grad.data[i] += g.data[i];
    }
}

void Tape::backward_node(const Node& n) {
    const Tensor& gout = grads_[static_cast<size_t>(n.out)];
    if (gout.data.empty()) return;  // no gradient reached this node
    const Tensor& out = vals_[static_cast<size_t>(n.out)];

    auto in_val = [&](int i) -> const Tensor& { return vals_[static_cast<size_t>(n.in[i])]; };
    auto in_grad = [&](int i) -> Tensor& {
        return grad_buf(n.in[i], vals_[static_cast<size_t>(n.in[i])].shape);
    };

    switch (n.op) {
        case Op::Leaf:
            break;

        case Op::Matmul: {
            const Tensor& A = in_val(0);
            const Tensor& B = in_val(1);
            const bool avec = A.rank() == 1, bvec = B.rank() == 1;
            const int64_t m = avec ? 1 : A.shape[0];
            const int64_t k = avec ? A.shape[0] : A.shape[1];
            const int64_t nn = bvec ? 1 : B.shape[1];
            Tensor& gA = in_grad(0);
            Tensor& gB = in_grad(1);
            // gA += G * B^T ; gB += A^T * G   (G viewed as m x n)
            matmul_bt_acc(gout.data.data(), B.data.data(), gA.data.data(), m, nn, k);
            matmul_at_acc(A.data.data(), gout.data.data(), gB.data.data(), m, k, nn);
            break;
        }

        case Op::Add:
        case Op::Sub: {
            const Tensor& A = in_val(0);
            const Tensor& B = in_val(1);
            const double sgn = (n.op == Op::Sub) ? -1.0 : 1.0;
            const int mode = broadcast_mode(A, B, "add");
            Tensor& gA = in_grad(0);
            Tensor& gB = in_grad(1);
            const int64_t total = out.numel();
            if (mode == 0) {
                for (int64_t i = 0; i < total; ++i) {
                    gA.data[i] += gout.data[i];
                    gB.data[i] += sgn * gout.data[i];
                }
            } else if (mode == 1) {
                const int64_t bn = B.numel();
                for (int64_t i = 0; i < total; ++i) {
                    gA.data[i] += gout.data[i];
                    gB.data[i % bn] += sgn * gout.data[i];
                }
            } else {
                const int64_t an = A.numel();
                for (int64_t i = 0; i < total; ++i) {
                    gA.data[i % an] += gout.data[i];
                    gB.data[i] += sgn * gout.data[i];
                }
            }
            break;
        }

        case Op::Mul: {
            const Tensor& A = in_val(0);
            const Tensor& B = in_val(1);
            const int mode = broadcast_mode(A, B, "mul");
            Tensor& gA = in_grad(0);
            Tensor& gB = in_grad(1);
            const int64_t total = out.numel();
            if (mode == 0) {
                for (int64_t i = 0; i < total; ++i) {
                    gA.data[i] += gout.data[i] * B.data[i];
                    gB.data[i] += gout.data[i] * A.data[i];
                }
            } else if (mode == 1) {
                const int64_t bn = B.numel();
                for (int64_t i = 0; i < total; ++i) {
                    gA.data[i] += gout.data[i] * B.data[i % bn];
                    gB.data[i % bn] += gout.data[i] * A.data[i];
                }
            } else {
                const int64_t an = A.numel();
                for (int64_t i = 0; i < total; ++i) {
                    gA.data[i % an] += gout.data[i] * B.data[i];
                    gB.data[i] += gout.data[i] * A.data[i % an];
                }
            }
            break;
        }

        case Op::Tanh: {
            Tensor& g = in_grad(0);
            for (int64_t i = 0; i < out.numel(); ++i) {
                g.data[i] += gout.data[i] * (1.0 - out.data[i] * out.data[i]);
            }
            break;
        }

        case Op::Sigmoid: {
            Tensor& g = in_grad(0);
            for (int64_t i = 0; i < out.numel(); ++i) {
                g.data[i] += gout.data[i] * out.data[i] * (1.0 - out.data[i]);
            }
            break;
        }

        case Op::Softmax: {
            const Tensor& x = in_val(0);
            Tensor& g = in_grad(0);
            const int64_t ax = n.a;
            int64_t inner = 1, outer = 1;
            const int64_t nn = x.shape[ax];
            for (int64_t i = 0; i < ax; ++i) outer *= x.shape[i];
            for (size_t i = ax + 1; i < x.shape.size(); ++i) inner *= x.shape[i];
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t in_i = 0; in_i < inner; ++in_i) {
                    const int64_t base = o * nn * inner + in_i;
                    double dot = 0.0;
                    for (int64_t i = 0; i < nn; ++i) {
                        dot += gout.data[base + i * inner] * out.data[base + i * inner];
                    }
                    for (int64_t i = 0; i < nn; ++i) {
                        const int64_t ix = base + i * inner;
                        g.data[ix] += out.data[ix] * (gout.data[ix] - dot);
                    }
                }
            }
            break;
        }

        case Op::SignedSqrt: {
            const Tensor& x = in_val(0);
            Tensor& g = in_grad(0);
            for (int64_t i = 0; i < out.numel(); ++i) {
                g.data[i] += gout.data[i] * 0.5 / std::sqrt(std::fabs(x.data[i]) + kSignedSqrtEps);
            }
            break;
        }

        case Op::L2Normalize:
        case Op::L2NormalizeRows: {
            const Tensor& x = in_val(0);
            Tensor& g = in_grad(0);
            const int64_t rows = (n.op == Op::L2Normalize) ? 1 : x.shape[0];
            const int64_t cols = x.numel() / rows;
            for (int64_t r = 0; r < rows; ++r) {
                const double* xr = x.data.data() + r * cols;
                const double* gr = gout.data.data() + r * cols;
                double* dst = g.data.data() + r * cols;
                const double norm = l2_norm(xr, cols).norm;
                const double s = norm + kL2Eps;
                if (norm == 0.0) {
                    for (int64_t i = 0; i < cols; ++i) dst[i] += gr[i] / s;
                } else {
                    double dot = 0.0;
                    for (int64_t i = 0; i < cols; ++i) dot += gr[i] * xr[i];
                    const double coef = dot / (s * s);
                    for (int64_t i = 0; i < cols; ++i) {
                        dst[i] += gr[i] / s - coef * (xr[i] / norm);
                    }
                }
            }
            break;
        }

        case Op::Reshape: {
            Tensor& g = in_grad(0);
            for (int64_t i = 0; i < out.numel(); ++i) g.data[i] += gout.data[i];
            break;
        }

        case Op::SelectRow: {
            const Tensor& x = in_val(0);
            Tensor& g = in_grad(0);
            const int64_t cols = x.shape[1];
            for (int64_t j = 0; j < cols; ++j) g.data[n.a * cols + j] += gout.data[j];
            break;
        }

        case Op::SelectIndex: {
            Tensor& g = in_grad(0);
            g.data[n.a] += gout.data[0];
            break;
        }

        case Op::GatherRows: {
            const Tensor& table = in_val(0);
            Tensor& g = in_grad(0);
            const int64_t cols = table.shape[1];
            const auto ids = ints(n);
            for (size_t t = 0; t < ids.size(); ++t) {
                const double* src = gout.data.data() + t * cols;
                double* dst = g.data.data() + ids[t] * cols;
                for (int64_t j = 0; j < cols; ++j) dst[j] += src[j];
            }
            break;
        }

        case Op::StackRows: {
            const auto ids = ints(n);
            const int64_t cols = out.shape[1];
            for (size_t r = 0; r < ids.size(); ++r) {
                const int32_t vid = static_cast<int32_t>(ids[r]);
                Tensor& g = grad_buf(vid, vals_[static_cast<size_t>(vid)].shape);
                const double* src = gout.data.data() + r * cols;
                for (int64_t j = 0; j < cols; ++j) g.data[j] += src[j];
            }
            break;
        }

        case Op::Concat: {
            const auto ids = ints(n);
            int64_t off = 0;
            for (int64_t vid64 : ids) {
                const int32_t vid = static_cast<int32_t>(vid64);
                const Tensor& part = vals_[static_cast<size_t>(vid)];
                Tensor& g = grad_buf(vid, part.shape);
                for (int64_t j = 0; j < part.numel(); ++j) g.data[j] += gout.data[off + j];
                off += part.numel();
            }
            break;
        }

        case Op::Sum: {
            const Tensor& x = in_val(0);
            Tensor& g = in_grad(0);
            for (int64_t i = 0; i < x.numel(); ++i) g.data[i] += gout.data[0];
            break;
        }

        case Op::Scale: {
            Tensor& g = in_grad(0);
            for (int64_t i = 0; i < out.numel(); ++i) g.data[i] += n.c * gout.data[i];
            break;
        }

        case Op::ElmanStep: {
            const Tensor& tokens = in_val(0);
            const Tensor& hprev = in_val(1);
            const Tensor& win = in_val(2);
            const Tensor& wrec = in_val(3);
            const int64_t dx = tokens.shape[1];
            const int64_t d = out.numel();
            const double* xrow = tokens.data.data() + n.a * dx;

            std::vector<double> dpre(static_cast<size_t>(d));
            for (int64_t j = 0; j < d; ++j) {
                dpre[j] = gout.data[j] * (1.0 - out.data[j] * out.data[j]);
            }
            Tensor& gtok = in_grad(0);
            Tensor& gh = in_grad(1);
            Tensor& gwin = in_grad(2);
            Tensor& gwrec = in_grad(3);
            Tensor& gb = in_grad(4);
            double* gx = gtok.data.data() + n.a * dx;
            for (int64_t i = 0; i < dx; ++i) {
                const double* wrow = win.data.data() + i * d;
                double acc = 0.0;
                for (int64_t j = 0; j < d; ++j) acc += wrow[j] * dpre[j];
                gx[i] += acc;
                const double xi = xrow[i];
                if (xi != 0.0) {
                    double* grow = gwin.data.data() + i * d;
                    for (int64_t j = 0; j < d; ++j) grow[j] += xi * dpre[j];
                }
            }
            for (int64_t i = 0; i < d; ++i) {
                const double* wrow = wrec.data.data() + i * d;
                double acc = 0.0;
                for (int64_t j = 0; j < d; ++j) acc += wrow[j] * dpre[j];
                gh.data[i] += acc;
                const double hi = hprev.data[i];
                if (hi != 0.0) {
                    double* grow = gwrec.data.data() + i * d;
                    for (int64_t j = 0; j < d; ++j) grow[j] += hi * dpre[j];
                }
            }
            for (int64_t j = 0; j < d; ++j) gb.data[j] += dpre[j];
            break;
        }

        case Op::CountSketch: {
            const SketchSpec& spec = *n.sketch;
            Tensor& g = in_grad(0);
            for (int64_t i = 0; i < spec.input_dim; ++i) {
                g.data[i] += static_cast<double>(spec.s[i]) * gout.data[spec.h[i]];
            }
            break;
        }

        case Op::CircularConvolve: {
            const Tensor& A = in_val(0);
            const Tensor& B = in_val(1);
            Tensor& gA = in_grad(0);
            Tensor& gB = in_grad(1);
            const auto ga = circular_correlate_fft(gout.data, B.data);
            const auto gb = circular_correlate_fft(gout.data, A.data);
            for (size_t i = 0; i < ga.size(); ++i) gA.data[i] += ga[i];
            for (size_t i = 0; i < gb.size(); ++i) gB.data[i] += gb[i];
            break;
        }

        case Op::CrossEntropyLogits: {
            const Tensor& z = in_val(0);
            Tensor& g = in_grad(0);
            const int64_t nn = z.numel();
            double mx = z.data[0];
            for (int64_t i = 1; i < nn; ++i) mx = std::max(mx, z.data[i]);
            double denom = 0.0;
            for (int64_t i = 0; i < nn; ++i) denom += std::exp(z.data[i] - mx);
            for (int64_t i = 0; i < nn; ++i) {
                const double p = std::exp(z.data[i] - mx) / denom;
                g.data[i] += gout.data[0] * (p - (i == n.a ? 1.0 : 0.0));
            }
            break;
        }

        case Op::EmbedIndices: {
            Tensor& g = in_grad(0);
            const auto ids = ints(n);
            for (size_t j = 0; j < ids.size(); ++j) g.data[j] += gout.data[ids[j]];
            break;
        }
    }
}

// --- forward ops -------------------------------------------------------------

Value matmul(Value va, Value vb) {
    Tape* t = same_tape(va, vb);
    const Tensor& A = t->val(va);
    const Tensor& B = t->val(vb);
    if (A.rank() < 1 || A.rank() > 2 || B.rank() < 1 || B.rank() > 2) {
        throw ShapeError("matmul: operands must be rank 1 or 2, got " + shape_str(A.shape) +
                         " and " + shape_str(B.shape));
    }
    const bool avec = A.rank() == 1, bvec = B.rank() == 1;
    const int64_t m = avec ? 1 : A.shape[0];
    const int64_t k = avec ? A.shape[0] : A.shape[1];
    const int64_t k2 = B.shape[0];
    const int64_t nn = bvec ? 1 : B.shape[1];
    if (k != k2) {
        throw ShapeError("matmul: inner dimensions differ: " + shape_str(A.shape) + " vs " +
                         shape_str(B.shape));
    }
    std::vector<int64_t> oshape;
    if (!avec) oshape.push_back(m);
    if (!bvec) oshape.push_back(nn);
    Tensor out(std::move(oshape));
    matmul_acc(A.data.data(), B.data.data(), out.data.data(), m, k, nn);

    Node node;
    node.op = Op::Matmul;
    node.in[0] = va.id;
    node.in[1] = vb.id;
    node.nin = 2;
    return t->emit(node, std::move(out));
}

namespace {

Value binary_pointwise(Op op, Value va, Value vb) {
    Tape* t = same_tape(va, vb);
    const Tensor& A = t->val(va);
    const Tensor& B = t->val(vb);
    const int mode = broadcast_mode(A, B, op_name(op));
    const Tensor& big = (mode >= 0) ? A : B;
    Tensor out(big.shape);
    const int64_t total = out.numel();
    const int64_t an = A.numel(), bn = B.numel();
    for (int64_t i = 0; i < total; ++i) {
        const double x = A.data[mode >= 0 ? i : i % an];
        const double y = B.data[mode <= 0 ? i : i % bn];
        out.data[i] = (op == Op::Add) ? x + y : (op == Op::Sub) ? x - y : x * y;
    }
    Node node;
    node.op = op;
    node.in[0] = va.id;
    node.in[1] = vb.id;
    node.nin = 2;
    return t->emit(node, std::move(out));
}

Value unary_pointwise(Op op, Value va) {
    Tape* t = one_tape(va);
    const Tensor& A = t->val(va);
    Tensor out(A.shape);
    for (int64_t i = 0; i < A.numel(); ++i) {
        const double x = A.data[i];
        switch (op) {
            case Op::Tanh: out.data[i] = std::tanh(x); break;
            case Op::Sigmoid: out.data[i] = 1.0 / (1.0 + std::exp(-x)); break;
            case Op::SignedSqrt:
                out.data[i] = (x > 0.0) ? std::sqrt(x) : (x < 0.0 ? -std::sqrt(-x) : 0.0);
                break;
            default: throw ContractError("not a unary op");
        }
    }
    Node node;
    node.op = op;
    node.in[0] = va.id;
    node.nin = 1;
    return t->emit(node, std::move(out));
}

}  // namespace

Value add(Value a, Value b) { return binary_pointwise(Op::Add, a, b); }
Value sub(Value a, Value b) { return binary_pointwise(Op::Sub, a, b); }
Value mul(Value a, Value b) { return binary_pointwise(Op::Mul, a, b); }
Value tanh(Value a) { return unary_pointwise(Op::Tanh, a); }
Value sigmoid(Value a) { return unary_pointwise(Op::Sigmoid, a); }
Value signed_sqrt(Value a) { return unary_pointwise(Op::SignedSqrt, a); }

Value softmax(Value va, int64_t axis) {
    Tape* t = one_tape(va);
    const Tensor& x = t->val(va);
    if (axis < 0 || axis >= x.rank()) {
        throw ContractError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                            shape_str(x.shape));
    }
    Tensor out(x.shape);
    const int64_t nn = x.shape[axis];
    int64_t inner = 1, outer = 1;
    for (int64_t i = 0; i < axis; ++i) outer *= x.shape[i];
    for (size_t i = axis + 1; i < x.shape.size(); ++i) inner *= x.shape[i];
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in_i = 0; in_i < inner; ++in_i) {
            const int64_t base = o * nn * inner + in_i;
            double mx = x.data[base];
            for (int64_t i = 1; i < nn; ++i) mx = std::max(mx, x.data[base + i * inner]);
            double denom = 0.0;
            for (int64_t i = 0; i < nn; ++i) {
                const double e = std::exp(x.data[base + i * inner] - mx);
                out.data[base + i * inner] = e;
                denom += e;
            }
            for (int64_t i = 0; i < nn; ++i) out.data[base + i * inner] /= denom;
        }
    }
    Node node;
    node.op = Op::Softmax;
    node.in[0] = va.id;
    node.nin = 1;
    node.a = axis;
    return t->emit(node, std::move(out));
}

namespace {

Value l2_normalize_impl(Op op, Value va) {
    Tape* t = one_tape(va);
    const Tensor& x = t->val(va);
    if (op == Op::L2NormalizeRows && x.rank() != 2) {
        throw ShapeError("l2_normalize_rows: expected rank-2 input, got " + shape_str(x.shape));
    }
    const int64_t rows = (op == Op::L2Normalize) ? 1 : x.shape[0];
    const int64_t cols = x.numel() / rows;
    Tensor out(x.shape);
    for (int64_t r = 0; r < rows; ++r) {
        const double* src = x.data.data() + r * cols;
        double* dst = out.data.data() + r * cols;
        const double s = l2_norm(src, cols).norm + kL2Eps;
        for (int64_t i = 0; i < cols; ++i) dst[i] = src[i] / s;
    }
    Node node;
    node.op = op;
    node.in[0] = va.id;
    node.nin = 1;
    return t->emit(node, std::move(out));
}

}  // namespace

Value l2_normalize(Value a) { return l2_normalize_impl(Op::L2Normalize, a); }
Value l2_normalize_rows(Value a) { return l2_normalize_impl(Op::L2NormalizeRows, a); }

Value reshape(Value va, std::vector<int64_t> dims) {
    Tape* t = one_tape(va);
    const Tensor& x = t->val(va);
    if (shape_numel(dims) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape) + " as " + shape_str(dims));
    }
    Tensor out(std::move(dims), x.data);
    Node node;
    node.op = Op::Reshape;
    node.in[0] = va.id;
    node.nin = 1;
    return t->emit(node, std::move(out));
}

Value select_row(Value va, int64_t row) {
    Tape* t = one_tape(va);
    const Tensor& x = t->val(va);
    if (x.rank() != 2) throw ShapeError("select_row: expected rank-2, got " + shape_str(x.shape));
    if (row < 0 || row >= x.shape[0]) {
        throw ContractError("select_row: row " + std::to_string(row) + " out of range");
    }
    const int64_t cols = x.shape[1];
    Tensor out({cols});
    std::copy_n(x.data.data() + row * cols, cols, out.data.data());
    Node node;
    node.op = Op::SelectRow;
    node.in[0] = va.id;
    node.nin = 1;
    node.a = row;
    return t->emit(node, std::move(out));
}

Value select_index(Value va, int64_t flat_index) {
    Tape* t = one_tape(va);
    const Tensor& x = t->val(va);
    if (flat_index < 0 || flat_index >= x.numel()) {
        throw ContractError("select_index: index " + std::to_string(flat_index) + " out of range");
    }
    Node node;
    node.op = Op::SelectIndex;
    node.in[0] = va.id;
    node.nin = 1;
    node.a = flat_index;
    return t->emit(node, Tensor::scalar(x.data[static_cast<size_t>(flat_index)]));
}

Value gather_rows(Value vtable, std::span<const int64_t> ids) {
    Tape* t = one_tape(vtable);
    const Tensor& table = t->val(vtable);
    if (table.rank() != 2) {
        throw ShapeError("gather_rows: expected rank-2 table, got " + shape_str(table.shape));
    }
    if (ids.empty()) throw ContractError("gather_rows: empty index list");
    const int64_t cols = table.shape[1];
    Tensor out({static_cast<int64_t>(ids.size()), cols});
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table.shape[0]) {
            throw ContractError("gather_rows: id " + std::to_string(ids[i]) + " out of range");
        }
        std::copy_n(table.data.data() + ids[i] * cols, cols, out.data.data() + i * cols);
    }
    Node node;
    node.op = Op::GatherRows;
    node.in[0] = vtable.id;
    node.nin = 1;
    node.moff = t->intern_ints(ids);
    node.mcnt = static_cast<int32_t>(ids.size());
    return t->emit(node, std::move(out));
}

Value stack_rows(std::span<const Value> rows) {
    if (rows.empty()) throw ContractError("stack_rows: no rows");
    Tape* t = one_tape(rows[0]);
    const int64_t cols = t->val(rows[0]).numel();
    Tensor out({static_cast<int64_t>(rows.size()), cols});
    std::vector<int64_t> ids(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) {
        same_tape(rows[0], rows[r]);
        const Tensor& x = t->val(rows[r]);
        if (x.rank() != 1 || x.numel() != cols) {
            throw ShapeError("stack_rows: row " + std::to_string(r) + " has shape " +
                             shape_str(x.shape));
        }
        std::copy_n(x.data.data(), cols, out.data.data() + r * cols);
        ids[r] = rows[r].id;
    }
    Node node;
    node.op = Op::StackRows;
    node.moff = t->intern_ints(ids);
    node.mcnt = static_cast<int32_t>(ids.size());
    return t->emit(node, std::move(out));
}

Value concat(std::span<const Value> parts) {
    if (parts.empty()) throw ContractError("concat: no parts");
    Tape* t = one_tape(parts[0]);
    int64_t total = 0;
    std::vector<int64_t> ids(parts.size());
    for (size_t i = 0; i < parts.size(); ++i) {
        same_tape(parts[0], parts[i]);
        const Tensor& x = t->val(parts[i]);
        if (x.rank() != 1) {
            throw ShapeError("concat: expected rank-1 parts, got " + shape_str(x.shape));
        }
        total += x.numel();
        ids[i] = parts[i].id;
    }
    Tensor out({total});
    int64_t off = 0;
    for (const Value& p : parts) {
        const Tensor& x = t->val(p);
        std::copy_n(x.data.data(), x.numel(), out.data.data() + off);
        off += x.numel();
    }
    Node node;
    node.op = Op::Concat;
    node.moff = t->intern_ints(ids);
    node.mcnt = static_cast<int32_t>(ids.size());
    return t->emit(node, std::move(out));
}

Value sum(Value va) {
    Tape* t = one_tape(va);
    const Tensor& x = t->val(va);
    double acc = 0.0;
    for (double v : x.data) acc += v;
    Node node;
    node.op = Op::Sum;
    node.in[0] = va.id;
    node.nin = 1;
    return t->emit(node, Tensor::scalar(acc));
}

Value scale(Value va, double c) {
    Tape* t = one_tape(va);
    const Tensor& x = t->val(va);
    Tensor out(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) out.data[i] = c * x.data[i];
    Node node;
    node.op = Op::Scale;
    node.in[0] = va.id;
    node.nin = 1;
    node.c = c;
    return t->emit(node, std::move(out));
}

Value embed_indices(Value va, std::span<const int64_t> indices, int64_t size) {
    Tape* t = one_tape(va);
    const Tensor& x = t->val(va);
    if (x.rank() != 1 || static_cast<int64_t>(indices.size()) != x.numel()) {
        throw ShapeError("embed_indices: need one index per input entry");
    }
    std::unordered_set<int64_t> seen;
    Tensor out({size});
    for (size_t j = 0; j < indices.size(); ++j) {
        if (indices[j] < 0 || indices[j] >= size || !seen.insert(indices[j]).second) {
            throw ContractError("embed_indices: indices must be unique and within range");
        }
        out.data[indices[j]] = x.data[j];
    }
    Node node;
    node.op = Op::EmbedIndices;
    node.in[0] = va.id;
    node.nin = 1;
    node.moff = t->intern_ints(indices);
    node.mcnt = static_cast<int32_t>(indices.size());
    return t->emit(node, std::move(out));
}

Value cross_entropy_with_logits(Value vlogits, int64_t target) {
    Tape* t = one_tape(vlogits);
    const Tensor& z = t->val(vlogits);
    if (z.rank() != 1) {
        throw ShapeError("cross_entropy_with_logits: expected rank-1 logits, got " +
                         shape_str(z.shape));
    }
    if (target < 0 || target >= z.numel()) {
        throw ContractError("cross_entropy_with_logits: target " + std::to_string(target) +
                            " out of range [0, " + std::to_string(z.numel()) + ")");
    }
    double mx = z.data[0];
    for (int64_t i = 1; i < z.numel(); ++i) mx = std::max(mx, z.data[i]);
    double denom = 0.0;
    for (int64_t i = 0; i < z.numel(); ++i) denom += std::exp(z.data[i] - mx);
    const double loss = mx + std::log(denom) - z.data[static_cast<size_t>(target)];
    Node node;
    node.op = Op::CrossEntropyLogits;
    node.in[0] = vlogits.id;
    node.nin = 1;
    node.a = target;
    return t->emit(node, Tensor::scalar(loss));
}

Value elman_step(Value tokens, int64_t t, Value h_prev, Value w_in, Value w_rec, Value bias) {
    Tape* tp = same_tape(tokens, h_prev);
    same_tape(tokens, w_in);
    same_tape(tokens, w_rec);
    same_tape(tokens, bias);
    const Tensor& X = tp->val(tokens);
    const Tensor& H = tp->val(h_prev);
    const Tensor& Win = tp->val(w_in);
    const Tensor& Wrec = tp->val(w_rec);
    const Tensor& B = tp->val(bias);
    if (X.rank() != 2) throw ShapeError("elman_step: tokens must be rank-2");
    const int64_t dx = X.shape[1];
    const int64_t d = H.numel();
    if (t < 0 || t >= X.shape[0]) throw ContractError("elman_step: step out of range");
    if (Win.shape != std::vector<int64_t>{dx, d} || Wrec.shape != std::vector<int64_t>{d, d} ||
        B.numel() != d) {
        throw ShapeError("elman_step: parameter shapes inconsistent with inputs");
    }
    Tensor out({d});
    const double* xrow = X.data.data() + t * dx;
    for (int64_t j = 0; j < d; ++j) out.data[j] = B.data[j];
    for (int64_t i = 0; i < dx; ++i) {
        const double xi = xrow[i];
        if (xi == 0.0) continue;
        const double* wrow = Win.data.data() + i * d;
        for (int64_t j = 0; j < d; ++j) out.data[j] += xi * wrow[j];
    }
    for (int64_t i = 0; i < d; ++i) {
        const double hi = H.data[i];
        if (hi == 0.0) continue;
        const double* wrow = Wrec.data.data() + i * d;
        for (int64_t j = 0; j < d; ++j) out.data[j] += hi * wrow[j];
    }
    for (int64_t j = 0; j < d; ++j) out.data[j] = std::tanh(out.data[j]);

    Node node;
    node.op = Op::ElmanStep;
    node.in[0] = tokens.id;
    node.in[1] = h_prev.id;
    node.in[2] = w_in.id;
    node.in[3] = w_rec.id;
    node.in[4] = bias.id;
    node.nin = 5;
    node.a = t;
    return tp->emit(node, std::move(out));
}

EncodeResult recurrent_encode(Tape& tape, Value tokens, const RecurrentParams& p) {
    const Tensor& X = tape.val(tokens);
    if (X.rank() != 2 || X.shape[0] < 1) {
        throw ContractError("recurrent_encode: empty or non-matrix token sequence");
    }
    const int64_t T = X.shape[0];
    const int64_t d = p.w_in->value.shape[1];
    Value win = tape.param(*p.w_in);
    Value wrec = tape.param(*p.w_rec);
    Value bias = tape.param(*p.bias);
    Value h = tape.leaf(Tensor({d}));
    std::vector<Value> steps;
    steps.reserve(static_cast<size_t>(T));
    for (int64_t t = 0; t < T; ++t) {
        h = elman_step(tokens, t, h, win, wrec, bias);
        steps.push_back(h);
    }
    return EncodeResult{stack_rows(steps), h};
}

}  // namespace gma
