#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gma/compact_bilinear.hpp"
#include "gma/rng.hpp"
#include "gma/tape.hpp"
#include "oracles.hpp"

using namespace gma;

namespace {

Tensor random_tensor(std::vector<int64_t> dims, SplitMix64& rng, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t(std::move(dims));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Wraps inputs as parameters so fd_check can perturb them like weights.
Parameter make_param(const std::string& name, Tensor t) {
    Parameter p(name, t.shape);
    p.value = std::move(t);
    return p;
}

}  // namespace

TEST_CASE("matmul identity and hand cases") {
    Tape t;
    Value id2 = t.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
    Value m = t.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    CHECK(t.val(matmul(id2, m)).data == std::vector<double>{1, 2, 3, 4});

    Value a = t.leaf(Tensor({1, 2}, {1, 2}));
    Value b = t.leaf(Tensor({2, 1}, {3, 4}));
    CHECK(t.val(matmul(a, b)).data == std::vector<double>{11});

    // vector promotions
    Value v = t.leaf(Tensor({2}, {1, 2}));
    Value w = t.leaf(Tensor({2}, {3, 4}));
    const Tensor& dot = t.val(matmul(v, w));
    CHECK(dot.rank() == 0);
    CHECK(dot.data[0] == 11.0);
}

TEST_CASE("matmul random matches triple-loop oracle") {
    SplitMix64 rng(11);
    Tape t;
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    const Tensor got = t.val(matmul(t.leaf(a), t.leaf(b)));
    const Tensor want = oracle::matmul_naive(a, b);
    for (int64_t i = 0; i < got.numel(); ++i) CHECK(got.data[i] == want.data[i]);
}

TEST_CASE("matmul dimension mismatch reports both shapes") {
    Tape t;
    Value a = t.leaf(Tensor({2, 3}));
    Value b = t.leaf(Tensor({2, 2}));
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[2x2]") != std::string::npos);
    }
}

TEST_CASE("elementwise hand cases") {
    Tape t;
    Value z = t.leaf(Tensor({3}));
    const Tensor& th = t.val(tanh(z));
    CHECK(th.data == std::vector<double>{0, 0, 0});

    Value a = t.leaf(Tensor({2}, {1, 2}));
    Value b = t.leaf(Tensor({2}, {3, 4}));
    CHECK(t.val(mul(a, b)).data == std::vector<double>{3, 8});
}

TEST_CASE("broadcast add matches loop oracle") {
    SplitMix64 rng(12);
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    Tape t;
    const Tensor got = t.val(add(t.leaf(a), t.leaf(b)));
    for (int64_t r = 0; r < 2; ++r) {
        for (int64_t c = 0; c < 3; ++c) {
            CHECK(got.at(r, c) == a.at(r, c) + b.data[c]);
        }
    }
    // non-broadcastable trailing dims
    Value bad = t.leaf(Tensor({2}));
    CHECK_THROWS_AS(add(t.leaf(a), bad), ShapeError);
}

TEST_CASE("softmax uniform, shift invariance, normalization") {
    Tape t;
    Value u = t.leaf(Tensor({3}, {0.7, 0.7, 0.7}));
    for (double v : t.val(softmax(u, 0)).data) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

    Value big = t.leaf(Tensor({2}, {1000.0, 1000.0 + std::log(2.0)}));
    const Tensor& sm = t.val(softmax(big, 0));
    CHECK(sm.data[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(sm.data[1] == doctest::Approx(2.0 / 3).epsilon(1e-12));

    SplitMix64 rng(13);
    Value logits = t.leaf(random_tensor({14, 14}, rng, -5, 5));
    const Tensor& soft = t.val(softmax(logits, 1));
    for (int64_t r = 0; r < 14; ++r) {
        double s = 0;
        for (int64_t c = 0; c < 14; ++c) {
            CHECK(soft.at(r, c) >= 0.0);
            s += soft.at(r, c);
        }
        CHECK(std::fabs(s - 1.0) <= 1e-12);
    }
    CHECK_THROWS_AS(softmax(logits, 2), ContractError);
}

TEST_CASE("signed_sqrt values and gradient at 1") {
    Tape t;
    Value x = t.leaf(Tensor({3}, {0.0, -4.0, 9.0}));
    const Tensor& y = t.val(signed_sqrt(x));
    CHECK(y.data[0] == 0.0);
    CHECK(y.data[1] == -2.0);
    CHECK(y.data[2] == 3.0);

    Parameter p = make_param("x", Tensor({1}, {1.0}));
    auto loss = [&] {
        Tape tp;
        return tp.val(sum(signed_sqrt(tp.param(p)))).data[0];
    };
    p.zero_grad();
    {
        Tape tp;
        tp.backward(sum(signed_sqrt(tp.param(p))));
    }
    const double h = 1e-6;
    p.value.data[0] = 1.0 + h;
    const double up = loss();
    p.value.data[0] = 1.0 - h;
    const double down = loss();
    p.value.data[0] = 1.0;
    CHECK(std::fabs(p.grad.data[0] - (up - down) / (2 * h)) < 1e-6);
    CHECK(p.grad.data[0] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("l2_normalize hand cases and unit norm") {
    Tape t;
    Value v = t.leaf(Tensor({2}, {3, 4}));
    const Tensor& n = t.val(l2_normalize(v));
    CHECK(n.data[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(n.data[1] == doctest::Approx(0.8).epsilon(1e-12));

    Value z = t.leaf(Tensor({4}));
    for (double x : t.val(l2_normalize(z)).data) CHECK(x == 0.0);

    SplitMix64 rng(14);
    Value r = t.leaf(random_tensor({17}, rng, -3, 3));
    double ss = 0;
    for (double x : t.val(l2_normalize(r)).data) ss += x * x;
    CHECK(std::fabs(std::sqrt(ss) - 1.0) <= 1e-9);
}

TEST_CASE("recurrent encoder: zero weights, order sensitivity, gradient") {
    const int64_t din = 3, d = 4;
    Parameter w_in("enc.w_in", {din, d});
    Parameter w_rec("enc.w_rec", {d, d});
    Parameter bias("enc.bias", {d});
    SplitMix64 rng(15);
    for (double& v : bias.value.data) v = rng.uniform(-1, 1);
    RecurrentParams enc{&w_in, &w_rec, &bias};

    {
        Tape t;
        Value tokens = t.leaf(random_tensor({1, din}, rng));
        EncodeResult r = recurrent_encode(t, tokens, enc);
        for (int64_t j = 0; j < d; ++j) {
            CHECK(t.val(r.final).data[j] == doctest::Approx(std::tanh(bias.value.data[j])));
        }
    }

    for (double& v : w_in.value.data) v = rng.uniform(-1, 1);
    for (double& v : w_rec.value.data) v = rng.uniform(-1, 1);
    Tensor tokens = random_tensor({3, din}, rng);
    Tensor permuted({3, din});
    for (int64_t i = 0; i < 3; ++i) {
        for (int64_t j = 0; j < din; ++j) permuted.at(i, j) = tokens.at(2 - i, j);
    }
    {
        Tape t;
        EncodeResult a = recurrent_encode(t, t.leaf(tokens), enc);
        EncodeResult b = recurrent_encode(t, t.leaf(permuted), enc);
        CHECK(max_abs_diff(t.val(a.final), t.val(b.final)) > 1e-6);
        CHECK(t.val(a.per_step).shape == std::vector<int64_t>{3, d});
    }
    {
        Tape t;
        CHECK_THROWS_AS(recurrent_encode(t, t.leaf(Tensor({din})), enc), ContractError);
    }

    w_in.zero_grad();
    w_rec.zero_grad();
    bias.zero_grad();
    {
        Tape t;
        EncodeResult r = recurrent_encode(t, t.leaf(tokens), enc);
        t.backward(sum(r.final));
    }
    auto report = oracle::fd_check({&w_rec, &w_in, &bias}, [&] {
        Tape t;
        return t.val(sum(recurrent_encode(t, t.leaf(tokens), enc).final)).data[0];
    });
    CHECK_MESSAGE(report.ok, report.worst);
}

TEST_CASE("backward: sum and quadratic closed forms") {
    Parameter w = make_param("w", Tensor({2, 3}, {1, -2, 0.5, 3, 4, -1}));
    w.zero_grad();
    {
        Tape t;
        t.backward(sum(t.param(w)));
    }
    for (double g : w.grad.data) CHECK(g == 1.0);

    // loss = ||W x||^2, grad = 2 (W x) x^T
    Tensor x({3}, {0.3, -0.7, 1.1});
    w.zero_grad();
    {
        Tape t;
        Value y = matmul(t.param(w), t.leaf(x));
        t.backward(sum(mul(y, y)));
    }
    std::vector<double> wx(2, 0.0);
    for (int64_t i = 0; i < 2; ++i) {
        for (int64_t j = 0; j < 3; ++j) wx[i] += w.value.at(i, j) * x.data[j];
    }
    for (int64_t i = 0; i < 2; ++i) {
        for (int64_t j = 0; j < 3; ++j) {
            CHECK(w.grad.at(i, j) == doctest::Approx(2 * wx[i] * x.data[j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("backward rejects non-scalar loss") {
    Tape t;
    Value v = t.leaf(Tensor({3}, {1, 2, 3}));
    CHECK_THROWS_AS(t.backward(v), ContractError);
}

TEST_CASE("two backward passes yield bit-identical tape gradients") {
    SplitMix64 rng(16);
    Parameter w = make_param("w", random_tensor({4, 4}, rng));
    Tape t;
    Value wp = t.param(w);
    Value y = tanh(matmul(wp, t.leaf(random_tensor({4}, rng))));
    Value loss = sum(mul(y, y));
    w.zero_grad();
    t.backward(loss);
    const Tensor g1 = t.grad(wp);
    t.backward(loss);
    const Tensor g2 = t.grad(wp);
    CHECK(bit_equal(g1, g2));
    // and parameter grads accumulate across passes
    for (int64_t i = 0; i < w.grad.numel(); ++i) {
        CHECK(w.grad.data[i] == 2.0 * g1.data[i]);
    }
}

TEST_CASE("every differentiable op passes a finite-difference check") {
    SplitMix64 rng(17);
    // loss shape: weighted sum with fixed random weights so gradients are
    // non-uniform across entries
    auto weighted_sum = [&](Tape& t, Value v, uint64_t seed) {
        SplitMix64 r(seed);
        return sum(mul(v, t.leaf(random_tensor(t.val(v).shape, r))));
    };

    struct Case {
        const char* name;
        std::vector<std::vector<int64_t>> shapes;
        std::function<Value(Tape&, std::vector<Value>&)> build;
    };
    const SketchSpec sketch = SketchSpec::make(6, 8, 99);
    const std::vector<int64_t> embed_idx{4, 1, 6};
    std::vector<Case> cases{
        {"matmul", {{3, 4}, {4, 2}}, [](Tape&, std::vector<Value>& v) { return matmul(v[0], v[1]); }},
        {"matmul_vec_left", {{3}, {3, 2}}, [](Tape&, std::vector<Value>& v) { return matmul(v[0], v[1]); }},
        {"matmul_vec_right", {{2, 3}, {3}}, [](Tape&, std::vector<Value>& v) { return matmul(v[0], v[1]); }},
        {"add", {{2, 3}, {2, 3}}, [](Tape&, std::vector<Value>& v) { return add(v[0], v[1]); }},
        {"add_broadcast", {{2, 3}, {3}}, [](Tape&, std::vector<Value>& v) { return add(v[0], v[1]); }},
        {"add_scalar", {{2, 3}, {}}, [](Tape&, std::vector<Value>& v) { return add(v[0], v[1]); }},
        {"sub_broadcast", {{4}, {2, 4}}, [](Tape&, std::vector<Value>& v) { return sub(v[0], v[1]); }},
        {"mul", {{5}, {5}}, [](Tape&, std::vector<Value>& v) { return mul(v[0], v[1]); }},
        {"mul_broadcast", {{3, 2}, {2}}, [](Tape&, std::vector<Value>& v) { return mul(v[0], v[1]); }},
        {"tanh", {{6}}, [](Tape&, std::vector<Value>& v) { return tanh(v[0]); }},
        {"sigmoid", {{6}}, [](Tape&, std::vector<Value>& v) { return sigmoid(v[0]); }},
        {"softmax0", {{5}}, [](Tape&, std::vector<Value>& v) { return softmax(v[0], 0); }},
        {"softmax_axis1", {{3, 4}}, [](Tape&, std::vector<Value>& v) { return softmax(v[0], 1); }},
        {"signed_sqrt", {{6}}, [](Tape&, std::vector<Value>& v) { return signed_sqrt(v[0]); }},
        {"l2_normalize", {{6}}, [](Tape&, std::vector<Value>& v) { return l2_normalize(v[0]); }},
        {"l2_normalize_rows", {{3, 4}},
         [](Tape&, std::vector<Value>& v) { return l2_normalize_rows(v[0]); }},
        {"reshape", {{2, 6}}, [](Tape&, std::vector<Value>& v) { return reshape(v[0], {3, 4}); }},
        {"select_row", {{4, 3}}, [](Tape&, std::vector<Value>& v) { return select_row(v[0], 2); }},
        {"select_index", {{7}}, [](Tape&, std::vector<Value>& v) { return select_index(v[0], 3); }},
        {"gather_rows", {{8, 3}},
         [](Tape&, std::vector<Value>& v) {
             const std::vector<int64_t> ids{2, 2, 5, 0};
             return gather_rows(v[0], ids);
         }},
        {"stack_concat", {{3}, {3}},
         [](Tape&, std::vector<Value>& v) {
             const std::array<Value, 2> rows{v[0], v[1]};
             Value stacked = stack_rows(rows);
             const std::array<Value, 2> parts{select_row(stacked, 0), v[1]};
             return concat(parts);
         }},
        {"sum_scale", {{5}},
         [](Tape&, std::vector<Value>& v) { return scale(sum(v[0]), -2.5); }},
        {"embed_indices", {{3}},
         [&](Tape&, std::vector<Value>& v) { return embed_indices(v[0], embed_idx, 8); }},
        {"cross_entropy", {{6}},
         [](Tape&, std::vector<Value>& v) { return cross_entropy_with_logits(v[0], 2); }},
        {"count_sketch", {{6}},
         [&](Tape&, std::vector<Value>& v) { return count_sketch(v[0], sketch); }},
        {"circular_convolve", {{7}, {7}},
         [](Tape&, std::vector<Value>& v) { return circular_convolve(v[0], v[1]); }},
    };

    for (auto& c : cases) {
        CAPTURE(c.name);
        std::vector<Parameter> params;
        params.reserve(c.shapes.size());
        for (size_t i = 0; i < c.shapes.size(); ++i) {
            params.push_back(
                make_param(std::string(c.name) + ".in" + std::to_string(i),
                           random_tensor(c.shapes[i], rng, -1.5, 1.5)));
        }
        const uint64_t wseed = rng.next_u64();
        auto loss_of = [&]() -> double {
            Tape t;
            std::vector<Value> vals;
            vals.reserve(params.size());
            for (auto& p : params) vals.push_back(t.param(p));
            return t.val(weighted_sum(t, c.build(t, vals), wseed)).data[0];
        };
        for (auto& p : params) p.zero_grad();
        {
            Tape t;
            std::vector<Value> vals;
            for (auto& p : params) vals.push_back(t.param(p));
            t.backward(weighted_sum(t, c.build(t, vals), wseed));
        }
        std::vector<Parameter*> ptrs;
        for (auto& p : params) ptrs.push_back(&p);
        auto report = oracle::fd_check(ptrs, loss_of);
        CHECK_MESSAGE(report.ok, c.name, ": ", report.worst);
    }
}

TEST_CASE("fuzz: random op chains stay finite") {
    SplitMix64 rng(18);
    int invocations = 0;
    while (invocations < 1000) {
        Tape t;
        const int64_t rows = 1 + static_cast<int64_t>(rng.next_below(4));
        const int64_t cols = 1 + static_cast<int64_t>(rng.next_below(5));
        Value a = t.leaf(random_tensor({rows, cols}, rng, -100, 100));
        Value b = t.leaf(random_tensor({rows, cols}, rng, -100, 100));
        Value out{};
        switch (rng.next_below(8)) {
            case 0: out = add(a, b); break;
            case 1: out = mul(a, b); break;
            case 2: out = tanh(a); break;
            case 3: out = sigmoid(a); break;
            case 4: out = signed_sqrt(a); break;
            case 5: out = l2_normalize_rows(a); break;
            case 6: out = softmax(a, static_cast<int64_t>(rng.next_below(2))); break;
            default: out = matmul(a, reshape(b, {cols, rows})); break;
        }
        ++invocations;
        const Tensor& o = t.val(out);  // emit() already rejects non-finite
        CHECK(o.all_finite());
        if (t.val(out).numel() > 0) {
            t.backward(sum(out));
            CHECK(t.grad(a).all_finite());
        }
        if (rng.next_below(4) == 0) {
            // softmax invariants on this chain's output when applicable
            const Tensor sm = t.val(softmax(a, 1));
            for (int64_t r = 0; r < rows; ++r) {
                double s = 0;
                for (int64_t c2 = 0; c2 < cols; ++c2) s += sm.at(r, c2);
                CHECK(std::fabs(s - 1.0) <= 1e-12);
            }
        }
    }
}
