#include "gma/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gma {

namespace {

Tape& tape_of(Value v) {
    if (!v.valid()) throw ContractError("attention op: invalid value");
    return *v.tape;
}

}  // namespace

Value grid_cells(Value grid3d) {
    const Tensor& g = tape_of(grid3d).val(grid3d);
    if (g.rank() != 3) {
        throw ShapeError("grid_cells: expected [N x N x C], got " + shape_str(g.shape));
    }
    return reshape(grid3d, {g.shape[0] * g.shape[1], g.shape[2]});
}

Value attention_primitive(Value cells, Value query, const AttentionPrimitiveParams& p) {
    Tape& t = tape_of(cells);
    const Tensor& cv = t.val(cells);
    if (cv.rank() != 2) {
        throw ShapeError("attention_primitive: cells must be [M x C], got " + shape_str(cv.shape));
    }
    Value proj = matmul(cells, t.param(*p.w_feat));            // [M x H]
    Value tiled = matmul(query, t.param(*p.w_query));          // [H], broadcast over rows
    Value hidden = tanh(add(add(proj, tiled), t.param(*p.b_hidden)));
    Value logits = add(matmul(hidden, t.param(*p.w_score)), t.param(*p.b_score));  // [M]
    return softmax(logits, 0);
}

AttendResult gated_attention(Value cells, Value query, const GatedAttentionParams& p) {
    Tape& t = tape_of(cells);
    const Tensor& cv = t.val(cells);
    if (cv.rank() != 2) {
        throw ShapeError("gated_attention: cells must be [M x C], got " + shape_str(cv.shape));
    }
    Value proj = add(matmul(cells, t.param(*p.w_feat)), t.param(*p.b_feat));  // [M x H]
    Value gate = matmul(query, t.param(*p.w_query));                          // [H]
    Value joint = tanh(mul(proj, gate));
    Value normed = l2_normalize_rows(signed_sqrt(joint));
    Value hidden = tanh(add(matmul(normed, t.param(*p.w_hidden)), t.param(*p.b_hidden)));
    Value logits = matmul(hidden, t.param(*p.w_score));  // [M]
    Value map = softmax(logits, 0);
    return {map, matmul(map, cells)};
}

SanResult san_forward(Value cells, Value query, int64_t iterations,
                      const AttentionPrimitiveParams& p) {
    Tape& t = tape_of(cells);
    if (iterations < 1) throw ContractError("san_forward: need at least one iteration");
    const Tensor& cv = t.val(cells);
    const Tensor& qv = t.val(query);
    if (cv.rank() != 2 || cv.shape[1] != qv.numel()) {
        throw ShapeError("san_forward: cell channels must match query dim, got " +
                         shape_str(cv.shape) + " vs " + shape_str(qv.shape));
    }
    Value f = query;
    Value map{};
    for (int64_t j = 0; j < iterations; ++j) {
        map = attention_primitive(cells, f, p);
        f = add(matmul(map, cells), f);
    }
    return {f, map};
}

McbAttentionResult mcb_attention(Value cells, Value query, const McbAttentionParams& p) {
    Tape& t = tape_of(cells);
    AttendResult ar = gated_attention(cells, query, p.gate);
    Value f_out = mul(ar.attended, matmul(query, t.param(*p.w_out)));
    return {ar.map, ar.attended, f_out};
}

GiaResult gia_forward(Value cells, const Tensor& saliency, int64_t k, Value query,
                      Value history, const GiaParams& p) {
    Tape& t = tape_of(cells);
    const Tensor& cv = t.val(cells);
    if (cv.rank() != 2) {
        throw ShapeError("gia_forward: cells must be [M x C], got " + shape_str(cv.shape));
    }
    const int64_t m = cv.shape[0];
    if (k < 1 || k > m) {
        throw ContractError("gia_forward: granule count " + std::to_string(k) +
                            " out of range [1, " + std::to_string(m) + "]");
    }
    if (saliency.numel() != m) {
        throw ShapeError("gia_forward: saliency has " + std::to_string(saliency.numel()) +
                         " entries for " + std::to_string(m) + " cells");
    }
    require_finite(saliency, "gia_forward saliency");

    // top-k by saliency, ties in row-major order
    std::vector<int64_t> order(static_cast<size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        return saliency.data[a] > saliency.data[b];
    });
    order.resize(static_cast<size_t>(k));

    Value granules = gather_rows(cells, order);  // [K x C]
    AttendResult q_att = gated_attention(granules, query, p.q_path);
    AttendResult h_att = gated_attention(granules, history, p.h_path);
    const std::array<Value, 2> fused{h_att.attended, q_att.attended};
    Value weights = attention_primitive(granules, concat(fused), p.combine);  // [K]
    Value attended = matmul(weights, granules);
    Value full_map = embed_indices(weights, order, m);
    return {attended, full_map, granules, std::move(order)};
}

namespace {

// Eq-style per-word weights: softmax_k of w_score . tanh(g W_img + b_img +
// word_k W_word + b_word) + b_score.
Value word_weights(Value g_pooled, Value words, const WordAttentionParams& p) {
    Tape& t = tape_of(words);
    Value img_part = add(matmul(g_pooled, t.param(*p.w_img)), t.param(*p.b_img));   // [H]
    Value word_part = add(matmul(words, t.param(*p.w_word)), t.param(*p.b_word));  // [T x H]
    Value ctx = tanh(add(word_part, img_part));
    Value logits = add(matmul(ctx, t.param(*p.w_score)), t.param(*p.b_score));     // [T]
    return softmax(logits, 0);
}

}  // namespace

GtaResult gta_forward(Value g_pooled, Value q_tokens, Value h_tokens, const GtaParams& p) {
    Tape& t = tape_of(q_tokens);
    const Tensor& qv = t.val(q_tokens);
    const Tensor& hv = t.val(h_tokens);
    if (qv.rank() != 2 || qv.shape[0] < 1) {
        throw ContractError("gta_forward: empty question sequence");
    }
    if (hv.rank() != 2 || hv.shape[0] < 1) {
        throw ContractError("gta_forward: empty history sequence");
    }
    Value p_q = word_weights(g_pooled, q_tokens, p.q_words);
    Value f_q = matmul(p_q, q_tokens);  // [d]
    Value p_h = word_weights(g_pooled, h_tokens, p.h_words);
    Value f_h = matmul(p_h, h_tokens);  // [d]
    const std::array<Value, 2> fused{f_h, f_q};
    Value map = attention_primitive(q_tokens, concat(fused), p.combine);  // [T]
    return {matmul(map, q_tokens), map};
}

Fusion fusion_from_string(const std::string& s) {
    if (s == "concat") return Fusion::Concat;
    if (s == "mcb") return Fusion::Mcb;
    if (s == "mcb_att") return Fusion::McbAtt;
    if (s == "passthrough") return Fusion::Passthrough;
    throw ConfigError("unknown fusion variant: " + s);
}

const char* fusion_name(Fusion f) {
    switch (f) {
        case Fusion::Concat: return "concat";
        case Fusion::Mcb: return "mcb";
        case Fusion::McbAtt: return "mcb_att";
        case Fusion::Passthrough: return "passthrough";
    }
    return "?";
}

GmaResult gma_forward(Value a_img, Value a_txt, Value cells, Fusion fusion, const GmaParams& p) {
    Tape& t = tape_of(cells);
    const Tensor& cv = t.val(cells);
    if (cv.rank() != 2) {
        throw ShapeError("gma_forward: cells must be [M x C], got " + shape_str(cv.shape));
    }
    const int64_t m = cv.shape[0];

    if (fusion == Fusion::Passthrough) {
        Value uniform = t.leaf(Tensor::full({m}, 1.0 / static_cast<double>(m)));
        return {a_img, uniform};
    }

    Value joint{};
    if (fusion == Fusion::Concat) {
        const std::array<Value, 2> parts{a_img, a_txt};
        joint = concat(parts);
    } else {
        joint = mcb_pool(a_img, a_txt, *p.sketch_i, *p.sketch_t);
        if (p.mcb_signed_sqrt_l2) joint = l2_normalize(signed_sqrt(joint));
    }

    if (fusion == Fusion::McbAtt) {
        AttendResult ar = gated_attention(cells, joint, p.gate);
        return {ar.attended, ar.map};
    }

    // concat / mcb: linear score of (joint ; cell) per cell
    Value ctx_part = matmul(joint, t.param(*p.w_ctx));              // scalar
    Value cell_part = matmul(cells, t.param(*p.w_cell));            // [M]
    Value logits = add(add(cell_part, ctx_part), t.param(*p.b_score));
    Value map = softmax(logits, 0);
    return {matmul(map, cells), map};
}

AnswerScores score_answers(Value context, Value options_encoded, Value q_final,
                           const ScoreParams& p) {
    Tape& t = tape_of(context);
    const Tensor& ov = t.val(options_encoded);
    if (ov.rank() != 2 || ov.shape[0] < 1) {
        throw ContractError("score_answers: need at least one encoded option");
    }
    const std::array<Value, 2> parts{context, q_final};
    Value probe = matmul(concat(parts), t.param(*p.w_proj));  // [de]
    Value logits = matmul(options_encoded, probe);            // [O]
    return {logits, softmax(logits, 0)};
}

Value cross_entropy_loss(const AnswerScores& scores, int64_t gt_index) {
    return cross_entropy_with_logits(scores.logits, gt_index);
}

bool is_valid_attention_map(const Tensor& map, double tol) {
    double total = 0.0;
    for (double w : map.data) {
        if (!(w >= 0.0) || !std::isfinite(w)) return false;
        total += w;
    }
    return std::fabs(total - 1.0) <= tol;
}

}  // namespace gma
