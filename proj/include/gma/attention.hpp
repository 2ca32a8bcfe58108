#pragma once

#include <vector>

#include "gma/compact_bilinear.hpp"
#include "gma/tape.hpp"

namespace gma {

// All attention ops work on a flattened feature set: `cells` is [M x C]
// (M = N*N grid cells, K granules, or T words) and every returned map is a
// softmax over the M rows. Callers reshape N x N x C grids via grid_cells().

Value grid_cells(Value grid3d);  // [N x N x C] -> [N*N x C]

// Additive-compatibility attention: softmax over rows of
//   w_score . tanh(cells W_feat + query W_query + b_hidden) + b_score.
struct AttentionPrimitiveParams {
    Parameter* w_feat = nullptr;    // [C x H], 1x1 channel-mixing projection
    Parameter* w_query = nullptr;   // [dq x H]
    Parameter* b_hidden = nullptr;  // [H]
    Parameter* w_score = nullptr;   // [H]
    Parameter* b_score = nullptr;   // scalar
};

Value attention_primitive(Value cells, Value query, const AttentionPrimitiveParams& p);

// Gated bilinear attention block: per-row joint feature
// tanh((cells W_feat + b_feat) (.) query W_query), signed-sqrt + row-wise L2,
// two-layer scorer, softmax; also returns the attended feature sum.
struct GatedAttentionParams {
    Parameter* w_feat = nullptr;    // [C x H]
    Parameter* b_feat = nullptr;    // [H]
    Parameter* w_query = nullptr;   // [dq x H]
    Parameter* w_hidden = nullptr;  // [H x Ha]
    Parameter* b_hidden = nullptr;  // [Ha]
    Parameter* w_score = nullptr;   // [Ha]
};

struct AttendResult {
    Value map;       // [M], non-negative, sums to 1
    Value attended;  // [C], convex combination of rows
};

AttendResult gated_attention(Value cells, Value query, const GatedAttentionParams& p);

// Stacked attention: J residual refinements f_j = sum_m a_m cells_m + f_{j-1}.
// Cell channel count must equal the query dimension.
struct SanResult {
    Value context;  // [d]
    Value map;      // [M], the last iteration's map
};

SanResult san_forward(Value cells, Value query, int64_t iterations,
                      const AttentionPrimitiveParams& p);

// Bilinear-gated image attention with an output gate f_out = f_att (.) (q W_out).
struct McbAttentionParams {
    GatedAttentionParams gate;
    Parameter* w_out = nullptr;  // [d x C]
};

struct McbAttentionResult {
    Value map;    // [M]
    Value f_att;  // [C]
    Value f_out;  // [C]
};

McbAttentionResult mcb_attention(Value cells, Value query, const McbAttentionParams& p);

// Granular image attention: keep the K most salient cells (ties broken in
// row-major order), attend them once with the question and once with the
// history, then fuse the two attended summaries into the query of a final
// granule-level attention pass.
struct GiaParams {
    GatedAttentionParams q_path;
    GatedAttentionParams h_path;           // may alias q_path's parameters
    AttentionPrimitiveParams combine;      // query dim = 2C
};

struct GiaResult {
    Value attended;                 // A_i, [C]
    Value map;                      // granule weights placed in the full [M] grid
    Value granule_features;         // the selected [K x C] rows
    std::vector<int64_t> granules;  // selected cell indices, saliency-descending
};

GiaResult gia_forward(Value cells, const Tensor& saliency, int64_t k, Value query,
                      Value history, const GiaParams& p);

// Granular text attention: per-word context tanh(g W_img + b_img + w W_word +
// b_word) scored to word weights, once for the question and once for the
// history tokens; fused like GIA over the question words.
struct WordAttentionParams {
    Parameter* w_img = nullptr;    // [cg x H]
    Parameter* b_img = nullptr;    // [H]
    Parameter* w_word = nullptr;   // [d x H]
    Parameter* b_word = nullptr;   // [H]
    Parameter* w_score = nullptr;  // [H]
    Parameter* b_score = nullptr;  // scalar
};

struct GtaParams {
    WordAttentionParams q_words;
    WordAttentionParams h_words;       // may alias q_words' parameters
    AttentionPrimitiveParams combine;  // query dim = 2d
};

struct GtaResult {
    Value attended;  // A_t, [d]
    Value map;       // [T] over question words
};

GtaResult gta_forward(Value g_pooled, Value q_tokens, Value h_tokens, const GtaParams& p);

// Multimodal fusion + final cell attention.
enum class Fusion { Concat, Mcb, McbAtt, Passthrough };

Fusion fusion_from_string(const std::string& s);
const char* fusion_name(Fusion f);

struct GmaParams {
    // concat / mcb scoring: logit_m = cells_m . w_cell + C_A . w_ctx + b_score
    Parameter* w_ctx = nullptr;   // [dim(C_A)]
    Parameter* w_cell = nullptr;  // [C]
    Parameter* b_score = nullptr; // scalar
    // mcb_att scoring
    GatedAttentionParams gate;    // query dim = sketch dim
    // sketches for the mcb variants
    const SketchSpec* sketch_i = nullptr;
    const SketchSpec* sketch_t = nullptr;
    bool mcb_signed_sqrt_l2 = true;
};

struct GmaResult {
    Value attended;  // A, [C]
    Value map;       // [M]
};

GmaResult gma_forward(Value a_img, Value a_txt, Value cells, Fusion fusion, const GmaParams& p);

// Candidate scoring: logit_j = (concat(context, q_final) W_proj) . option_j.
struct ScoreParams {
    Parameter* w_proj = nullptr;  // [(ca + d) x de]
};

struct AnswerScores {
    Value logits;  // [O]
    Value probs;   // [O], softmax of logits
};

AnswerScores score_answers(Value context, Value options_encoded, Value q_final,
                           const ScoreParams& p);

Value cross_entropy_loss(const AnswerScores& scores, int64_t gt_index);

// Test/report helper: asserts non-negativity and unit sum.
bool is_valid_attention_map(const Tensor& map, double tol = 1e-9);

}  // namespace gma
