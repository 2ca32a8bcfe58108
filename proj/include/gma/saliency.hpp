#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "gma/tensor.hpp"

namespace gma {

// Randomized occlusion masks: low-res Bernoulli(keep_prob) grids, bilinearly
// upsampled with a random sub-cell shift. Values lie in [0, 1] and the set is
// regenerated bit-identically from the seed.
struct MaskSet {
    std::vector<Tensor> masks;  // each [N x N]
    double keep_prob = 0.5;
    int64_t lowres = 0;
    uint64_t seed = 0;
};

MaskSet sample_masks(int64_t n, double keep_prob, int64_t lowres, int64_t count, uint64_t seed);

// Black-box scorer over a masked image grid [N x N x C]; returns the model's
// ground-truth-class confidence.
using GridScorer = std::function<double(const Tensor& masked_grid)>;

// Score-weighted mask average S = 1/(E[M] * count) * sum_i f(X (.) M_i) M_i,
// with E[M] taken as the analytic keep probability. Masks are consumed in
// fixed order so the reduction is deterministic.
Tensor rise_saliency(const Tensor& image, const GridScorer& scorer, const MaskSet& masks);

// Scorer over a question with two word vectors zeroed; returns the
// ground-truth probability and the model's attention map under that masking.
using TokenScorer = std::function<std::pair<double, Tensor>(const Tensor& masked_tokens)>;

struct MaskedQuestionResult {
    int64_t first = 0;   // masked pair, first < second
    int64_t second = 0;
    double gt_prob = 0;
    Tensor attention_map;
};

// Evaluates all C(T,2) pair maskings and returns the pair that maximizes the
// ground-truth probability; ties keep the lexicographically smallest pair.
MaskedQuestionResult pairwise_word_mask_search(const Tensor& q_tokens, const TokenScorer& scorer);

}  // namespace gma
