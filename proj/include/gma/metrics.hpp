#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "gma/tensor.hpp"

namespace gma {

// One evaluated round: raw candidate scores, the ground-truth index, and
// graded relevance in [0, 1] (relevance[gt_index] > 0).
struct RankedRound {
    std::vector<double> scores;
    int64_t gt_index = 0;
    std::vector<double> relevance;
};

struct MetricVector {
    double r_at_1 = 0;
    double r_at_5 = 0;
    double r_at_10 = 0;
    double mrr = 0;
    double mean_rank = 0;
    double ndcg = 0;
};

// Rank of the ground truth uses the mean-rank tie convention:
// rank = #(score > score_gt) + (#(score == score_gt) + 1) / 2.
MetricVector retrieval_metrics(const std::vector<RankedRound>& rounds);

struct Correlation {
    double rho = 0;
    double p_value = 0;  // two-sided, Student-t approximation
};

// Spearman rank correlation of two same-shape maps (mean-rank ties). A
// constant input has undefined correlation and throws.
Correlation spearman_rc(const Tensor& a, const Tensor& b);

struct EmdResult {
    double distance = 0;
    bool exact = false;  // exact min-cost flow vs entropic approximation
};

// Earth mover's distance with Euclidean ground metric between two
// non-negative grids (normalized internally). Exact min-cost flow for
// grids up to 8x8, log-domain Sinkhorn (reg 1e-2, tol 1e-7) beyond that.
EmdResult emd_2d(const Tensor& a, const Tensor& b);

struct NemenyiResult {
    std::vector<double> avg_ranks;
    double critical_difference = 0;
    std::vector<std::pair<int, int>> significant;  // model index pairs, i < j
};

// ranks[model][dataset]; each dataset's column must be a (mean-tie) ranking
// of the k models. alpha is 0.05 or 0.10; the q table covers k <= 20.
NemenyiResult nemenyi_cd(const std::vector<std::vector<double>>& ranks, double alpha);

// Nemenyi critical value q_alpha(k); exposed for tests.
double nemenyi_q(int64_t k, double alpha);

// Regularized incomplete beta function I_x(a, b); exposed for tests.
double incomplete_beta(double a, double b, double x);

}  // namespace gma
