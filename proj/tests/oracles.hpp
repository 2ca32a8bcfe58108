#pragma once

// Independent reference implementations used as test oracles. Everything in
// this header stays deliberately naive (triple loops, dense simplex, direct
// sums) so it shares no code path with the library it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gma/metrics.hpp"
#include "gma/tape.hpp"
#include "gma/tensor.hpp"

namespace oracle {

// C = A * B by the definition, one multiply-add at a time.
inline gma::Tensor matmul_naive(const gma::Tensor& a, const gma::Tensor& b) {
    const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    gma::Tensor c({m, n});
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
            c.at(i, j) = acc;
        }
    }
    return c;
}

// Central finite differences against already-populated analytic gradients.
// Tolerances follow the project gates: relative 1e-4, absolute 1e-6 where the
// gradient magnitude is below 1e-2.
struct FdReport {
    bool ok = true;
    double max_rel = 0.0;
    std::string worst;
};

inline FdReport fd_check(std::vector<gma::Parameter*> params,
                         const std::function<double()>& loss_fn, double h = 1e-5,
                         double rel_tol = 1e-4, double abs_tol = 1e-6) {
    FdReport report;
    for (gma::Parameter* p : params) {
        for (size_t i = 0; i < p->value.data.size(); ++i) {
            const double saved = p->value.data[i];
            p->value.data[i] = saved + h;
            const double up = loss_fn();
            p->value.data[i] = saved - h;
            const double down = loss_fn();
            p->value.data[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double analytic = p->grad.data[i];
            const double denom = std::max(std::fabs(analytic), std::fabs(fd));
            const double abs_err = std::fabs(analytic - fd);
            const double rel = denom > 0 ? abs_err / denom : 0.0;
            const bool pass = denom < 1e-2 ? (abs_err <= abs_tol || rel < rel_tol)
                                           : (rel < rel_tol);
            if (!pass && rel >= report.max_rel) {
                report.ok = false;
                report.max_rel = rel;
                std::ostringstream os;
                os << p->name << "[" << i << "]: analytic " << analytic << " vs fd " << fd;
                report.worst = os.str();
            }
            report.max_rel = std::max(report.max_rel, pass ? 0.0 : rel);
        }
    }
    return report;
}

// Count sketch of the flattened outer product x (x) y under the combined
// (h, s) construction: h[i*m+j] = (hx[i] + hy[j]) mod D, s = sx[i] * sy[j].
inline std::vector<double> combined_outer_sketch(const std::vector<double>& x,
                                                 const std::vector<double>& y,
                                                 const std::vector<int64_t>& hx,
                                                 const std::vector<int8_t>& sx,
                                                 const std::vector<int64_t>& hy,
                                                 const std::vector<int8_t>& sy, int64_t d) {
    std::vector<double> out(static_cast<size_t>(d), 0.0);
    for (size_t i = 0; i < x.size(); ++i) {
        for (size_t j = 0; j < y.size(); ++j) {
            const int64_t bucket = (hx[i] + hy[j]) % d;
            out[static_cast<size_t>(bucket)] +=
                static_cast<double>(sx[i]) * static_cast<double>(sy[j]) * x[i] * y[j];
        }
    }
    return out;
}

// Rank of entry `idx` by pairwise comparison (mean-rank ties), O(n^2) overall.
inline double rank_of(const std::vector<double>& scores, int64_t idx) {
    double greater = 0, equal = 0;
    for (double s : scores) {
        if (s > scores[static_cast<size_t>(idx)]) greater += 1;
        else if (s == scores[static_cast<size_t>(idx)]) equal += 1;
    }
    return greater + (equal + 1) / 2;
}

// Retrieval metrics straight from the definitions.
inline gma::MetricVector retrieval_naive(const std::vector<gma::RankedRound>& rounds) {
    gma::MetricVector m;
    double nd = 0;
    for (const auto& r : rounds) {
        const double rank = rank_of(r.scores, r.gt_index);
        m.r_at_1 += rank <= 1;
        m.r_at_5 += rank <= 5;
        m.r_at_10 += rank <= 10;
        m.mrr += 1 / rank;
        m.mean_rank += rank;
        // selection-sort the candidates by score (stable) and accumulate DCG
        std::vector<int64_t> order(r.scores.size());
        std::iota(order.begin(), order.end(), 0);
        for (size_t a = 0; a + 1 < order.size(); ++a) {
            size_t best = a;
            for (size_t b = a + 1; b < order.size(); ++b) {
                if (r.scores[static_cast<size_t>(order[b])] >
                    r.scores[static_cast<size_t>(order[best])]) {
                    best = b;
                }
            }
            if (best != a) {
                const int64_t tmp = order[best];
                order.erase(order.begin() + static_cast<int64_t>(best));
                order.insert(order.begin() + static_cast<int64_t>(a), tmp);
            }
        }
        std::vector<double> ideal = r.relevance;
        std::sort(ideal.begin(), ideal.end(), std::greater<>());
        double dcg = 0, idcg = 0;
        for (size_t pos = 0; pos < order.size(); ++pos) {
            dcg += r.relevance[static_cast<size_t>(order[pos])] /
                   std::log2(static_cast<double>(pos) + 2.0);
            idcg += ideal[pos] / std::log2(static_cast<double>(pos) + 2.0);
        }
        nd += dcg / idcg;
    }
    const double c = static_cast<double>(rounds.size());
    m.r_at_1 /= c;
    m.r_at_5 /= c;
    m.r_at_10 /= c;
    m.mrr /= c;
    m.mean_rank /= c;
    m.ndcg = nd / c;
    return m;
}

// Spearman rho as rank-then-Pearson, ranks built by explicit counting.
inline double spearman_naive(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& x) {
        std::vector<double> r(x.size());
        for (size_t i = 0; i < x.size(); ++i) {
            double less = 0, equal = 0;
            for (double v : x) {
                if (v < x[i]) less += 1;
                else if (v == x[i]) equal += 1;
            }
            r[i] = less + (equal + 1) / 2;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        sxy += (ra[i] - ma) * (rb[i] - mb);
        sxx += (ra[i] - ma) * (ra[i] - ma);
        syy += (rb[i] - mb) * (rb[i] - mb);
    }
    return sxy / std::sqrt(sxx * syy);
}

// Two-sided Student-t tail probability by Simpson quadrature of the density.
inline double t_two_sided_p_quadrature(double t, double nu) {
    t = std::fabs(t);
    const double log_norm = std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2) -
                            0.5 * std::log(nu * std::acos(-1.0));
    auto pdf = [&](double x) {
        return std::exp(log_norm - (nu + 1) / 2 * std::log1p(x * x / nu));
    };
    // integrate pdf over [-t, t] and take the complement
    const int steps = 20000;
    const double a = -t, b = t, hstep = (b - a) / steps;
    double acc = pdf(a) + pdf(b);
    for (int i = 1; i < steps; ++i) acc += pdf(a + hstep * i) * (i % 2 ? 4.0 : 2.0);
    const double inside = acc * hstep / 3.0;
    return std::max(0.0, 1.0 - inside);
}

// Transportation LP by dense tableau simplex with Bland's rule: an
// independent vertex-walking route to the exact EMD.
double transport_lp_simplex(const std::vector<double>& supply, const std::vector<double>& demand,
                            const std::vector<std::vector<double>>& cost);

// EMD between two grids via the simplex oracle (normalizes internally).
inline double emd_naive(const gma::Tensor& a, const gma::Tensor& b) {
    const int64_t cols = a.shape[1];
    std::vector<double> supply, demand;
    std::vector<int64_t> sc, dc;
    double sa = 0, sb = 0;
    for (double v : a.data) sa += v;
    for (double v : b.data) sb += v;
    for (int64_t i = 0; i < a.numel(); ++i) {
        if (a.data[i] > 0) {
            supply.push_back(a.data[i] / sa);
            sc.push_back(i);
        }
        if (b.data[i] > 0) {
            demand.push_back(b.data[i] / sb);
            dc.push_back(i);
        }
    }
    std::vector<std::vector<double>> cost(supply.size(), std::vector<double>(demand.size()));
    for (size_t i = 0; i < supply.size(); ++i) {
        for (size_t j = 0; j < demand.size(); ++j) {
            const double dr = static_cast<double>(sc[i] / cols - dc[j] / cols);
            const double dcn = static_cast<double>(sc[i] % cols - dc[j] % cols);
            cost[i][j] = std::sqrt(dr * dr + dcn * dcn);
        }
    }
    return transport_lp_simplex(supply, demand, cost);
}

}  // namespace oracle
