#include "gma/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

namespace gma {

// --- retrieval ---------------------------------------------------------------

MetricVector retrieval_metrics(const std::vector<RankedRound>& rounds) {
    if (rounds.empty()) throw ContractError("retrieval_metrics: no rounds");
    MetricVector m;
    double ndcg_total = 0.0;
    for (const RankedRound& r : rounds) {
        const int64_t n = static_cast<int64_t>(r.scores.size());
        if (n < 1) throw ContractError("retrieval_metrics: round with no candidates");
        if (r.gt_index < 0 || r.gt_index >= n) {
            throw ContractError("retrieval_metrics: gt_index out of range");
        }
        if (static_cast<int64_t>(r.relevance.size()) != n) {
            throw ContractError("retrieval_metrics: relevance size mismatch");
        }
        const double gt = r.scores[static_cast<size_t>(r.gt_index)];
        int64_t greater = 0, equal = 0;
        for (double s : r.scores) {
            if (s > gt) ++greater;
            else if (s == gt) ++equal;
        }
        const double rank = static_cast<double>(greater) + (static_cast<double>(equal) + 1.0) / 2.0;
        m.r_at_1 += rank <= 1.0 ? 1.0 : 0.0;
        m.r_at_5 += rank <= 5.0 ? 1.0 : 0.0;
        m.r_at_10 += rank <= 10.0 ? 1.0 : 0.0;
        m.mrr += 1.0 / rank;
        m.mean_rank += rank;

        // NDCG over the score-sorted list, stable on ties
        std::vector<int64_t> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int64_t a, int64_t b) { return r.scores[a] > r.scores[b]; });
        std::vector<double> ideal = r.relevance;
        std::sort(ideal.begin(), ideal.end(), std::greater<>());
        double dcg = 0.0, idcg = 0.0;
        for (int64_t pos = 0; pos < n; ++pos) {
            const double disc = std::log2(static_cast<double>(pos) + 2.0);
            dcg += r.relevance[static_cast<size_t>(order[pos])] / disc;
            idcg += ideal[static_cast<size_t>(pos)] / disc;
        }
        if (idcg <= 0.0) throw ContractError("retrieval_metrics: all-zero relevance");
        ndcg_total += dcg / idcg;
    }
    const double cnt = static_cast<double>(rounds.size());
    m.r_at_1 /= cnt;
    m.r_at_5 /= cnt;
    m.r_at_10 /= cnt;
    m.mrr /= cnt;
    m.mean_rank /= cnt;
    m.ndcg = ndcg_total / cnt;
    return m;
}

// --- Spearman ----------------------------------------------------------------

namespace {

std::vector<double> mean_ranks(const std::vector<double>& x) {
    const size_t n = x.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double mean = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = mean;
        i = j + 1;
    }
    return ranks;
}

double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-14;
    constexpr double kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double bt =
        std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                 b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

Correlation spearman_rc(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) {
        throw ShapeError("spearman_rc: shapes differ: " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    }
    const int64_t n = a.numel();
    if (n < 3) throw ContractError("spearman_rc: need at least 3 cells");
    const auto ra = mean_ranks(a.data);
    const auto rb = mean_ranks(b.data);

    const double mean = (static_cast<double>(n) + 1.0) / 2.0;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double dx = ra[static_cast<size_t>(i)] - mean;
        const double dy = rb[static_cast<size_t>(i)] - mean;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        throw ContractError("spearman_rc: constant map has undefined rank correlation");
    }
    double rho = sxy / std::sqrt(sxx * syy);
    rho = std::clamp(rho, -1.0, 1.0);

    const double nu = static_cast<double>(n - 2);
    double p;
    if (std::fabs(rho) >= 1.0) {
        p = 0.0;
    } else {
        const double t2 = rho * rho * nu / (1.0 - rho * rho);
        p = incomplete_beta(nu / 2.0, 0.5, nu / (nu + t2));
    }
    return {rho, std::clamp(p, 0.0, 1.0)};
}

// --- EMD ----------------------------------------------------------------------

namespace {

struct GridMass {
    std::vector<int64_t> cells;   // flat indices with positive mass
    std::vector<double> mass;     // normalized to sum 1
};

GridMass normalized_support(const Tensor& t, const char* side) {
    if (t.rank() != 2) {
        throw ShapeError(std::string("emd_2d: expected rank-2 grid for ") + side + ", got " +
                         shape_str(t.shape));
    }
    double total = 0.0;
    for (double v : t.data) {
        if (v < 0.0 || !std::isfinite(v)) {
            throw ContractError(std::string("emd_2d: negative or non-finite mass in ") + side);
        }
        total += v;
    }
    if (total <= 0.0) throw ContractError(std::string("emd_2d: zero-sum input on ") + side);
    GridMass g;
    for (int64_t i = 0; i < t.numel(); ++i) {
        if (t.data[i] > 0.0) {
            g.cells.push_back(i);
            g.mass.push_back(t.data[i] / total);
        }
    }
    return g;
}

double cell_distance(int64_t a, int64_t b, int64_t cols) {
    const double dr = static_cast<double>(a / cols - b / cols);
    const double dc = static_cast<double>(a % cols - b % cols);
    return std::sqrt(dr * dr + dc * dc);
}

// Exact transportation solved as min-cost flow with successive shortest
// paths over integer-scaled masses (scale 2^40 keeps rounding error below
// 1e-10 in the optimal value).
double emd_exact(const GridMass& src, const GridMass& dst, int64_t cols) {
    constexpr double kScale = 1099511627776.0;  // 2^40
    const int64_t ns = static_cast<int64_t>(src.cells.size());
    const int64_t nd = static_cast<int64_t>(dst.cells.size());

    auto to_units = [](const std::vector<double>& mass) {
        std::vector<int64_t> u(mass.size());
        int64_t total = 0;
        for (size_t i = 0; i < mass.size(); ++i) {
            u[i] = static_cast<int64_t>(std::llround(mass[i] * kScale));
            total += u[i];
        }
        // rebalance rounding drift onto the largest entry
        const int64_t target = static_cast<int64_t>(kScale);
        const size_t big = static_cast<size_t>(
            std::max_element(mass.begin(), mass.end()) - mass.begin());
        u[big] += target - total;
        return u;
    };
    std::vector<int64_t> supply = to_units(src.mass);
    std::vector<int64_t> demand = to_units(dst.mass);

    std::vector<std::vector<double>> cost(static_cast<size_t>(ns),
                                          std::vector<double>(static_cast<size_t>(nd)));
    std::vector<std::vector<int64_t>> flow(static_cast<size_t>(ns),
                                           std::vector<int64_t>(static_cast<size_t>(nd), 0));
    for (int64_t i = 0; i < ns; ++i) {
        for (int64_t j = 0; j < nd; ++j) {
            cost[i][j] = cell_distance(src.cells[i], dst.cells[j], cols);
        }
    }

    // node ids: sources [0, ns), sinks [ns, ns+nd). Forward arcs i->j have
    // infinite capacity; residual arcs j->i carry the current flow.
    const int64_t nodes = ns + nd;
    std::vector<double> potential(static_cast<size_t>(nodes), 0.0);
    std::vector<int64_t> remaining_supply = supply;
    std::vector<int64_t> remaining_demand = demand;
    int64_t outstanding = static_cast<int64_t>(kScale);

    const double inf = std::numeric_limits<double>::infinity();
    int64_t guard = 0;
    while (outstanding > 0) {
        if (++guard > 1000000) throw NumericError("emd_2d: flow augmentation did not terminate");
        // Dijkstra from all surplus sources over reduced costs
        std::vector<double> dist(static_cast<size_t>(nodes), inf);
        std::vector<int64_t> prev(static_cast<size_t>(nodes), -1);
        using Item = std::pair<double, int64_t>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
        for (int64_t i = 0; i < ns; ++i) {
            if (remaining_supply[i] > 0) {
                dist[i] = 0.0;
                pq.emplace(0.0, i);
            }
        }
        while (!pq.empty()) {
            auto [d, u] = pq.top();
            pq.pop();
            if (d > dist[u]) continue;
            if (u < ns) {
                for (int64_t j = 0; j < nd; ++j) {
                    const double rc = cost[u][j] + potential[u] - potential[ns + j];
                    const double cand = d + std::max(rc, 0.0);
                    if (cand < dist[ns + j]) {
                        dist[ns + j] = cand;
                        prev[ns + j] = u;
                        pq.emplace(cand, ns + j);
                    }
                }
            } else {
                const int64_t j = u - ns;
                for (int64_t i = 0; i < ns; ++i) {
                    if (flow[i][j] <= 0) continue;
                    const double rc = -cost[i][j] + potential[u] - potential[i];
                    const double cand = d + std::max(rc, 0.0);
                    if (cand < dist[i]) {
                        dist[i] = cand;
                        prev[i] = u;
                        pq.emplace(cand, i);
                    }
                }
            }
        }
        // closest sink with unmet demand
        int64_t sink = -1;
        for (int64_t j = 0; j < nd; ++j) {
            if (remaining_demand[j] > 0 && dist[ns + j] < inf &&
                (sink < 0 || dist[ns + j] < dist[ns + sink])) {
                sink = j;
            }
        }
        if (sink < 0) throw NumericError("emd_2d: augmenting path search failed");
        const double dcap = dist[ns + sink];
        for (int64_t v = 0; v < nodes; ++v) {
            if (dist[v] < inf) potential[v] += std::min(dist[v], dcap);
        }
        // trace back to the seeding source; residual arcs bound the bottleneck
        int64_t push = std::min(outstanding, remaining_demand[sink]);
        int64_t root = -1;
        for (int64_t v = ns + sink; v >= 0; v = prev[v]) {
            if (prev[v] < 0) {
                root = v;
                break;
            }
            if (v < ns) push = std::min(push, flow[v][prev[v] - ns]);
        }
        push = std::min(push, remaining_supply[root]);
        if (push <= 0) throw NumericError("emd_2d: degenerate augmentation");
        for (int64_t v = ns + sink; prev[v] >= 0; v = prev[v]) {
            const int64_t u = prev[v];
            if (v >= ns) {
                flow[u][v - ns] += push;  // forward arc u(source) -> v(sink)
            } else {
                flow[v][u - ns] -= push;  // residual arc u(sink) -> v(source)
            }
        }
        remaining_supply[root] -= push;
        remaining_demand[sink] -= push;
        outstanding -= push;
    }

    double total = 0.0;
    for (int64_t i = 0; i < ns; ++i) {
        for (int64_t j = 0; j < nd; ++j) {
            if (flow[i][j] > 0) total += (static_cast<double>(flow[i][j]) / kScale) * cost[i][j];
        }
    }
    return total;
}

double logsumexp(const std::vector<double>& xs) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : xs) mx = std::max(mx, x);
    double s = 0.0;
    for (double x : xs) s += std::exp(x - mx);
    return mx + std::log(s);
}

// Log-domain Sinkhorn with entropic regularization.
double emd_sinkhorn(const GridMass& src, const GridMass& dst, int64_t cols) {
    constexpr double kReg = 1e-2;
    constexpr double kTol = 1e-7;
    constexpr int kMaxIter = 200000;
    const size_t ns = src.cells.size();
    const size_t nd = dst.cells.size();

    std::vector<std::vector<double>> cost(ns, std::vector<double>(nd));
    for (size_t i = 0; i < ns; ++i) {
        for (size_t j = 0; j < nd; ++j) {
            cost[i][j] = cell_distance(src.cells[i], dst.cells[j], cols);
        }
    }
    std::vector<double> f(ns, 0.0), g(nd, 0.0), buf;
    std::vector<double> log_a(ns), log_b(nd);
    for (size_t i = 0; i < ns; ++i) log_a[i] = std::log(src.mass[i]);
    for (size_t j = 0; j < nd; ++j) log_b[j] = std::log(dst.mass[j]);

    double violation = 1.0;
    for (int it = 0; it < kMaxIter && violation > kTol; ++it) {
        for (size_t i = 0; i < ns; ++i) {
            buf.assign(nd, 0.0);
            for (size_t j = 0; j < nd; ++j) buf[j] = (g[j] - cost[i][j]) / kReg;
            f[i] = kReg * (log_a[i] - logsumexp(buf));
        }
        for (size_t j = 0; j < nd; ++j) {
            buf.assign(ns, 0.0);
            for (size_t i = 0; i < ns; ++i) buf[i] = (f[i] - cost[i][j]) / kReg;
            g[j] = kReg * (log_b[j] - logsumexp(buf));
        }
        // row-marginal violation (column marginals are exact after the g update)
        violation = 0.0;
        for (size_t i = 0; i < ns; ++i) {
            double row = 0.0;
            for (size_t j = 0; j < nd; ++j) {
                row += std::exp((f[i] + g[j] - cost[i][j]) / kReg);
            }
            violation = std::max(violation, std::fabs(row - src.mass[i]));
        }
    }
    if (violation > kTol) throw NumericError("emd_2d: Sinkhorn did not converge");

    double total = 0.0;
    for (size_t i = 0; i < ns; ++i) {
        for (size_t j = 0; j < nd; ++j) {
            total += std::exp((f[i] + g[j] - cost[i][j]) / kReg) * cost[i][j];
        }
    }
    return total;
}

}  // namespace

EmdResult emd_2d(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) {
        throw ShapeError("emd_2d: shapes differ: " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    }
    const GridMass src = normalized_support(a, "first input");
    const GridMass dst = normalized_support(b, "second input");
    const int64_t cols = a.shape[1];
    if (a.shape[0] <= 8 && a.shape[1] <= 8) {
        return {emd_exact(src, dst, cols), true};
    }
    return {emd_sinkhorn(src, dst, cols), false};
}

// --- Nemenyi -------------------------------------------------------------------

namespace {

// Critical values of the Nemenyi test (studentized range at infinite df over
// sqrt(2)) for k = 2..20.
constexpr double kQ05[] = {1.959964, 2.343701, 2.569032, 2.727774, 2.849705, 2.948320, 3.030879,
                           3.101730, 3.163684, 3.218654, 3.268004, 3.312739, 3.353618, 3.391230,
                           3.426041, 3.458425, 3.488685, 3.517073, 3.543799};
constexpr double kQ10[] = {1.644854, 2.052293, 2.291341, 2.459516, 2.588521, 2.692732, 2.779884,
                           2.854606, 2.919889, 2.977768, 3.029694, 3.076733, 3.119693, 3.159199,
                           3.195743, 3.229723, 3.261461, 3.291224, 3.319233};

}  // namespace

double nemenyi_q(int64_t k, double alpha) {
    if (k < 2 || k > 20) {
        throw ContractError("nemenyi_q: table covers 2 <= k <= 20, got " + std::to_string(k));
    }
    if (std::fabs(alpha - 0.05) < 1e-12) return kQ05[k - 2];
    if (std::fabs(alpha - 0.10) < 1e-12) return kQ10[k - 2];
    throw ContractError("nemenyi_q: alpha must be 0.05 or 0.10");
}

NemenyiResult nemenyi_cd(const std::vector<std::vector<double>>& ranks, double alpha) {
    const int64_t k = static_cast<int64_t>(ranks.size());
    if (k < 2) throw ContractError("nemenyi_cd: need at least 2 models");
    const int64_t n = static_cast<int64_t>(ranks[0].size());
    if (n < 2) throw ContractError("nemenyi_cd: need at least 2 datasets");
    for (const auto& row : ranks) {
        if (static_cast<int64_t>(row.size()) != n) {
            throw ContractError("nemenyi_cd: ragged rank matrix");
        }
    }
    const double expected_sum = static_cast<double>(k) * (static_cast<double>(k) + 1.0) / 2.0;
    for (int64_t d = 0; d < n; ++d) {
        double s = 0.0;
        for (int64_t m = 0; m < k; ++m) {
            const double r = ranks[static_cast<size_t>(m)][static_cast<size_t>(d)];
            if (r < 1.0 || r > static_cast<double>(k)) {
                throw ContractError("nemenyi_cd: rank outside [1, k]");
            }
            s += r;
        }
        if (std::fabs(s - expected_sum) > 1e-9) {
            throw ContractError("nemenyi_cd: dataset " + std::to_string(d) +
                                " ranks are not a (mean-tie) permutation");
        }
    }

    NemenyiResult res;
    res.avg_ranks.resize(static_cast<size_t>(k));
    for (int64_t m = 0; m < k; ++m) {
        double s = 0.0;
        for (int64_t d = 0; d < n; ++d) s += ranks[static_cast<size_t>(m)][static_cast<size_t>(d)];
        res.avg_ranks[static_cast<size_t>(m)] = s / static_cast<double>(n);
    }
    res.critical_difference =
        nemenyi_q(k, alpha) *
        std::sqrt(static_cast<double>(k) * (static_cast<double>(k) + 1.0) /
                  (6.0 * static_cast<double>(n)));
    for (int64_t i = 0; i < k; ++i) {
        for (int64_t j = i + 1; j < k; ++j) {
            if (std::fabs(res.avg_ranks[i] - res.avg_ranks[j]) > res.critical_difference) {
                res.significant.emplace_back(static_cast<int>(i), static_cast<int>(j));
            }
        }
    }
    return res;
}

}  // namespace gma
