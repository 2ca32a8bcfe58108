#include "oracles.hpp"

#include <stdexcept>

namespace oracle {

namespace {

// min cost^T x, A x = b, x >= 0. Two-phase dense tableau simplex, Bland's
// entering rule, ratio ties broken by smallest basis index.
class Simplex {
public:
    Simplex(std::vector<std::vector<double>> a, std::vector<double> b, std::vector<double> c)
        : n_(c.size()), m_(a.size()), cost_(std::move(c)) {
        const size_t total = n_ + m_;
        tab_.assign(m_, std::vector<double>(total + 1, 0.0));
        basis_.resize(m_);
        for (size_t i = 0; i < m_; ++i) {
            if (b[i] < 0) {
                for (auto& v : a[i]) v = -v;
                b[i] = -b[i];
            }
            for (size_t j = 0; j < n_; ++j) tab_[i][j] = a[i][j];
            tab_[i][n_ + i] = 1.0;
            tab_[i][total] = b[i];
            basis_[i] = n_ + i;
        }
    }

    double solve() {
        std::vector<double> phase1(n_ + m_, 0.0);
        for (size_t j = n_; j < n_ + m_; ++j) phase1[j] = 1.0;
        run(phase1, true);
        drive_out_artificials();
        std::vector<double> phase2(n_ + m_, 0.0);
        for (size_t j = 0; j < n_; ++j) phase2[j] = cost_[j];
        run(phase2, false);
        double obj = 0.0;
        for (size_t i = 0; i < m_; ++i) {
            if (basis_[i] < n_) obj += cost_[basis_[i]] * tab_[i].back();
        }
        return obj;
    }

private:
    void pivot(size_t pr, size_t pc) {
        const double pv = tab_[pr][pc];
        for (auto& v : tab_[pr]) v /= pv;
        for (size_t i = 0; i < m_; ++i) {
            if (i == pr) continue;
            const double f = tab_[i][pc];
            if (f == 0.0) continue;
            for (size_t j = 0; j < tab_[i].size(); ++j) tab_[i][j] -= f * tab_[pr][j];
        }
        basis_[pr] = pc;
    }

    void run(const std::vector<double>& cost, bool allow_artificial) {
        const size_t total = n_ + m_;
        for (int iter = 0; iter < 100000; ++iter) {
            int enter = -1;
            for (size_t j = 0; j < total; ++j) {
                if (!allow_artificial && j >= n_) continue;
                double r = cost[j];
                for (size_t i = 0; i < m_; ++i) r -= cost[basis_[i]] * tab_[i][j];
                if (r < -1e-9) {
                    enter = static_cast<int>(j);
                    break;
                }
            }
            if (enter < 0) return;
            int leave = -1;
            double best = 0.0;
            for (size_t i = 0; i < m_; ++i) {
                if (tab_[i][static_cast<size_t>(enter)] > 1e-12) {
                    const double ratio = tab_[i].back() / tab_[i][static_cast<size_t>(enter)];
                    if (leave < 0 || ratio < best - 1e-15 ||
                        (std::fabs(ratio - best) <= 1e-15 &&
                         basis_[i] < basis_[static_cast<size_t>(leave)])) {
                        leave = static_cast<int>(i);
                        best = ratio;
                    }
                }
            }
            if (leave < 0) throw std::runtime_error("simplex oracle: unbounded");
            pivot(static_cast<size_t>(leave), static_cast<size_t>(enter));
        }
        throw std::runtime_error("simplex oracle: iteration cap reached");
    }

    void drive_out_artificials() {
        for (size_t i = 0; i < m_; ++i) {
            if (basis_[i] < n_) continue;
            if (tab_[i].back() > 1e-7) throw std::runtime_error("simplex oracle: infeasible");
            for (size_t j = 0; j < n_; ++j) {
                if (std::fabs(tab_[i][j]) > 1e-9) {
                    pivot(i, j);
                    break;
                }
            }
            // an all-zero row is a redundant constraint; its artificial stays
            // basic at zero and never pivots again
        }
    }

    size_t n_, m_;
    std::vector<double> cost_;
    std::vector<std::vector<double>> tab_;
    std::vector<size_t> basis_;
};

}  // namespace

double transport_lp_simplex(const std::vector<double>& supply, const std::vector<double>& demand,
                            const std::vector<std::vector<double>>& cost) {
    const size_t ns = supply.size(), nd = demand.size();
    const size_t nvars = ns * nd;
    std::vector<std::vector<double>> a(ns + nd, std::vector<double>(nvars, 0.0));
    std::vector<double> b(ns + nd);
    std::vector<double> c(nvars);
    for (size_t i = 0; i < ns; ++i) {
        b[i] = supply[i];
        for (size_t j = 0; j < nd; ++j) {
            a[i][i * nd + j] = 1.0;
            c[i * nd + j] = cost[i][j];
        }
    }
    for (size_t j = 0; j < nd; ++j) {
        b[ns + j] = demand[j];
        for (size_t i = 0; i < ns; ++i) a[ns + j][i * nd + j] = 1.0;
    }
    return Simplex(std::move(a), std::move(b), std::move(c)).solve();
}

}  // namespace oracle
