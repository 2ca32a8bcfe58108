#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gma/metrics.hpp"
#include "gma/rng.hpp"
#include "gma/saliency.hpp"

using namespace gma;

TEST_CASE("sample_masks: determinism, value range, bernoulli means") {
    const MaskSet a = sample_masks(7, 0.5, 4, 50, 77);
    const MaskSet b = sample_masks(7, 0.5, 4, 50, 77);
    REQUIRE(a.masks.size() == 50);
    for (size_t i = 0; i < a.masks.size(); ++i) {
        CHECK(bit_equal(a.masks[i], b.masks[i]));
        for (double v : a.masks[i].data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK_FALSE(bit_equal(sample_masks(7, 0.5, 4, 1, 78).masks[0], a.masks[0]));

    // keep-probability near 1 keeps nearly everything
    const MaskSet high = sample_masks(7, 0.999, 4, 100, 5);
    double mean = 0;
    for (const Tensor& m : high.masks) {
        for (double v : m.data) mean += v;
    }
    mean /= 100.0 * 49.0;
    CHECK(mean > 0.99);

    // s = N skips upsampling: binary masks with per-cell mean near p
    const MaskSet flat = sample_masks(7, 0.5, 7, 10000, 6);
    std::vector<double> cell_mean(49, 0.0);
    for (const Tensor& m : flat.masks) {
        for (int64_t i = 0; i < 49; ++i) {
            CHECK((m.data[i] == 0.0 || m.data[i] == 1.0));
            cell_mean[static_cast<size_t>(i)] += m.data[i];
        }
    }
    for (double& v : cell_mean) {
        v /= 10000.0;
        CHECK(std::fabs(v - 0.5) < 0.02);
    }

    CHECK_THROWS_AS(sample_masks(7, 0.0, 4, 10, 1), ContractError);
    CHECK_THROWS_AS(sample_masks(7, 1.0, 4, 10, 1), ContractError);
    CHECK_THROWS_AS(sample_masks(7, 0.5, 9, 10, 1), ContractError);
    CHECK_THROWS_AS(sample_masks(7, 0.5, 4, 0, 1), ContractError);
}

TEST_CASE("rise_saliency: constant scorers and hand case") {
    SplitMix64 rng(31);
    Tensor image({4, 4, 2});
    for (double& v : image.data) v = rng.uniform(0, 1);

    {
        // single all-ones mask with keep probability treated as 1
        MaskSet ones;
        ones.keep_prob = 1.0;
        ones.lowres = 4;
        ones.masks.push_back(Tensor::full({4, 4}, 1.0));
        const Tensor s = rise_saliency(image, [](const Tensor&) { return 0.6; }, ones);
        for (double v : s.data) CHECK(v == doctest::Approx(0.6).epsilon(1e-12));
    }

    const MaskSet masks = sample_masks(4, 0.5, 2, 2000, 17);
    const Tensor s_const = rise_saliency(image, [](const Tensor&) { return 0.4; }, masks);
    for (double v : s_const.data) CHECK(std::fabs(v - 0.4) < 0.05);
}

TEST_CASE("rise_saliency is exactly linear in the scorer") {
    SplitMix64 rng(32);
    Tensor image({5, 5, 3});
    for (double& v : image.data) v = rng.uniform(0, 1);
    const MaskSet masks = sample_masks(5, 0.5, 3, 64, 9);

    auto f = [](const Tensor& masked) {
        double s = 0;
        for (double v : masked.data) s += v;
        return s / static_cast<double>(masked.numel());
    };
    auto f2 = [&](const Tensor& masked) { return 2.0 * f(masked); };
    const Tensor s1 = rise_saliency(image, f, masks);
    const Tensor s2 = rise_saliency(image, f2, masks);
    Tensor doubled = s1;
    for (double& v : doubled.data) v *= 2.0;
    CHECK(bit_equal(s2, doubled));

    // same seed, same scorer: bit-identical across runs
    const Tensor again = rise_saliency(image, f, sample_masks(5, 0.5, 3, 64, 9));
    CHECK(bit_equal(s1, again));
}

TEST_CASE("rise_saliency propagates scorer failures with the mask index") {
    Tensor image({3, 3, 1});
    const MaskSet masks = sample_masks(3, 0.5, 2, 10, 3);
    int calls = 0;
    try {
        rise_saliency(image,
                      [&](const Tensor&) -> double {
                          if (++calls == 4) throw std::runtime_error("boom");
                          return 0.5;
                      },
                      masks);
        FAIL("expected propagated error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("mask index 3") != std::string::npos);
    }
}

TEST_CASE("rise_saliency recovers a linear scorer's weights") {
    // miniature version of the acceptance run; the weight field is spatially
    // smooth (boustrophedon ramp, squared) so the upsampled masks can resolve
    // its ordering at this mask budget
    const int64_t n = 5;
    Tensor image = Tensor::full({n, n, 1}, 1.0);
    Tensor weights({n, n});
    for (int64_t r = 0; r < n; ++r) {
        for (int64_t c = 0; c < n; ++c) {
            const double snake = static_cast<double>(r * n + (r % 2 == 0 ? c : n - 1 - c));
            weights.at(r, c) = (snake + 1.0) * (snake + 1.0);
        }
    }
    auto scorer = [&](const Tensor& masked) {
        double s = 0;
        for (int64_t cell = 0; cell < n * n; ++cell) s += weights.data[cell] * masked.data[cell];
        return s;
    };
    const Tensor sal = rise_saliency(image, scorer, sample_masks(n, 0.2, 3, 1500, 21));
    const Correlation corr = spearman_rc(sal, weights);
    CHECK(corr.rho > 0.85);
}

TEST_CASE("pairwise_word_mask_search: counts, analytic optimum, tie rule") {
    SplitMix64 rng(34);
    {
        Tensor tokens({2, 3});
        for (double& v : tokens.data) v = rng.uniform(-1, 1);
        int calls = 0;
        auto r = pairwise_word_mask_search(tokens, [&](const Tensor&) {
            ++calls;
            return std::pair<double, Tensor>{0.25, Tensor({2}, {0.5, 0.5})};
        });
        CHECK(calls == 1);
        CHECK(r.first == 0);
        CHECK(r.second == 1);
        CHECK(r.gt_prob == 0.25);
    }
    {
        Tensor tokens({5, 2});
        for (double& v : tokens.data) v = rng.uniform(-1, 1);
        int calls = 0;
        pairwise_word_mask_search(tokens, [&](const Tensor&) {
            ++calls;
            return std::pair<double, Tensor>{0.0, Tensor({5}, {0.2, 0.2, 0.2, 0.2, 0.2})};
        });
        CHECK(calls == 10);
    }
    {
        // scorer favoring removal of the largest-norm tokens
        Tensor tokens({4, 2}, {0.1, 0.1, 3.0, 3.0, 0.2, 0.1, 2.0, 2.5});
        auto r = pairwise_word_mask_search(tokens, [](const Tensor& masked) {
            double norm_sum = 0;
            for (int64_t t = 0; t < masked.shape[0]; ++t) {
                double n2 = 0;
                for (int64_t j = 0; j < masked.shape[1]; ++j) n2 += masked.at(t, j) * masked.at(t, j);
                norm_sum += std::sqrt(n2);
            }
            return std::pair<double, Tensor>{-norm_sum, Tensor({4}, {0.25, 0.25, 0.25, 0.25})};
        });
        // tokens 1 and 3 carry the largest norms
        CHECK(r.first == 1);
        CHECK(r.second == 3);
    }

    Tensor single({1, 2});
    CHECK_THROWS_AS(
        pairwise_word_mask_search(single,
                                  [](const Tensor&) {
                                      return std::pair<double, Tensor>{0.0, Tensor({1}, {1.0})};
                                  }),
        ContractError);
}
