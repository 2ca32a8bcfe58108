#include "gma/saliency.hpp"

#include <algorithm>
#include <cmath>

#include "gma/rng.hpp"

namespace gma {

MaskSet sample_masks(int64_t n, double keep_prob, int64_t lowres, int64_t count, uint64_t seed) {
    if (n < 1 || lowres < 1 || lowres > n || count < 1 || !(keep_prob > 0.0) ||
        !(keep_prob < 1.0)) {
        throw ContractError("sample_masks: need n >= lowres >= 1, count >= 1, 0 < p < 1");
    }
    MaskSet set;
    set.keep_prob = keep_prob;
    set.lowres = lowres;
    set.seed = seed;
    set.masks.reserve(static_cast<size_t>(count));

    const int64_t cell = (n + lowres - 1) / lowres;  // upsampling factor
    SplitMix64 rng(seed);
    std::vector<double> small(static_cast<size_t>(lowres * lowres));
    for (int64_t m = 0; m < count; ++m) {
        for (double& v : small) v = rng.bernoulli(keep_prob) ? 1.0 : 0.0;
        const int64_t dy = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(cell)));
        const int64_t dx = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(cell)));
        Tensor mask({n, n});
        auto sample = [&](int64_t i, int64_t j) {
            i = std::clamp<int64_t>(i, 0, lowres - 1);
            j = std::clamp<int64_t>(j, 0, lowres - 1);
            return small[static_cast<size_t>(i * lowres + j)];
        };
        for (int64_t r = 0; r < n; ++r) {
            const double y = static_cast<double>(r + dy) / static_cast<double>(cell);
            const int64_t iy = static_cast<int64_t>(std::floor(y));
            const double ty = y - static_cast<double>(iy);
            for (int64_t c = 0; c < n; ++c) {
                const double x = static_cast<double>(c + dx) / static_cast<double>(cell);
                const int64_t ix = static_cast<int64_t>(std::floor(x));
                const double tx = x - static_cast<double>(ix);
                const double v00 = sample(iy, ix), v01 = sample(iy, ix + 1);
                const double v10 = sample(iy + 1, ix), v11 = sample(iy + 1, ix + 1);
                mask.at(r, c) = (1 - ty) * ((1 - tx) * v00 + tx * v01) +
                                ty * ((1 - tx) * v10 + tx * v11);
            }
        }
        set.masks.push_back(std::move(mask));
    }
    return set;
}

Tensor rise_saliency(const Tensor& image, const GridScorer& scorer, const MaskSet& masks) {
    if (image.rank() != 3) {
        throw ShapeError("rise_saliency: image must be [N x N x C], got " + shape_str(image.shape));
    }
    const int64_t n = image.shape[0];
    const int64_t channels = image.shape[2];
    if (image.shape[1] != n || masks.masks.empty() || masks.masks[0].shape[0] != n) {
        throw ShapeError("rise_saliency: mask grid does not match image grid");
    }

    Tensor saliency({n, n});
    Tensor masked(image.shape);
    for (size_t m = 0; m < masks.masks.size(); ++m) {
        const Tensor& mask = masks.masks[m];
        for (int64_t cell = 0; cell < n * n; ++cell) {
            const double w = mask.data[cell];
            const double* src = image.data.data() + cell * channels;
            double* dst = masked.data.data() + cell * channels;
            for (int64_t ch = 0; ch < channels; ++ch) dst[ch] = w * src[ch];
        }
        double score = 0.0;
        try {
            score = scorer(masked);
        } catch (const std::exception& e) {
            throw Error("rise_saliency: scorer failed at mask index " + std::to_string(m) + ": " +
                        e.what());
        }
        if (!std::isfinite(score)) {
            throw NumericError("rise_saliency: non-finite score at mask index " +
                               std::to_string(m));
        }
        for (int64_t cell = 0; cell < n * n; ++cell) {
            saliency.data[cell] += score * mask.data[cell];
        }
    }
    const double norm = 1.0 / (masks.keep_prob * static_cast<double>(masks.masks.size()));
    for (double& v : saliency.data) v *= norm;
    require_finite(saliency, "rise_saliency");
    return saliency;
}

MaskedQuestionResult pairwise_word_mask_search(const Tensor& q_tokens, const TokenScorer& scorer) {
    if (q_tokens.rank() != 2 || q_tokens.shape[0] < 2) {
        throw ContractError("pairwise_word_mask_search: need at least two tokens, got shape " +
                            shape_str(q_tokens.shape));
    }
    const int64_t T = q_tokens.shape[0];
    const int64_t d = q_tokens.shape[1];

    MaskedQuestionResult best;
    bool have_best = false;
    Tensor masked = q_tokens;
    for (int64_t i = 0; i < T; ++i) {
        for (int64_t j = i + 1; j < T; ++j) {
            std::copy_n(q_tokens.data.begin(), q_tokens.data.size(), masked.data.begin());
            std::fill_n(masked.data.begin() + i * d, d, 0.0);
            std::fill_n(masked.data.begin() + j * d, d, 0.0);
            auto [prob, map] = scorer(masked);
            if (!std::isfinite(prob)) {
                throw NumericError("pairwise_word_mask_search: non-finite score for pair (" +
                                   std::to_string(i) + "," + std::to_string(j) + ")");
            }
            if (!have_best || prob > best.gt_prob) {
                best = {i, j, prob, std::move(map)};
                have_best = true;
            }
        }
    }
    return best;
}

}  // namespace gma
