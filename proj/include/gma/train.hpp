#pragma once

#include <string>
#include <vector>

#include "gma/config.hpp"
#include "gma/dataset.hpp"
#include "gma/metrics.hpp"
#include "gma/model.hpp"

namespace gma {

// Precomputed per-(instance, round) saliency grids; empty means uniform.
class SaliencyCache {
public:
    SaliencyCache() = default;
    explicit SaliencyCache(std::vector<std::vector<Tensor>> maps) : maps_(std::move(maps)) {}

    const Tensor* get(size_t instance, size_t round) const {
        if (maps_.empty()) return nullptr;
        return &maps_.at(instance).at(round);
    }
    bool empty() const { return maps_.empty(); }

private:
    std::vector<std::vector<Tensor>> maps_;
};

// Occlusion-derived importance per round, probing `probe` (normally the
// trained baseline) with cfg.train_mask_count masks. Mask seeds derive from
// (cfg.seed, tag, instance, round) so caches are reproducible.
SaliencyCache build_saliency_cache(DialogModel& probe, const RunConfig& cfg,
                                   const std::vector<DialogInstance>& split, const char* tag);

bool variant_uses_saliency(const std::string& variant);

// Per-split saliency for the granular variants. With saliency_source "rise"
// this trains a fresh baseline (same config and seed, variant "san") and
// probes it; with "uniform" the caches stay empty.
struct SaliencyBundle {
    SaliencyCache train, val, test;
};
SaliencyBundle prepare_saliency(const RunConfig& cfg, const Dataset& data);

struct TrainResult {
    std::vector<double> loss_curve;  // mean per-round loss per epoch
};

// Plain SGD at a fixed learning rate, instances and rounds visited in order.
// A non-finite value anywhere aborts with NumericError naming the position.
TrainResult train_model(DialogModel& model, const RunConfig& cfg,
                        const std::vector<DialogInstance>& split, const SaliencyCache& saliency);

struct EvalMaps {
    // first instance of the split: one entry per round
    std::vector<Tensor> image_maps;  // [N x N]
    std::vector<Tensor> text_maps;   // [T]
};

MetricVector evaluate_model(DialogModel& model, const RunConfig& cfg,
                            const std::vector<DialogInstance>& split,
                            const SaliencyCache& saliency, EvalMaps* maps_out = nullptr);

struct SweepEntry {
    std::string label;
    MetricVector metrics;
    std::vector<double> loss_curve;
};

// Trains and evaluates one setting per axis value with a shared seed. The
// granule axis needs cell saliency, so it first trains the baseline and
// probes it for occlusion maps when cfg.saliency_source is "rise".
std::vector<SweepEntry> sweep_fusion(const RunConfig& cfg, const Dataset& data);
std::vector<SweepEntry> sweep_granules(const RunConfig& cfg, const Dataset& data,
                                       const std::vector<int64_t>& granule_counts);

// Deterministic run report (timings live in a separate file).
nlohmann::json run_report(const RunConfig& cfg, const TrainResult& train,
                          const MetricVector& metrics);
nlohmann::json metrics_to_json(const MetricVector& m);

// 2D histogram of paired per-cell values of two same-shape maps, each cell
// contributing 1/numel mass; total mass is 1.
Tensor joint_histogram(const Tensor& a, const Tensor& b, int64_t bins);

// Writes <out>/manifest.json listing every artifact path (sorted) with size
// and FNV-1a hash; `skip` names files excluded from hashing (e.g. timings).
void write_manifest(const std::string& out_dir, const std::vector<std::string>& skip = {});

}  // namespace gma
