#include "gma/train.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "gma/rng.hpp"
#include "gma/saliency.hpp"
#include "gma/tensor_io.hpp"

namespace fs = std::filesystem;

namespace gma {

SaliencyCache build_saliency_cache(DialogModel& probe, const RunConfig& cfg,
                                   const std::vector<DialogInstance>& split, const char* tag) {
    std::vector<std::vector<Tensor>> maps;
    maps.reserve(split.size());
    for (size_t i = 0; i < split.size(); ++i) {
        const DialogInstance& inst = split[i];
        std::vector<Tensor> per_round;
        per_round.reserve(inst.rounds.size());
        for (size_t r = 0; r < inst.rounds.size(); ++r) {
            const uint64_t mask_seed =
                SplitMix64(cfg.seed ^ fnv1a64(tag) ^ (0x9e3779b9ULL * (i * 1024 + r))).next_u64();
            const MaskSet masks = sample_masks(cfg.grid_n, cfg.mask_keep_prob, cfg.mask_lowres,
                                               cfg.train_mask_count, mask_seed);
            auto scorer = [&](const Tensor& masked) {
                return probe.gt_probability(inst, static_cast<int64_t>(r), nullptr, &masked);
            };
            per_round.push_back(rise_saliency(inst.image, scorer, masks));
        }
        maps.push_back(std::move(per_round));
    }
    return SaliencyCache(std::move(maps));
}

TrainResult train_model(DialogModel& model, const RunConfig& cfg,
                        const std::vector<DialogInstance>& split, const SaliencyCache& saliency) {
    TrainResult result;
    Tape tape;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double total = 0.0;
        int64_t count = 0;
        int64_t in_batch = 0;
        model.params().zero_grad();
        for (size_t i = 0; i < split.size(); ++i) {
            for (size_t r = 0; r < split[i].rounds.size(); ++r) {
                tape.reset();
                try {
                    Value loss = model.round_loss(tape, split[i], static_cast<int64_t>(r),
                                                  saliency.get(i, r));
                    total += tape.val(loss).data[0];
                    ++count;
                    if (cfg.learning_rate != 0.0) {
                        tape.backward(loss);
                        if (++in_batch == cfg.batch_size) {
                            model.params().sgd_step(cfg.learning_rate /
                                                    static_cast<double>(in_batch));
                            model.params().zero_grad();
                            in_batch = 0;
                        }
                    }
                } catch (const NumericError& e) {
                    throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                                       ", dialog " + std::to_string(i) + ", round " +
                                       std::to_string(r) + ": " + e.what());
                }
            }
        }
        if (in_batch > 0) {
            model.params().sgd_step(cfg.learning_rate / static_cast<double>(in_batch));
            model.params().zero_grad();
        }
        result.loss_curve.push_back(total / static_cast<double>(count));
    }
    return result;
}

MetricVector evaluate_model(DialogModel& model, const RunConfig& cfg,
                            const std::vector<DialogInstance>& split,
                            const SaliencyCache& saliency, EvalMaps* maps_out) {
    (void)cfg;
    std::vector<RankedRound> rounds;
    Tape tape;
    for (size_t i = 0; i < split.size(); ++i) {
        for (size_t r = 0; r < split[i].rounds.size(); ++r) {
            tape.reset();
            RoundOutput out = model.forward_round(tape, split[i], static_cast<int64_t>(r),
                                                  saliency.get(i, r));
            const RoundData& rd = split[i].rounds[r];
            rounds.push_back(RankedRound{tape.val(out.scores.logits).data, rd.gt_index,
                                         rd.relevance});
            if (maps_out && i == 0) {
                const int64_t n = split[i].image.shape[0];
                if (out.image_map) {
                    Tensor grid({n, n}, tape.val(*out.image_map).data);
                    maps_out->image_maps.push_back(std::move(grid));
                }
                if (out.text_map) maps_out->text_maps.push_back(tape.val(*out.text_map));
            }
        }
    }
    return retrieval_metrics(rounds);
}

bool variant_uses_saliency(const std::string& variant) {
    return variant == "gia" || variant == "gma_cat" || variant == "gma_mcb" ||
           variant == "gma_mcb_att" || variant == "gma_pass";
}

SaliencyBundle prepare_saliency(const RunConfig& cfg, const Dataset& data) {
    SaliencyBundle bundle;
    if (cfg.saliency_source != "rise") return bundle;
    RunConfig base_cfg = cfg;
    base_cfg.variant = "san";
    DialogModel baseline(base_cfg, data.vocab);
    train_model(baseline, base_cfg, data.train, SaliencyCache{});
    bundle.train = build_saliency_cache(baseline, cfg, data.train, "train");
    bundle.val = build_saliency_cache(baseline, cfg, data.val, "val");
    bundle.test = build_saliency_cache(baseline, cfg, data.test, "test");
    return bundle;
}

namespace {

SweepEntry run_setting(const RunConfig& cfg, const Dataset& data, const std::string& label,
                       const SaliencyCache& train_sal, const SaliencyCache& val_sal) {
    DialogModel model(cfg, data.vocab);
    SweepEntry entry;
    entry.label = label;
    TrainResult tr = train_model(model, cfg, data.train, train_sal);
    entry.loss_curve = std::move(tr.loss_curve);
    entry.metrics = evaluate_model(model, cfg, data.val, val_sal);
    return entry;
}

}  // namespace

std::vector<SweepEntry> sweep_fusion(const RunConfig& cfg, const Dataset& data) {
    static const char* kAxis[] = {"san", "mcb_att", "gta", "gia", "gma_cat", "gma_mcb",
                                  "gma_mcb_att"};
    const SaliencyBundle sal = prepare_saliency(cfg, data);
    std::vector<SweepEntry> out;
    for (const char* variant : kAxis) {
        RunConfig entry_cfg = cfg;
        entry_cfg.variant = variant;
        const bool granular = variant_uses_saliency(variant);
        out.push_back(run_setting(entry_cfg, data, variant,
                                  granular ? sal.train : SaliencyCache{},
                                  granular ? sal.val : SaliencyCache{}));
    }
    return out;
}

std::vector<SweepEntry> sweep_granules(const RunConfig& cfg, const Dataset& data,
                                       const std::vector<int64_t>& granule_counts) {
    const SaliencyBundle sal = prepare_saliency(cfg, data);
    std::vector<SweepEntry> out;
    for (int64_t k : granule_counts) {
        RunConfig entry_cfg = cfg;
        entry_cfg.granules = std::min<int64_t>(k, cfg.grid_n * cfg.grid_n);
        out.push_back(run_setting(entry_cfg, data, "K=" + std::to_string(entry_cfg.granules),
                                  sal.train, sal.val));
    }
    return out;
}

nlohmann::json metrics_to_json(const MetricVector& m) {
    return nlohmann::json{{"R@1", m.r_at_1},        {"R@5", m.r_at_5}, {"R@10", m.r_at_10},
                          {"MRR", m.mrr},           {"Mean", m.mean_rank},
                          {"NDCG", m.ndcg}};
}

nlohmann::json run_report(const RunConfig& cfg, const TrainResult& train,
                          const MetricVector& metrics) {
    return nlohmann::json{{"config", cfg.to_json()},
                          {"loss_curve", train.loss_curve},
                          {"metrics", metrics_to_json(metrics)}};
}

Tensor joint_histogram(const Tensor& a, const Tensor& b, int64_t bins) {
    if (a.shape != b.shape || bins < 1) {
        throw ContractError("joint_histogram: need same-shape maps and bins >= 1");
    }
    double amax = 0, bmax = 0;
    for (double v : a.data) amax = std::max(amax, v);
    for (double v : b.data) bmax = std::max(bmax, v);
    Tensor hist({bins, bins});
    const double mass = 1.0 / static_cast<double>(a.numel());
    for (int64_t i = 0; i < a.numel(); ++i) {
        const int64_t bi = amax > 0 ? std::min<int64_t>(bins - 1, static_cast<int64_t>(
                                          a.data[i] / amax * static_cast<double>(bins)))
                                    : 0;
        const int64_t bj = bmax > 0 ? std::min<int64_t>(bins - 1, static_cast<int64_t>(
                                          b.data[i] / bmax * static_cast<double>(bins)))
                                    : 0;
        hist.at(bi, bj) += mass;
    }
    return hist;
}

void write_manifest(const std::string& out_dir, const std::vector<std::string>& skip) {
    std::vector<std::string> paths;
    for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = fs::relative(entry.path(), out_dir).generic_string();
        if (rel == "manifest.json") continue;
        if (std::find(skip.begin(), skip.end(), rel) != skip.end()) continue;
        paths.push_back(rel);
    }
    std::sort(paths.begin(), paths.end());
    nlohmann::json artifacts = nlohmann::json::array();
    for (const std::string& rel : paths) {
        const std::string full = out_dir + "/" + rel;
        artifacts.push_back({{"path", rel},
                             {"bytes", fs::file_size(full)},
                             {"fnv1a64", file_hash_hex(full)}});
    }
    std::ofstream os(out_dir + "/manifest.json");
    if (!os) throw IoError("cannot write manifest in " + out_dir);
    os << nlohmann::json{{"artifacts", std::move(artifacts)}}.dump(2) << "\n";
}

}  // namespace gma
