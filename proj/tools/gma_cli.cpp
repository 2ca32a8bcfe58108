// Command-line front end: dataset generation, training, evaluation, sweeps,
// saliency probes, map comparison, significance analysis and plot-data export.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "gma/config.hpp"
#include "gma/dataset.hpp"
#include "gma/metrics.hpp"
#include "gma/model.hpp"
#include "gma/rng.hpp"
#include "gma/saliency.hpp"
#include "gma/tensor_io.hpp"
#include "gma/train.hpp"

namespace fs = std::filesystem;
using namespace gma;
using Clock = std::chrono::steady_clock;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
};

RunConfig load_config(const CommonArgs& args) {
    RunConfig cfg = args.config_path.empty() ? RunConfig{} : RunConfig::from_file(args.config_path);
    if (args.seed_set) cfg.seed = args.seed;
    cfg.validate();
    return cfg;
}

void ensure_out(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + dir);
}

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    os << j.dump(2) << "\n";
}

void write_timings(const std::string& out_dir, double seconds) {
    // wall-clock lives outside the deterministic report
    write_json(out_dir + "/timings.json", nlohmann::json{{"wall_seconds", seconds}});
}

// The granular variants select cells by occlusion saliency probed from a
// baseline: load one if given, otherwise train it here.
std::unique_ptr<DialogModel> make_probe(const RunConfig& cfg, const Dataset& data,
                                        const std::string& probe_checkpoint) {
    if (cfg.saliency_source != "rise" || !variant_uses_saliency(cfg.variant)) return nullptr;
    RunConfig probe_cfg = cfg;
    probe_cfg.variant = "san";
    auto probe = std::make_unique<DialogModel>(probe_cfg, data.vocab);
    if (!probe_checkpoint.empty()) {
        probe->params().load(probe_checkpoint);
    } else {
        std::cout << "training a san baseline to probe for occlusion saliency\n";
        train_model(*probe, probe_cfg, data.train, SaliencyCache{});
    }
    return probe;
}

SaliencyCache make_cache(DialogModel* probe, const RunConfig& cfg, const Dataset& data,
                         const std::vector<DialogInstance>& split, const char* tag) {
    (void)data;
    if (!probe) return SaliencyCache{};
    return build_saliency_cache(*probe, cfg, split, tag);
}

int cmd_generate(const CommonArgs& args) {
    const RunConfig cfg = load_config(args);
    ensure_out(args.out_dir);
    const auto t0 = Clock::now();
    Dataset data = generate_dataset(cfg);
    write_dataset(data, args.out_dir + "/dataset");
    write_json(args.out_dir + "/config.json", cfg.to_json());
    write_timings(args.out_dir, std::chrono::duration<double>(Clock::now() - t0).count());
    write_manifest(args.out_dir, {"timings.json"});
    std::cout << "generated " << data.train.size() << "/" << data.val.size() << "/"
              << data.test.size() << " dialogs under " << args.out_dir << "/dataset\n";
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& data_dir,
              const std::string& saliency_from) {
    const RunConfig cfg = load_config(args);
    ensure_out(args.out_dir);
    const auto t0 = Clock::now();
    Dataset data = load_dataset(data_dir);
    DialogModel model(cfg, data.vocab);
    auto probe = make_probe(cfg, data, saliency_from);
    const SaliencyCache cache = make_cache(probe.get(), cfg, data, data.train, "train");
    const TrainResult result = train_model(model, cfg, data.train, cache);
    model.params().save(args.out_dir + "/checkpoint.gmatc");
    if (probe && saliency_from.empty()) {
        probe->params().save(args.out_dir + "/saliency_baseline.gmatc");
    }

    std::ofstream curve(args.out_dir + "/loss_curve.csv");
    curve << "epoch,mean_loss\n";
    for (size_t e = 0; e < result.loss_curve.size(); ++e) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", e, result.loss_curve[e]);
        curve << buf;
    }

    const SaliencyCache val_cache = make_cache(probe.get(), cfg, data, data.val, "val");
    const MetricVector metrics = evaluate_model(model, cfg, data.val, val_cache);
    write_json(args.out_dir + "/report.json", run_report(cfg, result, metrics));
    write_timings(args.out_dir, std::chrono::duration<double>(Clock::now() - t0).count());
    write_manifest(args.out_dir, {"timings.json"});
    std::cout << "trained " << cfg.variant << ": final loss " << result.loss_curve.back()
              << ", val R@1 " << metrics.r_at_1 << "\n";
    return 0;
}

const std::vector<DialogInstance>& pick_split(const Dataset& data, const std::string& name) {
    if (name == "train") return data.train;
    if (name == "val") return data.val;
    if (name == "test") return data.test;
    throw ConfigError("unknown split: " + name);
}

int cmd_evaluate(const CommonArgs& args, const std::string& data_dir,
                 const std::string& checkpoint, const std::string& split,
                 const std::string& saliency_from) {
    const RunConfig cfg = load_config(args);
    ensure_out(args.out_dir);
    const auto t0 = Clock::now();
    Dataset data = load_dataset(data_dir);
    DialogModel model(cfg, data.vocab);
    model.params().load(checkpoint);
    const auto& instances = pick_split(data, split);
    auto probe = make_probe(cfg, data, saliency_from);
    const SaliencyCache cache = make_cache(probe.get(), cfg, data, instances, split.c_str());
    EvalMaps maps;
    const MetricVector metrics =
        evaluate_model(model, cfg, instances, cache, cfg.emit_maps ? &maps : nullptr);
    write_json(args.out_dir + "/metrics.json",
               nlohmann::json{{"split", split}, {"metrics", metrics_to_json(metrics)}});
    if (cfg.emit_maps) {
        for (size_t r = 0; r < maps.image_maps.size(); ++r) {
            char name[64];
            std::snprintf(name, sizeof(name), "%s/attention_round_%02zu.gmat",
                          args.out_dir.c_str(), r);
            write_gmat_file(name, maps.image_maps[r]);
        }
    }
    write_timings(args.out_dir, std::chrono::duration<double>(Clock::now() - t0).count());
    write_manifest(args.out_dir, {"timings.json"});
    std::cout << "split " << split << ": R@1 " << metrics.r_at_1 << " R@5 " << metrics.r_at_5
              << " R@10 " << metrics.r_at_10 << " MRR " << metrics.mrr << " Mean "
              << metrics.mean_rank << " NDCG " << metrics.ndcg << "\n";
    return 0;
}

void write_sweep_outputs(const std::string& out_dir, const std::string& axis,
                         const std::vector<SweepEntry>& entries) {
    std::ofstream csv(out_dir + "/sweep.csv");
    csv << "setting,R@1,R@5,R@10,MRR,Mean,NDCG\n";
    nlohmann::json rows = nlohmann::json::array();
    for (const SweepEntry& e : entries) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", e.label.c_str(),
                      e.metrics.r_at_1, e.metrics.r_at_5, e.metrics.r_at_10, e.metrics.mrr,
                      e.metrics.mean_rank, e.metrics.ndcg);
        csv << buf;
        rows.push_back({{"setting", e.label},
                        {"metrics", metrics_to_json(e.metrics)},
                        {"loss_curve", e.loss_curve}});
    }
    write_json(out_dir + "/sweep.json", nlohmann::json{{"axis", axis}, {"rows", std::move(rows)}});
}

int cmd_sweep(const CommonArgs& args, const std::string& data_dir, const std::string& axis) {
    const RunConfig cfg = load_config(args);
    ensure_out(args.out_dir);
    const auto t0 = Clock::now();
    Dataset data = load_dataset(data_dir);
    std::vector<SweepEntry> entries;
    if (axis == "fusion") {
        entries = sweep_fusion(cfg, data);
    } else if (axis == "granules") {
        std::vector<int64_t> ks{8, 32, 64, 128};
        ks.erase(std::remove_if(ks.begin(), ks.end(),
                                [&](int64_t k) { return k > cfg.grid_n * cfg.grid_n; }),
                 ks.end());
        if (ks.empty() || ks.back() != cfg.grid_n * cfg.grid_n) {
            ks.push_back(cfg.grid_n * cfg.grid_n);
        }
        entries = sweep_granules(cfg, data, ks);
    } else {
        throw ConfigError("sweep axis must be fusion or granules");
    }
    write_sweep_outputs(args.out_dir, axis, entries);
    write_json(args.out_dir + "/config.json", cfg.to_json());
    write_timings(args.out_dir, std::chrono::duration<double>(Clock::now() - t0).count());
    write_manifest(args.out_dir, {"timings.json"});
    std::cout << "sweep over " << axis << ": " << entries.size() << " settings\n";
    return 0;
}

int cmd_saliency(const CommonArgs& args, const std::string& data_dir,
                 const std::string& checkpoint, const std::string& split, int64_t instance) {
    const RunConfig cfg = load_config(args);
    ensure_out(args.out_dir);
    const auto t0 = Clock::now();
    Dataset data = load_dataset(data_dir);
    DialogModel model(cfg, data.vocab);
    model.params().load(checkpoint);
    const auto& instances = pick_split(data, split);
    if (instance < 0 || instance >= static_cast<int64_t>(instances.size())) {
        throw ConfigError("instance index out of range for split " + split);
    }
    const DialogInstance& inst = instances[static_cast<size_t>(instance)];

    nlohmann::json word_results = nlohmann::json::array();
    for (size_t r = 0; r < inst.rounds.size(); ++r) {
        // image importance: occlusion masks against the ground-truth class
        const uint64_t mask_seed = SplitMix64(cfg.seed ^ (0x5eed0000ULL + r)).next_u64();
        const MaskSet masks = sample_masks(cfg.grid_n, cfg.mask_keep_prob, cfg.mask_lowres,
                                           cfg.mask_count, mask_seed);
        auto scorer = [&](const Tensor& masked) {
            return model.gt_probability(inst, static_cast<int64_t>(r), nullptr, &masked);
        };
        const Tensor sal = rise_saliency(inst.image, scorer, masks);
        char name[128];
        std::snprintf(name, sizeof(name), "%s/saliency_round_%02zu", args.out_dir.c_str(), r);
        write_gmat_file(std::string(name) + ".gmat", sal);
        write_csv_grid(std::string(name) + ".csv", sal);

        // word importance: search all pairs of zero-masked question words,
        // keep the masking that best preserves the ground-truth probability,
        // and surface the attention map the model produced under it
        const RoundData& rd = inst.rounds[r];
        if (rd.question.size() >= 2) {
            const Tensor q_emb = model.question_embedding(inst, static_cast<int64_t>(r));
            auto token_scorer = [&](const Tensor& masked_tokens) -> std::pair<double, Tensor> {
                Tape tape;
                RoundOutput out =
                    model.forward_round(tape, inst, static_cast<int64_t>(r), nullptr, nullptr,
                                        &masked_tokens);
                const double p =
                    tape.val(out.scores.probs).data[static_cast<size_t>(rd.gt_index)];
                const Value map_val = out.text_map  ? *out.text_map
                                      : out.image_map ? *out.image_map
                                                      : out.scores.probs;
                return {p, tape.val(map_val)};
            };
            const MaskedQuestionResult res = pairwise_word_mask_search(q_emb, token_scorer);
            word_results.push_back({{"round", r},
                                    {"pair", {res.first, res.second}},
                                    {"gt_prob", res.gt_prob},
                                    {"attention_under_masking", res.attention_map.data}});
        }
    }
    write_json(args.out_dir + "/word_masking.json", word_results);
    write_timings(args.out_dir, std::chrono::duration<double>(Clock::now() - t0).count());
    write_manifest(args.out_dir, {"timings.json"});
    std::cout << "saliency maps for " << inst.rounds.size() << " rounds written to "
              << args.out_dir << "\n";
    return 0;
}

int cmd_compare_maps(const CommonArgs& args, const std::string& a_path,
                     const std::string& b_path) {
    ensure_out(args.out_dir);
    const Tensor a = read_gmat_file(a_path);
    const Tensor b = read_gmat_file(b_path);
    const Correlation corr = spearman_rc(a, b);
    const EmdResult emd = emd_2d(a, b);
    const nlohmann::json result{{"rank_correlation", corr.rho},
                                {"p_value", corr.p_value},
                                {"emd", emd.distance},
                                {"emd_exact", emd.exact}};
    write_json(args.out_dir + "/comparison.json", result);
    write_manifest(args.out_dir);
    std::cout << result.dump() << "\n";
    return 0;
}

int cmd_stats_cd(const CommonArgs& args, const std::string& ranks_path, double alpha) {
    ensure_out(args.out_dir);
    std::ifstream is(ranks_path);
    if (!is) throw IoError("cannot open ranks file: " + ranks_path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("ranks file is not valid JSON: " + std::string(e.what()));
    }
    const auto models = j.at("models").get<std::vector<std::string>>();
    const auto ranks = j.at("ranks").get<std::vector<std::vector<double>>>();
    if (models.size() != ranks.size()) throw ConfigError("models/ranks size mismatch");
    const NemenyiResult result = nemenyi_cd(ranks, alpha);

    nlohmann::json significant = nlohmann::json::array();
    for (auto [i, k] : result.significant) {
        significant.push_back({models[static_cast<size_t>(i)], models[static_cast<size_t>(k)]});
    }
    write_json(args.out_dir + "/cd.json",
               nlohmann::json{{"alpha", alpha},
                              {"avg_ranks", result.avg_ranks},
                              {"critical_difference", result.critical_difference},
                              {"significant_pairs", std::move(significant)}});

    std::ofstream csv(args.out_dir + "/cd_diagram.csv");
    csv << "model,avg_rank,cd\n";
    for (size_t i = 0; i < models.size(); ++i) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f\n", models[i].c_str(), result.avg_ranks[i],
                      result.critical_difference);
        csv << buf;
    }
    write_manifest(args.out_dir);
    std::cout << "CD = " << result.critical_difference << " over " << models.size()
              << " models\n";
    return 0;
}

int cmd_report(const CommonArgs& args, const std::string& run_dir) {
    ensure_out(args.out_dir);
    nlohmann::json report;
    if (std::ifstream is{run_dir + "/report.json"}) {
        is >> report;
    } else if (std::ifstream is2{run_dir + "/metrics.json"}) {
        is2 >> report;
    } else {
        throw IoError("no report.json or metrics.json under " + run_dir);
    }

    // metric table
    std::ofstream csv(args.out_dir + "/metrics.csv");
    csv << "R@1,R@5,R@10,MRR,Mean,NDCG\n";
    const auto& m = report.at("metrics");
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  m.at("R@1").get<double>(), m.at("R@5").get<double>(),
                  m.at("R@10").get<double>(), m.at("MRR").get<double>(),
                  m.at("Mean").get<double>(), m.at("NDCG").get<double>());
    csv << buf;

    // per-round attention heatmaps and a joint histogram of consecutive maps
    std::vector<Tensor> maps;
    for (int r = 0;; ++r) {
        char name[128];
        std::snprintf(name, sizeof(name), "%s/attention_round_%02d.gmat", run_dir.c_str(), r);
        if (!fs::exists(name)) break;
        maps.push_back(read_gmat_file(name));
        std::snprintf(name, sizeof(name), "%s/heatmap_round_%02d.csv", args.out_dir.c_str(), r);
        write_csv_grid(name, maps.back());
    }
    if (maps.size() >= 2) {
        // joint histogram of the first two rounds' attention values
        write_csv_grid(args.out_dir + "/joint_histogram.csv",
                       joint_histogram(maps[0], maps[1], 10));
    }
    write_manifest(args.out_dir);
    std::cout << "report artifacts written to " << args.out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"granular multimodal attention workbench"};
    app.require_subcommand(1);
    app.fallthrough();  // global --config/--out/--seed may follow the subcommand

    CommonArgs common;
    app.add_option("--config", common.config_path, "run config JSON")->check(CLI::ExistingFile);
    app.add_option("--out", common.out_dir, "output directory")->default_val("out");
    auto* seed_opt = app.add_option("--seed", common.seed, "override config seed");

    std::string data_dir, checkpoint, split = "val", axis = "fusion";
    std::string map_a, map_b, ranks_path, run_dir, saliency_from;
    int64_t instance = 0;
    double alpha = 0.05;

    auto* generate = app.add_subcommand("generate", "generate the synthetic dialog dataset");
    auto* train = app.add_subcommand("train", "train the configured variant");
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--saliency-from", saliency_from, "baseline checkpoint for rise saliency");
    auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint");
    evaluate->add_option("--data", data_dir, "dataset directory")->required();
    evaluate->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    evaluate->add_option("--split", split, "train|val|test");
    evaluate->add_option("--saliency-from", saliency_from, "baseline checkpoint for rise saliency");
    auto* sweep = app.add_subcommand("sweep", "train and evaluate along an axis");
    sweep->add_option("--data", data_dir, "dataset directory")->required();
    sweep->add_option("--axis", axis, "fusion|granules");
    auto* saliency = app.add_subcommand("saliency", "occlusion saliency for one dialog");
    saliency->add_option("--data", data_dir, "dataset directory")->required();
    saliency->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    saliency->add_option("--split", split, "train|val|test");
    saliency->add_option("--instance", instance, "dialog index within the split");
    auto* compare = app.add_subcommand("compare-maps", "rank correlation and EMD of two maps");
    compare->add_option("--first", map_a, "first GMAT map")->required();
    compare->add_option("--second", map_b, "second GMAT map")->required();
    auto* stats = app.add_subcommand("stats-cd", "Nemenyi critical-difference analysis");
    stats->add_option("--ranks", ranks_path, "JSON with models + rank matrix")->required();
    stats->add_option("--alpha", alpha, "0.05 or 0.10");
    auto* report = app.add_subcommand("report", "emit plot-ready CSVs for a finished run");
    report->add_option("--run", run_dir, "directory produced by train/evaluate")->required();

    CLI11_PARSE(app, argc, argv);
    common.seed_set = seed_opt->count() > 0;

    try {
        if (generate->parsed()) return cmd_generate(common);
        if (train->parsed()) return cmd_train(common, data_dir, saliency_from);
        if (evaluate->parsed()) {
            return cmd_evaluate(common, data_dir, checkpoint, split, saliency_from);
        }
        if (sweep->parsed()) return cmd_sweep(common, data_dir, axis);
        if (saliency->parsed()) return cmd_saliency(common, data_dir, checkpoint, split, instance);
        if (compare->parsed()) return cmd_compare_maps(common, map_a, map_b);
        if (stats->parsed()) return cmd_stats_cd(common, ranks_path, alpha);
        if (report->parsed()) return cmd_report(common, run_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
