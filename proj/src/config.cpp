#include "gma/config.hpp"

#include <fstream>
#include <set>

#include "gma/errors.hpp"

namespace gma {

namespace {

const std::set<std::string> kVariants{"san",     "mcb_att", "gia",         "gta",
                                      "gma_cat", "gma_mcb", "gma_mcb_att", "gma_pass"};

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig cfg;
    const nlohmann::json defaults = cfg.to_json();
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!defaults.contains(key)) {
            throw ConfigError("unknown config key: \"" + key + "\"");
        }
    }
    try {
        read_key(j, "seed", cfg.seed);
        read_key(j, "grid_n", cfg.grid_n);
        read_key(j, "channels", cfg.channels);
        read_key(j, "embed_dim", cfg.embed_dim);
        read_key(j, "attn_hidden", cfg.attn_hidden);
        read_key(j, "sketch_dim", cfg.sketch_dim);
        read_key(j, "granules", cfg.granules);
        read_key(j, "san_iterations", cfg.san_iterations);
        read_key(j, "variant", cfg.variant);
        read_key(j, "learning_rate", cfg.learning_rate);
        read_key(j, "epochs", cfg.epochs);
        read_key(j, "batch_size", cfg.batch_size);
        read_key(j, "mask_keep_prob", cfg.mask_keep_prob);
        read_key(j, "mask_lowres", cfg.mask_lowres);
        read_key(j, "mask_count", cfg.mask_count);
        read_key(j, "train_mask_count", cfg.train_mask_count);
        read_key(j, "saliency_source", cfg.saliency_source);
        read_key(j, "option_count", cfg.option_count);
        read_key(j, "rounds", cfg.rounds);
        read_key(j, "train_dialogs", cfg.train_dialogs);
        read_key(j, "val_dialogs", cfg.val_dialogs);
        read_key(j, "test_dialogs", cfg.test_dialogs);
        read_key(j, "share_qh_attention", cfg.share_qh_attention);
        read_key(j, "mcb_signed_sqrt_l2", cfg.mcb_signed_sqrt_l2);
        read_key(j, "emit_maps", cfg.emit_maps);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config value: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
    return nlohmann::json{{"seed", seed},
                          {"grid_n", grid_n},
                          {"channels", channels},
                          {"embed_dim", embed_dim},
                          {"attn_hidden", attn_hidden},
                          {"sketch_dim", sketch_dim},
                          {"granules", granules},
                          {"san_iterations", san_iterations},
                          {"variant", variant},
                          {"learning_rate", learning_rate},
                          {"epochs", epochs},
                          {"batch_size", batch_size},
                          {"mask_keep_prob", mask_keep_prob},
                          {"mask_lowres", mask_lowres},
                          {"mask_count", mask_count},
                          {"train_mask_count", train_mask_count},
                          {"saliency_source", saliency_source},
                          {"option_count", option_count},
                          {"rounds", rounds},
                          {"train_dialogs", train_dialogs},
                          {"val_dialogs", val_dialogs},
                          {"test_dialogs", test_dialogs},
                          {"share_qh_attention", share_qh_attention},
                          {"mcb_signed_sqrt_l2", mcb_signed_sqrt_l2},
                          {"emit_maps", emit_maps}};
}

void RunConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError("config: " + msg);
    };
    require(grid_n >= 1, "grid_n must be positive");
    require(channels >= 6, "channels must be at least 6 to carry the attribute one-hots");
    require(embed_dim >= 1 && attn_hidden >= 1 && sketch_dim >= 1, "dims must be positive");
    require(granules >= 1 && granules <= grid_n * grid_n,
            "granules must lie in [1, grid_n^2] (got " + std::to_string(granules) + ")");
    require(san_iterations >= 1, "san_iterations must be positive");
    require(kVariants.count(variant) > 0, "unknown variant \"" + variant + "\"");
    require(learning_rate >= 0.0, "learning_rate must be non-negative");
    require(epochs >= 1 && batch_size >= 1, "epochs and batch_size must be positive");
    require(mask_keep_prob > 0.0 && mask_keep_prob < 1.0, "mask_keep_prob must be in (0,1)");
    require(mask_lowres >= 1 && mask_lowres <= grid_n, "mask_lowres must be in [1, grid_n]");
    require(mask_count >= 1 && train_mask_count >= 1, "mask counts must be positive");
    require(saliency_source == "uniform" || saliency_source == "rise",
            "saliency_source must be uniform or rise");
    require(option_count >= 2, "option_count must be at least 2");
    require(rounds >= 1, "rounds must be positive");
    require(train_dialogs >= 1 && val_dialogs >= 1 && test_dialogs >= 1,
            "all split sizes must be positive");
}

}  // namespace gma
