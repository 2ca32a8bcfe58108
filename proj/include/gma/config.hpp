#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

namespace gma {

// One JSON document drives every run. Each key has a default; unknown keys
// are a hard error so sweep typos fail loudly.
struct RunConfig {
    uint64_t seed = 42;

    // model geometry
    int64_t grid_n = 7;
    int64_t channels = 16;
    int64_t embed_dim = 32;
    int64_t attn_hidden = 32;
    int64_t sketch_dim = 512;
    int64_t granules = 16;
    int64_t san_iterations = 2;
    std::string variant = "gma_mcb_att";

    // optimization
    double learning_rate = 0.05;
    int64_t epochs = 24;
    int64_t batch_size = 4;

    // occlusion masks
    double mask_keep_prob = 0.5;
    int64_t mask_lowres = 4;
    int64_t mask_count = 2000;
    int64_t train_mask_count = 48;
    std::string saliency_source = "rise";  // uniform | rise

    // synthetic dialog task
    int64_t option_count = 20;
    int64_t rounds = 10;
    int64_t train_dialogs = 500;
    int64_t val_dialogs = 100;
    int64_t test_dialogs = 100;

    // wiring switches
    bool share_qh_attention = false;
    bool mcb_signed_sqrt_l2 = true;
    bool emit_maps = true;

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);
    nlohmann::json to_json() const;
    void validate() const;
};

}  // namespace gma
