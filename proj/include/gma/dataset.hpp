#pragma once

#include <array>
#include <string>
#include <vector>

#include "gma/config.hpp"
#include "gma/tensor.hpp"

namespace gma {

// Token vocabulary for the templated grid-attribute dialog task. Cell
// attributes (color / shape / count) map onto the image's channel one-hots.
struct Vocab {
    std::vector<std::string> words;
    int64_t what = 0, cell = 0, at = 0, is = 0, same = 0, prev = 0;
    int64_t filler0 = 0, n_fillers = 0;  // uninformative chatter words
    int64_t color0 = 0, shape0 = 0, count0 = 0;
    int64_t n_colors = 0, n_shapes = 0, n_counts = 0;
    int64_t grid_n = 0;

    int64_t size() const { return static_cast<int64_t>(words.size()); }
    static Vocab build(int64_t grid_n, int64_t channels);
};

struct RoundData {
    std::vector<int64_t> question;
    std::vector<std::vector<int64_t>> history;  // caption, then prior Q+A rounds
    std::vector<std::vector<int64_t>> options;
    int64_t gt_index = 0;
    std::vector<double> relevance;
    // generator latent, for diagnostics and the cheat oracle only
    int64_t latent_row = 0, latent_col = 0;
    std::array<int64_t, 3> latent_attrs{0, 0, 0};
};

struct DialogInstance {
    Tensor image;  // [N x N x C]
    std::string image_path;
    std::vector<RoundData> rounds;
};

struct Dataset {
    Vocab vocab;
    std::vector<DialogInstance> train, val, test;
};

// Deterministic from cfg.seed. Scenes are sparse: a few objects with
// distinct colors sit on an otherwise empty grid, each carrying one-hot
// color/shape/count channels. Questions reference an object by its color or
// refer back to the previous round's object, so history is required for
// about half the rounds. Exactly one option matches all three attributes;
// relevance grades the others by attribute overlap.
Dataset generate_dataset(const RunConfig& cfg);

// JSON-lines persistence: <dir>/{train,val,test}.jsonl, images as GMAT files
// under <dir>/images/, and the vocabulary in <dir>/vocab.json.
void write_dataset(const Dataset& data, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace gma
