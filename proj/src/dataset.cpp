#include "gma/dataset.hpp"

#include <filesystem>
#include <fstream>

#include "gma/rng.hpp"
#include "gma/tensor_io.hpp"

namespace fs = std::filesystem;

namespace gma {

Vocab Vocab::build(int64_t grid_n, int64_t channels) {
    Vocab v;
    v.grid_n = grid_n;
    v.n_shapes = channels / 3;
    v.n_counts = channels / 3;
    v.n_colors = channels - v.n_shapes - v.n_counts;

    auto add = [&](const std::string& w) {
        v.words.push_back(w);
        return static_cast<int64_t>(v.words.size()) - 1;
    };
    v.what = add("what");
    v.cell = add("cell");
    v.at = add("at");
    v.is = add("is");
    v.same = add("same");
    v.prev = add("previous");
    v.n_fillers = 6;
    v.filler0 = static_cast<int64_t>(v.words.size());
    for (int64_t i = 0; i < v.n_fillers; ++i) add("um" + std::to_string(i));
    v.color0 = static_cast<int64_t>(v.words.size());
    for (int64_t i = 0; i < v.n_colors; ++i) add("color" + std::to_string(i));
    v.shape0 = static_cast<int64_t>(v.words.size());
    for (int64_t i = 0; i < v.n_shapes; ++i) add("shape" + std::to_string(i));
    v.count0 = static_cast<int64_t>(v.words.size());
    for (int64_t i = 0; i < v.n_counts; ++i) add("count" + std::to_string(i));
    if (v.size() > 65535) throw ConfigError("vocabulary overflow: grid or channels too large");
    return v;
}

namespace {

struct CellAttrs {
    int64_t color, shape, count;
};

std::vector<int64_t> answer_tokens(const Vocab& v, const CellAttrs& a) {
    return {v.color0 + a.color, v.shape0 + a.shape, v.count0 + a.count};
}

DialogInstance generate_instance(const RunConfig& cfg, const Vocab& v, SplitMix64& rng) {
    const int64_t n = cfg.grid_n;
    const int64_t c = cfg.channels;

    // A sparse scene: a handful of objects on otherwise empty cells, each
    // with a distinct color so questions can reference objects by content.
    DialogInstance inst;
    inst.image = Tensor({n, n, c});

    // object count: mostly-unique colors with a couple of repeats, so scenes
    // stay content-addressable while "matches some object" alone cannot
    // isolate an answer
    int64_t target = std::min<int64_t>({8, n * n, 2 * v.n_colors});
    int64_t doubled = 0, unique = target;
    for (;; --target) {
        doubled = std::min<int64_t>({target / 4 > target - v.n_colors ? target / 4
                                      : target - v.n_colors,
                                     (target - 1) / 2});
        doubled = std::max<int64_t>(doubled, 0);
        unique = target - 2 * doubled;
        if (unique + doubled <= v.n_colors && unique >= 1) break;
        if (target <= 1) throw ConfigError("attribute space too small for any scene");
    }

    std::vector<int64_t> color_pool(static_cast<size_t>(v.n_colors));
    for (int64_t i = 0; i < v.n_colors; ++i) color_pool[static_cast<size_t>(i)] = i;
    std::vector<int64_t> cell_pool(static_cast<size_t>(n * n));
    for (int64_t i = 0; i < n * n; ++i) cell_pool[static_cast<size_t>(i)] = i;

    struct Object {
        int64_t cell;
        CellAttrs attrs;
        bool queryable;  // color appears exactly once in the scene
    };
    std::vector<Object> objects;
    auto place = [&](int64_t color, bool queryable) {
        const uint64_t pi = rng.next_below(static_cast<uint64_t>(cell_pool.size()));
        Object obj;
        obj.cell = cell_pool[pi];
        obj.attrs.color = color;
        obj.attrs.shape = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(v.n_shapes)));
        obj.attrs.count = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(v.n_counts)));
        obj.queryable = queryable;
        cell_pool.erase(cell_pool.begin() + static_cast<int64_t>(pi));
        double* f = inst.image.data.data() + obj.cell * c;
        f[obj.attrs.color] = 1.0;
        f[v.n_colors + obj.attrs.shape] = 1.0;
        f[v.n_colors + v.n_shapes + obj.attrs.count] = 1.0;
        objects.push_back(obj);
    };
    for (int64_t i = 0; i < unique + doubled; ++i) {
        const uint64_t ci = rng.next_below(static_cast<uint64_t>(color_pool.size()));
        const int64_t color = color_pool[ci];
        color_pool.erase(color_pool.begin() + static_cast<int64_t>(ci));
        const bool is_doubled = i >= unique;
        place(color, !is_doubled);
        if (is_doubled) place(color, false);
    }

    const int64_t triple_space = v.n_colors * v.n_shapes * v.n_counts;
    if (triple_space < cfg.option_count) {
        throw ConfigError("attribute space too small for " + std::to_string(cfg.option_count) +
                          " distinct options; increase channels");
    }

    std::vector<size_t> queryable;
    for (size_t i = 0; i < objects.size(); ++i) {
        if (objects[i].queryable) queryable.push_back(i);
    }
    // the conversation fixates on a few focal objects, like a dialog that
    // keeps returning to the same scene elements; answers therefore correlate
    // with what the history already mentioned
    std::vector<size_t> focus = queryable;
    while (focus.size() > 3) {
        focus.erase(focus.begin() + static_cast<int64_t>(rng.next_below(focus.size())));
    }

    // caption: describes one focal object; it forms the round-0 history
    const size_t cap_idx = focus[rng.next_below(focus.size())];
    const Object& cap_obj = objects[cap_idx];
    std::vector<int64_t> caption{v.cell, v.color0 + cap_obj.attrs.color, v.is};
    for (int64_t tok : answer_tokens(v, cap_obj.attrs)) caption.push_back(tok);

    std::vector<std::vector<int64_t>> history{caption};
    size_t prev_obj = cap_idx;  // a first-round coreference points at the caption
    for (int64_t round = 0; round < cfg.rounds; ++round) {
        RoundData rd;
        rd.history = history;
        // a recency cue on the latest exchange; "previous" stays resolvable
        // under order-invariant pooling and attention
        rd.history.back().insert(rd.history.back().begin(), v.prev);

        const bool coref = round > 0 && rng.bernoulli(0.5);
        size_t target;
        if (coref) {
            rd.question = {v.what, v.cell, v.same, v.prev};
            target = prev_obj;
        } else {
            target = focus[rng.next_below(focus.size())];
            rd.question = {v.what, v.cell, v.at, v.color0 + objects[target].attrs.color};
        }
        // sprinkle in chatter words; the informative tokens stay but the
        // encoder's final state gets noisier, which word-level attention can
        // undo and a plain recurrent readout cannot
        const int64_t fillers = 2 + static_cast<int64_t>(rng.next_below(3));
        for (int64_t f = 0; f < fillers; ++f) {
            const int64_t word =
                v.filler0 + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(v.n_fillers)));
            const size_t pos = rng.next_below(rd.question.size() + 1);
            rd.question.insert(rd.question.begin() + static_cast<int64_t>(pos), word);
        }
        const CellAttrs& gt = objects[target].attrs;
        rd.latent_row = objects[target].cell / n;
        rd.latent_col = objects[target].cell % n;
        rd.latent_attrs = {gt.color, gt.shape, gt.count};
        prev_obj = target;

        // options: the truth first, then the other objects' triples, then
        // near-misses of the truth, then random fill; all distinct
        auto triple_id = [&](const CellAttrs& a) {
            return (a.color * v.n_shapes + a.shape) * v.n_counts + a.count;
        };
        std::vector<char> used(static_cast<size_t>(triple_space), 0);
        std::vector<CellAttrs> opts;
        auto push = [&](const CellAttrs& a) {
            if (static_cast<int64_t>(opts.size()) >= cfg.option_count) return;
            char& flag = used[static_cast<size_t>(triple_id(a))];
            if (flag) return;
            flag = 1;
            opts.push_back(a);
        };
        push(gt);
        for (size_t o = 0; o < objects.size(); ++o) {
            if (o != target) push(objects[o].attrs);
        }
        for (int attr = 0; attr < 3; ++attr) {  // near-misses share two attributes
            CellAttrs a = gt;
            int64_t& slot = attr == 0 ? a.color : attr == 1 ? a.shape : a.count;
            const int64_t span = attr == 0 ? v.n_colors : attr == 1 ? v.n_shapes : v.n_counts;
            if (span < 2) continue;
            slot = (slot + 1 + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(span - 1)))) % span;
            push(a);
        }
        while (static_cast<int64_t>(opts.size()) < cfg.option_count) {
            const int64_t pick =
                static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(triple_space)));
            push({pick / (v.n_shapes * v.n_counts), (pick / v.n_counts) % v.n_shapes,
                  pick % v.n_counts});
        }
        // shuffle so the ground truth lands anywhere
        for (int64_t i = cfg.option_count - 1; i > 0; --i) {
            const int64_t j = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(i + 1)));
            std::swap(opts[static_cast<size_t>(i)], opts[static_cast<size_t>(j)]);
        }
        for (int64_t i = 0; i < cfg.option_count; ++i) {
            const CellAttrs& o = opts[static_cast<size_t>(i)];
            rd.options.push_back(answer_tokens(v, o));
            const double overlap = static_cast<double>((o.color == gt.color) + (o.shape == gt.shape) +
                                                       (o.count == gt.count));
            rd.relevance.push_back(overlap / 3.0);
            if (o.color == gt.color && o.shape == gt.shape && o.count == gt.count) rd.gt_index = i;
        }

        std::vector<int64_t> qa = rd.question;
        for (int64_t tok : answer_tokens(v, gt)) qa.push_back(tok);
        history.push_back(std::move(qa));
        inst.rounds.push_back(std::move(rd));
    }
    return inst;
}

std::vector<DialogInstance> generate_split(const RunConfig& cfg, const Vocab& v, int64_t count,
                                           const char* tag) {
    SplitMix64 rng(SplitMix64(cfg.seed ^ fnv1a64(tag)).next_u64());
    std::vector<DialogInstance> out;
    out.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) out.push_back(generate_instance(cfg, v, rng));
    return out;
}

}  // namespace

Dataset generate_dataset(const RunConfig& cfg) {
    Dataset data;
    data.vocab = Vocab::build(cfg.grid_n, cfg.channels);
    data.train = generate_split(cfg, data.vocab, cfg.train_dialogs, "train");
    data.val = generate_split(cfg, data.vocab, cfg.val_dialogs, "val");
    data.test = generate_split(cfg, data.vocab, cfg.test_dialogs, "test");
    return data;
}

namespace {

nlohmann::json instance_to_json(const DialogInstance& inst) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const RoundData& rd : inst.rounds) {
        rounds.push_back({{"question_tokens", rd.question},
                          {"history_tokens", rd.history},
                          {"options", rd.options},
                          {"gt_index", rd.gt_index},
                          {"relevance", rd.relevance},
                          {"latent", {{"row", rd.latent_row},
                                      {"col", rd.latent_col},
                                      {"attrs", rd.latent_attrs}}}});
    }
    return {{"image", inst.image_path}, {"rounds", std::move(rounds)}};
}

DialogInstance instance_from_json(const nlohmann::json& j, const std::string& dir) {
    DialogInstance inst;
    inst.image_path = j.at("image").get<std::string>();
    inst.image = read_gmat_file(dir + "/" + inst.image_path);
    for (const auto& jr : j.at("rounds")) {
        RoundData rd;
        rd.question = jr.at("question_tokens").get<std::vector<int64_t>>();
        rd.history = jr.at("history_tokens").get<std::vector<std::vector<int64_t>>>();
        rd.options = jr.at("options").get<std::vector<std::vector<int64_t>>>();
        rd.gt_index = jr.at("gt_index").get<int64_t>();
        rd.relevance = jr.at("relevance").get<std::vector<double>>();
        const auto& latent = jr.at("latent");
        rd.latent_row = latent.at("row").get<int64_t>();
        rd.latent_col = latent.at("col").get<int64_t>();
        const auto attrs = latent.at("attrs").get<std::vector<int64_t>>();
        rd.latent_attrs = {attrs.at(0), attrs.at(1), attrs.at(2)};
        inst.rounds.push_back(std::move(rd));
    }
    return inst;
}

void write_split(std::vector<DialogInstance>& split, const std::string& dir, const char* tag) {
    std::ofstream os(dir + "/" + tag + ".jsonl");
    if (!os) throw IoError("cannot write split file in " + dir);
    char name[64];
    for (size_t i = 0; i < split.size(); ++i) {
        std::snprintf(name, sizeof(name), "images/%s_%05zu.gmat", tag, i);
        split[i].image_path = name;
        write_gmat_file(dir + "/" + split[i].image_path, split[i].image);
        os << instance_to_json(split[i]).dump() << "\n";
    }
    if (!os) throw IoError("write failed for split " + std::string(tag));
}

std::vector<DialogInstance> load_split(const std::string& dir, const char* tag) {
    std::ifstream is(dir + "/" + tag + ".jsonl");
    if (!is) throw IoError("cannot open split file: " + dir + "/" + tag + ".jsonl");
    std::vector<DialogInstance> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(instance_from_json(nlohmann::json::parse(line), dir));
        } catch (const nlohmann::json::exception& e) {
            throw IoError("malformed dataset line in " + std::string(tag) + ".jsonl: " + e.what());
        }
    }
    return out;
}

}  // namespace

void write_dataset(const Dataset& data, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir + "/images", ec);
    if (ec) throw IoError("cannot create dataset directory: " + dir);

    nlohmann::json vocab{{"grid_n", data.vocab.grid_n},
                         {"n_colors", data.vocab.n_colors},
                         {"n_shapes", data.vocab.n_shapes},
                         {"n_counts", data.vocab.n_counts},
                         {"words", data.vocab.words}};
    std::ofstream vs(dir + "/vocab.json");
    if (!vs) throw IoError("cannot write vocab.json in " + dir);
    vs << vocab.dump(2) << "\n";

    // image paths are assigned while writing, so work on a copy
    Dataset copy = data;
    write_split(copy.train, dir, "train");
    write_split(copy.val, dir, "val");
    write_split(copy.test, dir, "test");
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream vs(dir + "/vocab.json");
    if (!vs) throw IoError("cannot open vocab.json in " + dir);
    nlohmann::json vocab;
    try {
        vs >> vocab;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed vocab.json: " + std::string(e.what()));
    }
    Dataset data;
    const int64_t grid_n = vocab.at("grid_n").get<int64_t>();
    const int64_t channels = vocab.at("n_colors").get<int64_t>() +
                             vocab.at("n_shapes").get<int64_t>() +
                             vocab.at("n_counts").get<int64_t>();
    data.vocab = Vocab::build(grid_n, channels);
    if (data.vocab.words != vocab.at("words").get<std::vector<std::string>>()) {
        throw IoError("vocab.json does not match this build's token layout");
    }
    data.train = load_split(dir, "train");
    data.val = load_split(dir, "val");
    data.test = load_split(dir, "test");
    return data;
}

}  // namespace gma
