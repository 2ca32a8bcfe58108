#include "gma/model.hpp"

#include <cmath>

#include "gma/rng.hpp"
#include "gma/tensor_io.hpp"

namespace gma {

Variant variant_from_string(const std::string& s) {
    if (s == "san") return Variant::San;
    if (s == "mcb_att") return Variant::McbAtt;
    if (s == "gia") return Variant::Gia;
    if (s == "gta") return Variant::Gta;
    if (s == "gma_cat") return Variant::GmaCat;
    if (s == "gma_mcb") return Variant::GmaMcb;
    if (s == "gma_mcb_att") return Variant::GmaMcbAtt;
    if (s == "gma_pass") return Variant::GmaPass;
    throw ConfigError("unknown variant: " + s);
}

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::San: return "san";
        case Variant::McbAtt: return "mcb_att";
        case Variant::Gia: return "gia";
        case Variant::Gta: return "gta";
        case Variant::GmaCat: return "gma_cat";
        case Variant::GmaMcb: return "gma_mcb";
        case Variant::GmaMcbAtt: return "gma_mcb_att";
        case Variant::GmaPass: return "gma_pass";
    }
    return "?";
}

Parameter* ParameterSet::create(const std::string& name, std::vector<int64_t> dims) {
    for (const auto& p : params_) {
        if (p->name == name) throw ContractError("duplicate parameter name: " + name);
    }
    params_.push_back(std::make_unique<Parameter>(name, std::move(dims)));
    return params_.back().get();
}

void ParameterSet::init_uniform(uint64_t seed) {
    for (auto& p : params_) {
        SplitMix64 rng(SplitMix64(seed ^ fnv1a64(p->name)).next_u64());
        const auto& dims = p->value.shape;
        const double fan_in = dims.empty() ? 1.0 : static_cast<double>(dims.front());
        const double fan_out = dims.empty() ? 1.0 : static_cast<double>(dims.back());
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& v : p->value.data) v = rng.uniform(-a, a);
        p->zero_grad();
    }
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) p->zero_grad();
}

void ParameterSet::sgd_step(double lr) {
    for (auto& p : params_) {
        for (size_t i = 0; i < p->value.data.size(); ++i) {
            p->value.data[i] -= lr * p->grad.data[i];
        }
        require_finite(p->value, p->name.c_str());
    }
}

std::vector<const Parameter*> ParameterSet::all() const {
    std::vector<const Parameter*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
}

std::vector<Parameter*> ParameterSet::all_mutable() {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
}

void ParameterSet::save(const std::string& path) const { write_checkpoint(path, all()); }

void ParameterSet::load(const std::string& path) {
    auto records = read_checkpoint(path);
    if (records.size() != params_.size()) {
        throw IoError("checkpoint holds " + std::to_string(records.size()) + " tensors, model has " +
                      std::to_string(params_.size()));
    }
    for (size_t i = 0; i < params_.size(); ++i) {
        if (records[i].first != params_[i]->name) {
            throw IoError("checkpoint mismatch: expected \"" + params_[i]->name + "\", found \"" +
                          records[i].first + "\"");
        }
        if (records[i].second.shape != params_[i]->value.shape) {
            throw IoError("checkpoint shape mismatch for \"" + params_[i]->name + "\": " +
                          shape_str(records[i].second.shape) + " vs " +
                          shape_str(params_[i]->value.shape));
        }
        params_[i]->value = std::move(records[i].second);
        params_[i]->zero_grad();
    }
}

namespace {

AttentionPrimitiveParams make_primitive(ParameterSet& ps, const std::string& tag, int64_t c,
                                        int64_t dq, int64_t h) {
    return {ps.create(tag + ".w_feat", {c, h}), ps.create(tag + ".w_query", {dq, h}),
            ps.create(tag + ".b_hidden", {h}), ps.create(tag + ".w_score", {h}),
            ps.create(tag + ".b_score", {})};
}

GatedAttentionParams make_gated(ParameterSet& ps, const std::string& tag, int64_t c, int64_t dq,
                                int64_t h) {
    return {ps.create(tag + ".w_feat", {c, h}),   ps.create(tag + ".b_feat", {h}),
            ps.create(tag + ".w_query", {dq, h}), ps.create(tag + ".w_hidden", {h, h}),
            ps.create(tag + ".b_hidden", {h}),    ps.create(tag + ".w_score", {h})};
}

WordAttentionParams make_word(ParameterSet& ps, const std::string& tag, int64_t cg, int64_t d,
                              int64_t h) {
    return {ps.create(tag + ".w_img", {cg, h}),  ps.create(tag + ".b_img", {h}),
            ps.create(tag + ".w_word", {d, h}),  ps.create(tag + ".b_word", {h}),
            ps.create(tag + ".w_score", {h}),    ps.create(tag + ".b_score", {})};
}

bool uses_gia(Variant v) {
    return v == Variant::Gia || v == Variant::GmaCat || v == Variant::GmaMcb ||
           v == Variant::GmaMcbAtt || v == Variant::GmaPass;
}

bool uses_gta(Variant v) {
    return v == Variant::Gta || v == Variant::GmaCat || v == Variant::GmaMcb ||
           v == Variant::GmaMcbAtt || v == Variant::GmaPass;
}

bool uses_history(Variant v) { return uses_gia(v) || uses_gta(v); }

int64_t context_dim(Variant v, const RunConfig& cfg) {
    switch (v) {
        case Variant::San: return cfg.embed_dim;
        case Variant::McbAtt: return cfg.channels;
        case Variant::Gta: return cfg.embed_dim;
        default: return cfg.channels;  // gia and all gma variants attend cells
    }
}

}  // namespace

DialogModel::DialogModel(const RunConfig& cfg, const Vocab& vocab)
    : cfg_(cfg), variant_(variant_from_string(cfg.variant)), vocab_size_(vocab.size()) {
    const int64_t d = cfg.embed_dim;
    const int64_t c = cfg.channels;
    const int64_t h = cfg.attn_hidden;

    embed_ = params_.create("embed.table", {vocab_size_, d});
    encoder_ = {params_.create("encoder.w_in", {d, d}), params_.create("encoder.w_rec", {d, d}),
                params_.create("encoder.bias", {d})};

    if (variant_ == Variant::San) {
        san_img_proj_ = params_.create("san.img_proj", {c, d});
        san_att_ = make_primitive(params_, "san.att", d, d, h);
    }
    if (variant_ == Variant::McbAtt) {
        mcb_att_ = {make_gated(params_, "mcb_att.gate", c, d, h),
                    params_.create("mcb_att.w_out", {d, c})};
    }
    if (uses_gia(variant_)) {
        gia_.q_path = make_gated(params_, "gia.q", c, d, h);
        gia_.h_path = cfg.share_qh_attention ? gia_.q_path : make_gated(params_, "gia.h", c, d, h);
        gia_.combine = make_primitive(params_, "gia.combine", c, 2 * c, h);
    }
    if (uses_gta(variant_)) {
        gta_.q_words = make_word(params_, "gta.q", c, d, h);
        gta_.h_words =
            cfg.share_qh_attention ? gta_.q_words : make_word(params_, "gta.h", c, d, h);
        gta_.combine = make_primitive(params_, "gta.combine", d, 2 * d, h);
    }
    if (variant_ == Variant::GmaCat || variant_ == Variant::GmaMcb ||
        variant_ == Variant::GmaMcbAtt || variant_ == Variant::GmaPass) {
        sketch_img_ = SketchSpec::make(c, cfg.sketch_dim, SplitMix64(cfg.seed ^ 0x6d63625fULL).next_u64());
        sketch_txt_ = SketchSpec::make(d, cfg.sketch_dim, SplitMix64(cfg.seed ^ 0x6d63627fULL).next_u64());
        gma_.sketch_i = &sketch_img_;
        gma_.sketch_t = &sketch_txt_;
        gma_.mcb_signed_sqrt_l2 = cfg.mcb_signed_sqrt_l2;
        if (variant_ == Variant::GmaMcbAtt) {
            gma_.gate = make_gated(params_, "gma.gate", c, cfg.sketch_dim, h);
        } else {
            const int64_t joint_dim =
                variant_ == Variant::GmaCat ? c + d : cfg.sketch_dim;
            gma_.w_ctx = params_.create("gma.w_ctx", {joint_dim});
            gma_.w_cell = params_.create("gma.w_cell", {c});
            gma_.b_score = params_.create("gma.b_score", {});
        }
    }
    score_ = {params_.create("score.w_proj", {context_dim(variant_, cfg) + d, d})};
    params_.init_uniform(cfg.seed);
}

Value DialogModel::encode_sequence(Tape& tape, Value table, const std::vector<int64_t>& tokens,
                                   Value* steps_out) {
    if (tokens.empty()) throw ContractError("encode_sequence: empty token sequence");
    Value rows = gather_rows(table, tokens);
    EncodeResult enc = recurrent_encode(tape, rows, encoder_);
    if (steps_out) *steps_out = enc.per_step;
    return enc.final;
}

RoundOutput DialogModel::forward_round(Tape& tape, const DialogInstance& inst, int64_t round,
                                       const Tensor* saliency, const Tensor* image_override,
                                       const Tensor* question_override) {
    if (round < 0 || round >= static_cast<int64_t>(inst.rounds.size())) {
        throw ContractError("forward_round: round index out of range");
    }
    const RoundData& rd = inst.rounds[static_cast<size_t>(round)];
    const Tensor& image = image_override ? *image_override : inst.image;
    const int64_t n = image.shape[0];
    const int64_t m = n * n;

    Value table = tape.param(*embed_);

    Value q_steps{};
    Value q_final{};
    if (question_override) {
        EncodeResult enc = recurrent_encode(tape, tape.leaf(*question_override), encoder_);
        q_steps = enc.per_step;
        q_final = enc.final;
    } else {
        q_final = encode_sequence(tape, table, rd.question, &q_steps);
    }

    // per-option encodings, one row each
    std::vector<Value> option_finals;
    option_finals.reserve(rd.options.size());
    for (const auto& opt : rd.options) {
        option_finals.push_back(encode_sequence(tape, table, opt, nullptr));
    }
    Value options_enc = stack_rows(option_finals);

    Value cells = grid_cells(tape.leaf(image));

    // history: every round has at least the caption
    Value hist_rounds{};
    Value hist_mean{};
    if (uses_history(variant_)) {
        std::vector<Value> finals;
        finals.reserve(rd.history.size());
        for (const auto& seq : rd.history) {
            finals.push_back(encode_sequence(tape, table, seq, nullptr));
        }
        hist_rounds = stack_rows(finals);
        Value w = tape.leaf(
            Tensor::full({static_cast<int64_t>(finals.size())}, 1.0 / static_cast<double>(finals.size())));
        hist_mean = matmul(w, hist_rounds);
    }

    const Tensor uniform_sal = Tensor::full({n, n}, 1.0 / static_cast<double>(m));
    const Tensor& sal = saliency ? *saliency : uniform_sal;

    RoundOutput out;
    switch (variant_) {
        case Variant::San: {
            Value cells_d = matmul(cells, tape.param(*san_img_proj_));
            SanResult r = san_forward(cells_d, q_final, cfg_.san_iterations, san_att_);
            out.context = r.context;
            out.image_map = r.map;
            break;
        }
        case Variant::McbAtt: {
            McbAttentionResult r = mcb_attention(cells, q_final, mcb_att_);
            out.context = r.f_out;
            out.image_map = r.map;
            break;
        }
        case Variant::Gta: {
            Value w = tape.leaf(Tensor::full({m}, 1.0 / static_cast<double>(m)));
            Value g_pooled = matmul(w, cells);
            GtaResult r = gta_forward(g_pooled, q_steps, hist_rounds, gta_);
            out.context = r.attended;
            out.text_map = r.map;
            break;
        }
        case Variant::Gia:
        case Variant::GmaPass: {
            GiaResult r = gia_forward(cells, sal, cfg_.granules, q_final, hist_mean, gia_);
            out.context = r.attended;
            out.image_map = r.map;
            break;
        }
        case Variant::GmaCat:
        case Variant::GmaMcb:
        case Variant::GmaMcbAtt: {
            GiaResult gi = gia_forward(cells, sal, cfg_.granules, q_final, hist_mean, gia_);
            Value w = tape.leaf(Tensor::full({m}, 1.0 / static_cast<double>(m)));
            Value g_pooled = matmul(w, cells);
            GtaResult gt = gta_forward(g_pooled, q_steps, hist_rounds, gta_);
            const Fusion fusion = variant_ == Variant::GmaCat  ? Fusion::Concat
                                  : variant_ == Variant::GmaMcb ? Fusion::Mcb
                                                                : Fusion::McbAtt;
            // the fused attention re-weights the same granular features the
            // image branch selected; its map embeds into the full grid
            GmaResult r = gma_forward(gi.attended, gt.attended, gi.granule_features, fusion, gma_);
            out.context = r.attended;
            out.image_map = embed_indices(r.map, gi.granules, m);
            out.text_map = gt.map;
            break;
        }
    }

    out.scores = score_answers(out.context, options_enc, q_final, score_);
    return out;
}

Value DialogModel::round_loss(Tape& tape, const DialogInstance& inst, int64_t round,
                              const Tensor* saliency) {
    RoundOutput out = forward_round(tape, inst, round, saliency);
    return cross_entropy_loss(out.scores, inst.rounds[static_cast<size_t>(round)].gt_index);
}

double DialogModel::gt_probability(const DialogInstance& inst, int64_t round,
                                   const Tensor* saliency, const Tensor* image_override) {
    Tape tape;
    RoundOutput out = forward_round(tape, inst, round, saliency, image_override);
    const Tensor& probs = tape.val(out.scores.probs);
    return probs.data[static_cast<size_t>(inst.rounds[static_cast<size_t>(round)].gt_index)];
}

Tensor DialogModel::question_embedding(const DialogInstance& inst, int64_t round) const {
    const auto& tokens = inst.rounds[static_cast<size_t>(round)].question;
    const int64_t d = cfg_.embed_dim;
    Tensor out({static_cast<int64_t>(tokens.size()), d});
    for (size_t t = 0; t < tokens.size(); ++t) {
        const double* src = embed_->value.data.data() + tokens[t] * d;
        std::copy_n(src, d, out.data.data() + static_cast<int64_t>(t) * d);
    }
    return out;
}

}  // namespace gma
