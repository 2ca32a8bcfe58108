#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gma/attention.hpp"
#include "gma/config.hpp"
#include "gma/dataset.hpp"
#include "gma/tape.hpp"

namespace gma {

enum class Variant { San, McbAtt, Gia, Gta, GmaCat, GmaMcb, GmaMcbAtt, GmaPass };

Variant variant_from_string(const std::string& s);
const char* variant_name(Variant v);

// Owns named parameters with stable addresses. Initialization is keyed by
// (seed, parameter name), so a parameter shared by two model variants starts
// from identical values regardless of registration order.
class ParameterSet {
public:
    Parameter* create(const std::string& name, std::vector<int64_t> dims);
    void init_uniform(uint64_t seed);
    void zero_grad();
    void sgd_step(double lr);
    std::vector<const Parameter*> all() const;
    std::vector<Parameter*> all_mutable();
    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    std::vector<std::unique_ptr<Parameter>> params_;
};

struct RoundOutput {
    AnswerScores scores;
    Value context;
    std::optional<Value> image_map;  // [N*N]; absent for the text-only variant
    std::optional<Value> text_map;   // [T] over question words, when produced
};

// One dialog model per attention variant, sharing the encoder/scoring
// skeleton: embed + Elman-encode question, history rounds and options, run
// the variant's attention stack over the image cells, then rank options
// against concat(context, question).
class DialogModel {
public:
    DialogModel(const RunConfig& cfg, const Vocab& vocab);

    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }
    Variant variant() const { return variant_; }

    // saliency: [N x N] cell importances for granule selection, used by the
    // granular variants; nullptr means uniform. image_override replaces the
    // instance's image (occlusion probes); question_override replaces the
    // embedded question tokens with a raw [T x d] matrix (word masking).
    RoundOutput forward_round(Tape& tape, const DialogInstance& inst, int64_t round,
                              const Tensor* saliency = nullptr,
                              const Tensor* image_override = nullptr,
                              const Tensor* question_override = nullptr);

    // The question's embedding rows, as the word-masking search expects them.
    Tensor question_embedding(const DialogInstance& inst, int64_t round) const;

    Value round_loss(Tape& tape, const DialogInstance& inst, int64_t round,
                     const Tensor* saliency = nullptr);

    // Ground-truth probability for one round; the black-box scorer used by
    // the occlusion tooling.
    double gt_probability(const DialogInstance& inst, int64_t round, const Tensor* saliency,
                          const Tensor* image_override);

private:
    Value encode_sequence(Tape& tape, Value table, const std::vector<int64_t>& tokens,
                          Value* steps_out);

    RunConfig cfg_;
    Variant variant_;
    int64_t vocab_size_;
    ParameterSet params_;

    Parameter* embed_ = nullptr;
    RecurrentParams encoder_;
    Parameter* san_img_proj_ = nullptr;
    AttentionPrimitiveParams san_att_;
    McbAttentionParams mcb_att_;
    GiaParams gia_;
    GtaParams gta_;
    GmaParams gma_;
    SketchSpec sketch_img_, sketch_txt_;
    ScoreParams score_;
};

}  // namespace gma
