#pragma once

#include <memory>
#include <string>

#include "seqlab/decoders.hpp"
#include "seqlab/encoder.hpp"

namespace seqlab {

enum class Task { Label, Transduce };
enum class Head { Indp, Rnn, Crf };
enum class Objective { Ml, Ac, AcMl, Reinforce, ReinforceBaseline, SelfCritical,
                       ScheduledSampling };

std::string to_string(Task t);
std::string to_string(Head h);
std::string to_string(Objective o);
Task task_from_string(const std::string& s);
Head head_from_string(const std::string& s);
Objective objective_from_string(const std::string& s);

struct ModelConfig {
    Task task = Task::Label;
    Head head = Head::Rnn;
    EncoderConfig encoder;
    std::size_t n_tags = 0;       // output vocabulary size (includes reserved ids)
    std::size_t out_emb_dim = 32;
    std::size_t dec_units = 256;
    std::size_t max_decode = 64;  // transduction decode cap and CRF pad length
};

// Encoder plus exactly one output head.
class Model {
public:
    Model() = default;
    Model(const ModelConfig& config, Rng& rng);

    const ModelConfig& config() const { return config_; }
    std::size_t context_dim() const { return encoder.output_dim(); }

    // All trainable actor parameters, in a fixed order.
    ParamSet params();

    // log p(Y | X); the RNN head teacher-forces the gold history. In
    // transduction mode INDP and CRF score the PAD-aligned pair.
    NodeId sequence_log_prob(Tape& t, const LabeledExample& ex, bool train, Rng* dropout_rng);

    // PAD-aligned copy of an example for the INDP/CRF transduction trick.
    LabeledExample padded_for_crf(const LabeledExample& ex) const;

    Encoder encoder;
    std::unique_ptr<IndpHead> indp;
    std::unique_ptr<RnnDecoder> rnn;
    std::unique_ptr<CrfHead> crf;

private:
    ModelConfig config_;
};

}  // namespace seqlab
