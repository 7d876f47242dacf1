#include "seqlab/model.hpp"

#include <stdexcept>

namespace seqlab {

std::string to_string(Task t) { return t == Task::Label ? "label" : "transduce"; }

std::string to_string(Head h) {
    switch (h) {
        case Head::Indp: return "indp";
        case Head::Rnn: return "rnn";
        case Head::Crf: return "crf";
    }
    return "?";
}

std::string to_string(Objective o) {
    switch (o) {
        case Objective::Ml: return "ml";
        case Objective::Ac: return "ac";
        case Objective::AcMl: return "ac+ml";
        case Objective::Reinforce: return "reinforce";
        case Objective::ReinforceBaseline: return "reinforce-baseline";
        case Objective::SelfCritical: return "self-critical";
        case Objective::ScheduledSampling: return "scheduled-sampling";
    }
    return "?";
}

Task task_from_string(const std::string& s) {
    if (s == "label") return Task::Label;
    if (s == "transduce") return Task::Transduce;
    throw std::invalid_argument("unknown task: " + s);
}

Head head_from_string(const std::string& s) {
    if (s == "indp") return Head::Indp;
    if (s == "rnn") return Head::Rnn;
    if (s == "crf") return Head::Crf;
    throw std::invalid_argument("unknown head: " + s);
}

Objective objective_from_string(const std::string& s) {
    if (s == "ml") return Objective::Ml;
    if (s == "ac") return Objective::Ac;
    if (s == "ac+ml") return Objective::AcMl;
    if (s == "reinforce") return Objective::Reinforce;
    if (s == "reinforce-baseline") return Objective::ReinforceBaseline;
    if (s == "self-critical") return Objective::SelfCritical;
    if (s == "scheduled-sampling") return Objective::ScheduledSampling;
    throw std::invalid_argument("unknown objective: " + s);
}

Model::Model(const ModelConfig& config, Rng& rng) : config_(config) {
    encoder = Encoder(config.encoder, rng);
    switch (config.head) {
        case Head::Indp:
            indp = std::make_unique<IndpHead>(encoder.output_dim(), config.n_tags, rng);
            break;
        case Head::Rnn:
            rnn = std::make_unique<RnnDecoder>(config.n_tags, config.out_emb_dim,
                                               config.dec_units, encoder.output_dim(),
                                               config.task == Task::Transduce, rng);
            break;
        case Head::Crf:
            crf = std::make_unique<CrfHead>(encoder.output_dim(), config.n_tags, rng);
            break;
    }
}

ParamSet Model::params() {
    ParamSet set;
    encoder.collect(set);
    if (indp) indp->collect(set);
    if (rnn) rnn->collect(set);
    if (crf) crf->collect(set);
    return set;
}

LabeledExample Model::padded_for_crf(const LabeledExample& ex) const {
    PaddedPair padded = crf_pad_transduce(ex.src, ex.tags, config_.max_decode, Vocabulary::kPad);
    LabeledExample out;
    out.src = std::move(padded.src);
    out.tags = std::move(padded.tgt);
    out.surfaces.resize(out.src.size());
    out.caps.resize(out.src.size(), {0.0, 0.0, 0.0, 0.0});
    out.chars.resize(out.src.size());
    return out;
}

NodeId Model::sequence_log_prob(Tape& t, const LabeledExample& ex, bool train,
                                Rng* dropout_rng) {
    const bool pad_align = config_.task == Task::Transduce && config_.head != Head::Rnn;
    const LabeledExample padded = pad_align ? padded_for_crf(ex) : LabeledExample{};
    const LabeledExample& use = pad_align ? padded : ex;

    std::vector<NodeId> enc = encoder.encode(t, use, train, dropout_rng);
    switch (config_.head) {
        case Head::Indp:
            return indp->sequence_log_prob(t, enc, use.tags);
        case Head::Crf:
            return crf->sequence_log_prob(t, enc, use.tags);
        case Head::Rnn: {
            if (config_.task == Task::Label && use.tags.size() != enc.size())
                throw std::invalid_argument("rnn: tag length " + std::to_string(use.tags.size()) +
                                            " vs encoder length " + std::to_string(enc.size()));
            NodeId enc_matrix = rnn->use_attention ? t.concat_cols(enc) : -1;
            RnnDecoder::State state = rnn->initial(t);
            NodeId total = t.constant(Tensor::scalar(0.0));
            for (std::size_t i = 0; i < use.tags.size(); ++i) {
                RnnDecoder::StepOut out = rnn->step(t, state, enc, enc_matrix, i);
                total = t.add(total, t.pick(out.log_probs, use.tags[i]));
                state = out.state;
                state.prev_token = use.tags[i];  // teacher forcing
            }
            return total;
        }
    }
    throw std::logic_error("sequence_log_prob: unreachable");
}

}  // namespace seqlab
