#include "seqlab/encoder.hpp"

namespace seqlab {

Encoder::Encoder(const EncoderConfig& config, Rng& rng) : config_(config) {
    src_emb = EmbeddingTable("encoder.src_emb", config.src_vocab, config.src_dim, rng);
    if (config.use_char_rnn) {
        char_emb = EmbeddingTable("encoder.char_emb", config.char_vocab, config.char_dim, rng);
        char_fwd = LstmCell("encoder.char_fwd", config.char_dim, config.char_units, rng);
        char_bwd = LstmCell("encoder.char_bwd", config.char_dim, config.char_units, rng);
    }
    sent_fwd = LstmCell("encoder.sent_fwd", feature_dim(), config.units, rng);
    sent_bwd = LstmCell("encoder.sent_bwd", feature_dim(), config.units, rng);
}

std::size_t Encoder::feature_dim() const {
    std::size_t dim = config_.src_dim;
    if (config_.use_char_rnn) dim += 2 * config_.char_units;
    if (config_.use_caps) dim += 4;
    return dim;
}

namespace {

Tensor dropout_mask(std::size_t n, double rate, Rng& rng) {
    Tensor mask(n, 1);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < n; ++i) mask[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
    return mask;
}

}  // namespace

NodeId Encoder::token_features(Tape& t, const LabeledExample& ex, std::size_t index, bool train,
                               Rng* dropout_rng) {
    std::vector<NodeId> parts{src_emb.lookup(t, ex.src[index])};
    if (config_.use_char_rnn) {
        const std::vector<std::size_t>& chars = ex.chars[index];
        if (chars.empty())
            throw std::invalid_argument("token_features: token without characters at position " +
                                        std::to_string(index));
        LstmCell::State fwd = char_fwd.initial(t);
        for (std::size_t id : chars) fwd = char_fwd.step(t, char_emb.lookup(t, id), fwd);
        LstmCell::State bwd = char_bwd.initial(t);
        for (std::size_t i = chars.size(); i-- > 0;)
            bwd = char_bwd.step(t, char_emb.lookup(t, chars[i]), bwd);
        parts.push_back(fwd.h);
        parts.push_back(bwd.h);
    }
    NodeId feat = parts.size() == 1 ? parts[0] : t.concat_rows(parts);
    if (train && dropout_rng != nullptr && config_.dropout > 0.0)
        feat = t.dropout(feat, dropout_mask(t.value(feat).size(), config_.dropout, *dropout_rng));
    if (config_.use_caps) {
        const auto& flags = ex.caps[index];
        feat = t.concat_rows(
            {feat, t.constant(Tensor::column({flags[0], flags[1], flags[2], flags[3]}))});
    }
    return feat;
}

std::vector<NodeId> Encoder::encode(Tape& t, const LabeledExample& ex, bool train,
                                    Rng* dropout_rng) {
    const std::size_t l = ex.length();
    if (l == 0) throw std::invalid_argument("encode: empty example");
    if (l > config_.max_len)
        throw DataError("encode: sequence length " + std::to_string(l) + " exceeds max_len " +
                        std::to_string(config_.max_len) + "; refusing to truncate");
    std::vector<NodeId> features;
    features.reserve(l);
    for (std::size_t i = 0; i < l; ++i)
        features.push_back(token_features(t, ex, i, train, dropout_rng));
    return bidir_run(t, sent_fwd, sent_bwd, features);
}

void Encoder::collect(ParamSet& out) {
    src_emb.collect(out);
    if (config_.use_char_rnn) {
        char_emb.collect(out);
        char_fwd.collect(out);
        char_bwd.collect(out);
    }
    sent_fwd.collect(out);
    sent_bwd.collect(out);
}

}  // namespace seqlab
