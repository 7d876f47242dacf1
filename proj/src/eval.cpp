#include "seqlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace seqlab {

namespace {

struct Hypothesis {
    std::vector<std::size_t> tokens;
    double score = 0.0;
    RnnDecoder::State state;
    bool done = false;
};

}  // namespace

std::vector<std::size_t> beam_search(Model& model, const LabeledExample& ex, std::size_t width) {
    if (model.config().head != Head::Rnn)
        throw std::invalid_argument("beam_search: requires the RNN decoder head");
    if (width < 1) throw std::invalid_argument("beam_search: width must be >= 1");
    RnnDecoder& dec = *model.rnn;
    const bool transduce = model.config().task == Task::Transduce;

    Tape t;
    std::vector<NodeId> enc = model.encoder.encode(t, ex, /*train=*/false, nullptr);
    NodeId enc_matrix = dec.use_attention ? t.concat_cols(enc) : -1;
    const std::size_t max_steps = transduce ? model.config().max_decode : enc.size();
    const std::size_t n_tags = dec.n_tags;

    std::vector<Hypothesis> beam{Hypothesis{{}, 0.0, dec.initial(t), false}};
    for (std::size_t step = 0; step < max_steps; ++step) {
        bool all_done = true;
        std::vector<Hypothesis> candidates;
        for (const Hypothesis& hyp : beam) {
            if (hyp.done) {
                candidates.push_back(hyp);
                continue;
            }
            all_done = false;
            RnnDecoder::State prev = hyp.state;
            prev.prev_token = hyp.tokens.empty() ? dec.go_id() : hyp.tokens.back();
            RnnDecoder::StepOut out = dec.step(t, prev, enc, enc_matrix, step);
            const Tensor& log_probs = t.value(out.log_probs);
            for (std::size_t y = 0; y < n_tags; ++y) {
                Hypothesis next;
                next.tokens = hyp.tokens;
                next.tokens.push_back(y);
                next.score = hyp.score + log_probs[y];
                next.state = out.state;
                next.done = transduce && y == Vocabulary::kEos;
                candidates.push_back(std::move(next));
            }
        }
        if (all_done) break;
        // Stable sort keeps (hypothesis rank, token id) order on score ties,
        // so uniform models decode to the lexicographically first sequence.
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
        if (candidates.size() > width) candidates.resize(width);
        beam = std::move(candidates);
    }

    const Hypothesis* best = nullptr;
    for (const Hypothesis& hyp : beam) {
        if (transduce && !hyp.done) continue;
        if (!best || hyp.score > best->score) best = &hyp;
    }
    if (!best) best = &beam.front();  // nothing finished: best running hypothesis
    return best->tokens;
}

std::vector<std::size_t> decode_example(Model& model, const LabeledExample& ex,
                                        std::size_t beam_width) {
    const bool transduce = model.config().task == Task::Transduce;
    std::vector<std::size_t> raw;
    switch (model.config().head) {
        case Head::Rnn:
            raw = beam_search(model, ex, beam_width);
            break;
        case Head::Indp: {
            const LabeledExample padded = transduce ? model.padded_for_crf(ex) : LabeledExample{};
            const LabeledExample& use = transduce ? padded : ex;
            Tape t;
            std::vector<NodeId> enc = model.encoder.encode(t, use, false, nullptr);
            raw = model.indp->decode(t, enc);
            break;
        }
        case Head::Crf: {
            const LabeledExample padded = transduce ? model.padded_for_crf(ex) : LabeledExample{};
            const LabeledExample& use = transduce ? padded : ex;
            Tape t;
            std::vector<NodeId> enc = model.encoder.encode(t, use, false, nullptr);
            raw = crf_viterbi(model.crf->materialize(t, enc));
            break;
        }
    }
    if (!transduce) return raw;
    std::vector<std::size_t> out;
    for (std::size_t id : strip_padding(raw, Vocabulary::kPad)) {
        if (id == Vocabulary::kEos) break;
        out.push_back(id);
    }
    return out;
}

std::vector<Span> extract_bilou_spans(const std::vector<std::string>& tags) {
    std::vector<Span> spans;
    bool open = false;
    Span current;
    auto close_at = [&](std::size_t end) {
        if (open) {
            current.end = end;
            spans.push_back(current);
            open = false;
        }
    };
    for (std::size_t i = 0; i < tags.size(); ++i) {
        const std::string& tag = tags[i];
        if (tag == "O" || tag.empty()) {
            close_at(i - 1);
            continue;
        }
        const char kind = tag[0];
        if (kind != 'B' && kind != 'I' && kind != 'L' && kind != 'U')
            throw std::invalid_argument("extract_bilou_spans: unknown tag '" + tag + "'");
        const std::string type = tag.size() > 2 ? tag.substr(2) : std::string();
        const bool continues = open && current.type == type && (kind == 'I' || kind == 'L');
        if (continues) {
            if (kind == 'L') close_at(i);
            continue;
        }
        close_at(i - 1);
        if (kind == 'U') {
            spans.push_back(Span{type, i, i});
        } else if (kind == 'L') {
            spans.push_back(Span{type, i, i});  // orphan L acts as a unit span
        } else {
            current = Span{type, i, i};
            open = true;
        }
    }
    close_at(tags.empty() ? 0 : tags.size() - 1);
    return spans;
}

PrfScore entity_f1(const std::vector<std::vector<std::string>>& gold,
                   const std::vector<std::vector<std::string>>& predicted) {
    if (gold.size() != predicted.size())
        throw std::invalid_argument("entity_f1: corpus size mismatch");
    std::size_t n_gold = 0, n_pred = 0, n_match = 0;
    for (std::size_t s = 0; s < gold.size(); ++s) {
        if (gold[s].size() != predicted[s].size())
            throw std::invalid_argument("entity_f1: sentence length mismatch at " +
                                        std::to_string(s));
        std::vector<Span> gs = extract_bilou_spans(gold[s]);
        std::vector<Span> ps = extract_bilou_spans(predicted[s]);
        n_gold += gs.size();
        n_pred += ps.size();
        for (const Span& span : ps)
            if (std::find(gs.begin(), gs.end(), span) != gs.end()) ++n_match;
    }
    PrfScore score;
    score.precision = n_pred == 0 ? 0.0 : static_cast<double>(n_match) / n_pred;
    score.recall = n_gold == 0 ? 0.0 : static_cast<double>(n_match) / n_gold;
    score.f1 = score.precision + score.recall == 0.0
                   ? 0.0
                   : 2.0 * score.precision * score.recall / (score.precision + score.recall);
    return score;
}

double tag_accuracy(const std::vector<std::vector<std::size_t>>& gold,
                    const std::vector<std::vector<std::size_t>>& predicted) {
    if (gold.size() != predicted.size())
        throw std::invalid_argument("tag_accuracy: corpus size mismatch");
    std::size_t total = 0, correct = 0;
    for (std::size_t s = 0; s < gold.size(); ++s) {
        if (gold[s].size() != predicted[s].size())
            throw std::invalid_argument("tag_accuracy: sentence length mismatch at " +
                                        std::to_string(s));
        for (std::size_t i = 0; i < gold[s].size(); ++i) {
            ++total;
            if (gold[s][i] == predicted[s][i]) ++correct;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / total;
}

double word_accuracy(const std::vector<std::string>& gold,
                     const std::vector<std::string>& predicted) {
    if (gold.size() != predicted.size())
        throw std::invalid_argument("word_accuracy: list size mismatch");
    if (gold.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i)
        if (gold[i] == predicted[i]) ++correct;
    return static_cast<double>(correct) / gold.size();
}

namespace {

// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 200;
    constexpr double kEps = 3e-14;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_beta =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
        b * std::log(1.0 - x);
    if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(ln_beta) * betacf(a, b, x) / a;
    return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          b * std::log(1.0 - x) + a * std::log(x)) *
                     betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double student_t_cdf(double t, double nu) {
    if (nu <= 0.0) throw std::invalid_argument("student_t_cdf: nu must be positive");
    const double x = nu / (nu + t * t);
    const double tail = 0.5 * incomplete_beta(nu / 2.0, 0.5, x);
    return t >= 0.0 ? 1.0 - tail : tail;
}

namespace {

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size() - 1);
}

}  // namespace

double t_test_p(const std::vector<double>& a, const std::vector<double>& b, bool welch) {
    if (a.size() < 2 || b.size() < 2)
        throw std::invalid_argument("t_test_p: need at least 2 samples per side");
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double ma = mean_of(a), mb = mean_of(b);
    const double va = sample_var(a, ma), vb = sample_var(b, mb);
    if (va == 0.0 && vb == 0.0) return ma == mb ? 1.0 : 0.0;

    double t, nu;
    if (welch) {
        const double sa = va / na, sb = vb / nb;
        t = (ma - mb) / std::sqrt(sa + sb);
        nu = (sa + sb) * (sa + sb) /
             (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    } else {
        const double pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
        t = (ma - mb) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
        nu = na + nb - 2.0;
    }
    return 2.0 * (1.0 - student_t_cdf(std::fabs(t), nu));
}

double EvalReport::mean() const { return values.empty() ? 0.0 : mean_of(values); }

double EvalReport::stddev() const {
    if (values.size() < 2) return 0.0;
    return std::sqrt(sample_var(values, mean_of(values)));
}

std::string report_csv(const std::vector<std::pair<std::string, EvalReport>>& reports) {
    std::ostringstream out;
    out << "metric,seed,value\n";
    out.precision(17);
    for (const auto& [name, report] : reports)
        for (std::size_t i = 0; i < report.values.size(); ++i)
            out << name << ':' << report.metric << ',' << report.seeds[i] << ','
                << report.values[i] << '\n';
    return out.str();
}

}  // namespace seqlab
