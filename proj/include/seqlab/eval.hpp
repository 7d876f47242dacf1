#pragma once

#include "seqlab/model.hpp"

namespace seqlab {

// --- Decoding -------------------------------------------------------------------

// Beam search over the RNN decoder. Labeling mode runs exactly l steps;
// transduction mode finishes hypotheses at EOS (capped at max_decode) and
// compares raw accumulated log-probs. Ties break deterministically toward
// earlier hypotheses and lower token ids; width 1 reproduces greedy decoding.
std::vector<std::size_t> beam_search(Model& model, const LabeledExample& ex, std::size_t width);

// Head dispatch: INDP argmax, CRF Viterbi, RNN beam search. Transduction
// output is truncated at the first PAD and stripped of EOS.
std::vector<std::size_t> decode_example(Model& model, const LabeledExample& ex,
                                        std::size_t beam_width);

// --- Metrics --------------------------------------------------------------------

struct Span {
    std::string type;
    std::size_t begin = 0;
    std::size_t end = 0;  // inclusive
    auto operator<=>(const Span&) const = default;
};

// BILOU spans with the conlleval repair: a continuation that does not fit an
// open span of the same type starts a new span.
std::vector<Span> extract_bilou_spans(const std::vector<std::string>& tags);

struct PrfScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

PrfScore entity_f1(const std::vector<std::vector<std::string>>& gold,
                   const std::vector<std::vector<std::string>>& predicted);

double tag_accuracy(const std::vector<std::vector<std::size_t>>& gold,
                    const std::vector<std::vector<std::size_t>>& predicted);

// Exact string match after PAD/EOS stripping has already been applied.
double word_accuracy(const std::vector<std::string>& gold,
                     const std::vector<std::string>& predicted);

// --- Significance ----------------------------------------------------------------

// CDF of Student's t distribution with nu degrees of freedom.
double student_t_cdf(double t, double nu);

// Two-sample two-tailed p-value; Welch by default, pooled-variance Student's
// when welch is false. Degenerate zero-variance samples: p = 1 for equal
// means, 0 otherwise.
double t_test_p(const std::vector<double>& a, const std::vector<double>& b, bool welch = true);

// --- Reports ---------------------------------------------------------------------

struct EvalReport {
    std::string metric;
    std::vector<std::uint64_t> seeds;
    std::vector<double> values;

    double mean() const;
    double stddev() const;  // sample standard deviation
};

// Rows of "metric,seed,value" with a header.
std::string report_csv(const std::vector<std::pair<std::string, EvalReport>>& reports);

}  // namespace seqlab
