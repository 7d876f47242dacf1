#include <doctest.h>

#include "oracles.hpp"
#include "seqlab/decoders.hpp"

using namespace seqlab;

namespace {

std::vector<NodeId> random_states(Tape& t, std::size_t l, std::size_t dim, Rng& rng) {
    std::vector<NodeId> h;
    for (std::size_t i = 0; i < l; ++i) h.push_back(t.constant(uniform_init(dim, 1, rng)));
    return h;
}

CrfPotentials random_potentials(std::size_t l, std::size_t n_tags, Rng& rng) {
    CrfPotentials p;
    p.emissions = uniform_init(l, n_tags, rng, 1.5);
    p.transitions = uniform_init(n_tags, n_tags, rng, 1.5);
    p.start = uniform_init(n_tags, 1, rng, 1.5);
    p.stop = uniform_init(n_tags, 1, rng, 1.5);
    return p;
}

}  // namespace

TEST_CASE("indp: a single tag class has log prob 0") {
    Rng rng(1);
    IndpHead head(4, 1, rng);
    Tape t;
    std::vector<NodeId> h = random_states(t, 3, 4, rng);
    CHECK(t.value(head.sequence_log_prob(t, h, {0, 0, 0}))[0] == doctest::Approx(0.0));
}

TEST_CASE("indp: zero weights give a uniform model, log prob -l ln T") {
    Rng rng(2);
    IndpHead head(4, 5, rng);
    head.proj.weight.value = Tensor(5, 4);
    head.proj.bias.value = Tensor(5, 1);
    Tape t;
    std::vector<NodeId> h = random_states(t, 3, 4, rng);
    CHECK(t.value(head.sequence_log_prob(t, h, {0, 3, 2}))[0] ==
          doctest::Approx(-3.0 * std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("indp: matches a per-position softmax computed by hand") {
    Rng rng(3);
    IndpHead head(3, 4, rng);
    Tape t;
    std::vector<NodeId> h = random_states(t, 5, 3, rng);
    std::vector<std::size_t> tags{1, 3, 0, 2, 1};
    double expected = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        std::vector<double> logits(4);
        for (std::size_t y = 0; y < 4; ++y) {
            double z = head.proj.bias.value[y];
            for (std::size_t j = 0; j < 3; ++j)
                z += head.proj.weight.value.at(y, j) * t.value(h[i])[j];
            logits[y] = z;
        }
        double denom = 0.0;
        for (double z : logits) denom += std::exp(z);
        expected += logits[tags[i]] - std::log(denom);
    }
    CHECK(t.value(head.sequence_log_prob(t, h, tags))[0] ==
          doctest::Approx(expected).epsilon(1e-10));
    CHECK_THROWS_AS(head.sequence_log_prob(t, h, {0, 1}), std::invalid_argument);
}

TEST_CASE("rnn decoder step yields a normalized distribution") {
    Rng rng(5);
    RnnDecoder dec(4, 3, 4, 6, false, rng);
    Tape t;
    std::vector<NodeId> enc = random_states(t, 2, 6, rng);
    RnnDecoder::StepOut out = dec.step(t, dec.initial(t), enc, -1, 0);
    const Tensor& logp = t.value(out.log_probs);
    double sum = 0.0;
    for (std::size_t i = 0; i < logp.size(); ++i) sum += std::exp(logp[i]);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("teacher-forced and free-running traces coincide while argmax equals gold") {
    Rng rng(7);
    RnnDecoder dec(3, 2, 3, 4, false, rng);
    Tape t;
    std::vector<NodeId> enc = random_states(t, 4, 4, rng);

    // free-running greedy trace
    std::vector<std::size_t> greedy;
    std::vector<Tensor> greedy_dists;
    RnnDecoder::State state = dec.initial(t);
    for (std::size_t i = 0; i < 4; ++i) {
        RnnDecoder::StepOut out = dec.step(t, state, enc, -1, i);
        greedy.push_back(t.value(out.log_probs).argmax());
        greedy_dists.push_back(t.value(out.log_probs));
        state = out.state;
        state.prev_token = greedy.back();
    }
    // teacher forcing with gold := the greedy outputs
    state = dec.initial(t);
    for (std::size_t i = 0; i < 4; ++i) {
        RnnDecoder::StepOut out = dec.step(t, state, enc, -1, i);
        CHECK(t.value(out.log_probs) == greedy_dists[i]);
        state = out.state;
        state.prev_token = greedy[i];
    }
}

TEST_CASE("changing the fed previous token changes the next distribution") {
    Rng rng(11);
    RnnDecoder dec(3, 2, 3, 4, false, rng);
    Tape t;
    std::vector<NodeId> enc = random_states(t, 2, 4, rng);
    RnnDecoder::State s0 = dec.initial(t);
    RnnDecoder::StepOut first = dec.step(t, s0, enc, -1, 0);

    RnnDecoder::State fed_a = first.state;
    fed_a.prev_token = 0;
    RnnDecoder::State fed_b = first.state;
    fed_b.prev_token = 2;
    CHECK(t.value(dec.step(t, fed_a, enc, -1, 1).log_probs) !=
          t.value(dec.step(t, fed_b, enc, -1, 1).log_probs));
}

TEST_CASE("attention over a single source position is the identity") {
    Rng rng(13);
    Param w_attn("w", uniform_init(3, 4, rng));
    Tape t;
    NodeId h1 = t.constant(uniform_init(4, 1, rng));
    NodeId enc_matrix = t.concat_cols({h1});
    AttentionResult att = attention_context(t, t.constant(uniform_init(3, 1, rng)), enc_matrix,
                                            w_attn);
    CHECK(t.value(att.weights).size() == 1);
    CHECK(t.value(att.weights)[0] == doctest::Approx(1.0));
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(t.value(att.context)[i] == doctest::Approx(t.value(h1)[i]));
}

TEST_CASE("zero attention weights average the encoder states") {
    Rng rng(17);
    Param w_attn("w", Tensor(3, 4));
    Tape t;
    std::vector<NodeId> h = random_states(t, 5, 4, rng);
    NodeId enc_matrix = t.concat_cols(h);
    AttentionResult att =
        attention_context(t, t.constant(uniform_init(3, 1, rng)), enc_matrix, w_attn);
    for (std::size_t j = 0; j < 5; ++j)
        CHECK(t.value(att.weights)[j] == doctest::Approx(0.2).epsilon(1e-12));
    for (std::size_t i = 0; i < 4; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < 5; ++j) mean += t.value(h[j])[i] / 5.0;
        CHECK(t.value(att.context)[i] == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("attention context matches a direct weighted sum and stays normalized") {
    Rng rng(19);
    Param w_attn("w", uniform_init(3, 4, rng));
    for (int rep = 0; rep < 10; ++rep) {
        Tape t;
        std::vector<NodeId> h = random_states(t, 4, 4, rng);
        NodeId d = t.constant(uniform_init(3, 1, rng));
        AttentionResult att = attention_context(t, d, t.concat_cols(h), w_attn);

        std::vector<double> scores(4);
        for (std::size_t j = 0; j < 4; ++j) {
            double s = 0.0;
            for (std::size_t a = 0; a < 3; ++a)
                for (std::size_t b = 0; b < 4; ++b)
                    s += t.value(d)[a] * w_attn.value.at(a, b) * t.value(h[j])[b];
            scores[j] = s;
        }
        const double m = *std::max_element(scores.begin(), scores.end());
        double z = 0.0;
        for (double s : scores) z += std::exp(s - m);
        double row_sum = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            const double alpha = std::exp(scores[j] - m) / z;
            CHECK(t.value(att.weights)[j] == doctest::Approx(alpha).epsilon(1e-10));
            row_sum += t.value(att.weights)[j];
        }
        CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-9));
        for (std::size_t i = 0; i < 4; ++i) {
            double c = 0.0;
            for (std::size_t j = 0; j < 4; ++j)
                c += t.value(att.weights)[j] * t.value(h[j])[i];
            CHECK(t.value(att.context)[i] == doctest::Approx(c).epsilon(1e-10));
        }
    }
}

TEST_CASE("crf log Z: zero potentials count the paths") {
    CrfPotentials p;
    p.emissions = Tensor(2, 2);
    CHECK(crf_log_z(p) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("crf log Z: length 1 is the logsumexp of the emission row") {
    Rng rng(23);
    CrfPotentials p;
    p.emissions = uniform_init(1, 4, rng, 2.0);
    double z = 0.0;
    for (std::size_t j = 0; j < 4; ++j) z += std::exp(p.emissions.at(0, j));
    CHECK(crf_log_z(p) == doctest::Approx(std::log(z)).epsilon(1e-10));
}

TEST_CASE("crf forward, likelihood and viterbi match brute-force enumeration") {
    Rng rng(29);
    for (int rep = 0; rep < 60; ++rep) {
        const std::size_t n_tags = 2 + rng.uniform_index(3);  // 2..4
        const std::size_t l = 1 + rng.uniform_index(5);       // 1..5
        CrfPotentials p = random_potentials(l, n_tags, rng);

        CHECK(crf_log_z(p) == doctest::Approx(oracle::brute_log_z(p)).epsilon(1e-8));

        std::vector<std::size_t> tags(l);
        for (std::size_t i = 0; i < l; ++i) tags[i] = rng.uniform_index(n_tags);
        const double expected = oracle::crf_path_score(p, tags) - oracle::brute_log_z(p);
        CHECK(crf_log_likelihood(p, tags) == doctest::Approx(expected).epsilon(1e-8));
        CHECK(crf_log_likelihood(p, tags) <= 1e-12);

        CHECK(crf_viterbi(p) == oracle::brute_argmax(p));
    }
}

TEST_CASE("crf log-likelihood trivials") {
    SUBCASE("single tag class") {
        CrfPotentials p;
        p.emissions = Tensor(3, 1);
        CHECK(crf_log_likelihood(p, {0, 0, 0}) == doctest::Approx(0.0));
    }
    SUBCASE("zero potentials are uniform over paths") {
        CrfPotentials p;
        p.emissions = Tensor(3, 4);
        CHECK(crf_log_likelihood(p, {1, 0, 3}) ==
              doctest::Approx(-3.0 * std::log(4.0)).epsilon(1e-12));
    }
    SUBCASE("out-of-range tag id") {
        CrfPotentials p;
        p.emissions = Tensor(2, 2);
        CHECK_THROWS_AS(crf_log_likelihood(p, {0, 2}), std::invalid_argument);
    }
}

TEST_CASE("crf normalization: likelihoods over all sequences sum to one") {
    Rng rng(31);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t n_tags = 2 + rng.uniform_index(2);  // 2..3
        const std::size_t l = 1 + rng.uniform_index(4);       // 1..4
        CrfPotentials p = random_potentials(l, n_tags, rng);
        double total = 0.0;
        oracle::for_each_path(l, n_tags, [&](const std::vector<std::size_t>& tags) {
            total += std::exp(crf_log_likelihood(p, tags));
        });
        CHECK(total == doctest::Approx(1.0).epsilon(1e-8));
    }
}

TEST_CASE("crf log Z dominates every single path score") {
    Rng rng(37);
    CrfPotentials p = random_potentials(4, 3, rng);
    const double log_z = crf_log_z(p);
    oracle::for_each_path(4, 3, [&](const std::vector<std::size_t>& tags) {
        CHECK(log_z >= oracle::crf_path_score(p, tags));
    });
}

TEST_CASE("adding a constant to an emission column shifts log Z and keeps the argmax") {
    Rng rng(41);
    CrfPotentials p = random_potentials(5, 3, rng);
    const double log_z = crf_log_z(p);
    const std::vector<std::size_t> path = crf_viterbi(p);

    CrfPotentials shifted = p;
    const double delta = 0.83;
    for (std::size_t j = 0; j < shifted.n_tags(); ++j) shifted.emissions.at(2, j) += delta;
    CHECK(crf_log_z(shifted) == doctest::Approx(log_z + delta).epsilon(1e-10));
    CHECK(crf_viterbi(shifted) == path);
}

TEST_CASE("viterbi tie-breaking picks the lowest tag index") {
    CrfPotentials p;
    p.emissions = Tensor(3, 3);
    CHECK(crf_viterbi(p) == std::vector<std::size_t>{0, 0, 0});

    CrfPotentials single;
    single.emissions = Tensor(4, 1);
    CHECK(crf_viterbi(single) == std::vector<std::size_t>{0, 0, 0, 0});
}

TEST_CASE("crf head gradients pass finite differences through the whole likelihood") {
    Rng rng(43);
    CrfHead head(3, 3, rng);
    std::vector<Tensor> states;
    for (int i = 0; i < 4; ++i) states.push_back(uniform_init(3, 1, rng));
    const std::vector<std::size_t> tags{2, 0, 1, 1};
    ParamSet params;
    head.collect(params);
    auto build = [&](Tape& t) {
        std::vector<NodeId> h;
        for (const Tensor& s : states) h.push_back(t.constant(s));
        return t.negate(head.sequence_log_prob(t, h, tags));
    };
    CHECK(oracle::check_gradients(params, build).max_err < 1e-4);
}

TEST_CASE("crf transduction padding") {
    SUBCASE("pads both sides to max_len") {
        PaddedPair p = crf_pad_transduce({10, 11}, {20, 21, 22}, 5, 0);
        CHECK(p.src == std::vector<std::size_t>{10, 11, 0, 0, 0});
        CHECK(p.tgt == std::vector<std::size_t>{20, 21, 22, 0, 0});
    }
    SUBCASE("equal-length pair at max_len is unchanged") {
        PaddedPair p = crf_pad_transduce({1, 2, 3}, {4, 5, 6}, 3, 0);
        CHECK(p.src == std::vector<std::size_t>{1, 2, 3});
        CHECK(p.tgt == std::vector<std::size_t>{4, 5, 6});
    }
    SUBCASE("over-length input is an explicit error") {
        CHECK_THROWS_AS(crf_pad_transduce({1, 2, 3, 4}, {5}, 3, 0), std::invalid_argument);
    }
    SUBCASE("decode output truncates at the first PAD") {
        CHECK(strip_padding({7, 8, 0, 0, 9}, 0) == std::vector<std::size_t>{7, 8});
        CHECK(strip_padding({0, 1}, 0).empty());
    }
}
