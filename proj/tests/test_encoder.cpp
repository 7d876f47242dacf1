#include <doctest.h>

#include "oracles.hpp"
#include "seqlab/encoder.hpp"

using namespace seqlab;

namespace {

EncoderConfig small_config() {
    EncoderConfig c;
    c.src_vocab = 10;
    c.src_dim = 4;
    c.use_char_rnn = true;
    c.char_vocab = 8;
    c.char_dim = 3;
    c.char_units = 3;
    c.use_caps = true;
    c.units = 5;
    c.dropout = 0.5;
    c.max_len = 16;
    return c;
}

LabeledExample make_example(const std::vector<std::string>& surfaces,
                            const std::vector<std::size_t>& src) {
    LabeledExample ex;
    ex.surfaces = surfaces;
    ex.src = src;
    for (const std::string& s : surfaces) {
        ex.caps.push_back(cap_flags(s));
        std::vector<std::size_t> chars;
        for (char c : s) chars.push_back(static_cast<std::size_t>(c - 'a' + 1) % 8);
        ex.chars.push_back(chars);
    }
    ex.tags.assign(src.size(), 0);
    return ex;
}

}  // namespace

TEST_CASE("capitalization flags follow the four-flag rule table") {
    CHECK(cap_flags("IBM") == std::array<double, 4>{1, 0, 0, 0});
    CHECK(cap_flags("Photo2000") == std::array<double, 4>{0, 1, 1, 0});
    CHECK(cap_flags("hello") == std::array<double, 4>{0, 0, 0, 1});
    CHECK(cap_flags("1996") == std::array<double, 4>{0, 0, 1, 0});
    CHECK(cap_flags("Van") == std::array<double, 4>{0, 1, 0, 0});
    CHECK(cap_flags("mRNA") == std::array<double, 4>{0, 0, 0, 0});
}

TEST_CASE("token features are deterministic given the dropout seed") {
    Rng init(3);
    Encoder enc(small_config(), init);
    LabeledExample ex = make_example({"Hello", "world"}, {6, 7});
    auto run = [&](std::uint64_t seed) {
        Rng dropout(seed);
        Tape t;
        NodeId f = enc.token_features(t, ex, 0, /*train=*/true, &dropout);
        return t.value(f);
    };
    CHECK(run(42) == run(42));
    CHECK(run(42) != run(43));
}

TEST_CASE("cap flags sit after the dropped-out feature block") {
    EncoderConfig cfg = small_config();
    Rng init(5);
    Encoder enc(cfg, init);
    LabeledExample ex = make_example({"IBM"}, {2});
    Rng dropout(1);
    Tape t;
    NodeId f = enc.token_features(t, ex, 0, /*train=*/true, &dropout);
    const Tensor& v = t.value(f);
    REQUIRE(v.size() == enc.feature_dim());
    // trailing 4 entries are the raw flags, never scaled by dropout
    CHECK(v[v.size() - 4] == 1.0);
    CHECK(v[v.size() - 3] == 0.0);
    CHECK(v[v.size() - 2] == 0.0);
    CHECK(v[v.size() - 1] == 0.0);
}

TEST_CASE("encode produces one 2x-units vector per token") {
    Rng init(7);
    Encoder enc(small_config(), init);

    SUBCASE("single token") {
        LabeledExample ex = make_example({"a"}, {1});
        Tape t;
        std::vector<NodeId> h = enc.encode(t, ex, false, nullptr);
        REQUIRE(h.size() == 1);
        CHECK(t.value(h[0]).rows() == 2 * 5);
        CHECK(t.value(h[0]).cols() == 1);
    }
    SUBCASE("every position") {
        LabeledExample ex = make_example({"ab", "cd", "ef"}, {1, 2, 3});
        Tape t;
        std::vector<NodeId> h = enc.encode(t, ex, false, nullptr);
        REQUIRE(h.size() == 3);
        for (NodeId node : h) CHECK(t.value(node).rows() == 10);
    }
}

TEST_CASE("inference encoding is deterministic and dropout-free") {
    Rng init(11);
    Encoder enc(small_config(), init);
    LabeledExample ex = make_example({"One", "two"}, {4, 5});
    Tape t1, t2;
    Tensor a = t1.value(enc.encode(t1, ex, false, nullptr)[1]);
    Tensor b = t2.value(enc.encode(t2, ex, false, nullptr)[1]);
    CHECK(a == b);
}

TEST_CASE("flipping the last token changes h_1 through the backward pass") {
    Rng init(13);
    Encoder enc(small_config(), init);
    LabeledExample ex = make_example({"aa", "bb", "cc", "dd"}, {1, 2, 3, 4});
    Tape t;
    Tensor h1 = t.value(enc.encode(t, ex, false, nullptr)[0]);

    LabeledExample flipped = make_example({"aa", "bb", "cc", "ee"}, {1, 2, 3, 5});
    Tape t2;
    Tensor h1_flipped = t2.value(enc.encode(t2, flipped, false, nullptr)[0]);
    CHECK(h1 != h1_flipped);
}

TEST_CASE("over-length input raises an explicit truncation error") {
    EncoderConfig cfg = small_config();
    cfg.max_len = 2;
    Rng init(17);
    Encoder enc(cfg, init);
    LabeledExample ex = make_example({"a", "b", "c"}, {1, 2, 3});
    Tape t;
    CHECK_THROWS_AS(enc.encode(t, ex, false, nullptr), DataError);
}

TEST_CASE("gradients reach char-RNN and embedding parameters") {
    EncoderConfig cfg = small_config();
    cfg.dropout = 0.0;
    Rng init(19);
    Encoder enc(cfg, init);
    LabeledExample ex = make_example({"abc", "de"}, {1, 2});
    ParamSet params;
    enc.collect(params);
    for (Param* p : params) p->zero_grad();
    Tape t;
    std::vector<NodeId> h = enc.encode(t, ex, false, nullptr);
    t.backward(t.sum(t.concat_rows(h)));
    for (Param* p : params) {
        CAPTURE(p->name);
        double norm = 0.0;
        for (std::size_t i = 0; i < p->grad.size(); ++i) norm += std::fabs(p->grad[i]);
        CHECK(norm > 0.0);
    }
}

TEST_CASE("encoder gradients pass finite differences on a small instance") {
    EncoderConfig cfg = small_config();
    cfg.dropout = 0.0;
    cfg.units = 2;
    cfg.char_units = 2;
    Rng init(23);
    Encoder enc(cfg, init);
    LabeledExample ex = make_example({"ab", "c"}, {1, 2});
    ParamSet params;
    enc.collect(params);
    auto build = [&](Tape& t) { return t.sum(t.concat_rows(enc.encode(t, ex, false, nullptr))); };
    CHECK(oracle::check_gradients(params, build).max_err < 1e-4);
}

TEST_CASE("transduction-style encoder runs on bare symbol embeddings") {
    EncoderConfig cfg;
    cfg.src_vocab = 12;
    cfg.src_dim = 4;
    cfg.use_char_rnn = false;
    cfg.use_caps = false;
    cfg.units = 3;
    cfg.dropout = 0.0;
    Rng init(29);
    Encoder enc(cfg, init);
    CHECK(enc.feature_dim() == 4);
    LabeledExample ex;
    ex.src = {5, 6, 7};
    ex.surfaces = {"x", "y", "z"};
    ex.chars.resize(3);
    ex.caps.resize(3, {0, 0, 0, 0});
    ex.tags = {0, 0, 0};
    Tape t;
    std::vector<NodeId> h = enc.encode(t, ex, false, nullptr);
    CHECK(h.size() == 3);
    CHECK(t.value(h[0]).rows() == 6);
}
