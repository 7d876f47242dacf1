#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "oracles.hpp"
#include "seqlab/data.hpp"
#include "seqlab/eval.hpp"

using namespace seqlab;

TEST_CASE("vocabulary reserves fixed ids and builds by frequency then lexicographic") {
    Vocabulary empty;
    CHECK(empty.size() == Vocabulary::kReserved);
    CHECK(empty.token(Vocabulary::kPad) == "<pad>");
    CHECK(empty.token(Vocabulary::kUnk) == "<unk>");
    CHECK(empty.token(Vocabulary::kNum) == "<num>");
    CHECK(empty.token(Vocabulary::kEos) == "<eos>");
    CHECK(empty.token(Vocabulary::kGo) == "<go>");

    std::unordered_map<std::string, std::size_t> counts{
        {"the", 10}, {"cat", 3}, {"bat", 3}, {"rare", 1}};
    Vocabulary v = Vocabulary::build(counts, 2);
    CHECK(v.get("the") == Vocabulary::kReserved);      // most frequent first
    CHECK(v.get("bat") == Vocabulary::kReserved + 1);  // tie broken lexicographically
    CHECK(v.get("cat") == Vocabulary::kReserved + 2);
    CHECK(v.get("rare") == Vocabulary::kUnk);          // below the cutoff

    Vocabulary v2 = Vocabulary::build(counts, 2);  // stability across runs
    CHECK(v.tokens() == v2.tokens());
}

TEST_CASE("preprocess replaces numbers and unknown words") {
    std::unordered_map<std::string, std::size_t> counts{{"known", 5}, {"3x", 5}};
    Vocabulary words = Vocabulary::build(counts, 2);
    CHECK(preprocess("1996", words) == "<num>");
    CHECK(preprocess("3.5", words) == "<num>");
    CHECK(preprocess("20,000", words) == "<num>");
    CHECK(preprocess("-7", words) == "<num>");
    CHECK(preprocess("known", words) == "known");
    CHECK(preprocess("zxqv", words) == "<unk>");
    CHECK(preprocess("3x", words) == "3x");     // digits plus letters is not a number
    CHECK(preprocess("...", words) == "<unk>"); // separators alone are not a number

    SUBCASE("idempotence") {
        for (const std::string& token : {"1996", "3.5", "known", "zxqv", "Photo2000"}) {
            const std::string once = preprocess(token, words);
            CHECK(preprocess(once, words) == once);
        }
    }
}

TEST_CASE("column corpus reading and writing") {
    const std::string path = "corpus_test.txt";

    SUBCASE("two sentences, order preserved") {
        {
            std::ofstream f(path);
            f << "The B-ORG\nBank I-ORG\n\nruns O\n";
        }
        RawCorpus c = read_column_corpus(path);
        REQUIRE(c.size() == 2);
        CHECK(c[0].tokens == std::vector<std::string>{"The", "Bank"});
        CHECK(c[0].tags == std::vector<std::string>{"B-ORG", "I-ORG"});
        CHECK(c[1].tokens == std::vector<std::string>{"runs"});
    }
    SUBCASE("empty file gives an empty corpus") {
        { std::ofstream f(path); }
        CHECK(read_column_corpus(path).empty());
    }
    SUBCASE("ragged rows raise a parse error naming the line") {
        {
            std::ofstream f(path);
            f << "ok B-PER\nbroken\n";
        }
        CHECK_THROWS_WITH_AS(read_column_corpus(path),
                             doctest::Contains("line 2"), DataError);
    }
    SUBCASE("write then read round-trips") {
        RawCorpus original{{{"a", "b"}, {"X", "Y"}}, {{"c"}, {"Z"}}};
        write_column_corpus(path, original);
        RawCorpus back = read_column_corpus(path);
        REQUIRE(back.size() == original.size());
        for (std::size_t i = 0; i < back.size(); ++i) {
            CHECK(back[i].tokens == original[i].tokens);
            CHECK(back[i].tags == original[i].tags);
        }
    }
    std::remove(path.c_str());
}

TEST_CASE("pair corpus splits into code points or space-separated symbols") {
    const std::string path = "pairs_test.tsv";
    {
        std::ofstream f(path);
        f << "abc\txyz\n";
        f << "déf\tqq\n";  // two-byte UTF-8 inside
    }
    RawCorpus utf8 = read_pair_corpus(path, false);
    REQUIRE(utf8.size() == 2);
    CHECK(utf8[0].tokens == std::vector<std::string>{"a", "b", "c"});
    CHECK(utf8[1].tokens == std::vector<std::string>{"d", "é", "f"});
    CHECK(utf8[1].tags == std::vector<std::string>{"q", "q"});

    {
        std::ofstream f(path);
        f << "a b\tx y z\n";
    }
    RawCorpus spaced = read_pair_corpus(path, true);
    CHECK(spaced[0].tokens == std::vector<std::string>{"a", "b"});
    CHECK(spaced[0].tags == std::vector<std::string>{"x", "y", "z"});

    {
        std::ofstream f(path);
        f << "missing-tab\n";
    }
    CHECK_THROWS_AS(read_pair_corpus(path, false), DataError);
    std::remove(path.c_str());
}

TEST_CASE("bilou encoding rules") {
    CHECK(bilou_encode({"B-PER"}) == std::vector<std::string>{"U-PER"});
    CHECK(bilou_encode({"B-LOC", "I-LOC", "I-LOC"}) ==
          std::vector<std::string>{"B-LOC", "I-LOC", "L-LOC"});
    CHECK(bilou_encode({"O", "B-PER", "O"}) == std::vector<std::string>{"O", "U-PER", "O"});
    CHECK_THROWS_AS(bilou_encode({"I-PER"}), DataError);
    CHECK_THROWS_AS(bilou_encode({"B-PER", "I-LOC"}), DataError);
    CHECK_THROWS_AS(bilou_encode({"Q-PER"}), DataError);

    SUBCASE("span sets survive the conversion on random valid BIO") {
        Rng rng(7);
        const std::vector<std::string> types{"PER", "LOC", "ORG"};
        for (int rep = 0; rep < 50; ++rep) {
            // generate a valid BIO sequence
            std::vector<std::string> bio;
            const std::size_t l = 1 + rng.uniform_index(12);
            while (bio.size() < l) {
                if (rng.bernoulli(0.4)) {
                    bio.push_back("O");
                } else {
                    const std::string& type = types[rng.uniform_index(types.size())];
                    const std::size_t span = 1 + rng.uniform_index(3);
                    bio.push_back("B-" + type);
                    for (std::size_t i = 1; i < span && bio.size() < l; ++i)
                        bio.push_back("I-" + type);
                }
            }
            // reference spans straight from the BIO encoding
            std::vector<Span> expected;
            for (std::size_t i = 0; i < bio.size(); ++i) {
                if (bio[i][0] != 'B') continue;
                Span s{bio[i].substr(2), i, i};
                while (s.end + 1 < bio.size() && bio[s.end + 1] == "I-" + s.type) ++s.end;
                expected.push_back(s);
            }
            CHECK(extract_bilou_spans(bilou_encode(bio)) == expected);
        }
    }
}

TEST_CASE("dataset construction encodes against training vocabularies") {
    RawCorpus train{{{"Alpha", "beta", "12"}, {"B-X", "O", "O"}},
                    {{"beta", "beta"}, {"O", "O"}}};
    RawCorpus dev{{{"beta", "novel"}, {"O", "O"}}};
    DatasetOptions opts;
    opts.vocab_min_freq = 2;
    Dataset ds = build_dataset(train, dev, {}, opts);
    CHECK(ds.words.contains("beta"));       // frequency 3
    CHECK_FALSE(ds.words.contains("Alpha"));  // frequency 1 -> UNK
    CHECK_FALSE(ds.words.contains("12"));     // number -> NUM
    REQUIRE(ds.train.size() == 2);
    CHECK(ds.train[0].src[0] == Vocabulary::kUnk);
    CHECK(ds.train[0].src[2] == Vocabulary::kNum);
    CHECK(ds.dev[0].src[1] == Vocabulary::kUnk);
    CHECK(ds.train[0].caps[0][1] == 1.0);  // initial-upper computed pre-replacement
    CHECK(ds.train[0].tags[0] == ds.tags.get("B-X"));
}

TEST_CASE("synthetic task generator") {
    SUBCASE("same seed reproduces the corpora exactly") {
        SynthConfig sc;
        sc.n_train = 20;
        sc.n_dev = 5;
        sc.n_test = 5;
        sc.seed = 11;
        SynthTask a = synth_markov_task(sc);
        SynthTask b = synth_markov_task(sc);
        REQUIRE(a.train.size() == b.train.size());
        for (std::size_t i = 0; i < a.train.size(); ++i) {
            CHECK(a.train[i].tokens == b.train[i].tokens);
            CHECK(a.train[i].tags == b.train[i].tags);
        }
    }

    SUBCASE("beta = 0 produces uniform tag bigram rows (chi-squared at 0.01)") {
        SynthConfig sc;
        sc.beta = 0.0;
        sc.n_train = 900;  // ~10k tokens
        sc.n_dev = 0;
        sc.n_test = 0;
        sc.seed = 13;
        SynthTask task = synth_markov_task(sc);
        const std::size_t T = sc.n_tags;
        std::vector<std::vector<double>> bigrams(T, std::vector<double>(T, 0.0));
        for (const RawSentence& s : task.train)
            for (std::size_t i = 1; i < s.tags.size(); ++i)
                bigrams[s.tags[i - 1][0] - 'A'][s.tags[i][0] - 'A'] += 1.0;
        double chi2 = 0.0;
        for (std::size_t i = 0; i < T; ++i) {
            double row_total = 0.0;
            for (double c : bigrams[i]) row_total += c;
            const double expected = row_total / static_cast<double>(T);
            REQUIRE(expected > 5.0);
            for (double c : bigrams[i]) chi2 += (c - expected) * (c - expected) / expected;
        }
        // df = T(T-1) = 20; critical value at alpha = 0.01 is 37.57
        CHECK(chi2 < 37.57);
    }

    SUBCASE("beta = 0.95: pointwise oracle is strictly below the Markov oracle") {
        SynthConfig sc;
        sc.beta = 0.95;
        sc.n_train = 0;
        sc.n_dev = 0;
        sc.n_test = 400;
        sc.seed = 17;
        SynthTask task = synth_markov_task(sc);
        std::vector<std::vector<std::size_t>> words, tags;
        for (const RawSentence& s : task.test) {
            std::vector<std::size_t> w, y;
            for (const std::string& token : s.tokens)
                w.push_back((token[0] - 'a') * 26 + (token[1] - 'a'));
            for (const std::string& tag : s.tags) y.push_back(tag[0] - 'A');
            words.push_back(std::move(w));
            tags.push_back(std::move(y));
        }
        const double pointwise = oracle::pointwise_oracle_accuracy(task.model.transitions,
                                                                   task.model.emissions, words,
                                                                   tags);
        const double markov = oracle::markov_oracle_accuracy(task.model.init,
                                                             task.model.transitions,
                                                             task.model.emissions, words, tags);
        CAPTURE(pointwise);
        CAPTURE(markov);
        CHECK(pointwise < markov);
        CHECK(markov - pointwise > 0.03);  // the gap the output chain is worth
    }

    SUBCASE("generated rows are well-formed surface/tag pairs") {
        SynthConfig sc;
        sc.n_train = 10;
        sc.n_dev = 0;
        sc.n_test = 0;
        SynthTask task = synth_markov_task(sc);
        for (const RawSentence& s : task.train) {
            CHECK(s.tokens.size() == s.tags.size());
            CHECK(s.tokens.size() >= sc.len_min);
            CHECK(s.tokens.size() <= sc.len_max);
            for (const std::string& token : s.tokens) {
                CHECK(token.size() == 2);
                CHECK(std::islower(static_cast<unsigned char>(token[0])));
            }
        }
    }
}

TEST_CASE("utf8_split handles multi-byte sequences and stray bytes") {
    CHECK(utf8_split("abc") == std::vector<std::string>{"a", "b", "c"});
    CHECK(utf8_split("é中") == std::vector<std::string>{"é", "中"});
    CHECK(utf8_split("") == std::vector<std::string>{});
}
