#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "seqlab/checkpoint.hpp"
#include "seqlab/cli.hpp"

using namespace seqlab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("seqlab_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

struct RunResult {
    int exit_code = -1;
    std::string output;
};

// Runs the CLI binary named by SEQLAB_BIN; skips the test when absent.
const char* cli_binary() { return std::getenv("SEQLAB_BIN"); }

RunResult run_cli(const std::string& args) {
    RunResult result;
    const std::string cmd = std::string(cli_binary()) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 512> buf;
    while (fgets(buf.data(), buf.size(), pipe)) result.output += buf.data();
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_tiny_corpus(const std::string& path, std::uint64_t seed) {
    SynthConfig sc;
    sc.n_train = 40;
    sc.n_dev = 0;
    sc.n_test = 0;
    sc.len_min = 3;
    sc.len_max = 6;
    sc.seed = seed;
    write_column_corpus(path, synth_markov_task(sc).train);
}

const char* kTinyFlags =
    " --set enc_units=4 --set dec_units=4 --set word_dim=4 --set out_emb_dim=3"
    " --set use_char_rnn=0 --set use_caps=0 --set batch_size=8 --set vocab_min_freq=1"
    " --set dropout=0";

}  // namespace

TEST_CASE("checkpoint round-trips bit-exactly including optimizer state") {
    Rng rng(3);
    ModelConfig mc;
    mc.task = Task::Label;
    mc.head = Head::Rnn;
    mc.n_tags = 7;
    mc.out_emb_dim = 3;
    mc.dec_units = 4;
    mc.encoder.src_vocab = 9;
    mc.encoder.src_dim = 4;
    mc.encoder.use_char_rnn = false;
    mc.encoder.use_caps = false;
    mc.encoder.units = 3;
    Model model(mc, rng);
    // dirty the values with an update so they are not plain init draws
    Adam adam(model.params(), 0.01);
    for (Param* p : model.params())
        for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] = rng.uniform(-1, 1);
    adam.step();

    Vocabulary words, chars, tags;
    words.add("hello");
    words.add("world");
    tags.add("A");
    tags.add("B");

    TempDir dir;
    Checkpoint out = make_checkpoint(model, words, chars, tags, "ml", 12, 0.875, nullptr, &adam);
    save_checkpoint(dir.file("model.ckpt"), out);
    Checkpoint in = load_checkpoint(dir.file("model.ckpt"));

    CHECK(in.epoch == 12);
    CHECK(in.best_metric == 0.875);
    CHECK(in.objective == "ml");
    CHECK(in.config_hash == out.config_hash);
    CHECK(in.words.tokens() == words.tokens());
    CHECK(in.tags.tokens() == tags.tokens());
    REQUIRE(in.params.size() == out.params.size());
    for (std::size_t i = 0; i < in.params.size(); ++i) {
        CHECK(in.params[i].first == out.params[i].first);
        CHECK(in.params[i].second == out.params[i].second);  // bitwise
    }
    REQUIRE(in.adam_m.size() == out.adam_m.size());
    for (std::size_t i = 0; i < in.adam_m.size(); ++i)
        CHECK(in.adam_m[i].second == out.adam_m[i].second);
    CHECK(in.adam_steps == 1);

    Model restored = restore_model(in);
    ParamSet a = model.params(), b = restored.params();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);
}

TEST_CASE("corrupted checkpoints are rejected") {
    Rng rng(5);
    ModelConfig mc;
    mc.n_tags = 5;
    mc.encoder.src_vocab = 6;
    mc.encoder.src_dim = 3;
    mc.encoder.use_char_rnn = false;
    mc.encoder.use_caps = false;
    mc.encoder.units = 2;
    mc.dec_units = 2;
    mc.out_emb_dim = 2;
    Model model(mc, rng);
    TempDir dir;
    Checkpoint ckpt = make_checkpoint(model, Vocabulary(), Vocabulary(), Vocabulary(), "ml", 1,
                                      0.5);
    save_checkpoint(dir.file("ok.ckpt"), ckpt);

    std::string text = slurp(dir.file("ok.ckpt"));
    text.replace(text.find("n_tags 5"), 8, "n_tags 6");
    {
        std::ofstream f(dir.file("bad.ckpt"));
        f << text;
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(dir.file("bad.ckpt")),
                         doctest::Contains("hash mismatch"), DataError);
    {
        std::ofstream f(dir.file("not.ckpt"));
        f << "not a checkpoint\n";
    }
    CHECK_THROWS_AS(load_checkpoint(dir.file("not.ckpt")), DataError);
}

TEST_CASE("cli: usage, data and contract errors map to documented exit codes") {
    if (!cli_binary()) return;  // only meaningful under ctest
    TempDir dir;
    write_tiny_corpus(dir.file("train.txt"), 1);
    write_tiny_corpus(dir.file("dev.txt"), 2);

    SUBCASE("fine-tune objective on train is refused before any compute") {
        RunResult r = run_cli("train --train " + dir.file("train.txt") + " --dev " +
                              dir.file("dev.txt") + " --objective ac");
        CHECK(r.exit_code == 1);
        CHECK(r.output.find("finetune") != std::string::npos);
    }
    SUBCASE("finetune without an init checkpoint is refused") {
        RunResult r = run_cli("finetune --train " + dir.file("train.txt") + " --dev " +
                              dir.file("dev.txt") + " --objective ac");
        CHECK(r.exit_code == 1);
        CHECK(r.output.find("checkpoint") != std::string::npos);
    }
    SUBCASE("crf head admits only ml") {
        RunResult r = run_cli("train --train " + dir.file("train.txt") + " --dev " +
                              dir.file("dev.txt") + " --head crf --objective self-critical");
        CHECK(r.exit_code == 1);
    }
    SUBCASE("missing data file is a data error") {
        RunResult r = run_cli("train --train /nonexistent/x.txt --dev " + dir.file("dev.txt"));
        CHECK(r.exit_code == 2);
    }
    SUBCASE("unknown config key is a usage error") {
        RunResult r = run_cli("train --set no_such_key=1");
        CHECK(r.exit_code == 1);
    }
}

TEST_CASE("cli: train determinism, metric log schema, tagging and eval") {
    if (!cli_binary()) return;
    TempDir dir;
    write_tiny_corpus(dir.file("train.txt"), 3);
    write_tiny_corpus(dir.file("dev.txt"), 4);
    const std::string data =
        " --train " + dir.file("train.txt") + " --dev " + dir.file("dev.txt");

    RunResult first = run_cli("train" + data + kTinyFlags + " --seed 11 --epochs 3" +
                              " --checkpoint " + dir.file("a.ckpt") + " --out " +
                              dir.file("a.csv"));
    REQUIRE(first.exit_code == 0);

    SUBCASE("metric log has one train and one dev row per epoch") {
        std::istringstream csv(slurp(dir.file("a.csv")));
        std::string line;
        std::getline(csv, line);
        CHECK(line == "epoch,split,metric,value");
        std::size_t train_rows = 0, dev_rows = 0;
        while (std::getline(csv, line)) {
            if (line.find(",train,loss,") != std::string::npos) ++train_rows;
            if (line.find(",dev,accuracy,") != std::string::npos) ++dev_rows;
        }
        CHECK(train_rows == 3);
        CHECK(dev_rows == 3);
    }

    SUBCASE("same seed twice gives byte-identical metric logs, different seed differs") {
        RunResult again = run_cli("train" + data + kTinyFlags + " --seed 11 --epochs 3" +
                                  " --checkpoint " + dir.file("b.ckpt") + " --out " +
                                  dir.file("b.csv"));
        REQUIRE(again.exit_code == 0);
        CHECK(slurp(dir.file("a.csv")) == slurp(dir.file("b.csv")));

        RunResult other = run_cli("train" + data + kTinyFlags + " --seed 12 --epochs 3" +
                                  " --checkpoint " + dir.file("c.ckpt") + " --out " +
                                  dir.file("c.csv"));
        REQUIRE(other.exit_code == 0);
        CHECK(slurp(dir.file("a.csv")) != slurp(dir.file("c.csv")));
    }

    SUBCASE("eval loads the checkpoint and reports both splits") {
        RunResult r = run_cli("eval --init " + dir.file("a.ckpt") + " --dev " +
                              dir.file("dev.txt") + " --test " + dir.file("train.txt"));
        CHECK(r.exit_code == 0);
        CHECK(r.output.find("dev accuracy") != std::string::npos);
        CHECK(r.output.find("test accuracy") != std::string::npos);
    }

    SUBCASE("tagging writes token TAB tag lines; empty input gives empty output") {
        {
            std::ofstream f(dir.file("input.txt"));
            f << "aa\nbb\n\ncc\n";
        }
        RunResult r = run_cli("tag " + dir.file("input.txt") + " --init " + dir.file("a.ckpt") +
                              " --out " + dir.file("tagged.txt"));
        REQUIRE(r.exit_code == 0);
        const std::string tagged = slurp(dir.file("tagged.txt"));
        CHECK(tagged.find("aa\t") == 0);
        CHECK(tagged.find("\ncc\t") != std::string::npos);

        { std::ofstream f(dir.file("empty.txt")); }
        RunResult empty = run_cli("tag " + dir.file("empty.txt") + " --init " +
                                  dir.file("a.ckpt") + " --out " + dir.file("empty_out.txt"));
        CHECK(empty.exit_code == 0);
        CHECK(slurp(dir.file("empty_out.txt")).empty());
    }

    SUBCASE("mismatched head between checkpoint and flags fails with a message") {
        RunResult r = run_cli("eval --init " + dir.file("a.ckpt") + " --dev " +
                              dir.file("dev.txt") + " --head crf");
        CHECK(r.exit_code == 1);
        CHECK(r.output.find("head") != std::string::npos);
    }
}

TEST_CASE("cli: finetune updates the checkpoint and stays deterministic") {
    if (!cli_binary()) return;
    TempDir dir;
    write_tiny_corpus(dir.file("train.txt"), 5);
    write_tiny_corpus(dir.file("dev.txt"), 6);
    const std::string data =
        " --train " + dir.file("train.txt") + " --dev " + dir.file("dev.txt");
    REQUIRE(run_cli("train" + data + kTinyFlags + " --seed 2 --epochs 2 --checkpoint " +
                    dir.file("ml.ckpt") + " --out " + dir.file("ml.csv"))
                .exit_code == 0);

    const std::string finetune_cmd = "finetune" + data + kTinyFlags +
                                     " --seed 2 --objective ac --finetune-epochs 2 --init " +
                                     dir.file("ml.ckpt");
    RunResult a = run_cli(finetune_cmd + " --checkpoint " + dir.file("ac.ckpt") + " --out " +
                          dir.file("ac_a.csv"));
    REQUIRE(a.exit_code == 0);
    RunResult b = run_cli(finetune_cmd + " --checkpoint " + dir.file("ac2.ckpt") + " --out " +
                          dir.file("ac_b.csv"));
    REQUIRE(b.exit_code == 0);
    CHECK(slurp(dir.file("ac_a.csv")) == slurp(dir.file("ac_b.csv")));

    Checkpoint ckpt = load_checkpoint(dir.file("ac.ckpt"));
    CHECK(ckpt.objective == "ac");
}

TEST_CASE("cli: replicate emits report and pairwise p-values") {
    if (!cli_binary()) return;
    TempDir dir;
    write_tiny_corpus(dir.file("train.txt"), 7);
    write_tiny_corpus(dir.file("dev.txt"), 8);
    write_tiny_corpus(dir.file("test.txt"), 9);
    RunResult r = run_cli(
        "replicate --train " + dir.file("train.txt") + " --dev " + dir.file("dev.txt") +
        " --test " + dir.file("test.txt") + kTinyFlags +
        " --epochs 2 --seeds 1,2 --models indp:ml,rnn:ml --out " + dir.file("rep"));
    REQUIRE(r.exit_code == 0);
    const std::string report = slurp(dir.file("rep/report.csv"));
    CHECK(report.find("metric,seed,value") == 0);
    CHECK(report.find("indp:ml:dev:accuracy,1,") != std::string::npos);
    CHECK(report.find("rnn:ml:test:accuracy,2,") != std::string::npos);
    const std::string pvals = slurp(dir.file("rep/pvalues.csv"));
    CHECK(pvals.find("model_a,model_b,split,p") == 0);
    CHECK(pvals.find("indp:ml,rnn:ml,dev,") != std::string::npos);

    SUBCASE("identical model specs with identical seeds give p = 1") {
        RunResult same = run_cli(
            "replicate --train " + dir.file("train.txt") + " --dev " + dir.file("dev.txt") +
            kTinyFlags + " --epochs 2 --seeds 1,2 --models rnn:ml,rnn:ml --out " +
            dir.file("rep2"));
        REQUIRE(same.exit_code == 0);
        CHECK(slurp(dir.file("rep2/pvalues.csv")).find(",dev,1\n") != std::string::npos);
    }
}

TEST_CASE("cli: config file keys are honored and flags override them") {
    if (!cli_binary()) return;
    TempDir dir;
    write_tiny_corpus(dir.file("train.txt"), 21);
    write_tiny_corpus(dir.file("dev.txt"), 22);
    {
        std::ofstream f(dir.file("run.cfg"));
        f << "# tiny run\n";
        f << "train=" << dir.file("train.txt") << "\n";
        f << "dev=" << dir.file("dev.txt") << "\n";
        f << "enc_units=4\ndec_units=4\nword_dim=4\nout_emb_dim=3\n";
        f << "use_char_rnn=0\nuse_caps=0\nbatch_size=8\nvocab_min_freq=1\ndropout=0\n";
        f << "epochs=5\nseed=1\n";
        f << "checkpoint=" << dir.file("cfg.ckpt") << "\n";
        f << "out=" << dir.file("cfg.csv") << "\n";
    }
    // --epochs overrides the file value
    RunResult r = run_cli("train --config " + dir.file("run.cfg") + " --epochs 2");
    REQUIRE(r.exit_code == 0);
    std::istringstream csv(slurp(dir.file("cfg.csv")));
    std::string line;
    std::size_t dev_rows = 0;
    while (std::getline(csv, line))
        if (line.find(",dev,") != std::string::npos) ++dev_rows;
    CHECK(dev_rows == 2);

    SUBCASE("malformed config lines are usage errors") {
        {
            std::ofstream f(dir.file("bad.cfg"));
            f << "this is not a key value line\n";
        }
        CHECK(run_cli("train --config " + dir.file("bad.cfg")).exit_code == 1);
    }
}
