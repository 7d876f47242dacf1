#include "seqlab/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace seqlab {

namespace {

constexpr const char* kMagic = "seqlab-checkpoint v1";

std::string hexfloat(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double parse_hexfloat(const std::string& s) {
    return std::strtod(s.c_str(), nullptr);
}

void write_tensor_section(std::ostream& out, const char* kind,
                          const std::vector<std::pair<std::string, Tensor>>& tensors) {
    out << "section " << kind << ' ' << tensors.size() << '\n';
    for (const auto& [name, tensor] : tensors) {
        out << "tensor " << name << ' ' << tensor.rows() << ' ' << tensor.cols() << '\n';
        for (std::size_t i = 0; i < tensor.rows(); ++i) {
            for (std::size_t j = 0; j < tensor.cols(); ++j) {
                if (j) out << ' ';
                out << hexfloat(tensor.at(i, j));
            }
            out << '\n';
        }
    }
}

std::vector<std::pair<std::string, Tensor>> read_tensor_section(std::istream& in,
                                                                std::size_t count) {
    std::vector<std::pair<std::string, Tensor>> tensors;
    for (std::size_t k = 0; k < count; ++k) {
        std::string word, name;
        std::size_t rows, cols;
        in >> word >> name >> rows >> cols;
        if (word != "tensor") throw DataError("checkpoint: expected tensor header, got " + word);
        Tensor t(rows, cols);
        std::string value;
        for (std::size_t i = 0; i < rows * cols; ++i) {
            in >> value;
            t[i] = parse_hexfloat(value);
        }
        tensors.emplace_back(name, std::move(t));
    }
    return tensors;
}

void write_vocab(std::ostream& out, const char* name, const Vocabulary& vocab) {
    out << "section vocab-" << name << ' ' << vocab.size() << '\n';
    for (const std::string& token : vocab.tokens()) out << token << '\n';
}

Vocabulary read_vocab(std::istream& in, std::size_t count) {
    Vocabulary vocab;
    std::string token;
    std::getline(in, token);  // consume end of section line
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, token)) throw DataError("checkpoint: truncated vocabulary");
        if (i >= Vocabulary::kReserved) vocab.add(token);
    }
    return vocab;
}

std::vector<std::pair<std::string, std::string>> config_entries(const ModelConfig& c) {
    const EncoderConfig& e = c.encoder;
    return {
        {"task", to_string(c.task)},
        {"head", to_string(c.head)},
        {"n_tags", std::to_string(c.n_tags)},
        {"out_emb_dim", std::to_string(c.out_emb_dim)},
        {"dec_units", std::to_string(c.dec_units)},
        {"max_decode", std::to_string(c.max_decode)},
        {"src_vocab", std::to_string(e.src_vocab)},
        {"src_dim", std::to_string(e.src_dim)},
        {"use_char_rnn", e.use_char_rnn ? "1" : "0"},
        {"char_vocab", std::to_string(e.char_vocab)},
        {"char_dim", std::to_string(e.char_dim)},
        {"char_units", std::to_string(e.char_units)},
        {"use_caps", e.use_caps ? "1" : "0"},
        {"enc_units", std::to_string(e.units)},
        {"dropout", hexfloat(e.dropout)},
        {"max_len", std::to_string(e.max_len)},
    };
}

void apply_config_entry(ModelConfig& c, const std::string& key, const std::string& value) {
    EncoderConfig& e = c.encoder;
    if (key == "task") c.task = task_from_string(value);
    else if (key == "head") c.head = head_from_string(value);
    else if (key == "n_tags") c.n_tags = std::stoul(value);
    else if (key == "out_emb_dim") c.out_emb_dim = std::stoul(value);
    else if (key == "dec_units") c.dec_units = std::stoul(value);
    else if (key == "max_decode") c.max_decode = std::stoul(value);
    else if (key == "src_vocab") e.src_vocab = std::stoul(value);
    else if (key == "src_dim") e.src_dim = std::stoul(value);
    else if (key == "use_char_rnn") e.use_char_rnn = value == "1";
    else if (key == "char_vocab") e.char_vocab = std::stoul(value);
    else if (key == "char_dim") e.char_dim = std::stoul(value);
    else if (key == "char_units") e.char_units = std::stoul(value);
    else if (key == "use_caps") e.use_caps = value == "1";
    else if (key == "enc_units") e.units = std::stoul(value);
    else if (key == "dropout") e.dropout = parse_hexfloat(value);
    else if (key == "max_len") e.max_len = std::stoul(value);
    else throw DataError("checkpoint: unknown config key " + key);
}

}  // namespace

std::uint64_t fnv1a_hash(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string model_signature(const ModelConfig& config, std::size_t n_words, std::size_t n_chars,
                            std::size_t n_tags) {
    std::ostringstream out;
    for (const auto& [key, value] : config_entries(config)) out << key << '=' << value << '\n';
    out << "words=" << n_words << "\nchars=" << n_chars << "\ntags=" << n_tags << '\n';
    return out.str();
}

Checkpoint make_checkpoint(Model& model, const Vocabulary& words, const Vocabulary& chars,
                           const Vocabulary& tags, const std::string& objective,
                           std::size_t epoch, double best_metric, CriticNet* critic,
                           Adam* optimizer) {
    Checkpoint ckpt;
    ckpt.config = model.config();
    ckpt.objective = objective;
    ckpt.epoch = epoch;
    ckpt.best_metric = best_metric;
    ckpt.words = words;
    ckpt.chars = chars;
    ckpt.tags = tags;
    ckpt.config_hash =
        fnv1a_hash(model_signature(ckpt.config, words.size(), chars.size(), tags.size()));
    for (Param* p : model.params()) ckpt.params.emplace_back(p->name, p->value);
    if (critic)
        for (Param* p : critic->params()) ckpt.critic_params.emplace_back(p->name, p->value);
    if (optimizer) {
        const ParamSet& opt_params = optimizer->params();
        for (std::size_t i = 0; i < opt_params.size(); ++i) {
            ckpt.adam_m.emplace_back(opt_params[i]->name, optimizer->slots()[i].m);
            ckpt.adam_v.emplace_back(opt_params[i]->name, optimizer->slots()[i].v);
        }
        ckpt.adam_steps = optimizer->step_count();
    }
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << kMagic << '\n';
    out << "config_hash " << ckpt.config_hash << '\n';
    out << "objective " << ckpt.objective << '\n';
    out << "epoch " << ckpt.epoch << '\n';
    out << "best_metric " << hexfloat(ckpt.best_metric) << '\n';
    const auto entries = config_entries(ckpt.config);
    out << "section config " << entries.size() << '\n';
    for (const auto& [key, value] : entries) out << key << ' ' << value << '\n';
    write_vocab(out, "words", ckpt.words);
    write_vocab(out, "chars", ckpt.chars);
    write_vocab(out, "tags", ckpt.tags);
    write_tensor_section(out, "params", ckpt.params);
    write_tensor_section(out, "critic", ckpt.critic_params);
    write_tensor_section(out, "adam_m", ckpt.adam_m);
    write_tensor_section(out, "adam_v", ckpt.adam_v);
    out << "adam_steps " << ckpt.adam_steps << '\n';
    out << "rng " << (ckpt.rng_state.empty() ? "-" : ckpt.rng_state) << '\n';
    out << "end\n";
    if (!out) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line) || line != kMagic)
        throw DataError("not a seqlab checkpoint: " + path);
    Checkpoint ckpt;
    std::string word;
    in >> word >> ckpt.config_hash;
    in >> word >> ckpt.objective;
    in >> word >> ckpt.epoch;
    in >> word >> line;
    ckpt.best_metric = parse_hexfloat(line);

    while (in >> word) {
        if (word == "end") break;
        if (word == "adam_steps") {
            in >> ckpt.adam_steps;
            continue;
        }
        if (word == "rng") {
            std::getline(in, line);
            if (line.size() > 1) ckpt.rng_state = line.substr(1);
            if (ckpt.rng_state == "-") ckpt.rng_state.clear();
            continue;
        }
        if (word != "section") throw DataError("checkpoint: unexpected token " + word);
        std::string kind;
        std::size_t count;
        in >> kind >> count;
        if (kind == "config") {
            std::string key, value;
            for (std::size_t i = 0; i < count; ++i) {
                in >> key >> value;
                apply_config_entry(ckpt.config, key, value);
            }
        } else if (kind == "vocab-words") {
            ckpt.words = read_vocab(in, count);
        } else if (kind == "vocab-chars") {
            ckpt.chars = read_vocab(in, count);
        } else if (kind == "vocab-tags") {
            ckpt.tags = read_vocab(in, count);
        } else if (kind == "params") {
            ckpt.params = read_tensor_section(in, count);
        } else if (kind == "critic") {
            ckpt.critic_params = read_tensor_section(in, count);
        } else if (kind == "adam_m") {
            ckpt.adam_m = read_tensor_section(in, count);
        } else if (kind == "adam_v") {
            ckpt.adam_v = read_tensor_section(in, count);
        } else {
            throw DataError("checkpoint: unknown section " + kind);
        }
    }
    const std::uint64_t expect = fnv1a_hash(
        model_signature(ckpt.config, ckpt.words.size(), ckpt.chars.size(), ckpt.tags.size()));
    if (expect != ckpt.config_hash)
        throw DataError("checkpoint: config hash mismatch (file corrupt or hand-edited)");
    return ckpt;
}

namespace {

void assign_params(const ParamSet& params,
                   const std::vector<std::pair<std::string, Tensor>>& stored,
                   const std::string& what) {
    if (params.size() != stored.size())
        throw DataError("checkpoint: " + what + " count mismatch: model has " +
                        std::to_string(params.size()) + ", file has " +
                        std::to_string(stored.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->name != stored[i].first)
            throw DataError("checkpoint: " + what + " name mismatch: " + params[i]->name +
                            " vs " + stored[i].first);
        if (!params[i]->value.same_shape(stored[i].second))
            throw DataError("checkpoint: " + what + " shape mismatch for " + params[i]->name);
        params[i]->value = stored[i].second;
    }
}

}  // namespace

Model restore_model(const Checkpoint& ckpt) {
    Rng rng(0);  // values are overwritten immediately
    Model model(ckpt.config, rng);
    assign_params(model.params(), ckpt.params, "param");
    return model;
}

void restore_critic(CriticNet& critic, const Checkpoint& ckpt) {
    assign_params(critic.params(), ckpt.critic_params, "critic param");
}

}  // namespace seqlab
