#include "seqlab/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace seqlab {

namespace {

const std::array<const char*, Vocabulary::kReserved> kReservedTokens = {
    "<pad>", "<unk>", "<num>", "<eos>", "<go>"};

}  // namespace

Vocabulary::Vocabulary() {
    for (const char* tok : kReservedTokens) add(tok);
}

Vocabulary Vocabulary::build(const std::unordered_map<std::string, std::size_t>& counts,
                             std::size_t min_freq) {
    std::vector<std::pair<std::string, std::size_t>> entries;
    entries.reserve(counts.size());
    for (const auto& [token, count] : counts)
        if (count >= min_freq) entries.emplace_back(token, count);
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocabulary vocab;
    for (const auto& [token, count] : entries) vocab.add(token);
    return vocab;
}

std::size_t Vocabulary::add(const std::string& token) {
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end()) return it->second;
    const std::size_t id = id_to_token_.size();
    id_to_token_.push_back(token);
    token_to_id_[token] = id;
    return id;
}

std::size_t Vocabulary::get(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
    return token_to_id_.count(token) > 0;
}

const std::string& Vocabulary::token(std::size_t id) const {
    if (id >= id_to_token_.size())
        throw std::out_of_range("Vocabulary::token: id " + std::to_string(id));
    return id_to_token_[id];
}

std::array<double, 4> cap_flags(const std::string& surface) {
    bool any_letter = false, any_upper = false, any_lower = false, any_digit = false;
    for (unsigned char c : surface) {
        if (std::isalpha(c)) {
            any_letter = true;
            if (std::isupper(c)) any_upper = true;
            if (std::islower(c)) any_lower = true;
        }
        if (std::isdigit(c)) any_digit = true;
    }
    const bool all_upper = any_letter && !any_lower;
    const bool all_lower = any_letter && !any_upper;
    const bool initial_upper =
        !all_upper && !surface.empty() && std::isupper(static_cast<unsigned char>(surface[0]));
    return {all_upper ? 1.0 : 0.0, initial_upper ? 1.0 : 0.0, any_digit ? 1.0 : 0.0,
            all_lower ? 1.0 : 0.0};
}

namespace {

bool is_number_token(const std::string& token) {
    bool any_digit = false;
    for (unsigned char c : token) {
        if (std::isdigit(c)) {
            any_digit = true;
        } else if (c != '.' && c != ',' && c != '-') {
            return false;
        }
    }
    return any_digit;
}

}  // namespace

std::string preprocess(const std::string& token, const Vocabulary& words) {
    if (is_number_token(token)) return kReservedTokens[Vocabulary::kNum];
    if (words.contains(token)) return token;
    return kReservedTokens[Vocabulary::kUnk];
}

std::vector<std::string> utf8_split(const std::string& s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const unsigned char c = s[i];
        std::size_t len = 1;
        if ((c & 0x80u) == 0x00u) len = 1;
        else if ((c & 0xE0u) == 0xC0u) len = 2;
        else if ((c & 0xF0u) == 0xE0u) len = 3;
        else if ((c & 0xF8u) == 0xF0u) len = 4;
        if (i + len > s.size()) len = 1;
        out.push_back(s.substr(i, len));
        i += len;
    }
    return out;
}

RawCorpus read_column_corpus(const std::string& path, std::size_t token_col,
                             std::size_t tag_col) {
    std::ifstream file(path);
    if (!file) throw DataError("cannot open corpus file: " + path);
    RawCorpus corpus;
    RawSentence current;
    std::string line;
    std::size_t line_no = 0;
    const std::size_t need = std::max(token_col, tag_col) + 1;
    while (std::getline(file, line)) {
        ++line_no;
        if (line.empty()) {
            if (!current.tokens.empty()) {
                corpus.push_back(std::move(current));
                current = RawSentence{};
            }
            continue;
        }
        std::istringstream ss(line);
        std::vector<std::string> cols;
        std::string col;
        while (ss >> col) cols.push_back(col);
        if (cols.size() < need)
            throw DataError(path + " line " + std::to_string(line_no) + ": expected at least " +
                            std::to_string(need) + " columns, got " + std::to_string(cols.size()));
        current.tokens.push_back(cols[token_col]);
        current.tags.push_back(cols[tag_col]);
    }
    if (!current.tokens.empty()) corpus.push_back(std::move(current));
    return corpus;
}

void write_column_corpus(const std::string& path, const RawCorpus& corpus) {
    std::ofstream file(path);
    if (!file) throw DataError("cannot write corpus file: " + path);
    for (const RawSentence& sentence : corpus) {
        for (std::size_t i = 0; i < sentence.tokens.size(); ++i)
            file << sentence.tokens[i] << ' ' << sentence.tags[i] << '\n';
        file << '\n';
    }
}

RawCorpus read_pair_corpus(const std::string& path, bool split_spaces) {
    std::ifstream file(path);
    if (!file) throw DataError("cannot open pair file: " + path);
    RawCorpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(file, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataError(path + " line " + std::to_string(line_no) + ": expected TAB separator");
        const std::string src = line.substr(0, tab);
        const std::string tgt = line.substr(tab + 1);
        RawSentence sentence;
        if (split_spaces) {
            std::istringstream ss(src);
            std::string tok;
            while (ss >> tok) sentence.tokens.push_back(tok);
            std::istringstream st(tgt);
            while (st >> tok) sentence.tags.push_back(tok);
        } else {
            sentence.tokens = utf8_split(src);
            sentence.tags = utf8_split(tgt);
        }
        if (sentence.tokens.empty() || sentence.tags.empty())
            throw DataError(path + " line " + std::to_string(line_no) + ": empty side");
        corpus.push_back(std::move(sentence));
    }
    return corpus;
}

std::vector<std::string> bilou_encode(const std::vector<std::string>& bio) {
    auto kind = [](const std::string& tag) { return tag.empty() ? ' ' : tag[0]; };
    auto type_of = [](const std::string& tag) {
        return tag.size() > 2 ? tag.substr(2) : std::string();
    };
    for (std::size_t i = 0; i < bio.size(); ++i) {
        const char k = kind(bio[i]);
        if (k != 'O' && k != 'B' && k != 'I')
            throw DataError("bilou_encode: invalid BIO tag '" + bio[i] + "'");
        if (k != 'O' && bio[i].size() < 3)
            throw DataError("bilou_encode: missing type in '" + bio[i] + "'");
        if (k == 'I') {
            const bool continues = i > 0 && (kind(bio[i - 1]) == 'B' || kind(bio[i - 1]) == 'I') &&
                                   type_of(bio[i - 1]) == type_of(bio[i]);
            if (!continues)
                throw DataError("bilou_encode: I tag without matching span at position " +
                                std::to_string(i));
        }
    }
    std::vector<std::string> out(bio.size());
    for (std::size_t i = 0; i < bio.size(); ++i) {
        const char k = kind(bio[i]);
        if (k == 'O') {
            out[i] = "O";
            continue;
        }
        const bool last = i + 1 >= bio.size() || kind(bio[i + 1]) != 'I' ||
                          type_of(bio[i + 1]) != type_of(bio[i]);
        if (k == 'B')
            out[i] = (last ? "U-" : "B-") + type_of(bio[i]);
        else
            out[i] = (last ? "L-" : "I-") + type_of(bio[i]);
    }
    return out;
}

LabeledExample encode_sentence(const RawSentence& raw, const Vocabulary& words,
                               const Vocabulary& chars, const Vocabulary& tags, bool transduce,
                               bool append_eos) {
    LabeledExample ex;
    ex.surfaces = raw.tokens;
    for (const std::string& surface : raw.tokens) {
        ex.caps.push_back(cap_flags(surface));
        ex.src.push_back(words.get(preprocess(surface, words)));
        std::vector<std::size_t> char_ids;
        if (!transduce)
            for (const std::string& ch : utf8_split(surface)) char_ids.push_back(chars.get(ch));
        ex.chars.push_back(std::move(char_ids));
    }
    for (const std::string& tag : raw.tags) ex.tags.push_back(tags.get(tag));
    if (transduce && append_eos) ex.tags.push_back(Vocabulary::kEos);
    return ex;
}

Dataset build_dataset(const RawCorpus& train, const RawCorpus& dev, const RawCorpus& test,
                      const DatasetOptions& options) {
    Dataset ds;
    ds.transduce = options.transduce;

    std::unordered_map<std::string, std::size_t> word_counts;
    for (const RawSentence& sentence : train)
        for (const std::string& token : sentence.tokens)
            if (!is_number_token(token)) ++word_counts[token];
    ds.words = Vocabulary::build(word_counts, options.vocab_min_freq);

    if (!options.transduce) {
        std::unordered_map<std::string, std::size_t> char_counts;
        for (const RawSentence& sentence : train)
            for (const std::string& token : sentence.tokens)
                for (const std::string& ch : utf8_split(token)) ++char_counts[ch];
        ds.chars = Vocabulary::build(char_counts, 1);
    }

    // Unseen dev/test tags map to UNK and can never match a prediction.
    std::unordered_map<std::string, std::size_t> tag_counts;
    for (const RawSentence& sentence : train)
        for (const std::string& tag : sentence.tags) ++tag_counts[tag];
    ds.tags = Vocabulary::build(tag_counts, 1);

    auto encode_split = [&](const RawCorpus& raw) {
        std::vector<LabeledExample> out;
        out.reserve(raw.size());
        for (const RawSentence& sentence : raw)
            out.push_back(encode_sentence(sentence, ds.words, ds.chars, ds.tags, ds.transduce,
                                          options.append_eos));
        return out;
    };
    ds.train = encode_split(train);
    ds.dev = encode_split(dev);
    ds.test = encode_split(test);
    return ds;
}

std::string synth_word_name(std::size_t id) {
    std::string name;
    name.push_back('a' + static_cast<char>(id / 26 % 26));
    name.push_back('a' + static_cast<char>(id % 26));
    return name;
}

std::string synth_tag_name(std::size_t id) {
    return std::string(1, static_cast<char>('A' + id));
}

SynthModel make_synth_model(const SynthConfig& config) {
    const std::size_t T = config.n_tags;
    const std::size_t V = config.n_words;
    if (T < 2) throw std::invalid_argument("make_synth_model: need at least 2 tags");
    if (config.beta < 0.0 || config.beta > 1.0)
        throw std::invalid_argument("make_synth_model: beta must be in [0, 1]");
    Rng rng(config.seed * 0x9E3779B97F4A7C15ULL + 1);

    SynthModel model;
    model.init = Tensor::full(T, 1, 1.0 / static_cast<double>(T));

    // Each tag concentrates beta of its transition mass on two successors
    // (70/30); the rest spreads uniformly. beta = 0 gives exactly uniform rows.
    model.transitions = Tensor(T, T);
    for (std::size_t i = 0; i < T; ++i) {
        std::size_t s1 = rng.uniform_index(T);
        std::size_t s2 = rng.uniform_index(T - 1);
        if (s2 >= s1) ++s2;
        for (std::size_t j = 0; j < T; ++j)
            model.transitions.at(i, j) = (1.0 - config.beta) / static_cast<double>(T);
        model.transitions.at(i, s1) += config.beta * 0.7;
        model.transitions.at(i, s2) += config.beta * 0.3;
    }

    // Words are grouped by a primary tag; each tag also borrows `ambiguity`
    // of its emission mass from the next tag's group, so single-token
    // evidence stays uncertain while the tag chain disambiguates.
    model.emissions = Tensor(T, V);
    for (std::size_t j = 0; j < T; ++j) {
        std::vector<double> weights(V, 0.0);
        for (std::size_t w = 0; w < V; ++w) {
            const std::size_t primary = w % T;
            if (primary == j)
                weights[w] = (1.0 - config.ambiguity) * (1.0 + 0.5 * rng.uniform());
            else if (primary == (j + 1) % T)
                weights[w] = config.ambiguity * (1.0 + 0.5 * rng.uniform());
        }
        double total = 0.0;
        for (double w : weights) total += w;
        for (std::size_t w = 0; w < V; ++w) model.emissions.at(j, w) = weights[w] / total;
    }
    return model;
}

namespace {

RawSentence sample_sentence(const SynthModel& model, const SynthConfig& config, Rng& rng) {
    const std::size_t T = config.n_tags;
    const std::size_t V = config.n_words;
    const std::size_t len = config.len_min + rng.uniform_index(config.len_max - config.len_min + 1);
    RawSentence sentence;
    std::size_t tag = 0;
    for (std::size_t t = 0; t < len; ++t) {
        std::vector<double> row(T);
        if (t == 0)
            for (std::size_t j = 0; j < T; ++j) row[j] = model.init[j];
        else
            for (std::size_t j = 0; j < T; ++j) row[j] = model.transitions.at(tag, j);
        tag = rng.categorical(row);
        std::vector<double> emis(V);
        for (std::size_t w = 0; w < V; ++w) emis[w] = model.emissions.at(tag, w);
        const std::size_t word = rng.categorical(emis);
        sentence.tokens.push_back(synth_word_name(word));
        sentence.tags.push_back(synth_tag_name(tag));
    }
    return sentence;
}

}  // namespace

SynthTask synth_markov_task(const SynthConfig& config) {
    SynthTask task;
    task.model = make_synth_model(config);
    Rng rng(config.seed);
    for (std::size_t i = 0; i < config.n_train; ++i)
        task.train.push_back(sample_sentence(task.model, config, rng));
    for (std::size_t i = 0; i < config.n_dev; ++i)
        task.dev.push_back(sample_sentence(task.model, config, rng));
    for (std::size_t i = 0; i < config.n_test; ++i)
        task.test.push_back(sample_sentence(task.model, config, rng));
    return task;
}

}  // namespace seqlab
