#pragma once

#include "seqlab/data.hpp"
#include "seqlab/model.hpp"
#include "seqlab/training.hpp"

namespace seqlab {

// Versioned text dump of a model: structural config, vocabularies, named
// parameter tensors, optional critic and Adam state, and the training RNG.
// Values are written as hexfloats, so a load restores training bit-exactly.
struct Checkpoint {
    ModelConfig config;
    std::string objective = "ml";
    std::size_t epoch = 0;
    double best_metric = 0.0;
    std::uint64_t config_hash = 0;

    Vocabulary words, chars, tags;

    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, Tensor>> critic_params;
    std::vector<std::pair<std::string, Tensor>> adam_m, adam_v;
    std::size_t adam_steps = 0;
    std::string rng_state;
};

// Canonical structural description; its FNV-1a hash is the config hash.
std::string model_signature(const ModelConfig& config, std::size_t n_words, std::size_t n_chars,
                            std::size_t n_tags);
std::uint64_t fnv1a_hash(const std::string& s);

Checkpoint make_checkpoint(Model& model, const Vocabulary& words, const Vocabulary& chars,
                           const Vocabulary& tags, const std::string& objective,
                           std::size_t epoch, double best_metric, CriticNet* critic = nullptr,
                           Adam* optimizer = nullptr);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Builds a model with the checkpoint's structure and parameter values.
Model restore_model(const Checkpoint& ckpt);
// Overwrites critic parameters by name; throws on mismatch.
void restore_critic(CriticNet& critic, const Checkpoint& ckpt);

}  // namespace seqlab
