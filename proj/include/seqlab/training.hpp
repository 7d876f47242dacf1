#pragma once

#include <functional>

#include "seqlab/model.hpp"

namespace seqlab {

// Non-finite actor loss; the CLI maps it to exit 3.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    std::size_t n_step = 2;        // TD step count
    double ml_lr = 0.0005;         // Adam, maximum-likelihood phase
    double rl_step = 0.5;          // fixed ascent step for RL objectives
    double critic_lr = 0.0005;     // Adam, critic
    std::size_t batch_size = 32;
    double max_grad_norm = 5.0;
    double dropout = 0.5;
    double ss_k = 10.0;            // inverse-sigmoid schedule parameter
    std::uint64_t seed = 1;
    std::size_t epochs = 50;
    std::size_t finetune_epochs = 25;
    std::size_t patience = 10;
    bool rl_use_adam = false;      // diverges in practice; kept selectable

    void validate() const;
};

// --- Optimizers ---------------------------------------------------------------

class Adam {
public:
    Adam() = default;
    Adam(ParamSet params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);

    // Applies one update from the accumulated grads; does not zero them.
    void step();

    struct Slot {
        Tensor m, v;
    };
    std::vector<Slot>& slots() { return slots_; }
    std::size_t step_count() const { return step_count_; }
    void restore(std::vector<Slot> slots, std::size_t step_count);
    const ParamSet& params() const { return params_; }
    double lr() const { return lr_; }

private:
    ParamSet params_;
    std::vector<Slot> slots_;
    double lr_ = 0.0, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    std::size_t step_count_ = 0;
};

// theta <- theta + alpha * dJ/dtheta, where Param::grad holds the gradient of
// the (negated) loss.
void ascent_step(ParamSet& params, double alpha);

// --- Rollouts and credits ------------------------------------------------------

// Greedy (or sampled) decode trace plus the actor-critic working set.
struct Rollout {
    std::vector<std::size_t> predictions;
    std::vector<NodeId> dec_states;  // d_t
    std::vector<NodeId> contexts;    // c_t
    std::vector<NodeId> log_probs;   // log p of the chosen token, scalar nodes
    std::vector<double> rewards;     // 1 when the token matches gold, else 0
    std::vector<NodeId> value_nodes; // V(t), filled by the critic pass
    std::vector<double> values;
    std::vector<double> returns;     // G_t
    std::vector<double> advantages;  // delta_t
    std::vector<double> adjusted;    // a*delta_t

    std::size_t length() const { return predictions.size(); }
};

// Requires the RNN head. Sampling draws from the softmax when rng != nullptr,
// otherwise takes the argmax (ties to the lowest index).
Rollout decode_rollout(Tape& t, Model& model, const LabeledExample& ex, Rng* sample_rng);
inline Rollout greedy_rollout(Tape& t, Model& model, const LabeledExample& ex) {
    return decode_rollout(t, model, ex, nullptr);
}

// n-step TD returns with the absorbing-terminal convention V(t) = 0 for t > l.
std::vector<double> td_returns(const std::vector<double>& rewards,
                               const std::vector<double>& values, std::size_t n);

// 0 when the advantage polarity contradicts token correctness, else 1.
int adjust(std::size_t gold, std::size_t predicted, double delta);

// Inverse sigmoid schedule: epsilon_i = k / (k + exp(i / k)).
double scheduled_sampling_epsilon(double k, std::size_t epoch);

// --- Losses (built on the caller's tape) ---------------------------------------

// Mean negative log-likelihood of a batch (teacher forcing for the RNN head).
NodeId ml_batch_loss(Tape& t, Model& model, const std::vector<const LabeledExample*>& batch,
                     bool train, Rng* dropout_rng);

// Scheduled-sampling variant: each step feeds gold with probability epsilon,
// otherwise the model's own greedy pick.
NodeId scheduled_sampling_loss(Tape& t, Model& model,
                               const std::vector<const LabeledExample*>& batch, double epsilon,
                               Rng& coin_rng, Rng* dropout_rng);

// Fills value/return/advantage fields of a rollout using the critic.
void critic_pass(Tape& t, CriticNet& critic, Rollout& rollout, std::size_t n_step);

// Actor and critic loss nodes for one example under the adjusted AC rules.
// The critic target G_t is a constant on the tape, so backward through the
// critic loss is exactly the semi-gradient update.
struct AcLosses {
    NodeId actor = -1;
    NodeId critic = -1;
};
AcLosses ac_example_losses(Tape& t, Model& model, CriticNet& critic, const LabeledExample& ex,
                           std::size_t n_step, Rollout* out_rollout = nullptr);

// REINFORCE: -(G_t - b_t) log p over a sampled rollout with n = l (Monte
// Carlo credits). The critic provides b_t when given, and is trained on the
// same squared-error loss; without a critic the baseline is zero.
AcLosses reinforce_example_losses(Tape& t, Model& model, CriticNet* critic,
                                  const LabeledExample& ex, Rng& sample_rng);

// Self-critical: -(R_sample - R_greedy) sum_t log p(sampled y_t).
NodeId self_critical_example_loss(Tape& t, Model& model, const LabeledExample& ex,
                                  Rng& sample_rng);

// --- Batch steps and loops ------------------------------------------------------

struct StepDiagnostics {
    double actor_loss = 0.0;
    double critic_loss = 0.0;
    double mean_reward = 0.0;
};

/// One Algorithm-1 step over a batch: greedy decodes, credits, adjusted actor
// ascent and semi-gradient critic update. The critic always updates, even
// when every adjusted advantage is zero. reinforce and self-critical run
// without one.
StepDiagnostics ac_train_step(Model& model, CriticNet* critic,
                              const std::vector<const LabeledExample*>& batch,
                              const TrainConfig& config, Adam& critic_opt,
                              Objective objective = Objective::Ac, Rng* sample_rng = nullptr,
                              Adam* rl_adam = nullptr);

struct EpochRow {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double dev_metric = 0.0;
};

struct TrainLog {
    std::vector<EpochRow> rows;
    std::size_t best_epoch = 0;
    double best_dev = 0.0;
};

using DevEvalFn = std::function<double(Model&)>;
using BestModelFn = std::function<void(Model&, std::size_t epoch, double dev_metric)>;

// Teacher-forcing ML training with Adam; checkpoints the best dev model via
// on_best and stops early after `patience` epochs without improvement.
TrainLog train_ml(Model& model, const std::vector<LabeledExample>& train,
                  const TrainConfig& config, const DevEvalFn& dev_eval,
                  const BestModelFn& on_best);

// RL / scheduled-sampling fine-tuning from an ML-pretrained model. The critic
// is required for ac, ac+ml and reinforce-baseline; ignored otherwise.
TrainLog finetune(Model& model, CriticNet* critic, Objective objective,
                  const std::vector<LabeledExample>& train, const TrainConfig& config,
                  const DevEvalFn& dev_eval, const BestModelFn& on_best);

}  // namespace seqlab
