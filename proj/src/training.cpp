#include "seqlab/training.hpp"

#include <algorithm>
#include <cmath>

namespace seqlab {

void TrainConfig::validate() const {
    if (n_step < 1) throw std::invalid_argument("TrainConfig: n_step must be >= 1");
    if (ml_lr <= 0 || rl_step <= 0 || critic_lr <= 0)
        throw std::invalid_argument("TrainConfig: learning rates must be positive");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (max_grad_norm <= 0) throw std::invalid_argument("TrainConfig: max_grad_norm must be positive");
    if (dropout < 0 || dropout >= 1) throw std::invalid_argument("TrainConfig: dropout must be in [0, 1)");
    if (ss_k <= 0) throw std::invalid_argument("TrainConfig: ss_k must be positive");
}

Adam::Adam(ParamSet params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    slots_.reserve(params_.size());
    for (Param* p : params_)
        slots_.push_back(Slot{Tensor(p->value.rows(), p->value.cols()),
                              Tensor(p->value.rows(), p->value.cols())});
}

void Adam::step() {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Param& p = *params_[i];
        Slot& s = slots_[i];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad[j];
            s.m[j] = beta1_ * s.m[j] + (1.0 - beta1_) * g;
            s.v[j] = beta2_ * s.v[j] + (1.0 - beta2_) * g * g;
            const double mhat = s.m[j] / bc1;
            const double vhat = s.v[j] / bc2;
            p.value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void Adam::restore(std::vector<Slot> slots, std::size_t step_count) {
    if (slots.size() != slots_.size())
        throw std::invalid_argument("Adam::restore: slot count mismatch");
    slots_ = std::move(slots);
    step_count_ = step_count;
}

void ascent_step(ParamSet& params, double alpha) {
    // Param::grad is d(loss)/d(theta) with loss = -J, so ascent on J is a
    // descent step here.
    for (Param* p : params)
        for (std::size_t j = 0; j < p->value.size(); ++j) p->value[j] -= alpha * p->grad[j];
}

std::vector<double> td_returns(const std::vector<double>& rewards,
                               const std::vector<double>& values, std::size_t n) {
    if (n < 1) throw std::invalid_argument("td_returns: n must be >= 1");
    const std::size_t l = rewards.size();
    std::vector<double> returns(l, 0.0);
    for (std::size_t t = 0; t < l; ++t) {
        double g = 0.0;
        for (std::size_t i = 0; i < n && t + i < l; ++i) g += rewards[t + i];
        if (t + n < l) g += values[t + n];  // V(t) = 0 beyond the episode
        returns[t] = g;
    }
    return returns;
}

int adjust(std::size_t gold, std::size_t predicted, double delta) {
    if (predicted == gold && delta < 0.0) return 0;
    if (predicted != gold && delta > 0.0) return 0;
    return 1;
}

double scheduled_sampling_epsilon(double k, std::size_t epoch) {
    return k / (k + std::exp(static_cast<double>(epoch) / k));
}

namespace {

std::size_t sample_from_log_probs(const Tensor& log_probs, Rng& rng) {
    std::vector<double> probs(log_probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = std::exp(log_probs[i]);
    return rng.categorical(probs);
}

// Gold token at a rollout position; past the end of a transduction gold
// sequence everything reads as PAD.
std::size_t gold_at(const LabeledExample& ex, std::size_t t) {
    return t < ex.tags.size() ? ex.tags[t] : Vocabulary::kPad;
}

}  // namespace

Rollout decode_rollout(Tape& t, Model& model, const LabeledExample& ex, Rng* sample_rng) {
    if (model.config().head != Head::Rnn)
        throw std::invalid_argument("decode_rollout: requires the RNN decoder head");
    RnnDecoder& dec = *model.rnn;
    const bool transduce = model.config().task == Task::Transduce;

    // Decodes the way the model would at test time: no dropout.
    std::vector<NodeId> enc = model.encoder.encode(t, ex, /*train=*/false, nullptr);
    NodeId enc_matrix = dec.use_attention ? t.concat_cols(enc) : -1;
    const std::size_t max_steps = transduce ? model.config().max_decode : enc.size();

    Rollout rollout;
    RnnDecoder::State state = dec.initial(t);
    for (std::size_t i = 0; i < max_steps; ++i) {
        RnnDecoder::StepOut out = dec.step(t, state, enc, enc_matrix, i);
        const Tensor& log_probs = t.value(out.log_probs);
        const std::size_t picked =
            sample_rng ? sample_from_log_probs(log_probs, *sample_rng) : log_probs.argmax();
        rollout.predictions.push_back(picked);
        rollout.dec_states.push_back(out.dec_state);
        rollout.contexts.push_back(out.context);
        rollout.log_probs.push_back(t.pick(out.log_probs, picked));
        rollout.rewards.push_back(picked == gold_at(ex, i) ? 1.0 : 0.0);
        state = out.state;
        state.prev_token = picked;
        if (transduce && picked == Vocabulary::kEos) break;
    }
    return rollout;
}

void critic_pass(Tape& t, CriticNet& critic, Rollout& rollout, std::size_t n_step) {
    const std::size_t l = rollout.length();
    rollout.value_nodes.resize(l);
    rollout.values.resize(l);
    for (std::size_t i = 0; i < l; ++i) {
        rollout.value_nodes[i] = critic.forward(t, rollout.dec_states[i], rollout.contexts[i]);
        rollout.values[i] = t.value(rollout.value_nodes[i])[0];
    }
    rollout.returns = td_returns(rollout.rewards, rollout.values, n_step);
    rollout.advantages.resize(l);
    for (std::size_t i = 0; i < l; ++i)
        rollout.advantages[i] = rollout.returns[i] - rollout.values[i];
}

namespace {

// loss_critic = sum_t (G_t - V(t))^2 with G_t constant, which makes the
// backward pass the semi-gradient 2 delta_t dV(t)/dtheta'.
NodeId critic_loss_node(Tape& t, const Rollout& rollout) {
    NodeId total = t.constant(Tensor::scalar(0.0));
    for (std::size_t i = 0; i < rollout.length(); ++i) {
        NodeId delta = t.add(t.constant(Tensor::scalar(rollout.returns[i])),
                             t.negate(rollout.value_nodes[i]));
        total = t.add(total, t.mul(delta, delta));
    }
    return total;
}

}  // namespace

AcLosses ac_example_losses(Tape& t, Model& model, CriticNet& critic, const LabeledExample& ex,
                           std::size_t n_step, Rollout* out_rollout) {
    Rollout rollout = greedy_rollout(t, model, ex);
    critic_pass(t, critic, rollout, n_step);

    const std::size_t l = rollout.length();
    rollout.adjusted.resize(l);
    NodeId actor = t.constant(Tensor::scalar(0.0));
    for (std::size_t i = 0; i < l; ++i) {
        const double delta = rollout.advantages[i];
        rollout.adjusted[i] = adjust(gold_at(ex, i), rollout.predictions[i], delta) * delta;
        if (rollout.adjusted[i] != 0.0)
            actor = t.add(actor, t.scale(rollout.log_probs[i], -rollout.adjusted[i]));
    }
    AcLosses losses{actor, critic_loss_node(t, rollout)};
    if (out_rollout) *out_rollout = std::move(rollout);
    return losses;
}

AcLosses reinforce_example_losses(Tape& t, Model& model, CriticNet* critic,
                                  const LabeledExample& ex, Rng& sample_rng) {
    Rollout rollout = decode_rollout(t, model, ex, &sample_rng);
    const std::size_t l = rollout.length();
    if (critic) {
        critic_pass(t, *critic, rollout, l);  // n = l: Monte-Carlo credits
    } else {
        rollout.values.assign(l, 0.0);
        rollout.returns = td_returns(rollout.rewards, rollout.values, l);
        rollout.advantages = rollout.returns;
    }
    NodeId actor = t.constant(Tensor::scalar(0.0));
    for (std::size_t i = 0; i < l; ++i) {
        const double coeff = rollout.returns[i] - (critic ? rollout.values[i] : 0.0);
        if (coeff != 0.0) actor = t.add(actor, t.scale(rollout.log_probs[i], -coeff));
    }
    AcLosses losses{actor, critic ? critic_loss_node(t, rollout) : -1};
    return losses;
}

NodeId self_critical_example_loss(Tape& t, Model& model, const LabeledExample& ex,
                                  Rng& sample_rng) {
    Rollout sampled = decode_rollout(t, model, ex, &sample_rng);
    Rollout greedy = greedy_rollout(t, model, ex);
    double r_sampled = 0.0, r_greedy = 0.0;
    for (double r : sampled.rewards) r_sampled += r;
    for (double r : greedy.rewards) r_greedy += r;
    const double coeff = r_sampled - r_greedy;
    NodeId loss = t.constant(Tensor::scalar(0.0));
    if (coeff == 0.0) return loss;
    for (NodeId logp : sampled.log_probs) loss = t.add(loss, t.scale(logp, -coeff));
    return loss;
}

NodeId ml_batch_loss(Tape& t, Model& model, const std::vector<const LabeledExample*>& batch,
                     bool train, Rng* dropout_rng) {
    if (batch.empty()) throw std::invalid_argument("ml_batch_loss: empty batch");
    NodeId total = t.constant(Tensor::scalar(0.0));
    for (const LabeledExample* ex : batch)
        total = t.add(total, model.sequence_log_prob(t, *ex, train, dropout_rng));
    return t.scale(total, -1.0 / static_cast<double>(batch.size()));
}

NodeId scheduled_sampling_loss(Tape& t, Model& model,
                               const std::vector<const LabeledExample*>& batch, double epsilon,
                               Rng& coin_rng, Rng* dropout_rng) {
    if (model.config().head != Head::Rnn)
        throw std::invalid_argument("scheduled_sampling_loss: requires the RNN decoder head");
    RnnDecoder& dec = *model.rnn;
    NodeId total = t.constant(Tensor::scalar(0.0));
    for (const LabeledExample* ex : batch) {
        std::vector<NodeId> enc = model.encoder.encode(t, *ex, /*train=*/true, dropout_rng);
        NodeId enc_matrix = dec.use_attention ? t.concat_cols(enc) : -1;
        RnnDecoder::State state = dec.initial(t);
        for (std::size_t i = 0; i < ex->tags.size(); ++i) {
            RnnDecoder::StepOut out = dec.step(t, state, enc, enc_matrix, i);
            total = t.add(total, t.pick(out.log_probs, ex->tags[i]));
            state = out.state;
            state.prev_token =
                coin_rng.bernoulli(epsilon) ? ex->tags[i] : t.value(out.log_probs).argmax();
        }
    }
    return t.scale(total, -1.0 / static_cast<double>(batch.size()));
}

StepDiagnostics ac_train_step(Model& model, CriticNet* critic,
                              const std::vector<const LabeledExample*>& batch,
                              const TrainConfig& config, Adam& critic_opt, Objective objective,
                              Rng* sample_rng, Adam* rl_adam) {
    if (batch.empty()) throw std::invalid_argument("ac_train_step: empty batch");
    const bool needs_critic = objective == Objective::Ac || objective == Objective::AcMl ||
                              objective == Objective::ReinforceBaseline;
    if (needs_critic && critic == nullptr)
        throw std::invalid_argument("ac_train_step: objective " + to_string(objective) +
                                    " requires a critic");
    Tape t;
    NodeId actor_total = t.constant(Tensor::scalar(0.0));
    NodeId critic_total = t.constant(Tensor::scalar(0.0));
    bool have_critic_loss = false;
    double reward_sum = 0.0;
    std::size_t reward_count = 0;

    for (const LabeledExample* ex : batch) {
        AcLosses losses;
        Rollout rollout;
        switch (objective) {
            case Objective::Ac:
                losses = ac_example_losses(t, model, *critic, *ex, config.n_step, &rollout);
                break;
            case Objective::AcMl: {
                losses = ac_example_losses(t, model, *critic, *ex, config.n_step, &rollout);
                // J_ac + J_ml, unit weights; the ML term is a second forward
                // pass conditioned on gold history.
                NodeId logp = model.sequence_log_prob(t, *ex, /*train=*/false, nullptr);
                losses.actor = t.add(losses.actor, t.negate(logp));
                break;
            }
            case Objective::Reinforce:
                losses = reinforce_example_losses(t, model, nullptr, *ex, *sample_rng);
                break;
            case Objective::ReinforceBaseline:
                losses = reinforce_example_losses(t, model, critic, *ex, *sample_rng);
                break;
            case Objective::SelfCritical:
                losses.actor = self_critical_example_loss(t, model, *ex, *sample_rng);
                break;
            default:
                throw std::invalid_argument("ac_train_step: not an RL objective");
        }
        actor_total = t.add(actor_total, losses.actor);
        if (losses.critic != -1) {
            critic_total = t.add(critic_total, losses.critic);
            have_critic_loss = true;
        }
        for (double r : rollout.rewards) {
            reward_sum += r;
            ++reward_count;
        }
    }

    const double scale = 1.0 / static_cast<double>(batch.size());
    NodeId actor_loss = t.scale(actor_total, scale);
    NodeId critic_loss = t.scale(critic_total, scale);

    StepDiagnostics diag;
    diag.actor_loss = t.value(actor_loss)[0];
    diag.critic_loss = t.value(critic_loss)[0];
    if (reward_count > 0) diag.mean_reward = reward_sum / static_cast<double>(reward_count);
    if (!std::isfinite(diag.actor_loss))
        throw DivergenceError("actor loss diverged: " + std::to_string(diag.actor_loss));

    ParamSet actor_params = model.params();
    for (Param* p : actor_params) p->zero_grad();
    t.backward(actor_loss);
    clip_global_norm(actor_params, config.max_grad_norm);
    if (config.rl_use_adam && rl_adam != nullptr)
        rl_adam->step();
    else
        ascent_step(actor_params, config.rl_step);
    for (Param* p : actor_params) p->zero_grad();

    if (have_critic_loss) {
        ParamSet critic_params = critic->params();
        for (Param* p : critic_params) p->zero_grad();
        t.backward(critic_loss);
        clip_global_norm(critic_params, config.max_grad_norm);
        critic_opt.step();
        for (Param* p : critic_params) p->zero_grad();
    }
    return diag;
}

namespace {

void shuffle_indices(std::vector<std::size_t>& order, Rng& rng) {
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_index(i)]);
}

std::vector<std::vector<const LabeledExample*>> make_batches(
    const std::vector<LabeledExample>& data, const std::vector<std::size_t>& order,
    std::size_t batch_size) {
    std::vector<std::vector<const LabeledExample*>> batches;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        std::vector<const LabeledExample*> batch;
        for (std::size_t j = i; j < std::min(i + batch_size, order.size()); ++j)
            batch.push_back(&data[order[j]]);
        batches.push_back(std::move(batch));
    }
    return batches;
}

}  // namespace

TrainLog train_ml(Model& model, const std::vector<LabeledExample>& train,
                  const TrainConfig& config, const DevEvalFn& dev_eval,
                  const BestModelFn& on_best) {
    config.validate();
    Rng shuffle_rng(config.seed);
    Rng dropout_rng(config.seed ^ 0x5DEECE66DULL);
    Adam adam(model.params(), config.ml_lr);
    ParamSet params = model.params();

    TrainLog log;
    log.best_dev = -1.0;
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_indices(order, shuffle_rng);
        double loss_sum = 0.0;
        std::size_t n_batches = 0;
        for (auto& batch : make_batches(train, order, config.batch_size)) {
            Tape t;
            NodeId loss = ml_batch_loss(t, model, batch, /*train=*/true, &dropout_rng);
            loss_sum += t.value(loss)[0];
            ++n_batches;
            for (Param* p : params) p->zero_grad();
            t.backward(loss);
            clip_global_norm(params, config.max_grad_norm);
            adam.step();
            for (Param* p : params) p->zero_grad();
        }
        const double train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(1, n_batches));
        const double dev = dev_eval ? dev_eval(model) : 0.0;
        log.rows.push_back({epoch, train_loss, dev});
        if (dev > log.best_dev) {
            log.best_dev = dev;
            log.best_epoch = epoch;
            if (on_best) on_best(model, epoch, dev);
        } else if (epoch - log.best_epoch >= config.patience) {
            break;
        }
    }
    return log;
}

TrainLog finetune(Model& model, CriticNet* critic, Objective objective,
                  const std::vector<LabeledExample>& train, const TrainConfig& config,
                  const DevEvalFn& dev_eval, const BestModelFn& on_best) {
    config.validate();
    const bool needs_critic = objective == Objective::Ac || objective == Objective::AcMl ||
                              objective == Objective::ReinforceBaseline;
    if (needs_critic && critic == nullptr)
        throw std::invalid_argument("finetune: objective " + to_string(objective) +
                                    " requires a critic");
    if (objective == Objective::Ml)
        throw std::invalid_argument("finetune: use train_ml for the ml objective");

    Rng shuffle_rng(config.seed);
    Rng sample_rng(config.seed ^ 0xC0FFEEULL);
    Rng dropout_rng(config.seed ^ 0x5DEECE66DULL);
    Adam critic_opt = critic ? Adam(critic->params(), config.critic_lr) : Adam();
    Adam ml_opt;  // scheduled sampling stays an ML-style objective
    Adam rl_adam;
    if (objective == Objective::ScheduledSampling) ml_opt = Adam(model.params(), config.ml_lr);
    if (config.rl_use_adam) rl_adam = Adam(model.params(), config.ml_lr);

    ParamSet params = model.params();
    TrainLog log;
    log.best_dev = -1.0;
    // The pre-trained model is the epoch-0 candidate: fine-tuning keeps it
    // when no later epoch improves the dev metric.
    if (dev_eval) {
        log.best_dev = dev_eval(model);
        log.best_epoch = 0;
        if (on_best) on_best(model, 0, log.best_dev);
    }
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= config.finetune_epochs; ++epoch) {
        shuffle_indices(order, shuffle_rng);
        double loss_sum = 0.0;
        std::size_t n_batches = 0;
        for (auto& batch : make_batches(train, order, config.batch_size)) {
            if (objective == Objective::ScheduledSampling) {
                const double eps = scheduled_sampling_epsilon(config.ss_k, epoch - 1);
                Tape t;
                NodeId loss = scheduled_sampling_loss(t, model, batch, eps, sample_rng,
                                                      &dropout_rng);
                loss_sum += t.value(loss)[0];
                for (Param* p : params) p->zero_grad();
                t.backward(loss);
                clip_global_norm(params, config.max_grad_norm);
                ml_opt.step();
                for (Param* p : params) p->zero_grad();
            } else {
                StepDiagnostics diag =
                    ac_train_step(model, critic, batch, config, critic_opt, objective,
                                  &sample_rng, config.rl_use_adam ? &rl_adam : nullptr);
                loss_sum += diag.actor_loss;
            }
            ++n_batches;
        }
        const double train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(1, n_batches));
        const double dev = dev_eval ? dev_eval(model) : 0.0;
        log.rows.push_back({epoch, train_loss, dev});
        if (dev > log.best_dev) {
            log.best_dev = dev;
            log.best_epoch = epoch;
            if (on_best) on_best(model, epoch, dev);
        } else if (epoch - log.best_epoch >= config.patience) {
            break;
        }
    }
    return log;
}

}  // namespace seqlab
