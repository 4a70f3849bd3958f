#include "gcegnn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "gcegnn/eval.hpp"

namespace gcegnn::train {

void TrainConfig::validate() const {
  if (batch_size == 0) throw TrainingError("batch size must be >= 1");
  if (!(lr > 0.0)) throw TrainingError("learning rate must be > 0");
  if (!(lr_decay_factor > 0.0)) throw TrainingError("learning-rate decay factor must be > 0");
  if (lr_decay_every < 1) throw TrainingError("learning-rate decay interval must be >= 1 epoch");
  if (!(l2 >= 0.0)) throw TrainingError("l2 must be >= 0");
  if (max_epochs < 1) throw TrainingError("max epochs must be >= 1");
  if (patience < 1 || patience > max_epochs) throw TrainingError("patience must be in [1, max_epochs]");
}

double effective_lr(const TrainConfig& config, int epoch) {
  return config.lr * std::pow(config.lr_decay_factor, epoch / config.lr_decay_every);
}

AdamState::AdamState(const ad::ParameterStore& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& v = params[i].value;
    first_.emplace_back(v.rows(), v.cols());
    second_.emplace_back(v.rows(), v.cols());
  }
}

void AdamState::step(ad::ParameterStore& params, double lr, double l2) {
  if (params.size() != first_.size()) throw TrainingError("optimizer state does not match the parameter set");
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (double g : params[p].grad.values()) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter " + params[p].name);
    }
  }
  ++steps_;
  const double correction1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    ad::Parameter& param = params[p];
    if (!param.trainable) continue;
    Matrix& m = first_[p];
    Matrix& v = second_[p];
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      const double g = param.grad[i] + l2 * param.value[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      param.value[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

namespace {

ValidationScore validate_model(const model::Model& m, std::span<const corpus::Example> validation,
                               const graphs::GlobalGraph* graph, std::size_t batch_size) {
  const auto ranks = eval::compute_ranks(m, validation, graph, batch_size);
  const auto at20 = eval::metrics(ranks, 20);
  return {at20.precision, at20.mrr};
}

}  // namespace

TrainResult train(std::span<const corpus::Example> train_examples, std::span<const corpus::Example> validation,
                  const graphs::GlobalGraph* graph, std::size_t item_count, const model::ModelConfig& model_config,
                  const TrainConfig& config, const Validator& validator,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (train_examples.empty()) throw TrainingError("no training examples");
  if (validation.empty() && !validator) throw TrainingError("validation set is empty");

  model::Model current(model_config, item_count, config.seed);
  TrainResult result{current, {}, -1};
  AdamState adam(current.parameters(), config.beta1, config.beta2, config.eps);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const graphs::GlobalGraph* used_graph = model_config.hops > 0 ? graph : nullptr;

  std::vector<std::size_t> order(train_examples.size());
  std::iota(order.begin(), order.end(), 0);
  double best = -std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = effective_lr(config, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<std::vector<int>> prefixes;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        prefixes.push_back(train_examples[order[i]].prefix);
        labels.push_back(train_examples[order[i]].label);
      }
      const auto batch =
          model::make_batch(prefixes, used_graph, model_config.hops, item_count, model_config.max_length);
      current.parameters().zero_grad();
      {
        ad::Tape tape;
        ad::Var loss = current.loss(tape, batch, labels, true, &rng);
        loss_sum += loss.value()[0] * static_cast<double>(end - start);
        tape.backward(loss);
      }
      adam.step(current.parameters(), lr, config.l2);
    }

    const ValidationScore score =
        validator ? validator(current, epoch) : validate_model(current, validation, used_graph, config.batch_size);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    EpochRecord record{epoch, lr, loss_sum / static_cast<double>(order.size()), score.p20, score.mrr20, seconds};
    result.log.push_back(record);
    if (on_epoch) on_epoch(record);

    if (score.mrr20 > best) {
      best = score.mrr20;
      since_best = 0;
      result.best_epoch = epoch;
      result.model = current;
    } else if (++since_best >= config.patience) {
      break;
    }
    if (score.stop) break;
  }
  return result;
}

void write_log(std::ostream& out, std::span<const EpochRecord> log) {
  for (const auto& r : log) {
    out << r.epoch << '\t' << r.lr << '\t' << r.train_loss << '\t' << r.val_p20 << '\t' << r.val_mrr20 << '\t'
        << r.seconds << '\n';
  }
}

}  // namespace gcegnn::train
