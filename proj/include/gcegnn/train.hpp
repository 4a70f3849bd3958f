#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "gcegnn/autodiff.hpp"
#include "gcegnn/corpus.hpp"
#include "gcegnn/graphs.hpp"
#include "gcegnn/model.hpp"

namespace gcegnn::train {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t batch_size = 100;
  double lr = 0.001;
  double lr_decay_factor = 0.1;
  int lr_decay_every = 3;
  double l2 = 1e-5;
  int max_epochs = 10;
  int patience = 3;
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// lr * decay_factor^floor(epoch / decay_every), epoch counted from 0.
double effective_lr(const TrainConfig& config, int epoch);

class AdamState {
 public:
  AdamState(const ad::ParameterStore& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // grad += l2 * value, then a bias-corrected Adam update of every trainable
  // parameter. Throws TrainingError naming the first non-finite gradient.
  void step(ad::ParameterStore& params, double lr, double l2);

  std::size_t steps() const { return steps_; }
  std::size_t entries() const { return first_.size(); }
  const Matrix& first_moment(std::size_t i) const { return first_[i]; }
  const Matrix& second_moment(std::size_t i) const { return second_[i]; }

 private:
  double beta1_, beta2_, eps_;
  std::size_t steps_ = 0;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_p20 = 0.0;
  double val_mrr20 = 0.0;
  double seconds = 0.0;
};

struct ValidationScore {
  double p20 = 0.0;
  double mrr20 = 0.0;
  bool stop = false;  // end training after this epoch
};

// Replaces the built-in validation pass; used to drive early stopping in tests.
using Validator = std::function<ValidationScore(const model::Model&, int epoch)>;

struct TrainResult {
  model::Model model;  // parameters of the best validation epoch
  std::vector<EpochRecord> log;
  int best_epoch = -1;
};

// Shuffles, batches and trains on `train_examples`; keeps the parameters with
// the best validation MRR@20 and stops after `patience` epochs without
// improvement. `graph` may be null when model_config.hops == 0.
TrainResult train(std::span<const corpus::Example> train_examples, std::span<const corpus::Example> validation,
                  const graphs::GlobalGraph* graph, std::size_t item_count, const model::ModelConfig& model_config,
                  const TrainConfig& config, const Validator& validator = {},
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// `epoch <TAB> lr <TAB> train_loss <TAB> val_P@20 <TAB> val_MRR@20 <TAB> seconds`
void write_log(std::ostream& out, std::span<const EpochRecord> log);

}  // namespace gcegnn::train
