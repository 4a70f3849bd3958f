#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gcegnn/corpus.hpp"
#include "gcegnn/eval.hpp"
#include "gcegnn/graphs.hpp"
#include "gcegnn/model.hpp"
#include "gcegnn/train.hpp"

namespace gcegnn::eval {

struct AblationVariant {
  std::string name;
  model::ModelConfig model;
};

// Named grids:
//   global       w/o global, w/o session, 1-hop, 2-hop
//   position     forward position, last-item self attention, reversed position
//   aggregation  gate, max, concat, sum
//   dropout      one variant per rate in `dropout_rates`
std::vector<AblationVariant> ablation_grid(std::string_view grid, const model::ModelConfig& base,
                                           std::span<const double> dropout_rates = {});

struct AblationData {
  std::span<const corpus::Example> train;
  std::span<const corpus::Example> validation;
  std::span<const corpus::Example> test;
  const graphs::GlobalGraph* graph = nullptr;
  std::size_t item_count = 0;
  std::string data_fingerprint;
};

struct AblationOutcome {
  std::vector<EvalReport> reports;      // one per variant, in grid order
  std::vector<double> validation_mrr20;  // best validation MRR@20 per variant (NaN on failure)
  std::optional<std::size_t> best;       // variant with the highest validation MRR@20
};

// Trains and tests every variant with the same seed and data. A failing
// variant is recorded in its report and the rest of the grid still runs.
AblationOutcome run_ablations(const AblationData& data, std::span<const AblationVariant> variants,
                              const train::TrainConfig& train_config);

}  // namespace gcegnn::eval
