#include "gcegnn/ablation.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "gcegnn/config.hpp"
#include "gcegnn/hashing.hpp"

namespace gcegnn::eval {

std::vector<AblationVariant> ablation_grid(std::string_view grid, const model::ModelConfig& base,
                                           std::span<const double> dropout_rates) {
  std::vector<AblationVariant> out;
  auto variant = [&](std::string name, auto edit) {
    model::ModelConfig c = base;
    edit(c);
    out.push_back({std::move(name), c});
  };
  if (grid == "global") {
    variant("w/o global", [](auto& c) { c.hops = 0; c.use_session_layer = true; });
    variant("w/o session", [](auto& c) { c.hops = std::max(c.hops, 1); c.use_session_layer = false; });
    variant("1-hop", [](auto& c) { c.hops = 1; c.use_session_layer = true; });
    variant("2-hop", [](auto& c) { c.hops = 2; c.use_session_layer = true; });
  } else if (grid == "position") {
    variant("forward position", [](auto& c) { c.position_mode = model::PositionMode::forward; });
    variant("self attention", [](auto& c) { c.position_mode = model::PositionMode::self_attention; });
    variant("reversed position", [](auto& c) { c.position_mode = model::PositionMode::reversed; });
  } else if (grid == "aggregation") {
    for (auto a : {model::Aggregation::gate, model::Aggregation::max, model::Aggregation::concat,
                   model::Aggregation::sum}) {
      variant(std::string(model::to_string(a)), [a](auto& c) { c.aggregation = a; });
    }
  } else if (grid == "dropout") {
    if (dropout_rates.empty()) throw std::invalid_argument("dropout grid needs at least one rate");
    for (double rate : dropout_rates) {
      std::ostringstream name;
      name << "dropout " << rate;
      variant(name.str(), [rate](auto& c) { c.dropout_global = rate; });
    }
  } else {
    throw std::invalid_argument("unknown ablation grid '" + std::string(grid) +
                                "' (expected global|position|aggregation|dropout)");
  }
  return out;
}

AblationOutcome run_ablations(const AblationData& data, std::span<const AblationVariant> variants,
                              const train::TrainConfig& train_config) {
  AblationOutcome outcome;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const auto& v = variants[i];
    const std::string fp = hash_text(config::model_config_to_json(v.model).dump() + "|" + data.data_fingerprint);
    try {
      auto trained = train::train(data.train, data.validation, data.graph, data.item_count, v.model, train_config);
      const double val = trained.log.at(static_cast<std::size_t>(trained.best_epoch)).val_mrr20;
      const auto ranks = compute_ranks(trained.model, data.test, data.graph, train_config.batch_size);
      outcome.reports.push_back(report_from_ranks(ranks, v.name, fp));
      outcome.reports.back().data_fingerprint = data.data_fingerprint;
      outcome.validation_mrr20.push_back(val);
      if (val > best) {
        best = val;
        outcome.best = i;
      }
    } catch (const std::exception& e) {
      EvalReport failed;
      failed.name = v.name;
      failed.fingerprint = fp;
      failed.data_fingerprint = data.data_fingerprint;
      failed.error = e.what();
      outcome.reports.push_back(std::move(failed));
      outcome.validation_mrr20.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return outcome;
}

}  // namespace gcegnn::eval
