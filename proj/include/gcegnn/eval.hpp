#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gcegnn/corpus.hpp"
#include "gcegnn/graphs.hpp"
#include "gcegnn/model.hpp"

namespace gcegnn::eval {

// 1-based rank of `label` (0-based column) under descending score with ties
// broken by ascending index.
std::size_t rank_of(std::span<const double> scores, std::size_t label);

struct Metrics {
  double precision = 0.0;  // hit rate, percent
  double mrr = 0.0;        // percent
};

// Throws std::invalid_argument for an empty rank list or a rank of zero.
Metrics metrics(std::span<const std::size_t> ranks, std::size_t cutoff);

struct EvalReport {
  std::string name;
  double p10 = 0.0;
  double p20 = 0.0;
  double mrr10 = 0.0;
  double mrr20 = 0.0;
  std::size_t examples = 0;
  std::string fingerprint;       // configuration + data
  std::string data_fingerprint;  // data only
  std::string error;  // set when the configuration failed

  bool ok() const { return error.empty(); }
};

EvalReport report_from_ranks(std::span<const std::size_t> ranks, std::string name, std::string fingerprint);

// Ranks of each example's label under the model's evaluation-mode scores.
std::vector<std::size_t> compute_ranks(const model::Model& model, std::span<const corpus::Example> examples,
                                       const graphs::GlobalGraph* graph, std::size_t batch_size = 100);

enum class ReportFormat { table, jsonl };
ReportFormat parse_report_format(const std::string& text);

void write_reports(std::ostream& out, std::span<const EvalReport> reports, ReportFormat format);

}  // namespace gcegnn::eval
