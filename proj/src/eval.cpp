#include "gcegnn/eval.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace gcegnn::eval {

std::size_t rank_of(std::span<const double> scores, std::size_t label) {
  if (label >= scores.size()) throw std::out_of_range("rank_of: label outside score vector");
  const double target = scores[label];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > target || (scores[i] == target && i < label)) ++rank;
  }
  return rank;
}

Metrics metrics(std::span<const std::size_t> ranks, std::size_t cutoff) {
  if (ranks.empty()) throw std::invalid_argument("metrics: empty rank list");
  double hits = 0.0, reciprocal = 0.0;
  for (std::size_t r : ranks) {
    if (r == 0) throw std::invalid_argument("metrics: ranks are 1-based");
    if (r <= cutoff) {
      hits += 1.0;
      reciprocal += 1.0 / static_cast<double>(r);
    }
  }
  const auto n = static_cast<double>(ranks.size());
  return {100.0 * hits / n, 100.0 * reciprocal / n};
}

EvalReport report_from_ranks(std::span<const std::size_t> ranks, std::string name, std::string fingerprint) {
  EvalReport r;
  r.name = std::move(name);
  r.fingerprint = std::move(fingerprint);
  const Metrics at10 = metrics(ranks, 10), at20 = metrics(ranks, 20);
  r.p10 = at10.precision;
  r.mrr10 = at10.mrr;
  r.p20 = at20.precision;
  r.mrr20 = at20.mrr;
  r.examples = ranks.size();
  return r;
}

std::vector<std::size_t> compute_ranks(const model::Model& model, std::span<const corpus::Example> examples,
                                       const graphs::GlobalGraph* graph, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("compute_ranks: batch size must be positive");
  std::vector<std::size_t> ranks;
  ranks.reserve(examples.size());
  const auto& cfg = model.config();
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t end = std::min(examples.size(), start + batch_size);
    std::vector<std::vector<int>> prefixes;
    for (std::size_t i = start; i < end; ++i) prefixes.push_back(examples[i].prefix);
    const auto batch = model::make_batch(prefixes, cfg.hops > 0 ? graph : nullptr, cfg.hops, model.item_count(),
                                         cfg.max_length);
    const Matrix scores = model.scores(batch);
    for (std::size_t i = start; i < end; ++i) {
      ranks.push_back(rank_of(scores.row(i - start), static_cast<std::size_t>(examples[i].label - 1)));
    }
  }
  return ranks;
}

ReportFormat parse_report_format(const std::string& text) {
  if (text == "table") return ReportFormat::table;
  if (text == "jsonl") return ReportFormat::jsonl;
  throw std::invalid_argument("report format must be table|jsonl, got '" + text + "'");
}

void write_reports(std::ostream& out, std::span<const EvalReport> reports, ReportFormat format) {
  if (format == ReportFormat::jsonl) {
    for (const auto& r : reports) {
      nlohmann::ordered_json j;
      j["name"] = r.name;
      if (r.ok()) {
        j["P@10"] = r.p10;
        j["P@20"] = r.p20;
        j["MRR@10"] = r.mrr10;
        j["MRR@20"] = r.mrr20;
        j["examples"] = r.examples;
      } else {
        j["error"] = r.error;
      }
      j["fingerprint"] = r.fingerprint;
      j["data_fingerprint"] = r.data_fingerprint;
      out << j.dump() << '\n';
    }
    return;
  }
  std::size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.name.size());
  out << std::left << std::setw(static_cast<int>(width)) << "model" << std::right;
  for (const char* h : {"P@10", "P@20", "MRR@10", "MRR@20", "examples"}) out << std::setw(10) << h;
  out << '\n' << std::string(width + 50, '-') << '\n';
  for (const auto& r : reports) {
    out << std::left << std::setw(static_cast<int>(width)) << r.name << std::right;
    if (!r.ok()) {
      out << "  failed: " << r.error << '\n';
      continue;
    }
    out << std::fixed << std::setprecision(2);
    for (double v : {r.p10, r.p20, r.mrr10, r.mrr20}) out << std::setw(10) << v;
    out << std::setw(10) << r.examples << '\n';
    out.unsetf(std::ios::floatfield);
  }
}

}  // namespace gcegnn::eval
