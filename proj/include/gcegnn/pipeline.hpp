#pragma once

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "gcegnn/ablation.hpp"
#include "gcegnn/config.hpp"
#include "gcegnn/corpus.hpp"
#include "gcegnn/eval.hpp"
#include "gcegnn/train.hpp"

// Stages of the work-dir pipeline. Each stage writes its artifacts, an echo of
// the resolved config and a manifest into one subdirectory:
//
//   corpus/       examples.tsv vocab.tsv train_sessions.tsv stats.json
//   graphs/       global_graph.tsv
//   checkpoints/  model.ckpt train_log.tsv
//   reports/      evaluation.{txt,jsonl}  ablation-<grid>.{txt,jsonl}
//
// A stage reads upstream artifacts only after checking them against the
// upstream manifest.
namespace gcegnn::pipeline {

inline constexpr std::string_view kToolVersion = "gcegnn 1.0.0";

// Missing or inconsistent upstream artifacts.
class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Manifest {
  std::string stage;
  std::string tool_version;
  std::string config_fingerprint;
  std::vector<std::pair<std::string, std::string>> inputs;   // path, checksum
  std::vector<std::pair<std::string, std::string>> outputs;  // path relative to the work dir, checksum
};

nlohmann::ordered_json to_json(const Manifest& manifest);
Manifest manifest_from_json(const nlohmann::ordered_json& doc);

// Reads `<work>/<dir>/manifest.json` written by `stage` and re-hashes every
// output it lists. Throws StageError naming `stage` when anything is missing
// or differs.
Manifest verify_stage(const std::filesystem::path& work_dir, std::string_view dir, std::string_view stage,
                      std::string_view manifest_name = "manifest.json");

corpus::CorpusStats preprocess(const config::RunConfig& config);

struct GraphStats {
  std::size_t items = 0;
  std::size_t edges = 0;  // directed list entries after truncation
  std::size_t max_degree = 0;
};
GraphStats build_graph(const config::RunConfig& config);

train::TrainResult train_model(const config::RunConfig& config,
                               const std::function<void(const train::EpochRecord&)>& on_epoch = {});

// Writes reports/evaluation.txt and .jsonl; returns the test report.
eval::EvalReport evaluate(const config::RunConfig& config);

// Writes reports/ablation-<grid>.txt and .jsonl.
eval::AblationOutcome ablate(const config::RunConfig& config, std::string_view grid);

}  // namespace gcegnn::pipeline
