#include "gcegnn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gcegnn/checkpoint.hpp"
#include "gcegnn/graphs.hpp"
#include "gcegnn/hashing.hpp"

namespace gcegnn::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr const char* kExamples = "corpus/examples.tsv";
constexpr const char* kVocab = "corpus/vocab.tsv";
constexpr const char* kTrainSessions = "corpus/train_sessions.tsv";
constexpr const char* kStats = "corpus/stats.json";
constexpr const char* kGraph = "graphs/global_graph.tsv";
constexpr const char* kCheckpoint = "checkpoints/model.ckpt";
constexpr const char* kTrainLog = "checkpoints/train_log.tsv";

void write_file(const fs::path& path, const std::string& contents) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << contents;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError("cannot read " + path.string());
  return in;
}

class StageWriter {
 public:
  StageWriter(const config::RunConfig& config, std::string stage, std::string dir)
      : work_(config.work_dir), dir_(std::move(dir)) {
    manifest_.stage = std::move(stage);
    manifest_.tool_version = std::string(kToolVersion);
    manifest_.config_fingerprint = config::fingerprint(config);
    config_echo_ = config::to_json(config).dump(2) + "\n";
  }

  void input(const std::string& name, const std::string& checksum) { manifest_.inputs.emplace_back(name, checksum); }

  // Inputs are the upstream outputs, already verified.
  void inputs_from(const Manifest& upstream) {
    for (const auto& entry : upstream.outputs) manifest_.inputs.push_back(entry);
  }

  void output(const std::string& relative, const std::string& contents) {
    write_file(work_ / relative, contents);
    manifest_.outputs.emplace_back(relative, hash_text(contents));
  }

  void output_file(const std::string& relative) {
    manifest_.outputs.emplace_back(relative, hash_file(work_ / relative));
  }

  // `tag` names the config echo and manifest when several runs share a directory.
  void finish(const std::string& tag = "") {
    output(dir_ + "/config" + (tag.empty() ? "" : "-" + tag) + ".json", config_echo_);
    write_file(work_ / dir_ / (tag.empty() ? "manifest.json" : "manifest-" + tag + ".json"),
               to_json(manifest_).dump(2) + "\n");
  }

 private:
  fs::path work_;
  std::string dir_;
  Manifest manifest_;
  std::string config_echo_;
};

struct CorpusData {
  Manifest manifest;
  std::vector<corpus::Example> train, validation, test;
  std::size_t item_count = 0;
  std::size_t longest_prefix = 0;
  std::string examples_checksum;
};

std::string checksum_of(const Manifest& m, const std::string& relative) {
  for (const auto& [path, sum] : m.outputs)
    if (path == relative) return sum;
  throw StageError("manifest of stage '" + m.stage + "' does not list " + relative);
}

CorpusData load_corpus(const config::RunConfig& config) {
  CorpusData d;
  d.manifest = verify_stage(config.work_dir, "corpus", "preprocess");
  const fs::path work(config.work_dir);
  auto in = open_input(work / kExamples);
  for (auto& e : corpus::read_examples(in)) {
    d.longest_prefix = std::max(d.longest_prefix, e.prefix.size());
    switch (e.split) {
      case corpus::Split::train: d.train.push_back(std::move(e)); break;
      case corpus::Split::validation: d.validation.push_back(std::move(e)); break;
      case corpus::Split::test: d.test.push_back(std::move(e)); break;
    }
  }
  auto vin = open_input(work / kVocab);
  d.item_count = corpus::read_vocab(vin).size();
  d.examples_checksum = checksum_of(d.manifest, kExamples);
  return d;
}

struct GraphData {
  Manifest manifest;
  graphs::GlobalGraph graph;
};

GraphData load_graph(const config::RunConfig& config, std::size_t item_count) {
  auto manifest = verify_stage(config.work_dir, "graphs", "build-graph");
  auto in = open_input(fs::path(config.work_dir) / kGraph);
  return {std::move(manifest), graphs::read_global_graph(in, item_count)};
}

model::ModelConfig resolved_model(const config::RunConfig& config, std::size_t longest_prefix) {
  model::ModelConfig m = config.model;
  if (m.max_length == 0) m.max_length = std::max<std::size_t>(longest_prefix, 1);
  return m;
}

std::string data_fingerprint(const CorpusData& corpus, const GraphData* graph) {
  return hash_text(corpus.examples_checksum + "|" + (graph ? checksum_of(graph->manifest, kGraph) : "-"));
}

std::string render_reports(std::span<const eval::EvalReport> reports, eval::ReportFormat format) {
  std::ostringstream out;
  eval::write_reports(out, reports, format);
  return out.str();
}

}  // namespace

nlohmann::ordered_json to_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["stage"] = m.stage;
  j["tool_version"] = m.tool_version;
  j["config_fingerprint"] = m.config_fingerprint;
  auto table = [](const auto& entries) {
    nlohmann::ordered_json t = nlohmann::ordered_json::object();
    for (const auto& [path, sum] : entries) t[path] = sum;
    return t;
  };
  j["inputs"] = table(m.inputs);
  j["outputs"] = table(m.outputs);
  return j;
}

Manifest manifest_from_json(const nlohmann::ordered_json& j) {
  Manifest m;
  m.stage = j.at("stage").get<std::string>();
  m.tool_version = j.at("tool_version").get<std::string>();
  m.config_fingerprint = j.at("config_fingerprint").get<std::string>();
  for (const auto& [k, v] : j.at("inputs").items()) m.inputs.emplace_back(k, v.get<std::string>());
  for (const auto& [k, v] : j.at("outputs").items()) m.outputs.emplace_back(k, v.get<std::string>());
  return m;
}

Manifest verify_stage(const fs::path& work_dir, std::string_view dir, std::string_view stage,
                      std::string_view manifest_name) {
  const std::string run = "; run `gcegnn " + std::string(stage) + "` first";
  const fs::path path = work_dir / dir / manifest_name;
  if (!fs::exists(path)) throw StageError("missing " + path.string() + run);
  Manifest m;
  try {
    std::ifstream in(path);
    m = manifest_from_json(nlohmann::ordered_json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw StageError("unreadable manifest " + path.string() + " (" + e.what() + ")" + run);
  }
  if (m.stage != stage) throw StageError(path.string() + " was written by '" + m.stage + "'" + run);
  for (const auto& [relative, expected] : m.outputs) {
    const fs::path file = work_dir / relative;
    if (!fs::exists(file)) throw StageError("missing " + file.string() + run);
    const std::string actual = hash_file(file);
    if (actual != expected) {
      throw StageError("checksum of " + file.string() + " is " + actual + " but its manifest records " + expected +
                       "; rerun `gcegnn " + std::string(stage) + "`");
    }
  }
  return m;
}

corpus::CorpusStats preprocess(const config::RunConfig& config) {
  if (config.input.empty()) throw StageError("preprocess needs an input event file (set `input` or pass --input)");
  std::ifstream in(config.input, std::ios::binary);
  if (!in) throw StageError("cannot read input events " + config.input);
  const auto events = corpus::read_events(in, config.delimiter);
  const auto filtered = corpus::filter_corpus(corpus::parse_sessions(events), config.min_item_freq,
                                              config.min_session_len);
  const auto window = static_cast<std::int64_t>(std::llround(config.test_window_days * corpus::kSecondsPerDay));
  const auto split = corpus::temporal_split(filtered, window);

  auto examples = corpus::split_sequences(split.train, corpus::Split::train);
  corpus::assign_validation(examples, config.validation_fraction, config.seed);
  const auto test = corpus::split_sequences(split.test, corpus::Split::test);
  examples.insert(examples.end(), test.begin(), test.end());
  const auto stats = corpus::compute_stats(split);

  StageWriter w(config, "preprocess", "corpus");
  w.input(config.input, hash_file(config.input));
  std::ostringstream ex, vocab, sessions;
  corpus::write_examples(ex, examples);
  corpus::write_vocab(vocab, split.train.vocab);
  corpus::write_sessions(sessions, split.train.sessions);
  nlohmann::ordered_json s;
  s["clicks"] = stats.clicks;
  s["train_examples"] = stats.train_examples;
  s["test_examples"] = stats.test_examples;
  s["items"] = stats.items;
  s["average_length"] = stats.average_length;
  w.output(kExamples, ex.str());
  w.output(kVocab, vocab.str());
  w.output(kTrainSessions, sessions.str());
  w.output(kStats, s.dump(2) + "\n");
  w.finish();
  return stats;
}

GraphStats build_graph(const config::RunConfig& config) {
  const auto upstream = verify_stage(config.work_dir, "corpus", "preprocess");
  const fs::path work(config.work_dir);
  auto vin = open_input(work / kVocab);
  const std::size_t items = corpus::read_vocab(vin).size();
  auto sin = open_input(work / kTrainSessions);
  const auto sessions = corpus::read_sessions(sin);
  const auto graph = graphs::build_global_graph(sessions, items, config.epsilon, config.top_n);

  StageWriter w(config, "build-graph", "graphs");
  w.inputs_from(upstream);
  std::ostringstream out;
  graphs::write_global_graph(out, graph);
  w.output(kGraph, out.str());
  w.finish();

  GraphStats stats;
  stats.items = items;
  stats.max_degree = graph.max_degree();
  for (std::size_t i = 1; i <= items; ++i) stats.edges += graph.neighbors(static_cast<int>(i)).size();
  return stats;
}

train::TrainResult train_model(const config::RunConfig& config,
                               const std::function<void(const train::EpochRecord&)>& on_epoch) {
  const auto data = load_corpus(config);
  std::optional<GraphData> graph;
  if (config.model.hops > 0) graph = load_graph(config, data.item_count);
  if (data.train.empty()) throw StageError("no training examples in " + std::string(kExamples));
  const auto model_config = resolved_model(config, data.longest_prefix);

  auto result = train::train(data.train, data.validation, graph ? &graph->graph : nullptr, data.item_count,
                             model_config, config.train, {}, on_epoch);

  StageWriter w(config, "train", "checkpoints");
  w.inputs_from(data.manifest);
  if (graph) w.inputs_from(graph->manifest);
  const fs::path work(config.work_dir);
  fs::create_directories(work / "checkpoints");
  checkpoint::save(work / kCheckpoint, result.model);
  w.output_file(kCheckpoint);
  std::ostringstream log;
  train::write_log(log, result.log);
  w.output(kTrainLog, log.str());
  w.finish();
  return result;
}

eval::EvalReport evaluate(const config::RunConfig& config) {
  const auto data = load_corpus(config);
  const auto ck = verify_stage(config.work_dir, "checkpoints", "train");
  const auto model = checkpoint::load(fs::path(config.work_dir) / kCheckpoint);
  if (model.item_count() != data.item_count) {
    throw StageError("checkpoint was trained on " + std::to_string(model.item_count()) + " items but the corpus has " +
                     std::to_string(data.item_count) + "; rerun `gcegnn train`");
  }
  std::optional<GraphData> graph;
  if (model.config().hops > 0) graph = load_graph(config, data.item_count);
  if (data.test.empty()) throw StageError("no test examples in " + std::string(kExamples));

  const auto ranks = eval::compute_ranks(model, data.test, graph ? &graph->graph : nullptr, config.train.batch_size);
  const std::string data_fp = data_fingerprint(data, graph ? &*graph : nullptr);
  const auto& mc = model.config();
  std::string name = "GCE-GNN hops=" + std::to_string(mc.hops) + " " + std::string(model::to_string(mc.aggregation));
  auto report = eval::report_from_ranks(
      ranks, name, hash_text(config::model_config_to_json(mc).dump() + "|" + checksum_of(ck, kCheckpoint) + "|" + data_fp));
  report.data_fingerprint = data_fp;

  StageWriter w(config, "evaluate", "reports");
  w.inputs_from(data.manifest);
  w.inputs_from(ck);
  if (graph) w.inputs_from(graph->manifest);
  const std::vector<eval::EvalReport> reports{report};
  w.output("reports/evaluation.txt", render_reports(reports, eval::ReportFormat::table));
  w.output("reports/evaluation.jsonl", render_reports(reports, eval::ReportFormat::jsonl));
  w.finish("evaluate");
  return report;
}

eval::AblationOutcome ablate(const config::RunConfig& config, std::string_view grid) {
  const auto data = load_corpus(config);
  const auto variants = eval::ablation_grid(grid, resolved_model(config, data.longest_prefix), config.dropout_grid);
  const bool needs_graph = std::any_of(variants.begin(), variants.end(), [](const auto& v) { return v.model.hops > 0; });
  std::optional<GraphData> graph;
  if (needs_graph) graph = load_graph(config, data.item_count);
  if (data.train.empty() || data.test.empty()) throw StageError("ablation needs train and test examples");

  eval::AblationData input;
  input.train = data.train;
  input.validation = data.validation;
  input.test = data.test;
  input.graph = graph ? &graph->graph : nullptr;
  input.item_count = data.item_count;
  input.data_fingerprint = data_fingerprint(data, graph ? &*graph : nullptr);
  auto outcome = eval::run_ablations(input, variants, config.train);

  const std::string stem = "reports/ablation-" + std::string(grid);
  StageWriter w(config, "ablate", "reports");
  w.inputs_from(data.manifest);
  if (graph) w.inputs_from(graph->manifest);
  w.output(stem + ".txt", render_reports(outcome.reports, eval::ReportFormat::table));
  w.output(stem + ".jsonl", render_reports(outcome.reports, eval::ReportFormat::jsonl));
  w.finish("ablate-" + std::string(grid));
  return outcome;
}

}  // namespace gcegnn::pipeline
