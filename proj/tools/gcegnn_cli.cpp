#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "gcegnn/config.hpp"
#include "gcegnn/pipeline.hpp"
#include "gcegnn/toy.hpp"

namespace {

using gcegnn::config::RunConfig;

constexpr double kGradcheckTolerance = 1e-4;
constexpr std::size_t kGradcheckDim = 8;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> work_dir, input, delimiter, aggregation, position_mode, loss_mode, format;
  std::optional<int> epsilon, hops;
  std::optional<std::size_t> top_n;
  std::optional<double> dropout;

  // Flags are merged into the file's JSON so they go through the same checks.
  RunConfig resolve() const {
    auto doc = config_path.empty() ? nlohmann::json::object() : gcegnn::config::read_config_file(config_path);
    if (!doc.is_object()) throw gcegnn::config::ConfigErrors({"configuration must be a JSON object"});
    auto set = [&doc](const char* key, const auto& value) {
      if (value) doc[key] = *value;
    };
    set("seed", seed);
    set("work_dir", work_dir);
    set("input", input);
    set("delimiter", delimiter);
    set("aggregation", aggregation);
    set("position_mode", position_mode);
    set("loss_mode", loss_mode);
    set("report_format", format);
    set("epsilon", epsilon);
    set("hops", hops);
    set("top_n", top_n);
    set("dropout", dropout);
    return gcegnn::config::resolve_config(doc);
  }
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--work-dir", o.work_dir, "directory holding stage artifacts");
}

void add_model(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--hops", o.hops, "global-layer hops (0 disables the global branch)");
  cmd->add_option("--aggregation", o.aggregation, "sum | gate | max | concat");
  cmd->add_option("--position-mode", o.position_mode, "reversed | forward | self_attention | none");
  cmd->add_option("--dropout", o.dropout, "dropout on the global branch");
  cmd->add_option("--loss-mode", o.loss_mode, "binary | categorical");
}

void print_report(const gcegnn::eval::EvalReport& report, gcegnn::eval::ReportFormat format) {
  const std::vector<gcegnn::eval::EvalReport> reports{report};
  gcegnn::eval::write_reports(std::cout, reports, format);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GCE-GNN session-based recommendation pipeline"};
  app.require_subcommand(1);
  Overrides o;
  std::string grid;
  std::string dump_graph;
  bool print_defaults = false;

  auto* preprocess = app.add_subcommand("preprocess", "filter, split and augment a click log");
  add_common(preprocess, o);
  preprocess->add_option("--input", o.input, "session_id,item_id,timestamp event file");
  preprocess->add_option("--delimiter", o.delimiter, "field delimiter of the event file");

  auto* build = app.add_subcommand("build-graph", "build the global item graph from training sessions");
  add_common(build, o);
  build->add_option("--epsilon", o.epsilon, "co-occurrence window");
  build->add_option("--top-n", o.top_n, "neighbors kept per item");

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(train, o);
  add_model(train, o);

  auto* evaluate = app.add_subcommand("evaluate", "score the checkpoint on the test examples");
  add_common(evaluate, o);
  evaluate->add_option("--format", o.format, "table | jsonl");

  auto* ablate = app.add_subcommand("ablate", "train and test every variant of a grid");
  add_common(ablate, o);
  add_model(ablate, o);
  ablate->add_option("--grid", grid, "global | position | aggregation | dropout")->required();
  ablate->add_option("--format", o.format, "table | jsonl");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every gradient on a toy corpus");
  add_common(gradcheck, o);
  add_model(gradcheck, o);
  gradcheck->add_option("--dump-graph", dump_graph, "write the computation graph to this file");

  auto* show = app.add_subcommand("config", "print the resolved configuration");
  add_common(show, o);
  add_model(show, o);
  show->add_flag("--defaults", print_defaults, "print the documented defaults instead");

  CLI11_PARSE(app, argc, argv);

  try {
    if (show->parsed() && print_defaults) {
      std::cout << gcegnn::config::default_config_json().dump(2) << '\n';
      return 0;
    }
    const RunConfig cfg = o.resolve();
    namespace p = gcegnn::pipeline;
    if (show->parsed()) {
      std::cout << gcegnn::config::to_json(cfg).dump(2) << '\n';
    } else if (preprocess->parsed()) {
      const auto s = p::preprocess(cfg);
      std::cout << "clicks " << s.clicks << "\ntrain examples " << s.train_examples << "\ntest examples "
                << s.test_examples << "\nitems " << s.items << "\naverage length " << std::fixed
                << std::setprecision(2) << s.average_length << '\n';
    } else if (build->parsed()) {
      const auto s = p::build_graph(cfg);
      std::cout << "items " << s.items << "\nneighbor entries " << s.edges << "\nmax degree " << s.max_degree << '\n';
    } else if (train->parsed()) {
      const auto result = p::train_model(cfg, [](const gcegnn::train::EpochRecord& r) {
        std::cout << "epoch " << r.epoch << "  lr " << r.lr << "  loss " << r.train_loss << "  val P@20 "
                  << r.val_p20 << "  val MRR@20 " << r.val_mrr20 << "  (" << r.seconds << " s)" << std::endl;
      });
      std::cout << "best epoch " << result.best_epoch << '\n';
    } else if (evaluate->parsed()) {
      print_report(p::evaluate(cfg), cfg.report_format);
    } else if (ablate->parsed()) {
      const auto outcome = p::ablate(cfg, grid);
      gcegnn::eval::write_reports(std::cout, outcome.reports, cfg.report_format);
      if (outcome.best && cfg.report_format == gcegnn::eval::ReportFormat::table) {
        std::cout << "best on validation: " << outcome.reports[*outcome.best].name << '\n';
      }
      for (const auto& r : outcome.reports)
        if (!r.ok()) return 1;
    } else if (gradcheck->parsed()) {
      auto mc = cfg.model;
      mc.dim = kGradcheckDim;
      std::ofstream dump;
      if (!dump_graph.empty()) {
        dump.open(dump_graph);
        if (!dump) throw std::runtime_error("cannot write " + dump_graph);
      }
      const double err = gcegnn::toy::model_gradcheck(mc, cfg.seed, dump_graph.empty() ? nullptr : &dump);
      std::cout << "max relative error " << std::scientific << std::setprecision(3) << err << '\n';
      if (!(err <= kGradcheckTolerance)) {
        std::cerr << "gradcheck failed: error exceeds " << kGradcheckTolerance << '\n';
        return 1;
      }
    }
  } catch (const gcegnn::config::ConfigErrors& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
