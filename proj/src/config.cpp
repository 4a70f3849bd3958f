#include "gcegnn/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "gcegnn/hashing.hpp"

namespace gcegnn::config {

namespace {

std::string join_errors(const std::vector<std::string>& errors) {
  std::string out = "invalid configuration:";
  for (const auto& e : errors) out += "\n  - " + e;
  return out;
}

// Collects errors while reading typed values out of a JSON object.
class Reader {
 public:
  explicit Reader(const nlohmann::json& doc) : doc_(doc) {}

  std::vector<std::string>& errors() { return errors_; }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    if (!doc_.contains(key)) return;
    const auto& v = doc_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("");
        out = v.get<bool>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("");
        out = v.get<std::string>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("");
        out = v.get<T>();
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_integer() || v.get<long long>() < 0) throw std::invalid_argument("");
        out = v.get<T>();
      } else {
        if (!v.is_number_integer()) throw std::invalid_argument("");
        out = v.get<T>();
      }
    } catch (const std::exception&) {
      errors_.push_back(std::string(key) + " has the wrong type (" + v.type_name() + ")");
    }
  }

  void mark(const char* key) { seen_.push_back(key); }

  void check(bool ok, std::string message) {
    if (!ok) errors_.push_back(std::move(message));
  }

  void reject_unknown() {
    if (!doc_.is_object()) return;
    for (const auto& [key, _] : doc_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) errors_.push_back("unknown key '" + key + "'");
    }
  }

 private:
  const nlohmann::json& doc_;
  std::vector<std::string> seen_;
  std::vector<std::string> errors_;
};

}  // namespace

ConfigErrors::ConfigErrors(std::vector<std::string> errors)
    : std::runtime_error(join_errors(errors)), errors_(std::move(errors)) {}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["input"] = c.input;
  j["delimiter"] = std::string(1, c.delimiter);
  j["work_dir"] = c.work_dir;
  j["min_item_freq"] = c.min_item_freq;
  j["min_session_len"] = c.min_session_len;
  j["test_window_days"] = c.test_window_days;
  j["validation_fraction"] = c.validation_fraction;
  j["epsilon"] = c.epsilon;
  j["top_n"] = c.top_n;
  j["embedding_dim"] = c.model.dim;
  j["hops"] = c.model.hops;
  j["aggregation"] = std::string(model::to_string(c.model.aggregation));
  j["position_mode"] = std::string(model::to_string(c.model.position_mode));
  j["use_session_layer"] = c.model.use_session_layer;
  j["dropout"] = c.model.dropout_global;
  j["leaky_slope"] = c.model.leaky_slope;
  j["loss_mode"] = std::string(model::to_string(c.model.loss_mode));
  j["normalize_beta"] = c.model.normalize_beta;
  j["share_hop_weights"] = c.model.share_hop_weights;
  j["max_session_length"] = c.model.max_length;
  j["init_std"] = c.model.init_std;
  j["batch_size"] = c.train.batch_size;
  j["lr"] = c.train.lr;
  j["lr_decay_factor"] = c.train.lr_decay_factor;
  j["lr_decay_every"] = c.train.lr_decay_every;
  j["l2"] = c.train.l2;
  j["max_epochs"] = c.train.max_epochs;
  j["patience"] = c.train.patience;
  j["dropout_grid"] = c.dropout_grid;
  j["report_format"] = c.report_format == eval::ReportFormat::table ? "table" : "jsonl";
  return j;
}

nlohmann::ordered_json default_config_json() {
  return to_json(RunConfig{});
}

RunConfig resolve_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigErrors({"configuration must be a JSON object"});
  RunConfig c;
  Reader r(doc);
  std::string delimiter(1, c.delimiter), aggregation = "sum", position = "reversed", loss = "binary",
      format = "table";
  r.get("seed", c.seed);
  r.get("input", c.input);
  r.get("delimiter", delimiter);
  r.get("work_dir", c.work_dir);
  r.get("min_item_freq", c.min_item_freq);
  r.get("min_session_len", c.min_session_len);
  r.get("test_window_days", c.test_window_days);
  r.get("validation_fraction", c.validation_fraction);
  r.get("epsilon", c.epsilon);
  r.get("top_n", c.top_n);
  r.get("embedding_dim", c.model.dim);
  r.get("hops", c.model.hops);
  r.get("aggregation", aggregation);
  r.get("position_mode", position);
  r.get("use_session_layer", c.model.use_session_layer);
  r.get("dropout", c.model.dropout_global);
  r.get("leaky_slope", c.model.leaky_slope);
  r.get("loss_mode", loss);
  r.get("normalize_beta", c.model.normalize_beta);
  r.get("share_hop_weights", c.model.share_hop_weights);
  r.get("max_session_length", c.model.max_length);
  r.get("init_std", c.model.init_std);
  r.get("batch_size", c.train.batch_size);
  r.get("lr", c.train.lr);
  r.get("lr_decay_factor", c.train.lr_decay_factor);
  r.get("lr_decay_every", c.train.lr_decay_every);
  r.get("l2", c.train.l2);
  r.get("max_epochs", c.train.max_epochs);
  r.get("patience", c.train.patience);
  r.get("report_format", format);

  if (doc.contains("dropout_grid")) {
    const auto& g = doc.at("dropout_grid");
    if (!g.is_array() || g.empty()) {
      r.check(false, "dropout_grid must be a non-empty array of numbers");
    } else {
      c.dropout_grid.clear();
      for (const auto& v : g) {
        if (!v.is_number()) {
          r.check(false, "dropout_grid must be a non-empty array of numbers");
          break;
        }
        c.dropout_grid.push_back(v.get<double>());
      }
    }
  }
  r.mark("dropout_grid");
  r.reject_unknown();

  r.check(delimiter.size() == 1, "delimiter must be a single character");
  if (delimiter.size() == 1) c.delimiter = delimiter[0];
  r.check(!c.work_dir.empty(), "work_dir must not be empty");
  r.check(c.min_item_freq >= 1, "min_item_freq must be >= 1");
  r.check(c.min_session_len >= 2, "min_session_len must be >= 2");
  r.check(c.test_window_days > 0.0, "test_window_days must be > 0");
  r.check(c.validation_fraction >= 0.0 && c.validation_fraction < 1.0, "validation_fraction must be in [0, 1)");
  r.check(c.epsilon >= 1, "epsilon must be >= 1");
  r.check(c.top_n >= 1, "top_n must be >= 1");
  r.check(c.model.dim >= 1, "embedding_dim must be >= 1");
  r.check(c.model.hops >= 0 && c.model.hops <= 2, "hops must be 0, 1 or 2");
  r.check(c.model.hops > 0 || c.model.use_session_layer, "hops = 0 with use_session_layer = false disables both branches");
  r.check(c.model.dropout_global >= 0.0 && c.model.dropout_global < 1.0, "dropout must be in [0, 1) (rate must be < 1)");
  r.check(c.model.leaky_slope >= 0.0, "leaky_slope must be >= 0");
  r.check(c.model.init_std > 0.0, "init_std must be > 0");
  r.check(c.train.batch_size >= 1, "batch_size must be >= 1");
  r.check(c.train.lr > 0.0, "lr must be > 0");
  r.check(c.train.lr_decay_factor > 0.0, "lr_decay_factor must be > 0");
  r.check(c.train.lr_decay_every >= 1, "lr_decay_every must be >= 1");
  r.check(c.train.l2 >= 0.0, "l2 must be >= 0");
  r.check(c.train.max_epochs >= 1, "max_epochs must be >= 1");
  r.check(c.train.patience >= 1 && c.train.patience <= c.train.max_epochs, "patience must be in [1, max_epochs]");
  for (double d : c.dropout_grid) r.check(d >= 0.0 && d < 1.0, "dropout_grid entries must be in [0, 1)");
  try {
    c.model.aggregation = model::parse_aggregation(aggregation);
  } catch (const std::exception& e) {
    r.check(false, e.what());
  }
  try {
    c.model.position_mode = model::parse_position_mode(position);
  } catch (const std::exception& e) {
    r.check(false, e.what());
  }
  try {
    c.model.loss_mode = model::parse_loss_mode(loss);
  } catch (const std::exception& e) {
    r.check(false, e.what());
  }
  try {
    c.report_format = eval::parse_report_format(format);
  } catch (const std::exception& e) {
    r.check(false, e.what());
  }
  c.train.seed = c.seed;
  if (!r.errors().empty()) throw ConfigErrors(r.errors());
  return c;
}

nlohmann::json parse_config_text(std::string_view text) {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigErrors({std::string("config is not valid JSON: ") + e.what()});
  }
}

nlohmann::json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigErrors({"cannot read config file " + path.string()});
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string fingerprint(const RunConfig& config) {
  auto j = to_json(config);
  j.erase("input");
  j.erase("work_dir");
  j.erase("report_format");
  return hash_text(j.dump());
}

nlohmann::ordered_json model_config_to_json(const model::ModelConfig& c) {
  nlohmann::ordered_json j;
  j["embedding_dim"] = c.dim;
  j["hops"] = c.hops;
  j["aggregation"] = std::string(model::to_string(c.aggregation));
  j["position_mode"] = std::string(model::to_string(c.position_mode));
  j["use_session_layer"] = c.use_session_layer;
  j["dropout"] = c.dropout_global;
  j["leaky_slope"] = c.leaky_slope;
  j["loss_mode"] = std::string(model::to_string(c.loss_mode));
  j["normalize_beta"] = c.normalize_beta;
  j["share_hop_weights"] = c.share_hop_weights;
  j["max_session_length"] = c.max_length;
  j["init_std"] = c.init_std;
  return j;
}

model::ModelConfig model_config_from_json(const nlohmann::json& j) {
  model::ModelConfig c;
  c.dim = j.at("embedding_dim").get<std::size_t>();
  c.hops = j.at("hops").get<int>();
  c.aggregation = model::parse_aggregation(j.at("aggregation").get<std::string>());
  c.position_mode = model::parse_position_mode(j.at("position_mode").get<std::string>());
  c.use_session_layer = j.at("use_session_layer").get<bool>();
  c.dropout_global = j.at("dropout").get<double>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.loss_mode = model::parse_loss_mode(j.at("loss_mode").get<std::string>());
  c.normalize_beta = j.at("normalize_beta").get<bool>();
  c.share_hop_weights = j.at("share_hop_weights").get<bool>();
  c.max_length = j.at("max_session_length").get<std::size_t>();
  c.init_std = j.at("init_std").get<double>();
  c.validate();
  return c;
}

}  // namespace gcegnn::config
