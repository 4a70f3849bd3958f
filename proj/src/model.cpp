#include "gcegnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace gcegnn::model {

namespace {

std::string hop_suffix(const ModelConfig& c, int hop) {
  return c.share_hop_weights ? std::string() : "_" + std::to_string(hop);
}

bool uses_position_table(PositionMode m) { return m == PositionMode::reversed || m == PositionMode::forward; }

}  // namespace

std::string_view to_string(Aggregation a) {
  switch (a) {
    case Aggregation::sum:
      return "sum";
    case Aggregation::gate:
      return "gate";
    case Aggregation::max:
      return "max";
    case Aggregation::concat:
      return "concat";
  }
  return "sum";
}

std::string_view to_string(PositionMode p) {
  switch (p) {
    case PositionMode::reversed:
      return "reversed";
    case PositionMode::forward:
      return "forward";
    case PositionMode::self_attention:
      return "self_attention";
    case PositionMode::none:
      return "none";
  }
  return "reversed";
}

std::string_view to_string(LossMode l) { return l == LossMode::binary ? "binary" : "categorical"; }

Aggregation parse_aggregation(std::string_view text) {
  for (auto a : {Aggregation::sum, Aggregation::gate, Aggregation::max, Aggregation::concat})
    if (to_string(a) == text) return a;
  throw ConfigError("aggregation must be one of sum|gate|max|concat, got '" + std::string(text) + "'");
}

PositionMode parse_position_mode(std::string_view text) {
  for (auto p : {PositionMode::reversed, PositionMode::forward, PositionMode::self_attention, PositionMode::none})
    if (to_string(p) == text) return p;
  throw ConfigError("position mode must be one of reversed|forward|self_attention|none, got '" + std::string(text) +
                    "'");
}

LossMode parse_loss_mode(std::string_view text) {
  if (text == "binary") return LossMode::binary;
  if (text == "categorical") return LossMode::categorical;
  throw ConfigError("loss mode must be binary|categorical, got '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  if (dim < 1) throw ConfigError("embedding dimension must be >= 1");
  if (hops < 0 || hops > 2) throw ConfigError("hops must be 0, 1 or 2");
  if (hops == 0 && !use_session_layer) throw ConfigError("global and session branches are both disabled");
  if (!(dropout_global >= 0.0 && dropout_global < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (!(leaky_slope >= 0.0)) throw ConfigError("leaky slope must be >= 0");
  if (!(init_std > 0.0)) throw ConfigError("init std must be > 0");
  if (max_length < 1) throw ConfigError("max session length must be >= 1");
}

// ---- batching -----------------------------------------------------------------

Batch make_batch(std::span<const std::vector<int>> prefixes, const graphs::GlobalGraph* graph, int hops,
                 std::size_t item_count, std::size_t max_length, const BatchPadding& padding) {
  if (prefixes.empty()) throw std::invalid_argument("make_batch: no examples");
  if (hops > 0 && graph == nullptr) throw std::invalid_argument("make_batch: global graph required for hops > 0");
  if (hops > 0 && graph->item_count() != item_count) {
    throw std::invalid_argument("make_batch: global graph covers " + std::to_string(graph->item_count()) +
                                " items, model has " + std::to_string(item_count));
  }

  Batch b;
  b.size = prefixes.size();
  std::vector<graphs::SessionGraph> sgraphs;
  sgraphs.reserve(b.size);
  b.positions = padding.positions;
  b.nodes = padding.nodes;
  b.session_degree = padding.session_degree;
  for (const auto& p : prefixes) {
    if (p.empty()) throw std::invalid_argument("make_batch: empty prefix");
    if (max_length > 0 && p.size() > max_length) {
      throw std::length_error("session of length " + std::to_string(p.size()) + " exceeds the position table (" +
                              std::to_string(max_length) + " rows); raise max_session_length");
    }
    for (int item : p) {
      if (item < 1 || static_cast<std::size_t>(item) > item_count) {
        throw std::out_of_range("make_batch: item " + std::to_string(item) + " outside vocabulary [1, " +
                                std::to_string(item_count) + "]");
      }
    }
    sgraphs.push_back(graphs::build_session_graph(p));
    const auto& g = sgraphs.back();
    b.positions = std::max(b.positions, p.size());
    b.nodes = std::max(b.nodes, g.nodes.size());
    for (const auto& e : g.edges) b.session_degree = std::max(b.session_degree, e.size());
  }
  const std::size_t B = b.size, L = b.positions, U = b.nodes, D = b.session_degree;

  b.lengths.resize(B);
  b.inverse_length = Matrix(B, 1);
  b.node_items.assign(B * U, 0);
  b.node_table_row.assign(B * U, -1);
  b.position_node_row.assign(B * L, -1);
  b.position_table_row.assign(B * L, -1);
  b.position_example.resize(B * L);
  b.reversed_position.assign(B * L, -1);
  b.forward_position.assign(B * L, -1);
  b.position_mask.assign(B * L, 0);
  b.position_mask_column = Matrix(B * L, 1);
  b.last_position_row.resize(B);
  b.session_self_row.assign(B * U * D, -1);
  b.session_neighbor_row.assign(B * U * D, -1);
  b.session_relation.assign(B * U * D, -1);
  b.session_mask.assign(B * U * D, 0);

  for (std::size_t e = 0; e < B; ++e) {
    const auto& prefix = prefixes[e];
    const auto& g = sgraphs[e];
    const std::size_t l = prefix.size();
    b.lengths[e] = static_cast<int>(l);
    b.inverse_length(e, 0) = 1.0 / static_cast<double>(l);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      b.node_items[e * U + i] = g.nodes[i];
      b.node_table_row[e * U + i] = g.nodes[i] - 1;
      for (std::size_t k = 0; k < g.edges[i].size(); ++k) {
        const std::size_t slot = (e * U + i) * D + k;
        b.session_self_row[slot] = static_cast<int>(e * U + i);
        b.session_neighbor_row[slot] = static_cast<int>(e * U) + g.edges[i][k].neighbor;
        b.session_relation[slot] = static_cast<int>(g.edges[i][k].relation);
        b.session_mask[slot] = 1;
      }
    }
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t row = e * L + t;
      b.position_example[row] = static_cast<int>(e);
      if (t >= l) continue;
      b.position_node_row[row] = static_cast<int>(e * U) + g.position_node[t];
      b.position_table_row[row] = prefix[t] - 1;
      b.reversed_position[row] = static_cast<int>(l - 1 - t);
      b.forward_position[row] = static_cast<int>(t);
      b.position_mask[row] = 1;
      b.position_mask_column(row, 0) = 1.0;
    }
    b.last_position_row[e] = static_cast<int>(e * L + l - 1);
  }

  if (hops <= 0) return b;

  // levels[e][h]: items whose hop-h representation is needed, with the items
  // of level h + 1 as a prefix of level h.
  const auto H = static_cast<std::size_t>(hops);
  std::vector<std::vector<std::vector<int>>> levels(B, std::vector<std::vector<int>>(H + 1));
  std::vector<std::vector<std::unordered_map<int, int>>> local(B, std::vector<std::unordered_map<int, int>>(H + 1));
  for (std::size_t e = 0; e < B; ++e) {
    levels[e][H] = sgraphs[e].nodes;
    for (std::size_t i = 0; i < levels[e][H].size(); ++i) local[e][H][levels[e][H][i]] = static_cast<int>(i);
    for (std::size_t h = H; h-- > 0;) {
      levels[e][h] = levels[e][h + 1];
      local[e][h] = local[e][h + 1];
      for (int item : levels[e][h + 1]) {
        for (const auto& n : graph->neighbors(item)) {
          if (local[e][h].try_emplace(n.item, static_cast<int>(levels[e][h].size())).second) {
            levels[e][h].push_back(n.item);
          }
        }
      }
    }
  }
  std::vector<std::size_t> per_level(H + 1, 0);
  per_level[H] = U;
  for (std::size_t h = 0; h < H; ++h) {
    per_level[h] = padding.global_level_size;
    for (std::size_t e = 0; e < B; ++e) per_level[h] = std::max(per_level[h], levels[e][h].size());
  }

  b.level0_per_example = per_level[0];
  b.level0_table_row.assign(B * per_level[0], -1);
  for (std::size_t e = 0; e < B; ++e)
    for (std::size_t i = 0; i < levels[e][0].size(); ++i) b.level0_table_row[e * per_level[0] + i] = levels[e][0][i] - 1;

  for (std::size_t h = 1; h <= H; ++h) {
    GlobalHop hop;
    hop.rows_per_example = per_level[h];
    hop.degree = std::max<std::size_t>(1, padding.global_degree);
    for (std::size_t e = 0; e < B; ++e)
      for (int item : levels[e][h]) hop.degree = std::max(hop.degree, graph->neighbors(item).size());
    const std::size_t rows = B * per_level[h], K = hop.degree, prev = per_level[h - 1];
    hop.self_row.assign(rows, -1);
    hop.neighbor_row.assign(rows * K, -1);
    hop.slot_example.assign(rows * K, 0);
    hop.edge_weight = Matrix(rows * K, 1);
    hop.mask.assign(rows * K, 0);
    for (std::size_t e = 0; e < B; ++e) {
      for (std::size_t i = 0; i < per_level[h]; ++i) {
        const std::size_t row = e * per_level[h] + i;
        for (std::size_t k = 0; k < K; ++k) hop.slot_example[row * K + k] = static_cast<int>(e);
        if (i >= levels[e][h].size()) continue;
        hop.self_row[row] = static_cast<int>(e * prev + i);
        const auto nbrs = graph->neighbors(levels[e][h][i]);
        for (std::size_t k = 0; k < nbrs.size(); ++k) {
          const std::size_t slot = row * K + k;
          hop.neighbor_row[slot] = static_cast<int>(e * prev) + local[e][h - 1].at(nbrs[k].item);
          hop.edge_weight(slot, 0) = static_cast<double>(nbrs[k].weight);
          hop.mask[slot] = 1;
        }
      }
    }
    b.hops.push_back(std::move(hop));
  }
  return b;
}

// ---- parameters ---------------------------------------------------------------

std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> parameter_layout(const ModelConfig& c,
                                                                                        std::size_t item_count) {
  const std::size_t d = c.dim;
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> out;
  out.push_back({"W0", {item_count, d}});
  const int distinct_hops = c.share_hop_weights ? std::min(c.hops, 1) : c.hops;
  for (int h = 1; h <= distinct_hops; ++h) {
    const std::string s = hop_suffix(c, h);
    out.push_back({"W1" + s, {d + 1, d + 1}});
    out.push_back({"q1" + s, {1, d + 1}});
    out.push_back({"W2" + s, {d, 2 * d}});
  }
  if (c.use_session_layer) {
    for (const char* name : {"a_self", "a_in", "a_out", "a_in_out"}) out.push_back({name, {1, d}});
  }
  if (c.hops > 0 && c.use_session_layer) {
    if (c.aggregation == Aggregation::gate) {
      out.push_back({"W_s", {d, d}});
      out.push_back({"W_g", {d, d}});
    } else if (c.aggregation == Aggregation::concat) {
      out.push_back({"M", {d, 2 * d}});
    }
  }
  if (c.position_mode == PositionMode::self_attention) {
    out.push_back({"W_sa", {d, d}});
  } else {
    if (uses_position_table(c.position_mode)) out.push_back({"P", {c.max_length, d}});
    out.push_back({"W3", {d, 2 * d}});
    out.push_back({"b3", {1, d}});
    out.push_back({"W4", {d, d}});
    out.push_back({"W5", {d, d}});
    out.push_back({"q2", {1, d}});
    out.push_back({"b4", {1, d}});
  }
  return out;
}

Model::Model(ModelConfig config, std::size_t item_count, std::uint64_t seed)
    : config_(config), item_count_(item_count) {
  config_.validate();
  if (item_count_ == 0) throw ConfigError("model needs at least one item");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gaussian(0.0, config_.init_std);
  for (const auto& [name, shape] : parameter_layout(config_, item_count_)) {
    Matrix init(shape.first, shape.second);
    for (double& v : init.values()) v = gaussian(rng);
    params_.add(name, std::move(init));
  }
}

Model::Model(ModelConfig config, std::size_t item_count, ad::ParameterStore params)
    : config_(config), item_count_(item_count), params_(std::move(params)) {
  config_.validate();
  const auto layout = parameter_layout(config_, item_count_);
  if (layout.size() != params_.size()) {
    throw ConfigError("expected " + std::to_string(layout.size()) + " parameters, found " +
                      std::to_string(params_.size()));
  }
  for (const auto& [name, shape] : layout) {
    if (!params_.contains(name)) throw ConfigError("missing parameter " + name);
    const auto& v = params_.at(name).value;
    if (v.rows() != shape.first || v.cols() != shape.second) {
      throw ConfigError("parameter " + name + " has shape " + v.shape_string());
    }
  }
}

ad::Var Model::bind(ad::Tape& tape, std::string_view name) const { return tape.parameter(params_.at(name)); }

// ---- forward ------------------------------------------------------------------

ad::Var Model::global_layer(ad::Tape& tape, const Batch& batch, ad::Var table, ad::Var session_mean,
                            ForwardTrace& trace) const {
  ad::Var previous = ad::gather_rows(table, batch.level0_table_row);
  for (std::size_t h = 0; h < batch.hops.size(); ++h) {
    const GlobalHop& hop = batch.hops[h];
    const std::string s = hop_suffix(config_, static_cast<int>(h) + 1);
    ad::Var w1 = bind(tape, "W1" + s), q1 = bind(tape, "q1" + s), w2 = bind(tape, "W2" + s);
    const std::size_t rows = batch.size * hop.rows_per_example;

    ad::Var neighbor = ad::gather_rows(previous, hop.neighbor_row);
    ad::Var session = ad::gather_rows(session_mean, hop.slot_example);
    ad::Var features = ad::concat_cols(ad::mul(session, neighbor), tape.constant(hop.edge_weight));
    ad::Var score = ad::matmul_nt(ad::leaky_relu(ad::matmul_nt(features, w1), config_.leaky_slope), q1);
    ad::Var attention = ad::softmax_rows(ad::reshape(score, rows, hop.degree), hop.mask);
    trace.global_attention.push_back(attention);
    ad::Var neighborhood = ad::group_weighted_sum(attention, neighbor);
    ad::Var self = ad::gather_rows(previous, hop.self_row);
    previous = ad::relu(ad::matmul_nt(ad::concat_cols(self, neighborhood), w2));
  }
  return previous;
}

ad::Var Model::session_layer(ad::Tape& tape, const Batch& batch, ad::Var nodes, ForwardTrace& trace) const {
  // Row order follows graphs::Relation.
  ad::Var relations =
      ad::concat_rows({bind(tape, "a_self"), bind(tape, "a_in"), bind(tape, "a_out"), bind(tape, "a_in_out")});
  ad::Var hi = ad::gather_rows(nodes, batch.session_self_row);
  ad::Var hj = ad::gather_rows(nodes, batch.session_neighbor_row);
  ad::Var ar = ad::gather_rows(relations, batch.session_relation);
  ad::Var e = ad::leaky_relu(ad::row_sum(ad::mul(ad::mul(hi, hj), ar)), config_.leaky_slope);
  ad::Var alpha =
      ad::softmax_rows(ad::reshape(e, batch.size * batch.nodes, batch.session_degree), batch.session_mask);
  trace.session_attention = alpha;
  return ad::group_weighted_sum(alpha, hj);
}

ad::Var Model::fuse(ad::Tape& tape, ad::Var global, ad::Var session, bool train, std::mt19937_64* rng) const {
  auto drop = [&](ad::Var x) {
    if (!train || config_.dropout_global == 0.0) return x;
    if (rng == nullptr) throw std::invalid_argument("training forward needs a random generator for dropout");
    return ad::dropout(x, config_.dropout_global, true, *rng);
  };
  if (!global.valid()) return session;
  if (!session.valid()) return drop(global);
  switch (config_.aggregation) {
    case Aggregation::sum:
      return ad::add(drop(global), session);
    case Aggregation::gate: {
      ad::Var r = ad::sigmoid(ad::add(ad::matmul_nt(session, bind(tape, "W_s")), ad::matmul_nt(global, bind(tape, "W_g"))));
      return ad::add(ad::mul(r, global), ad::mul(ad::add_scalar(ad::scale(r, -1.0), 1.0), session));
    }
    case Aggregation::max:
      return ad::maximum(global, session);
    case Aggregation::concat:
      return ad::matmul_nt(ad::concat_cols(global, session), bind(tape, "M"));
  }
  return session;
}

ad::Var Model::encode(ad::Tape& tape, const Batch& batch, ad::Var fused, ForwardTrace& trace) const {
  const std::size_t B = batch.size, L = batch.positions;
  ad::Var items = ad::gather_rows(fused, batch.position_node_row);  // B*L x d

  if (config_.position_mode == PositionMode::self_attention) {
    ad::Var last = ad::gather_rows(items, batch.last_position_row);
    ad::Var query = ad::gather_rows(ad::matmul_nt(last, bind(tape, "W_sa")), batch.position_example);
    ad::Var score = ad::row_sum(ad::mul(items, query));
    ad::Var weights = ad::softmax_rows(ad::reshape(score, B, L), batch.position_mask);
    trace.position_weights = weights;
    return ad::group_weighted_sum(weights, items);
  }

  ad::Var position;
  if (config_.position_mode == PositionMode::none) {
    position = tape.constant(Matrix(B * L, config_.dim));
  } else {
    const auto& rows =
        config_.position_mode == PositionMode::reversed ? batch.reversed_position : batch.forward_position;
    position = ad::gather_rows(bind(tape, "P"), rows);
  }
  ad::Var z = ad::tanh(ad::add_row(ad::matmul_nt(ad::concat_cols(items, position), bind(tape, "W3")), bind(tape, "b3")));
  ad::Var mean = ad::mul_col(ad::group_sum(items, L), tape.constant(batch.inverse_length));
  ad::Var mean_term = ad::gather_rows(ad::matmul_nt(mean, bind(tape, "W5")), batch.position_example);
  ad::Var gate = ad::sigmoid(ad::add_row(ad::add(ad::matmul_nt(z, bind(tape, "W4")), mean_term), bind(tape, "b4")));
  ad::Var beta = ad::matmul_nt(gate, bind(tape, "q2"));  // B*L x 1
  ad::Var weights;
  if (config_.normalize_beta) {
    weights = ad::softmax_rows(ad::reshape(beta, B, L), batch.position_mask);
  } else {
    weights = ad::reshape(ad::mul(beta, tape.constant(batch.position_mask_column)), B, L);
  }
  trace.position_weights = weights;
  return ad::group_weighted_sum(weights, items);
}

ForwardTrace Model::forward(ad::Tape& tape, const Batch& batch, bool train, std::mt19937_64* rng) const {
  if (config_.hops > 0 && batch.hops.size() != static_cast<std::size_t>(config_.hops)) {
    throw std::invalid_argument("batch was built for " + std::to_string(batch.hops.size()) + " hops, model uses " +
                                std::to_string(config_.hops));
  }
  ForwardTrace trace;
  ad::Var table = bind(tape, "W0");
  if (config_.hops > 0) {
    ad::Var positions = ad::gather_rows(table, batch.position_table_row);
    trace.session_mean =
        ad::mul_col(ad::group_sum(positions, batch.positions), tape.constant(batch.inverse_length));
    trace.global = global_layer(tape, batch, table, trace.session_mean, trace);
  }
  if (config_.use_session_layer) {
    ad::Var nodes = ad::gather_rows(table, batch.node_table_row);
    trace.session = session_layer(tape, batch, nodes, trace);
  }
  trace.fused = fuse(tape, trace.global, trace.session, train, rng);
  trace.session_vector = encode(tape, batch, trace.fused, trace);
  trace.logits = ad::matmul_nt(trace.session_vector, table);
  return trace;
}

ad::Var Model::loss(ad::Tape& tape, const Batch& batch, std::span<const int> labels, bool train,
                    std::mt19937_64* rng) const {
  if (labels.size() != batch.size) throw std::invalid_argument("loss: label count differs from batch size");
  std::vector<int> targets;
  targets.reserve(labels.size());
  for (int l : labels) {
    if (l < 1 || static_cast<std::size_t>(l) > item_count_) {
      throw std::out_of_range("loss: label " + std::to_string(l) + " outside vocabulary");
    }
    targets.push_back(l - 1);
  }
  ForwardTrace trace = forward(tape, batch, train, rng);
  return prediction_loss(predict(trace.logits), targets, config_.loss_mode);
}

Matrix Model::scores(const Batch& batch) const {
  ad::Tape tape;
  return forward(tape, batch, false, nullptr).logits.value();
}

ad::Var predict(ad::Var logits) { return ad::softmax_rows(logits); }

ad::Var prediction_loss(ad::Var probs, std::span<const int> labels, LossMode mode) {
  ad::Var out = mode == LossMode::binary ? ad::binary_cross_entropy(probs, labels)
                                         : ad::categorical_cross_entropy(probs, labels);
  if (!std::isfinite(out.value()[0])) throw std::domain_error("loss is not finite");
  return out;
}

}  // namespace gcegnn::model
