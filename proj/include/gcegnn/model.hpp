#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gcegnn/autodiff.hpp"
#include "gcegnn/graphs.hpp"
#include "gcegnn/matrix.hpp"

namespace gcegnn::model {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Aggregation { sum, gate, max, concat };
enum class PositionMode { reversed, forward, self_attention, none };
enum class LossMode { binary, categorical };

std::string_view to_string(Aggregation a);
std::string_view to_string(PositionMode p);
std::string_view to_string(LossMode l);
Aggregation parse_aggregation(std::string_view text);
PositionMode parse_position_mode(std::string_view text);
LossMode parse_loss_mode(std::string_view text);

struct ModelConfig {
  std::size_t dim = 100;
  int hops = 1;  // 0 disables the global branch
  Aggregation aggregation = Aggregation::sum;
  PositionMode position_mode = PositionMode::reversed;
  bool use_session_layer = true;
  double dropout_global = 0.0;
  double leaky_slope = 0.2;
  LossMode loss_mode = LossMode::binary;
  bool normalize_beta = false;
  bool share_hop_weights = false;
  std::size_t max_length = 0;  // rows of the position table
  double init_std = 0.1;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Minimum padded extents for a batch. Zero means "tight".
struct BatchPadding {
  std::size_t positions = 0;
  std::size_t nodes = 0;
  std::size_t session_degree = 0;
  std::size_t global_level_size = 0;
  std::size_t global_degree = 0;
};

// One propagation step of the global layer: rows of level h are computed
// from rows of level h - 1. Level `hops` is the batch's node set.
struct GlobalHop {
  std::size_t rows_per_example = 0;
  std::size_t degree = 0;
  std::vector<int> self_row;      // per row: row in the previous level, -1 for padding
  std::vector<int> neighbor_row;  // per (row, slot)
  std::vector<int> slot_example;  // per (row, slot): example index
  Matrix edge_weight;             // per (row, slot), one column
  std::vector<unsigned char> mask;
};

// Padded, index-only view of a batch of session prefixes. Padding rows point
// at index -1 (a zero row) and are masked out of every softmax and sum.
struct Batch {
  std::size_t size = 0;
  std::size_t positions = 0;       // L
  std::size_t nodes = 0;           // U
  std::size_t session_degree = 0;  // D

  std::vector<int> lengths;
  Matrix inverse_length;  // size x 1

  std::vector<int> node_items;                 // size * U, 0 for padding
  std::vector<int> node_table_row;             // item - 1 or -1
  std::vector<int> position_node_row;          // size * L, row of the node matrix or -1
  std::vector<int> position_table_row;         // item - 1 or -1
  std::vector<int> position_example;           // example index of every position row
  std::vector<int> reversed_position;          // row of the position table or -1
  std::vector<int> forward_position;
  std::vector<unsigned char> position_mask;
  Matrix position_mask_column;                 // size * L x 1
  std::vector<int> last_position_row;          // size

  std::vector<int> session_self_row;           // size * U * D
  std::vector<int> session_neighbor_row;
  std::vector<int> session_relation;
  std::vector<unsigned char> session_mask;

  std::size_t level0_per_example = 0;
  std::vector<int> level0_table_row;
  std::vector<GlobalHop> hops;
};

// `graph` may be null when hops == 0. Throws when a prefix is empty, holds
// an item outside [1, item_count], or is longer than max_length.
Batch make_batch(std::span<const std::vector<int>> prefixes, const graphs::GlobalGraph* graph, int hops,
                 std::size_t item_count, std::size_t max_length, const BatchPadding& padding = {});

// Intermediate values of one forward pass. Unused branches stay invalid.
struct ForwardTrace {
  ad::Var session_mean;                    // size x d, hop-0 mean per session
  std::vector<ad::Var> global_attention;   // per hop: rows x degree
  ad::Var global;                          // size*U x d
  ad::Var session_attention;               // size*U x D
  ad::Var session;                         // size*U x d
  ad::Var fused;                           // size*U x d
  ad::Var position_weights;                // size x L (beta, or attention in self_attention mode)
  ad::Var session_vector;                  // size x d
  ad::Var logits;                          // size x m
};

class Model {
 public:
  // Registers every parameter the configuration uses and draws them from
  // N(0, init_std^2) in registration order.
  Model(ModelConfig config, std::size_t item_count, std::uint64_t seed);
  // Adopts existing parameters; throws when names or shapes do not match.
  Model(ModelConfig config, std::size_t item_count, ad::ParameterStore params);

  const ModelConfig& config() const { return config_; }
  std::size_t item_count() const { return item_count_; }
  ad::ParameterStore& parameters() { return params_; }
  const ad::ParameterStore& parameters() const { return params_; }

  // `rng` is only consulted for dropout when train is set.
  ForwardTrace forward(ad::Tape& tape, const Batch& batch, bool train, std::mt19937_64* rng) const;

  // Mean loss over the batch; labels are item indices in [1, m].
  ad::Var loss(ad::Tape& tape, const Batch& batch, std::span<const int> labels, bool train,
               std::mt19937_64* rng) const;

  // Evaluation-mode logits, size x m.
  Matrix scores(const Batch& batch) const;

 private:
  void register_parameters();
  ad::Var global_layer(ad::Tape& tape, const Batch& batch, ad::Var table, ad::Var session_mean,
                       ForwardTrace& trace) const;
  ad::Var session_layer(ad::Tape& tape, const Batch& batch, ad::Var node_embeddings, ForwardTrace& trace) const;
  ad::Var fuse(ad::Tape& tape, ad::Var global, ad::Var session, bool train, std::mt19937_64* rng) const;
  ad::Var encode(ad::Tape& tape, const Batch& batch, ad::Var fused, ForwardTrace& trace) const;
  ad::Var bind(ad::Tape& tape, std::string_view name) const;

  ModelConfig config_;
  std::size_t item_count_ = 0;
  mutable ad::ParameterStore params_;
};

// Expected parameter names and shapes for a configuration.
std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> parameter_layout(const ModelConfig& config,
                                                                                        std::size_t item_count);

ad::Var predict(ad::Var logits);
// Throws std::domain_error when the loss is not finite.
ad::Var prediction_loss(ad::Var probs, std::span<const int> labels, LossMode mode);

}  // namespace gcegnn::model
