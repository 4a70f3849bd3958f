#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "gcegnn/corpus.hpp"

namespace gcegnn::graphs {

// Relation of node j as seen from node i in a session graph.
enum class Relation : std::uint8_t {
  self = 0,
  in = 1,      // only j -> i observed
  out = 2,     // only i -> j observed
  in_out = 3,  // both directions observed
};

inline constexpr std::size_t kRelationCount = 4;

struct SessionEdge {
  int neighbor = 0;  // node slot
  Relation relation = Relation::self;
};

struct SessionGraph {
  std::vector<int> nodes;          // unique items in first-occurrence order
  std::vector<int> position_node;  // sequence position -> node slot
  // Per node slot: the self edge first, then other neighbors by ascending slot.
  std::vector<std::vector<SessionEdge>> edges;

  std::optional<Relation> relation(int i, int j) const;
};

SessionGraph build_session_graph(std::span<const int> sequence);

struct Neighbor {
  int item = 0;
  std::int64_t weight = 0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Unordered item pair {lo, hi} (lo < hi) -> co-occurrence count.
using PairWeights = std::unordered_map<std::uint64_t, std::int64_t>;

constexpr std::uint64_t pair_key(int a, int b) {
  const auto lo = static_cast<std::uint64_t>(a < b ? a : b);
  const auto hi = static_cast<std::uint64_t>(a < b ? b : a);
  return (lo << 32) | hi;
}

// Counts {item(i), item(i + offset)} for every position i and offset in
// [1, epsilon], skipping pairs of equal items.
PairWeights count_cooccurrences(std::span<const corpus::Session> sessions, int epsilon);

class GlobalGraph {
 public:
  GlobalGraph() = default;
  // Each list is sorted by descending weight then ascending item and cut to top_n.
  GlobalGraph(std::size_t item_count, const PairWeights& weights, std::size_t top_n);
  // Takes already-ordered lists; lists[i] belongs to item i + 1.
  explicit GlobalGraph(std::vector<std::vector<Neighbor>> lists);

  std::size_t item_count() const { return lists_.size(); }
  // Throws std::out_of_range for items outside [1, item_count()].
  std::span<const Neighbor> neighbors(int item) const;
  std::size_t max_degree() const;

  friend bool operator==(const GlobalGraph&, const GlobalGraph&) = default;

 private:
  std::vector<std::vector<Neighbor>> lists_;
};

GlobalGraph build_global_graph(std::span<const corpus::Session> train_sessions, std::size_t item_count,
                               int epsilon = 3, std::size_t top_n = 12);

// `item <TAB> neighbor <TAB> weight`, items ascending, each list in its order.
void write_global_graph(std::ostream& out, const GlobalGraph& graph);
GlobalGraph read_global_graph(std::istream& in, std::size_t item_count);

}  // namespace gcegnn::graphs
