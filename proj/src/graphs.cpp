#include "gcegnn/graphs.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

namespace gcegnn::graphs {

std::optional<Relation> SessionGraph::relation(int i, int j) const {
  if (i < 0 || static_cast<std::size_t>(i) >= edges.size()) return std::nullopt;
  for (const auto& e : edges[static_cast<std::size_t>(i)])
    if (e.neighbor == j) return e.relation;
  return std::nullopt;
}

SessionGraph build_session_graph(std::span<const int> sequence) {
  if (sequence.empty()) throw std::invalid_argument("build_session_graph: empty sequence");
  SessionGraph g;
  std::unordered_map<int, int> slot;
  for (int item : sequence) {
    auto [it, inserted] = slot.try_emplace(item, static_cast<int>(g.nodes.size()));
    if (inserted) g.nodes.push_back(item);
    g.position_node.push_back(it->second);
  }
  std::set<std::pair<int, int>> transitions;
  for (std::size_t t = 0; t + 1 < g.position_node.size(); ++t) {
    const int a = g.position_node[t], b = g.position_node[t + 1];
    if (a != b) transitions.emplace(a, b);
  }
  g.edges.resize(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const int si = static_cast<int>(i);
    g.edges[i].push_back({si, Relation::self});
    for (int j = 0; j < static_cast<int>(g.nodes.size()); ++j) {
      if (j == si) continue;
      const bool out = transitions.count({si, j}) > 0;
      const bool in = transitions.count({j, si}) > 0;
      if (out && in) {
        g.edges[i].push_back({j, Relation::in_out});
      } else if (out) {
        g.edges[i].push_back({j, Relation::out});
      } else if (in) {
        g.edges[i].push_back({j, Relation::in});
      }
    }
  }
  return g;
}

PairWeights count_cooccurrences(std::span<const corpus::Session> sessions, int epsilon) {
  if (epsilon < 1) throw std::invalid_argument("epsilon must be >= 1");
  PairWeights weights;
  for (const auto& s : sessions) {
    const auto& items = s.items;
    for (std::size_t i = 0; i < items.size(); ++i) {
      for (std::size_t off = 1; off <= static_cast<std::size_t>(epsilon) && i + off < items.size(); ++off) {
        if (items[i] == items[i + off]) continue;
        ++weights[pair_key(items[i], items[i + off])];
      }
    }
  }
  return weights;
}

GlobalGraph::GlobalGraph(std::size_t item_count, const PairWeights& weights, std::size_t top_n)
    : lists_(item_count) {
  if (top_n == 0) throw std::invalid_argument("top_n must be >= 1");
  for (const auto& [key, w] : weights) {
    const int lo = static_cast<int>(key >> 32);
    const int hi = static_cast<int>(key & 0xffffffffu);
    if (lo < 1 || static_cast<std::size_t>(hi) > item_count) {
      throw std::out_of_range("co-occurrence pair outside vocabulary");
    }
    lists_[static_cast<std::size_t>(lo - 1)].push_back({hi, w});
    lists_[static_cast<std::size_t>(hi - 1)].push_back({lo, w});
  }
  for (auto& list : lists_) {
    std::sort(list.begin(), list.end(), [](const Neighbor& a, const Neighbor& b) {
      return a.weight != b.weight ? a.weight > b.weight : a.item < b.item;
    });
    if (list.size() > top_n) list.resize(top_n);
  }
}

GlobalGraph::GlobalGraph(std::vector<std::vector<Neighbor>> lists) : lists_(std::move(lists)) {}

std::span<const Neighbor> GlobalGraph::neighbors(int item) const {
  if (item < 1 || static_cast<std::size_t>(item) > lists_.size()) {
    throw std::out_of_range("global graph: unknown item " + std::to_string(item));
  }
  return lists_[static_cast<std::size_t>(item - 1)];
}

std::size_t GlobalGraph::max_degree() const {
  std::size_t d = 0;
  for (const auto& l : lists_) d = std::max(d, l.size());
  return d;
}

GlobalGraph build_global_graph(std::span<const corpus::Session> train_sessions, std::size_t item_count, int epsilon,
                               std::size_t top_n) {
  return GlobalGraph(item_count, count_cooccurrences(train_sessions, epsilon), top_n);
}

void write_global_graph(std::ostream& out, const GlobalGraph& graph) {
  for (std::size_t i = 0; i < graph.item_count(); ++i) {
    const int item = static_cast<int>(i + 1);
    for (const auto& n : graph.neighbors(item)) out << item << '\t' << n.item << '\t' << n.weight << '\n';
  }
}

GlobalGraph read_global_graph(std::istream& in, std::size_t item_count) {
  std::vector<std::vector<Neighbor>> lists(item_count);
  std::string line;
  std::size_t line_no = 0;
  int previous = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    long long item = 0, neighbor = 0, weight = 0;
    if (!(fields >> item >> neighbor >> weight) || item < 1 || neighbor < 1 ||
        static_cast<std::size_t>(item) > item_count || static_cast<std::size_t>(neighbor) > item_count ||
        weight < 1 || item == neighbor || item < previous) {
      throw std::runtime_error("global graph line " + std::to_string(line_no) + ": malformed record");
    }
    previous = static_cast<int>(item);
    lists[static_cast<std::size_t>(item - 1)].push_back({static_cast<int>(neighbor), weight});
  }
  return GlobalGraph(std::move(lists));
}

}  // namespace gcegnn::graphs
