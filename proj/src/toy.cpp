#include "gcegnn/toy.hpp"

#include <algorithm>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

namespace gcegnn::toy {

std::vector<corpus::Session> sessions() {
  return {
      {"t1", {1, 2, 3, 2, 4}, 1},
      {"t2", {2, 5, 3}, 2},
      {"t3", {4, 1, 5, 2}, 3},
  };
}

std::vector<corpus::Session> pattern_sessions(std::size_t count, std::size_t patterns, std::size_t items,
                                              std::uint64_t seed) {
  if (patterns == 0 || items < 2 * patterns) throw std::invalid_argument("each pattern needs at least two items");
  const std::size_t loop = items / patterns;
  std::mt19937_64 rng(seed);
  std::vector<corpus::Session> out;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t p = k % patterns;
    const std::size_t start = rng() % loop;
    const std::size_t length = 3 + rng() % 5;
    corpus::Session s{"p" + std::to_string(k), {}, static_cast<std::int64_t>(k)};
    for (std::size_t t = 0; t < length; ++t) s.items.push_back(static_cast<int>(p * loop + (start + t) % loop + 1));
    out.push_back(std::move(s));
  }
  return out;
}

double model_gradcheck(model::ModelConfig config, std::uint64_t seed, std::ostream* dump_graph) {
  const auto train = sessions();
  corpus::SessionCorpus c;
  c.sessions = train;
  const auto examples = corpus::split_sequences(c, corpus::Split::train);
  std::vector<std::vector<int>> prefixes;
  std::vector<int> labels;
  std::size_t longest = 0;
  for (const auto& e : examples) {
    prefixes.push_back(e.prefix);
    labels.push_back(e.label);
    longest = std::max(longest, e.prefix.size());
  }
  config.max_length = longest;
  const auto graph = graphs::build_global_graph(train, kItems, 3, 12);
  model::Model m(config, kItems, seed);
  const auto batch = model::make_batch(prefixes, config.hops > 0 ? &graph : nullptr, config.hops, kItems, longest);
  auto loss = [&](ad::Tape& tape) {
    std::mt19937_64 rng(seed + 1);
    return m.loss(tape, batch, labels, true, &rng);
  };
  if (dump_graph) {
    ad::Tape tape;
    loss(tape);
    tape.dump(*dump_graph);
  }
  return ad::gradcheck_parameters(loss, m.parameters());
}

}  // namespace gcegnn::toy
