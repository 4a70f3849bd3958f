#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "gcegnn/corpus.hpp"
#include "gcegnn/graphs.hpp"
#include "gcegnn/model.hpp"

namespace gcegnn::toy {

// Three short sessions over five items, with repeats and back-and-forth
// transitions so every relation kind and a non-trivial global graph appear.
std::vector<corpus::Session> sessions();
inline constexpr std::size_t kItems = 5;

// `count` sessions cycling through one of `patterns` disjoint item loops of
// `items / patterns` items each, so the next item is a function of the last.
// Starting offsets and lengths (3 to 7) are drawn from `seed`.
std::vector<corpus::Session> pattern_sessions(std::size_t count, std::size_t patterns, std::size_t items,
                                              std::uint64_t seed);

// Finite-difference check of the full batch loss over every parameter, on
// all prefixes of the toy sessions. `config.max_length` is set from the data
// and dropout masks are replayed identically for each evaluation.
double model_gradcheck(model::ModelConfig config, std::uint64_t seed, std::ostream* dump_graph = nullptr);

}  // namespace gcegnn::toy
