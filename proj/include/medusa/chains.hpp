#pragma once

#include <string>
#include <vector>

#include "medusa/fusion_graph.hpp"

namespace medusa {

struct LatentModel;

enum class Direction { Forward, Reverse };

struct ChainStep {
  std::string edge_id;
  Direction direction = Direction::Forward;

  bool operator==(const ChainStep& other) const {
    return edge_id == other.edge_id && direction == other.direction;
  }
};

// A typed path through the relation graph. Steps may traverse an edge
// against its stored orientation (Direction::Reverse).
struct Chain {
  std::vector<ChainStep> steps;
  std::string source_type;
  std::string target_type;

  std::size_t length() const { return steps.size(); }
  bool operator==(const Chain& other) const {
    return steps == other.steps && source_type == other.source_type &&
           target_type == other.target_type;
  }
};

// All chains from source_type to target_type of length <= max_length, in
// lexicographic order of their step sequences. Within a chain each type may
// appear once (twice when it is the source or the target, counting the
// endpoints) and each edge is traversed at most once in either direction.
std::vector<Chain> enumerate_chains(const GraphSchema& schema, const std::string& source_type,
                                    const std::string& target_type, int max_length);

// Text form: edge ids joined by " > ", with "!" marking reverse traversal,
// e.g. "g_go > go_ex > di_ex!". parse validates edge ids and connectivity.
Chain parse_chain_spec(const GraphSchema& schema, const std::string& spec);
std::string chain_spec_string(const Chain& chain);

// The sequence of type ids visited, joined by "->".
std::string semantic_label(const GraphSchema& schema, const Chain& chain);

struct MaterializedChain {
  Chain chain;
  std::string label;
  Matrix values;  // n_source x n_target
};

// Latent-space chain product: reconstructed relations composed through the
// shared factors, without forming any intermediate dense reconstruction.
Matrix materialize_raw(const LatentModel& model, const Chain& chain);

// materialize_raw, clamped to be non-negative and row-normalized so each
// source entity gets a distribution over target entities.
MaterializedChain materialize(const LatentModel& model, const Chain& chain);

}  // namespace medusa
