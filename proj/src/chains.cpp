#include "medusa/chains.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "medusa/errors.hpp"
#include "medusa/factorization.hpp"

namespace medusa {

namespace {

struct Move {
  std::string edge_id;
  Direction direction;
  std::string next_type;
};

// Candidate steps out of each type, ordered so depth-first search emits
// chains in lexicographic order (edge id ascending, forward before reverse).
std::map<std::string, std::vector<Move>> build_moves(const GraphSchema& schema) {
  std::vector<const GraphSchema::EdgeInfo*> edges;
  for (const auto& e : schema.relations) edges.push_back(&e);
  std::sort(edges.begin(), edges.end(),
            [](const auto* a, const auto* b) { return a->edge_id < b->edge_id; });
  std::map<std::string, std::vector<Move>> moves;
  for (const auto* e : edges) {
    moves[e->source].push_back({e->edge_id, Direction::Forward, e->target});
    moves[e->target].push_back({e->edge_id, Direction::Reverse, e->source});
  }
  return moves;
}

}  // namespace

std::vector<Chain> enumerate_chains(const GraphSchema& schema, const std::string& source_type,
                                    const std::string& target_type, int max_length) {
  if (!schema.has_type(source_type)) throw ValidationError("unknown type: " + source_type);
  if (!schema.has_type(target_type)) throw ValidationError("unknown type: " + target_type);
  if (max_length < 1) throw ValidationError("max_length must be >= 1");

  const auto moves = build_moves(schema);
  auto budget = [&](const std::string& t) {
    return 1 + (t == source_type ? 1 : 0) + (t == target_type ? 1 : 0);
  };

  std::vector<Chain> out;
  std::vector<ChainStep> steps;
  std::set<std::string> used_edges;
  std::map<std::string, int> visits;
  visits[source_type] = 1;

  auto dfs = [&](auto&& self, const std::string& current) -> void {
    if (current == target_type && !steps.empty())
      out.push_back({steps, source_type, target_type});
    if (static_cast<int>(steps.size()) >= max_length) return;
    auto it = moves.find(current);
    if (it == moves.end()) return;
    for (const auto& move : it->second) {
      if (used_edges.count(move.edge_id)) continue;
      if (visits[move.next_type] + 1 > budget(move.next_type)) continue;
      used_edges.insert(move.edge_id);
      ++visits[move.next_type];
      steps.push_back({move.edge_id, move.direction});
      self(self, move.next_type);
      steps.pop_back();
      --visits[move.next_type];
      used_edges.erase(move.edge_id);
    }
  };
  dfs(dfs, source_type);
  return out;
}

Chain parse_chain_spec(const GraphSchema& schema, const std::string& spec) {
  std::vector<std::string> tokens;
  std::string token;
  std::stringstream stream(spec);
  while (std::getline(stream, token, '>')) {
    const auto first = token.find_first_not_of(" \t");
    const auto last = token.find_last_not_of(" \t");
    if (first == std::string::npos) throw ValidationError("empty step in chain spec: " + spec);
    tokens.push_back(token.substr(first, last - first + 1));
  }
  if (tokens.empty()) throw ValidationError("empty chain spec");

  Chain chain;
  std::string current;
  for (const auto& t : tokens) {
    ChainStep step;
    step.edge_id = t;
    if (!t.empty() && t.back() == '!') {
      step.direction = Direction::Reverse;
      step.edge_id = t.substr(0, t.size() - 1);
    }
    if (!schema.has_edge(step.edge_id))
      throw ValidationError("unknown edge in chain spec: " + step.edge_id);
    const auto& e = schema.edge(step.edge_id);
    const std::string from = step.direction == Direction::Forward ? e.source : e.target;
    const std::string to = step.direction == Direction::Forward ? e.target : e.source;
    if (chain.steps.empty()) {
      chain.source_type = from;
    } else if (from != current) {
      throw ValidationError("chain step " + t + " starts at type " + from +
                            " but the previous step ends at type " + current);
    }
    chain.steps.push_back(step);
    current = to;
  }
  chain.target_type = current;
  return chain;
}

std::string chain_spec_string(const Chain& chain) {
  std::string out;
  for (std::size_t i = 0; i < chain.steps.size(); ++i) {
    if (i) out += " > ";
    out += chain.steps[i].edge_id;
    if (chain.steps[i].direction == Direction::Reverse) out += '!';
  }
  return out;
}

std::string semantic_label(const GraphSchema& schema, const Chain& chain) {
  std::string out = chain.source_type;
  for (const auto& step : chain.steps) {
    const auto& e = schema.edge(step.edge_id);
    out += "->";
    out += step.direction == Direction::Forward ? e.target : e.source;
  }
  return out;
}

Matrix materialize_raw(const LatentModel& model, const Chain& chain) {
  if (chain.steps.empty()) throw ValidationError("cannot materialize an empty chain");
  // G_src * M_1 * Gram(mid_1) * M_2 * ... * M_L * G_tgt^T with M_k the
  // interaction matrix of step k (transposed for reverse traversal). The
  // Gram matrices of the intermediate factors stitch consecutive steps
  // together without forming any n x n reconstruction.
  Matrix acc = model.factors.at(chain.source_type);
  std::string current = chain.source_type;
  for (std::size_t i = 0; i < chain.steps.size(); ++i) {
    const auto& step = chain.steps[i];
    const auto& e = model.schema.edge(step.edge_id);
    const Matrix& s = model.interactions.at(step.edge_id);
    if (step.direction == Direction::Forward) {
      if (e.source != current)
        throw ValidationError("chain is not connected at edge " + step.edge_id);
      acc = acc * s;
      current = e.target;
    } else {
      if (e.target != current)
        throw ValidationError("chain is not connected at edge " + step.edge_id);
      acc = acc * s.transpose();
      current = e.source;
    }
    const Matrix& g = model.factors.at(current);
    if (i + 1 < chain.steps.size())
      acc = acc * (g.transpose() * g);
    else
      acc = acc * g.transpose();
  }
  return acc;
}

MaterializedChain materialize(const LatentModel& model, const Chain& chain) {
  MaterializedChain out;
  out.chain = chain;
  out.label = semantic_label(model.schema, chain);
  out.values = row_stochastic(clamp_nonnegative(materialize_raw(model, chain)));
  return out;
}

}  // namespace medusa
