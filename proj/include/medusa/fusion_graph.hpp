#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "medusa/matrix_io.hpp"

namespace medusa {

struct ObjectType {
  std::string id;
  std::vector<std::string> labels;
  Index size() const { return static_cast<Index>(labels.size()); }
};

struct RelationMatrix {
  std::string edge_id;
  std::string source;
  std::string target;
  SparseMatrix values;  // size(source) x size(target)
};

struct ConstraintMatrix {
  std::string constraint_id;
  std::string type;
  SparseMatrix values;  // size(type) x size(type)
};

// Topology and labels without the matrix payloads. Fitted models keep one of
// these so chains and detection can run without the original data files.
struct GraphSchema {
  struct TypeInfo {
    std::string id;
    std::vector<std::string> labels;
    Index size() const { return static_cast<Index>(labels.size()); }
  };
  struct EdgeInfo {
    std::string edge_id;
    std::string source;
    std::string target;
  };

  std::vector<TypeInfo> types;
  std::vector<EdgeInfo> relations;

  bool has_type(const std::string& id) const;
  const TypeInfo& type(const std::string& id) const;
  bool has_edge(const std::string& edge_id) const;
  const EdgeInfo& edge(const std::string& edge_id) const;
  // Index of a label within a type, or -1 when absent.
  Index label_index(const std::string& type_id, const std::string& label) const;
};

// An attributed multigraph of object types: relation matrices on edges,
// constraint matrices on nodes. Immutable after construction.
class FusionGraph {
 public:
  FusionGraph(std::vector<ObjectType> types, std::vector<RelationMatrix> relations,
              std::vector<ConstraintMatrix> constraints);

  static FusionGraph load(const std::filesystem::path& manifest_file);
  void save(const std::filesystem::path& directory) const;

  const std::vector<ObjectType>& types() const { return types_; }
  const std::vector<RelationMatrix>& relations() const { return relations_; }
  const std::vector<ConstraintMatrix>& constraints() const { return constraints_; }

  bool has_type(const std::string& id) const;
  const ObjectType& type(const std::string& id) const;
  const RelationMatrix& relation(const std::string& edge_id) const;
  std::vector<const RelationMatrix*> relations_with(const std::string& type_id) const;
  std::vector<const ConstraintMatrix*> constraints_on(const std::string& type_id) const;

  GraphSchema schema() const;

 private:
  void validate() const;

  std::vector<ObjectType> types_;
  std::vector<RelationMatrix> relations_;
  std::vector<ConstraintMatrix> constraints_;
  std::map<std::string, std::size_t> type_index_;
  std::map<std::string, std::size_t> relation_index_;
};

// Divides each column by its Euclidean norm, then each row of the result by
// its Euclidean norm. All-zero columns and rows pass through unchanged.
Matrix normalize_matrix(const Matrix& m);
SparseMatrix normalize_matrix(const SparseMatrix& m);

// Scales each row to sum 1; an all-zero row becomes the uniform distribution.
// Callers clamp negative entries to zero first (see clamp_nonnegative).
Matrix row_stochastic(const Matrix& m);

Matrix clamp_nonnegative(Matrix m);

// Applies normalize_matrix to every relation and constraint matrix.
FusionGraph normalize_graph(const FusionGraph& graph);

}  // namespace medusa
