#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace medusa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Index = Eigen::Index;

// Coordinate-triplet text format: first line "n_rows n_cols nnz", then nnz
// lines "row col value" with 0-based indices. Unlisted entries are 0.
SparseMatrix read_coo(const std::filesystem::path& file);
void write_coo(const std::filesystem::path& file, const SparseMatrix& m);
void write_coo(const std::filesystem::path& file, const Matrix& m);

// One label per line, order defines the label <-> index mapping.
std::vector<std::string> read_labels(const std::filesystem::path& file);
void write_labels(const std::filesystem::path& file, const std::vector<std::string>& labels);

// Shortest decimal representation that round-trips the exact double.
std::string format_double(double value);

// Writes to a temp file in the target directory, then renames into place.
void atomic_write_file(const std::filesystem::path& file, const std::string& content);

std::uint64_t fnv1a64(const void* data, std::size_t size);
std::string file_hash_hex(const std::filesystem::path& file);

}  // namespace medusa
