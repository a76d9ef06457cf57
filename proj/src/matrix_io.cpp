#include "medusa/matrix_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "medusa/errors.hpp"

namespace medusa {

namespace {

std::ifstream open_input(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ValidationError("missing file: " + file.string());
  return in;
}

double parse_double(const std::string& token, const std::filesystem::path& file, std::size_t line_no) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw ValidationError("bad numeric value '" + token + "' in " + file.string() + " line " +
                          std::to_string(line_no));
  return value;
}

long long parse_int(const std::string& token, const std::filesystem::path& file, std::size_t line_no) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw ValidationError("bad integer '" + token + "' in " + file.string() + " line " +
                          std::to_string(line_no));
  return value;
}

}  // namespace

SparseMatrix read_coo(const std::filesystem::path& file) {
  std::ifstream in = open_input(file);
  std::string line;
  if (!std::getline(in, line))
    throw ValidationError("empty matrix file: " + file.string());
  std::istringstream header(line);
  std::string a, b, c;
  if (!(header >> a >> b >> c))
    throw ValidationError("bad header in matrix file: " + file.string());
  const long long n_rows = parse_int(a, file, 1);
  const long long n_cols = parse_int(b, file, 1);
  const long long nnz = parse_int(c, file, 1);
  if (n_rows < 0 || n_cols < 0 || nnz < 0)
    throw ValidationError("negative dimension in matrix file: " + file.string());

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(nnz));
  for (long long i = 0; i < nnz; ++i) {
    if (!std::getline(in, line))
      throw ValidationError("truncated matrix file (expected " + std::to_string(nnz) +
                            " entries): " + file.string());
    std::istringstream entry(line);
    std::string r, col, v;
    if (!(entry >> r >> col >> v))
      throw ValidationError("bad entry in " + file.string() + " line " + std::to_string(i + 2));
    const long long row = parse_int(r, file, static_cast<std::size_t>(i) + 2);
    const long long column = parse_int(col, file, static_cast<std::size_t>(i) + 2);
    const double value = parse_double(v, file, static_cast<std::size_t>(i) + 2);
    if (row < 0 || row >= n_rows || column < 0 || column >= n_cols)
      throw ValidationError("index out of range in " + file.string() + " line " +
                            std::to_string(i + 2));
    triplets.emplace_back(static_cast<int>(row), static_cast<int>(column), value);
  }
  SparseMatrix m(static_cast<Index>(n_rows), static_cast<Index>(n_cols));
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

namespace {

std::string coo_to_string(Index n_rows, Index n_cols,
                          const std::vector<std::tuple<Index, Index, double>>& entries) {
  std::string out;
  out += std::to_string(n_rows) + " " + std::to_string(n_cols) + " " +
         std::to_string(entries.size()) + "\n";
  for (const auto& [r, c, v] : entries)
    out += std::to_string(r) + " " + std::to_string(c) + " " + format_double(v) + "\n";
  return out;
}

}  // namespace

void write_coo(const std::filesystem::path& file, const SparseMatrix& m) {
  std::vector<std::tuple<Index, Index, double>> entries;
  entries.reserve(static_cast<std::size_t>(m.nonZeros()));
  // Row-major traversal keeps files stable regardless of in-memory layout.
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) {
      const double v = m.coeff(r, c);
      if (v != 0.0) entries.emplace_back(r, c, v);
    }
  atomic_write_file(file, coo_to_string(m.rows(), m.cols(), entries));
}

void write_coo(const std::filesystem::path& file, const Matrix& m) {
  std::vector<std::tuple<Index, Index, double>> entries;
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c)
      if (m(r, c) != 0.0) entries.emplace_back(r, c, m(r, c));
  atomic_write_file(file, coo_to_string(m.rows(), m.cols(), entries));
}

std::vector<std::string> read_labels(const std::filesystem::path& file) {
  std::ifstream in = open_input(file);
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) labels.push_back(line);
  }
  return labels;
}

void write_labels(const std::filesystem::path& file, const std::vector<std::string>& labels) {
  std::string out;
  for (const auto& label : labels) out += label + "\n";
  atomic_write_file(file, out);
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw NumericalError("failed to format double");
  return std::string(buf, ptr);
}

void atomic_write_file(const std::filesystem::path& file, const std::string& content) {
  const std::filesystem::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write file: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ValidationError("short write: " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string file_hash_hex(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ValidationError("missing file: " + file.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string bytes = buffer.str();
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return out;
}

}  // namespace medusa
