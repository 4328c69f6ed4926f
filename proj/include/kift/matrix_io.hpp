#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kift {

// Dense row-major matrix of doubles. The on-disk "KIFT" format stores f32.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // rows * cols, row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// Binary matrix file: 16-byte header {magic "KIFT", u32 n_rows, u32 n_cols,
// u32 reserved(0)}, then row-major little-endian f32 payload.
void save_matrix(const Matrix& m, const std::string& path);
Matrix load_matrix(const std::string& path);  // throws FormatError

}  // namespace kift
