#include "kift/matrix_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "kift/common.hpp"

namespace kift {

static_assert(std::endian::native == std::endian::little,
              "KIFT files are little-endian; big-endian hosts unsupported");

void save_matrix(const Matrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for write: " + path);
  const char magic[4] = {'K', 'I', 'F', 'T'};
  const std::uint32_t rows = static_cast<std::uint32_t>(m.rows);
  const std::uint32_t cols = static_cast<std::uint32_t>(m.cols);
  const std::uint32_t reserved = 0;
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&rows), 4);
  out.write(reinterpret_cast<const char*>(&cols), 4);
  out.write(reinterpret_cast<const char*>(&reserved), 4);
  std::vector<float> buf(m.data.size());
  for (std::size_t i = 0; i < m.data.size(); ++i) buf[i] = static_cast<float>(m.data[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw DataError("write failed: " + path);
}

Matrix load_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  char magic[4];
  std::uint32_t rows = 0, cols = 0, reserved = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&rows), 4);
  in.read(reinterpret_cast<char*>(&cols), 4);
  in.read(reinterpret_cast<char*>(&reserved), 4);
  if (!in || std::memcmp(magic, "KIFT", 4) != 0)
    throw FormatError("bad KIFT header in " + path);
  Matrix m(rows, cols);
  std::vector<float> buf(static_cast<std::size_t>(rows) * cols);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
    throw FormatError("truncated KIFT payload in " + path + " (expected " +
                      std::to_string(buf.size()) + " floats)");
  for (std::size_t i = 0; i < buf.size(); ++i) m.data[i] = buf[i];
  return m;
}

}  // namespace kift
