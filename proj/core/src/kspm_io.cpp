#include "keynet/kspm_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>

#include "keynet/errors.hpp"

namespace keynet::sparse {
namespace {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

template <typename T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return v;
  }
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const T le = to_le(v);
    const auto* p = reinterpret_cast<const char*>(&le);
    out_.append(p, sizeof(T));
  }
  void magic(const char (&m)[5]) { out_.append(m, 4); }
  std::string take() { return std::move(out_); }
  void reserve(std::size_t n) { out_.reserve(n); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, const char* what)
      : bytes_(bytes), what_(what) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size())
      throw FormatError(std::string(what_) + ": truncated blob");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_le(v);
  }
  void expect_magic(const char (&m)[5]) {
    if (bytes_.size() < 4 || bytes_.compare(0, 4, m, 4) != 0)
      throw FormatError(std::string(what_) + ": bad magic");
    pos_ = 4;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void expect_end() const {
    if (pos_ != bytes_.size())
      throw FormatError(std::string(what_) + ": trailing bytes");
  }

 private:
  const std::string& bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_kspm(const CooMatrix& m) {
  Writer w;
  w.reserve(36 + 24 * m.nnz());
  w.magic("KSPM");
  w.put<std::uint32_t>(kKspmVersion);
  w.put<std::uint64_t>(m.rows());
  w.put<std::uint64_t>(m.cols());
  w.put<std::uint64_t>(m.nnz());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto view = m.row(r);
    for (std::size_t k = 0; k < view.size(); ++k) {
      w.put<std::uint64_t>(r);
      w.put<std::uint64_t>(view.cols[k]);
      w.put<double>(view.values[k]);
    }
  }
  return w.take();
}

CooMatrix decode_kspm(const std::string& bytes) {
  Reader r(bytes, "KSPM");
  r.expect_magic("KSPM");
  const auto version = r.get<std::uint32_t>();
  if (version != kKspmVersion)
    throw FormatError("KSPM: unsupported version " + std::to_string(version));
  const auto rows = r.get<std::uint64_t>();
  const auto cols = r.get<std::uint64_t>();
  const auto nnz = r.get<std::uint64_t>();
  if (nnz > r.remaining() / 24) throw FormatError("KSPM: truncated blob");
  std::vector<Triplet> entries;
  entries.reserve(nnz);
  for (std::uint64_t k = 0; k < nnz; ++k) {
    const auto row = r.get<std::uint64_t>();
    const auto col = r.get<std::uint64_t>();
    const auto val = r.get<double>();
    if (val == 0.0) throw FormatError("KSPM: stored zero");
    entries.push_back({row, col, val});
  }
  r.expect_end();
  try {
    return CooMatrix::from_triplets(rows, cols, std::move(entries));
  } catch (const ShapeError& e) {
    throw FormatError(std::string("KSPM: ") + e.what());
  }
}

std::string encode_kstm(const TiledMatrix& t) {
  Writer w;
  w.magic("KSTM");
  w.put<std::uint32_t>(kKstmVersion);
  w.put<std::uint64_t>(t.rows());
  w.put<std::uint64_t>(t.cols());
  w.put<std::uint64_t>(t.tile_size());
  w.put<std::uint64_t>(t.tile_count());
  const bool narrow = t.index_width() == 2;
  const auto put_index = [&](std::size_t v) {
    if (narrow) {
      w.put<std::uint16_t>(static_cast<std::uint16_t>(v));
    } else {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(v));
    }
  };
  for (const auto& tile : t.tile_dict()) {
    put_index(tile.index.size());
    for (std::size_t k = 0; k < tile.index.size(); ++k) {
      put_index(tile.index[k]);
      w.put<double>(tile.values[k]);
    }
  }
  w.put<std::uint64_t>(t.occupied_cells());
  for (std::size_t gr = 0; gr < t.grid_rows(); ++gr)
    for (std::size_t gc = 0; gc < t.grid_cols(); ++gc)
      if (const auto id = t.cell(gr, gc)) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(gr));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(gc));
        w.put<std::uint32_t>(*id);
      }
  return w.take();
}

TiledMatrix decode_kstm(const std::string& bytes) {
  Reader r(bytes, "KSTM");
  r.expect_magic("KSTM");
  const auto version = r.get<std::uint32_t>();
  if (version != kKstmVersion)
    throw FormatError("KSTM: unsupported version " + std::to_string(version));
  const auto rows = r.get<std::uint64_t>();
  const auto cols = r.get<std::uint64_t>();
  const auto T = r.get<std::uint64_t>();
  const auto n_tiles = r.get<std::uint64_t>();
  if (T == 0 || T > 65535) throw FormatError("KSTM: invalid tile size");
  const std::size_t width = T <= 255 ? 2 : 4;
  const auto get_index = [&]() -> std::size_t {
    return width == 2 ? r.get<std::uint16_t>() : r.get<std::uint32_t>();
  };
  // Every tile takes at least its count field.
  if (n_tiles > r.remaining() / width) throw FormatError("KSTM: truncated blob");
  std::vector<SparseTile> dict(n_tiles);
  for (auto& tile : dict) {
    const std::size_t n = get_index();
    if (n > r.remaining() / (width + sizeof(double)))
      throw FormatError("KSTM: truncated blob");
    tile.index.resize(n);
    tile.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      tile.index[k] = static_cast<std::uint32_t>(get_index());
      tile.values[k] = r.get<double>();
    }
  }
  const std::size_t grid_rows = (rows + T - 1) / T;
  const std::size_t grid_cols = (cols + T - 1) / T;
  std::vector<std::optional<TiledMatrix::TileId>> grid(grid_rows * grid_cols);
  const auto n_cells = r.get<std::uint64_t>();
  if (n_cells > r.remaining() / 12) throw FormatError("KSTM: truncated blob");
  for (std::uint64_t k = 0; k < n_cells; ++k) {
    const auto gr = r.get<std::uint32_t>();
    const auto gc = r.get<std::uint32_t>();
    const auto id = r.get<std::uint32_t>();
    if (gr >= grid_rows || gc >= grid_cols)
      throw FormatError("KSTM: grid cell out of range");
    auto& cell = grid[gr * grid_cols + gc];
    if (cell) throw FormatError("KSTM: duplicate grid cell");
    cell = id;
  }
  r.expect_end();
  return TiledMatrix::from_parts(rows, cols, T, std::move(dict),
                                 std::move(grid));
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path,
                      const std::string& bytes) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

void write_kspm(const std::filesystem::path& path, const CooMatrix& m) {
  write_file_bytes(path, encode_kspm(m));
}

CooMatrix read_kspm(const std::filesystem::path& path) {
  return decode_kspm(read_file_bytes(path));
}

void write_kstm(const std::filesystem::path& path, const TiledMatrix& t) {
  write_file_bytes(path, encode_kstm(t));
}

TiledMatrix read_kstm(const std::filesystem::path& path) {
  return decode_kstm(read_file_bytes(path));
}

}  // namespace keynet::sparse
