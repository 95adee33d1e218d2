#include "keynet/tiled.hpp"

#include <algorithm>
#include <cstring>
#include <string>
#include <unordered_map>

#include "keynet/errors.hpp"
#include "keynet/parallel.hpp"

namespace keynet::sparse {
namespace {

// Raw bytes of a tile's indices and values; equal keys <=> bitwise equal blocks.
std::string tile_key(const SparseTile& t) {
  std::string key(t.index.size() * (sizeof(std::uint32_t) + sizeof(double)), '\0');
  char* out = key.data();
  std::memcpy(out, t.index.data(), t.index.size() * sizeof(std::uint32_t));
  out += t.index.size() * sizeof(std::uint32_t);
  std::memcpy(out, t.values.data(), t.values.size() * sizeof(double));
  return key;
}

}  // namespace

std::size_t TiledMatrix::occupied_cells() const {
  return static_cast<std::size_t>(
      std::count_if(grid_.begin(), grid_.end(),
                    [](const auto& c) { return c.has_value(); }));
}

const SparseTile& TiledMatrix::tile_entries(TileId id) const {
  if (id >= tiles_.size()) throw ShapeError("tiled: tile id out of range");
  return tiles_[id];
}

std::vector<double> TiledMatrix::tile(TileId id) const {
  const SparseTile& t = tile_entries(id);
  std::vector<double> dense(tile_size_ * tile_size_, 0.0);
  for (std::size_t k = 0; k < t.index.size(); ++k) dense[t.index[k]] = t.values[k];
  return dense;
}

std::optional<TiledMatrix::TileId> TiledMatrix::cell(std::size_t gr,
                                                     std::size_t gc) const {
  if (gr >= grid_rows_ || gc >= grid_cols_)
    throw ShapeError("tiled: grid cell out of range");
  return grid_[gr * grid_cols_ + gc];
}

std::size_t TiledMatrix::stored_bytes() const {
  const std::size_t w = index_width();
  std::size_t bytes = occupied_cells() * 12;
  for (const auto& t : tiles_) bytes += w + t.index.size() * (w + sizeof(double));
  return bytes;
}

TiledMatrix TiledMatrix::from_parts(std::size_t rows, std::size_t cols,
                                    std::size_t tile_size,
                                    std::vector<SparseTile> tile_dict,
                                    std::vector<std::optional<TileId>> grid) {
  if (tile_size == 0) throw ParameterError("tiled: tile_size must be >= 1");
  if (tile_size > 65535) throw ParameterError("tiled: tile_size must be <= 65535");
  TiledMatrix t;
  t.rows_ = rows;
  t.cols_ = cols;
  t.tile_size_ = tile_size;
  t.grid_rows_ = (rows + tile_size - 1) / tile_size;
  t.grid_cols_ = (cols + tile_size - 1) / tile_size;
  if (grid.size() != t.grid_rows_ * t.grid_cols_)
    throw FormatError("tiled: grid size does not match shape");
  const std::size_t len = tile_size * tile_size;
  for (const auto& tile : tile_dict) {
    if (tile.index.size() != tile.values.size())
      throw FormatError("tiled: tile index/value length mismatch");
    if (tile.index.empty()) throw FormatError("tiled: empty dictionary tile");
    for (std::size_t k = 0; k < tile.index.size(); ++k) {
      if (tile.index[k] >= len) throw FormatError("tiled: tile index out of range");
      if (k > 0 && tile.index[k] <= tile.index[k - 1])
        throw FormatError("tiled: tile indices not strictly ascending");
      if (tile.values[k] == 0.0) throw FormatError("tiled: stored zero in tile");
    }
  }
  t.tiles_ = std::move(tile_dict);
  t.grid_ = std::move(grid);
  const std::size_t n = t.tiles_.size();
  for (std::size_t g = 0; g < t.grid_.size(); ++g) {
    const auto& c = t.grid_[g];
    if (!c) continue;
    if (*c >= n) throw FormatError("tiled: grid references missing tile");
    // Entries falling in the zero padding would not round-trip.
    const std::size_t r0 = (g / t.grid_cols_) * tile_size;
    const std::size_t c0 = (g % t.grid_cols_) * tile_size;
    for (const auto idx : t.tiles_[*c].index) {
      if (r0 + idx / tile_size >= rows || c0 + idx % tile_size >= cols)
        throw FormatError("tiled: non-zero value in padding region");
    }
  }
  return t;
}

std::size_t coo_bytes(const CooMatrix& m) { return m.nnz() * 24; }

TiledMatrix to_tiled(const CooMatrix& m, std::size_t tile_size) {
  if (tile_size == 0) throw ParameterError("to_tiled: tile_size must be >= 1");
  if (tile_size > 65535) throw ParameterError("to_tiled: tile_size must be <= 65535");
  const std::size_t T = tile_size;
  const std::size_t grid_rows = (m.rows() + T - 1) / T;
  const std::size_t grid_cols = (m.cols() + T - 1) / T;
  std::vector<SparseTile> dict;
  std::vector<std::optional<TiledMatrix::TileId>> grid(grid_rows * grid_cols);

  std::unordered_map<std::string, TiledMatrix::TileId> seen;
  // Tiles of one grid row under construction, keyed by grid column. Rows are
  // visited in order and columns ascend within a row, so local indices are
  // appended in ascending order.
  std::vector<SparseTile> strip(grid_cols);
  std::vector<std::size_t> touched;

  for (std::size_t gr = 0; gr < grid_rows; ++gr) {
    touched.clear();
    const std::size_t r0 = gr * T;
    const std::size_t r1 = std::min(m.rows(), r0 + T);
    for (std::size_t r = r0; r < r1; ++r) {
      const auto view = m.row(r);
      for (std::size_t k = 0; k < view.size(); ++k) {
        const std::size_t c = view.cols[k];
        const std::size_t gc = c / T;
        auto& tile = strip[gc];
        if (tile.index.empty()) touched.push_back(gc);
        tile.index.push_back(static_cast<std::uint32_t>((r - r0) * T + (c - gc * T)));
        tile.values.push_back(view.values[k]);
      }
    }
    std::sort(touched.begin(), touched.end());
    for (const std::size_t gc : touched) {
      auto& tile = strip[gc];
      auto [it, inserted] = seen.try_emplace(
          tile_key(tile), static_cast<TiledMatrix::TileId>(dict.size()));
      if (inserted) dict.push_back(tile);
      grid[gr * grid_cols + gc] = it->second;
      tile.index.clear();
      tile.values.clear();
    }
  }
  return TiledMatrix::from_parts(m.rows(), m.cols(), T, std::move(dict), std::move(grid));
}

CooMatrix from_tiled(const TiledMatrix& t) {
  const std::size_t T = t.tile_size();
  std::vector<std::size_t> ptr(t.rows() + 1, 0);
  std::vector<CooMatrix::Index> cols;
  std::vector<double> vals;
  std::vector<std::size_t> cursor(t.grid_cols());
  for (std::size_t gr = 0; gr < t.grid_rows(); ++gr) {
    std::fill(cursor.begin(), cursor.end(), 0);
    const std::size_t r0 = gr * T;
    const std::size_t rn = std::min(T, t.rows() - r0);
    for (std::size_t lr = 0; lr < rn; ++lr) {
      for (std::size_t gc = 0; gc < t.grid_cols(); ++gc) {
        const auto id = t.cell(gr, gc);
        if (!id) continue;
        const SparseTile& tile = t.tile_entries(*id);
        std::size_t& k = cursor[gc];
        for (; k < tile.index.size() && tile.index[k] / T == lr; ++k) {
          cols.push_back(static_cast<CooMatrix::Index>(gc * T + tile.index[k] % T));
          vals.push_back(tile.values[k]);
        }
      }
      ptr[r0 + lr + 1] = vals.size();
    }
  }
  return CooMatrix::from_compressed(t.rows(), t.cols(), std::move(ptr),
                                    std::move(cols), std::move(vals));
}

DenseVector tiled_matvec(const TiledMatrix& t, std::span<const double> v) {
  if (t.cols() != v.size())
    throw ShapeError("tiled_matvec: matrix has " + std::to_string(t.cols()) +
                     " columns, vector has length " + std::to_string(v.size()));
  const std::size_t T = t.tile_size();
  const auto& dict = t.tile_dict();
  const auto& grid = t.grid();
  DenseVector y(t.rows(), 0.0);
  // Cells are visited in ascending grid column and tile entries are row-major,
  // so every y[r] accumulates its terms in ascending column order, exactly as
  // coo_matvec does.
  parallel_for(t.grid_rows(), [&](std::size_t gb, std::size_t ge) {
    for (std::size_t gr = gb; gr < ge; ++gr) {
      double* yr = y.data() + gr * T;
      for (std::size_t gc = 0; gc < t.grid_cols(); ++gc) {
        const auto& id = grid[gr * t.grid_cols() + gc];
        if (!id) continue;
        const SparseTile& tile = dict[*id];
        const double* vc = v.data() + gc * T;
        const std::size_t n = tile.index.size();
        for (std::size_t k = 0; k < n; ++k) {
          const std::uint32_t idx = tile.index[k];
          yr[idx / T] += tile.values[k] * vc[idx % T];
        }
      }
    }
  }, 16);
  return y;
}

}  // namespace keynet::sparse
