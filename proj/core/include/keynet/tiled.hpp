#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "keynet/sparse.hpp"

namespace keynet::sparse {

inline constexpr std::size_t kDefaultTileSize = 16;

// One dictionary tile: the non-zeros of a T x T block, addressed by the
// row-major local index r * T + c, strictly ascending.
struct SparseTile {
  std::vector<std::uint32_t> index;
  std::vector<double> values;

  friend bool operator==(const SparseTile&, const SparseTile&) = default;
};

// Block-compressed matrix. The matrix is logically zero-padded to a multiple
// of the tile size and cut into T x T blocks; every non-zero block is stored
// once in a dictionary and referenced from a grid. Two grid cells share a
// tile id iff their blocks are bitwise identical.
class TiledMatrix {
 public:
  using TileId = std::uint32_t;

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t tile_size() const { return tile_size_; }
  std::size_t grid_rows() const { return grid_rows_; }
  std::size_t grid_cols() const { return grid_cols_; }
  std::size_t tile_count() const { return tiles_.size(); }
  std::size_t occupied_cells() const;

  // Row-major dense T*T values of a dictionary tile.
  std::vector<double> tile(TileId id) const;
  const SparseTile& tile_entries(TileId id) const;
  std::optional<TileId> cell(std::size_t grid_row, std::size_t grid_col) const;

  // Bytes of the serialized payload. Each tile is a count followed by
  // (local index, f64) pairs, with 2-byte counts and indices for
  // T <= 255 and 4-byte ones above; each occupied cell is a
  // (u32 grid row, u32 grid col, u32 tile id) record. A tile holding k
  // entries costs at most 24 * k bytes including its cell record, so the
  // payload never exceeds coo_bytes() for T <= 255.
  std::size_t stored_bytes() const;
  // Width in bytes of tile counts and local indices.
  std::size_t index_width() const { return tile_size_ <= 255 ? 2 : 4; }

  // Assembles from parts; validates shapes, ids and tile contents.
  static TiledMatrix from_parts(std::size_t rows, std::size_t cols,
                                std::size_t tile_size,
                                std::vector<SparseTile> tile_dict,
                                std::vector<std::optional<TileId>> grid);

  const std::vector<SparseTile>& tile_dict() const { return tiles_; }
  const std::vector<std::optional<TileId>>& grid() const { return grid_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t tile_size_ = 1;
  std::size_t grid_rows_ = 0;
  std::size_t grid_cols_ = 0;
  std::vector<SparseTile> tiles_;
  std::vector<std::optional<TileId>> grid_;  // grid_rows_ x grid_cols_
};

// Naive coordinate storage cost: 24 bytes (u64 row, u64 col, f64) per entry.
std::size_t coo_bytes(const CooMatrix& m);

TiledMatrix to_tiled(const CooMatrix& m,
                     std::size_t tile_size = kDefaultTileSize);
CooMatrix from_tiled(const TiledMatrix& t);

// Result is bitwise identical to coo_matvec(from_tiled(t), v): stored zeros in
// a tile are skipped and each row accumulates in ascending column order.
DenseVector tiled_matvec(const TiledMatrix& t, std::span<const double> v);

}  // namespace keynet::sparse
