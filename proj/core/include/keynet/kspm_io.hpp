#pragma once

#include <filesystem>
#include <string>

#include "keynet/sparse.hpp"
#include "keynet/tiled.hpp"

namespace keynet::sparse {

// KSPM blob, little-endian:
//   "KSPM" | u32 version | u64 rows | u64 cols | u64 nnz
//   then nnz x (u64 row | u64 col | f64 value), row-major.
inline constexpr std::uint32_t kKspmVersion = 1;

// KSTM blob (tiled variant), little-endian:
//   "KSTM" | u32 version | u64 rows | u64 cols | u64 tile_size | u64 n_tiles
//   then per tile: count, count x (local index | f64), where count and index
//   are u16 for tile_size <= 255 and u32 otherwise
//   then u64 n_cells and n_cells x (u32 grid_row | u32 grid_col | u32 tile_id)
inline constexpr std::uint32_t kKstmVersion = 2;

std::string encode_kspm(const CooMatrix& m);
CooMatrix decode_kspm(const std::string& bytes);

std::string encode_kstm(const TiledMatrix& t);
TiledMatrix decode_kstm(const std::string& bytes);

void write_kspm(const std::filesystem::path& path, const CooMatrix& m);
CooMatrix read_kspm(const std::filesystem::path& path);
void write_kstm(const std::filesystem::path& path, const TiledMatrix& t);
TiledMatrix read_kstm(const std::filesystem::path& path);

// Whole-file helpers shared by the other on-disk formats.
std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      const std::string& bytes);

}  // namespace keynet::sparse
