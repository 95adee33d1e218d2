#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace keynet::sparse {

using DenseVector = std::vector<double>;

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

// Sparse matrix with entries kept in row-major order, one entry per
// coordinate, no stored zeros. Storage is row-compressed; triplets() gives
// the coordinate view. Immutable after construction.
class CooMatrix {
 public:
  using Index = std::uint32_t;

  // Read-only view of one row: ascending column indices and their values.
  struct RowView {
    std::span<const Index> cols;
    std::span<const double> values;
    std::size_t size() const { return cols.size(); }
  };

  CooMatrix() = default;
  // All-zero matrix.
  CooMatrix(std::size_t rows, std::size_t cols);

  // Entries may come in any order. Exact zeros are dropped; duplicate
  // coordinates and out-of-range indices throw ShapeError.
  static CooMatrix from_triplets(std::size_t rows, std::size_t cols,
                                 std::vector<Triplet> entries);
  // Row-major dense input; exact zeros are not stored.
  static CooMatrix from_dense(std::size_t rows, std::size_t cols,
                              std::span<const double> dense);
  static CooMatrix identity(std::size_t n);

  // Builds directly from row-compressed arrays already in canonical form
  // (ascending unique columns per row, no zeros). Validated.
  static CooMatrix from_compressed(std::size_t rows, std::size_t cols,
                                   std::vector<std::size_t> row_ptr,
                                   std::vector<Index> col_idx,
                                   std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }

  RowView row(std::size_t r) const;
  // Value at (r, c), zero when not stored.
  double at(std::size_t r, std::size_t c) const;

  std::vector<Triplet> triplets() const;
  std::vector<double> to_dense() const;

  // Stored entries per row / per column.
  std::vector<std::size_t> row_counts() const;
  std::vector<std::size_t> col_counts() const;

  CooMatrix transpose() const;

  const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
  const std::vector<Index>& col_idx() const { return col_idx_; }
  const std::vector<double>& values() const { return values_; }

  // Same shape, same coordinates, bitwise identical values.
  bool bitwise_equal(const CooMatrix& other) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<Index> col_idx_;
  std::vector<double> values_;
};

// Number of stored entries.
std::size_t nnz(const CooMatrix& m);

// Stored entries with row < rows and col < cols.
std::size_t nnz_block(const CooMatrix& m, std::size_t rows, std::size_t cols);

// y = m * v. Each output is accumulated in ascending column order starting
// from +0.0, independent of worker partitioning.
DenseVector coo_matvec(const CooMatrix& m, std::span<const double> v);

// Exact sparse product; entries that cancel to exactly zero are dropped.
CooMatrix coo_matmul(const CooMatrix& a, const CooMatrix& b);

// Elementwise a - b.
CooMatrix coo_subtract(const CooMatrix& a, const CooMatrix& b);

// Leading rows x cols sub-block.
CooMatrix coo_block(const CooMatrix& m, std::size_t rows, std::size_t cols);

// Largest |a_ij - b_ij| over the union of both patterns.
double max_abs_diff(const CooMatrix& a, const CooMatrix& b);

}  // namespace keynet::sparse
