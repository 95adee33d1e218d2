#include "keynet/sparse.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "keynet/errors.hpp"
#include "keynet/parallel.hpp"

namespace keynet::sparse {
namespace {

void check_index_range(std::size_t rows, std::size_t cols) {
  if (cols > std::numeric_limits<CooMatrix::Index>::max())
    throw ShapeError("sparse: column count " + std::to_string(cols) +
                     " exceeds the 32-bit column index range");
  (void)rows;
}

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

CooMatrix::CooMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {
  check_index_range(rows, cols);
}

CooMatrix CooMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                   std::vector<Triplet> entries) {
  check_index_range(rows, cols);
  std::sort(entries.begin(), entries.end(),
            [](const Triplet& a, const Triplet& b) {
              return a.row != b.row ? a.row < b.row : a.col < b.col;
            });
  CooMatrix m(rows, cols);
  m.col_idx_.reserve(entries.size());
  m.values_.reserve(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const Triplet& t = entries[k];
    if (t.row >= rows || t.col >= cols)
      throw ShapeError("sparse: entry (" + std::to_string(t.row) + ", " +
                       std::to_string(t.col) + ") outside " +
                       shape_str(rows, cols));
    if (k > 0 && entries[k - 1].row == t.row && entries[k - 1].col == t.col)
      throw ShapeError("sparse: duplicate entry at (" +
                       std::to_string(t.row) + ", " + std::to_string(t.col) +
                       ")");
    if (t.value == 0.0) continue;
    m.col_idx_.push_back(static_cast<Index>(t.col));
    m.values_.push_back(t.value);
    ++m.row_ptr_[t.row + 1];
  }
  std::partial_sum(m.row_ptr_.begin(), m.row_ptr_.end(), m.row_ptr_.begin());
  return m;
}

CooMatrix CooMatrix::from_dense(std::size_t rows, std::size_t cols,
                                std::span<const double> dense) {
  if (dense.size() != rows * cols)
    throw ShapeError("sparse: dense buffer of " + std::to_string(dense.size()) +
                     " values for shape " + shape_str(rows, cols));
  CooMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = dense[r * cols + c];
      if (v == 0.0) continue;
      m.col_idx_.push_back(static_cast<Index>(c));
      m.values_.push_back(v);
    }
    m.row_ptr_[r + 1] = m.values_.size();
  }
  return m;
}

CooMatrix CooMatrix::identity(std::size_t n) {
  CooMatrix m(n, n);
  m.col_idx_.resize(n);
  m.values_.assign(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    m.col_idx_[i] = static_cast<Index>(i);
    m.row_ptr_[i + 1] = i + 1;
  }
  return m;
}

CooMatrix CooMatrix::from_compressed(std::size_t rows, std::size_t cols,
                                     std::vector<std::size_t> row_ptr,
                                     std::vector<Index> col_idx,
                                     std::vector<double> values) {
  check_index_range(rows, cols);
  if (row_ptr.size() != rows + 1 || row_ptr.front() != 0 ||
      row_ptr.back() != values.size() || col_idx.size() != values.size())
    throw ShapeError("sparse: inconsistent compressed arrays");
  for (std::size_t r = 0; r < rows; ++r) {
    if (row_ptr[r] > row_ptr[r + 1])
      throw ShapeError("sparse: row pointers must be non-decreasing");
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      if (col_idx[k] >= cols) throw ShapeError("sparse: column out of range");
      if (k > row_ptr[r] && col_idx[k] <= col_idx[k - 1])
        throw ShapeError("sparse: columns must be strictly ascending");
      if (values[k] == 0.0) throw ShapeError("sparse: stored zero");
    }
  }
  CooMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.row_ptr_ = std::move(row_ptr);
  m.col_idx_ = std::move(col_idx);
  m.values_ = std::move(values);
  return m;
}

CooMatrix::RowView CooMatrix::row(std::size_t r) const {
  const std::size_t b = row_ptr_[r];
  const std::size_t e = row_ptr_[r + 1];
  return {std::span<const Index>(col_idx_.data() + b, e - b),
          std::span<const double>(values_.data() + b, e - b)};
}

double CooMatrix::at(std::size_t r, std::size_t c) const {
  if (r >= rows_ || c >= cols_) throw ShapeError("sparse: at() out of range");
  const auto view = row(r);
  const auto it = std::lower_bound(view.cols.begin(), view.cols.end(),
                                   static_cast<Index>(c));
  if (it == view.cols.end() || *it != c) return 0.0;
  return view.values[static_cast<std::size_t>(it - view.cols.begin())];
}

std::vector<Triplet> CooMatrix::triplets() const {
  std::vector<Triplet> out;
  out.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
      out.push_back({r, col_idx_[k], values_[k]});
  return out;
}

std::vector<double> CooMatrix::to_dense() const {
  std::vector<double> d(rows_ * cols_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
      d[r * cols_ + col_idx_[k]] = values_[k];
  return d;
}

std::vector<std::size_t> CooMatrix::row_counts() const {
  std::vector<std::size_t> c(rows_);
  for (std::size_t r = 0; r < rows_; ++r) c[r] = row_ptr_[r + 1] - row_ptr_[r];
  return c;
}

std::vector<std::size_t> CooMatrix::col_counts() const {
  std::vector<std::size_t> c(cols_, 0);
  for (const Index j : col_idx_) ++c[j];
  return c;
}

CooMatrix CooMatrix::transpose() const {
  std::vector<std::size_t> ptr(cols_ + 1, 0);
  for (const Index j : col_idx_) ++ptr[j + 1];
  std::partial_sum(ptr.begin(), ptr.end(), ptr.begin());
  std::vector<Index> cols(nnz());
  std::vector<double> vals(nnz());
  std::vector<std::size_t> fill(ptr.begin(), ptr.end() - 1);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      const std::size_t dst = fill[col_idx_[k]]++;
      cols[dst] = static_cast<Index>(r);
      vals[dst] = values_[k];
    }
  }
  return from_compressed(cols_, rows_, std::move(ptr), std::move(cols),
                         std::move(vals));
}

bool CooMatrix::bitwise_equal(const CooMatrix& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_ ||
      row_ptr_ != other.row_ptr_ || col_idx_ != other.col_idx_)
    return false;
  for (std::size_t k = 0; k < values_.size(); ++k)
    if (std::bit_cast<std::uint64_t>(values_[k]) !=
        std::bit_cast<std::uint64_t>(other.values_[k]))
      return false;
  return true;
}

std::size_t nnz(const CooMatrix& m) { return m.nnz(); }

std::size_t nnz_block(const CooMatrix& m, std::size_t rows, std::size_t cols) {
  std::size_t count = 0;
  const std::size_t rlim = std::min(rows, m.rows());
  for (std::size_t r = 0; r < rlim; ++r) {
    const auto view = m.row(r);
    count += static_cast<std::size_t>(
        std::lower_bound(view.cols.begin(), view.cols.end(), cols) -
        view.cols.begin());
  }
  return count;
}

DenseVector coo_matvec(const CooMatrix& m, std::span<const double> v) {
  if (m.cols() != v.size())
    throw ShapeError("coo_matvec: matrix " + shape_str(m.rows(), m.cols()) +
                     " times vector of length " + std::to_string(v.size()));
  DenseVector y(m.rows(), 0.0);
  const auto& ptr = m.row_ptr();
  const auto& cols = m.col_idx();
  const auto& vals = m.values();
  parallel_for(m.rows(), [&](std::size_t rb, std::size_t re) {
    for (std::size_t r = rb; r < re; ++r) {
      double acc = 0.0;
      for (std::size_t k = ptr[r]; k < ptr[r + 1]; ++k)
        acc += vals[k] * v[cols[k]];
      y[r] = acc;
    }
  }, 1024);
  return y;
}

CooMatrix coo_matmul(const CooMatrix& a, const CooMatrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("coo_matmul: " + shape_str(a.rows(), a.cols()) + " times " +
                     shape_str(b.rows(), b.cols()));
  const std::size_t rows = a.rows();
  const std::size_t cols = b.cols();

  // Gustavson row-by-row product. Each output entry accumulates its terms in
  // ascending k, so the result does not depend on the row partitioning.
  std::vector<std::vector<CooMatrix::Index>> row_cols(rows);
  std::vector<std::vector<double>> row_vals(rows);
  parallel_for(rows, [&](std::size_t rb, std::size_t re) {
    std::vector<double> acc(cols, 0.0);
    std::vector<std::uint8_t> touched(cols, 0);
    std::vector<CooMatrix::Index> pattern;
    for (std::size_t r = rb; r < re; ++r) {
      pattern.clear();
      const auto arow = a.row(r);
      for (std::size_t ka = 0; ka < arow.size(); ++ka) {
        const double av = arow.values[ka];
        const auto brow = b.row(arow.cols[ka]);
        for (std::size_t kb = 0; kb < brow.size(); ++kb) {
          const auto c = brow.cols[kb];
          if (!touched[c]) {
            touched[c] = 1;
            acc[c] = 0.0;
            pattern.push_back(c);
          }
          acc[c] += av * brow.values[kb];
        }
      }
      std::sort(pattern.begin(), pattern.end());
      auto& oc = row_cols[r];
      auto& ov = row_vals[r];
      for (const auto c : pattern) {
        touched[c] = 0;
        if (acc[c] == 0.0) continue;
        oc.push_back(c);
        ov.push_back(acc[c]);
      }
    }
  }, 64);

  std::vector<std::size_t> ptr(rows + 1, 0);
  for (std::size_t r = 0; r < rows; ++r) ptr[r + 1] = ptr[r] + row_cols[r].size();
  std::vector<CooMatrix::Index> col_idx;
  std::vector<double> values;
  col_idx.reserve(ptr.back());
  values.reserve(ptr.back());
  for (std::size_t r = 0; r < rows; ++r) {
    col_idx.insert(col_idx.end(), row_cols[r].begin(), row_cols[r].end());
    values.insert(values.end(), row_vals[r].begin(), row_vals[r].end());
    std::vector<CooMatrix::Index>().swap(row_cols[r]);
    std::vector<double>().swap(row_vals[r]);
  }
  return CooMatrix::from_compressed(rows, cols, std::move(ptr),
                                    std::move(col_idx), std::move(values));
}

CooMatrix coo_subtract(const CooMatrix& a, const CooMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("coo_subtract: " + shape_str(a.rows(), a.cols()) +
                     " minus " + shape_str(b.rows(), b.cols()));
  std::vector<std::size_t> ptr(a.rows() + 1, 0);
  std::vector<CooMatrix::Index> cols;
  std::vector<double> vals;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto ar = a.row(r);
    const auto br = b.row(r);
    std::size_t i = 0, j = 0;
    auto emit = [&](CooMatrix::Index c, double v) {
      if (v == 0.0) return;
      cols.push_back(c);
      vals.push_back(v);
    };
    while (i < ar.size() || j < br.size()) {
      if (j == br.size() || (i < ar.size() && ar.cols[i] < br.cols[j])) {
        emit(ar.cols[i], ar.values[i]);
        ++i;
      } else if (i == ar.size() || br.cols[j] < ar.cols[i]) {
        emit(br.cols[j], -br.values[j]);
        ++j;
      } else {
        emit(ar.cols[i], ar.values[i] - br.values[j]);
        ++i;
        ++j;
      }
    }
    ptr[r + 1] = vals.size();
  }
  return CooMatrix::from_compressed(a.rows(), a.cols(), std::move(ptr),
                                    std::move(cols), std::move(vals));
}

CooMatrix coo_block(const CooMatrix& m, std::size_t rows, std::size_t cols) {
  if (rows > m.rows() || cols > m.cols())
    throw ShapeError("coo_block: block larger than matrix");
  std::vector<std::size_t> ptr(rows + 1, 0);
  std::vector<CooMatrix::Index> ci;
  std::vector<double> vals;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto view = m.row(r);
    for (std::size_t k = 0; k < view.size() && view.cols[k] < cols; ++k) {
      ci.push_back(view.cols[k]);
      vals.push_back(view.values[k]);
    }
    ptr[r + 1] = vals.size();
  }
  return CooMatrix::from_compressed(rows, cols, std::move(ptr), std::move(ci),
                                    std::move(vals));
}

double max_abs_diff(const CooMatrix& a, const CooMatrix& b) {
  const CooMatrix d = coo_subtract(a, b);
  double worst = 0.0;
  for (const double v : d.values()) worst = std::max(worst, std::abs(v));
  return worst;
}

}  // namespace keynet::sparse
