#pragma once

// Data-parallel inner loops. Every parallel kernel splits work over output
// entries and accumulates each entry in sample order, so its result is
// bit-identical to the serial reference in kernels::serial.

#include <span>

#include "smorm/tensor.hpp"

namespace smorm::kernels {

// Σ_i w_i x_i x_iᵀ over the rows x_i of `rows`; weights default to 1.
Mat outer_sum(const Mat& rows, std::span<const double> weights = {});

// Σ_i x_i y_iᵀ over paired rows (cross-moment, d_x × d_y).
Mat cross_sum(const Mat& xs, const Mat& ys);

Mat matmul(const Mat& a, const Mat& b);

// out[i] = fn(row i) for every row; fn must be thread-safe.
template <class Fn>
Vec map_rows(const Mat& rows, Fn&& fn);

namespace serial {
Mat outer_sum(const Mat& rows, std::span<const double> weights = {});
Mat cross_sum(const Mat& xs, const Mat& ys);
Mat matmul(const Mat& a, const Mat& b);
}  // namespace serial

}  // namespace smorm::kernels

#include "smorm/parallel.hpp"

namespace smorm::kernels {

template <class Fn>
Vec map_rows(const Mat& rows, Fn&& fn) {
  Vec out(rows.rows());
  parallel_for(rows.rows(), [&](std::size_t i) { out[i] = fn(rows.row_span(i)); });
  return out;
}

}  // namespace smorm::kernels
