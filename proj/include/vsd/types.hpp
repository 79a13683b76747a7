#pragma once

#include <Eigen/Dense>

#include "vsd/errors.hpp"

namespace vsd {

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatXi = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

/// Planar RGB image, values in [0,1]. Plane (y,x) indexing: rows are y.
template <class S>
struct Image {
  MatX<S> ch[3];

  Image() = default;
  Image(int height, int width) {
    for (auto& c : ch) c = MatX<S>::Zero(height, width);
  }

  int height() const { return static_cast<int>(ch[0].rows()); }
  int width() const { return static_cast<int>(ch[0].cols()); }

  bool same_size(const Image& other) const {
    return height() == other.height() && width() == other.width();
  }
};

/// Per-image encoder output: row 0 is the [CLS] token, rows 1..P are the
/// patch tokens in row-major grid order (grid_h * grid_w == P).
template <class S>
struct TokenGrid {
  MatX<S> tokens;  // (P+1) x d
  int grid_h = 0;
  int grid_w = 0;

  int patch_count() const { return grid_h * grid_w; }
  int dim() const { return static_cast<int>(tokens.cols()); }

  auto cls() const { return tokens.row(0); }
  auto patches() const { return tokens.bottomRows(tokens.rows() - 1); }
};

}  // namespace vsd
