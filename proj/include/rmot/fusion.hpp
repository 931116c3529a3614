// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "rmot/error.hpp"

namespace rmot::fusion {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/**
 * Inputs of the early-fusion block. Rows are tokens: `visual` holds the
 * flattened H*W feature map, `linguistic` the L word features, both already
 * projected to width d. Projections act on the feature axis (x * W).
 */
struct FusionInput {
  Matrix visual;          // (H*W) x d
  Matrix linguistic;      // L x d
  Matrix pos_visual;      // (H*W) x d
  Matrix pos_linguistic;  // L x d
  Matrix w_q, w_k, w_v;   // d x d
  std::optional<RowVector> b_q, b_k, b_v;
};

struct FusionOptions {
  /// Row-softmax over the L axis of the similarity matrix. Not part of the
  /// canonical block; experimentation only.
  bool softmax = false;
};

inline void check_dimensions(const FusionInput& in) {
  const auto d = in.visual.cols();
  auto bad = [](const std::string& what) {
    throw Error(ErrorCode::dimension_mismatch, "early_fuse: " + what);
  };
  if (d <= 0) bad("feature width must be positive");
  if (in.linguistic.cols() != d) bad("linguistic width differs from visual width");
  if (in.pos_visual.rows() != in.visual.rows() || in.pos_visual.cols() != d)
    bad("visual position embedding shape");
  if (in.pos_linguistic.rows() != in.linguistic.rows() || in.pos_linguistic.cols() != d)
    bad("linguistic position embedding shape");
  for (const Matrix* w : {&in.w_q, &in.w_k, &in.w_v})
    if (w->rows() != d || w->cols() != d) bad("projection weights must be d x d");
  for (const auto* b : {&in.b_q, &in.b_k, &in.b_v})
    if (*b && b->value().size() != d) bad("bias length must be d");
}

struct Projections {
  Matrix q, k, v;
};

inline Projections project(const FusionInput& in) {
  Projections p;
  p.q = (in.visual + in.pos_visual) * in.w_q;
  p.k = (in.linguistic + in.pos_linguistic) * in.w_k;
  p.v = in.linguistic * in.w_v;
  if (in.b_q) p.q.rowwise() += *in.b_q;
  if (in.b_k) p.k.rowwise() += *in.b_k;
  if (in.b_v) p.v.rowwise() += *in.b_v;
  return p;
}

/// Vision-conditioned language features added onto the visual map:
/// (Q K^T / sqrt(d)) V + I.
inline Matrix early_fuse(const FusionInput& in, const FusionOptions& opt = {}) {
  check_dimensions(in);
  const Projections p = project(in);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in.visual.cols()));
  Matrix sim = (p.q * p.k.transpose()) * scale;
  if (opt.softmax && sim.cols() > 0) {
    for (Eigen::Index r = 0; r < sim.rows(); ++r) {
      const double mx = sim.row(r).maxCoeff();
      sim.row(r) = (sim.row(r).array() - mx).exp();
      sim.row(r) /= sim.row(r).sum();
    }
  }
  return sim * p.v + in.visual;
}

struct WeightGradients {
  Matrix w_q, w_k, w_v;
};

/// Gradients of <upstream, early_fuse(in)> with respect to the three
/// projection weights, canonical (no softmax) path.
inline WeightGradients early_fuse_weight_grad(const FusionInput& in, const Matrix& upstream) {
  check_dimensions(in);
  if (upstream.rows() != in.visual.rows() || upstream.cols() != in.visual.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "upstream gradient shape");
  }
  const Projections p = project(in);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in.visual.cols()));
  const Matrix d_q = upstream * p.v.transpose() * p.k * scale;
  const Matrix d_k = p.v * upstream.transpose() * p.q * scale;
  const Matrix d_v = (p.q * p.k.transpose()).transpose() * upstream * scale;
  WeightGradients g;
  g.w_q = (in.visual + in.pos_visual).transpose() * d_q;
  g.w_k = (in.linguistic + in.pos_linguistic).transpose() * d_k;
  g.w_v = in.linguistic.transpose() * d_v;
  return g;
}

namespace detail {

// Channel c of a 1-D sinusoidal code: sin for even c, cos for odd c, with
// frequency 1 / 10000^(2*floor(c/2)/dim).
inline void sinusoid_row(double position, Eigen::Index dim, double* out) {
  for (Eigen::Index c = 0; c < dim; ++c) {
    const double freq =
        std::pow(10000.0, -2.0 * static_cast<double>(c / 2) / static_cast<double>(dim));
    out[c] = (c % 2 == 0) ? std::sin(position * freq) : std::cos(position * freq);
  }
}

inline void require_even(Eigen::Index d) {
  if (d <= 0 || d % 2 != 0) {
    throw Error(ErrorCode::invalid_argument,
                "sinusoidal embedding width must be positive and even, got " +
                    std::to_string(d));
  }
}

}  // namespace detail

/// Sequence position code, one row per position.
inline Matrix sinusoidal_pos(Eigen::Index length, Eigen::Index d) {
  detail::require_even(d);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(length, d);
  for (Eigen::Index i = 0; i < length; ++i)
    detail::sinusoid_row(static_cast<double>(i), d, rows.row(i).data());
  return rows;
}

/// 2-D code for a flattened H x W map (row-major): the first d/2 channels
/// encode the row, the last d/2 the column.
inline Matrix sinusoidal_pos(Eigen::Index height, Eigen::Index width, Eigen::Index d) {
  detail::require_even(d);
  const Eigen::Index half = d / 2;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(height * width, d);
  for (Eigen::Index y = 0; y < height; ++y) {
    for (Eigen::Index x = 0; x < width; ++x) {
      double* r = rows.row(y * width + x).data();
      detail::sinusoid_row(static_cast<double>(y), half, r);
      detail::sinusoid_row(static_cast<double>(x), half, r + half);
    }
  }
  return rows;
}

/// Central finite differences of a scalar function, one entry at a time.
inline Matrix numeric_grad(const std::function<double(const Matrix&)>& f, const Matrix& x,
                           double step = 1e-5) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double orig = probe(r, c);
      probe(r, c) = orig + step;
      const double up = f(probe);
      probe(r, c) = orig - step;
      const double down = f(probe);
      probe(r, c) = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw Error(ErrorCode::invalid_argument, "numeric_grad: function is not finite");
      }
      g(r, c) = (up - down) / (2.0 * step);
    }
  }
  return g;
}

}  // namespace rmot::fusion
