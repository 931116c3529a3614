// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "rmot/assignment.hpp"
#include "rmot/error.hpp"
#include "rmot/geometry.hpp"

namespace rmot {

struct LossWeights {
  double cls = 5.0;
  double l1 = 2.0;
  double giou = 2.0;
  double ref = 2.0;
};

/// Classification term inside the detect matching cost.
enum class ClassCost {
  focal,        // focal loss of c against the positive class
  probability,  // 1 - c
};

struct LossConfig {
  LossWeights weights;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double eps = 1e-7;
  ClassCost class_cost = ClassCost::focal;
  /// Divide each frame's track loss by max(1, #present GTs) and detect loss by
  /// max(1, #newborn GTs). Off gives the bare sums.
  bool normalize = true;
};

struct TrackPrediction {
  double class_prob = 0.0;
  NormBox box{0.5, 0.5, 1.0, 1.0};
  double ref_prob = 0.0;
};

struct GroundTruthObject {
  bool present = false;
  std::optional<NormBox> box;  // set iff present
  bool referent = false;

  static GroundTruthObject absent() { return {}; }
  static GroundTruthObject visible(NormBox b, bool referent) {
    return {true, b, referent};
  }
};

// ---------------------------------------------------------------------------
// Focal loss

inline double focal_loss(double p, bool target, double alpha = 0.25, double gamma = 2.0,
                         double eps = 1e-7) {
  p = std::clamp(p, eps, 1.0 - eps);
  if (target) return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
  return -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
}

/// d focal_loss / dp (zero where the clamp is active).
inline double focal_loss_grad(double p, bool target, double alpha = 0.25,
                              double gamma = 2.0, double eps = 1e-7) {
  if (p < eps || p > 1.0 - eps) return 0.0;
  if (target) {
    const double q = 1.0 - p;
    return alpha * (gamma * std::pow(q, gamma - 1.0) * std::log(p) - std::pow(q, gamma) / p);
  }
  return -(1.0 - alpha) *
         (gamma * std::pow(p, gamma - 1.0) * std::log(1.0 - p) - std::pow(p, gamma) / (1.0 - p));
}

// ---------------------------------------------------------------------------
// Box loss: L1 on (cx, cy, w, h) plus 1 - GIoU on corners.

inline double box_loss(const NormBox& b, const NormBox& target, const LossWeights& w = {}) {
  const double l1 = std::abs(b.cx() - target.cx()) + std::abs(b.cy() - target.cy()) +
                    std::abs(b.w() - target.w()) + std::abs(b.h() - target.h());
  return w.l1 * l1 + w.giou * (1.0 - giou(b.corners(), target.corners()));
}

/// Gradient of box_loss with respect to the predicted (cx, cy, w, h).
inline std::array<double, 4> box_loss_grad(const NormBox& b, const NormBox& target,
                                           const LossWeights& w = {}) {
  auto sgn = [](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); };
  std::array<double, 4> g{w.l1 * sgn(b.cx() - target.cx()), w.l1 * sgn(b.cy() - target.cy()),
                          w.l1 * sgn(b.w() - target.w()), w.l1 * sgn(b.h() - target.h())};

  const Box p = b.corners(), t = target.corners();
  // Per-axis pieces; index 0 = x, 1 = y. d*_lo / d*_hi are derivatives with
  // respect to the predicted low/high edge on that axis.
  struct Axis {
    double inter, d_inter_lo, d_inter_hi;
    double hull, d_hull_lo, d_hull_hi;
    double side;
  };
  auto axis = [](double lo, double hi, double tlo, double thi) {
    Axis a{};
    a.inter = std::min(hi, thi) - std::max(lo, tlo);
    if (a.inter > 0) {
      a.d_inter_lo = lo > tlo ? -1.0 : 0.0;
      a.d_inter_hi = hi < thi ? 1.0 : 0.0;
    } else {
      a.inter = 0;
    }
    a.hull = std::max(hi, thi) - std::min(lo, tlo);
    a.d_hull_lo = lo < tlo ? -1.0 : 0.0;
    a.d_hull_hi = hi > thi ? 1.0 : 0.0;
    a.side = hi - lo;
    return a;
  };
  const Axis ax = axis(p.x1(), p.x2(), t.x1(), t.x2());
  const Axis ay = axis(p.y1(), p.y2(), t.y1(), t.y2());

  const double inter = ax.inter * ay.inter;
  const double area = ax.side * ay.side;
  const double uni = area + t.area() - inter;
  const double hull = ax.hull * ay.hull;

  // Edge order: x1, y1, x2, y2.
  const std::array<double, 4> d_inter{ax.d_inter_lo * ay.inter, ay.d_inter_lo * ax.inter,
                                      ax.d_inter_hi * ay.inter, ay.d_inter_hi * ax.inter};
  const std::array<double, 4> d_area{-ay.side, -ax.side, ay.side, ax.side};
  const std::array<double, 4> d_hull{ax.d_hull_lo * ay.hull, ay.d_hull_lo * ax.hull,
                                     ax.d_hull_hi * ay.hull, ay.d_hull_hi * ax.hull};
  // giou = I/U - 1 + U/C
  std::array<double, 4> d_giou{};
  for (int e = 0; e < 4; ++e) {
    const double d_uni = d_area[e] - d_inter[e];
    d_giou[e] = d_inter[e] / uni - inter * d_uni / (uni * uni) + d_uni / hull -
                uni * d_hull[e] / (hull * hull);
  }
  // x1 = cx - w/2, x2 = cx + w/2 (same for y).
  g[0] -= w.giou * (d_giou[0] + d_giou[2]);
  g[1] -= w.giou * (d_giou[1] + d_giou[3]);
  g[2] -= w.giou * 0.5 * (d_giou[2] - d_giou[0]);
  g[3] -= w.giou * 0.5 * (d_giou[3] - d_giou[1]);
  return g;
}

// ---------------------------------------------------------------------------
// Track / detect losses

/// Loss over identity-aligned tracking predictions: classification against
/// visibility for every slot, box and referring terms for visible targets.
inline double track_loss(const std::vector<TrackPrediction>& preds,
                         const std::vector<GroundTruthObject>& gts,
                         const LossConfig& cfg = {}) {
  if (preds.size() != gts.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "track_loss: " + std::to_string(preds.size()) + " predictions vs " +
                    std::to_string(gts.size()) + " ground truths");
  }
  const auto& w = cfg.weights;
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    const auto& g = gts[i];
    total += w.cls * focal_loss(p.class_prob, g.present, cfg.focal_alpha, cfg.focal_gamma, cfg.eps);
    if (g.present) {
      ++present;
      total += box_loss(p.box, *g.box, w);
      total += w.ref * focal_loss(p.ref_prob, g.referent, cfg.focal_alpha, cfg.focal_gamma, cfg.eps);
    }
  }
  if (cfg.normalize) total /= static_cast<double>(std::max<std::size_t>(1, present));
  return total;
}

inline double match_cost(const TrackPrediction& pred, const GroundTruthObject& gt,
                         const LossConfig& cfg = {}) {
  if (!gt.present || !gt.box) {
    throw Error(ErrorCode::invalid_argument, "match_cost needs a present ground truth");
  }
  const double cls = cfg.class_cost == ClassCost::focal
                         ? focal_loss(pred.class_prob, true, cfg.focal_alpha,
                                      cfg.focal_gamma, cfg.eps)
                         : 1.0 - pred.class_prob;
  return box_loss(pred.box, *gt.box, cfg.weights) + cfg.weights.cls * cls;
}

struct DetectLossResult {
  double loss = 0.0;
  Assignment assignment;  // (prediction index, newborn index)
};

/// Bipartite-matches detection slots to newborn objects by minimum matching
/// cost, then scores every slot: matched slots against their target, the rest
/// against the empty class.
inline DetectLossResult detect_loss(const std::vector<TrackPrediction>& preds,
                                    const std::vector<GroundTruthObject>& newborn,
                                    const LossConfig& cfg = {}) {
  if (newborn.size() > preds.size()) {
    throw Error(ErrorCode::invalid_argument,
                "detect_loss: more newborn objects than detection slots");
  }
  CostMatrix cost(preds.size(), newborn.size());
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (std::size_t j = 0; j < newborn.size(); ++j)
      cost(i, j) = match_cost(preds[i], newborn[j], cfg);

  DetectLossResult out;
  out.assignment = solve_min_cost(cost);
  std::vector<std::optional<std::size_t>> target(preds.size());
  for (const auto& [i, j] : out.assignment.pairs) target[i] = j;

  const auto& w = cfg.weights;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    out.loss += w.cls * focal_loss(p.class_prob, target[i].has_value(), cfg.focal_alpha,
                                   cfg.focal_gamma, cfg.eps);
    if (target[i]) {
      const auto& g = newborn[*target[i]];
      out.loss += box_loss(p.box, *g.box, w);
      out.loss += w.ref * focal_loss(p.ref_prob, g.referent, cfg.focal_alpha,
                                     cfg.focal_gamma, cfg.eps);
    }
  }
  if (cfg.normalize) out.loss /= static_cast<double>(std::max<std::size_t>(1, newborn.size()));
  return out;
}

enum class FrameReduction { sum, mean };

struct FrameLoss {
  double track = 0.0;
  double detect = 0.0;
};

inline double final_loss(const std::vector<FrameLoss>& per_frame,
                         FrameReduction reduction = FrameReduction::sum) {
  if (per_frame.empty()) throw Error(ErrorCode::invalid_argument, "final_loss: no frames");
  double total = 0.0;
  for (const auto& f : per_frame) total += f.track + f.detect;
  if (reduction == FrameReduction::mean) total /= static_cast<double>(per_frame.size());
  return total;
}

}  // namespace rmot
