// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "rmot/error.hpp"

namespace rmot {

/**
 * Axis-aligned box in pixel coordinates, origin top-left.
 * Edges are continuous reals; x1 < x2 and y1 < y2 always hold.
 */
class Box {
 public:
  Box(double x1, double y1, double x2, double y2)
      : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
    if (!(std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
          std::isfinite(y2)) ||
        !(x1 < x2) || !(y1 < y2)) {
      std::ostringstream os;
      os << "degenerate box [" << x1 << ", " << y1 << ", " << x2 << ", " << y2
         << "]";
      throw Error(ErrorCode::validation, os.str());
    }
  }

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }
  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1_ + x2_); }
  double cy() const { return 0.5 * (y1_ + y2_); }

  Box translated(double dx, double dy) const {
    return {x1_ + dx, y1_ + dy, x2_ + dx, y2_ + dy};
  }
  Box scaled(double s) const { return {x1_ * s, y1_ * s, x2_ * s, y2_ * s}; }

  friend bool operator==(const Box&, const Box&) = default;

 private:
  double x1_, y1_, x2_, y2_;
};

/// Center/size box relative to the frame, every field in [0, 1].
class NormBox {
 public:
  NormBox(double cx, double cy, double w, double h)
      : cx_(cx), cy_(cy), w_(w), h_(h) {
    auto unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
    if (!unit(cx) || !unit(cy) || !unit(w) || !unit(h) || !(w > 0.0) ||
        !(h > 0.0)) {
      std::ostringstream os;
      os << "normalized box out of range (" << cx << ", " << cy << ", " << w
         << ", " << h << ")";
      throw Error(ErrorCode::out_of_range, os.str());
    }
  }

  double cx() const { return cx_; }
  double cy() const { return cy_; }
  double w() const { return w_; }
  double h() const { return h_; }

  /// Corner form in normalized units (may extend past [0, 1]).
  Box corners() const {
    return {cx_ - 0.5 * w_, cy_ - 0.5 * h_, cx_ + 0.5 * w_, cy_ + 0.5 * h_};
  }

  friend bool operator==(const NormBox&, const NormBox&) = default;

 private:
  double cx_, cy_, w_, h_;
};

inline double intersection_area(const Box& a, const Box& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

inline double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Generalized IoU: IoU minus the share of the enclosing box not covered by
/// the union. Range (-1, 1].
inline double giou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double hull = (std::max(a.x2(), b.x2()) - std::min(a.x1(), b.x1())) *
                      (std::max(a.y2(), b.y2()) - std::min(a.y1(), b.y1()));
  return inter / uni - (hull - uni) / hull;
}

inline NormBox to_norm(const Box& b, double frame_w, double frame_h) {
  if (!(frame_w > 0.0) || !(frame_h > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "frame size must be positive");
  }
  if (b.x1() < 0.0 || b.y1() < 0.0 || b.x2() > frame_w || b.y2() > frame_h) {
    std::ostringstream os;
    os << "box [" << b.x1() << ", " << b.y1() << ", " << b.x2() << ", "
       << b.y2() << "] outside " << frame_w << "x" << frame_h << " frame";
    throw Error(ErrorCode::out_of_range, os.str());
  }
  return {b.cx() / frame_w, b.cy() / frame_h, b.width() / frame_w,
          b.height() / frame_h};
}

inline Box from_norm(const NormBox& n, double frame_w, double frame_h) {
  if (!(frame_w > 0.0) || !(frame_h > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "frame size must be positive");
  }
  const double hw = 0.5 * n.w() * frame_w;
  const double hh = 0.5 * n.h() * frame_h;
  const double cx = n.cx() * frame_w;
  const double cy = n.cy() * frame_h;
  return {cx - hw, cy - hh, cx + hw, cy + hh};
}

}  // namespace rmot
