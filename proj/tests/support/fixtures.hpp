// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rmot/annotator.hpp"
#include "rmot/data_model.hpp"
#include "rmot/geometry.hpp"
#include "rmot/hota.hpp"

namespace fixture {

inline std::filesystem::path data_dir() { return RMOT_TEST_DATA; }

struct SynthOptions {
  int frames = 20;
  int objects = 4;
  int expressions = 2;
  int frame_w = 640;
  int frame_h = 360;
  /// When true an object may vanish for a few frames and come back.
  bool visibility_gaps = false;
};

/**
 * Random sequence: every object is visible on one contiguous span (plus
 * optional gaps), drifts by a small random walk and stays inside the frame.
 * Each expression gets one or two referent intervals on random objects.
 */
inline rmot::SequenceAnnotation synth_sequence(std::uint64_t seed, const SynthOptions& o = {},
                                               std::string id = "") {
  std::mt19937_64 rng(seed);
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto pick = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };

  rmot::SequenceAnnotation ann;
  ann.sequence_id = id.empty() ? "synth" + std::to_string(seed) : id;
  ann.frame_count = o.frames;
  ann.frame_w = o.frame_w;
  ann.frame_h = o.frame_h;
  for (int k = 0; k < o.objects; ++k) {
    rmot::TrackedObject obj;
    obj.id = 1 + 2 * k;  // sparse ids
    obj.category = k % 2 == 0 ? "car" : "pedestrian";
    const int first = pick(0, o.frames / 3);
    const int last = pick(std::min(o.frames - 1, first + o.frames / 3), o.frames - 1);
    double w = uni(30, 120), h = uni(30, 120);
    double x = uni(0, o.frame_w - w), y = uni(0, o.frame_h - h);
    int gap_start = -1, gap_len = 0;
    if (o.visibility_gaps && last - first > 6 && pick(0, 1) == 1) {
      gap_start = pick(first + 2, last - 3);
      gap_len = pick(1, 2);
    }
    for (int f = first; f <= last; ++f) {
      x = std::clamp(x + uni(-6, 6), 0.0, o.frame_w - w);
      y = std::clamp(y + uni(-4, 4), 0.0, o.frame_h - h);
      if (gap_start >= 0 && f >= gap_start && f < gap_start + gap_len) continue;
      // Hundredths of a pixel survive the six-digit prediction CSV exactly.
      auto q = [](double v) { return std::round(v * 100.0) / 100.0; };
      obj.boxes.emplace(f, rmot::Box(q(x), q(y), q(x + w), q(y + h)));
    }
    ann.objects.push_back(std::move(obj));
  }
  for (int e = 0; e < o.expressions; ++e) {
    ann = rmot::create_expression(ann, "expression " + std::to_string(e)).first;
    const int n_clicks = pick(1, 2);
    for (int c = 0; c < n_clicks; ++c) {
      const auto& obj = ann.objects[static_cast<std::size_t>(pick(0, o.objects - 1))];
      std::vector<int> frames;
      for (const auto& [f, b] : obj.boxes) frames.push_back(f);
      int a = frames[static_cast<std::size_t>(pick(0, static_cast<int>(frames.size()) - 1))];
      int b = frames[static_cast<std::size_t>(pick(0, static_cast<int>(frames.size()) - 1))];
      if (a > b) std::swap(a, b);
      ann = rmot::propagate(ann, {e, obj.id, a, b});
    }
  }
  rmot::validate(ann);
  return ann;
}

/// Perfect predictions for one expression: every referent box, with the
/// object id shifted into a separate id space.
inline rmot::PredictionSet perfect_predictions(const rmot::SequenceAnnotation& ann, int eid,
                                               int id_offset = 1000) {
  rmot::PredictionSet ps{ann.sequence_id, eid, {}};
  for (const auto& [frame, ids] : rmot::referent_frames(ann, eid))
    for (int id : ids)
      ps.rows.push_back({frame, id + id_offset, ann.find_object(id)->boxes.at(frame), 1.0, 1.0});
  return ps;
}

inline rmot::Box random_box(std::mt19937_64& rng, double w = 100, double h = 100) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double bw = 5 + u(rng) * 40, bh = 5 + u(rng) * 40;
  const double x = u(rng) * (w - bw), y = u(rng) * (h - bh);
  return rmot::Box(x, y, x + bw, y + bh);
}

/// Micro-instance for exhaustive HOTA checks: at most 3 frames and 4 ids per
/// side. Predictions are noisy copies of ground truth, random boxes, or
/// ground truth under a swapped id.
inline std::pair<rmot::FrameTracks, rmot::FrameTracks> micro_instance(std::mt19937_64& rng) {
  auto pick = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };
  std::normal_distribution<double> noise(0.0, 2.5);
  const int frames = pick(1, 3), n_gt = pick(0, 4), n_pr = pick(0, 4);
  rmot::FrameTracks gt(static_cast<std::size_t>(frames)), pr(static_cast<std::size_t>(frames));
  std::vector<rmot::Box> anchor;
  for (int g = 0; g < n_gt; ++g) anchor.push_back(random_box(rng));
  for (int f = 0; f < frames; ++f) {
    std::vector<rmot::Box> here;
    for (int g = 0; g < n_gt; ++g) {
      here.push_back(anchor[static_cast<std::size_t>(g)].translated(pick(-3, 3), pick(-3, 3)));
      if (pick(0, 4) > 0) gt[static_cast<std::size_t>(f)].emplace_back(g, here.back());
    }
    for (int p = 0; p < n_pr; ++p) {
      if (pick(0, 4) == 0) continue;
      rmot::Box b = random_box(rng);
      if (!here.empty() && pick(0, 3) > 0) {
        const rmot::Box& src = here[static_cast<std::size_t>(pick(0, n_gt - 1))];
        const double x1 = src.x1() + noise(rng), y1 = src.y1() + noise(rng);
        b = rmot::Box(x1, y1, std::max(x1 + 1, src.x2() + noise(rng)),
                      std::max(y1 + 1, src.y2() + noise(rng)));
      }
      pr[static_cast<std::size_t>(f)].emplace_back(100 + p, b);
    }
  }
  return {gt, pr};
}

}  // namespace fixture
