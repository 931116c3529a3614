// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rmot/assignment.hpp"
#include "rmot/data_model.hpp"
#include "rmot/error.hpp"
#include "rmot/geometry.hpp"

namespace rmot {

struct TrackerConfig {
  double class_threshold = 0.7;
  double ref_threshold = 0.4;
  std::size_t detect_slots = 300;
  /// Frames a track may stay below the class threshold before it is removed.
  int patience = 0;

  void validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(class_threshold) || !unit(ref_threshold)) {
      throw Error(ErrorCode::invalid_argument, "thresholds must lie in [0, 1]");
    }
    if (detect_slots < 1) throw Error(ErrorCode::invalid_argument, "need at least one detect slot");
    if (patience < 0) throw Error(ErrorCode::invalid_argument, "patience must be >= 0");
  }
};

enum class SlotKind { detect, track };

/// A decoder query slot. `tag` is an opaque handle the scorer attaches to a
/// slot and gets back on the same identity in later frames; it stands in for
/// the decoder embedding carried between frames.
struct QuerySlot {
  SlotKind kind = SlotKind::detect;
  std::optional<int> identity;
  double class_score = 0.0;
  double ref_score = 0.0;
  Box box{0, 0, 1, 1};
  std::int64_t tag = -1;
  int misses = 0;
};

struct SlotScore {
  double class_score = 0.0;
  double ref_score = 0.0;
  Box box{0, 0, 1, 1};
  std::int64_t tag = -1;
};

/// Scores for one frame: `track` aligned with the live tracks, `detect` one
/// entry per detect slot.
struct FrameScores {
  std::vector<SlotScore> track;
  std::vector<SlotScore> detect;
};

struct TrackerState {
  int frame_index = 0;
  std::vector<QuerySlot> live_tracks;
  int next_id = 0;
  TrackerConfig config;

  static TrackerState initial(TrackerConfig cfg = {}) {
    cfg.validate();
    TrackerState s;
    s.config = cfg;
    return s;
  }
};

struct OutputRow {
  int frame = 0;
  int track_id = 0;
  Box box{0, 0, 1, 1};
  double class_score = 0.0;
  double ref_score = 0.0;
  bool referent = false;
  std::int64_t tag = -1;
};

struct StepResult {
  TrackerState state;
  std::vector<OutputRow> rows;
};

/**
 * Advances the query bookkeeping by one frame.
 *
 * Track slots at or above the class threshold keep their identity; detect
 * slots at or above it open fresh identities. Survivors (track slots first,
 * then newborns in slot order) become the next frame's track queries.
 */
inline StepResult step(const TrackerState& state, const FrameScores& scores) {
  const auto& cfg = state.config;
  if (scores.track.size() != state.live_tracks.size() ||
      scores.detect.size() != cfg.detect_slots) {
    throw Error(ErrorCode::dimension_mismatch,
                "frame " + std::to_string(state.frame_index) + ": expected " +
                    std::to_string(state.live_tracks.size()) + " track + " +
                    std::to_string(cfg.detect_slots) + " detect scores, got " +
                    std::to_string(scores.track.size()) + " + " +
                    std::to_string(scores.detect.size()));
  }

  StepResult out;
  TrackerState& next = out.state;
  next.config = cfg;
  next.frame_index = state.frame_index + 1;
  next.next_id = state.next_id;

  auto emit = [&](const QuerySlot& slot) {
    out.rows.push_back({state.frame_index, *slot.identity, slot.box, slot.class_score,
                        slot.ref_score, slot.ref_score >= cfg.ref_threshold, slot.tag});
  };

  for (std::size_t i = 0; i < state.live_tracks.size(); ++i) {
    QuerySlot slot = state.live_tracks[i];
    const SlotScore& s = scores.track[i];
    if (s.tag >= 0) slot.tag = s.tag;
    if (s.class_score >= cfg.class_threshold) {
      slot.class_score = s.class_score;
      slot.ref_score = s.ref_score;
      slot.box = s.box;
      slot.misses = 0;
      emit(slot);
      next.live_tracks.push_back(slot);
    } else if (++slot.misses <= cfg.patience) {
      slot.class_score = s.class_score;
      slot.ref_score = s.ref_score;
      next.live_tracks.push_back(slot);
    }
  }
  for (const SlotScore& s : scores.detect) {
    if (s.class_score < cfg.class_threshold) continue;
    QuerySlot slot{SlotKind::track, next.next_id++, s.class_score, s.ref_score, s.box, s.tag, 0};
    emit(slot);
    next.live_tracks.push_back(slot);
  }
  return out;
}

using Scorer = std::function<FrameScores(const TrackerState&, int frame)>;

/// Streams `step` over frames [0, frame_count) and keeps the referent rows.
inline PredictionSet run(int frame_count, const Scorer& scorer, const TrackerConfig& cfg,
                         std::string sequence_id = {}, int expression_id = 0) {
  PredictionSet ps;
  ps.sequence_id = std::move(sequence_id);
  ps.expression_id = expression_id;
  TrackerState state = TrackerState::initial(cfg);
  for (int f = 0; f < frame_count; ++f) {
    FrameScores scores;
    try {
      scores = scorer(state, f);
    } catch (const Error& e) {
      throw Error(e.code(), "scorer failed at frame " + std::to_string(f) + ": " + e.what(),
                  "frame " + std::to_string(f));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::invalid_argument,
                  "scorer failed at frame " + std::to_string(f) + ": " + e.what(),
                  "frame " + std::to_string(f));
    }
    StepResult r = step(state, scores);
    for (const auto& row : r.rows) {
      if (row.referent) {
        ps.rows.push_back({row.frame, row.track_id, row.box, row.class_score, row.ref_score});
      }
    }
    state = std::move(r.state);
  }
  return ps;
}

inline PredictionSet run(const SequenceAnnotation& ann, int expression_id, const Scorer& scorer,
                         const TrackerConfig& cfg = {}) {
  ann.expression(expression_id);
  return run(ann.frame_count, scorer, cfg, ann.sequence_id, expression_id);
}

// ---------------------------------------------------------------------------
// Oracle scorer

struct OracleOptions {
  double jitter_sigma = 0.0;  // pixels, applied to every box edge
  double flip_ref_prob = 0.0;
  std::uint64_t seed = 0;
};

/**
 * Test double for the decoder: reports each visible ground-truth object with
 * c = 1 and r = 1 exactly on its referent frames. Objects not yet tracked are
 * offered on detect slots in ascending object id order; the object id is the
 * slot tag.
 */
inline Scorer oracle_scorer(const SequenceAnnotation& ann, int expression_id,
                            OracleOptions opt = {}) {
  struct Shared {
    SequenceAnnotation ann;
    ReferentMap referents;
    OracleOptions opt;
    std::mt19937_64 rng;
  };
  auto sh = std::make_shared<Shared>();
  sh->referents = referent_frames(ann, expression_id);
  sh->ann = ann;
  sh->opt = opt;
  sh->rng.seed(opt.seed);

  return [sh](const TrackerState& state, int frame) {
    auto& rng = sh->rng;
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto ref_it = sh->referents.find(frame);

    auto observe = [&](const TrackedObject& obj) {
      SlotScore s;
      s.class_score = 1.0;
      s.tag = obj.id;
      bool ref = ref_it != sh->referents.end() && ref_it->second.count(obj.id);
      if (sh->opt.flip_ref_prob > 0.0 && unit(rng) < sh->opt.flip_ref_prob) ref = !ref;
      s.ref_score = ref ? 1.0 : 0.0;
      const Box& gt = obj.boxes.at(frame);
      if (sh->opt.jitter_sigma > 0.0) {
        const double sg = sh->opt.jitter_sigma;
        double x1 = gt.x1() + sg * noise(rng), y1 = gt.y1() + sg * noise(rng);
        double x2 = gt.x2() + sg * noise(rng), y2 = gt.y2() + sg * noise(rng);
        if (x2 <= x1) x2 = x1 + 1.0;
        if (y2 <= y1) y2 = y1 + 1.0;
        s.box = Box(x1, y1, x2, y2);
      } else {
        s.box = gt;
      }
      return s;
    };

    FrameScores fs;
    std::set<std::int64_t> tracked;
    for (const auto& slot : state.live_tracks) {
      tracked.insert(slot.tag);
      const TrackedObject* obj = sh->ann.find_object(static_cast<int>(slot.tag));
      if (obj && obj->visible_at(frame)) {
        fs.track.push_back(observe(*obj));
      } else {
        fs.track.push_back({0.0, 0.0, slot.box, slot.tag});
      }
    }
    std::vector<const TrackedObject*> newborn;
    for (const auto& obj : sh->ann.objects) {
      if (obj.visible_at(frame) && !tracked.count(obj.id)) newborn.push_back(&obj);
    }
    std::sort(newborn.begin(), newborn.end(),
              [](const TrackedObject* a, const TrackedObject* b) { return a->id < b->id; });
    const std::size_t slots = state.config.detect_slots;
    if (newborn.size() > slots) {
      throw Error(ErrorCode::invalid_argument,
                  std::to_string(newborn.size()) + " new objects exceed " +
                      std::to_string(slots) + " detect slots");
    }
    for (const auto* obj : newborn) fs.detect.push_back(observe(*obj));
    fs.detect.resize(slots);
    return fs;
  };
}

// ---------------------------------------------------------------------------
// IoU association baseline

struct Detection {
  Box box{0, 0, 1, 1};
  double class_score = 1.0;
  double ref_score = 1.0;
};

struct AssociatorConfig {
  double iou_threshold = 0.3;
  int patience = 0;
  double class_threshold = 0.7;
  double ref_threshold = 0.4;
};

/// Per-frame detections of every visible object in the annotation, scored
/// c = 1 and r = 1 on referent frames.
inline std::vector<std::vector<Detection>> detections_from_annotation(
    const SequenceAnnotation& ann, int expression_id) {
  const ReferentMap rf = referent_frames(ann, expression_id);
  std::vector<std::vector<Detection>> frames(static_cast<std::size_t>(ann.frame_count));
  for (const auto& obj : ann.objects) {
    for (const auto& [f, box] : obj.boxes) {
      const auto it = rf.find(f);
      const bool ref = it != rf.end() && it->second.count(obj.id);
      frames[static_cast<std::size_t>(f)].push_back({box, 1.0, ref ? 1.0 : 0.0});
    }
  }
  return frames;
}

/**
 * SORT-style association without a motion model: detections are matched to
 * the previous boxes of live tracks by maximum-IoU assignment; pairs under
 * the IoU threshold are rejected. Unmatched detections open new ids and
 * unmatched tracks are dropped after `patience` missed frames.
 */
inline PredictionSet iou_associator(const std::vector<std::vector<Detection>>& frames,
                                    const AssociatorConfig& cfg = {},
                                    std::string sequence_id = {}, int expression_id = 0) {
  struct Track {
    int id;
    Box box;
    int misses;
  };
  PredictionSet ps;
  ps.sequence_id = std::move(sequence_id);
  ps.expression_id = expression_id;
  std::vector<Track> tracks;
  int next_id = 0;

  for (std::size_t f = 0; f < frames.size(); ++f) {
    std::vector<const Detection*> dets;
    for (const auto& d : frames[f])
      if (d.class_score >= cfg.class_threshold) dets.push_back(&d);

    CostMatrix score(tracks.size(), dets.size());
    for (std::size_t t = 0; t < tracks.size(); ++t)
      for (std::size_t d = 0; d < dets.size(); ++d) score(t, d) = iou(tracks[t].box, dets[d]->box);
    const Assignment a = solve_max_score(score);

    std::vector<std::optional<int>> det_id(dets.size());
    std::vector<char> track_hit(tracks.size(), 0);
    for (const auto& [t, d] : a.pairs) {
      if (score(t, d) < cfg.iou_threshold) continue;
      track_hit[t] = 1;
      det_id[d] = tracks[t].id;
      tracks[t].box = dets[d]->box;
      tracks[t].misses = 0;
    }
    std::vector<Track> kept;
    for (std::size_t t = 0; t < tracks.size(); ++t) {
      if (track_hit[t] || ++tracks[t].misses <= cfg.patience) kept.push_back(tracks[t]);
    }
    tracks = std::move(kept);
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (!det_id[d]) {
        det_id[d] = next_id++;
        tracks.push_back({*det_id[d], dets[d]->box, 0});
      }
      if (dets[d]->ref_score >= cfg.ref_threshold) {
        ps.rows.push_back({static_cast<int>(f), *det_id[d], dets[d]->box, dets[d]->class_score,
                           dets[d]->ref_score});
      }
    }
  }
  return ps;
}

}  // namespace rmot
