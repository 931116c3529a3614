// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rmot/assignment.hpp"
#include "rmot/data_model.hpp"
#include "rmot/error.hpp"
#include "rmot/geometry.hpp"

namespace rmot {

/// The HOTA localization thresholds 0.05, 0.10, ..., 0.95.
inline std::vector<double> default_alphas() {
  std::vector<double> a;
  for (int k = 1; k <= 19; ++k) a.push_back(k / 20.0);
  return a;
}

struct EvalConfig {
  std::vector<double> alphas = default_alphas();
  /// Score of every metric when ground truth and prediction are both empty.
  double zero_zero = 1.0;
  /// When set, prediction rows with ref_score below it are discarded first.
  std::optional<double> ref_threshold;
  /// Weight of IoU next to the association score in per-frame matching.
  double tie_break = 1e-6;

  void validate() const {
    if (alphas.empty()) throw Error(ErrorCode::invalid_argument, "alpha grid is empty");
    for (std::size_t i = 0; i < alphas.size(); ++i) {
      if (!(alphas[i] > 0.0 && alphas[i] < 1.0) || (i > 0 && !(alphas[i] > alphas[i - 1]))) {
        throw Error(ErrorCode::invalid_argument,
                    "alphas must be strictly increasing inside (0, 1)", "alphas");
      }
    }
  }
};

/// Column order follows the usual HOTA results table.
struct Metrics {
  double hota = 0, deta = 0, assa = 0, detre = 0, detpr = 0, assre = 0, asspr = 0, loca = 0;

  static constexpr std::array<const char*, 8> kKeys{"hota",  "deta",  "assa",  "detre",
                                                    "detpr", "assre", "asspr", "loca"};
  static constexpr std::array<const char*, 8> kTitles{"HOTA",  "DetA",  "AssA",  "DetRe",
                                                      "DetPr", "AssRe", "AssPr", "LocA"};
  static constexpr std::array<double Metrics::*, 8> kFields{
      &Metrics::hota,  &Metrics::deta,  &Metrics::assa,  &Metrics::detre,
      &Metrics::detpr, &Metrics::assre, &Metrics::asspr, &Metrics::loca};

  static Metrics filled(double v) { return {v, v, v, v, v, v, v, v}; }

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

struct ExpressionResult {
  std::string sequence_id;
  int expression_id = 0;
  Metrics metrics;                 // mean over alphas
  std::vector<Metrics> per_alpha;  // one entry per alpha
  std::vector<std::size_t> tp, fn, fp;
  std::size_t gt_detections = 0;
  std::size_t pred_detections = 0;
};

struct EvalReport {
  std::vector<double> alphas;
  Metrics metrics;  // mean over expressions
  std::vector<ExpressionResult> per_expression;
};

/// Identity-labelled boxes per frame for one side of the comparison.
using FrameTracks = std::vector<std::vector<std::pair<int, Box>>>;

/**
 * Referring HOTA on already-extracted tracks. Ground truth holds only referent
 * boxes, so any predicted box without a referent partner is a false positive.
 *
 * For each alpha: potential association scores count, per (gt, pred) identity
 * pair, the frames where their IoU reaches alpha; each frame is then matched
 * by maximum (association score + tie_break * IoU) over pairs reaching alpha.
 */
inline ExpressionResult evaluate_tracks(const FrameTracks& gt, const FrameTracks& pred,
                                        const EvalConfig& cfg = {}) {
  cfg.validate();
  if (gt.size() != pred.size()) {
    throw Error(ErrorCode::dimension_mismatch, "gt and prediction frame counts differ");
  }
  const std::size_t n_alpha = cfg.alphas.size();
  ExpressionResult res;
  res.tp.assign(n_alpha, 0);
  res.fn.assign(n_alpha, 0);
  res.fp.assign(n_alpha, 0);

  std::map<int, std::size_t> gt_index, pr_index;
  for (const auto& frame : gt)
    for (const auto& [id, b] : frame) gt_index.emplace(id, gt_index.size());
  for (const auto& frame : pred)
    for (const auto& [id, b] : frame) pr_index.emplace(id, pr_index.size());
  const std::size_t n_gt = gt_index.size(), n_pr = pr_index.size();

  std::vector<double> gt_count(n_gt, 0), pr_count(n_pr, 0);
  for (const auto& frame : gt) {
    res.gt_detections += frame.size();
    for (const auto& [id, b] : frame) gt_count[gt_index[id]] += 1;
  }
  for (const auto& frame : pred) {
    res.pred_detections += frame.size();
    for (const auto& [id, b] : frame) pr_count[pr_index[id]] += 1;
  }

  if (res.gt_detections == 0 && res.pred_detections == 0) {
    res.per_alpha.assign(n_alpha, Metrics::filled(cfg.zero_zero));
    res.metrics = Metrics::filled(cfg.zero_zero);
    return res;
  }

  // IoU tables, one per frame (gt rows, pred cols).
  std::vector<CostMatrix> sim(gt.size());
  for (std::size_t f = 0; f < gt.size(); ++f) {
    sim[f] = CostMatrix(gt[f].size(), pred[f].size());
    for (std::size_t i = 0; i < gt[f].size(); ++i)
      for (std::size_t j = 0; j < pred[f].size(); ++j)
        sim[f](i, j) = iou(gt[f][i].second, pred[f][j].second);
  }

  auto ratio = [](double num, double den) { return den > 0 ? num / den : 0.0; };
  res.per_alpha.resize(n_alpha);
  for (std::size_t a = 0; a < n_alpha; ++a) {
    const double alpha = cfg.alphas[a];
    std::vector<double> potential(n_gt * n_pr, 0.0);
    for (std::size_t f = 0; f < gt.size(); ++f)
      for (std::size_t i = 0; i < gt[f].size(); ++i)
        for (std::size_t j = 0; j < pred[f].size(); ++j)
          if (sim[f](i, j) >= alpha)
            potential[gt_index[gt[f][i].first] * n_pr + pr_index[pred[f][j].first]] += 1;

    std::vector<double> matches(n_gt * n_pr, 0.0);
    double loc_sum = 0.0;
    std::size_t tp = 0;
    for (std::size_t f = 0; f < gt.size(); ++f) {
      const std::size_t ng = gt[f].size(), np = pred[f].size();
      if (ng == 0 || np == 0) continue;
      CostMatrix score(ng, np);
      for (std::size_t i = 0; i < ng; ++i) {
        for (std::size_t j = 0; j < np; ++j) {
          const double s = sim[f](i, j);
          if (s < alpha) continue;
          const std::size_t g = gt_index[gt[f][i].first], p = pr_index[pred[f][j].first];
          const double pot = potential[g * n_pr + p];
          score(i, j) = pot / (gt_count[g] + pr_count[p] - pot) + cfg.tie_break * s;
        }
      }
      for (const auto& [i, j] : solve_max_score(score).pairs) {
        if (sim[f](i, j) < alpha) continue;
        ++tp;
        loc_sum += sim[f](i, j);
        matches[gt_index[gt[f][i].first] * n_pr + pr_index[pred[f][j].first]] += 1;
      }
    }

    Metrics& m = res.per_alpha[a];
    const double tpd = static_cast<double>(tp);
    const double fnd = static_cast<double>(res.gt_detections - tp);
    const double fpd = static_cast<double>(res.pred_detections - tp);
    res.tp[a] = tp;
    res.fn[a] = res.gt_detections - tp;
    res.fp[a] = res.pred_detections - tp;

    double ass_a = 0, ass_re = 0, ass_pr = 0;
    for (std::size_t g = 0; g < n_gt; ++g) {
      for (std::size_t p = 0; p < n_pr; ++p) {
        const double c = matches[g * n_pr + p];
        if (c == 0) continue;
        ass_a += c * c / (gt_count[g] + pr_count[p] - c);
        ass_re += c * c / gt_count[g];
        ass_pr += c * c / pr_count[p];
      }
    }
    m.assa = ratio(ass_a, tpd);
    m.assre = ratio(ass_re, tpd);
    m.asspr = ratio(ass_pr, tpd);
    m.deta = ratio(tpd, tpd + fnd + fpd);
    m.detre = ratio(tpd, tpd + fnd);
    m.detpr = ratio(tpd, tpd + fpd);
    m.loca = tp > 0 ? loc_sum / tpd : 1.0;
    m.hota = std::sqrt(m.deta * m.assa);
  }

  for (const auto field : Metrics::kFields) {
    double sum = 0;
    for (const auto& m : res.per_alpha) sum += m.*field;
    res.metrics.*field = sum / static_cast<double>(n_alpha);
  }
  return res;
}

/// Referent ground truth of one expression as identity-labelled boxes.
inline FrameTracks referent_tracks(const SequenceAnnotation& ann, int expression_id) {
  FrameTracks out(static_cast<std::size_t>(ann.frame_count));
  for (const auto& [frame, ids] : referent_frames(ann, expression_id)) {
    for (int id : ids) {
      out[static_cast<std::size_t>(frame)].emplace_back(id, ann.find_object(id)->boxes.at(frame));
    }
  }
  return out;
}

inline FrameTracks prediction_tracks(const PredictionSet& pred, int frame_count,
                                     std::optional<double> ref_threshold = {}) {
  validate(pred, frame_count);
  FrameTracks out(static_cast<std::size_t>(frame_count));
  for (const auto& r : pred.rows) {
    if (ref_threshold && r.ref_score < *ref_threshold) continue;
    out[static_cast<std::size_t>(r.frame)].emplace_back(r.track_id, r.box);
  }
  return out;
}

inline ExpressionResult evaluate_expression(const SequenceAnnotation& ann,
                                            const PredictionSet& pred,
                                            const EvalConfig& cfg = {}) {
  ann.expression(pred.expression_id);
  if (pred.sequence_id != ann.sequence_id) {
    throw Error(ErrorCode::invalid_argument,
                "prediction for sequence '" + pred.sequence_id +
                    "' evaluated against '" + ann.sequence_id + "'",
                "sequence_id");
  }
  ExpressionResult res =
      evaluate_tracks(referent_tracks(ann, pred.expression_id),
                      prediction_tracks(pred, ann.frame_count, cfg.ref_threshold), cfg);
  res.sequence_id = ann.sequence_id;
  res.expression_id = pred.expression_id;
  return res;
}

/// Arithmetic mean over every (sequence, expression) result.
inline EvalReport aggregate(std::vector<ExpressionResult> results,
                            const std::vector<double>& alphas) {
  if (results.empty()) throw Error(ErrorCode::invalid_argument, "nothing to aggregate");
  EvalReport rep;
  rep.alphas = alphas;
  for (const auto field : Metrics::kFields) {
    double sum = 0;
    for (const auto& r : results) sum += r.metrics.*field;
    rep.metrics.*field = sum / static_cast<double>(results.size());
  }
  rep.per_expression = std::move(results);
  return rep;
}

struct EvalCase {
  const SequenceAnnotation& annotation;
  const PredictionSet& prediction;
};

inline EvalReport evaluate_dataset(const std::vector<EvalCase>& cases, const EvalConfig& cfg = {}) {
  if (cases.empty()) throw Error(ErrorCode::invalid_argument, "evaluate_dataset: no expressions");
  std::vector<ExpressionResult> results;
  results.reserve(cases.size());
  for (const auto& c : cases) results.push_back(evaluate_expression(c.annotation, c.prediction, cfg));
  return aggregate(std::move(results), cfg.alphas);
}

// ---------------------------------------------------------------------------
// Rendering

inline nlohmann::ordered_json metrics_to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  for (std::size_t k = 0; k < Metrics::kKeys.size(); ++k) j[Metrics::kKeys[k]] = m.*Metrics::kFields[k];
  return j;
}

inline Metrics metrics_from_json(const nlohmann::json& j) {
  Metrics m;
  for (std::size_t k = 0; k < Metrics::kKeys.size(); ++k)
    m.*Metrics::kFields[k] = detail::json_field<double>(j, Metrics::kKeys[k], "");
  return m;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& rep) {
  nlohmann::ordered_json j = metrics_to_json(rep.metrics);
  j["alphas"] = rep.alphas;
  auto list = nlohmann::ordered_json::array();
  for (const auto& r : rep.per_expression) {
    nlohmann::ordered_json e;
    e["sequence_id"] = r.sequence_id;
    e["expression_id"] = r.expression_id;
    const auto summary = metrics_to_json(r.metrics);
    for (const auto& [k, v] : summary.items()) e[k] = v;
    auto pa = nlohmann::ordered_json::array();
    for (const auto& m : r.per_alpha) pa.push_back(metrics_to_json(m));
    e["per_alpha"] = std::move(pa);
    e["tp"] = r.tp;
    e["fn"] = r.fn;
    e["fp"] = r.fp;
    e["gt_detections"] = r.gt_detections;
    e["pred_detections"] = r.pred_detections;
    list.push_back(std::move(e));
  }
  j["per_expression"] = std::move(list);
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  using detail::json_field;
  EvalReport rep;
  rep.metrics = metrics_from_json(j);
  rep.alphas = json_field<std::vector<double>>(j, "alphas", "");
  for (const auto& e : detail::json_array(j, "per_expression", "")) {
    ExpressionResult r;
    r.sequence_id = json_field<std::string>(e, "sequence_id", "per_expression");
    r.expression_id = json_field<int>(e, "expression_id", "per_expression");
    r.metrics = metrics_from_json(e);
    for (const auto& m : detail::json_array(e, "per_alpha", "per_expression"))
      r.per_alpha.push_back(metrics_from_json(m));
    r.tp = json_field<std::vector<std::size_t>>(e, "tp", "per_expression");
    r.fn = json_field<std::vector<std::size_t>>(e, "fn", "per_expression");
    r.fp = json_field<std::vector<std::size_t>>(e, "fp", "per_expression");
    r.gt_detections = json_field<std::size_t>(e, "gt_detections", "per_expression");
    r.pred_detections = json_field<std::size_t>(e, "pred_detections", "per_expression");
    rep.per_expression.push_back(std::move(r));
  }
  return rep;
}

enum class ReportFormat { json, table };

/// JSON keeps fractions in [0, 1]; the table shows percentages, 2 decimals.
inline std::string render_report(const EvalReport& rep, ReportFormat format) {
  if (format == ReportFormat::json) return report_to_json(rep).dump(2) + "\n";
  std::string out;
  char cell[32];
  for (const char* title : Metrics::kTitles) {
    std::snprintf(cell, sizeof(cell), "%8s", title);
    out += cell;
  }
  out += '\n';
  for (const auto field : Metrics::kFields) {
    std::snprintf(cell, sizeof(cell), "%8.2f", 100.0 * (rep.metrics.*field));
    out += cell;
  }
  out += '\n';
  return out;
}

}  // namespace rmot
