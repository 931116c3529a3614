// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rmot/error.hpp"
#include "rmot/geometry.hpp"

namespace rmot {

/// One referent interval: the object matches the expression on frames
/// [start, end] (inclusive) wherever it is visible.
struct Referent {
  int object_id = 0;
  int start = 0;
  int end = 0;

  friend bool operator==(const Referent&, const Referent&) = default;
};

struct TrackedObject {
  int id = 0;
  std::string category;
  std::map<int, Box> boxes;  // frame -> box, at most one per frame

  bool visible_at(int frame) const { return boxes.count(frame) != 0; }

  friend bool operator==(const TrackedObject&, const TrackedObject&) = default;
};

struct Expression {
  int id = 0;
  std::string text;
  std::vector<Referent> referents;

  friend bool operator==(const Expression&, const Expression&) = default;
};

struct SequenceAnnotation {
  std::string sequence_id;
  int frame_count = 1;
  int frame_w = 1;
  int frame_h = 1;
  std::vector<TrackedObject> objects;
  std::vector<Expression> expressions;

  const TrackedObject* find_object(int id) const {
    auto it = std::find_if(objects.begin(), objects.end(),
                           [id](const TrackedObject& o) { return o.id == id; });
    return it == objects.end() ? nullptr : &*it;
  }
  const Expression* find_expression(int id) const {
    auto it = std::find_if(expressions.begin(), expressions.end(),
                           [id](const Expression& e) { return e.id == id; });
    return it == expressions.end() ? nullptr : &*it;
  }
  Expression* find_expression(int id) {
    auto it = std::find_if(expressions.begin(), expressions.end(),
                           [id](const Expression& e) { return e.id == id; });
    return it == expressions.end() ? nullptr : &*it;
  }
  const Expression& expression(int id) const {
    if (const auto* e = find_expression(id)) return *e;
    throw Error(ErrorCode::not_found, "unknown expression " + std::to_string(id),
                "expression_id");
  }

  friend bool operator==(const SequenceAnnotation&,
                         const SequenceAnnotation&) = default;
};

struct PredictionRow {
  int frame = 0;
  int track_id = 0;
  Box box{0, 0, 1, 1};
  double class_score = 1.0;
  double ref_score = 1.0;

  friend bool operator==(const PredictionRow&, const PredictionRow&) = default;
};

struct PredictionSet {
  std::string sequence_id;
  int expression_id = 0;
  std::vector<PredictionRow> rows;

  friend bool operator==(const PredictionSet&, const PredictionSet&) = default;
};

// ---------------------------------------------------------------------------
// Validation

inline void validate(const SequenceAnnotation& ann) {
  auto fail = [](const std::string& msg, const std::string& field) {
    throw Error(ErrorCode::validation, msg, field);
  };
  if (ann.frame_count < 1) fail("frame_count must be >= 1", "frame_count");
  if (ann.frame_w <= 0 || ann.frame_h <= 0) fail("frame size must be positive", "frame_w");

  std::set<int> object_ids;
  for (const auto& obj : ann.objects) {
    const std::string where = "object_id " + std::to_string(obj.id);
    if (obj.id < 0) fail("negative object id", where);
    if (!object_ids.insert(obj.id).second) fail("duplicate " + where, where);
    for (const auto& [frame, box] : obj.boxes) {
      if (frame < 0 || frame >= ann.frame_count) {
        fail(where + ": frame " + std::to_string(frame) + " outside sequence", where);
      }
      if (box.x1() < 0 || box.y1() < 0 || box.x2() > ann.frame_w ||
          box.y2() > ann.frame_h) {
        fail(where + ": box at frame " + std::to_string(frame) +
                 " outside frame bounds",
             where);
      }
    }
  }

  std::set<int> expression_ids;
  for (const auto& expr : ann.expressions) {
    const std::string where = "expression_id " + std::to_string(expr.id);
    if (expr.id < 0) fail("negative expression id", where);
    if (!expression_ids.insert(expr.id).second) fail("duplicate " + where, where);
    std::map<int, std::vector<std::pair<int, int>>> per_object;
    for (const auto& ref : expr.referents) {
      if (ref.start > ref.end) fail(where + ": referent start > end", where);
      if (ref.start < 0 || ref.end >= ann.frame_count) {
        fail(where + ": referent interval outside sequence", where);
      }
      if (!object_ids.count(ref.object_id)) {
        fail(where + ": referent object_id " + std::to_string(ref.object_id) +
                 " does not exist",
             where);
      }
      per_object[ref.object_id].emplace_back(ref.start, ref.end);
    }
    for (auto& [oid, spans] : per_object) {
      std::sort(spans.begin(), spans.end());
      for (std::size_t i = 1; i < spans.size(); ++i) {
        if (spans[i].first <= spans[i - 1].second) {
          fail(where + ": overlapping intervals for object_id " + std::to_string(oid),
               where);
        }
      }
    }
  }
}

inline void validate(const PredictionSet& ps, std::optional<int> frame_count = {}) {
  std::set<std::pair<int, int>> keys;
  for (std::size_t i = 0; i < ps.rows.size(); ++i) {
    const auto& r = ps.rows[i];
    const std::string where = "row " + std::to_string(i + 1);
    if (!keys.emplace(r.frame, r.track_id).second) {
      throw Error(ErrorCode::validation,
                  "duplicate (frame, track_id) = (" + std::to_string(r.frame) + ", " +
                      std::to_string(r.track_id) + ")",
                  where);
    }
    if (r.frame < 0 || (frame_count && r.frame >= *frame_count)) {
      throw Error(ErrorCode::validation,
                  "frame " + std::to_string(r.frame) + " outside sequence", where);
    }
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(r.class_score) || !unit(r.ref_score)) {
      throw Error(ErrorCode::validation, "score outside [0, 1]", where);
    }
  }
}

// ---------------------------------------------------------------------------
// Annotation JSON

namespace detail {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

template <typename T>
T json_field(const json& j, const char* key, const std::string& path) {
  const std::string here = path.empty() ? std::string(key) : path + "." + key;
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorCode::parse, "missing field '" + here + "'", here);
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, "bad type for field '" + here + "': " + e.what(),
                here);
  }
}

inline const json& json_array(const json& j, const char* key, const std::string& path) {
  const std::string here = path.empty() ? std::string(key) : path + "." + key;
  if (!j.is_object() || !j.contains(key) || !j.at(key).is_array()) {
    throw Error(ErrorCode::parse, "field '" + here + "' must be an array", here);
  }
  return j.at(key);
}

inline int parse_int(std::string_view s, const std::string& field) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw Error(ErrorCode::parse, "expected integer, got '" + std::string(s) + "'",
                field);
  }
  return v;
}

inline double parse_double(std::string_view s, const std::string& field) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::parse, "expected number, got '" + std::string(s) + "'",
                field);
  }
  return v;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string(), path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string(), path.string());
  out << body;
  out.flush();
  if (!out) throw Error(ErrorCode::io, "short write to " + path.string(), path.string());
}

}  // namespace detail

inline SequenceAnnotation annotation_from_json(const nlohmann::json& j) {
  using detail::json_array;
  using detail::json_field;
  SequenceAnnotation ann;
  ann.sequence_id = json_field<std::string>(j, "sequence_id", "");
  ann.frame_count = json_field<int>(j, "frame_count", "");
  ann.frame_w = json_field<int>(j, "frame_w", "");
  ann.frame_h = json_field<int>(j, "frame_h", "");

  const auto& objects = json_array(j, "objects", "");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const std::string path = "objects[" + std::to_string(i) + "]";
    const auto& jo = objects[i];
    TrackedObject obj;
    obj.id = json_field<int>(jo, "id", path);
    obj.category = json_field<std::string>(jo, "category", path);
    if (!jo.contains("boxes") || !jo.at("boxes").is_object()) {
      throw Error(ErrorCode::parse, "field '" + path + ".boxes' must be an object",
                  path + ".boxes");
    }
    for (const auto& [key, jb] : jo.at("boxes").items()) {
      const std::string bpath = path + ".boxes." + key;
      const int frame = detail::parse_int(key, bpath);
      std::vector<double> c;
      try {
        c = jb.get<std::vector<double>>();
      } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::parse, "box must be [x1,y1,x2,y2]", bpath);
      }
      if (c.size() != 4) throw Error(ErrorCode::parse, "box must have 4 numbers", bpath);
      try {
        obj.boxes.emplace(frame, Box(c[0], c[1], c[2], c[3]));
      } catch (const Error& e) {
        throw Error(ErrorCode::validation,
                    "object_id " + std::to_string(obj.id) + ": " + e.what(), bpath);
      }
    }
    ann.objects.push_back(std::move(obj));
  }

  const auto& expressions = json_array(j, "expressions", "");
  for (std::size_t i = 0; i < expressions.size(); ++i) {
    const std::string path = "expressions[" + std::to_string(i) + "]";
    const auto& je = expressions[i];
    Expression expr;
    expr.id = json_field<int>(je, "id", path);
    expr.text = json_field<std::string>(je, "text", path);
    const auto& refs = json_array(je, "referents", path);
    for (std::size_t k = 0; k < refs.size(); ++k) {
      const std::string rpath = path + ".referents[" + std::to_string(k) + "]";
      expr.referents.push_back({json_field<int>(refs[k], "object_id", rpath),
                                json_field<int>(refs[k], "start", rpath),
                                json_field<int>(refs[k], "end", rpath)});
    }
    ann.expressions.push_back(std::move(expr));
  }
  validate(ann);
  return ann;
}

inline nlohmann::ordered_json annotation_to_json(const SequenceAnnotation& ann) {
  nlohmann::ordered_json j;
  j["sequence_id"] = ann.sequence_id;
  j["frame_count"] = ann.frame_count;
  j["frame_w"] = ann.frame_w;
  j["frame_h"] = ann.frame_h;
  auto objects = nlohmann::ordered_json::array();
  for (const auto& obj : ann.objects) {
    nlohmann::ordered_json jo;
    jo["id"] = obj.id;
    jo["category"] = obj.category;
    auto boxes = nlohmann::ordered_json::object();
    for (const auto& [frame, b] : obj.boxes) {
      boxes[std::to_string(frame)] = {b.x1(), b.y1(), b.x2(), b.y2()};
    }
    jo["boxes"] = std::move(boxes);
    objects.push_back(std::move(jo));
  }
  j["objects"] = std::move(objects);
  auto expressions = nlohmann::ordered_json::array();
  for (const auto& expr : ann.expressions) {
    nlohmann::ordered_json je;
    je["id"] = expr.id;
    je["text"] = expr.text;
    auto refs = nlohmann::ordered_json::array();
    for (const auto& r : expr.referents) {
      refs.push_back({{"object_id", r.object_id}, {"start", r.start}, {"end", r.end}});
    }
    je["referents"] = std::move(refs);
    expressions.push_back(std::move(je));
  }
  j["expressions"] = std::move(expressions);
  return j;
}

/// Canonical serialized form: two-space indent, trailing LF.
inline std::string dump_annotation(const SequenceAnnotation& ann) {
  return annotation_to_json(ann).dump(2) + "\n";
}

inline SequenceAnnotation parse_annotation(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + upto, '\n');
    throw Error(ErrorCode::parse,
                "line " + std::to_string(line) + ": " + e.what(),
                "line " + std::to_string(line));
  }
  return annotation_from_json(j);
}

inline SequenceAnnotation load_annotation(const std::filesystem::path& path) {
  try {
    return parse_annotation(detail::read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::io) throw;
    throw Error(e.code(), path.string() + ": " + e.what(), e.field());
  }
}

inline void save_annotation(const SequenceAnnotation& ann,
                            const std::filesystem::path& path) {
  validate(ann);
  detail::write_file(path, dump_annotation(ann));
}

// ---------------------------------------------------------------------------
// Prediction CSV

inline constexpr std::string_view kPredictionHeader =
    "frame,track_id,x1,y1,x2,y2,class_score,ref_score";

/// Shortest fixed-point rendering with at most six fractional digits.
inline std::string format_real(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 6);
  std::string s(buf, p);
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  if (s == "-0") s = "0";
  return s;
}

inline std::string dump_predictions(const PredictionSet& ps) {
  std::string out(kPredictionHeader);
  out += '\n';
  for (const auto& r : ps.rows) {
    out += std::to_string(r.frame) + ',' + std::to_string(r.track_id) + ',' +
           format_real(r.box.x1()) + ',' + format_real(r.box.y1()) + ',' +
           format_real(r.box.x2()) + ',' + format_real(r.box.y2()) + ',' +
           format_real(r.class_score) + ',' + format_real(r.ref_score) + '\n';
  }
  return out;
}

inline PredictionSet parse_predictions(std::string_view text, std::string sequence_id,
                                       int expression_id,
                                       std::optional<int> frame_count = {}) {
  PredictionSet ps;
  ps.sequence_id = std::move(sequence_id);
  ps.expression_id = expression_id;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const std::string where = "line " + std::to_string(line_no);
    if (line_no == 1) {
      if (line != kPredictionHeader) {
        throw Error(ErrorCode::parse,
                    "header must be exactly '" + std::string(kPredictionHeader) + "'",
                    where);
      }
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string_view::npos
                                             ? std::string_view::npos
                                             : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cells.size() != 8) {
      throw Error(ErrorCode::parse, "expected 8 columns, got " +
                                        std::to_string(cells.size()), where);
    }
    const int frame = detail::parse_int(cells[0], where);
    const int track = detail::parse_int(cells[1], where);
    double v[6];
    for (int k = 0; k < 6; ++k) v[k] = detail::parse_double(cells[2 + k], where);
    try {
      ps.rows.push_back({frame, track, Box(v[0], v[1], v[2], v[3]), v[4], v[5]});
    } catch (const Error& e) {
      throw Error(ErrorCode::validation, e.what(), where);
    }
  }
  if (line_no == 0) throw Error(ErrorCode::parse, "missing header", "line 1");
  validate(ps, frame_count);
  return ps;
}

inline std::string prediction_file_name(const std::string& sequence_id, int expression_id) {
  return sequence_id + "_" + std::to_string(expression_id) + ".csv";
}

inline PredictionSet load_predictions(const std::filesystem::path& path,
                                      std::string sequence_id, int expression_id,
                                      std::optional<int> frame_count = {}) {
  try {
    return parse_predictions(detail::read_file(path), std::move(sequence_id),
                             expression_id, frame_count);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::io) throw;
    throw Error(e.code(), path.string() + ": " + e.what(), e.field());
  }
}

/// Derives (sequence_id, expression_id) from a `<sequence>_<expression>.csv` name.
inline PredictionSet load_predictions(const std::filesystem::path& path) {
  const std::string stem = path.stem().string();
  const auto us = stem.rfind('_');
  if (us == std::string::npos || us == 0) {
    throw Error(ErrorCode::invalid_argument,
                "prediction file name must be <sequence>_<expression>.csv",
                path.string());
  }
  return load_predictions(path, stem.substr(0, us),
                          detail::parse_int(stem.substr(us + 1), path.string()));
}

inline void save_predictions(const PredictionSet& ps, const std::filesystem::path& path) {
  validate(ps);
  detail::write_file(path, dump_predictions(ps));
}

// ---------------------------------------------------------------------------
// Referent expansion and statistics

using ReferentMap = std::map<int, std::set<int>>;  // frame -> object ids

/// Frames at which each referent object is both inside a referent interval and
/// visible.
inline ReferentMap referent_frames(const SequenceAnnotation& ann, int expression_id) {
  const Expression& expr = ann.expression(expression_id);
  ReferentMap out;
  for (const auto& ref : expr.referents) {
    const TrackedObject* obj = ann.find_object(ref.object_id);
    if (!obj) continue;
    for (auto it = obj->boxes.lower_bound(ref.start);
         it != obj->boxes.end() && it->first <= ref.end; ++it) {
      out[it->first].insert(ref.object_id);
    }
  }
  return out;
}

struct DatasetStats {
  static constexpr int kObjectBinWidth = 5;
  static constexpr int kFrameBinWidth = 50;
  static constexpr int kRatioBins = 10;

  std::size_t expressions_count = 0;
  double mean_objects_per_expression = 0.0;
  double mean_temporal_ratio = 0.0;
  std::vector<std::size_t> objects_per_expression_histogram;  // bins of 5 objects
  std::vector<std::size_t> frame_length_histogram;            // bins of 50 frames
  std::vector<std::size_t> temporal_ratio_histogram;          // 10 bins over [0, 1]
};

inline DatasetStats compute_stats(const std::vector<SequenceAnnotation>& sequences) {
  if (sequences.empty()) {
    throw Error(ErrorCode::invalid_argument, "compute_stats needs at least one sequence");
  }
  DatasetStats st;
  st.temporal_ratio_histogram.assign(DatasetStats::kRatioBins, 0);
  auto bump = [](std::vector<std::size_t>& h, std::size_t bin) {
    if (h.size() <= bin) h.resize(bin + 1, 0);
    ++h[bin];
  };
  double objects_sum = 0.0, ratio_sum = 0.0;
  for (const auto& ann : sequences) {
    for (const auto& expr : ann.expressions) {
      const ReferentMap rf = referent_frames(ann, expr.id);
      std::set<int> distinct;
      for (const auto& [f, ids] : rf) distinct.insert(ids.begin(), ids.end());
      const double ratio =
          static_cast<double>(rf.size()) / static_cast<double>(ann.frame_count);
      ++st.expressions_count;
      objects_sum += static_cast<double>(distinct.size());
      ratio_sum += ratio;
      bump(st.objects_per_expression_histogram,
           distinct.size() / DatasetStats::kObjectBinWidth);
      bump(st.frame_length_histogram, rf.size() / DatasetStats::kFrameBinWidth);
      const auto rbin = std::min<std::size_t>(
          DatasetStats::kRatioBins - 1,
          static_cast<std::size_t>(ratio * DatasetStats::kRatioBins));
      ++st.temporal_ratio_histogram[rbin];
    }
  }
  if (st.expressions_count > 0) {
    st.mean_objects_per_expression = objects_sum / static_cast<double>(st.expressions_count);
    st.mean_temporal_ratio = ratio_sum / static_cast<double>(st.expressions_count);
  }
  return st;
}

inline nlohmann::ordered_json stats_to_json(const DatasetStats& st) {
  nlohmann::ordered_json j;
  j["expressions_count"] = st.expressions_count;
  j["mean_objects_per_expression"] = st.mean_objects_per_expression;
  j["mean_temporal_ratio"] = st.mean_temporal_ratio;
  j["objects_per_expression_histogram"] = {
      {"bin_width", DatasetStats::kObjectBinWidth},
      {"counts", st.objects_per_expression_histogram}};
  j["frame_length_histogram"] = {{"bin_width", DatasetStats::kFrameBinWidth},
                                 {"counts", st.frame_length_histogram}};
  j["temporal_ratio_histogram"] = {{"bins", DatasetStats::kRatioBins},
                                   {"counts", st.temporal_ratio_histogram}};
  return j;
}

/// Every `*.json` annotation directly inside `dir`, ordered by file name.
inline std::vector<std::filesystem::path> annotation_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::io, "not a directory: " + dir.string(), dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace rmot
