// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmot/data_model.hpp"
#include "rmot/error.hpp"
#include "rmot/geometry.hpp"

namespace rmot::kitti {

struct ImportOptions {
  int frame_w = 1242;
  int frame_h = 375;
};

/**
 * Parses a KITTI tracking `label_02/<seq>.txt` file. Columns: frame, track id,
 * type, truncated, occluded, alpha, x1, y1, x2, y2, then 3-D fields that are
 * ignored. `DontCare` rows (track id -1) are skipped; boxes are clipped to the
 * frame and dropped when clipping leaves nothing.
 */
inline SequenceAnnotation parse_tracking_labels(const std::string& text, std::string sequence_id,
                                                const ImportOptions& opt = {}) {
  SequenceAnnotation ann;
  ann.sequence_id = std::move(sequence_id);
  ann.frame_w = opt.frame_w;
  ann.frame_h = opt.frame_h;
  std::map<int, TrackedObject> objects;
  int last_frame = -1;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream row(line);
    int frame = 0, track = 0;
    std::string type;
    double trunc = 0, occ = 0, alpha = 0, x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    if (!(row >> frame >> track >> type >> trunc >> occ >> alpha >> x1 >> y1 >> x2 >> y2)) {
      throw Error(ErrorCode::parse, "malformed KITTI label row", "line " + std::to_string(line_no));
    }
    last_frame = std::max(last_frame, frame);
    if (track < 0 || type == "DontCare") continue;
    x1 = std::clamp(x1, 0.0, static_cast<double>(opt.frame_w));
    x2 = std::clamp(x2, 0.0, static_cast<double>(opt.frame_w));
    y1 = std::clamp(y1, 0.0, static_cast<double>(opt.frame_h));
    y2 = std::clamp(y2, 0.0, static_cast<double>(opt.frame_h));
    if (!(x2 > x1 && y2 > y1)) continue;
    TrackedObject& obj = objects[track];
    obj.id = track;
    obj.category = type;
    obj.boxes.insert_or_assign(frame, Box(x1, y1, x2, y2));
  }
  if (last_frame < 0) throw Error(ErrorCode::parse, "no label rows", ann.sequence_id);
  ann.frame_count = last_frame + 1;
  for (auto& [id, obj] : objects) ann.objects.push_back(std::move(obj));
  return ann;
}

/**
 * Adds one expression from a Refer-KITTI expression file:
 * `{"sentence": str, "label": {"<frame>": [track ids]}}`. Runs of consecutive
 * labelled frames of one object become referent intervals; labels on frames
 * where the object has no box are dropped.
 */
inline void add_expression(SequenceAnnotation& ann, const nlohmann::json& j) {
  Expression expr;
  expr.id = 0;
  for (const auto& e : ann.expressions) expr.id = std::max(expr.id, e.id + 1);
  expr.text = rmot::detail::json_field<std::string>(j, "sentence", "");
  if (!j.contains("label") || !j.at("label").is_object()) {
    throw Error(ErrorCode::parse, "field 'label' must be an object", "label");
  }
  std::map<int, std::set<int>> frames_of;  // object id -> labelled frames
  for (const auto& [key, ids] : j.at("label").items()) {
    const int frame = rmot::detail::parse_int(key, "label." + key);
    for (const auto& id : ids) {
      const int oid = id.get<int>();
      const TrackedObject* obj = ann.find_object(oid);
      if (obj && obj->visible_at(frame)) frames_of[oid].insert(frame);
    }
  }
  for (const auto& [oid, frames] : frames_of) {
    int start = -1, prev = -1;
    for (int f : frames) {
      if (start >= 0 && f == prev + 1) {
        prev = f;
        continue;
      }
      if (start >= 0) expr.referents.push_back({oid, start, prev});
      start = prev = f;
    }
    expr.referents.push_back({oid, start, prev});
  }
  ann.expressions.push_back(std::move(expr));
}

/**
 * Converts `<labels_dir>/<seq>.txt` plus the `.json` files in `<expressions_dir>/<seq>/` into
 * one annotation per sequence that has at least one expression file.
 * Expression files are taken in file-name order.
 */
inline std::vector<SequenceAnnotation> import_dataset(const std::filesystem::path& labels_dir,
                                                      const std::filesystem::path& expressions_dir,
                                                      const ImportOptions& opt = {}) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(labels_dir) || !fs::is_directory(expressions_dir)) {
    throw Error(ErrorCode::io, "labels and expressions must be directories",
                labels_dir.string());
  }
  std::vector<fs::path> label_files;
  for (const auto& e : fs::directory_iterator(labels_dir))
    if (e.is_regular_file() && e.path().extension() == ".txt") label_files.push_back(e.path());
  std::sort(label_files.begin(), label_files.end());

  std::vector<SequenceAnnotation> out;
  for (const auto& lf : label_files) {
    const std::string seq = lf.stem().string();
    const fs::path edir = expressions_dir / seq;
    if (!fs::is_directory(edir)) continue;
    SequenceAnnotation ann = parse_tracking_labels(rmot::detail::read_file(lf), seq, opt);
    std::vector<fs::path> expr_files;
    for (const auto& e : fs::directory_iterator(edir))
      if (e.is_regular_file() && e.path().extension() == ".json") expr_files.push_back(e.path());
    std::sort(expr_files.begin(), expr_files.end());
    for (const auto& ef : expr_files) {
      try {
        add_expression(ann, nlohmann::json::parse(rmot::detail::read_file(ef)));
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse, ef.string() + ": " + e.what(), ef.string());
      }
    }
    validate(ann);
    out.push_back(std::move(ann));
  }
  return out;
}

}  // namespace rmot::kitti
