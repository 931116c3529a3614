// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rmot/data_model.hpp"
#include "rmot/error.hpp"

namespace rmot {

/// The two clicks: the object's box at the first and last frame of the
/// described behaviour.
struct ClickPair {
  int expression_id = 0;
  int object_id = 0;
  int start_frame = 0;
  int end_frame = 0;
};

namespace detail {

// Sort by (object_id, start) and merge intervals of one object that overlap
// or touch, so equal referent sets always have one stored form.
inline void normalize_referents(std::vector<Referent>& refs) {
  std::sort(refs.begin(), refs.end(), [](const Referent& a, const Referent& b) {
    return std::tie(a.object_id, a.start, a.end) < std::tie(b.object_id, b.start, b.end);
  });
  std::vector<Referent> merged;
  for (const auto& r : refs) {
    if (!merged.empty() && merged.back().object_id == r.object_id &&
        r.start <= merged.back().end + 1) {
      merged.back().end = std::max(merged.back().end, r.end);
    } else {
      merged.push_back(r);
    }
  }
  refs = std::move(merged);
}

inline Expression& expression_for_edit(SequenceAnnotation& ann, int expression_id) {
  if (Expression* e = ann.find_expression(expression_id)) return *e;
  throw Error(ErrorCode::not_found, "unknown expression " + std::to_string(expression_id),
              "expression_id");
}

}  // namespace detail

/// Stores the referent interval [start, end] for the clicked object. Frames in
/// the interval where the object has no box stay non-referent.
inline SequenceAnnotation propagate(SequenceAnnotation ann, const ClickPair& click) {
  Expression& expr = detail::expression_for_edit(ann, click.expression_id);
  const TrackedObject* obj = ann.find_object(click.object_id);
  if (!obj) {
    throw Error(ErrorCode::not_found,
                "unknown object " + std::to_string(click.object_id), "object_id");
  }
  if (click.start_frame > click.end_frame) {
    throw Error(ErrorCode::click_rejected, "start frame after end frame", "start");
  }
  for (const auto& [frame, field] : {std::pair{click.start_frame, "start"},
                                     std::pair{click.end_frame, "end"}}) {
    if (!obj->visible_at(frame)) {
      throw Error(ErrorCode::click_rejected,
                  "object " + std::to_string(click.object_id) +
                      " is not visible at frame " + std::to_string(frame),
                  field);
    }
  }
  expr.referents.push_back({click.object_id, click.start_frame, click.end_frame});
  detail::normalize_referents(expr.referents);
  return ann;
}

/// Removes one frame from the object's referent interval, truncating or
/// splitting it.
inline SequenceAnnotation retract(SequenceAnnotation ann, int expression_id,
                                  int object_id, int frame) {
  Expression& expr = detail::expression_for_edit(ann, expression_id);
  auto it = std::find_if(expr.referents.begin(), expr.referents.end(),
                         [&](const Referent& r) {
                           return r.object_id == object_id && r.start <= frame &&
                                  frame <= r.end;
                         });
  if (it == expr.referents.end()) {
    throw Error(ErrorCode::no_op,
                "no referent interval of object " + std::to_string(object_id) +
                    " contains frame " + std::to_string(frame),
                "frame");
  }
  const Referent hit = *it;
  expr.referents.erase(it);
  if (hit.start <= frame - 1) expr.referents.push_back({object_id, hit.start, frame - 1});
  if (frame + 1 <= hit.end) expr.referents.push_back({object_id, frame + 1, hit.end});
  detail::normalize_referents(expr.referents);
  return ann;
}

inline std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

/// Appends an expression with no referents. The new id is max(existing) + 1.
inline std::pair<SequenceAnnotation, int> create_expression(SequenceAnnotation ann,
                                                            std::string_view text) {
  const std::string_view body = trim(text);
  if (body.empty()) {
    throw Error(ErrorCode::invalid_argument, "expression text is empty", "text");
  }
  int next = 0;
  for (const auto& e : ann.expressions) next = std::max(next, e.id + 1);
  ann.expressions.push_back({next, std::string(body), {}});
  return {std::move(ann), next};
}

}  // namespace rmot
