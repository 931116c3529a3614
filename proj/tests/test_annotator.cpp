// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "rmot/annotator.hpp"
#include "support/fixtures.hpp"

using namespace rmot;

namespace {

// Object 7 visible on frames 3..20 of a 30-frame sequence, one empty
// expression.
SequenceAnnotation base() {
  SequenceAnnotation ann;
  ann.sequence_id = "s";
  ann.frame_count = 30;
  ann.frame_w = ann.frame_h = 100;
  TrackedObject o{7, "car", {}};
  for (int f = 3; f <= 20; ++f) o.boxes.emplace(f, Box(1, 1, 9, 9));
  ann.objects.push_back(o);
  ann.expressions.push_back({0, "the car", {}});
  return ann;
}

std::set<std::pair<int, int>> referent_set(const SequenceAnnotation& ann, int eid) {
  std::set<std::pair<int, int>> out;
  for (const auto& [f, ids] : referent_frames(ann, eid))
    for (int id : ids) out.emplace(f, id);
  return out;
}

}  // namespace

TEST(Propagate, StoresInterval) {
  const auto ann = propagate(base(), {0, 7, 5, 12});
  ASSERT_EQ(ann.expressions[0].referents.size(), 1u);
  EXPECT_EQ(ann.expressions[0].referents[0], (Referent{7, 5, 12}));
  const auto rf = referent_frames(ann, 0);
  EXPECT_EQ(rf.size(), 8u);
  EXPECT_EQ(rf.begin()->first, 5);
  EXPECT_EQ(rf.rbegin()->first, 12);
}

TEST(Propagate, Idempotent) {
  const auto once = propagate(base(), {0, 7, 5, 12});
  EXPECT_EQ(propagate(once, {0, 7, 5, 12}), once);
}

TEST(Propagate, MergesOverlap) {
  const auto ann = propagate(propagate(base(), {0, 7, 5, 12}), {0, 7, 10, 15});
  ASSERT_EQ(ann.expressions[0].referents.size(), 1u);
  EXPECT_EQ(ann.expressions[0].referents[0], (Referent{7, 5, 15}));
}

TEST(Propagate, Errors) {
  try {
    propagate(base(), {0, 7, 1, 12});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::click_rejected);
    EXPECT_EQ(e.field(), "start");
    EXPECT_NE(std::string(e.what()).find("frame 1"), std::string::npos);
  }
  try {
    propagate(base(), {0, 7, 5, 25});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.field(), "end");
  }
  EXPECT_THROW(propagate(base(), {0, 7, 12, 5}), Error);
  try {
    propagate(base(), {3, 7, 5, 12});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_found);
  }
  EXPECT_THROW(propagate(base(), {0, 8, 5, 12}), Error);
}

TEST(Retract, TruncatesBoundary) {
  const auto ann = retract(propagate(base(), {0, 7, 5, 12}), 0, 7, 12);
  ASSERT_EQ(ann.expressions[0].referents.size(), 1u);
  EXPECT_EQ(ann.expressions[0].referents[0], (Referent{7, 5, 11}));
}

TEST(Retract, SplitsInterior) {
  const auto ann = retract(propagate(base(), {0, 7, 5, 12}), 0, 7, 8);
  EXPECT_EQ(ann.expressions[0].referents,
            (std::vector<Referent>{{7, 5, 7}, {7, 9, 12}}));
}

TEST(Retract, NoIntervalIsNoOpError) {
  try {
    retract(base(), 0, 7, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::no_op);
  }
}

TEST(CreateExpression, SequentialIdsAndTrim) {
  SequenceAnnotation ann = base();
  ann.expressions.clear();
  auto [a1, id0] = create_expression(ann, "first");
  EXPECT_EQ(id0, 0);
  auto [a2, id1] = create_expression(a1, "  second \n");
  EXPECT_EQ(id1, 1);
  EXPECT_EQ(a2.expressions[1].text, "second");
  EXPECT_TRUE(a2.expressions[1].referents.empty());
  try {
    create_expression(a2, "  ");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_argument);
    EXPECT_EQ(e.field(), "text");
  }
}

// Referent set after any click sequence equals the union of clicked
// intervals intersected with visibility, whatever the click order.
TEST(AnnotationAlgebra, OrderIndependentUnion) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    auto ann = fixture::synth_sequence(1000 + trial, {.frames = 25, .objects = 3, .expressions = 1,
                                                      .visibility_gaps = true});
    ann.expressions[0].referents.clear();
    std::vector<ClickPair> clicks;
    std::set<std::pair<int, int>> expected;
    for (int k = 0; k < 5; ++k) {
      const auto& obj = ann.objects[rng() % ann.objects.size()];
      std::vector<int> vis;
      for (const auto& [f, b] : obj.boxes) vis.push_back(f);
      int a = vis[rng() % vis.size()], b = vis[rng() % vis.size()];
      if (a > b) std::swap(a, b);
      clicks.push_back({0, obj.id, a, b});
      for (const auto& [f, bx] : obj.boxes)
        if (f >= a && f <= b) expected.emplace(f, obj.id);
    }
    auto forward = ann;
    for (const auto& c : clicks) forward = propagate(forward, c);
    auto shuffled = clicks;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto other = ann;
    for (const auto& c : shuffled) other = propagate(other, c);
    EXPECT_EQ(referent_set(forward, 0), expected);
    EXPECT_EQ(forward, other);  // canonical interval storage
    for (const auto& c : clicks) EXPECT_EQ(propagate(forward, c), forward);
  }
}

TEST(AnnotationAlgebra, RetractAfterPropagateRestores) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    auto ann = fixture::synth_sequence(2000 + trial, {.frames = 25, .objects = 3,
                                                      .expressions = 1});
    ann.expressions[0].referents.clear();
    const auto& obj = ann.objects[rng() % ann.objects.size()];
    std::vector<int> vis;
    for (const auto& [f, b] : obj.boxes) vis.push_back(f);
    int a = vis[rng() % vis.size()], b = vis[rng() % vis.size()];
    if (a > b) std::swap(a, b);
    auto edited = propagate(ann, {0, obj.id, a, b});
    for (int f = a; f <= b; ++f) edited = retract(edited, 0, obj.id, f);
    EXPECT_EQ(edited, ann);
  }
}
