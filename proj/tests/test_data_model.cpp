// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "rmot/data_model.hpp"
#include "support/fixtures.hpp"

namespace fs = std::filesystem;
using namespace rmot;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "rmot_data_model_tests";
  fs::create_directories(dir);
  return dir / name;
}

SequenceAnnotation ten_frames() {
  SequenceAnnotation ann;
  ann.sequence_id = "s";
  ann.frame_count = 10;
  ann.frame_w = ann.frame_h = 100;
  TrackedObject o{7, "car", {}};
  for (int f = 0; f < 10; ++f) o.boxes.emplace(f, Box(1, 1, 5, 5));
  ann.objects.push_back(o);
  ann.expressions.push_back({0, "e", {{7, 2, 5}}});
  return ann;
}

}  // namespace

TEST(Annotation, LoadsTinyFixture) {
  const auto ann = load_annotation(fixture::data_dir() / "tiny.json");
  EXPECT_EQ(ann.sequence_id, "tiny");
  EXPECT_EQ(ann.frame_count, 3);
  EXPECT_EQ(ann.objects.size(), 2u);
  ASSERT_EQ(ann.expressions.size(), 1u);
  EXPECT_EQ(ann.expressions[0].text, "the moving car");
  EXPECT_EQ(ann.find_object(2)->boxes.size(), 2u);
}

TEST(Annotation, SaveLoadRoundTrip) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ann = fixture::synth_sequence(seed, {.visibility_gaps = seed % 2 == 1});
    const fs::path p = scratch("rt.json");
    save_annotation(ann, p);
    EXPECT_EQ(load_annotation(p), ann);
    // Serialization is stable: a second save is byte-identical.
    const std::string first = detail::read_file(p);
    save_annotation(load_annotation(p), p);
    EXPECT_EQ(detail::read_file(p), first);
  }
}

TEST(Annotation, UnknownReferentObjectIsValidationError) {
  auto j = nlohmann::json::parse(detail::read_file(fixture::data_dir() / "tiny.json"));
  j["expressions"][0]["referents"][0]["object_id"] = 99;
  try {
    annotation_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::validation);
    EXPECT_EQ(e.field(), "expression_id 0");
  }
}

TEST(Annotation, SchemaErrorsCarryFieldPath) {
  auto j = nlohmann::json::parse(detail::read_file(fixture::data_dir() / "tiny.json"));
  j["objects"][1]["boxes"]["1"] = {1, 2, 3};
  try {
    annotation_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::parse);
    EXPECT_EQ(e.field(), "objects[1].boxes.1");
  }
  j = nlohmann::json::parse(detail::read_file(fixture::data_dir() / "tiny.json"));
  j.erase("frame_w");
  EXPECT_THROW(annotation_from_json(j), Error);
}

TEST(Annotation, MalformedJsonReportsLine) {
  try {
    parse_annotation("{\n  \"sequence_id\": \"x\",\n  oops\n}");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::parse);
    EXPECT_EQ(e.field(), "line 3");
  }
}

TEST(Annotation, InvariantViolations) {
  auto ann = ten_frames();
  ann.expressions[0].referents.push_back({7, 4, 8});  // overlaps (2,5)
  EXPECT_THROW(validate(ann), Error);

  ann = ten_frames();
  ann.objects[0].boxes.emplace(10, Box(1, 1, 2, 2));  // frame outside T
  EXPECT_THROW(validate(ann), Error);

  ann = ten_frames();
  ann.objects[0].boxes.at(3) = Box(90, 90, 101, 95);  // outside frame bounds
  EXPECT_THROW(validate(ann), Error);

  ann = ten_frames();
  ann.objects.push_back(ann.objects[0]);  // duplicate id
  EXPECT_THROW(validate(ann), Error);

  ann = ten_frames();
  ann.frame_count = 0;
  EXPECT_THROW(validate(ann), Error);
}

TEST(Predictions, HeaderOnlyIsEmpty) {
  const auto ps = parse_predictions(std::string(kPredictionHeader) + "\n", "s", 0);
  EXPECT_TRUE(ps.rows.empty());
}

TEST(Predictions, DuplicateKeyIsValidationError) {
  const std::string text = std::string(kPredictionHeader) +
                           "\n0,1,0,0,1,1,1,1\n0,1,0,0,2,2,1,1\n";
  try {
    parse_predictions(text, "s", 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::validation);
  }
}

TEST(Predictions, GoldenFileRoundTripsBitExactly) {
  const fs::path golden = fixture::data_dir() / "tiny_0.csv";
  const auto ps = load_predictions(golden);
  EXPECT_EQ(ps.sequence_id, "tiny");
  EXPECT_EQ(ps.expression_id, 0);
  ASSERT_EQ(ps.rows.size(), 4u);
  EXPECT_EQ(dump_predictions(ps), detail::read_file(golden));
  const fs::path out = scratch("tiny_0.csv");
  save_predictions(ps, out);
  EXPECT_EQ(detail::read_file(out), detail::read_file(golden));
}

TEST(Predictions, RejectsBadRows) {
  const std::string h = std::string(kPredictionHeader) + "\n";
  EXPECT_THROW(parse_predictions("frame,track\n", "s", 0), Error);
  EXPECT_THROW(parse_predictions(h + "0,1,0,0,1,1,1\n", "s", 0), Error);
  EXPECT_THROW(parse_predictions(h + "0,1,0,0,1,1,1.5,1\n", "s", 0), Error);
  EXPECT_THROW(parse_predictions(h + "5,1,0,0,1,1,1,1\n", "s", 0, 3), Error);
  EXPECT_THROW(parse_predictions(h + "0,x,0,0,1,1,1,1\n", "s", 0), Error);
  EXPECT_NO_THROW(parse_predictions(h + "0,1,0,0,1,1,1,1\r\n", "s", 0));
}

TEST(Predictions, RealFormatting) {
  EXPECT_EQ(format_real(1.0), "1");
  EXPECT_EQ(format_real(0.5), "0.5");
  EXPECT_EQ(format_real(1.0 / 3.0), "0.333333");
  EXPECT_EQ(format_real(-0.0000001), "0");
  EXPECT_EQ(format_real(12.25), "12.25");
}

TEST(ReferentFrames, DirectInterval) {
  const auto rf = referent_frames(ten_frames(), 0);
  std::vector<int> frames;
  for (const auto& [f, ids] : rf) frames.push_back(f);
  EXPECT_EQ(frames, (std::vector<int>{2, 3, 4, 5}));
}

TEST(ReferentFrames, SkipsInvisibleFrames) {
  auto ann = ten_frames();
  ann.objects[0].boxes.erase(4);
  std::vector<int> frames;
  for (const auto& [f, ids] : referent_frames(ann, 0)) frames.push_back(f);
  EXPECT_EQ(frames, (std::vector<int>{2, 3, 5}));
}

TEST(ReferentFrames, EmptyReferentsAndUnknownExpression) {
  auto ann = ten_frames();
  ann.expressions[0].referents.clear();
  EXPECT_TRUE(referent_frames(ann, 0).empty());
  EXPECT_THROW(referent_frames(ann, 5), Error);
}

TEST(ReferentFrames, SubsetOfVisibility) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto ann = fixture::synth_sequence(seed, {.visibility_gaps = true});
    for (const auto& e : ann.expressions)
      for (const auto& [f, ids] : referent_frames(ann, e.id))
        for (int id : ids) EXPECT_TRUE(ann.find_object(id)->visible_at(f));
  }
}

TEST(Stats, HandCount) {
  SequenceAnnotation ann;
  ann.sequence_id = "s";
  ann.frame_count = 10;
  ann.frame_w = ann.frame_h = 100;
  TrackedObject a{1, "car", {}}, b{2, "car", {}};
  for (int f = 0; f < 10; ++f) {
    a.boxes.emplace(f, Box(0, 0, 5, 5));
    b.boxes.emplace(f, Box(10, 10, 15, 15));
  }
  ann.objects = {a, b};
  ann.expressions.push_back({0, "both", {{1, 0, 4}, {2, 2, 3}}});
  const auto st = compute_stats({ann});
  EXPECT_EQ(st.expressions_count, 1u);
  EXPECT_DOUBLE_EQ(st.mean_objects_per_expression, 2.0);
  EXPECT_DOUBLE_EQ(st.mean_temporal_ratio, 0.5);
}

TEST(Stats, ZeroReferentExpression) {
  SequenceAnnotation ann;
  ann.sequence_id = "s";
  ann.frame_count = 4;
  ann.expressions.push_back({0, "none", {}});
  const auto st = compute_stats({ann});
  EXPECT_DOUBLE_EQ(st.mean_objects_per_expression, 0.0);
  EXPECT_DOUBLE_EQ(st.mean_temporal_ratio, 0.0);
  EXPECT_THROW(compute_stats({}), Error);
}

TEST(Stats, HistogramsSumAndPermutationInvariance) {
  std::vector<SequenceAnnotation> seqs;
  for (std::uint64_t s = 0; s < 8; ++s) seqs.push_back(fixture::synth_sequence(s, {.frames = 120}));
  const auto st = compute_stats(seqs);
  auto sum = [](const std::vector<std::size_t>& h) {
    std::size_t t = 0;
    for (auto v : h) t += v;
    return t;
  };
  EXPECT_EQ(sum(st.objects_per_expression_histogram), st.expressions_count);
  EXPECT_EQ(sum(st.frame_length_histogram), st.expressions_count);
  EXPECT_EQ(sum(st.temporal_ratio_histogram), st.expressions_count);
  EXPECT_GE(st.mean_temporal_ratio, 0.0);
  EXPECT_LE(st.mean_temporal_ratio, 1.0);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    auto shuffled = seqs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (auto& s : shuffled) std::shuffle(s.expressions.begin(), s.expressions.end(), rng);
    const auto other = compute_stats(shuffled);
    EXPECT_NEAR(other.mean_objects_per_expression, st.mean_objects_per_expression, 1e-12);
    EXPECT_NEAR(other.mean_temporal_ratio, st.mean_temporal_ratio, 1e-12);
    EXPECT_EQ(other.temporal_ratio_histogram, st.temporal_ratio_histogram);
    EXPECT_EQ(other.objects_per_expression_histogram, st.objects_per_expression_histogram);
  }
}

TEST(Stats, AnnotationFilesSorted) {
  const auto files = annotation_files(fixture::data_dir() / "dataset");
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(files[0].filename(), "seq_a.json");
  EXPECT_THROW(annotation_files(fixture::data_dir() / "nope"), Error);
}
