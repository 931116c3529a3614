// SPDX-License-Identifier: Apache-2.0
//
// rmot: evaluation, tracking baselines, annotation and the labelling server.
// Exit codes: 0 success, 1 usage error, 2 data or validation error.

#include <pthread.h>
#include <signal.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "rmot/label_service.hpp"
#include "rmot/rmot.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_alpha_grid(const std::string& text) {
  std::vector<double> alphas;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      alphas.push_back(rmot::detail::parse_double(std::string(rmot::trim(cell)), "alpha-grid"));
    } catch (const rmot::Error&) {
      throw UsageError("--alpha-grid: '" + cell + "' is not a number");
    }
  }
  rmot::EvalConfig probe;
  probe.alphas = alphas;
  try {
    probe.validate();
  } catch (const rmot::Error& e) {
    throw UsageError(std::string("--alpha-grid: ") + e.what());
  }
  return alphas;
}

void write_text(const fs::path& path, const std::string& body) {
  rmot::detail::write_file(path, body);
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string gt, pred, out, alpha_grid;
  bool table = false;
  std::optional<double> ref_threshold;
};

int cmd_eval(const EvalArgs& a) {
  rmot::EvalConfig cfg;
  if (!a.alpha_grid.empty()) cfg.alphas = parse_alpha_grid(a.alpha_grid);
  cfg.ref_threshold = a.ref_threshold;

  std::vector<rmot::SequenceAnnotation> anns;
  for (const auto& file : rmot::annotation_files(a.gt)) anns.push_back(rmot::load_annotation(file));

  std::set<fs::path> pred_files;
  for (const auto& e : fs::directory_iterator(a.pred))
    if (e.is_regular_file() && e.path().extension() == ".csv") pred_files.insert(e.path().filename());

  std::vector<std::string> unmatched;
  std::vector<rmot::ExpressionResult> results;
  for (const auto& ann : anns) {
    for (const auto& expr : ann.expressions) {
      const std::string name = rmot::prediction_file_name(ann.sequence_id, expr.id);
      if (!pred_files.erase(name)) {
        unmatched.push_back("missing prediction " + name + " for sequence '" + ann.sequence_id +
                            "' expression " + std::to_string(expr.id));
        continue;
      }
      const auto ps = rmot::load_predictions(fs::path(a.pred) / name, ann.sequence_id, expr.id,
                                             ann.frame_count);
      results.push_back(rmot::evaluate_expression(ann, ps, cfg));
    }
  }
  for (const auto& extra : pred_files)
    unmatched.push_back("prediction " + extra.string() + " has no ground-truth expression");
  if (!unmatched.empty()) {
    for (const auto& u : unmatched) std::cerr << "rmot eval: " << u << '\n';
    std::cerr << "rmot eval: " << unmatched.size() << " unmatched (sequence, expression) pair(s)\n";
    return kExitData;
  }
  if (results.empty()) {
    std::cerr << "rmot eval: no expressions found under " << a.gt << '\n';
    return kExitData;
  }
  const rmot::EvalReport report = rmot::aggregate(std::move(results), cfg.alphas);
  write_text(a.out, rmot::render_report(report, rmot::ReportFormat::json));
  if (a.table) std::cout << rmot::render_report(report, rmot::ReportFormat::table);
  return 0;
}

// ---------------------------------------------------------------------------

struct TrackArgs {
  std::string ann, method = "oracle", out;
  int expression = 0;
  std::uint64_t seed = 0;
  double jitter = 0.0, flip_ref = 0.0;
  double class_threshold = 0.7, ref_threshold = 0.4, iou_threshold = 0.3;
  int patience = 0;
};

int cmd_track(const TrackArgs& a) {
  const auto ann = rmot::load_annotation(a.ann);
  ann.expression(a.expression);
  rmot::PredictionSet ps;
  if (a.method == "oracle") {
    rmot::TrackerConfig cfg;
    cfg.class_threshold = a.class_threshold;
    cfg.ref_threshold = a.ref_threshold;
    cfg.patience = a.patience;
    ps = rmot::run(ann, a.expression,
                   rmot::oracle_scorer(ann, a.expression, {a.jitter, a.flip_ref, a.seed}), cfg);
  } else {
    auto frames = rmot::detections_from_annotation(ann, a.expression);
    if (a.jitter > 0.0) {
      std::mt19937_64 rng(a.seed);
      std::normal_distribution<double> noise(0.0, a.jitter);
      for (auto& dets : frames) {
        for (auto& d : dets) {
          const double x1 = d.box.x1() + noise(rng), y1 = d.box.y1() + noise(rng);
          const double x2 = std::max(d.box.x2() + noise(rng), x1 + 1.0);
          const double y2 = std::max(d.box.y2() + noise(rng), y1 + 1.0);
          d.box = rmot::Box(x1, y1, x2, y2);
        }
      }
    }
    rmot::AssociatorConfig cfg;
    cfg.iou_threshold = a.iou_threshold;
    cfg.patience = a.patience;
    cfg.class_threshold = a.class_threshold;
    cfg.ref_threshold = a.ref_threshold;
    ps = rmot::iou_associator(frames, cfg, ann.sequence_id, a.expression);
  }
  rmot::save_predictions(ps, a.out);
  return 0;
}

// ---------------------------------------------------------------------------

struct PropagateArgs {
  std::string ann, out;
  int expression = 0, object = 0, start = 0, end = 0;
};

int cmd_propagate(const PropagateArgs& a) {
  const auto ann = rmot::load_annotation(a.ann);
  const auto next = rmot::propagate(ann, {a.expression, a.object, a.start, a.end});
  rmot::service::atomic_write(a.out, rmot::dump_annotation(next));
  return 0;
}

// ---------------------------------------------------------------------------

struct StatsArgs {
  std::string ann, out;
};

int cmd_stats(const StatsArgs& a) {
  std::vector<rmot::SequenceAnnotation> anns;
  for (const auto& file : rmot::annotation_files(a.ann)) anns.push_back(rmot::load_annotation(file));
  if (anns.empty()) {
    std::cerr << "rmot stats: no annotation files under " << a.ann << '\n';
    return kExitData;
  }
  const auto st = rmot::compute_stats(anns);
  write_text(a.out, rmot::stats_to_json(st).dump(2) + "\n");
  std::printf("expressions %zu  objects/expression %.2f  temporal ratio %.3f\n",
              st.expressions_count, st.mean_objects_per_expression, st.mean_temporal_ratio);
  return 0;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string ann, bind = "127.0.0.1";
  int port = 8080;
};

int cmd_serve(const ServeArgs& a) {
  // Signals are taken synchronously by a dedicated thread so that stopping
  // the server never runs inside a signal handler.
  sigset_t mask;
  sigemptyset(&mask);
  sigaddset(&mask, SIGINT);
  sigaddset(&mask, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &mask, nullptr);

  rmot::service::LabelService service(a.ann);
  int port = 0;
  try {
    port = service.bind(a.bind, a.port);
  } catch (const rmot::Error& e) {
    std::cerr << "rmot serve: " << e.what() << " (port in use?)\n";
    return kExitData;
  }
  std::cout << "listening on " << a.bind << ':' << port << std::endl;

  std::thread waiter([&service, mask] {
    int sig = 0;
    sigwait(&mask, &sig);
    service.stop();
  });
  service.serve();
  // serve() also returns if the listener fails; wake the waiter in that case.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  std::cout << "stopped" << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------

struct ImportArgs {
  std::string labels, expressions, out;
  int frame_w = 1242, frame_h = 375;
};

int cmd_import(const ImportArgs& a) {
  const auto anns = rmot::kitti::import_dataset(a.labels, a.expressions, {a.frame_w, a.frame_h});
  fs::create_directories(a.out);
  for (const auto& ann : anns) rmot::save_annotation(ann, fs::path(a.out) / (ann.sequence_id + ".json"));
  std::printf("imported %zu sequence(s)\n", anns.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Referring multi-object tracking toolkit"};
  app.require_subcommand(1);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score prediction CSVs against annotations");
  eval->add_option("--gt", ev.gt, "Annotation directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--pred", ev.pred, "Prediction directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", ev.out, "Report JSON path")->required();
  eval->add_option("--alpha-grid", ev.alpha_grid, "Comma-separated localization thresholds");
  eval->add_flag("--table", ev.table, "Print the summary row to stdout");
  eval->add_option("--ref-threshold", ev.ref_threshold, "Drop rows with ref_score below this")
      ->check(CLI::Range(0.0, 1.0));

  TrackArgs tr;
  auto* track = app.add_subcommand("track", "Produce predictions with a baseline tracker");
  track->add_option("--ann", tr.ann, "Annotation file")->required()->check(CLI::ExistingFile);
  track->add_option("--expression", tr.expression, "Expression id")->required();
  track->add_option("--method", tr.method, "oracle or iou")->check(CLI::IsMember({"oracle", "iou"}));
  track->add_option("--seed", tr.seed, "Random seed");
  track->add_option("--out", tr.out, "Prediction CSV path")->required();
  track->add_option("--jitter", tr.jitter, "Box noise sigma in pixels")->check(CLI::NonNegativeNumber);
  track->add_option("--flip-ref", tr.flip_ref, "Probability of flipping the referent flag")
      ->check(CLI::Range(0.0, 1.0));
  track->add_option("--class-threshold", tr.class_threshold)->check(CLI::Range(0.0, 1.0));
  track->add_option("--ref-threshold", tr.ref_threshold)->check(CLI::Range(0.0, 1.0));
  track->add_option("--iou-threshold", tr.iou_threshold)->check(CLI::Range(0.0, 1.0));
  track->add_option("--patience", tr.patience, "Missed frames before a track is dropped")
      ->check(CLI::NonNegativeNumber);

  PropagateArgs pr;
  auto* prop = app.add_subcommand("propagate", "Apply one two-click referent interval");
  prop->add_option("--ann", pr.ann, "Annotation file")->required()->check(CLI::ExistingFile);
  prop->add_option("--expression", pr.expression)->required();
  prop->add_option("--object", pr.object)->required();
  prop->add_option("--start", pr.start)->required();
  prop->add_option("--end", pr.end)->required();
  prop->add_option("--out", pr.out, "Output annotation path")->required();

  StatsArgs st;
  auto* stats = app.add_subcommand("stats", "Dataset statistics");
  stats->add_option("--ann", st.ann, "Annotation directory")->required()->check(CLI::ExistingDirectory);
  stats->add_option("--out", st.out, "Statistics JSON path")->required();

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Serve the labelling HTTP API");
  serve->add_option("--ann", sv.ann, "Annotation directory")->required()->check(CLI::ExistingDirectory);
  serve->add_option("--port", sv.port, "TCP port, 0 for any free port")->check(CLI::Range(0, 65535));
  serve->add_option("--bind", sv.bind, "Listen address");

  ImportArgs im;
  auto* import = app.add_subcommand("import-kitti", "Convert KITTI labels and Refer-KITTI expressions");
  import->add_option("--labels", im.labels, "label_02 directory")->required()->check(CLI::ExistingDirectory);
  import->add_option("--expressions", im.expressions, "Expression directory")
      ->required()->check(CLI::ExistingDirectory);
  import->add_option("--out", im.out, "Output annotation directory")->required();
  import->add_option("--frame-w", im.frame_w)->check(CLI::PositiveNumber);
  import->add_option("--frame-h", im.frame_h)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*eval) return cmd_eval(ev);
    if (*track) return cmd_track(tr);
    if (*prop) return cmd_propagate(pr);
    if (*stats) return cmd_stats(st);
    if (*serve) return cmd_serve(sv);
    if (*import) return cmd_import(im);
  } catch (const UsageError& e) {
    std::cerr << "rmot: " << e.what() << '\n';
    return kExitUsage;
  } catch (const rmot::Error& e) {
    std::cerr << "rmot: " << rmot::to_string(e.code()) << ": " << e.what();
    if (!e.field().empty()) std::cerr << " [" << e.field() << ']';
    std::cerr << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "rmot: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
