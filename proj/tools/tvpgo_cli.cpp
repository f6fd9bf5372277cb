// Command-line front end: binds the synthetic-scenario generator, the
// loop-closure pipeline, and the trajectory evaluation helpers to files on
// disk. Every number printed here comes straight from a library call; the
// tool itself only moves bytes and tallies events.
//
// Verbosity is controlled by the TVPGO_LOG environment variable:
//   0 quiet (results only), 1 one-line summaries (default), 2 per-step log.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"

#include "tvpgo/config.hpp"
#include "tvpgo/errors.hpp"
#include "tvpgo/graph_io.hpp"
#include "tvpgo/lc_pipeline.hpp"
#include "tvpgo/synth_frontend.hpp"
#include "tvpgo/trajectory.hpp"

namespace {

using namespace tvpgo;

int log_level() {
  static const int level = [] {
    const char* raw = std::getenv("TVPGO_LOG");
    if (raw == nullptr) return 1;
    char* end = nullptr;
    const long parsed = std::strtol(raw, &end, 10);
    return (end == raw) ? 1 : static_cast<int>(parsed);
  }();
  return level;
}

void say(int level, const std::string& line) {
  if (log_level() >= level) std::cout << line << "\n";
}

std::string fmt(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.9g", value);
  return buffer;
}

std::string fmt17(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

// Loads the config file when one was given; an empty Config otherwise, so
// every loader falls back to its defaults.
Config load_config(const std::string& path) {
  if (path.empty()) return Config::parse_string("");
  return Config::load(path);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open output file: " + path);
  return out;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string config;
  std::string scenario;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
};

void run_synth(const SynthArgs& args) {
  Config config = load_config(args.config);
  ScenarioSpec spec = scenario_from_config(config);
  // The same file may also carry pipeline keys (shared between synth and
  // run); consume them so the typo check below only fires on unknown keys.
  pipeline_params_from_config(config);
  config.require_all_consumed();

  if (!args.scenario.empty()) spec.kind = parse_scenario_kind(args.scenario);
  if (args.seed_set) spec.seed = args.seed;

  say(2, "scenario " + to_string(spec.kind) + ", seed " +
             std::to_string(spec.seed));
  const DatasetInfo info = generate_dataset(spec, args.out);
  say(1, "wrote " + std::to_string(info.frame_count) + " frames to " +
             args.out);
}

// ---------------------------------------------------------------------------
// run

struct RunArgs {
  std::string data;
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string variant;
  std::string out;
  std::string odom_out;
  std::string events_out;
  std::string graph_out;
  std::string report;
};

void run_run(const RunArgs& args) {
  Config config = load_config(args.config);
  const ScenarioSpec scenario = scenario_from_config(config);
  PipelineParams params = pipeline_params_from_config(config);
  config.require_all_consumed();

  if (!args.variant.empty()) params.variant = parse_edge_variant(args.variant);
  const std::uint64_t matcher_seed = args.seed_set ? args.seed : scenario.seed;

  DatasetReader reader(args.data);
  LoopClosurePipeline pipeline(
      params, make_synthetic_matcher(scenario.noise.match_outlier_rate,
                                     matcher_seed));

  FrameInput frame;
  std::size_t frames = 0;
  while (reader.next(&frame)) {
    const std::vector<PipelineEvent> batch = pipeline.process_frame(frame);
    ++frames;
    if (log_level() >= 2 && !batch.empty()) {
      std::ostringstream line;
      write_events(line, batch);
      std::cout << line.str();
    }
  }
  if (frames == 0) throw IoError("dataset contains no frames: " + args.data);
  const std::optional<SolveReport> final_report = pipeline.finalize();

  write_tum_file(args.out, pipeline.trajectory());
  if (!args.odom_out.empty()) {
    write_tum_file(args.odom_out, pipeline.odometry_trajectory());
  }
  if (!args.events_out.empty()) {
    std::ofstream out = open_output(args.events_out);
    write_events(out, pipeline.events());
  }
  if (!args.graph_out.empty()) {
    write_graph_file(args.graph_out, pipeline.graph());
  }
  if (!args.report.empty() && final_report.has_value()) {
    open_output(args.report) << final_report->to_table();
  }

  std::size_t keyframes = 0;
  std::size_t scale_free = 0;
  std::size_t absolute = 0;
  std::size_t rejected = 0;
  std::size_t optimizations = 0;
  for (const PipelineEvent& event : pipeline.events()) {
    if (std::holds_alternative<KeyframeAccepted>(event)) ++keyframes;
    if (std::holds_alternative<CandidateRejected>(event)) ++rejected;
    if (std::holds_alternative<Optimized>(event)) ++optimizations;
    if (const auto* edge = std::get_if<EdgeAdded>(&event)) {
      (edge->kind == EdgeKind::kScaleFree ? scale_free : absolute) += 1;
    }
  }
  say(1, "frames " + std::to_string(frames) + ", keyframes " +
             std::to_string(keyframes) + ", edges " +
             std::to_string(scale_free) + " scale-free + " +
             std::to_string(absolute) + " absolute, rejected " +
             std::to_string(rejected) + ", optimizations " +
             std::to_string(optimizations));
  if (final_report.has_value()) {
    say(1, "final cost " + fmt(final_report->initial_cost) + " -> " +
               fmt(final_report->final_cost) + " in " +
               std::to_string(final_report->iterations) + " iterations");
  }
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string est;
  std::string ref;
  std::string baseline;
  std::string graph;
  double max_dt = 0.02;
};

void run_eval(const EvalArgs& args) {
  const Trajectory est = read_tum_file(args.est);
  const Trajectory ref = read_tum_file(args.ref);

  const double ate = rmse_ate(est, ref, args.max_dt);
  std::cout << "rmse_ate " << fmt(ate) << "\n";

  if (!args.baseline.empty()) {
    const Trajectory base = read_tum_file(args.baseline);
    const double base_ate = rmse_ate(base, ref, args.max_dt);
    std::cout << "baseline_rmse_ate " << fmt(base_ate) << "\n";
    std::cout << "percent_decrease " << fmt(percent_decrease(base_ate, ate))
              << "\n";
  }

  if (!args.graph.empty()) {
    // Graph nodes are created in trajectory order, so node k's ground truth
    // is the reference entry associated with the k-th estimate entry.
    const PoseGraph graph = read_graph_file(args.graph);
    const auto pairs = associate_timestamps(est, ref, args.max_dt);
    std::vector<const Pose*> gt_of_node(est.size(), nullptr);
    for (const auto& [est_index, ref_index] : pairs) {
      gt_of_node[est_index] = &ref[ref_index].pose;
    }
    const auto lookup = [&](NodeId id) -> const Pose* {
      const auto index = static_cast<std::size_t>(id);
      return index < gt_of_node.size() ? gt_of_node[index] : nullptr;
    };
    for (const Edge& edge : graph.edges()) {
      if (const auto* abs = std::get_if<AbsoluteLoopEdge>(&edge)) {
        const Pose* from = lookup(abs->from);
        const Pose* to = lookup(abs->to);
        if (from == nullptr || to == nullptr) continue;
        const EdgeErrors err = lc_edge_errors(*abs, *from, *to);
        std::cout << "loop_edge " << abs->from << " " << abs->to
                  << " absolute " << fmt(err.trans_error) << " "
                  << fmt(err.rot_error) << "\n";
      } else if (const auto* dir = std::get_if<ScaleFreeLoopEdge>(&edge)) {
        const Pose* from = lookup(dir->from);
        const Pose* to = lookup(dir->to);
        if (from == nullptr || to == nullptr) continue;
        const EdgeErrors err = lc_edge_errors(*dir, *from, *to);
        std::cout << "loop_edge " << dir->from << " " << dir->to
                  << " scale-free " << fmt(err.trans_error) << " "
                  << fmt(err.rot_error) << "\n";
      }
    }
  }
}

// ---------------------------------------------------------------------------
// graph

struct GraphArgs {
  std::string in;
  std::string out;
};

void run_graph(const GraphArgs& args) {
  const PoseGraph graph = read_graph_file(args.in);
  std::size_t loops = 0;
  for (const Edge& edge : graph.edges()) {
    if (std::holds_alternative<AbsoluteLoopEdge>(edge) ||
        std::holds_alternative<ScaleFreeLoopEdge>(edge)) {
      ++loops;
    }
  }
  say(1, "nodes " + std::to_string(graph.num_nodes()) + ", edges " +
             std::to_string(graph.num_edges()) + " (" + std::to_string(loops) +
             " loop closures), prior " + (graph.has_prior() ? "yes" : "no"));
  if (!args.out.empty()) write_graph_file(args.out, graph);
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::string est;
  std::string odom;
  std::string ref;
  std::string events;
  std::string out;
};

void append_series(std::ofstream& csv, const std::string& series,
                   const Trajectory& trajectory) {
  for (const TrajectoryEntry& entry : trajectory) {
    const auto& t = entry.pose.translation;
    const auto q = entry.pose.rotation.quaternion();
    csv << series << "," << fmt17(entry.timestamp) << "," << fmt17(t.x())
        << "," << fmt17(t.y()) << "," << fmt17(t.z()) << "," << fmt17(q.x())
        << "," << fmt17(q.y()) << "," << fmt17(q.z()) << "," << fmt17(q.w())
        << "\n";
  }
}

void run_report(const ReportArgs& args) {
  namespace fs = std::filesystem;
  fs::create_directories(args.out);

  std::size_t rows = 0;
  if (!args.est.empty() || !args.odom.empty() || !args.ref.empty()) {
    std::ofstream csv = open_output((fs::path(args.out) / "trajectories.csv").string());
    csv << "series,timestamp,tx,ty,tz,qx,qy,qz,qw\n";
    if (!args.est.empty()) append_series(csv, "estimate", read_tum_file(args.est));
    if (!args.odom.empty()) append_series(csv, "odometry", read_tum_file(args.odom));
    if (!args.ref.empty()) append_series(csv, "reference", read_tum_file(args.ref));
    ++rows;
  }

  if (!args.events.empty()) {
    std::ifstream in(args.events);
    if (!in) throw IoError("cannot open events file: " + args.events);
    const std::vector<PipelineEvent> events = read_events(in);
    std::ofstream csv = open_output((fs::path(args.out) / "events.csv").string());
    csv << "seq,type,query,candidate,stage,kind,node,timestamp,"
           "iterations,initial_cost,final_cost,converged\n";
    std::size_t seq = 0;
    for (const PipelineEvent& event : events) {
      csv << seq++ << ",";
      std::visit(
          [&](const auto& e) {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, KeyframeAccepted>) {
              csv << "keyframe,,,,," << e.node << "," << fmt17(e.timestamp)
                  << ",,,,";
            } else if constexpr (std::is_same_v<T, CandidateProposed>) {
              csv << "candidate," << e.query << "," << e.candidate
                  << ",,,,,,,,";
            } else if constexpr (std::is_same_v<T, CandidateRejected>) {
              csv << "rejected," << e.query << "," << e.candidate << ","
                  << to_string(e.stage) << ","
                  << (e.kind.has_value() ? to_string(*e.kind) : "") << ",,,,,,";
            } else if constexpr (std::is_same_v<T, EdgeAdded>) {
              csv << "edge," << e.query << "," << e.candidate << ",,"
                  << to_string(e.kind) << ",,,,,,";
            } else {
              csv << "optimized,,,,,,," << e.report.iterations << ","
                  << fmt17(e.report.initial_cost) << ","
                  << fmt17(e.report.final_cost) << ","
                  << (e.report.converged ? 1 : 0);
            }
          },
          event);
      csv << "\n";
    }
    ++rows;
  }

  if (rows == 0) {
    throw ParameterError("report needs at least one of --est/--odom/--ref/--events");
  }
  say(1, "wrote report files to " + args.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-view loop-closure pose-graph toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic scenario dataset");
  synth_cmd->add_option("--config", synth.config, "scenario config file")
      ->check(CLI::ExistingFile);
  synth_cmd->add_option("--scenario", synth.scenario,
                        "square|figure-eight|corridor|random-walk");
  CLI::Option* synth_seed = synth_cmd->add_option("--seed", synth.seed,
                                                  "override the scenario seed");
  synth_cmd->add_option("--out", synth.out, "dataset output directory")
      ->required();

  RunArgs run;
  CLI::App* run_cmd =
      app.add_subcommand("run", "run the loop-closure pipeline on a dataset");
  run_cmd->add_option("--data", run.data, "dataset directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  run_cmd->add_option("--config", run.config, "pipeline config file")
      ->check(CLI::ExistingFile);
  CLI::Option* run_seed =
      run_cmd->add_option("--seed", run.seed, "override the matcher seed");
  run_cmd->add_option("--variant", run.variant, "scale-free|absolute|both");
  run_cmd->add_option("--out", run.out, "estimated trajectory (TUM)")
      ->required();
  run_cmd->add_option("--odom-out", run.odom_out,
                      "odometry at keyframes (TUM)");
  run_cmd->add_option("--events", run.events_out, "pipeline event trace");
  run_cmd->add_option("--graph-out", run.graph_out, "final pose graph (text)");
  run_cmd->add_option("--report", run.report,
                      "final optimizer report (plain-text table)");

  EvalArgs eval;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "trajectory and loop-edge error report");
  eval_cmd->add_option("--est", eval.est, "estimated trajectory (TUM)")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--ref", eval.ref, "reference trajectory (TUM)")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--baseline", eval.baseline,
                       "baseline trajectory for percent decrease (TUM)")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--graph", eval.graph,
                       "graph file for per-edge errors against --ref")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--max-dt", eval.max_dt,
                       "association window, seconds");

  GraphArgs graph;
  CLI::App* graph_cmd =
      app.add_subcommand("graph", "load, validate, and re-serialize a graph");
  graph_cmd->add_option("--in", graph.in, "graph text file")
      ->required()
      ->check(CLI::ExistingFile);
  graph_cmd->add_option("--out", graph.out, "re-serialized output path");

  ReportArgs report;
  CLI::App* report_cmd =
      app.add_subcommand("report", "emit plot-ready CSV files");
  report_cmd->add_option("--est", report.est, "estimated trajectory (TUM)")
      ->check(CLI::ExistingFile);
  report_cmd->add_option("--odom", report.odom, "odometry trajectory (TUM)")
      ->check(CLI::ExistingFile);
  report_cmd->add_option("--ref", report.ref, "reference trajectory (TUM)")
      ->check(CLI::ExistingFile);
  report_cmd->add_option("--events", report.events, "pipeline event trace")
      ->check(CLI::ExistingFile);
  report_cmd->add_option("--out", report.out, "output directory")->required();

  try {
    app.parse(argc, argv);
    synth.seed_set = synth_seed->count() > 0;
    run.seed_set = run_seed->count() > 0;
    if (synth_cmd->parsed()) run_synth(synth);
    if (run_cmd->parsed()) run_run(run);
    if (eval_cmd->parsed()) run_eval(eval);
    if (graph_cmd->parsed()) run_graph(graph);
    if (report_cmd->parsed()) run_report(report);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
