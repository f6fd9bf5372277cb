#include "tvpgo/lc_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/SVD>

#include "tvpgo/detail/text_format.hpp"

namespace tvpgo {

namespace {

using detail::fmt17;

int count_set(const std::vector<char>& flags) {
  int n = 0;
  for (char f : flags) n += (f != 0);
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Keyframe selection

void KeyframePolicy::validate() const {
  if (!(kf_trans_threshold > 0.0) || !(kf_rot_threshold > 0.0)) {
    throw ParameterError("keyframe thresholds must be positive");
  }
}

bool select_keyframe(const Pose& current, const Pose& last_keyframe,
                     const KeyframePolicy& policy) {
  policy.validate();
  const PoseMetrics m = pose_metrics(relative_pose(last_keyframe, current));
  return m.trans_norm >= policy.kf_trans_threshold ||
         m.rot_angle >= policy.kf_rot_threshold;
}

// ---------------------------------------------------------------------------
// Filters

void FilterParams::validate() const {
  if (min_matches <= 0 || min_inliers <= 0) {
    throw ParameterError("filter count floors must be positive");
  }
  if (!(min_inlier_ratio > 0.0) || min_inlier_ratio > 1.0) {
    throw ParameterError("min_inlier_ratio must be in (0, 1]");
  }
  if (!(consistency_gate_trans > 0.0) || !(consistency_gate_rot > 0.0)) {
    throw ParameterError("consistency gates must be positive");
  }
  if (!(pure_rotation_ratio > 0.0) || pure_rotation_ratio > 1.0) {
    throw ParameterError("pure_rotation_ratio must be in (0, 1]");
  }
}

bool filter_matching_feasibility(int match_count, const FilterParams& params) {
  params.validate();
  return match_count >= params.min_matches;
}

bool filter_geometric_feasibility(int solver_inliers, int sample_size,
                                  const FilterParams& params) {
  params.validate();
  if (sample_size <= 0) {
    throw ParameterError("sample_size must be positive");
  }
  const double ratio = static_cast<double>(solver_inliers) /
                       static_cast<double>(sample_size);
  return solver_inliers >= params.min_inliers &&
         ratio >= params.min_inlier_ratio;
}

bool filter_graph_consistency(const Edge& candidate, const PoseGraph& graph,
                              const FilterParams& params) {
  params.validate();
  if (const auto* e = std::get_if<AbsoluteLoopEdge>(&candidate)) {
    const Pose expected =
        relative_pose(graph.node(e->from).estimate, graph.node(e->to).estimate);
    const PoseMetrics m =
        pose_metrics(e->measurement.inverse() * expected);
    return m.trans_norm <= params.consistency_gate_trans &&
           m.rot_angle <= params.consistency_gate_rot;
  }
  if (const auto* e = std::get_if<ScaleFreeLoopEdge>(&candidate)) {
    const Pose expected =
        relative_pose(graph.node(e->from).estimate, graph.node(e->to).estimate);
    const double rot_err =
        rot_log(e->rotation.inverse() * expected.rotation).norm();
    const Vector3 expected_dir = normalize_translation(expected.translation);
    const double dir_err =
        std::acos(std::clamp(e->direction.dot(expected_dir), -1.0, 1.0));
    return rot_err <= params.consistency_gate_rot &&
           dir_err <= params.consistency_gate_rot;
  }
  throw ParameterError("consistency filter applies to loop edges only");
}

Rotation fit_rotation_only(const std::vector<Vector3>& bearings_a,
                           const std::vector<Vector3>& bearings_b) {
  if (bearings_a.size() != bearings_b.size()) {
    throw ParameterError("bearing lists differ in length");
  }
  if (bearings_a.size() < 2) return Rotation::identity();
  Matrix3 h = Matrix3::Zero();
  for (std::size_t i = 0; i < bearings_a.size(); ++i) {
    h += bearings_b[i].normalized() * bearings_a[i].normalized().transpose();
  }
  Eigen::JacobiSVD<Matrix3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3 d = Matrix3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;
  }
  return Rotation::from_matrix(svd.matrixV() * d * svd.matrixU().transpose());
}

int count_rotation_only_inliers(const std::vector<Vector3>& bearings_a,
                                const std::vector<Vector3>& bearings_b,
                                double angular_threshold) {
  if (!(angular_threshold > 0.0)) {
    throw ParameterError("angular_threshold must be positive");
  }
  const Rotation r = fit_rotation_only(bearings_a, bearings_b);
  int inliers = 0;
  for (std::size_t i = 0; i < bearings_a.size(); ++i) {
    const Vector3 predicted = r * bearings_b[i].normalized();
    const double c =
        std::clamp(predicted.dot(bearings_a[i].normalized()), -1.0, 1.0);
    if (std::acos(c) <= angular_threshold) ++inliers;
  }
  return inliers;
}

bool detect_pure_rotation(int essential_inliers, int rotation_only_inliers,
                          const FilterParams& params) {
  params.validate();
  if (essential_inliers < 0 || rotation_only_inliers < 0) {
    throw ParameterError("inlier counts must be non-negative");
  }
  return static_cast<double>(rotation_only_inliers) >=
         params.pure_rotation_ratio * static_cast<double>(essential_inliers);
}

// ---------------------------------------------------------------------------
// Events

std::string to_string(EdgeKind kind) {
  return kind == EdgeKind::kScaleFree ? "scale_free" : "absolute";
}

std::string to_string(RejectionStage stage) {
  switch (stage) {
    case RejectionStage::kMatching: return "matching";
    case RejectionStage::kGeometric: return "geometric";
    case RejectionStage::kConsistency: return "consistency";
    case RejectionStage::kPureRotation: return "pure_rotation";
  }
  return "unknown";
}

namespace {

EdgeKind parse_edge_kind(const std::string& s) {
  if (s == "scale_free") return EdgeKind::kScaleFree;
  if (s == "absolute") return EdgeKind::kAbsolute;
  throw IoError("unknown edge kind '" + s + "'");
}

RejectionStage parse_stage(const std::string& s) {
  if (s == "matching") return RejectionStage::kMatching;
  if (s == "geometric") return RejectionStage::kGeometric;
  if (s == "consistency") return RejectionStage::kConsistency;
  if (s == "pure_rotation") return RejectionStage::kPureRotation;
  throw IoError("unknown rejection stage '" + s + "'");
}

}  // namespace

void write_events(std::ostream& out, const std::vector<PipelineEvent>& events) {
  for (const PipelineEvent& event : events) {
    std::visit(
        [&](const auto& e) {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, KeyframeAccepted>) {
            out << "KEYFRAME " << e.node << ' ' << fmt17(e.timestamp) << '\n';
          } else if constexpr (std::is_same_v<T, CandidateProposed>) {
            out << "CANDIDATE " << e.query << ' ' << e.candidate << '\n';
          } else if constexpr (std::is_same_v<T, CandidateRejected>) {
            out << "REJECTED " << e.query << ' ' << e.candidate << ' '
                << to_string(e.stage) << ' '
                << (e.kind ? to_string(*e.kind) : "-") << '\n';
          } else if constexpr (std::is_same_v<T, EdgeAdded>) {
            out << "EDGE " << e.query << ' ' << e.candidate << ' '
                << to_string(e.kind) << '\n';
          } else {
            out << "OPTIMIZED " << e.report.iterations << ' '
                << fmt17(e.report.initial_cost) << ' '
                << fmt17(e.report.final_cost) << ' '
                << (e.report.converged ? 1 : 0) << '\n';
          }
        },
        event);
  }
}

std::vector<PipelineEvent> read_events(std::istream& in) {
  std::vector<PipelineEvent> events;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fail = [&](const std::string& what) {
      throw IoError("event line " + std::to_string(line_no) + ": " + what);
    };
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag.empty() || tag[0] == '#') continue;
    if (tag == "KEYFRAME") {
      KeyframeAccepted e;
      if (!(ls >> e.node >> e.timestamp)) fail("bad KEYFRAME record");
      events.emplace_back(e);
    } else if (tag == "CANDIDATE") {
      CandidateProposed e;
      if (!(ls >> e.query >> e.candidate)) fail("bad CANDIDATE record");
      events.emplace_back(e);
    } else if (tag == "REJECTED") {
      CandidateRejected e;
      std::string stage, kind;
      if (!(ls >> e.query >> e.candidate >> stage >> kind)) {
        fail("bad REJECTED record");
      }
      e.stage = parse_stage(stage);
      if (kind != "-") e.kind = parse_edge_kind(kind);
      events.emplace_back(e);
    } else if (tag == "EDGE") {
      EdgeAdded e;
      std::string kind;
      if (!(ls >> e.query >> e.candidate >> kind)) fail("bad EDGE record");
      e.kind = parse_edge_kind(kind);
      events.emplace_back(e);
    } else if (tag == "OPTIMIZED") {
      Optimized e;
      int converged = 0;
      if (!(ls >> e.report.iterations >> e.report.initial_cost >>
            e.report.final_cost >> converged)) {
        fail("bad OPTIMIZED record");
      }
      e.report.converged = (converged != 0);
      events.emplace_back(e);
    } else {
      fail("unknown event '" + tag + "'");
    }
  }
  return events;
}

// ---------------------------------------------------------------------------
// Parameters

EdgeVariant parse_edge_variant(const std::string& name) {
  if (name == "scale-free" || name == "scale_free") {
    return EdgeVariant::kScaleFree;
  }
  if (name == "absolute") return EdgeVariant::kAbsolute;
  if (name == "both") return EdgeVariant::kBoth;
  throw ParameterError("unknown variant '" + name +
                       "' (expected scale-free, absolute, or both)");
}

std::string to_string(EdgeVariant variant) {
  switch (variant) {
    case EdgeVariant::kScaleFree: return "scale-free";
    case EdgeVariant::kAbsolute: return "absolute";
    case EdgeVariant::kBoth: return "both";
  }
  return "unknown";
}

void PipelineParams::validate() const {
  keyframes.validate();
  filters.validate();
  retrieval.validate();
  solver.validate();
  essential_ransac.validate();
  pnp_ransac.validate();
  if (!(max_lift_depth > 0.0)) {
    throw ParameterError("max_lift_depth must be positive");
  }
  for (double w : {odom_info_rot, odom_info_trans, abs_info_rot,
                   abs_info_trans, sf_info_rot, sf_info_dir, prior_info}) {
    if (!(w > 0.0)) {
      throw ParameterError("information weights must be positive");
    }
  }
}

PipelineParams pipeline_params_from_config(const Config& config) {
  PipelineParams p;
  p.variant = parse_edge_variant(
      config.get_string("variant", to_string(p.variant)));
  p.filters_enabled = config.get_bool("filters_enabled", p.filters_enabled);
  p.retrieval_enabled =
      config.get_bool("retrieval_enabled", p.retrieval_enabled);
  p.max_lift_depth = config.get_double("max_lift_depth", p.max_lift_depth);

  p.keyframes.kf_trans_threshold = config.get_double(
      "kf_trans_threshold", p.keyframes.kf_trans_threshold);
  p.keyframes.kf_rot_threshold =
      config.get_double("kf_rot_threshold", p.keyframes.kf_rot_threshold);

  p.filters.min_matches = config.get_int("min_matches", p.filters.min_matches);
  p.filters.min_inliers = config.get_int("min_inliers", p.filters.min_inliers);
  p.filters.min_inlier_ratio =
      config.get_double("min_inlier_ratio", p.filters.min_inlier_ratio);
  p.filters.consistency_gate_trans = config.get_double(
      "consistency_gate_trans", p.filters.consistency_gate_trans);
  p.filters.consistency_gate_rot = config.get_double(
      "consistency_gate_rot", p.filters.consistency_gate_rot);
  p.filters.pure_rotation_ratio =
      config.get_double("pure_rotation_ratio", p.filters.pure_rotation_ratio);

  p.retrieval.n_sim = config.get_int("n_sim", p.retrieval.n_sim);
  p.retrieval.n_prox = config.get_int("n_prox", p.retrieval.n_prox);
  p.retrieval.delta_r = config.get_double("delta_r", p.retrieval.delta_r);
  p.retrieval.delta_t = config.get_double("delta_t", p.retrieval.delta_t);
  p.retrieval.min_time_gap =
      config.get_double("min_time_gap", p.retrieval.min_time_gap);
  p.retrieval.min_similarity =
      config.get_double("min_similarity", p.retrieval.min_similarity);

  p.solver.max_iterations =
      config.get_int("max_iterations", p.solver.max_iterations);
  p.solver.cost_tolerance =
      config.get_double("cost_tolerance", p.solver.cost_tolerance);
  p.solver.step_tolerance =
      config.get_double("step_tolerance", p.solver.step_tolerance);
  p.solver.initial_damping =
      config.get_double("initial_damping", p.solver.initial_damping);
  p.solver.cadence_l = config.get_int("cadence_l", p.solver.cadence_l);
  p.solver.use_robust_loss =
      config.get_bool("use_robust_loss", p.solver.use_robust_loss);
  p.solver.robust_loss_scale =
      config.get_double("robust_loss_scale", p.solver.robust_loss_scale);

  p.essential_ransac.max_iterations = config.get_int(
      "essential_max_iterations", p.essential_ransac.max_iterations);
  p.essential_ransac.inlier_threshold = config.get_double(
      "essential_threshold", p.essential_ransac.inlier_threshold);
  p.essential_ransac.min_inliers =
      config.get_int("essential_min_inliers", p.essential_ransac.min_inliers);
  p.essential_ransac.confidence = config.get_double(
      "essential_confidence", p.essential_ransac.confidence);
  p.essential_ransac.rng_seed =
      config.get_uint64("essential_seed", p.essential_ransac.rng_seed);

  p.pnp_ransac.max_iterations =
      config.get_int("pnp_max_iterations", p.pnp_ransac.max_iterations);
  p.pnp_ransac.inlier_threshold =
      config.get_double("pnp_threshold", p.pnp_ransac.inlier_threshold);
  p.pnp_ransac.min_inliers =
      config.get_int("pnp_min_inliers", p.pnp_ransac.min_inliers);
  p.pnp_ransac.confidence =
      config.get_double("pnp_confidence", p.pnp_ransac.confidence);
  p.pnp_ransac.rng_seed =
      config.get_uint64("pnp_seed", p.pnp_ransac.rng_seed);

  p.odom_info_rot = config.get_double("odom_info_rot", p.odom_info_rot);
  p.odom_info_trans = config.get_double("odom_info_trans", p.odom_info_trans);
  p.abs_info_rot = config.get_double("abs_info_rot", p.abs_info_rot);
  p.abs_info_trans = config.get_double("abs_info_trans", p.abs_info_trans);
  p.sf_info_rot = config.get_double("sf_info_rot", p.sf_info_rot);
  p.sf_info_dir = config.get_double("sf_info_dir", p.sf_info_dir);
  p.prior_info = config.get_double("prior_info", p.prior_info);

  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Edge construction

namespace {

InformationMatrix diagonal_info(double rot_weight, double trans_weight) {
  Vector6 d;
  d << rot_weight, rot_weight, rot_weight, trans_weight, trans_weight,
      trans_weight;
  return InformationMatrix::from_diagonal(d);
}

}  // namespace

BuiltEdges build_edges(NodeId query, NodeId candidate, const MatchSet& matches,
                       const CameraIntrinsics& query_intrinsics,
                       const CameraIntrinsics& candidate_intrinsics,
                       const PoseGraph& graph, const PipelineParams& params) {
  BuiltEdges out;
  const auto reject = [&](RejectionStage stage, std::optional<EdgeKind> kind) {
    out.events.emplace_back(CandidateRejected{query, candidate, stage, kind});
  };
  const bool gated = params.filters_enabled;

  const int match_count = static_cast<int>(matches.corr_2d2d.size());
  if (gated && !filter_matching_feasibility(match_count, params.filters)) {
    reject(RejectionStage::kMatching, std::nullopt);
    return out;
  }

  if (params.variant != EdgeVariant::kAbsolute) {
    try {
      const EssentialResult ess = estimate_essential(
          matches.corr_2d2d, query_intrinsics, candidate_intrinsics,
          params.essential_ransac);
      const int inliers = count_set(ess.inliers);
      if (gated && !filter_geometric_feasibility(
                       inliers, static_cast<int>(matches.corr_2d2d.size()),
                       params.filters)) {
        reject(RejectionStage::kGeometric, EdgeKind::kScaleFree);
      } else {
        std::vector<Correspondence2D2D> inlier_corr;
        std::vector<Vector2> pix_a, pix_b;
        for (std::size_t i = 0; i < matches.corr_2d2d.size(); ++i) {
          if (!ess.inliers[i]) continue;
          inlier_corr.push_back(matches.corr_2d2d[i]);
          pix_a.push_back(matches.corr_2d2d[i].pixel_a);
          pix_b.push_back(matches.corr_2d2d[i].pixel_b);
        }
        const int rotation_only = count_rotation_only_inliers(
            normalize_pixels(pix_a, query_intrinsics),
            normalize_pixels(pix_b, candidate_intrinsics),
            params.essential_ransac.inlier_threshold);
        if (detect_pure_rotation(inliers, rotation_only, params.filters)) {
          reject(RejectionStage::kPureRotation, EdgeKind::kScaleFree);
        } else {
          const EssentialDecomposition dec =
              decompose_essential(ess.essential, inlier_corr,
                                  query_intrinsics, candidate_intrinsics);
          const ScaleFreeLoopEdge edge{
              query, candidate, dec.rotation, dec.direction,
              diagonal_info(params.sf_info_rot, params.sf_info_dir), true};
          if (gated &&
              !filter_graph_consistency(edge, graph, params.filters)) {
            reject(RejectionStage::kConsistency, EdgeKind::kScaleFree);
          } else {
            out.edges.emplace_back(edge);
            out.events.emplace_back(
                EdgeAdded{query, candidate, EdgeKind::kScaleFree});
          }
        }
      }
    } catch (const InsufficientDataError&) {
      reject(RejectionStage::kGeometric, EdgeKind::kScaleFree);
    } catch (const NoConsensusError&) {
      reject(RejectionStage::kGeometric, EdgeKind::kScaleFree);
    } catch (const AmbiguousDecompositionError&) {
      reject(RejectionStage::kGeometric, EdgeKind::kScaleFree);
    } catch (const DegenerateGeometryError&) {
      reject(RejectionStage::kGeometric, EdgeKind::kScaleFree);
    }
  }

  if (params.variant != EdgeVariant::kScaleFree) {
    try {
      const PnpResult pnp =
          solve_pnp(matches.corr_2d3d, query_intrinsics, params.pnp_ransac);
      const int inliers = count_set(pnp.inliers);
      if (gated && !filter_geometric_feasibility(
                       inliers, static_cast<int>(matches.corr_2d3d.size()),
                       params.filters)) {
        reject(RejectionStage::kGeometric, EdgeKind::kAbsolute);
      } else {
        const AbsoluteLoopEdge edge{
            query, candidate, pnp.pose,
            diagonal_info(params.abs_info_rot, params.abs_info_trans), true};
        if (gated && !filter_graph_consistency(edge, graph, params.filters)) {
          reject(RejectionStage::kConsistency, EdgeKind::kAbsolute);
        } else {
          out.edges.emplace_back(edge);
          out.events.emplace_back(
              EdgeAdded{query, candidate, EdgeKind::kAbsolute});
        }
      }
    } catch (const InsufficientDataError&) {
      reject(RejectionStage::kGeometric, EdgeKind::kAbsolute);
    } catch (const NoConsensusError&) {
      reject(RejectionStage::kGeometric, EdgeKind::kAbsolute);
    } catch (const DegenerateGeometryError&) {
      reject(RejectionStage::kGeometric, EdgeKind::kAbsolute);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

LoopClosurePipeline::LoopClosurePipeline(PipelineParams params,
                                         Matcher matcher,
                                         CandidateInjector injector)
    : params_(std::move(params)),
      matcher_(std::move(matcher)),
      injector_(std::move(injector)) {
  params_.validate();
  if (!matcher_) throw ParameterError("pipeline needs a matcher");
}

KeyframeObservation reduce_observation(NodeId id, const FrameInput& frame,
                                       double max_lift_depth) {
  KeyframeObservation obs;
  obs.id = id;
  obs.timestamp = frame.timestamp;
  obs.intrinsics = frame.intrinsics;
  obs.descriptor = frame.observation.descriptor;
  obs.keypoints = frame.observation.keypoints;
  obs.landmark_ids = frame.observation.landmark_ids;
  if (frame.observation.depth.height() > 0) {
    obs.lifted = lift_keypoints_depth(obs.keypoints, frame.observation.depth,
                                      frame.intrinsics, max_lift_depth);
  } else if (frame.observation.points.height() > 0) {
    obs.lifted =
        lift_keypoints_pointmap(obs.keypoints, frame.observation.points);
  }
  return obs;
}

KeyframeObservation LoopClosurePipeline::make_observation(
    NodeId id, const FrameInput& frame) const {
  return reduce_observation(id, frame, params_.max_lift_depth);
}

std::vector<PipelineEvent> LoopClosurePipeline::process_frame(
    const FrameInput& frame) {
  if (has_frames_ && !(frame.timestamp > last_timestamp_)) {
    throw ParameterError("frame timestamps must be strictly increasing");
  }
  frame.intrinsics.validate();
  if (frame.observation.keypoints.size() !=
      frame.observation.landmark_ids.size()) {
    throw ParameterError("keypoints and landmark_ids must be parallel");
  }
  if (params_.retrieval_enabled &&
      frame.observation.descriptor.dimension() == 0) {
    throw ParameterError("retrieval needs a descriptor on every frame");
  }
  const bool first = !has_frames_;
  has_frames_ = true;
  last_timestamp_ = frame.timestamp;

  if (!first &&
      !select_keyframe(frame.odometry_pose, last_keyframe_odometry_,
                       params_.keyframes)) {
    return {};
  }

  std::vector<PipelineEvent> batch;
  const NodeId id = static_cast<NodeId>(graph_.num_nodes());

  GraphNode node;
  node.id = id;
  node.timestamp = frame.timestamp;
  if (first || !any_loop_edge_) {
    // Until a loop edge exists the graph is consistent by construction, so
    // keep the raw odometry bit-for-bit (no-loop conservation).
    node.estimate = frame.odometry_pose;
  } else {
    node.estimate =
        graph_.node(id - 1).estimate *
        relative_pose(last_keyframe_odometry_, frame.odometry_pose);
  }
  graph_.add_node(node);
  if (first) {
    graph_.add_edge(PriorEdge{
        id, frame.odometry_pose,
        diagonal_info(params_.prior_info, params_.prior_info)});
  } else {
    graph_.add_edge(OdometryEdge{
        id - 1, id,
        relative_pose(last_keyframe_odometry_, frame.odometry_pose),
        diagonal_info(params_.odom_info_rot, params_.odom_info_trans)});
  }
  batch.emplace_back(KeyframeAccepted{id, frame.timestamp});

  const KeyframeObservation obs = make_observation(id, frame);

  std::vector<NodeId> candidates;
  if (params_.retrieval_enabled) {
    const std::vector<NodeId> sim = similarity_candidates(
        obs.descriptor, frame.timestamp, index_, params_.retrieval);
    const std::vector<NodeId> prox =
        proximity_candidates(id, graph_.nodes(), params_.retrieval);
    candidates = merge_candidates(sim, prox);
  }
  if (injector_) {
    candidates = merge_candidates(candidates, injector_(id, graph_.nodes()));
  }

  for (NodeId cand : candidates) {
    // Loop edges connect non-consecutive keyframes only.
    if (cand < 0 || cand >= id - 1) continue;
    batch.emplace_back(CandidateProposed{id, cand});
    const MatchSet matches =
        matcher_(obs, observations_[static_cast<std::size_t>(cand)]);
    BuiltEdges built =
        build_edges(id, cand, matches, obs.intrinsics,
                    observations_[static_cast<std::size_t>(cand)].intrinsics,
                    graph_, params_);
    for (Edge& edge : built.edges) {
      graph_.add_edge(edge);
      any_loop_edge_ = true;
    }
    for (PipelineEvent& event : built.events) {
      batch.emplace_back(std::move(event));
    }
  }

  if (params_.retrieval_enabled) {
    index_.insert(id, frame.timestamp, obs.descriptor);
  }
  observations_.push_back(obs);
  odometry_at_keyframes_.push_back(
      TrajectoryEntry{frame.timestamp, frame.odometry_pose});
  last_keyframe_odometry_ = frame.odometry_pose;

  ++keyframes_since_opt_;
  if (should_optimize(graph_.num_nodes(), keyframes_since_opt_,
                      params_.solver.cadence_l)) {
    run_optimization(&batch);
  }

  events_.insert(events_.end(), batch.begin(), batch.end());
  return batch;
}

void LoopClosurePipeline::run_optimization(std::vector<PipelineEvent>* batch) {
  Optimized event;
  event.report = optimize(graph_, params_.solver);
  batch->emplace_back(std::move(event));
  keyframes_since_opt_ = 0;
}

std::optional<SolveReport> LoopClosurePipeline::finalize() {
  if (graph_.num_nodes() == 0) return std::nullopt;
  std::vector<PipelineEvent> batch;
  run_optimization(&batch);
  events_.insert(events_.end(), batch.begin(), batch.end());
  return std::get<Optimized>(batch.back()).report;
}

Trajectory LoopClosurePipeline::trajectory() const {
  Trajectory out;
  out.reserve(graph_.nodes().size());
  for (const GraphNode& node : graph_.nodes()) {
    out.push_back(TrajectoryEntry{node.timestamp, node.estimate});
  }
  return out;
}

Trajectory LoopClosurePipeline::odometry_trajectory() const {
  return odometry_at_keyframes_;
}

}  // namespace tvpgo
