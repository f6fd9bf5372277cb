#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tvpgo/config.hpp"
#include "tvpgo/optimizer.hpp"
#include "tvpgo/pose_graph.hpp"
#include "tvpgo/retrieval.hpp"
#include "tvpgo/trajectory.hpp"
#include "tvpgo/two_view.hpp"

namespace tvpgo {

// ---------------------------------------------------------------------------
// Keyframe selection

struct KeyframePolicy {
  double kf_trans_threshold = 1.0;  // meters
  double kf_rot_threshold = 0.25;   // radians

  void validate() const;
};

// True when the motion since the last keyframe reaches either threshold.
// The caller treats the very first frame as a keyframe unconditionally.
bool select_keyframe(const Pose& current, const Pose& last_keyframe,
                     const KeyframePolicy& policy);

// ---------------------------------------------------------------------------
// Loop-closure candidate filters

struct FilterParams {
  int min_matches = 20;
  int min_inliers = 12;
  double min_inlier_ratio = 0.3;
  double consistency_gate_trans = 5.0;  // meters
  double consistency_gate_rot = 0.35;   // radians
  double pure_rotation_ratio = 0.9;     // of essential inliers

  void validate() const;
};

// Enough raw visual overlap to bother with geometry.
bool filter_matching_feasibility(int match_count, const FilterParams& params);

// The robust solver found a believable model: absolute inlier count and
// inlier fraction of the sample both above their floors.
bool filter_geometric_feasibility(int solver_inliers, int sample_size,
                                  const FilterParams& params);

// The measured edge agrees with the current optimized estimates of its
// endpoints. Absolute edges compare full relative poses; scale-free edges
// compare the rotation and the angle between measured and expected
// translation direction (both against consistency_gate_rot). Only loop
// edges are meaningful here; other kinds raise ParameterError.
bool filter_graph_consistency(const Edge& candidate, const PoseGraph& graph,
                              const FilterParams& params);

// Best-fit rotation r minimizing sum ||a_i - r * b_i||^2 over unit bearings
// (zero-baseline model). Fewer than 2 pairs return identity.
Rotation fit_rotation_only(const std::vector<Vector3>& bearings_a,
                           const std::vector<Vector3>& bearings_b);

// How many pairs the zero-baseline model explains to within
// angular_threshold radians.
int count_rotation_only_inliers(const std::vector<Vector3>& bearings_a,
                                const std::vector<Vector3>& bearings_b,
                                double angular_threshold);

// A pair is pure rotation (translation direction unobservable, so the
// scale-free edge is dropped) when the rotation-only model explains at
// least pure_rotation_ratio of the essential-matrix inliers. Zero inliers
// count as pure rotation vacuously.
bool detect_pure_rotation(int essential_inliers, int rotation_only_inliers,
                          const FilterParams& params);

// ---------------------------------------------------------------------------
// Pipeline events

enum class EdgeKind { kScaleFree, kAbsolute };
enum class RejectionStage { kMatching, kGeometric, kConsistency, kPureRotation };

std::string to_string(EdgeKind kind);
std::string to_string(RejectionStage stage);

struct KeyframeAccepted {
  NodeId node = 0;
  double timestamp = 0.0;
};
struct CandidateProposed {
  NodeId query = 0;
  NodeId candidate = 0;
};
struct CandidateRejected {
  NodeId query = 0;
  NodeId candidate = 0;
  RejectionStage stage = RejectionStage::kMatching;
  std::optional<EdgeKind> kind;  // empty when the whole pair was rejected
};
struct EdgeAdded {
  NodeId query = 0;
  NodeId candidate = 0;
  EdgeKind kind = EdgeKind::kScaleFree;
};
struct Optimized {
  SolveReport report;
};

using PipelineEvent = std::variant<KeyframeAccepted, CandidateProposed,
                                   CandidateRejected, EdgeAdded, Optimized>;

// One event per line; numbers in shortest round-trippable form. The reader
// restores everything except the optimizer cost trace, which the trace
// format summarizes as initial/final cost.
void write_events(std::ostream& out, const std::vector<PipelineEvent>& events);
std::vector<PipelineEvent> read_events(std::istream& in);

// ---------------------------------------------------------------------------
// Frame input and retained observations

// Raw per-frame measurements handed to process_frame. Depth and point maps
// may be empty (0x0); keypoints without any lift source simply produce no
// 2D-3D correspondences.
struct FrameObservation {
  GlobalDescriptor descriptor;
  std::vector<Vector2> keypoints;
  std::vector<std::int64_t> landmark_ids;  // parallel to keypoints
  DepthMap depth;
  PointMap points;
};

struct FrameInput {
  double timestamp = 0.0;
  Pose odometry_pose;
  CameraIntrinsics intrinsics;
  FrameObservation observation;
};

// Compact per-keyframe record the pipeline keeps for matching against
// later queries; the dense maps are reduced to lifted 3D points here.
struct KeyframeObservation {
  NodeId id = 0;
  double timestamp = 0.0;
  CameraIntrinsics intrinsics;
  GlobalDescriptor descriptor;
  std::vector<Vector2> keypoints;
  std::vector<std::int64_t> landmark_ids;
  std::vector<LiftedPoint> lifted;  // camera-frame 3D, by keypoint index
};

// Reduces raw frame input to the compact record the pipeline retains:
// keypoints are lifted through the depth map when present, otherwise
// through the point map, otherwise not at all.
KeyframeObservation reduce_observation(NodeId id, const FrameInput& frame,
                                       double max_lift_depth);

// Matches between a query keyframe and an older one:
//   corr_2d2d: pixel_a in the query image, pixel_b in the older image;
//   corr_2d3d: point_3d in the older camera frame, pixel in the query image.
struct MatchSet {
  std::vector<Correspondence2D2D> corr_2d2d;
  std::vector<Correspondence2D3D> corr_2d3d;
};

using Matcher = std::function<MatchSet(const KeyframeObservation& query,
                                       const KeyframeObservation& older)>;

// Optional hook appending extra candidate ids after retrieval (used by the
// adversarial-robustness experiments).
using CandidateInjector = std::function<std::vector<NodeId>(
    NodeId query, const std::vector<GraphNode>& keyframes)>;

// ---------------------------------------------------------------------------
// Pipeline parameters

enum class EdgeVariant { kScaleFree, kAbsolute, kBoth };

EdgeVariant parse_edge_variant(const std::string& name);
std::string to_string(EdgeVariant variant);

struct PipelineParams {
  EdgeVariant variant = EdgeVariant::kBoth;
  KeyframePolicy keyframes;
  FilterParams filters;
  RetrievalParams retrieval;
  SolverParams solver;
  RansacParams essential_ransac;  // angular threshold, radians
  RansacParams pnp_ransac;        // pixel threshold

  bool filters_enabled = true;    // the three candidate filters above
  bool retrieval_enabled = true;
  double max_lift_depth = 60.0;   // meters

  // Diagonal information weights (inverse variances).
  double odom_info_rot = 400.0;
  double odom_info_trans = 100.0;
  double abs_info_rot = 100.0;
  double abs_info_trans = 25.0;
  double sf_info_rot = 100.0;
  double sf_info_dir = 100.0;
  double prior_info = 1e8;

  PipelineParams() { pnp_ransac.inlier_threshold = 1.0; }

  void validate() const;
};

// Reads every pipeline key from a parsed config, falling back to the
// defaults above. Does not call require_all_consumed (the caller may share
// the file with scenario keys).
PipelineParams pipeline_params_from_config(const Config& config);

// ---------------------------------------------------------------------------
// Edge construction for one candidate pair

struct BuiltEdges {
  std::vector<Edge> edges;
  std::vector<PipelineEvent> events;
};

// Runs the filter cascade and two-view solvers for the pair
// (query, candidate) and returns the surviving loop edges plus the event
// records of every decision. Estimation failures (no consensus, degenerate
// or ambiguous geometry) become geometric rejections, never exceptions.
BuiltEdges build_edges(NodeId query, NodeId candidate, const MatchSet& matches,
                       const CameraIntrinsics& query_intrinsics,
                       const CameraIntrinsics& candidate_intrinsics,
                       const PoseGraph& graph, const PipelineParams& params);

// ---------------------------------------------------------------------------
// The pipeline

class LoopClosurePipeline {
 public:
  LoopClosurePipeline(PipelineParams params, Matcher matcher,
                      CandidateInjector injector = nullptr);

  // Feeds one frame. Returns the events recorded during this call (also
  // appended to events()). Non-keyframes return an empty list. Timestamps
  // must be strictly increasing.
  std::vector<PipelineEvent> process_frame(const FrameInput& frame);

  // One final optimization pass so the trajectory reflects every edge
  // added after the last cadence-triggered run. No-op on an empty pipeline.
  std::optional<SolveReport> finalize();

  const PoseGraph& graph() const { return graph_; }
  const std::vector<PipelineEvent>& events() const { return events_; }
  const std::vector<KeyframeObservation>& observations() const {
    return observations_;
  }

  // Current keyframe estimates / the odometry input at those keyframes.
  Trajectory trajectory() const;
  Trajectory odometry_trajectory() const;

 private:
  void run_optimization(std::vector<PipelineEvent>* batch);
  KeyframeObservation make_observation(NodeId id, const FrameInput& frame) const;

  PipelineParams params_;
  Matcher matcher_;
  CandidateInjector injector_;

  PoseGraph graph_;
  DescriptorIndex index_;
  std::vector<KeyframeObservation> observations_;
  std::vector<TrajectoryEntry> odometry_at_keyframes_;
  std::vector<PipelineEvent> events_;

  bool has_frames_ = false;
  double last_timestamp_ = 0.0;
  Pose last_keyframe_odometry_;
  bool any_loop_edge_ = false;
  std::int64_t keyframes_since_opt_ = 0;
};

}  // namespace tvpgo
