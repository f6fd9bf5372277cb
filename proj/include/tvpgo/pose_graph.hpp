#pragma once

#include <cstdint>
#include <unordered_map>
#include <variant>
#include <vector>

#include "tvpgo/errors.hpp"
#include "tvpgo/se3.hpp"

namespace tvpgo {

/// Monotonically increasing keyframe index.
using NodeId = std::int64_t;

struct GraphNode {
  NodeId id = 0;
  Pose estimate;
  double timestamp = 0.0;  // seconds
};

/// 6x6 symmetric positive-definite residual weight. Constructed from a
/// diagonal or a full matrix; both paths validate positive definiteness.
class InformationMatrix {
 public:
  InformationMatrix() : m_(Matrix6::Identity()) {}

  static InformationMatrix identity() { return InformationMatrix(); }
  static InformationMatrix from_diagonal(const Vector6& d);
  static InformationMatrix from_matrix(const Matrix6& m);

  const Matrix6& matrix() const { return m_; }

 private:
  Matrix6 m_;
};

/// Anchors one node to a fixed world pose; removes the gauge freedom.
struct PriorEdge {
  NodeId node = 0;
  Pose anchor;
  InformationMatrix info;
};

/// Relative transform between consecutive keyframes, from odometry.
struct OdometryEdge {
  NodeId from = 0;
  NodeId to = 0;
  Pose measurement;  // pose of `to` in the frame of `from`
  InformationMatrix info;
};

/// Loop closure with metric scale (e.g. recovered through depth lifting).
struct AbsoluteLoopEdge {
  NodeId from = 0;
  NodeId to = 0;
  Pose measurement;
  InformationMatrix info;
  bool robust = true;
};

/// Loop closure from epipolar geometry alone: full rotation, but only the
/// direction of the baseline. The residual compares unit vectors, so any
/// positive scale along the ray is cost-free.
struct ScaleFreeLoopEdge {
  NodeId from = 0;
  NodeId to = 0;
  Rotation rotation;
  Vector3 direction = Vector3::UnitX();  // unit norm
  InformationMatrix info;
  bool robust = true;
};

using Edge =
    std::variant<PriorEdge, OdometryEdge, AbsoluteLoopEdge, ScaleFreeLoopEdge>;

/// Keyframe trajectory plus its constraints. No landmarks: odometry chain,
/// one prior, and pairwise loop-closure edges only.
class PoseGraph {
 public:
  /// Node ids must strictly increase; duplicates raise StructuralError.
  void add_node(const GraphNode& node);

  /// Endpoints must already exist. A second prior, a non-consecutive
  /// odometry edge, or a loop edge between adjacent keyframes raise
  /// StructuralError; a non-unit scale-free direction raises ParameterError.
  void add_edge(const Edge& edge);

  bool has_node(NodeId id) const { return index_.count(id) > 0; }
  const GraphNode& node(NodeId id) const;
  GraphNode& node_mutable(NodeId id);

  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  bool has_prior() const { return has_prior_; }

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_edges() const { return edges_.size(); }

 private:
  std::vector<GraphNode> nodes_;
  std::vector<Edge> edges_;
  std::unordered_map<NodeId, std::size_t> index_;
  bool has_prior_ = false;
};

/// r_A = pose_log(measured^-1 * expected); zero iff the two poses agree.
/// Component order follows Twist: rotation first, translation second.
Vector6 residual_absolute(const Pose& expected, const Pose& measured);

/// t / ||t||, or the zero vector when ||t|| = 0.
Vector3 normalize_translation(const Vector3& t);

/// Rotation block: rot_log(edge.rotation^-1 * expected.rotation).
/// Translation block: edge.direction - normalize_translation(expected.t).
Vector6 residual_scale_free(const Pose& expected, const ScaleFreeLoopEdge& edge);

/// Prior residual: residual_absolute(estimate, anchor).
Vector6 residual_prior(const Pose& estimate, const Pose& anchor);

struct CauchyResult {
  double loss;    // rho(s)
  double weight;  // rho'(s), the IRLS weight
};

/// Cauchy robust loss rho(s) = (c^2/2) ln(1 + s/c^2) on a squared error s.
/// Throws ParameterError for nonpositive scale c.
CauchyResult cauchy_weight(double squared_error, double scale);

enum class JacobianBackend { analytic, numeric };

/// Residual and per-endpoint 6x6 Jacobians of one edge at the current node
/// estimates, for right-multiplicative perturbations X <- X*exp(xi).
/// For a PriorEdge only the `from` slot is populated.
struct EdgeLinearization {
  Vector6 residual = Vector6::Zero();
  NodeId from = 0;
  NodeId to = 0;
  Matrix6 j_from = Matrix6::Zero();
  Matrix6 j_to = Matrix6::Zero();
  bool has_to = false;        // false for the prior
  bool robust = false;        // Cauchy applies (loop edges only)
  Matrix6 info = Matrix6::Identity();
};

/// A scale-free edge whose expected baseline is shorter than 1e-6 m keeps
/// zero direction-row Jacobians (the normalization gradient is undefined
/// there), so it contributes rotation information only.
EdgeLinearization edge_jacobians(
    const PoseGraph& graph, const Edge& edge,
    JacobianBackend backend = JacobianBackend::analytic);

}  // namespace tvpgo
