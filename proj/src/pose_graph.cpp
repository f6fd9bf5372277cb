#include "tvpgo/pose_graph.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>

namespace tvpgo {

namespace {
constexpr double kMinBaseline = 1e-6;  // scale-free Jacobian degeneracy

void require_spd(const Matrix6& m) {
  if ((m - m.transpose()).norm() > 1e-9 * (1.0 + m.norm())) {
    throw ParameterError("information matrix is not symmetric");
  }
  Eigen::LLT<Matrix6> llt(m);
  if (llt.info() != Eigen::Success) {
    throw ParameterError("information matrix is not positive definite");
  }
}
}  // namespace

InformationMatrix InformationMatrix::from_diagonal(const Vector6& d) {
  if ((d.array() <= 0.0).any()) {
    throw ParameterError("information diagonal has nonpositive entries");
  }
  InformationMatrix info;
  info.m_ = d.asDiagonal();
  return info;
}

InformationMatrix InformationMatrix::from_matrix(const Matrix6& m) {
  require_spd(m);
  InformationMatrix info;
  info.m_ = 0.5 * (m + m.transpose());  // exact symmetry for downstream math
  return info;
}

void PoseGraph::add_node(const GraphNode& node) {
  if (has_node(node.id)) {
    throw StructuralError("duplicate node id " + std::to_string(node.id));
  }
  if (!nodes_.empty() && node.id <= nodes_.back().id) {
    throw StructuralError("node ids must strictly increase (got " +
                          std::to_string(node.id) + " after " +
                          std::to_string(nodes_.back().id) + ")");
  }
  index_[node.id] = nodes_.size();
  nodes_.push_back(node);
}

void PoseGraph::add_edge(const Edge& edge) {
  const auto require = [this](NodeId id) {
    if (!has_node(id)) {
      throw StructuralError("edge references missing node " +
                            std::to_string(id));
    }
  };
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, PriorEdge>) {
          require(e.node);
          if (has_prior_) {
            throw StructuralError("graph already has a prior edge");
          }
          has_prior_ = true;
        } else if constexpr (std::is_same_v<T, OdometryEdge>) {
          require(e.from);
          require(e.to);
          if (e.to != e.from + 1) {
            throw StructuralError(
                "odometry edge must connect consecutive keyframes");
          }
        } else {
          require(e.from);
          require(e.to);
          if (std::abs(e.to - e.from) < 2) {
            throw StructuralError(
                "loop edge endpoints must be at least two keyframes apart");
          }
          if constexpr (std::is_same_v<T, ScaleFreeLoopEdge>) {
            if (std::abs(e.direction.norm() - 1.0) > 1e-9) {
              throw ParameterError(
                  "scale-free edge direction must be unit norm");
            }
          }
        }
      },
      edge);
  edges_.push_back(edge);
}

const GraphNode& PoseGraph::node(NodeId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) {
    throw StructuralError("unknown node id " + std::to_string(id));
  }
  return nodes_[it->second];
}

GraphNode& PoseGraph::node_mutable(NodeId id) {
  auto it = index_.find(id);
  if (it == index_.end()) {
    throw StructuralError("unknown node id " + std::to_string(id));
  }
  return nodes_[it->second];
}

Vector6 residual_absolute(const Pose& expected, const Pose& measured) {
  return pose_log(measured.inverse() * expected);
}

Vector3 normalize_translation(const Vector3& t) {
  const double n = t.norm();
  if (n == 0.0) return Vector3::Zero();
  return t / n;
}

Vector6 residual_scale_free(const Pose& expected,
                            const ScaleFreeLoopEdge& edge) {
  return make_twist(
      rot_log(edge.rotation.inverse() * expected.rotation),
      edge.direction - normalize_translation(expected.translation));
}

Vector6 residual_prior(const Pose& estimate, const Pose& anchor) {
  return residual_absolute(estimate, anchor);
}

CauchyResult cauchy_weight(double squared_error, double scale) {
  if (scale <= 0.0) {
    throw ParameterError("cauchy scale must be positive");
  }
  const double c2 = scale * scale;
  const double ratio = 1.0 + squared_error / c2;
  return CauchyResult{0.5 * c2 * std::log(ratio), 0.5 / ratio};
}

namespace {

// Residual of one edge given explicit endpoint estimates (prior uses only
// the first). Shared by the analytic path and the finite-difference backend.
Vector6 eval_residual(const Edge& edge, const Pose& from_est,
                      const Pose& to_est) {
  return std::visit(
      [&](const auto& e) -> Vector6 {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, PriorEdge>) {
          return residual_prior(from_est, e.anchor);
        } else if constexpr (std::is_same_v<T, ScaleFreeLoopEdge>) {
          return residual_scale_free(relative_pose(from_est, to_est), e);
        } else {
          return residual_absolute(relative_pose(from_est, to_est),
                                   e.measurement);
        }
      },
      edge);
}

EdgeLinearization analytic_jacobians(const PoseGraph& graph,
                                     const Edge& edge) {
  EdgeLinearization out;
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        out.info = e.info.matrix();
        if constexpr (std::is_same_v<T, PriorEdge>) {
          out.from = e.node;
          out.to = e.node;
          const Pose& x = graph.node(e.node).estimate;
          out.residual = residual_prior(x, e.anchor);
          out.j_from = se3_right_jacobian_inverse(out.residual);
        } else if constexpr (std::is_same_v<T, ScaleFreeLoopEdge>) {
          out.from = e.from;
          out.to = e.to;
          out.has_to = true;
          out.robust = e.robust;
          const Pose t = relative_pose(graph.node(e.from).estimate,
                                       graph.node(e.to).estimate);
          out.residual = residual_scale_free(t, e);

          const Vector3 r_rot = out.residual.head<3>();
          const Matrix3 jri = so3_right_jacobian_inverse(r_rot);
          const Matrix3 rel_rot = t.rotation.matrix();

          out.j_to.topLeftCorner<3, 3>() = jri;
          out.j_from.topLeftCorner<3, 3>() = -jri * rel_rot.transpose();

          const Vector3 that = t.translation;
          const double norm = that.norm();
          if (norm >= kMinBaseline) {
            const Vector3 n = that / norm;
            // d(t/||t||)/dt, negated because the residual is d - t/||t||.
            const Matrix3 proj =
                (Matrix3::Identity() - n * n.transpose()) / norm;
            out.j_to.bottomRightCorner<3, 3>() = -proj * rel_rot;
            out.j_from.bottomLeftCorner<3, 3>() = -proj * skew(that);
            out.j_from.bottomRightCorner<3, 3>() = proj;
          }
          // Below kMinBaseline the normalization gradient is undefined; the
          // direction rows stay zero, so the edge contributes rotation
          // information only until the endpoints separate again.
        } else {
          out.from = e.from;
          out.to = e.to;
          out.has_to = true;
          if constexpr (std::is_same_v<T, AbsoluteLoopEdge>) {
            out.robust = e.robust;
          }
          const Pose t = relative_pose(graph.node(e.from).estimate,
                                       graph.node(e.to).estimate);
          out.residual = residual_absolute(t, e.measurement);
          out.j_to = se3_right_jacobian_inverse(out.residual);
          out.j_from = -out.j_to * adjoint(t.inverse());
        }
      },
      edge);
  return out;
}

EdgeLinearization numeric_jacobians(const PoseGraph& graph, const Edge& edge) {
  EdgeLinearization out = analytic_jacobians(graph, edge);

  const Pose from_est = graph.node(out.from).estimate;
  const Pose to_est = graph.node(out.to).estimate;
  const double h = 1e-6;

  for (int k = 0; k < 6; ++k) {
    Twist d = Twist::Zero();
    d(k) = h;
    const Pose plus = from_est * pose_exp(d);
    const Pose minus = from_est * pose_exp(-d);
    out.j_from.col(k) =
        (eval_residual(edge, plus, to_est) -
         eval_residual(edge, minus, to_est)) / (2.0 * h);
    if (out.has_to) {
      out.j_to.col(k) =
          (eval_residual(edge, from_est, to_est * pose_exp(d)) -
           eval_residual(edge, from_est, to_est * pose_exp(-d))) / (2.0 * h);
    }
  }
  if (!out.has_to) out.j_to.setZero();
  return out;
}

}  // namespace

EdgeLinearization edge_jacobians(const PoseGraph& graph, const Edge& edge,
                                 JacobianBackend backend) {
  if (backend == JacobianBackend::numeric) {
    return numeric_jacobians(graph, edge);
  }
  return analytic_jacobians(graph, edge);
}

}  // namespace tvpgo
