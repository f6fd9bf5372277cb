#include "tvpgo/optimizer.hpp"

#include <cmath>
#include <cstdio>
#include <unordered_map>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

namespace tvpgo {

namespace {

struct EdgeTerm {
  Vector6 residual;
  Matrix6 info;
  bool robust = false;
  NodeId from = 0;
  NodeId to = 0;
};

EdgeTerm edge_term(const PoseGraph& graph, const Edge& edge) {
  return std::visit(
      [&](const auto& e) -> EdgeTerm {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, PriorEdge>) {
          return {residual_prior(graph.node(e.node).estimate, e.anchor),
                  e.info.matrix(), false, e.node, e.node};
        } else if constexpr (std::is_same_v<T, ScaleFreeLoopEdge>) {
          const Pose rel = relative_pose(graph.node(e.from).estimate,
                                         graph.node(e.to).estimate);
          return {residual_scale_free(rel, e), e.info.matrix(), e.robust,
                  e.from, e.to};
        } else if constexpr (std::is_same_v<T, AbsoluteLoopEdge>) {
          const Pose rel = relative_pose(graph.node(e.from).estimate,
                                         graph.node(e.to).estimate);
          return {residual_absolute(rel, e.measurement), e.info.matrix(),
                  e.robust, e.from, e.to};
        } else {
          const Pose rel = relative_pose(graph.node(e.from).estimate,
                                         graph.node(e.to).estimate);
          return {residual_absolute(rel, e.measurement), e.info.matrix(),
                  false, e.from, e.to};
        }
      },
      edge);
}

}  // namespace

void SolverParams::validate() const {
  if (max_iterations <= 0 || cost_tolerance <= 0.0 ||
      step_tolerance <= 0.0 || initial_damping <= 0.0 || cadence_l < 1 ||
      robust_loss_scale <= 0.0) {
    throw ParameterError("solver parameters must all be positive");
  }
}

std::string SolveReport::to_table() const {
  char buf[128];
  std::string out;
  std::snprintf(buf, sizeof(buf), "initial_cost %.12g\n", initial_cost);
  out += buf;
  std::snprintf(buf, sizeof(buf), "final_cost %.12g\n", final_cost);
  out += buf;
  std::snprintf(buf, sizeof(buf), "iterations %d\n", iterations);
  out += buf;
  out += converged ? "converged true\n" : "converged false\n";
  out += "step cost\n";
  for (std::size_t i = 0; i < cost_trace.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu %.12g\n", i, cost_trace[i]);
    out += buf;
  }
  return out;
}

double total_cost(const PoseGraph& graph, const SolverParams& params) {
  double cost = 0.0;
  std::size_t idx = 0;
  for (const Edge& edge : graph.edges()) {
    const EdgeTerm term = edge_term(graph, edge);
    const double s = term.residual.dot(term.info * term.residual);
    const double contribution =
        (term.robust && params.use_robust_loss)
            ? cauchy_weight(s, params.robust_loss_scale).loss
            : s;
    if (!std::isfinite(contribution)) {
      throw NumericalError("non-finite cost at edge " + std::to_string(idx) +
                           " (" + std::to_string(term.from) + " -> " +
                           std::to_string(term.to) + ")");
    }
    cost += contribution;
    ++idx;
  }
  return 0.5 * cost;
}

LinearSystem linearize(const PoseGraph& graph, const SolverParams& params) {
  params.validate();
  if (!graph.has_prior()) {
    throw StructuralError(
        "gauge deficiency: graph has no prior edge to fix the frame");
  }

  const std::size_t n = graph.num_nodes();
  LinearSystem sys;
  sys.order.reserve(n);
  std::unordered_map<NodeId, int> block;
  for (const GraphNode& node : graph.nodes()) {
    block[node.id] = static_cast<int>(sys.order.size());
    sys.order.push_back(node.id);
  }

  sys.b = Eigen::VectorXd::Zero(6 * n);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(graph.num_edges() * 144);

  const auto add_block = [&](int bi, int bj, const Matrix6& m) {
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c)
        triplets.emplace_back(6 * bi + r, 6 * bj + c, m(r, c));
  };

  for (const Edge& edge : graph.edges()) {
    const EdgeLinearization lin = edge_jacobians(graph, edge);
    double w = 1.0;
    if (lin.robust && params.use_robust_loss) {
      const double s = lin.residual.dot(lin.info * lin.residual);
      w = cauchy_weight(s, params.robust_loss_scale).weight;
    }
    sys.weights.push_back(w);

    const int bi = block.at(lin.from);
    const Matrix6 wi = w * lin.info;
    add_block(bi, bi, lin.j_from.transpose() * wi * lin.j_from);
    sys.b.segment<6>(6 * bi) -= lin.j_from.transpose() * (wi * lin.residual);
    if (lin.has_to) {
      const int bj = block.at(lin.to);
      add_block(bj, bj, lin.j_to.transpose() * wi * lin.j_to);
      add_block(bi, bj, lin.j_from.transpose() * wi * lin.j_to);
      add_block(bj, bi, lin.j_to.transpose() * wi * lin.j_from);
      sys.b.segment<6>(6 * bj) -= lin.j_to.transpose() * (wi * lin.residual);
    }
  }

  sys.h.resize(6 * n, 6 * n);
  sys.h.setFromTriplets(triplets.begin(), triplets.end());
  return sys;
}

namespace {

// Dense solve for small graphs, sparse Cholesky (AMD ordering) otherwise.
// Returns false when factorization fails; the caller treats that like a
// rejected step and raises the damping.
bool solve_damped(const LinearSystem& sys, double lambda,
                  std::size_t num_nodes, Eigen::VectorXd* delta) {
  Eigen::VectorXd diag = sys.h.diagonal().cwiseMax(1e-12);
  if (num_nodes <= 50) {
    Eigen::MatrixXd h = Eigen::MatrixXd(sys.h);
    h.diagonal() += lambda * diag;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    if (ldlt.info() != Eigen::Success) return false;
    *delta = ldlt.solve(sys.b);
  } else {
    Eigen::SparseMatrix<double> h = sys.h;
    for (int k = 0; k < h.rows(); ++k) h.coeffRef(k, k) += lambda * diag(k);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(h);
    if (ldlt.info() != Eigen::Success) return false;
    *delta = ldlt.solve(sys.b);
  }
  return delta->allFinite();
}

}  // namespace

SolveReport optimize(PoseGraph& graph, const SolverParams& params) {
  params.validate();
  if (!graph.has_prior()) {
    throw StructuralError(
        "gauge deficiency: graph has no prior edge to fix the frame");
  }

  double cost = total_cost(graph, params);
  SolveReport report;
  report.initial_cost = cost;
  report.cost_trace.push_back(cost);

  double lambda = params.initial_damping;
  int iter = 0;
  bool converged = false;

  while (iter < params.max_iterations && !converged) {
    const LinearSystem sys = linearize(graph, params);

    // Inner damping loop: re-solve with larger lambda until a step is
    // accepted, the step shrinks below tolerance, or iterations run out.
    while (iter < params.max_iterations) {
      ++iter;
      Eigen::VectorXd delta;
      if (!solve_damped(sys, lambda, graph.num_nodes(), &delta)) {
        lambda *= 10.0;
        continue;
      }
      if (delta.norm() < params.step_tolerance) {
        converged = true;  // checked before touching any estimate
        break;
      }

      std::vector<Pose> backup;
      backup.reserve(graph.num_nodes());
      for (std::size_t k = 0; k < sys.order.size(); ++k) {
        GraphNode& node = graph.node_mutable(sys.order[k]);
        backup.push_back(node.estimate);
        node.estimate =
            node.estimate * pose_exp(delta.segment<6>(6 * static_cast<int>(k)));
      }
      const double new_cost = total_cost(graph, params);

      if (new_cost < cost) {
        lambda *= 0.5;
        const double decrease = cost - new_cost;
        cost = new_cost;
        report.cost_trace.push_back(cost);
        if (decrease <= params.cost_tolerance * std::max(cost, 1e-300)) {
          converged = true;
        }
        break;
      }

      // Rejected: restore estimates and damp harder.
      for (std::size_t k = 0; k < sys.order.size(); ++k) {
        graph.node_mutable(sys.order[k]).estimate = backup[k];
      }
      lambda *= 10.0;
    }
  }

  report.final_cost = cost;
  report.iterations = iter;
  report.converged = converged;
  return report;
}

bool should_optimize(std::int64_t total_keyframes,
                     std::int64_t keyframes_since_last_opt, int l) {
  if (total_keyframes < 1 || l < 1) {
    throw ParameterError("should_optimize needs N >= 1 and l >= 1");
  }
  const std::int64_t interval = std::max<std::int64_t>(
      1, total_keyframes / l);
  return keyframes_since_last_opt >= interval;
}

}  // namespace tvpgo
