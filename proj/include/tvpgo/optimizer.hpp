#pragma once

#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "tvpgo/pose_graph.hpp"

namespace tvpgo {

struct SolverParams {
  int max_iterations = 50;
  double cost_tolerance = 1e-12;  // relative decrease per accepted step
  double step_tolerance = 1e-12;  // ||delta|| below which we stop
  double initial_damping = 1e-4;
  int cadence_l = 10;             // "optimize every max(1, floor(N/l))"
  bool use_robust_loss = true;    // Cauchy on loop-closure edges
  double robust_loss_scale = 1.0;

  /// Throws ParameterError unless every field is positive (cadence_l >= 1).
  void validate() const;
};

struct SolveReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> cost_trace;  // initial cost, then each accepted cost

  /// Plain-text table for the CLI --report flag.
  std::string to_table() const;
};

/// Gauss-Newton normal equations of the robust objective at the current
/// estimates. Block row/column k corresponds to node order[k]; Cauchy
/// weights appear in `weights`, aligned with graph.edges() (1 for edges the
/// robust loss does not apply to).
struct LinearSystem {
  Eigen::SparseMatrix<double> h;  // sum of w J^T Sigma J
  Eigen::VectorXd b;              // sum of -w J^T Sigma r
  std::vector<double> weights;
  std::vector<NodeId> order;
};

/// Robust total cost: (1/2) * [sum of r^T Sigma r over prior/odometry edges
/// + sum of rho(r^T Sigma r) over loop edges] (rho only if enabled).
/// Throws NumericalError naming the edge if any term is non-finite.
double total_cost(const PoseGraph& graph, const SolverParams& params);

/// Throws StructuralError when the graph lacks a prior (gauge deficiency).
LinearSystem linearize(const PoseGraph& graph, const SolverParams& params);

/// Levenberg-Marquardt over all node poses with right-multiplicative
/// retraction; mutates the graph estimates in place (warm start = current
/// estimates). A step is accepted only if the robust cost strictly drops,
/// and the step-size test runs before any estimate is touched, so a run
/// that cannot improve the graph leaves it bit-identical.
SolveReport optimize(PoseGraph& graph, const SolverParams& params);

/// Adaptive cadence: optimize when the count of keyframes added since the
/// last run reaches max(1, floor(total_keyframes / l)).
bool should_optimize(std::int64_t total_keyframes,
                     std::int64_t keyframes_since_last_opt, int l);

}  // namespace tvpgo
