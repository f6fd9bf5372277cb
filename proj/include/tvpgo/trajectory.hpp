#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tvpgo/errors.hpp"
#include "tvpgo/pose_graph.hpp"
#include "tvpgo/se3.hpp"

namespace tvpgo {

struct TrajectoryEntry {
  double timestamp = 0.0;
  Pose pose;
};

using Trajectory = std::vector<TrajectoryEntry>;

// TUM format: one `timestamp tx ty tz qx qy qz qw` record per line,
// whitespace separated, '#' starts a comment. Values are written in
// shortest round-trippable form, so write -> read -> write is byte-stable.
void write_tum(std::ostream& out, const Trajectory& trajectory);
void write_tum_file(const std::string& path, const Trajectory& trajectory);
Trajectory read_tum(std::istream& in);
Trajectory read_tum_file(const std::string& path);

// KITTI format: 12 row-major entries of the 3x4 [R|t] matrix per line.
// The format carries no timestamps; reading assigns 0, 1, 2, ...
void write_kitti(std::ostream& out, const Trajectory& trajectory);
void write_kitti_file(const std::string& path, const Trajectory& trajectory);
Trajectory read_kitti(std::istream& in);
Trajectory read_kitti_file(const std::string& path);

// Pairs of (estimated index, reference index) associated by nearest
// timestamp within max_dt seconds; each reference entry is used at most
// once, scanning the estimate in order.
std::vector<std::pair<std::size_t, std::size_t>> associate_timestamps(
    const Trajectory& estimated, const Trajectory& reference,
    double max_dt = 0.02);

// Rigid transform G (no scale) minimizing sum ||G * p_est - p_ref||^2 over
// associated positions: rotation from the SVD of the cross-covariance,
// translation from the centroids. Fewer than 3 associations or a collinear
// estimate cloud raises EvaluationError.
Pose align_6dof(const Trajectory& estimated, const Trajectory& reference,
                double max_dt = 0.02);

// RMSE of translational residuals after align_6dof.
double rmse_ate(const Trajectory& estimated, const Trajectory& reference,
                double max_dt = 0.02);

// 100 * (baseline - ate) / baseline; baseline must be positive.
double percent_decrease(double baseline_ate, double ate);

struct EdgeErrors {
  double trans_error = 0.0;  // meters (absolute) or radians (scale-free)
  double rot_error = 0.0;    // radians
};

// Measured edge vs the relative pose implied by ground truth at its
// endpoints. For scale-free edges the translational error is the angle
// between the measured direction and the ground-truth direction ray.
EdgeErrors lc_edge_errors(const AbsoluteLoopEdge& edge, const Pose& gt_from,
                          const Pose& gt_to);
EdgeErrors lc_edge_errors(const ScaleFreeLoopEdge& edge, const Pose& gt_from,
                          const Pose& gt_to);

}  // namespace tvpgo
