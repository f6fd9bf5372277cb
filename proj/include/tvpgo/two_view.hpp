#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tvpgo/errors.hpp"
#include "tvpgo/se3.hpp"

namespace tvpgo {

using Vector2 = Eigen::Vector2d;

/// Pinhole intrinsics, zero skew.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Matrix3 matrix() const;

  /// Throws ParameterError unless fx, fy > 0.
  void validate() const;
};

struct Correspondence2D2D {
  Vector2 pixel_a = Vector2::Zero();
  Vector2 pixel_b = Vector2::Zero();
};

/// 3D point in the frame of one camera paired with its pixel in the other.
struct Correspondence2D3D {
  Vector3 point_3d = Vector3::Zero();
  Vector2 pixel = Vector2::Zero();
};

/// Row-major grid of metric depths; NaN marks invalid cells.
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  bool in_bounds(int row, int col) const {
    return row >= 0 && row < height_ && col >= 0 && col < width_;
  }
  double at(int row, int col) const { return data_[row * width_ + col]; }
  bool is_valid(int row, int col) const;

  /// Throws ParameterError for nonpositive depth (NaN clears the cell).
  void set(int row, int col, double depth);

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Row-major grid of camera-frame 3D points; NaN cells are invalid.
class PointMap {
 public:
  PointMap() = default;
  PointMap(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  bool in_bounds(int row, int col) const {
    return row >= 0 && row < height_ && col >= 0 && col < width_;
  }
  const Vector3& at(int row, int col) const {
    return data_[row * width_ + col];
  }
  bool is_valid(int row, int col) const;
  void set(int row, int col, const Vector3& point);

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<Vector3> data_;
};

struct RansacParams {
  int max_iterations = 500;
  /// Radians of epipolar angular error for the essential matrix, pixels of
  /// reprojection error for PnP.
  double inlier_threshold = 1e-3;
  int min_inliers = 12;
  double confidence = 0.999;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// K^-1 [u v 1]^T: bearing with z = 1, not unit-normalized.
std::vector<Vector3> normalize_pixels(const std::vector<Vector2>& pixels,
                                      const CameraIntrinsics& k);

/// (cx, cy) + normalized camera-frame point -> pixel. Empty when the point
/// is at or behind the camera plane (z <= 1e-9).
std::optional<Vector2> project_point(const CameraIntrinsics& k,
                                     const Vector3& point_camera);

/// Symmetric angular distance (radians) of two bearings from each other's
/// epipolar plane under E; the inlier metric of estimate_essential.
double epipolar_angular_error(const Matrix3& essential,
                              const Vector3& bearing_a,
                              const Vector3& bearing_b);

struct EssentialResult {
  Matrix3 essential = Matrix3::Zero();
  std::vector<char> inliers;  // aligned with the input correspondences
};

/// RANSAC + normalized 8-point, followed by a least-squares refit to an
/// inlier-set fixpoint and a geometric polish of the decomposed (rotation,
/// direction) on the inliers. The returned E has its two nonzero singular
/// values equalized and satisfies b_a^T E b_b = 0 for inliers, where the
/// relative pose convention is T_ab = X_a^-1 X_b (pose of camera b in a).
/// Throws InsufficientDataError (< 8 correspondences) and NoConsensusError
/// (no model reaching min_inliers).
EssentialResult estimate_essential(const std::vector<Correspondence2D2D>& corr,
                                   const CameraIntrinsics& k_a,
                                   const CameraIntrinsics& k_b,
                                   const RansacParams& params);

struct EssentialDecomposition {
  Rotation rotation;   // rotation of T_ab
  Vector3 direction;   // unit translation direction of T_ab
};

/// Four-candidate SVD decomposition resolved by the cheirality vote over
/// the supplied inlier correspondences. Throws InsufficientDataError for
/// < 5 inliers and AmbiguousDecompositionError when the runner-up candidate
/// reaches 95% of the winner's positive-depth count (or nothing wins).
EssentialDecomposition decompose_essential(
    const Matrix3& essential, const std::vector<Correspondence2D2D>& inliers,
    const CameraIntrinsics& k_a, const CameraIntrinsics& k_b);

struct TriangulationResult {
  Vector3 point;   // frame a
  double depth_a;  // ray parameter of bearing_a (z-depth for z=1 bearings)
  double depth_b;
};

/// Midpoint of the common perpendicular of the two bearing rays; pose is
/// T_ab. Throws DegenerateParallaxError for rays within 1e-6 rad of
/// parallel.
TriangulationResult triangulate(const Vector3& bearing_a,
                                const Vector3& bearing_b, const Pose& t_ab);

struct LiftedPoint {
  std::size_t keypoint_index;
  Vector3 point;
};

/// P = d * K^-1 [u v 1]^T at the nearest grid cell. Keypoints with invalid
/// cells, out-of-bounds coordinates, or depth > max_depth are dropped.
std::vector<LiftedPoint> lift_keypoints_depth(
    const std::vector<Vector2>& keypoints, const DepthMap& depth,
    const CameraIntrinsics& k, double max_depth);

/// Nearest-cell lookup in a pointmap; invalid cells dropped.
std::vector<LiftedPoint> lift_keypoints_pointmap(
    const std::vector<Vector2>& keypoints, const PointMap& points);

struct PnpResult {
  Pose pose;  // maps frame-k points into the observing camera's frame
  std::vector<char> inliers;
};

/// RANSAC over P3P minimal samples scored by reprojection error, then LM
/// refinement on the inliers. Throws InsufficientDataError (< 4
/// correspondences) and NoConsensusError.
PnpResult solve_pnp(const std::vector<Correspondence2D3D>& corr,
                    const CameraIntrinsics& k, const RansacParams& params);

}  // namespace tvpgo
