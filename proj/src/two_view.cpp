#include "tvpgo/two_view.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "tvpgo/pose_graph.hpp"

namespace tvpgo {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kMinParallaxSin = 1e-6;
constexpr double kMinProjectionDepth = 1e-9;
}  // namespace

Matrix3 CameraIntrinsics::matrix() const {
  Matrix3 k = Matrix3::Identity();
  k(0, 0) = fx;
  k(1, 1) = fy;
  k(0, 2) = cx;
  k(1, 2) = cy;
  return k;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw ParameterError("camera focal lengths must be positive");
  }
}

DepthMap::DepthMap(int height, int width)
    : height_(height), width_(width),
      data_(static_cast<std::size_t>(height) * width, kNan) {}

bool DepthMap::is_valid(int row, int col) const {
  const double d = at(row, col);
  return std::isfinite(d) && d > 0.0;
}

void DepthMap::set(int row, int col, double depth) {
  if (!std::isnan(depth) && depth <= 0.0) {
    throw ParameterError("depth values must be positive");
  }
  data_[row * width_ + col] = depth;
}

PointMap::PointMap(int height, int width)
    : height_(height), width_(width),
      data_(static_cast<std::size_t>(height) * width,
            Vector3::Constant(kNan)) {}

bool PointMap::is_valid(int row, int col) const {
  return at(row, col).allFinite();
}

void PointMap::set(int row, int col, const Vector3& point) {
  data_[row * width_ + col] = point;
}

void RansacParams::validate() const {
  if (max_iterations <= 0 || inlier_threshold <= 0.0 || min_inliers < 1 ||
      confidence <= 0.0 || confidence >= 1.0) {
    throw ParameterError("invalid RANSAC parameters");
  }
}

std::vector<Vector3> normalize_pixels(const std::vector<Vector2>& pixels,
                                      const CameraIntrinsics& k) {
  k.validate();
  std::vector<Vector3> bearings;
  bearings.reserve(pixels.size());
  for (const Vector2& p : pixels) {
    bearings.emplace_back((p.x() - k.cx) / k.fx, (p.y() - k.cy) / k.fy, 1.0);
  }
  return bearings;
}

std::optional<Vector2> project_point(const CameraIntrinsics& k,
                                     const Vector3& point_camera) {
  if (point_camera.z() <= kMinProjectionDepth) return std::nullopt;
  return Vector2(k.fx * point_camera.x() / point_camera.z() + k.cx,
                 k.fy * point_camera.y() / point_camera.z() + k.cy);
}

double epipolar_angular_error(const Matrix3& essential,
                              const Vector3& bearing_a,
                              const Vector3& bearing_b) {
  const auto plane_angle = [](const Vector3& bearing, const Vector3& normal) {
    const double nn = normal.norm() * bearing.norm();
    if (nn < 1e-15) return 0.0;  // bearing at the epipole: no constraint
    const double s = std::min(1.0, std::abs(bearing.dot(normal)) / nn);
    return std::asin(s);
  };
  return std::max(plane_angle(bearing_a, essential * bearing_b),
                  plane_angle(bearing_b, essential.transpose() * bearing_a));
}

namespace {

Vector3 bearing_of(const Vector2& pixel, const CameraIntrinsics& k) {
  return Vector3((pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0);
}

// Isotropic (Hartley) conditioning of the x,y components of z=1 bearings.
Matrix3 conditioning_transform(const std::vector<Vector3>& bearings,
                               const std::vector<int>& sample) {
  Vector2 centroid = Vector2::Zero();
  for (int idx : sample) centroid += bearings[idx].head<2>();
  centroid /= static_cast<double>(sample.size());
  double mean_dist = 0.0;
  for (int idx : sample) {
    mean_dist += (bearings[idx].head<2>() - centroid).norm();
  }
  mean_dist /= static_cast<double>(sample.size());
  const double scale =
      mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
  Matrix3 t = Matrix3::Identity();
  t(0, 0) = scale;
  t(1, 1) = scale;
  t(0, 2) = -scale * centroid.x();
  t(1, 2) = -scale * centroid.y();
  return t;
}

// Least-squares 8-point estimate over the given index set; the result has
// equalized nonzero singular values and zero determinant.
Matrix3 eight_point(const std::vector<Vector3>& bearings_a,
                    const std::vector<Vector3>& bearings_b,
                    const std::vector<int>& sample) {
  const Matrix3 t_a = conditioning_transform(bearings_a, sample);
  const Matrix3 t_b = conditioning_transform(bearings_b, sample);

  Eigen::MatrixXd a(sample.size(), 9);
  for (std::size_t row = 0; row < sample.size(); ++row) {
    const Vector3 ba = t_a * bearings_a[sample[row]];
    const Vector3 bb = t_b * bearings_b[sample[row]];
    a.row(row) << ba.x() * bb.x(), ba.x() * bb.y(), ba.x() * bb.z(),
        ba.y() * bb.x(), ba.y() * bb.y(), ba.y() * bb.z(),
        ba.z() * bb.x(), ba.z() * bb.y(), ba.z() * bb.z();
  }

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd e = svd.matrixV().col(8);
  Matrix3 raw;
  raw << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8);
  raw = t_a.transpose() * raw * t_b;

  // Project onto the essential manifold.
  Eigen::JacobiSVD<Matrix3> esvd(raw,
                                 Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double s = 0.5 * (esvd.singularValues()(0) + esvd.singularValues()(1));
  Vector3 sv(s, s, 0.0);
  return esvd.matrixU() * sv.asDiagonal() * esvd.matrixV().transpose();
}

std::vector<int> sample_distinct(std::mt19937_64& rng, int count, int upper) {
  std::uniform_int_distribution<int> dist(0, upper - 1);
  std::vector<int> out;
  while (static_cast<int>(out.size()) < count) {
    const int candidate = dist(rng);
    if (std::find(out.begin(), out.end(), candidate) == out.end()) {
      out.push_back(candidate);
    }
  }
  return out;
}

// Standard adaptive RANSAC trial count for the observed inlier ratio.
int required_trials(double inlier_ratio, int sample_size, double confidence,
                    int max_iterations) {
  if (inlier_ratio <= 0.0) return max_iterations;
  const double w = std::pow(inlier_ratio, sample_size);
  if (w >= 1.0 - 1e-12) return 1;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - w);
  if (!std::isfinite(n) || n >= max_iterations) return max_iterations;
  return std::max(1, static_cast<int>(std::ceil(n)));
}

// Signed version of the plane angle inside epipolar_angular_error; smooth
// around zero so it can drive a least-squares polish.
double signed_plane_angle(const Vector3& bearing, const Vector3& normal) {
  const double nn = normal.norm() * bearing.norm();
  if (nn < 1e-15) return 0.0;
  const double s = std::clamp(bearing.dot(normal) / nn, -1.0, 1.0);
  return std::asin(s);
}

// IRLS/LM polish of the decomposed (rotation, direction) pair over the
// inlier set, minimizing Cauchy-weighted epipolar plane angles (the same
// metric the inlier test thresholds). The eight-point refit minimizes a
// conditioned algebraic error that sits measurably off this geometric
// optimum under pixel noise, and outliers that slip inside the inlier band
// drag it further; the robust weights mute them. Accepts only improving
// steps and returns the rebuilt essential matrix [d]x R.
Matrix3 refine_essential(Rotation rotation, Vector3 direction,
                         const std::vector<Vector3>& bearings_a,
                         const std::vector<Vector3>& bearings_b,
                         const std::vector<int>& support,
                         double inlier_threshold) {
  using Vector5 = Eigen::Matrix<double, 5, 1>;
  const int m = static_cast<int>(support.size());

  const auto residuals = [&](const Rotation& rot, const Vector3& dir) {
    Eigen::VectorXd r(2 * m);
    const Matrix3 e = skew(dir) * rot.matrix();
    for (int i = 0; i < m; ++i) {
      const Vector3& ba = bearings_a[support[i]];
      const Vector3& bb = bearings_b[support[i]];
      r(2 * i) = signed_plane_angle(ba, e * bb);
      r(2 * i + 1) = signed_plane_angle(bb, e.transpose() * ba);
    }
    return r;
  };
  // Robust scale from the median absolute residual (MAD, Gaussian-
  // consistent), floored so noise-free data keeps near-uniform weights.
  const auto robust_scale = [&](const Eigen::VectorXd& r) {
    Eigen::VectorXd a = r.cwiseAbs();
    std::nth_element(a.data(), a.data() + a.size() / 2, a.data() + a.size());
    return std::max(1.4826 * a(a.size() / 2), 0.05 * inlier_threshold);
  };
  const auto robust_cost = [&](const Eigen::VectorXd& r, double scale) {
    double c = 0.0;
    for (int i = 0; i < r.size(); ++i) {
      c += cauchy_weight(r(i) * r(i), scale).loss;
    }
    return c;
  };
  const auto apply = [](const Rotation& rot, const Vector3& dir,
                        const Vector5& delta) {
    // Tangent basis of the direction sphere, rebuilt at the current point.
    const Vector3 seed =
        std::abs(dir.x()) < 0.9 ? Vector3::UnitX() : Vector3::UnitY();
    const Vector3 b1 = dir.cross(seed).normalized();
    const Vector3 b2 = dir.cross(b1);
    return std::make_pair(rot * rot_exp(delta.head<3>()),
                          (dir + delta(3) * b1 + delta(4) * b2).normalized());
  };

  double lambda = 1e-6;
  for (int iter = 0; iter < 30; ++iter) {
    constexpr double kStep = 1e-7;
    Eigen::MatrixXd j(2 * m, 5);  // central differences over the 5 params
    for (int p = 0; p < 5; ++p) {
      Vector5 delta = Vector5::Zero();
      delta(p) = kStep;
      const auto [rot_p, dir_p] = apply(rotation, direction, delta);
      delta(p) = -kStep;
      const auto [rot_m, dir_m] = apply(rotation, direction, delta);
      j.col(p) =
          (residuals(rot_p, dir_p) - residuals(rot_m, dir_m)) / (2.0 * kStep);
    }
    const Eigen::VectorXd r = residuals(rotation, direction);
    const double scale = robust_scale(r);
    Eigen::Matrix<double, 5, 5> h = Eigen::Matrix<double, 5, 5>::Zero();
    Vector5 g = Vector5::Zero();
    for (int i = 0; i < 2 * m; ++i) {
      const double w = cauchy_weight(r(i) * r(i), scale).weight;
      h += w * j.row(i).transpose() * j.row(i);
      g -= w * j.row(i).transpose() * r(i);
    }
    const double current = robust_cost(r, scale);

    bool accepted = false;
    for (int attempt = 0; attempt < 10 && !accepted; ++attempt) {
      Eigen::Matrix<double, 5, 5> damped = h;
      damped.diagonal() += lambda * h.diagonal().cwiseMax(1e-12);
      const Vector5 delta = damped.ldlt().solve(g);
      if (delta.norm() < 1e-14) {
        return skew(direction) * rotation.matrix();
      }
      const auto [rot_c, dir_c] = apply(rotation, direction, delta);
      const double trial = robust_cost(residuals(rot_c, dir_c), scale);
      if (trial < current) {
        rotation = rot_c;
        direction = dir_c;
        lambda *= 0.5;
        accepted = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) break;
  }
  return skew(direction) * rotation.matrix();
}

}  // namespace

EssentialResult estimate_essential(const std::vector<Correspondence2D2D>& corr,
                                   const CameraIntrinsics& k_a,
                                   const CameraIntrinsics& k_b,
                                   const RansacParams& params) {
  params.validate();
  k_a.validate();
  k_b.validate();
  const int n = static_cast<int>(corr.size());
  if (n < 8) {
    throw InsufficientDataError(
        "essential estimation needs at least 8 correspondences, got " +
        std::to_string(n));
  }

  std::vector<Vector3> bearings_a, bearings_b;
  bearings_a.reserve(n);
  bearings_b.reserve(n);
  for (const Correspondence2D2D& c : corr) {
    bearings_a.push_back(bearing_of(c.pixel_a, k_a));
    bearings_b.push_back(bearing_of(c.pixel_b, k_b));
  }

  const auto classify = [&](const Matrix3& e, std::vector<char>* mask) {
    int count = 0;
    mask->assign(n, 0);
    for (int i = 0; i < n; ++i) {
      if (epipolar_angular_error(e, bearings_a[i], bearings_b[i]) <
          params.inlier_threshold) {
        (*mask)[i] = 1;
        ++count;
      }
    }
    return count;
  };

  std::mt19937_64 rng(params.rng_seed);
  Matrix3 best_e = Matrix3::Zero();
  std::vector<char> best_mask(n, 0), mask;
  int best_count = 0;
  int trials = params.max_iterations;

  for (int iter = 0; iter < trials; ++iter) {
    const std::vector<int> sample = sample_distinct(rng, 8, n);
    const Matrix3 e = eight_point(bearings_a, bearings_b, sample);
    const int count = classify(e, &mask);
    if (count > best_count) {
      best_count = count;
      best_e = e;
      best_mask = mask;
      trials = std::min(
          trials, required_trials(static_cast<double>(count) / n, 8,
                                  params.confidence, params.max_iterations));
    }
  }

  if (best_count < params.min_inliers) {
    throw NoConsensusError("essential RANSAC found only " +
                           std::to_string(best_count) + " inliers, need " +
                           std::to_string(params.min_inliers));
  }

  // Least-squares refit on the consensus set, reclassify, and repeat until
  // the inlier set stabilizes: gross outliers that slipped inside the first
  // consensus band get expelled instead of dragging the final model. A
  // round that would lose consensus is discarded and the loop stops.
  Matrix3 refined = best_e;
  std::vector<char> current = best_mask;
  for (int round = 0; round < 10; ++round) {
    std::vector<int> support;
    for (int i = 0; i < n; ++i) {
      if (current[i]) support.push_back(i);
    }
    const Matrix3 candidate = eight_point(bearings_a, bearings_b, support);
    if (classify(candidate, &mask) < params.min_inliers) break;
    refined = candidate;
    if (mask == current) break;
    current = mask;
  }

  // Geometric polish: decompose, refine (rotation, direction) on the inlier
  // set, rebuild E, and reclassify until the inlier set stabilizes. Scenes
  // where the decomposition is ambiguous (no parallax) keep the algebraic
  // estimate, as does any polish round that would lose consensus.
  for (int round = 0; round < 5; ++round) {
    std::vector<int> support;
    std::vector<Correspondence2D2D> inlier_corr;
    for (int i = 0; i < n; ++i) {
      if (current[i]) {
        support.push_back(i);
        inlier_corr.push_back(corr[i]);
      }
    }
    if (static_cast<int>(support.size()) < 5) break;
    Matrix3 candidate;
    try {
      const EssentialDecomposition seed =
          decompose_essential(refined, inlier_corr, k_a, k_b);
      candidate =
          refine_essential(seed.rotation, seed.direction, bearings_a,
                           bearings_b, support, params.inlier_threshold);
    } catch (const AmbiguousDecompositionError&) {
      break;
    }
    if (classify(candidate, &mask) < params.min_inliers) break;
    refined = candidate;
    if (mask == current) break;
    current = mask;
  }

  classify(refined, &mask);
  return EssentialResult{refined, mask};
}

TriangulationResult triangulate(const Vector3& bearing_a,
                                const Vector3& bearing_b, const Pose& t_ab) {
  const Vector3 d1 = bearing_a;
  const Vector3 d2 = t_ab.rotation * bearing_b;
  const Vector3 o2 = t_ab.translation;

  const double sin_angle =
      d1.normalized().cross(d2.normalized()).norm();
  if (sin_angle < kMinParallaxSin) {
    throw DegenerateParallaxError("triangulation rays are parallel");
  }

  // Closest points of the two rays, origin + s*d1 and o2 + u*d2, from
  // [d11 -d12; d12 -d22] [s;u] = [r1;r2] by Cramer's rule.
  const double d11 = d1.dot(d1), d12 = d1.dot(d2), d22 = d2.dot(d2);
  const double r1 = d1.dot(o2), r2 = d2.dot(o2);
  const double det = -d11 * d22 + d12 * d12;  // = -|d1 x d2|^2, nonzero
  const double s = (-r1 * d22 + r2 * d12) / det;
  const double u = (d11 * r2 - d12 * r1) / det;

  TriangulationResult out;
  out.depth_a = s;
  out.depth_b = u;
  out.point = 0.5 * ((s * d1) + (o2 + u * d2));
  return out;
}

EssentialDecomposition decompose_essential(
    const Matrix3& essential, const std::vector<Correspondence2D2D>& inliers,
    const CameraIntrinsics& k_a, const CameraIntrinsics& k_b) {
  k_a.validate();
  k_b.validate();
  if (inliers.size() < 5) {
    throw InsufficientDataError(
        "essential decomposition needs at least 5 inlier correspondences");
  }

  Eigen::JacobiSVD<Matrix3> svd(essential,
                                Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3 u = svd.matrixU();
  Matrix3 v = svd.matrixV();
  if (u.determinant() < 0.0) u = -u;
  if (v.determinant() < 0.0) v = -v;
  Matrix3 w = Matrix3::Zero();
  w(0, 1) = -1.0;
  w(1, 0) = 1.0;
  w(2, 2) = 1.0;

  const Matrix3 r1 = u * w * v.transpose();
  const Matrix3 r2 = u * w.transpose() * v.transpose();
  const Vector3 axis = u.col(2);

  struct Candidate {
    Matrix3 rotation;
    Vector3 direction;
    int support = 0;
  };
  std::vector<Candidate> candidates = {{r1, axis}, {r1, -axis},
                                       {r2, axis}, {r2, -axis}};

  for (Candidate& candidate : candidates) {
    const Pose pose(Rotation::from_matrix(candidate.rotation),
                    candidate.direction);
    for (const Correspondence2D2D& c : inliers) {
      try {
        const TriangulationResult tri = triangulate(
            bearing_of(c.pixel_a, k_a), bearing_of(c.pixel_b, k_b), pose);
        if (tri.depth_a > 0.0 && tri.depth_b > 0.0) ++candidate.support;
      } catch (const DegenerateParallaxError&) {
        // No depth vote from rays that do not intersect.
      }
    }
  }

  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              return a.support > b.support;
            });
  if (candidates[0].support == 0 ||
      candidates[1].support >=
          static_cast<double>(candidates[0].support) * 0.95) {
    throw AmbiguousDecompositionError(
        "cheirality vote did not separate the decomposition candidates (" +
        std::to_string(candidates[0].support) + " vs " +
        std::to_string(candidates[1].support) + ")");
  }

  return EssentialDecomposition{Rotation::from_matrix(candidates[0].rotation),
                                candidates[0].direction.normalized()};
}

std::vector<LiftedPoint> lift_keypoints_depth(
    const std::vector<Vector2>& keypoints, const DepthMap& depth,
    const CameraIntrinsics& k, double max_depth) {
  k.validate();
  if (max_depth <= 0.0) {
    throw ParameterError("max_depth must be positive");
  }
  std::vector<LiftedPoint> out;
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const Vector2& p = keypoints[i];
    const int col = static_cast<int>(std::lround(p.x()));
    const int row = static_cast<int>(std::lround(p.y()));
    if (!depth.in_bounds(row, col) || !depth.is_valid(row, col)) continue;
    const double d = depth.at(row, col);
    if (d > max_depth) continue;
    out.push_back(LiftedPoint{i, d * bearing_of(p, k)});
  }
  return out;
}

std::vector<LiftedPoint> lift_keypoints_pointmap(
    const std::vector<Vector2>& keypoints, const PointMap& points) {
  std::vector<LiftedPoint> out;
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const Vector2& p = keypoints[i];
    const int col = static_cast<int>(std::lround(p.x()));
    const int row = static_cast<int>(std::lround(p.y()));
    if (!points.in_bounds(row, col) || !points.is_valid(row, col)) continue;
    out.push_back(LiftedPoint{i, points.at(row, col)});
  }
  return out;
}

namespace {

// Newton-polished roots of A4 v^4 + A3 v^3 + A2 v^2 + A1 v + A0 via the
// companion-matrix eigenvalues.
std::vector<double> positive_real_quartic_roots(double a4, double a3,
                                                double a2, double a1,
                                                double a0) {
  std::vector<double> roots;
  const double scale = std::max({std::abs(a4), std::abs(a3), std::abs(a2),
                                 std::abs(a1), std::abs(a0)});
  if (scale <= 0.0 || std::abs(a4) < 1e-14 * scale) return roots;

  Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
  companion(1, 0) = 1.0;
  companion(2, 1) = 1.0;
  companion(3, 2) = 1.0;
  companion(0, 3) = -a0 / a4;
  companion(1, 3) = -a1 / a4;
  companion(2, 3) = -a2 / a4;
  companion(3, 3) = -a3 / a4;

  const Eigen::EigenSolver<Eigen::Matrix4d> eig(companion);
  for (int i = 0; i < 4; ++i) {
    std::complex<double> z = eig.eigenvalues()(i);
    for (int it = 0; it < 3; ++it) {  // polish against the raw quartic
      const std::complex<double> p =
          (((a4 * z + a3) * z + a2) * z + a1) * z + a0;
      const std::complex<double> dp =
          ((4.0 * a4 * z + 3.0 * a3) * z + 2.0 * a2) * z + a1;
      if (std::abs(dp) < 1e-30) break;
      z -= p / dp;
    }
    if (std::abs(z.imag()) < 1e-8 && z.real() > 0.0) {
      roots.push_back(z.real());
    }
  }
  return roots;
}

// Absolute orientation (no scale) for the three P3P points: returns (R, t)
// with camera_point = R * world_point + t.
Pose absolute_orientation_3pt(const Vector3 world[3],
                              const Vector3 camera[3]) {
  const Vector3 cw = (world[0] + world[1] + world[2]) / 3.0;
  const Vector3 cc = (camera[0] + camera[1] + camera[2]) / 3.0;
  Matrix3 h = Matrix3::Zero();
  for (int i = 0; i < 3; ++i) {
    h += (world[i] - cw) * (camera[i] - cc).transpose();
  }
  Eigen::JacobiSVD<Matrix3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3 d = Matrix3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;
  }
  const Matrix3 r = svd.matrixV() * d * svd.matrixU().transpose();
  return Pose(Rotation::from_matrix(r), cc - r * cw);
}

// Grunert's P3P: up to four camera poses consistent with three 3D points
// and their unit bearings. camera_point = R * world_point + t.
std::vector<Pose> p3p_grunert(const Vector3 world[3],
                              const Vector3 bearing[3]) {
  const double a2 = (world[1] - world[2]).squaredNorm();
  const double b2 = (world[0] - world[2]).squaredNorm();
  const double c2 = (world[0] - world[1]).squaredNorm();
  if (a2 < 1e-18 || b2 < 1e-18 || c2 < 1e-18) return {};
  const double ca = bearing[1].dot(bearing[2]);
  const double cb = bearing[0].dot(bearing[2]);
  const double cg = bearing[0].dot(bearing[1]);

  const double a4 = a2 * a2 - 2 * a2 * b2 - 2 * a2 * c2 + b2 * b2 -
                    4 * b2 * c2 * ca * ca + 2 * b2 * c2 + c2 * c2;
  const double a3 = -4 * a2 * a2 * cb + 4 * a2 * b2 * ca * cg +
                    4 * a2 * b2 * cb + 8 * a2 * c2 * cb -
                    4 * b2 * b2 * ca * cg + 8 * b2 * c2 * ca * ca * cb +
                    4 * b2 * c2 * ca * cg - 4 * b2 * c2 * cb -
                    4 * c2 * c2 * cb;
  const double a2c = 4 * a2 * a2 * cb * cb + 2 * a2 * a2 -
                     8 * a2 * b2 * ca * cb * cg - 4 * a2 * b2 * cg * cg -
                     8 * a2 * c2 * cb * cb - 4 * a2 * c2 +
                     4 * b2 * b2 * ca * ca + 4 * b2 * b2 * cg * cg -
                     2 * b2 * b2 - 4 * b2 * c2 * ca * ca -
                     8 * b2 * c2 * ca * cb * cg + 4 * c2 * c2 * cb * cb +
                     2 * c2 * c2;
  const double a1 = -4 * a2 * a2 * cb + 4 * a2 * b2 * ca * cg +
                    8 * a2 * b2 * cb * cg * cg - 4 * a2 * b2 * cb +
                    8 * a2 * c2 * cb - 4 * b2 * b2 * ca * cg +
                    4 * b2 * c2 * ca * cg + 4 * b2 * c2 * cb -
                    4 * c2 * c2 * cb;
  const double a0 = a2 * a2 - 4 * a2 * b2 * cg * cg + 2 * a2 * b2 -
                    2 * a2 * c2 + b2 * b2 - 2 * b2 * c2 + c2 * c2;

  std::vector<Pose> solutions;
  for (double v : positive_real_quartic_roots(a4, a3, a2c, a1, a0)) {
    const double q = 1.0 + v * v - 2.0 * v * cb;
    if (q <= 1e-12) continue;
    const double den = 2.0 * b2 * (cg - ca * v);
    double u;
    if (std::abs(den) > 1e-9 * b2) {
      u = (b2 * (1.0 - v * v) + (a2 - c2) * q) / den;
    } else {
      // Fallback quadratic b2 u^2 - 2 b2 cg u + (b2 - c2 q) = 0; pick the
      // root best satisfying the first distance relation.
      const double disc = b2 * b2 * cg * cg - b2 * (b2 - c2 * q);
      if (disc < 0.0) continue;
      const double sq = std::sqrt(disc);
      const auto mismatch = [&](double cand) {
        return std::abs((cand * cand + v * v - 2.0 * cand * v * ca) * b2 -
                        q * a2);
      };
      const double u_plus = (b2 * cg + sq) / b2;
      const double u_minus = (b2 * cg - sq) / b2;
      u = mismatch(u_plus) < mismatch(u_minus) ? u_plus : u_minus;
    }
    if (u <= 0.0) continue;
    const double s1 = std::sqrt(b2 / q);
    const double s2 = u * s1;
    const double s3 = v * s1;
    if (s2 <= 0.0 || s3 <= 0.0) continue;
    const Vector3 camera[3] = {s1 * bearing[0], s2 * bearing[1],
                               s3 * bearing[2]};
    solutions.push_back(absolute_orientation_3pt(world, camera));
  }
  return solutions;
}

double reprojection_error(const CameraIntrinsics& k, const Pose& pose,
                          const Correspondence2D3D& c) {
  const std::optional<Vector2> projected =
      project_point(k, pose * c.point_3d);
  if (!projected) return std::numeric_limits<double>::infinity();
  return (*projected - c.pixel).norm();
}

// Gauss-Newton/LM polish of the pose on the given correspondence subset,
// minimizing squared pixel reprojection error. Accepts only improving
// steps, so the subset RMS never increases.
Pose refine_pnp(const CameraIntrinsics& k, Pose pose,
                const std::vector<Correspondence2D3D>& corr,
                const std::vector<int>& subset) {
  const auto cost = [&](const Pose& p) {
    double c = 0.0;
    for (int idx : subset) {
      const double e = reprojection_error(k, p, corr[idx]);
      c += e * e;
    }
    return c;
  };

  double current = cost(pose);
  double lambda = 1e-6;
  for (int iter = 0; iter < 50; ++iter) {
    Matrix6 h = Matrix6::Zero();
    Vector6 b = Vector6::Zero();
    for (int idx : subset) {
      const Vector3 pc = pose * corr[idx].point_3d;
      if (pc.z() <= kMinProjectionDepth) continue;
      const Vector2 projected(k.fx * pc.x() / pc.z() + k.cx,
                              k.fy * pc.y() / pc.z() + k.cy);
      const Vector2 r = projected - corr[idx].pixel;

      Eigen::Matrix<double, 2, 3> d_pix;  // d(pixel)/d(camera point)
      d_pix << k.fx / pc.z(), 0.0, -k.fx * pc.x() / (pc.z() * pc.z()),
          0.0, k.fy / pc.z(), -k.fy * pc.y() / (pc.z() * pc.z());

      Eigen::Matrix<double, 3, 6> d_point;  // right perturbation of pose
      const Matrix3 rot = pose.rotation.matrix();
      d_point.leftCols<3>() = -rot * skew(corr[idx].point_3d);
      d_point.rightCols<3>() = rot;

      const Eigen::Matrix<double, 2, 6> j = d_pix * d_point;
      h += j.transpose() * j;
      b -= j.transpose() * r;
    }

    bool accepted = false;
    for (int attempt = 0; attempt < 10 && !accepted; ++attempt) {
      Matrix6 damped = h;
      damped.diagonal() += lambda * h.diagonal().cwiseMax(1e-12);
      const Vector6 delta = damped.ldlt().solve(b);
      if (delta.norm() < 1e-14) return pose;
      const Pose candidate = pose * pose_exp(delta);
      const double trial = cost(candidate);
      if (trial < current) {
        pose = candidate;
        current = trial;
        lambda *= 0.5;
        accepted = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) break;
  }
  return pose;
}

}  // namespace

PnpResult solve_pnp(const std::vector<Correspondence2D3D>& corr,
                    const CameraIntrinsics& k, const RansacParams& params) {
  params.validate();
  k.validate();
  const int n = static_cast<int>(corr.size());
  if (n < 4) {
    throw InsufficientDataError(
        "PnP needs at least 4 correspondences, got " + std::to_string(n));
  }

  std::vector<Vector3> unit_bearings;
  unit_bearings.reserve(n);
  for (const Correspondence2D3D& c : corr) {
    unit_bearings.push_back(bearing_of(c.pixel, k).normalized());
  }

  const auto classify = [&](const Pose& pose, std::vector<char>* mask) {
    int count = 0;
    mask->assign(n, 0);
    for (int i = 0; i < n; ++i) {
      if (reprojection_error(k, pose, corr[i]) < params.inlier_threshold) {
        (*mask)[i] = 1;
        ++count;
      }
    }
    return count;
  };

  std::mt19937_64 rng(params.rng_seed);
  Pose best_pose;
  std::vector<char> best_mask(n, 0), mask;
  int best_count = 0;
  int trials = params.max_iterations;

  for (int iter = 0; iter < trials; ++iter) {
    const std::vector<int> sample = sample_distinct(rng, 3, n);
    const Vector3 world[3] = {corr[sample[0]].point_3d,
                              corr[sample[1]].point_3d,
                              corr[sample[2]].point_3d};
    const Vector3 bearing[3] = {unit_bearings[sample[0]],
                                unit_bearings[sample[1]],
                                unit_bearings[sample[2]]};
    for (const Pose& candidate : p3p_grunert(world, bearing)) {
      const int count = classify(candidate, &mask);
      if (count > best_count) {
        best_count = count;
        best_pose = candidate;
        best_mask = mask;
        trials = std::min(
            trials, required_trials(static_cast<double>(count) / n, 3,
                                    params.confidence,
                                    params.max_iterations));
      }
    }
  }

  if (best_count < params.min_inliers) {
    throw NoConsensusError("PnP RANSAC found only " +
                           std::to_string(best_count) + " inliers, need " +
                           std::to_string(params.min_inliers));
  }

  std::vector<int> support;
  for (int i = 0; i < n; ++i) {
    if (best_mask[i]) support.push_back(i);
  }
  const Pose refined = refine_pnp(k, best_pose, corr, support);
  const int refined_count = classify(refined, &mask);
  if (refined_count < params.min_inliers) {
    throw NoConsensusError("PnP refinement lost consensus");
  }
  return PnpResult{refined, mask};
}

}  // namespace tvpgo
