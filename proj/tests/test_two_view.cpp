#include "tvpgo/two_view.hpp"

#include <cmath>
#include <random>

#include <doctest.h>

#include "test_support.hpp"

using namespace tvpgo;
using namespace tvpgo::test;

namespace {

const CameraIntrinsics kCam{400.0, 420.0, 320.0, 240.0};

// Scene with ground-truth relative pose t_ab (camera b expressed in a) and
// 3D points visible in both views; correspondence i comes from point i.
struct TwoViewScene {
  Pose t_ab;
  std::vector<Vector3> points_a;  // frame a
  std::vector<Correspondence2D2D> corr;
};

TwoViewScene make_scene(std::mt19937_64& rng, int count,
                        const Pose& t_ab) {
  TwoViewScene scene;
  scene.t_ab = t_ab;
  const Pose t_ba = t_ab.inverse();
  std::uniform_real_distribution<double> ux(-3.0, 3.0);
  std::uniform_real_distribution<double> uz(4.0, 10.0);
  while (static_cast<int>(scene.corr.size()) < count) {
    const Vector3 p_a(ux(rng), ux(rng), uz(rng));
    const Vector3 p_b = t_ba * p_a;
    const auto pix_a = project_point(kCam, p_a);
    const auto pix_b = project_point(kCam, p_b);
    if (!pix_a || !pix_b) continue;
    scene.points_a.push_back(p_a);
    scene.corr.push_back(Correspondence2D2D{*pix_a, *pix_b});
  }
  return scene;
}

Matrix3 essential_oracle(const Pose& t_ab) {
  return skew(t_ab.translation) * t_ab.rotation.matrix();
}

double matrix_cosine(const Matrix3& a, const Matrix3& b) {
  double dot = 0.0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) dot += a(r, c) * b(r, c);
  return std::abs(dot) / (a.norm() * b.norm());
}

double rotation_angle_between(const Rotation& a, const Rotation& b) {
  return rot_log(a.inverse() * b).norm();
}

RansacParams essential_params() {
  RansacParams p;
  p.max_iterations = 500;
  p.inlier_threshold = 1e-3;  // radians
  p.min_inliers = 12;
  p.rng_seed = 7;
  return p;
}

}  // namespace

TEST_CASE("normalize_pixels") {
  const std::vector<Vector2> pixels = {
      Vector2(kCam.cx, kCam.cy), Vector2(kCam.cx + kCam.fx, kCam.cy)};
  const std::vector<Vector3> bearings = normalize_pixels(pixels, kCam);
  CHECK((bearings[0] - Vector3(0, 0, 1)).norm() < 1e-15);
  CHECK((bearings[1] - Vector3(1, 0, 1)).norm() < 1e-15);

  std::mt19937_64 rng(60);
  std::uniform_real_distribution<double> u(0.0, 640.0);
  const Matrix3 kinv = kCam.matrix().inverse();
  for (int i = 0; i < 100; ++i) {
    const Vector2 pix(u(rng), u(rng));
    const Vector3 b = normalize_pixels({pix}, kCam)[0];
    CHECK((b - kinv * Vector3(pix.x(), pix.y(), 1.0)).norm() < 1e-12);
  }

  CameraIntrinsics bad = kCam;
  bad.fx = 0.0;
  CHECK_THROWS_AS(normalize_pixels(pixels, bad), ParameterError);
}

TEST_CASE("project_point round-trips normalize_pixels and guards depth") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 50; ++i) {
    const Vector3 p(u(rng), u(rng), 3.0 + std::abs(u(rng)));
    const auto pix = project_point(kCam, p);
    REQUIRE(pix.has_value());
    const Vector3 b = normalize_pixels({*pix}, kCam)[0];
    CHECK((p.z() * b - p).norm() < 1e-9);
  }
  CHECK_FALSE(project_point(kCam, Vector3(0, 0, 0)).has_value());
  CHECK_FALSE(project_point(kCam, Vector3(1, 1, -2)).has_value());
}

TEST_CASE("estimate_essential on a clean scene") {
  std::mt19937_64 rng(62);
  const Pose t_ab(rot_exp(Vector3(0.02, -0.05, 0.01)), Vector3(1.0, 0.2, 0.3));
  const TwoViewScene scene = make_scene(rng, 50, t_ab);

  const EssentialResult res =
      estimate_essential(scene.corr, kCam, kCam, essential_params());

  int inliers = 0;
  for (char f : res.inliers) inliers += f;
  CHECK(inliers == 50);
  CHECK(matrix_cosine(res.essential, essential_oracle(t_ab)) > 1.0 - 1e-9);

  // Structure: rank 2 with equalized nonzero singular values.
  Eigen::JacobiSVD<Matrix3> svd(res.essential);
  const Vector3 s = svd.singularValues();
  CHECK(s(2) < 1e-12 * s(0));
  CHECK(std::abs(s(0) - s(1)) < 1e-9 * s(0));

  // Every reported inlier satisfies the angular epipolar identity used for
  // classification.
  for (std::size_t i = 0; i < scene.corr.size(); ++i) {
    if (!res.inliers[i]) continue;
    const Vector3 ba = normalize_pixels({scene.corr[i].pixel_a}, kCam)[0];
    const Vector3 bb = normalize_pixels({scene.corr[i].pixel_b}, kCam)[0];
    CHECK(epipolar_angular_error(res.essential, ba, bb) < 1e-3);
  }
}

TEST_CASE("estimate_essential recovers the seeded outlier split") {
  std::mt19937_64 rng(63);
  const Pose t_ab(rot_exp(Vector3(0.0, -0.04, 0.02)), Vector3(0.8, 0.1, 0.4));
  TwoViewScene scene = make_scene(rng, 50, t_ab);

  // Corrupt a fixed 30%: indices 0, 10, 20, ... then 1, 11, 21 ... up to 15.
  std::vector<int> corrupted;
  std::uniform_real_distribution<double> upix(0.0, 640.0);
  for (int i = 0; static_cast<int>(corrupted.size()) < 15; i += 7) {
    const int idx = i % 50;
    if (std::find(corrupted.begin(), corrupted.end(), idx) ==
        corrupted.end()) {
      corrupted.push_back(idx);
      scene.corr[idx].pixel_b = Vector2(upix(rng), upix(rng));
    }
  }

  const EssentialResult res =
      estimate_essential(scene.corr, kCam, kCam, essential_params());
  for (int i = 0; i < 50; ++i) {
    const bool is_corrupted = std::find(corrupted.begin(), corrupted.end(),
                                        i) != corrupted.end();
    CHECK(static_cast<bool>(res.inliers[i]) == !is_corrupted);
  }
}

TEST_CASE("estimate_essential input guards") {
  std::mt19937_64 rng(64);
  const TwoViewScene scene =
      make_scene(rng, 7, Pose(Rotation::identity(), Vector3(1, 0, 0)));
  CHECK_THROWS_AS(
      estimate_essential(scene.corr, kCam, kCam, essential_params()),
      InsufficientDataError);

  // All-random correspondences cannot reach consensus.
  std::uniform_real_distribution<double> upix(0.0, 640.0);
  std::vector<Correspondence2D2D> garbage;
  for (int i = 0; i < 40; ++i) {
    garbage.push_back(Correspondence2D2D{Vector2(upix(rng), upix(rng)),
                                         Vector2(upix(rng), upix(rng))});
  }
  RansacParams strict = essential_params();
  strict.min_inliers = 30;
  strict.max_iterations = 60;
  CHECK_THROWS_AS(estimate_essential(garbage, kCam, kCam, strict),
                  NoConsensusError);
}

TEST_CASE("decompose_essential recovers rotation and direction") {
  std::mt19937_64 rng(65);
  // Forward-translating camera with a mild turn.
  const Pose t_ab(rot_exp(Vector3(0.03, 0.1, -0.02)), Vector3(0.2, 0.1, 1.0));
  const TwoViewScene scene = make_scene(rng, 40, t_ab);

  const Matrix3 e = essential_oracle(t_ab);
  const EssentialDecomposition dec =
      decompose_essential(e, scene.corr, kCam, kCam);

  CHECK(rotation_angle_between(dec.rotation, t_ab.rotation) < 1e-6);
  const Vector3 want = t_ab.translation.normalized();
  CHECK(std::acos(std::min(1.0, dec.direction.dot(want))) < 1e-6);

  // Sign of E is unobservable.
  const EssentialDecomposition neg =
      decompose_essential(Matrix3(-e), scene.corr, kCam, kCam);
  CHECK(rotation_angle_between(neg.rotation, dec.rotation) < 1e-9);
  CHECK((neg.direction - dec.direction).norm() < 1e-9);

  // Rebuilding [d]x R reproduces E up to scale and sign.
  const Matrix3 rebuilt = skew(dec.direction) * dec.rotation.matrix();
  CHECK(matrix_cosine(rebuilt, e) > 1.0 - 1e-8);
}

TEST_CASE("decompose_essential needs enough inliers") {
  std::mt19937_64 rng(66);
  const Pose t_ab(Rotation::identity(), Vector3(1, 0, 0));
  const TwoViewScene scene = make_scene(rng, 4, t_ab);
  CHECK_THROWS_AS(
      decompose_essential(essential_oracle(t_ab), scene.corr, kCam, kCam),
      InsufficientDataError);
}

TEST_CASE("decompose_essential flags degenerate on-axis geometry") {
  // Forward motion along the optical axis with every point on that axis:
  // all rays coincide, so no candidate collects any cheirality support.
  const Pose t_ab(Rotation::identity(), Vector3(0, 0, 1));
  std::vector<Correspondence2D2D> corr;
  for (int i = 0; i < 10; ++i) {
    const Vector3 p_a(0, 0, 4.0 + i);
    const Vector3 p_b = t_ab.inverse() * p_a;
    corr.push_back(Correspondence2D2D{*project_point(kCam, p_a),
                                      *project_point(kCam, p_b)});
  }
  CHECK_THROWS_AS(
      decompose_essential(essential_oracle(t_ab), corr, kCam, kCam),
      AmbiguousDecompositionError);
}

TEST_CASE("triangulate against the closed-form crossing") {
  // Rays at +-45 degrees from two cameras one meter apart cross at
  // (0.5, 0, 0.5); with z=1 bearings the ray parameter equals z.
  const Pose t_ab(Rotation::identity(), Vector3(1, 0, 0));
  const TriangulationResult tri =
      triangulate(Vector3(1, 0, 1), Vector3(-1, 0, 1), t_ab);
  CHECK((tri.point - Vector3(0.5, 0, 0.5)).norm() < 1e-12);
  CHECK(tri.depth_a == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(tri.depth_b == doctest::Approx(0.5).epsilon(1e-12));

  // Crossing behind the cameras is reported through negative depths.
  const TriangulationResult behind =
      triangulate(Vector3(0, 0, 1), Vector3(1, 0, 1), t_ab);
  CHECK(behind.depth_a < 0.0);
  CHECK(behind.depth_b < 0.0);

  CHECK_THROWS_AS(
      triangulate(Vector3(0, 0, 1), Vector3(0, 0, 1), t_ab),
      DegenerateParallaxError);
  // Anti-parallel rays are parallel lines too.
  CHECK_THROWS_AS(
      triangulate(Vector3(0, 0, 1), Vector3(0, 0, -1), t_ab),
      DegenerateParallaxError);
}

TEST_CASE("triangulate is consistent with scene construction") {
  std::mt19937_64 rng(67);
  const Pose t_ab(rot_exp(Vector3(0.1, -0.2, 0.05)), Vector3(1.2, -0.3, 0.4));
  const TwoViewScene scene = make_scene(rng, 30, t_ab);
  for (std::size_t i = 0; i < scene.corr.size(); ++i) {
    const Vector3 ba = normalize_pixels({scene.corr[i].pixel_a}, kCam)[0];
    const Vector3 bb = normalize_pixels({scene.corr[i].pixel_b}, kCam)[0];
    const TriangulationResult tri = triangulate(ba, bb, t_ab);
    CHECK((tri.point - scene.points_a[i]).norm() < 1e-8);
    CHECK(tri.depth_a == doctest::Approx(scene.points_a[i].z()).epsilon(1e-9));
  }
}

TEST_CASE("lift_keypoints_depth") {
  DepthMap guard(480, 640);
  CHECK_THROWS_AS(guard.set(0, 0, -1.0), ParameterError);

  // fx = 300 keeps the (cx + fx, cy) probe inside the 640-wide grid.
  CameraIntrinsics cam{300.0, 300.0, 320.0, 240.0};
  DepthMap d2(480, 640);
  d2.set(240, 320, 4.0);
  d2.set(240, 620, 2.0);
  const std::vector<Vector2> kps = {Vector2(320, 240), Vector2(620, 240)};
  const std::vector<LiftedPoint> lifted =
      lift_keypoints_depth(kps, d2, cam, 30.0);
  REQUIRE(lifted.size() == 2);
  CHECK((lifted[0].point - Vector3(0, 0, 4)).norm() < 1e-12);
  CHECK((lifted[1].point - Vector3(2, 0, 2)).norm() < 1e-12);
  CHECK(lifted[0].keypoint_index == 0);

  // Invalid cells, out-of-range depth, and out-of-bounds keypoints drop.
  const std::vector<Vector2> more = {
      Vector2(10, 10),      // no depth written: invalid
      Vector2(320, 240),    // fine
      Vector2(-5, 7),       // out of bounds
  };
  d2.set(100, 100, 29.0);
  const auto partial = lift_keypoints_depth(more, d2, cam, 30.0);
  REQUIRE(partial.size() == 1);
  CHECK(partial[0].keypoint_index == 1);

  d2.set(240, 320, 31.0);  // beyond max_depth now
  CHECK(lift_keypoints_depth({Vector2(320, 240)}, d2, cam, 30.0).empty());
}

TEST_CASE("depth lifting inverts projection on a rendered map") {
  std::mt19937_64 rng(68);
  CameraIntrinsics cam{300.0, 300.0, 320.0, 240.0};
  DepthMap depth(480, 640);
  std::vector<Vector3> points;
  std::vector<Vector2> keypoints;
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::uniform_real_distribution<double> uz(3.0, 12.0);
  while (points.size() < 40) {
    const Vector3 p(u(rng), u(rng), uz(rng));
    const auto pix = project_point(cam, p);
    if (!pix) continue;
    const int col = static_cast<int>(std::lround(pix->x()));
    const int row = static_cast<int>(std::lround(pix->y()));
    if (!depth.in_bounds(row, col) || depth.is_valid(row, col)) continue;
    // Store the depth the *keypoint pixel* sees so lifting is exact.
    points.push_back(p);
    keypoints.push_back(*pix);
    depth.set(row, col, p.z());
  }
  const auto lifted = lift_keypoints_depth(keypoints, depth, cam, 30.0);
  REQUIRE(lifted.size() == points.size());
  for (const LiftedPoint& lp : lifted) {
    CHECK((lp.point - points[lp.keypoint_index]).norm() < 1e-9);
  }
}

TEST_CASE("lift_keypoints_pointmap") {
  PointMap map(480, 640);
  map.set(240, 320, Vector3(1, 2, 3));
  const auto exact = lift_keypoints_pointmap({Vector2(320, 240)}, map);
  REQUIRE(exact.size() == 1);
  CHECK((exact[0].point - Vector3(1, 2, 3)).norm() == 0.0);

  CHECK(lift_keypoints_pointmap({Vector2(10, 10)}, map).empty());
  CHECK(lift_keypoints_pointmap({Vector2(-3, 11)}, map).empty());

  // Cross-path agreement with depth lifting on the same rendered scene.
  std::mt19937_64 rng(69);
  CameraIntrinsics cam{300.0, 300.0, 320.0, 240.0};
  DepthMap depth(480, 640);
  PointMap pmap(480, 640);
  std::vector<Vector2> keypoints;
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::uniform_real_distribution<double> uz(3.0, 12.0);
  while (keypoints.size() < 30) {
    const Vector3 p(u(rng), u(rng), uz(rng));
    const auto pix = project_point(cam, p);
    if (!pix) continue;
    // Integer keypoints make both paths exact.
    const Vector2 snapped(std::round(pix->x()), std::round(pix->y()));
    const int col = static_cast<int>(snapped.x());
    const int row = static_cast<int>(snapped.y());
    if (!depth.in_bounds(row, col) || depth.is_valid(row, col)) continue;
    const Vector3 cell = p.z() * normalize_pixels({snapped}, cam)[0];
    depth.set(row, col, p.z());
    pmap.set(row, col, cell);
    keypoints.push_back(snapped);
  }
  const auto via_depth = lift_keypoints_depth(keypoints, depth, cam, 30.0);
  const auto via_pmap = lift_keypoints_pointmap(keypoints, pmap);
  REQUIRE(via_depth.size() == via_pmap.size());
  for (std::size_t i = 0; i < via_depth.size(); ++i) {
    CHECK((via_depth[i].point - via_pmap[i].point).norm() < 1e-12);
  }
}

namespace {

RansacParams pnp_params() {
  RansacParams p;
  p.max_iterations = 500;
  p.inlier_threshold = 1e-4;  // pixels; scenes here are noise-free
  p.min_inliers = 10;
  p.rng_seed = 11;
  return p;
}

// Points in frame k plus their pixels in camera a under T (= X_a^-1 X_k).
std::vector<Correspondence2D3D> pnp_scene(std::mt19937_64& rng, int count,
                                          const Pose& t_ak) {
  std::vector<Correspondence2D3D> corr;
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_real_distribution<double> uz(4.0, 12.0);
  while (static_cast<int>(corr.size()) < count) {
    const Vector3 p_k(u(rng), u(rng), uz(rng));
    const auto pix = project_point(kCam, t_ak * p_k);
    if (!pix) continue;
    corr.push_back(Correspondence2D3D{p_k, *pix});
  }
  return corr;
}

}  // namespace

TEST_CASE("solve_pnp recovers a known pose") {
  std::mt19937_64 rng(70);
  const Pose t_ak(rot_exp(Vector3(0.2, -0.3, 0.15)), Vector3(0.8, -0.4, 0.6));
  const auto corr = pnp_scene(rng, 30, t_ak);

  const PnpResult res = solve_pnp(corr, kCam, pnp_params());
  CHECK((res.pose.translation - t_ak.translation).norm() < 1e-6);
  CHECK(rotation_angle_between(res.pose.rotation, t_ak.rotation) < 1e-6);
  for (char f : res.inliers) CHECK(f == 1);
}

TEST_CASE("solve_pnp identity motion") {
  std::mt19937_64 rng(71);
  const auto corr = pnp_scene(rng, 20, Pose::identity());
  const PnpResult res = solve_pnp(corr, kCam, pnp_params());
  CHECK(res.pose.translation.norm() < 1e-6);
  CHECK(rot_log(res.pose.rotation).norm() < 1e-6);
}

TEST_CASE("solve_pnp rejects outliers and refines on inliers") {
  std::mt19937_64 rng(72);
  const Pose t_ak(rot_exp(Vector3(-0.1, 0.2, 0.05)), Vector3(1.5, 0.3, -0.2));
  auto corr = pnp_scene(rng, 40, t_ak);

  // Corrupt a seeded 40%.
  std::vector<int> corrupted;
  std::uniform_real_distribution<double> upix(0.0, 640.0);
  for (int i = 0; static_cast<int>(corrupted.size()) < 16; i += 5) {
    const int idx = (i + 3) % 40;
    if (std::find(corrupted.begin(), corrupted.end(), idx) ==
        corrupted.end()) {
      corrupted.push_back(idx);
      corr[idx].pixel = Vector2(upix(rng), upix(rng));
    }
  }

  RansacParams params = pnp_params();
  params.inlier_threshold = 0.5;  // px
  const PnpResult res = solve_pnp(corr, kCam, params);

  for (int i = 0; i < 40; ++i) {
    const bool is_corrupted = std::find(corrupted.begin(), corrupted.end(),
                                        i) != corrupted.end();
    CHECK(static_cast<bool>(res.inliers[i]) == !is_corrupted);
  }
  CHECK((res.pose.translation - t_ak.translation).norm() < 1e-3);

  // Reported inliers reproject within the threshold.
  for (int i = 0; i < 40; ++i) {
    if (!res.inliers[i]) continue;
    const auto pix = project_point(kCam, res.pose * corr[i].point_3d);
    REQUIRE(pix.has_value());
    CHECK((*pix - corr[i].pixel).norm() < params.inlier_threshold);
  }
}

TEST_CASE("solve_pnp input guards") {
  std::mt19937_64 rng(73);
  const auto corr = pnp_scene(rng, 3, Pose::identity());
  CHECK_THROWS_AS(solve_pnp(corr, kCam, pnp_params()),
                  InsufficientDataError);

  // Random garbage reaches no consensus.
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::uniform_real_distribution<double> upix(0.0, 640.0);
  std::vector<Correspondence2D3D> garbage;
  for (int i = 0; i < 20; ++i) {
    garbage.push_back(Correspondence2D3D{
        Vector3(u(rng), u(rng), 5.0 + std::abs(u(rng))),
        Vector2(upix(rng), upix(rng))});
  }
  RansacParams params = pnp_params();
  params.max_iterations = 50;
  params.min_inliers = 15;
  CHECK_THROWS_AS(solve_pnp(garbage, kCam, params), NoConsensusError);
}

TEST_CASE("absolute and scale-free paths agree on a noise-free scene") {
  std::mt19937_64 rng(74);
  const Pose t_ab(rot_exp(Vector3(0.05, 0.25, -0.1)), Vector3(1.0, 0.4, 1.2));
  const TwoViewScene scene = make_scene(rng, 50, t_ab);

  // Scale-free path: essential matrix -> (rotation, direction).
  const EssentialResult ess =
      estimate_essential(scene.corr, kCam, kCam, essential_params());
  const EssentialDecomposition dec =
      decompose_essential(ess.essential, scene.corr, kCam, kCam);

  // Absolute path: render frame-b depth, lift pixel_b, PnP against pixel_a.
  DepthMap depth(480, 640);
  const Pose t_ba = t_ab.inverse();
  std::vector<Vector2> keypoints_b;
  for (const Vector3& p_a : scene.points_a) {
    const Vector3 p_b = t_ba * p_a;
    const auto pix = project_point(kCam, p_b);
    REQUIRE(pix.has_value());
    keypoints_b.push_back(*pix);
  }
  std::vector<Correspondence2D3D> corr_23;
  for (std::size_t i = 0; i < keypoints_b.size(); ++i) {
    const int col = static_cast<int>(std::lround(keypoints_b[i].x()));
    const int row = static_cast<int>(std::lround(keypoints_b[i].y()));
    if (!depth.in_bounds(row, col) || depth.is_valid(row, col)) continue;
    depth.set(row, col, (t_ba * scene.points_a[i]).z());
    const auto lifted =
        lift_keypoints_depth({keypoints_b[i]}, depth, kCam, 30.0);
    REQUIRE(lifted.size() == 1);
    corr_23.push_back(
        Correspondence2D3D{lifted[0].point, scene.corr[i].pixel_a});
  }
  REQUIRE(corr_23.size() >= 20);
  const PnpResult pnp = solve_pnp(corr_23, kCam, pnp_params());

  // The PnP pose carries metric scale; the decomposition matches it after
  // multiplying the ground-truth scale back in.
  const double scale = t_ab.translation.norm();
  CHECK(rotation_angle_between(pnp.pose.rotation, dec.rotation) < 1e-6);
  CHECK((pnp.pose.translation - scale * dec.direction).norm() < 1e-6);
  CHECK((pnp.pose.translation - t_ab.translation).norm() < 1e-6);
}

TEST_CASE("ransac parameter validation") {
  RansacParams p;
  CHECK_NOTHROW(p.validate());
  p.inlier_threshold = 0.0;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p = RansacParams{};
  p.confidence = 1.0;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p = RansacParams{};
  p.max_iterations = 0;
  CHECK_THROWS_AS(p.validate(), ParameterError);
}
