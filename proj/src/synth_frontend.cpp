#include "tvpgo/synth_frontend.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "tvpgo/detail/text_format.hpp"

namespace tvpgo {

namespace {

using detail::fmt17;

// splitmix64 step; combines seeds so per-frame and per-pair streams are
// independent of each other and of consumption order.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + b * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

Vector3 gauss_vector(std::mt19937_64& rng,
                     std::normal_distribution<double>& gauss) {
  const double x = gauss(rng);
  const double y = gauss(rng);
  const double z = gauss(rng);
  return Vector3{x, y, z};
}

// Camera-in-world rotation for a planar heading angle: z looks along
// (cos phi, sin phi, 0), x points right, y points down (world z is up).
Rotation rotation_for_heading(double phi) {
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  Matrix3 m;
  m.col(0) = Vector3{s, -c, 0.0};   // right
  m.col(1) = Vector3{0.0, 0.0, -1.0};  // down
  m.col(2) = Vector3{c, s, 0.0};    // forward
  return Rotation::from_matrix(m);
}

Pose pose_at(double x, double y, double phi) {
  return Pose{rotation_for_heading(phi), Vector3{x, y, 0.0}};
}

constexpr double kPi = 3.14159265358979323846;

void append_square(const ScenarioSpec& spec, std::vector<Pose>* poses) {
  const double side = spec.side_length;
  const double perimeter = 4.0 * side;
  const int steps = static_cast<int>(std::llround(perimeter / spec.step_length));
  // Start mid-side so the closing pose sits on a straight segment and the
  // final frames look forward along the first frames' positions.
  const double offset = side / 2.0;
  for (int k = 0; k <= steps; ++k) {
    const double u = std::fmod(offset + k * spec.step_length, perimeter);
    const int segment = static_cast<int>(u / side);
    const double rem = u - segment * side;
    switch (segment) {
      case 0: poses->push_back(pose_at(rem, 0.0, 0.0)); break;
      case 1: poses->push_back(pose_at(side, rem, kPi / 2.0)); break;
      case 2: poses->push_back(pose_at(side - rem, side, kPi)); break;
      default: poses->push_back(pose_at(0.0, side - rem, -kPi / 2.0)); break;
    }
  }
}

void append_figure_eight(const ScenarioSpec& spec, std::vector<Pose>* poses) {
  const double r = spec.lobe_radius;
  const int per_lobe = std::max(
      8, static_cast<int>(std::llround(2.0 * kPi * r / spec.step_length)));
  // First lobe: counter-clockwise circle centered at (r, 0), entered at the
  // origin heading -y.
  for (int j = 0; j < per_lobe; ++j) {
    const double theta = 2.0 * kPi * j / per_lobe;
    const double x = r - r * std::cos(theta);
    const double y = -r * std::sin(theta);
    const double phi = std::atan2(-std::cos(theta), std::sin(theta));
    poses->push_back(pose_at(x, y, phi));
  }
  // Second lobe: clockwise circle centered at (-r, 0); heading is
  // continuous through the crossing and the final pose closes the eight.
  for (int j = 0; j <= per_lobe; ++j) {
    const double theta = 2.0 * kPi * j / per_lobe;
    const double x = -r + r * std::cos(theta);
    const double y = -r * std::sin(theta);
    const double phi = std::atan2(-std::cos(theta), -std::sin(theta));
    poses->push_back(pose_at(x, y, phi));
  }
}

void append_corridor(const ScenarioSpec& spec, std::vector<Pose>* poses) {
  const int steps = static_cast<int>(
      std::llround(spec.side_length / spec.step_length));
  for (int k = 0; k <= steps; ++k) {
    poses->push_back(pose_at(k * spec.step_length, 0.0, 0.0));
  }
  // Turn around in place in two quarter turns, then walk back.
  poses->push_back(pose_at(spec.side_length, 0.0, kPi / 2.0));
  poses->push_back(pose_at(spec.side_length, 0.0, kPi));
  for (int k = 1; k <= steps; ++k) {
    poses->push_back(
        pose_at(spec.side_length - k * spec.step_length, 0.0, kPi));
  }
}

void append_random_walk(const ScenarioSpec& spec, std::vector<Pose>* poses) {
  std::mt19937_64 rng(mix_seed(spec.seed, 0x3A1Cull));
  std::normal_distribution<double> gauss(0.0, 1.0);
  double x = 0.0;
  double y = 0.0;
  double phi = 0.0;
  poses->push_back(pose_at(x, y, phi));
  for (int k = 0; k < spec.walk_steps; ++k) {
    phi += 0.25 * gauss(rng);
    x += spec.step_length * std::cos(phi);
    y += spec.step_length * std::sin(phi);
    poses->push_back(pose_at(x, y, phi));
  }
  // Return leg: turn toward the start, walk straight in, and finish on the
  // exact start pose so the trajectory revisits it.
  const double home = std::atan2(-y, -x);
  poses->push_back(pose_at(x, y, home));
  double dist = std::hypot(x, y);
  while (dist > spec.step_length) {
    x += spec.step_length * std::cos(home);
    y += spec.step_length * std::sin(home);
    dist = std::hypot(x, y);
    poses->push_back(pose_at(x, y, home));
  }
  poses->push_back(pose_at(0.0, 0.0, home));
  poses->push_back(pose_at(0.0, 0.0, 0.0));
}

}  // namespace

// ---------------------------------------------------------------------------
// Spec parsing and validation

ScenarioKind parse_scenario_kind(const std::string& name) {
  if (name == "square") return ScenarioKind::kSquare;
  if (name == "figure-eight" || name == "figure_eight") {
    return ScenarioKind::kFigureEight;
  }
  if (name == "corridor") return ScenarioKind::kCorridor;
  if (name == "random-walk" || name == "random_walk") {
    return ScenarioKind::kRandomWalk;
  }
  throw ParameterError("unknown scenario '" + name +
                       "' (expected square, figure-eight, corridor, or "
                       "random-walk)");
}

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kSquare: return "square";
    case ScenarioKind::kFigureEight: return "figure-eight";
    case ScenarioKind::kCorridor: return "corridor";
    case ScenarioKind::kRandomWalk: return "random-walk";
  }
  return "unknown";
}

void NoiseModel::validate() const {
  for (double v : {odom_trans_sigma_per_m, odom_rot_sigma_per_m,
                   odom_trans_sigma_per_rad, odom_rot_sigma_per_rad,
                   odom_trans_bias_per_m, odom_rot_bias_per_m, pixel_sigma,
                   depth_rel_sigma, descriptor_noise}) {
    if (v < 0.0 || !std::isfinite(v)) {
      throw ParameterError("noise terms must be finite and non-negative");
    }
  }
  if (match_outlier_rate < 0.0 || match_outlier_rate >= 1.0) {
    throw ParameterError("match_outlier_rate must be in [0, 1)");
  }
}

bool NoiseModel::is_zero() const {
  return odom_trans_sigma_per_m == 0.0 && odom_rot_sigma_per_m == 0.0 &&
         odom_trans_sigma_per_rad == 0.0 && odom_rot_sigma_per_rad == 0.0 &&
         odom_trans_bias_per_m == 0.0 && odom_rot_bias_per_m == 0.0 &&
         pixel_sigma == 0.0 && depth_rel_sigma == 0.0 &&
         match_outlier_rate == 0.0 && descriptor_noise == 0.0;
}

void ScenarioSpec::validate() const {
  if (!(side_length > 0.0) || !(step_length > 0.0) ||
      step_length > side_length) {
    throw ParameterError("need 0 < step_length <= side_length");
  }
  if (!(lobe_radius > 0.0)) {
    throw ParameterError("lobe_radius must be positive");
  }
  if (walk_steps < 1) throw ParameterError("walk_steps must be >= 1");
  if (landmark_count < 1) {
    throw ParameterError("landmark_count must be >= 1");
  }
  if (landmark_margin < 0.0 || landmark_height < 0.0) {
    throw ParameterError("landmark extents must be non-negative");
  }
  intrinsics.validate();
  if (image_width < 2 || image_height < 2) {
    throw ParameterError("image dimensions must be at least 2x2");
  }
  if (max_keypoints < 1) throw ParameterError("max_keypoints must be >= 1");
  if (descriptor_dim < 1) throw ParameterError("descriptor_dim must be >= 1");
  if (!(descriptor_length_scale > 0.0) || !(descriptor_heading_scale >= 0.0)) {
    throw ParameterError("descriptor scales must be positive");
  }
  if (!(min_render_depth > 0.0) || !(max_render_depth > min_render_depth)) {
    throw ParameterError("need 0 < min_render_depth < max_render_depth");
  }
  noise.validate();
}

ScenarioSpec scenario_from_config(const Config& config) {
  ScenarioSpec s;
  s.kind = parse_scenario_kind(config.get_string("scenario", to_string(s.kind)));
  s.seed = config.get_uint64("seed", s.seed);
  s.side_length = config.get_double("side_length", s.side_length);
  s.step_length = config.get_double("step_length", s.step_length);
  s.lobe_radius = config.get_double("lobe_radius", s.lobe_radius);
  s.walk_steps = config.get_int("walk_steps", s.walk_steps);
  s.landmark_count = config.get_int("landmark_count", s.landmark_count);
  s.landmark_margin = config.get_double("landmark_margin", s.landmark_margin);
  s.landmark_height = config.get_double("landmark_height", s.landmark_height);
  s.intrinsics.fx = config.get_double("fx", s.intrinsics.fx);
  s.intrinsics.fy = config.get_double("fy", s.intrinsics.fy);
  s.intrinsics.cx = config.get_double("cx", s.intrinsics.cx);
  s.intrinsics.cy = config.get_double("cy", s.intrinsics.cy);
  s.image_width = config.get_int("image_width", s.image_width);
  s.image_height = config.get_int("image_height", s.image_height);
  s.max_keypoints = config.get_int("max_keypoints", s.max_keypoints);
  s.descriptor_dim = config.get_int("descriptor_dim", s.descriptor_dim);
  s.descriptor_length_scale = config.get_double("descriptor_length_scale",
                                                s.descriptor_length_scale);
  s.descriptor_heading_scale = config.get_double("descriptor_heading_scale",
                                                 s.descriptor_heading_scale);
  s.min_render_depth = config.get_double("min_render_depth",
                                         s.min_render_depth);
  s.max_render_depth = config.get_double("max_render_depth",
                                         s.max_render_depth);
  s.noise.odom_trans_sigma_per_m = config.get_double(
      "odom_trans_sigma_per_m", s.noise.odom_trans_sigma_per_m);
  s.noise.odom_rot_sigma_per_m = config.get_double(
      "odom_rot_sigma_per_m", s.noise.odom_rot_sigma_per_m);
  s.noise.odom_trans_sigma_per_rad = config.get_double(
      "odom_trans_sigma_per_rad", s.noise.odom_trans_sigma_per_rad);
  s.noise.odom_rot_sigma_per_rad = config.get_double(
      "odom_rot_sigma_per_rad", s.noise.odom_rot_sigma_per_rad);
  s.noise.odom_trans_bias_per_m = config.get_double(
      "odom_trans_bias_per_m", s.noise.odom_trans_bias_per_m);
  s.noise.odom_rot_bias_per_m = config.get_double(
      "odom_rot_bias_per_m", s.noise.odom_rot_bias_per_m);
  s.noise.pixel_sigma = config.get_double("pixel_sigma", s.noise.pixel_sigma);
  s.noise.depth_rel_sigma =
      config.get_double("depth_rel_sigma", s.noise.depth_rel_sigma);
  s.noise.match_outlier_rate =
      config.get_double("match_outlier_rate", s.noise.match_outlier_rate);
  s.noise.descriptor_noise =
      config.get_double("descriptor_noise", s.noise.descriptor_noise);
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Scenario generation

GroundTruth generate_scenario(const ScenarioSpec& spec) {
  spec.validate();
  GroundTruth out;
  switch (spec.kind) {
    case ScenarioKind::kSquare: append_square(spec, &out.poses); break;
    case ScenarioKind::kFigureEight:
      append_figure_eight(spec, &out.poses);
      break;
    case ScenarioKind::kCorridor: append_corridor(spec, &out.poses); break;
    case ScenarioKind::kRandomWalk:
      append_random_walk(spec, &out.poses);
      break;
  }
  out.timestamps.resize(out.poses.size());
  for (std::size_t i = 0; i < out.poses.size(); ++i) {
    out.timestamps[i] = static_cast<double>(i);
  }

  // Landmarks fill a box around the path: its bounding rectangle plus the
  // margin horizontally, +- landmark_height vertically.
  double lo_x = 0.0, hi_x = 0.0, lo_y = 0.0, hi_y = 0.0;
  for (const Pose& p : out.poses) {
    lo_x = std::min(lo_x, p.translation.x());
    hi_x = std::max(hi_x, p.translation.x());
    lo_y = std::min(lo_y, p.translation.y());
    hi_y = std::max(hi_y, p.translation.y());
  }
  std::mt19937_64 rng(mix_seed(spec.seed, 0x1A5Dull));
  std::uniform_real_distribution<double> ux(lo_x - spec.landmark_margin,
                                            hi_x + spec.landmark_margin);
  std::uniform_real_distribution<double> uy(lo_y - spec.landmark_margin,
                                            hi_y + spec.landmark_margin);
  std::uniform_real_distribution<double> uz(-spec.landmark_height,
                                            spec.landmark_height);
  out.landmarks.reserve(static_cast<std::size_t>(spec.landmark_count));
  for (int i = 0; i < spec.landmark_count; ++i) {
    const double x = ux(rng);
    const double y = uy(rng);
    const double z = uz(rng);
    out.landmarks.push_back(Vector3{x, y, z});
  }
  return out;
}

std::vector<Pose> corrupt_odometry(const std::vector<Pose>& ground_truth,
                                   const NoiseModel& noise,
                                   std::uint64_t seed) {
  noise.validate();
  if (noise.is_zero() || ground_truth.size() < 2) return ground_truth;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Vector3 bias_rot = noise.odom_rot_bias_per_m * gauss_vector(rng, gauss);
  const Vector3 bias_trans =
      noise.odom_trans_bias_per_m * gauss_vector(rng, gauss);

  std::vector<Pose> out;
  out.reserve(ground_truth.size());
  out.push_back(ground_truth.front());
  for (std::size_t i = 1; i < ground_truth.size(); ++i) {
    const Pose rel = relative_pose(ground_truth[i - 1], ground_truth[i]);
    const double length = rel.translation.norm();
    const double angle = rot_log(rel.rotation).norm();
    const double sigma_rot = noise.odom_rot_sigma_per_m * length +
                             noise.odom_rot_sigma_per_rad * angle;
    const double sigma_trans = noise.odom_trans_sigma_per_m * length +
                               noise.odom_trans_sigma_per_rad * angle;
    const Vector3 d_rot = bias_rot * length + sigma_rot * gauss_vector(rng, gauss);
    const Vector3 d_trans =
        bias_trans * length + sigma_trans * gauss_vector(rng, gauss);
    const Pose noisy_rel = rel * pose_exp(make_twist(d_rot, d_trans));
    out.push_back(out.back() * noisy_rel);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Descriptors and rendering

namespace {

// Un-normalized random Fourier features of [position; heading * scale]:
// E[f(a) . f(b)] approximates a Gaussian kernel in pose space, giving the
// descriptor its locality.
Eigen::VectorXd raw_place_features(const Pose& pose,
                                   const ScenarioSpec& spec) {
  std::mt19937_64 rng(mix_seed(spec.seed, 0xDE5Cull));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uphase(0.0, 2.0 * kPi);

  Vector6 z;
  z.head<3>() = pose.translation;
  z.tail<3>() = spec.descriptor_heading_scale * (pose.rotation * Vector3::UnitZ());
  z /= spec.descriptor_length_scale;

  Eigen::VectorXd raw(spec.descriptor_dim);
  for (int i = 0; i < spec.descriptor_dim; ++i) {
    Vector6 w;
    for (int k = 0; k < 6; ++k) w[k] = gauss(rng);
    const double phase = uphase(rng);
    raw[i] = std::cos(w.dot(z) + phase);
  }
  return raw;
}

bool pixel_in_grid(const Vector2& pixel, const ScenarioSpec& spec) {
  return pixel.x() >= 0.0 && pixel.x() <= spec.image_width - 1.0 &&
         pixel.y() >= 0.0 && pixel.y() <= spec.image_height - 1.0;
}

}  // namespace

GlobalDescriptor descriptor_for_pose(const Pose& pose,
                                     const ScenarioSpec& spec) {
  return GlobalDescriptor(raw_place_features(pose, spec));
}

FrameObservation render_observation(const Pose& pose,
                                    const std::vector<Vector3>& landmarks,
                                    const ScenarioSpec& spec,
                                    std::uint64_t frame_seed) {
  spec.validate();
  std::mt19937_64 rng(frame_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Pose world_in_cam = pose.inverse();

  struct Visible {
    double depth = 0.0;
    std::size_t landmark = 0;
    Vector2 pixel = Vector2::Zero();
  };
  std::vector<Visible> visible;
  for (std::size_t i = 0; i < landmarks.size(); ++i) {
    const Vector3 p_cam = world_in_cam * landmarks[i];
    if (p_cam.z() < spec.min_render_depth ||
        p_cam.z() > spec.max_render_depth) {
      continue;
    }
    const std::optional<Vector2> exact = project_point(spec.intrinsics, p_cam);
    if (!exact || !pixel_in_grid(*exact, spec)) continue;
    const Vector2 noisy =
        *exact + spec.noise.pixel_sigma * Vector2{gauss(rng), gauss(rng)};
    if (!pixel_in_grid(noisy, spec)) continue;
    visible.push_back(Visible{p_cam.z(), i, noisy});
  }
  std::sort(visible.begin(), visible.end(),
            [](const Visible& a, const Visible& b) {
              return a.depth != b.depth ? a.depth < b.depth
                                        : a.landmark < b.landmark;
            });

  FrameObservation obs;
  obs.depth = DepthMap(spec.image_height, spec.image_width);
  obs.points = PointMap(spec.image_height, spec.image_width);
  struct Kept {
    std::int64_t landmark;
    Vector2 pixel;
  };
  std::vector<Kept> kept;
  for (const Visible& v : visible) {
    if (static_cast<int>(kept.size()) >= spec.max_keypoints) break;
    const int col = static_cast<int>(std::lround(v.pixel.x()));
    const int row = static_cast<int>(std::lround(v.pixel.y()));
    if (obs.depth.is_valid(row, col)) continue;  // nearer landmark owns it
    double rel = spec.noise.depth_rel_sigma * gauss(rng);
    rel = std::clamp(rel, -0.9, 0.9);
    const double noisy_depth = v.depth * (1.0 + rel);
    obs.depth.set(row, col, noisy_depth);
    const Vector3 bearing{(v.pixel.x() - spec.intrinsics.cx) / spec.intrinsics.fx,
                          (v.pixel.y() - spec.intrinsics.cy) / spec.intrinsics.fy,
                          1.0};
    obs.points.set(row, col, noisy_depth * bearing);
    kept.push_back(Kept{static_cast<std::int64_t>(v.landmark), v.pixel});
  }
  std::sort(kept.begin(), kept.end(),
            [](const Kept& a, const Kept& b) { return a.landmark < b.landmark; });
  obs.keypoints.reserve(kept.size());
  obs.landmark_ids.reserve(kept.size());
  for (const Kept& k : kept) {
    obs.keypoints.push_back(k.pixel);
    obs.landmark_ids.push_back(k.landmark);
  }

  Eigen::VectorXd features = raw_place_features(pose, spec);
  for (int i = 0; i < features.size(); ++i) {
    features[i] += spec.noise.descriptor_noise * gauss(rng);
  }
  obs.descriptor = GlobalDescriptor(std::move(features));
  return obs;
}

FrameInput make_frame(const ScenarioSpec& spec, const GroundTruth& truth,
                      const std::vector<Pose>& odometry, int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= truth.poses.size() ||
      truth.poses.size() != odometry.size()) {
    throw ParameterError("frame index out of range");
  }
  FrameInput frame;
  frame.timestamp = truth.timestamps[static_cast<std::size_t>(index)];
  frame.odometry_pose = odometry[static_cast<std::size_t>(index)];
  frame.intrinsics = spec.intrinsics;
  frame.observation = render_observation(
      truth.poses[static_cast<std::size_t>(index)], truth.landmarks, spec,
      mix_seed(spec.seed, 0xF0A1ull, static_cast<std::uint64_t>(index)));
  return frame;
}

// ---------------------------------------------------------------------------
// Matching

MatchSet match_observations(const KeyframeObservation& query,
                            const KeyframeObservation& older,
                            double outlier_rate, std::uint64_t seed,
                            MatchLabels* labels) {
  if (outlier_rate < 0.0 || outlier_rate >= 1.0) {
    throw ParameterError("outlier_rate must be in [0, 1)");
  }
  std::unordered_map<std::int64_t, std::size_t> older_by_landmark;
  for (std::size_t i = 0; i < older.landmark_ids.size(); ++i) {
    older_by_landmark[older.landmark_ids[i]] = i;
  }
  std::vector<int> older_lift(older.keypoints.size(), -1);
  for (std::size_t j = 0; j < older.lifted.size(); ++j) {
    older_lift[older.lifted[j].keypoint_index] = static_cast<int>(j);
  }

  MatchSet out;
  MatchLabels marks;
  for (std::size_t qi = 0; qi < query.landmark_ids.size(); ++qi) {
    const auto it = older_by_landmark.find(query.landmark_ids[qi]);
    if (it == older_by_landmark.end()) continue;
    const std::size_t oi = it->second;
    out.corr_2d2d.push_back(
        Correspondence2D2D{query.keypoints[qi], older.keypoints[oi]});
    marks.genuine_2d2d.push_back(1);
    if (older_lift[oi] >= 0) {
      out.corr_2d3d.push_back(Correspondence2D3D{
          older.lifted[static_cast<std::size_t>(older_lift[oi])].point,
          query.keypoints[qi]});
      marks.genuine_2d3d.push_back(1);
    }
  }

  // Corrupt exactly floor(rate * n) entries of each list with uniformly
  // random pixels; the image box is reconstructed from the principal point.
  std::mt19937_64 rng(seed);
  const auto corrupt = [&rng](std::size_t count, double rate,
                              std::vector<char>* genuine,
                              const std::function<void(std::size_t)>& wreck) {
    const std::size_t n_out =
        static_cast<std::size_t>(rate * static_cast<double>(count));
    if (n_out == 0) return;
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    for (std::size_t i = 0; i < n_out; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, count - 1);
      std::swap(order[i], order[pick(rng)]);
      wreck(order[i]);
      (*genuine)[order[i]] = 0;
    }
  };
  std::uniform_real_distribution<double> u_older(0.0, 2.0 * older.intrinsics.cx);
  std::uniform_real_distribution<double> v_older(0.0, 2.0 * older.intrinsics.cy);
  std::uniform_real_distribution<double> u_query(0.0, 2.0 * query.intrinsics.cx);
  std::uniform_real_distribution<double> v_query(0.0, 2.0 * query.intrinsics.cy);
  corrupt(out.corr_2d2d.size(), outlier_rate, &marks.genuine_2d2d,
          [&](std::size_t i) {
            out.corr_2d2d[i].pixel_b = Vector2{u_older(rng), v_older(rng)};
          });
  corrupt(out.corr_2d3d.size(), outlier_rate, &marks.genuine_2d3d,
          [&](std::size_t i) {
            out.corr_2d3d[i].pixel = Vector2{u_query(rng), v_query(rng)};
          });

  if (labels) *labels = std::move(marks);
  return out;
}

Matcher make_synthetic_matcher(double outlier_rate, std::uint64_t seed) {
  return [outlier_rate, seed](const KeyframeObservation& query,
                              const KeyframeObservation& older) {
    return match_observations(
        query, older, outlier_rate,
        mix_seed(seed, static_cast<std::uint64_t>(query.id),
                 static_cast<std::uint64_t>(older.id)),
        nullptr);
  };
}

// ---------------------------------------------------------------------------
// Adversarial hooks

AdversarialHooks make_adversarial_hooks(Matcher inner,
                                        AdversarialSettings settings) {
  if (!inner) throw ParameterError("adversarial hooks need an inner matcher");
  if (settings.rate < 0.0 || settings.rate > 1.0) {
    throw ParameterError("adversarial rate must be in [0, 1]");
  }
  if (settings.fake_matches < 8) {
    throw ParameterError("fake pairs need at least 8 matches");
  }
  auto injected = std::make_shared<std::set<std::pair<NodeId, NodeId>>>();

  AdversarialHooks hooks;
  hooks.injector = [settings, injected](
                       NodeId query,
                       const std::vector<GraphNode>& keyframes) {
    std::mt19937_64 rng(
        mix_seed(settings.seed, static_cast<std::uint64_t>(query)));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    if (u01(rng) > settings.rate) return std::vector<NodeId>{};
    const GraphNode* query_node = nullptr;
    for (const GraphNode& node : keyframes) {
      if (node.id == query) query_node = &node;
    }
    if (!query_node) return std::vector<NodeId>{};
    std::vector<NodeId> far;
    for (const GraphNode& node : keyframes) {
      if (node.id > query - 2) continue;
      const double separation =
          (node.estimate.translation - query_node->estimate.translation)
              .norm();
      if (separation > settings.min_separation) far.push_back(node.id);
    }
    if (far.empty()) return std::vector<NodeId>{};
    std::uniform_int_distribution<std::size_t> pick(0, far.size() - 1);
    const NodeId chosen = far[pick(rng)];
    injected->insert({query, chosen});
    return std::vector<NodeId>{chosen};
  };

  hooks.matcher = [settings, injected, inner](
                      const KeyframeObservation& query,
                      const KeyframeObservation& older) {
    if (injected->count({query.id, older.id}) == 0) {
      return inner(query, older);
    }
    // Fabricate matches that are perfectly consistent with a small made-up
    // relative pose between two keyframes that are actually far apart.
    std::mt19937_64 rng(mix_seed(settings.seed ^ 0xFAB5ull,
                                 static_cast<std::uint64_t>(query.id),
                                 static_cast<std::uint64_t>(older.id)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const Vector3 axis = 0.05 * gauss_vector(rng, gauss);
    Vector3 baseline = gauss_vector(rng, gauss);
    baseline = settings.fake_baseline * baseline.normalized();
    const Pose fake_t_qo{rot_exp(axis), baseline};

    MatchSet fake;
    int guard = 0;
    while (static_cast<int>(fake.corr_2d2d.size()) < settings.fake_matches &&
           ++guard < 100000) {
      const Vector2 pixel_o{2.0 * older.intrinsics.cx * u01(rng),
                            2.0 * older.intrinsics.cy * u01(rng)};
      const double depth = 4.0 + 12.0 * u01(rng);
      const Vector3 p_o =
          depth * Vector3{(pixel_o.x() - older.intrinsics.cx) /
                              older.intrinsics.fx,
                          (pixel_o.y() - older.intrinsics.cy) /
                              older.intrinsics.fy,
                          1.0};
      const Vector3 p_q = fake_t_qo * p_o;
      const std::optional<Vector2> pixel_q =
          project_point(query.intrinsics, p_q);
      if (!pixel_q) continue;
      if (pixel_q->x() < 0.0 || pixel_q->x() > 2.0 * query.intrinsics.cx ||
          pixel_q->y() < 0.0 || pixel_q->y() > 2.0 * query.intrinsics.cy) {
        continue;
      }
      fake.corr_2d2d.push_back(Correspondence2D2D{*pixel_q, pixel_o});
      fake.corr_2d3d.push_back(Correspondence2D3D{p_o, *pixel_q});
    }
    return fake;
  };
  return hooks;
}

// ---------------------------------------------------------------------------
// Dataset files

namespace {

constexpr const char* kGroundTruthFile = "gt.tum";
constexpr const char* kOdometryFile = "odometry.tum";
constexpr const char* kFramesFile = "frames.txt";

}  // namespace

DatasetWriter::DatasetWriter(const std::string& dir) : dir_(dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) {
    throw IoError("cannot create dataset directory '" + dir_ +
                  "': " + ec.message());
  }
  const std::string path = dir_ + "/" + kFramesFile;
  frames_.open(path);
  if (!frames_) throw IoError("cannot open '" + path + "' for writing");
}

void DatasetWriter::write_ground_truth(const Trajectory& trajectory) {
  write_tum_file(dir_ + "/" + kGroundTruthFile, trajectory);
}

void DatasetWriter::write_odometry(const Trajectory& trajectory) {
  write_tum_file(dir_ + "/" + kOdometryFile, trajectory);
}

void DatasetWriter::append_frame(const FrameInput& frame) {
  const FrameObservation& obs = frame.observation;
  if (obs.keypoints.size() != obs.landmark_ids.size()) {
    throw ParameterError("keypoints and landmark_ids must be parallel");
  }
  frames_ << "frame " << count_ << '\n';
  frames_ << "timestamp " << fmt17(frame.timestamp) << '\n';
  frames_ << "intrinsics " << fmt17(frame.intrinsics.fx) << ' '
          << fmt17(frame.intrinsics.fy) << ' ' << fmt17(frame.intrinsics.cx)
          << ' ' << fmt17(frame.intrinsics.cy) << ' '
          << std::max(obs.depth.width(), obs.points.width()) << ' '
          << std::max(obs.depth.height(), obs.points.height()) << '\n';
  frames_ << "descriptor " << obs.descriptor.dimension();
  for (int i = 0; i < obs.descriptor.dimension(); ++i) {
    frames_ << ' ' << fmt17(obs.descriptor.values()[i]);
  }
  frames_ << '\n';
  frames_ << "keypoints " << obs.keypoints.size() << '\n';
  for (std::size_t i = 0; i < obs.keypoints.size(); ++i) {
    const Vector2& pixel = obs.keypoints[i];
    frames_ << "kp " << obs.landmark_ids[i] << ' ' << fmt17(pixel.x()) << ' '
            << fmt17(pixel.y());
    const int col = static_cast<int>(std::lround(pixel.x()));
    const int row = static_cast<int>(std::lround(pixel.y()));
    const bool has_depth =
        obs.depth.in_bounds(row, col) && obs.depth.is_valid(row, col);
    const bool has_point =
        obs.points.in_bounds(row, col) && obs.points.is_valid(row, col);
    frames_ << ' ' << (has_depth ? fmt17(obs.depth.at(row, col)) : "-");
    if (has_point) {
      const Vector3& p = obs.points.at(row, col);
      frames_ << ' ' << fmt17(p.x()) << ' ' << fmt17(p.y()) << ' '
              << fmt17(p.z());
    } else {
      frames_ << " - - -";
    }
    frames_ << '\n';
  }
  frames_ << "end\n";
  if (!frames_) throw IoError("failed writing frame block");
  ++count_;
}

void DatasetWriter::close() {
  if (frames_.is_open()) {
    frames_.flush();
    if (!frames_) throw IoError("failed flushing frames file");
    frames_.close();
  }
}

DatasetReader::DatasetReader(const std::string& dir) {
  ground_truth_ = read_tum_file(dir + "/" + kGroundTruthFile);
  odometry_ = read_tum_file(dir + "/" + kOdometryFile);
  const std::string path = dir + "/" + kFramesFile;
  frames_.open(path);
  if (!frames_) throw IoError("cannot open '" + path + "'");
}

namespace {

double parse_optional_number(const std::string& token, const char* what) {
  if (token == "-") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double value = std::stod(token, &used);
  if (used != token.size()) {
    throw IoError(std::string("bad ") + what + " '" + token + "'");
  }
  return value;
}

}  // namespace

bool DatasetReader::next(FrameInput* frame) {
  if (!frame) throw ParameterError("next needs an output frame");
  std::string line;
  // Find the next frame header, skipping blank lines.
  std::size_t frame_index = 0;
  bool found = false;
  while (std::getline(frames_, line)) {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag != "frame" || !(ls >> frame_index)) {
      throw IoError("expected a frame header, got '" + line + "'");
    }
    found = true;
    break;
  }
  if (!found) return false;
  if (frame_index != index_) {
    throw IoError("frame blocks out of order at index " +
                  std::to_string(frame_index));
  }
  if (index_ >= odometry_.size()) {
    throw IoError("more frame blocks than odometry entries");
  }

  FrameInput out;
  int width = 0;
  int height = 0;
  std::size_t keypoint_count = 0;
  const auto expect_line = [&](const char* tag) {
    if (!std::getline(frames_, line)) {
      throw IoError(std::string("truncated frame block before '") + tag + "'");
    }
    std::istringstream ls(line);
    std::string got;
    if (!(ls >> got) || got != tag) {
      throw IoError(std::string("expected '") + tag + "', got '" + line + "'");
    }
    return ls;
  };

  {
    std::istringstream ls = expect_line("timestamp");
    if (!(ls >> out.timestamp)) throw IoError("bad timestamp line");
  }
  {
    std::istringstream ls = expect_line("intrinsics");
    if (!(ls >> out.intrinsics.fx >> out.intrinsics.fy >> out.intrinsics.cx >>
          out.intrinsics.cy >> width >> height)) {
      throw IoError("bad intrinsics line");
    }
  }
  {
    std::istringstream ls = expect_line("descriptor");
    int dim = 0;
    if (!(ls >> dim) || dim < 0) throw IoError("bad descriptor line");
    if (dim > 0) {
      Eigen::VectorXd values(dim);
      for (int i = 0; i < dim; ++i) {
        if (!(ls >> values[i])) throw IoError("short descriptor line");
      }
      out.observation.descriptor = GlobalDescriptor(std::move(values));
    }
  }
  {
    std::istringstream ls = expect_line("keypoints");
    if (!(ls >> keypoint_count)) throw IoError("bad keypoints line");
  }
  out.observation.depth = DepthMap(height, width);
  out.observation.points = PointMap(height, width);
  for (std::size_t i = 0; i < keypoint_count; ++i) {
    std::istringstream ls = expect_line("kp");
    std::int64_t landmark = 0;
    double u = 0.0;
    double v = 0.0;
    std::string depth_token, px, py, pz;
    if (!(ls >> landmark >> u >> v >> depth_token >> px >> py >> pz)) {
      throw IoError("bad keypoint line '" + line + "'");
    }
    out.observation.keypoints.push_back(Vector2{u, v});
    out.observation.landmark_ids.push_back(landmark);
    const int col = static_cast<int>(std::lround(u));
    const int row = static_cast<int>(std::lround(v));
    const double depth = parse_optional_number(depth_token, "depth");
    if (std::isfinite(depth)) out.observation.depth.set(row, col, depth);
    const double x = parse_optional_number(px, "point");
    const double y = parse_optional_number(py, "point");
    const double z = parse_optional_number(pz, "point");
    if (std::isfinite(x) && std::isfinite(y) && std::isfinite(z)) {
      out.observation.points.set(row, col, Vector3{x, y, z});
    }
  }
  {
    std::istringstream ls = expect_line("end");
    (void)ls;
  }

  out.odometry_pose = odometry_[index_].pose;
  if (out.timestamp != odometry_[index_].timestamp) {
    throw IoError("frame timestamp disagrees with the odometry file at index " +
                  std::to_string(index_));
  }
  *frame = std::move(out);
  ++index_;
  return true;
}

DatasetInfo generate_dataset(const ScenarioSpec& spec,
                             const std::string& dir) {
  const GroundTruth truth = generate_scenario(spec);
  const std::vector<Pose> odometry =
      corrupt_odometry(truth.poses, spec.noise, mix_seed(spec.seed, 0x0D01ull));

  Trajectory gt_trajectory;
  Trajectory odom_trajectory;
  gt_trajectory.reserve(truth.poses.size());
  odom_trajectory.reserve(truth.poses.size());
  for (std::size_t i = 0; i < truth.poses.size(); ++i) {
    gt_trajectory.push_back(
        TrajectoryEntry{truth.timestamps[i], truth.poses[i]});
    odom_trajectory.push_back(TrajectoryEntry{truth.timestamps[i], odometry[i]});
  }

  DatasetWriter writer(dir);
  writer.write_ground_truth(gt_trajectory);
  writer.write_odometry(odom_trajectory);
  for (std::size_t i = 0; i < truth.poses.size(); ++i) {
    writer.append_frame(
        make_frame(spec, truth, odometry, static_cast<int>(i)));
  }
  writer.close();
  return DatasetInfo{truth.poses.size()};
}

}  // namespace tvpgo
