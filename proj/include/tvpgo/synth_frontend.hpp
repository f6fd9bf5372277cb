#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "tvpgo/config.hpp"
#include "tvpgo/lc_pipeline.hpp"
#include "tvpgo/trajectory.hpp"

namespace tvpgo {

// ---------------------------------------------------------------------------
// Scenario description

enum class ScenarioKind { kSquare, kFigureEight, kCorridor, kRandomWalk };

ScenarioKind parse_scenario_kind(const std::string& name);
std::string to_string(ScenarioKind kind);

// Odometry, measurement, and matching corruption levels. All terms are
// standard deviations (or rates); setting every field to zero makes the
// generator exact.
struct NoiseModel {
  // White per-step odometry noise, scaled by the step's length / rotation.
  double odom_trans_sigma_per_m = 0.01;
  double odom_rot_sigma_per_m = 0.0005;
  double odom_trans_sigma_per_rad = 0.002;
  double odom_rot_sigma_per_rad = 0.005;
  // Per-run constant bias (drawn once per seed, zero-mean across seeds),
  // applied per meter travelled.
  double odom_trans_bias_per_m = 0.003;
  double odom_rot_bias_per_m = 0.0004;

  double pixel_sigma = 0.5;        // pixels
  double depth_rel_sigma = 0.02;   // fraction of true depth
  double match_outlier_rate = 0.1; // fraction of matches corrupted
  double descriptor_noise = 0.05;  // additive, before re-normalization

  void validate() const;
  bool is_zero() const;
};

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::kSquare;
  std::uint64_t seed = 0;

  double side_length = 50.0;  // square side / corridor length, meters
  double step_length = 1.0;   // meters between consecutive frames
  double lobe_radius = 20.0;  // figure-eight lobe radius
  int walk_steps = 120;       // random-walk length before the return leg

  int landmark_count = 1500;
  double landmark_margin = 12.0;  // horizontal halo around the path, meters
  double landmark_height = 5.0;   // |z| bound on landmark height

  CameraIntrinsics intrinsics{400.0, 400.0, 320.0, 240.0};
  int image_width = 640;
  int image_height = 480;
  int max_keypoints = 250;  // nearest-first cap per frame

  int descriptor_dim = 64;
  double descriptor_length_scale = 3.0;   // meters
  double descriptor_heading_scale = 2.0;  // meters per unit heading change

  double min_render_depth = 0.5;
  double max_render_depth = 30.0;

  NoiseModel noise;

  void validate() const;
};

// Reads scenario keys from a config, falling back to the defaults above.
ScenarioSpec scenario_from_config(const Config& config);

// ---------------------------------------------------------------------------
// Generation

struct GroundTruth {
  std::vector<double> timestamps;  // one frame per second
  std::vector<Pose> poses;         // camera-in-world, z forward, y down
  std::vector<Vector3> landmarks;
};

// Deterministic function of the spec. Every scenario revisits earlier poses:
// the square and figure-eight close their loops exactly, the corridor turns
// around in place, and the random walk navigates back to its start pose.
GroundTruth generate_scenario(const ScenarioSpec& spec);

// Re-chains the ground-truth relative motions after perturbing each step in
// its local frame (white noise plus a per-run constant bias, both scaled by
// the step's length and rotation). The first pose is kept as the anchor.
// A zero noise model returns the input unchanged.
std::vector<Pose> corrupt_odometry(const std::vector<Pose>& ground_truth,
                                   const NoiseModel& noise,
                                   std::uint64_t seed);

// Noise-free place descriptor: random Fourier features of position and
// heading, so the dot product of two descriptors falls off smoothly with
// pose distance (length scale spec.descriptor_length_scale).
GlobalDescriptor descriptor_for_pose(const Pose& pose,
                                     const ScenarioSpec& spec);

// Projects the landmarks visible from `pose` into a synthetic frame:
// keypoints with pixel noise, a depth map and point map populated at the
// keypoint cells (depth noise applied consistently to both), and the place
// descriptor with additive noise. Keypoints are capped at
// spec.max_keypoints, nearest landmarks first; landmark ids label the
// keypoints for the synthetic matcher.
FrameObservation render_observation(const Pose& pose,
                                    const std::vector<Vector3>& landmarks,
                                    const ScenarioSpec& spec,
                                    std::uint64_t frame_seed);

// Full pipeline input for frame `index`: ground-truth rendering plus the
// corrupted odometry pose.
FrameInput make_frame(const ScenarioSpec& spec, const GroundTruth& truth,
                      const std::vector<Pose>& odometry, int index);

// ---------------------------------------------------------------------------
// Matching

struct MatchLabels {
  std::vector<char> genuine_2d2d;  // 0 marks an injected outlier
  std::vector<char> genuine_2d3d;
};

// Associates keypoints by shared landmark id, then corrupts exactly
// floor(outlier_rate * n) entries of each list with gross mismatches.
// Labels (when requested) mark which entries survived untouched.
MatchSet match_observations(const KeyframeObservation& query,
                            const KeyframeObservation& older,
                            double outlier_rate, std::uint64_t seed,
                            MatchLabels* labels = nullptr);

// Matcher for LoopClosurePipeline; the per-pair seed derives from
// (seed, query id, older id) so runs are reproducible.
Matcher make_synthetic_matcher(double outlier_rate, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Adversarial hooks (robustness experiments)

struct AdversarialSettings {
  double rate = 0.3;            // fraction of keyframes given a fake pair
  double min_separation = 15.0; // meters between the true positions
  double fake_baseline = 1.0;   // magnitude of the fabricated relative motion
  int fake_matches = 60;
  std::uint64_t seed = 0x5EED;
};

struct AdversarialHooks {
  CandidateInjector injector;
  Matcher matcher;
};

// Produces a candidate injector that proposes far-apart keyframe pairs and
// a matcher that fabricates geometrically self-consistent (but globally
// wrong) correspondences for exactly those pairs; all other pairs fall
// through to `inner`.
AdversarialHooks make_adversarial_hooks(Matcher inner,
                                        AdversarialSettings settings);

// ---------------------------------------------------------------------------
// Dataset files
//
// A dataset directory holds gt.tum, odometry.tum, and frames.txt (one block
// per frame: timestamp, intrinsics, descriptor, and per-keypoint landmark
// id, pixel, depth, and camera-frame point). Reading rebuilds frame inputs
// whose maps are populated exactly at the keypoint cells, which is the
// shape the generator produces, so a written dataset replays identically.

struct DatasetInfo {
  std::size_t frame_count = 0;
};

class DatasetWriter {
 public:
  explicit DatasetWriter(const std::string& dir);

  void write_ground_truth(const Trajectory& trajectory);
  void write_odometry(const Trajectory& trajectory);
  void append_frame(const FrameInput& frame);
  void close();

  std::size_t frames_written() const { return count_; }

 private:
  std::string dir_;
  std::ofstream frames_;
  std::size_t count_ = 0;
};

class DatasetReader {
 public:
  explicit DatasetReader(const std::string& dir);

  const Trajectory& ground_truth() const { return ground_truth_; }
  const Trajectory& odometry() const { return odometry_; }

  // Streams the next frame; false at end of file.
  bool next(FrameInput* frame);

 private:
  Trajectory ground_truth_;
  Trajectory odometry_;
  std::ifstream frames_;
  std::size_t index_ = 0;
};

// Generates the scenario and streams the whole dataset to `dir`.
DatasetInfo generate_dataset(const ScenarioSpec& spec, const std::string& dir);

}  // namespace tvpgo
