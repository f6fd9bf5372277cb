#include "tvpgo/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "tvpgo/detail/text_format.hpp"

namespace tvpgo {

namespace {

using detail::fmt17;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

// Numeric fields of one non-comment line, or empty for skippable lines.
bool parse_fields(const std::string& line, std::vector<double>* fields) {
  fields->clear();
  std::istringstream ls(line);
  std::string first;
  if (!(ls >> first) || first[0] == '#') return true;
  std::istringstream all(line);
  double x;
  while (all >> x) fields->push_back(x);
  return !(all.fail() && !all.eof());  // reject non-numeric tokens
}

}  // namespace

void write_tum(std::ostream& out, const Trajectory& trajectory) {
  for (const TrajectoryEntry& e : trajectory) {
    const Eigen::Quaterniond& q = e.pose.rotation.quaternion();
    const Vector3& t = e.pose.translation;
    out << fmt17(e.timestamp) << ' ' << fmt17(t.x()) << ' ' << fmt17(t.y())
        << ' ' << fmt17(t.z()) << ' ' << fmt17(q.x()) << ' ' << fmt17(q.y())
        << ' ' << fmt17(q.z()) << ' ' << fmt17(q.w()) << '\n';
  }
}

void write_tum_file(const std::string& path, const Trajectory& trajectory) {
  auto out = open_out(path);
  write_tum(out, trajectory);
  if (!out) throw IoError("write failed for " + path);
}

Trajectory read_tum(std::istream& in) {
  Trajectory trajectory;
  std::string line;
  std::vector<double> v;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!parse_fields(line, &v)) {
      throw IoError("tum line " + std::to_string(line_no) +
                    ": non-numeric field");
    }
    if (v.empty()) continue;
    if (v.size() != 8) {
      throw IoError("tum line " + std::to_string(line_no) +
                    ": expected 8 fields, got " + std::to_string(v.size()));
    }
    Eigen::Quaterniond q;
    q.x() = v[4];
    q.y() = v[5];
    q.z() = v[6];
    q.w() = v[7];
    trajectory.push_back(TrajectoryEntry{
        v[0], Pose(Rotation::from_quaternion(q), Vector3(v[1], v[2], v[3]))});
  }
  return trajectory;
}

Trajectory read_tum_file(const std::string& path) {
  auto in = open_in(path);
  return read_tum(in);
}

void write_kitti(std::ostream& out, const Trajectory& trajectory) {
  for (const TrajectoryEntry& e : trajectory) {
    const Matrix3 r = e.pose.rotation.matrix();
    const Vector3& t = e.pose.translation;
    for (int row = 0; row < 3; ++row) {
      if (row > 0) out << ' ';
      out << fmt17(r(row, 0)) << ' ' << fmt17(r(row, 1)) << ' '
          << fmt17(r(row, 2)) << ' ' << fmt17(t(row));
    }
    out << '\n';
  }
}

void write_kitti_file(const std::string& path, const Trajectory& trajectory) {
  auto out = open_out(path);
  write_kitti(out, trajectory);
  if (!out) throw IoError("write failed for " + path);
}

Trajectory read_kitti(std::istream& in) {
  Trajectory trajectory;
  std::string line;
  std::vector<double> v;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!parse_fields(line, &v)) {
      throw IoError("kitti line " + std::to_string(line_no) +
                    ": non-numeric field");
    }
    if (v.empty()) continue;
    if (v.size() != 12) {
      throw IoError("kitti line " + std::to_string(line_no) +
                    ": expected 12 fields, got " + std::to_string(v.size()));
    }
    Matrix3 r;
    Vector3 t;
    for (int row = 0; row < 3; ++row) {
      r(row, 0) = v[4 * row];
      r(row, 1) = v[4 * row + 1];
      r(row, 2) = v[4 * row + 2];
      t(row) = v[4 * row + 3];
    }
    trajectory.push_back(
        TrajectoryEntry{static_cast<double>(trajectory.size()),
                        Pose(Rotation::from_matrix(r), t)});
  }
  return trajectory;
}

Trajectory read_kitti_file(const std::string& path) {
  auto in = open_in(path);
  return read_kitti(in);
}

std::vector<std::pair<std::size_t, std::size_t>> associate_timestamps(
    const Trajectory& estimated, const Trajectory& reference, double max_dt) {
  if (max_dt < 0.0) throw ParameterError("max_dt must be non-negative");
  // Sort reference indices by timestamp for binary search.
  std::vector<std::size_t> order(reference.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return reference[a].timestamp < reference[b].timestamp;
  });
  std::vector<char> used(reference.size(), 0);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    const double t = estimated[i].timestamp;
    auto it = std::lower_bound(order.begin(), order.end(), t,
                               [&](std::size_t idx, double val) {
                                 return reference[idx].timestamp < val;
                               });
    std::size_t best = reference.size();
    double best_dt = max_dt;
    for (auto probe : {it, it == order.begin() ? order.end() : it - 1}) {
      if (probe == order.end()) continue;
      const double dt = std::abs(reference[*probe].timestamp - t);
      if (dt <= best_dt && !used[*probe]) {
        best_dt = dt;
        best = *probe;
      }
    }
    if (best < reference.size()) {
      used[best] = 1;
      pairs.emplace_back(i, best);
    }
  }
  return pairs;
}

Pose align_6dof(const Trajectory& estimated, const Trajectory& reference,
                double max_dt) {
  const auto pairs = associate_timestamps(estimated, reference, max_dt);
  if (pairs.size() < 3) {
    throw EvaluationError("alignment needs at least 3 associated poses, got " +
                          std::to_string(pairs.size()));
  }
  Vector3 c_est = Vector3::Zero();
  Vector3 c_ref = Vector3::Zero();
  for (const auto& [i, j] : pairs) {
    c_est += estimated[i].pose.translation;
    c_ref += reference[j].pose.translation;
  }
  c_est /= static_cast<double>(pairs.size());
  c_ref /= static_cast<double>(pairs.size());

  Matrix3 cross = Matrix3::Zero();
  Matrix3 spread = Matrix3::Zero();
  for (const auto& [i, j] : pairs) {
    const Vector3 pe = estimated[i].pose.translation - c_est;
    const Vector3 pr = reference[j].pose.translation - c_ref;
    cross += pe * pr.transpose();
    spread += pe * pe.transpose();
  }
  // A collinear estimate cloud leaves rotation about the line unconstrained.
  Eigen::SelfAdjointEigenSolver<Matrix3> spread_eig(spread);
  const Vector3 ev = spread_eig.eigenvalues();
  if (ev(1) <= 1e-12 * std::max(ev(2), 1.0)) {
    throw EvaluationError("alignment is degenerate: associated positions "
                          "are collinear");
  }

  Eigen::JacobiSVD<Matrix3> svd(cross,
                                Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3 d = Matrix3::Identity();
  d(2, 2) = ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0)
                ? -1.0
                : 1.0;
  const Matrix3 r = svd.matrixV() * d * svd.matrixU().transpose();
  const Rotation rot = Rotation::from_matrix(r);
  return Pose(rot, c_ref - r * c_est);
}

double rmse_ate(const Trajectory& estimated, const Trajectory& reference,
                double max_dt) {
  const Pose g = align_6dof(estimated, reference, max_dt);
  const auto pairs = associate_timestamps(estimated, reference, max_dt);
  double sum_sq = 0.0;
  for (const auto& [i, j] : pairs) {
    const Vector3 r =
        g * estimated[i].pose.translation - reference[j].pose.translation;
    sum_sq += r.squaredNorm();
  }
  return std::sqrt(sum_sq / static_cast<double>(pairs.size()));
}

double percent_decrease(double baseline_ate, double ate) {
  if (!(baseline_ate > 0.0)) {
    throw ParameterError("baseline ATE must be positive");
  }
  return 100.0 * (baseline_ate - ate) / baseline_ate;
}

namespace {

double direction_angle(const Vector3& a, const Vector3& b) {
  const double c = std::clamp(a.dot(b), -1.0, 1.0);
  return std::acos(c);
}

}  // namespace

EdgeErrors lc_edge_errors(const AbsoluteLoopEdge& edge, const Pose& gt_from,
                          const Pose& gt_to) {
  const Pose expected = relative_pose(gt_from, gt_to);
  EdgeErrors e;
  e.rot_error =
      rot_log(edge.measurement.rotation.inverse() * expected.rotation).norm();
  e.trans_error = (edge.measurement.translation - expected.translation).norm();
  return e;
}

EdgeErrors lc_edge_errors(const ScaleFreeLoopEdge& edge, const Pose& gt_from,
                          const Pose& gt_to) {
  const Pose expected = relative_pose(gt_from, gt_to);
  EdgeErrors e;
  e.rot_error = rot_log(edge.rotation.inverse() * expected.rotation).norm();
  e.trans_error = direction_angle(edge.direction,
                                  normalize_translation(expected.translation));
  return e;
}

}  // namespace tvpgo
