#include "tvpgo/graph_io.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tvpgo/detail/text_format.hpp"

namespace tvpgo {

namespace {

using detail::fmt17;

std::string fmt(double v) { return fmt17(v); }

void write_pose_fields(std::ostream& out, const Rotation& r,
                       const Vector3& t) {
  const Eigen::Quaterniond& q = r.quaternion();
  out << ' ' << fmt(t.x()) << ' ' << fmt(t.y()) << ' ' << fmt(t.z()) << ' '
      << fmt(q.x()) << ' ' << fmt(q.y()) << ' ' << fmt(q.z()) << ' '
      << fmt(q.w());
}

void write_info(std::ostream& out, const Matrix6& m) {
  for (int row = 0; row < 6; ++row) {
    for (int col = row; col < 6; ++col) {
      out << ' ' << fmt(m(row, col));
    }
  }
}

Matrix6 parse_info(const std::vector<double>& v, std::size_t offset) {
  Matrix6 m;
  std::size_t k = offset;
  for (int row = 0; row < 6; ++row) {
    for (int col = row; col < 6; ++col) {
      m(row, col) = v[k];
      m(col, row) = v[k];
      ++k;
    }
  }
  return m;
}

Rotation parse_quat(const std::vector<double>& v, std::size_t offset) {
  Eigen::Quaterniond q;
  q.x() = v[offset];
  q.y() = v[offset + 1];
  q.z() = v[offset + 2];
  q.w() = v[offset + 3];
  return Rotation::from_quaternion(q);
}

}  // namespace

void write_graph(std::ostream& out, const PoseGraph& graph) {
  for (const GraphNode& node : graph.nodes()) {
    out << "VERTEX_SE3:QUAT " << node.id;
    write_pose_fields(out, node.estimate.rotation, node.estimate.translation);
    out << '\n';
  }
  for (const Edge& edge : graph.edges()) {
    std::visit(
        [&](const auto& e) {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, PriorEdge>) {
            out << "EDGE_SE3:QUAT " << e.node << ' ' << e.node;
            write_pose_fields(out, e.anchor.rotation, e.anchor.translation);
            write_info(out, e.info.matrix());
          } else if constexpr (std::is_same_v<T, ScaleFreeLoopEdge>) {
            out << "EDGE_SE3_DIR " << e.from << ' ' << e.to;
            write_pose_fields(out, e.rotation, e.direction);
            write_info(out, e.info.matrix());
          } else {
            out << "EDGE_SE3:QUAT " << e.from << ' ' << e.to;
            write_pose_fields(out, e.measurement.rotation,
                              e.measurement.translation);
            write_info(out, e.info.matrix());
          }
          out << '\n';
        },
        edge);
  }
}

void write_graph_file(const std::string& path, const PoseGraph& graph) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_graph(out, graph);
  if (!out) throw IoError("write failed for " + path);
}

PoseGraph read_graph(std::istream& in) {
  PoseGraph graph;
  std::string line;
  int line_no = 0;
  const auto fail = [&](const std::string& what) {
    throw IoError("graph line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag.empty() || tag[0] == '#') continue;

    std::vector<double> v;
    if (tag == "VERTEX_SE3:QUAT") {
      NodeId id;
      if (!(ls >> id)) fail("bad vertex id");
      double x;
      while (ls >> x) v.push_back(x);
      if (v.size() != 7) fail("vertex needs 7 numeric fields");
      GraphNode node;
      node.id = id;
      node.estimate = Pose(parse_quat(v, 3), Vector3(v[0], v[1], v[2]));
      graph.add_node(node);
    } else if (tag == "EDGE_SE3:QUAT" || tag == "EDGE_SE3_DIR") {
      NodeId i, j;
      if (!(ls >> i >> j)) fail("bad edge endpoints");
      double x;
      while (ls >> x) v.push_back(x);
      if (v.size() != 7 + 21) fail("edge needs 28 numeric fields");
      const Rotation rot = parse_quat(v, 3);
      const Vector3 t(v[0], v[1], v[2]);
      const InformationMatrix info =
          InformationMatrix::from_matrix(parse_info(v, 7));
      if (tag == "EDGE_SE3_DIR") {
        graph.add_edge(ScaleFreeLoopEdge{i, j, rot, t, info, true});
      } else if (i == j) {
        graph.add_edge(PriorEdge{i, Pose(rot, t), info});
      } else if (j == i + 1) {
        graph.add_edge(OdometryEdge{i, j, Pose(rot, t), info});
      } else {
        graph.add_edge(AbsoluteLoopEdge{i, j, Pose(rot, t), info, true});
      }
    } else {
      fail("unknown record '" + tag + "'");
    }
  }
  return graph;
}

PoseGraph read_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_graph(in);
}

}  // namespace tvpgo
