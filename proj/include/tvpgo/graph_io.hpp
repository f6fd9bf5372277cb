#pragma once

#include <iosfwd>
#include <string>

#include "tvpgo/pose_graph.hpp"

namespace tvpgo {

/// Line-oriented graph text format.
///
///   VERTEX_SE3:QUAT id tx ty tz qx qy qz qw
///   EDGE_SE3:QUAT  i j tx ty tz qx qy qz qw  <21 info entries>
///   EDGE_SE3_DIR   i j dx dy dz qx qy qz qw  <21 info entries>
///
/// EDGE_SE3:QUAT lines are classified by their endpoints: i == j is the
/// prior (anchor stored as the measurement), j == i+1 odometry, otherwise
/// an absolute loop closure. EDGE_SE3_DIR carries a scale-free closure:
/// unit baseline direction plus rotation quaternion. Info entries are the
/// upper triangle of the 6x6 information matrix, row-major, in the
/// library's (rotation, translation) residual ordering. Values are printed
/// with 17 significant digits, so write/read round-trips are bit-faithful.
///
/// Node timestamps are not part of the format and read back as 0.
void write_graph(std::ostream& out, const PoseGraph& graph);
void write_graph_file(const std::string& path, const PoseGraph& graph);

/// Throws IoError on malformed lines (with the line number) and propagates
/// the structural errors of PoseGraph::add_edge for inconsistent content.
PoseGraph read_graph(std::istream& in);
PoseGraph read_graph_file(const std::string& path);

}  // namespace tvpgo
