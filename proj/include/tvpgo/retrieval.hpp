#pragma once

#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "tvpgo/errors.hpp"
#include "tvpgo/pose_graph.hpp"

namespace tvpgo {

// Global image descriptor, stored L2-normalized so the dot product of two
// descriptors is their cosine similarity.
class GlobalDescriptor {
 public:
  GlobalDescriptor() = default;
  // Normalizes on construction; zero-length or empty vectors are rejected.
  explicit GlobalDescriptor(Eigen::VectorXd values);

  const Eigen::VectorXd& values() const { return values_; }
  int dimension() const { return static_cast<int>(values_.size()); }
  double dot(const GlobalDescriptor& other) const;

 private:
  Eigen::VectorXd values_;
};

struct IndexedDescriptor {
  NodeId id = 0;
  double timestamp = 0.0;
  GlobalDescriptor descriptor;
};

// Append-only descriptor store, one entry per keyframe. Timestamps ride
// along because both the time-gap filter and the tie-break need them.
class DescriptorIndex {
 public:
  void insert(NodeId id, double timestamp, const GlobalDescriptor& descriptor);

  const std::vector<IndexedDescriptor>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(NodeId id) const { return ids_.count(id) > 0; }

 private:
  std::vector<IndexedDescriptor> entries_;
  std::unordered_set<NodeId> ids_;
};

struct RetrievalParams {
  int n_sim = 3;              // max similarity candidates
  int n_prox = 3;             // max proximity candidates
  double delta_r = 0.5;       // proximity rotation gate, radians
  double delta_t = 1.0;       // proximity translation gate, meters
  double min_time_gap = 30.0; // seconds a candidate must predate the query
  double min_similarity = 0.0;

  void validate() const;
};

// Top-n_sim stored ids by descriptor dot product, keeping only entries with
// similarity >= min_similarity and query_time - entry time >= min_time_gap.
// Ties break toward the larger time gap, then the lower id. The index must
// hold only keyframes earlier than the query.
std::vector<NodeId> similarity_candidates(const GlobalDescriptor& query,
                                          double query_time,
                                          const DescriptorIndex& index,
                                          const RetrievalParams& params);

// Earlier keyframes whose current estimate is within delta_t meters AND
// delta_r radians of the current keyframe (both strictly), at least
// min_time_gap seconds older, ranked by decreasing time gap and truncated
// to n_prox. Estimates should come from the latest optimization.
std::vector<NodeId> proximity_candidates(NodeId current,
                                         const std::vector<GraphNode>& keyframes,
                                         const RetrievalParams& params);

// Set union preserving order: similarity candidates first, then proximity
// candidates not already present.
std::vector<NodeId> merge_candidates(const std::vector<NodeId>& sim,
                                     const std::vector<NodeId>& prox);

}  // namespace tvpgo
