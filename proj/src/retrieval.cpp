#include "tvpgo/retrieval.hpp"

#include <algorithm>
#include <string>

#include "tvpgo/se3.hpp"

namespace tvpgo {

GlobalDescriptor::GlobalDescriptor(Eigen::VectorXd values)
    : values_(std::move(values)) {
  if (values_.size() == 0) {
    throw ParameterError("descriptor must not be empty");
  }
  const double norm = values_.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw ParameterError("descriptor must have nonzero finite norm");
  }
  values_ /= norm;
}

double GlobalDescriptor::dot(const GlobalDescriptor& other) const {
  if (dimension() != other.dimension()) {
    throw ParameterError("descriptor dimensions differ: " +
                         std::to_string(dimension()) + " vs " +
                         std::to_string(other.dimension()));
  }
  return values_.dot(other.values_);
}

void DescriptorIndex::insert(NodeId id, double timestamp,
                             const GlobalDescriptor& descriptor) {
  if (descriptor.dimension() == 0) {
    throw ParameterError("cannot index an empty descriptor");
  }
  if (!entries_.empty() &&
      descriptor.dimension() != entries_.front().descriptor.dimension()) {
    throw StructuralError("descriptor dimension mismatch in index");
  }
  if (!ids_.insert(id).second) {
    throw StructuralError("keyframe " + std::to_string(id) +
                          " already has a descriptor");
  }
  entries_.push_back(IndexedDescriptor{id, timestamp, descriptor});
}

void RetrievalParams::validate() const {
  if (n_sim < 0 || n_prox < 0) {
    throw ParameterError("candidate counts must be non-negative");
  }
  if (!(delta_r > 0.0) || !(delta_t > 0.0)) {
    throw ParameterError("proximity thresholds must be positive");
  }
  if (min_time_gap < 0.0) {
    throw ParameterError("min_time_gap must be non-negative");
  }
}

std::vector<NodeId> similarity_candidates(const GlobalDescriptor& query,
                                          double query_time,
                                          const DescriptorIndex& index,
                                          const RetrievalParams& params) {
  params.validate();
  struct Scored {
    double similarity;
    double gap;
    NodeId id;
  };
  std::vector<Scored> scored;
  scored.reserve(index.size());
  for (const IndexedDescriptor& entry : index.entries()) {
    const double gap = query_time - entry.timestamp;
    if (gap < params.min_time_gap) continue;
    const double similarity = query.dot(entry.descriptor);
    if (similarity < params.min_similarity) continue;
    scored.push_back(Scored{similarity, gap, entry.id});
  }
  std::sort(scored.begin(), scored.end(),
            [](const Scored& a, const Scored& b) {
              if (a.similarity != b.similarity)
                return a.similarity > b.similarity;
              if (a.gap != b.gap) return a.gap > b.gap;
              return a.id < b.id;
            });
  if (static_cast<int>(scored.size()) > params.n_sim) {
    scored.resize(static_cast<std::size_t>(params.n_sim));
  }
  std::vector<NodeId> ids;
  ids.reserve(scored.size());
  for (const Scored& s : scored) ids.push_back(s.id);
  return ids;
}

std::vector<NodeId> proximity_candidates(NodeId current,
                                         const std::vector<GraphNode>& keyframes,
                                         const RetrievalParams& params) {
  params.validate();
  const GraphNode* query = nullptr;
  for (const GraphNode& node : keyframes) {
    if (node.id == current) {
      query = &node;
      break;
    }
  }
  if (query == nullptr) {
    throw StructuralError("keyframe " + std::to_string(current) +
                          " has no estimate");
  }

  struct Scored {
    double gap;
    NodeId id;
  };
  std::vector<Scored> scored;
  for (const GraphNode& node : keyframes) {
    if (node.id >= current) continue;  // causality
    const double gap = query->timestamp - node.timestamp;
    if (gap < params.min_time_gap) continue;
    const PoseMetrics metrics =
        pose_metrics(relative_pose(query->estimate, node.estimate));
    if (!(metrics.rot_angle < params.delta_r)) continue;
    if (!(metrics.trans_norm < params.delta_t)) continue;
    scored.push_back(Scored{gap, node.id});
  }
  std::sort(scored.begin(), scored.end(),
            [](const Scored& a, const Scored& b) {
              if (a.gap != b.gap) return a.gap > b.gap;
              return a.id < b.id;
            });
  if (static_cast<int>(scored.size()) > params.n_prox) {
    scored.resize(static_cast<std::size_t>(params.n_prox));
  }
  std::vector<NodeId> ids;
  ids.reserve(scored.size());
  for (const Scored& s : scored) ids.push_back(s.id);
  return ids;
}

std::vector<NodeId> merge_candidates(const std::vector<NodeId>& sim,
                                     const std::vector<NodeId>& prox) {
  std::vector<NodeId> merged;
  std::unordered_set<NodeId> seen;
  merged.reserve(sim.size() + prox.size());
  for (NodeId id : sim) {
    if (seen.insert(id).second) merged.push_back(id);
  }
  for (NodeId id : prox) {
    if (seen.insert(id).second) merged.push_back(id);
  }
  return merged;
}

}  // namespace tvpgo
