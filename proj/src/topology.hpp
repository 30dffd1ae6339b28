#ifndef ALCA_TOPOLOGY_HPP
#define ALCA_TOPOLOGY_HPP

#include <string>
#include <vector>

#include "common.hpp"

namespace alca {

// Square joint-by-joint matrix in double precision; converted to the model
// scalar type when layers are built.
struct JointMatrix {
  int joints = 0;
  std::vector<double> values;  // joints x joints, row-major

  static JointMatrix zeros(int joints) {
    JointMatrix m;
    m.joints = joints;
    m.values.assign(static_cast<size_t>(joints) * joints, 0.0);
    return m;
  }
  double& at(int i, int j) { return values[static_cast<size_t>(i) * joints + j]; }
  double at(int i, int j) const {
    return values[static_cast<size_t>(i) * joints + j];
  }
};

enum class BodyPart : int { Head = 0, Hands = 1, Torso = 2, Legs = 3 };
constexpr int kNumParts = 4;
const char* body_part_name(BodyPart p);

// Static description of one skeleton rig: bone edges, the body-center joint
// and the four body-part memberships. `parts` drive the part-restricted
// convolutions and may overlap at boundary joints so every bone is covered;
// `pool_parts` drive the comparing-unit pooling and are disjoint by default
// (see RepresentationConfig::pool_overlap for the overlapping alternative).
struct SkeletonGraph {
  int joints = 0;
  int center = 0;  // 0-based joint index
  std::vector<std::pair<int, int>> edges;
  std::vector<std::vector<int>> parts;       // kNumParts joint-index sets
  std::vector<std::vector<int>> pool_parts;  // kNumParts, disjoint cover

  void validate() const;
  bool has_edge(int i, int j) const;
  std::vector<std::vector<int>> adjacency_lists() const;
};

// The 25-joint rig (0-based indices; the conventional layout numbers them
// 1..25): 0 spine base / central hip, 1 mid spine, 2 neck, 3 head,
// 4-7 left arm, 8-11 right arm, 12-15 left leg, 16-19 right leg,
// 20 spine at shoulder level (the body center), 21-22 left hand tip/thumb,
// 23-24 right hand tip/thumb.
SkeletonGraph ntu25_graph();

// Joint indices used by the frontal-view preprocessing.
struct HipSpineJoints {
  int central_hip = 0;
  int spine = 1;
  int left_hip = 12;
  int right_hip = 16;
};

// BFS hop distance over the bone edges restricted to `allowed` (empty means
// all joints). Returns -1 when unreachable.
int shortest_path_distance(const SkeletonGraph& graph, int from, int to,
                           const std::vector<int>& allowed = {});

// The three global relation matrices: root (identity), centripetal (physical
// neighbors strictly or equally closer to the center) and centrifugal
// (strictly farther). Together they tile adjacency + identity.
struct GlobalRelations {
  JointMatrix root, centripetal, centrifugal;
};
GlobalRelations build_global_relations(const SkeletonGraph& graph);

// Part-restricted adjacency: ones where both joints belong to the part and
// their hop distance inside the part sub-graph is at most 1 (self included).
JointMatrix build_part_adjacency(const SkeletonGraph& graph, BodyPart part);

// Symmetric degree normalization D^{-1/2} A D^{-1/2} with zero-degree rows
// mapped to zero.
JointMatrix normalize_adjacency(const JointMatrix& raw);

enum class SamplingStrategy : int { Both = 0, SkeletonOnly = 1, PartOnly = 2 };
const char* sampling_strategy_name(SamplingStrategy s);
SamplingStrategy sampling_strategy_from(const std::string& name);

// All adjacency channels of one spatial layer, raw and normalized, in a fixed
// order: [root, centripetal, centrifugal] then [head, hands, torso, legs],
// filtered by the sampling strategy (3, 4 or 7 channels).
struct TopologySet {
  std::vector<std::string> names;
  std::vector<JointMatrix> raw;
  std::vector<JointMatrix> normalized;
  int joints = 0;
  size_t count() const { return normalized.size(); }
};
TopologySet build_topology_set(const SkeletonGraph& graph, SamplingStrategy strategy);

// Plain JSON rig description so alternative skeletons can be supplied:
// {"joints": U, "center": c, "edges": [[i,j],...],
//  "parts": {"head": [...], "hands": [...], "torso": [...], "legs": [...]},
//  "pool_parts": {...}}   (pool_parts optional; derived as the
// first-containing-part disjoint refinement when absent). Indices are 0-based.
SkeletonGraph load_skeleton_graph_json(const std::string& json_text);
std::string skeleton_graph_to_json(const SkeletonGraph& graph);

}  // namespace alca

#endif
