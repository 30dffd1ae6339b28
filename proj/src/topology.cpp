#include "topology.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

#include <nlohmann/json.hpp>

namespace alca {

using nlohmann::json;

const char* body_part_name(BodyPart p) {
  switch (p) {
    case BodyPart::Head: return "head";
    case BodyPart::Hands: return "hands";
    case BodyPart::Torso: return "torso";
    case BodyPart::Legs: return "legs";
  }
  return "?";
}

void SkeletonGraph::validate() const {
  ALCA_THROW_IF(joints < 2, ErrorKind::Config, "skeleton graph: needs >= 2 joints");
  ALCA_THROW_IF(center < 0 || center >= joints, ErrorKind::Config,
                "skeleton graph: center joint ", center, " out of range");
  for (auto [i, j] : edges) {
    ALCA_THROW_IF(i < 0 || i >= joints || j < 0 || j >= joints || i == j,
                  ErrorKind::Config, "skeleton graph: bad edge (", i, ",", j, ")");
  }
  ALCA_THROW_IF(parts.size() != kNumParts, ErrorKind::Config,
                "skeleton graph: expected ", kNumParts, " parts");
  ALCA_THROW_IF(pool_parts.size() != kNumParts, ErrorKind::Config,
                "skeleton graph: expected ", kNumParts, " pooling parts");

  // Connectivity over the full bone graph.
  for (int v = 0; v < joints; ++v) {
    ALCA_THROW_IF(shortest_path_distance(*this, center, v) < 0,
                  ErrorKind::Config, "skeleton graph: joint ", v,
                  " unreachable from center");
  }

  auto check_cover = [&](const std::vector<std::vector<int>>& sets,
                         const char* what) {
    std::vector<int> hit(static_cast<size_t>(joints), 0);
    for (const auto& set : sets) {
      ALCA_THROW_IF(set.empty(), ErrorKind::Config, "skeleton graph: empty ",
                    what, " set");
      for (int v : set) {
        ALCA_THROW_IF(v < 0 || v >= joints, ErrorKind::Config,
                      "skeleton graph: ", what, " joint ", v, " out of range");
        hit[static_cast<size_t>(v)]++;
      }
    }
    for (int v = 0; v < joints; ++v) {
      ALCA_THROW_IF(hit[static_cast<size_t>(v)] == 0, ErrorKind::Config,
                    "skeleton graph: joint ", v, " not covered by any ", what);
    }
  };
  check_cover(parts, "part");
  check_cover(pool_parts, "pooling part");

  // Disjointness of the pooling refinement.
  std::vector<int> owner(static_cast<size_t>(joints), -1);
  for (size_t r = 0; r < pool_parts.size(); ++r) {
    for (int v : pool_parts[r]) {
      ALCA_THROW_IF(owner[static_cast<size_t>(v)] >= 0, ErrorKind::Config,
                    "skeleton graph: pooling parts overlap at joint ", v);
      owner[static_cast<size_t>(v)] = static_cast<int>(r);
    }
  }

  // Every bone must lie inside at least one convolution part.
  for (auto [i, j] : edges) {
    bool covered = false;
    for (const auto& set : parts) {
      const bool has_i = std::count(set.begin(), set.end(), i) > 0;
      const bool has_j = std::count(set.begin(), set.end(), j) > 0;
      if (has_i && has_j) {
        covered = true;
        break;
      }
    }
    ALCA_THROW_IF(!covered, ErrorKind::Config, "skeleton graph: bone (", i, ",",
                  j, ") not inside any part");
  }
}

bool SkeletonGraph::has_edge(int i, int j) const {
  for (auto [a, b] : edges) {
    if ((a == i && b == j) || (a == j && b == i)) return true;
  }
  return false;
}

std::vector<std::vector<int>> SkeletonGraph::adjacency_lists() const {
  std::vector<std::vector<int>> adj(static_cast<size_t>(joints));
  for (auto [i, j] : edges) {
    adj[static_cast<size_t>(i)].push_back(j);
    adj[static_cast<size_t>(j)].push_back(i);
  }
  return adj;
}

SkeletonGraph ntu25_graph() {
  SkeletonGraph g;
  g.joints = 25;
  g.center = 20;
  g.edges = {{0, 1},   {1, 20},  {2, 20},  {3, 2},   {4, 20},  {5, 4},
             {6, 5},   {7, 6},   {8, 20},  {9, 8},   {10, 9},  {11, 10},
             {12, 0},  {13, 12}, {14, 13}, {15, 14}, {16, 0},  {17, 16},
             {18, 17}, {19, 18}, {21, 22}, {22, 7},  {23, 24}, {24, 11}};
  // Convolution parts overlap at the boundary joints (shoulders 4/8, spine 20,
  // hips 12/16 and spine base 0) so every bone is inside some part.
  g.parts.resize(kNumParts);
  g.parts[static_cast<int>(BodyPart::Head)] = {2, 3, 20, 4, 8};
  g.parts[static_cast<int>(BodyPart::Hands)] = {4, 5, 6, 7, 8, 9, 10, 11, 21, 22, 23, 24};
  g.parts[static_cast<int>(BodyPart::Torso)] = {0, 1, 20, 4, 8, 12, 16};
  g.parts[static_cast<int>(BodyPart::Legs)] = {0, 12, 13, 14, 15, 16, 17, 18, 19};
  // Pooling refinement: each joint belongs to exactly one part.
  g.pool_parts.resize(kNumParts);
  g.pool_parts[static_cast<int>(BodyPart::Head)] = {2, 3};
  g.pool_parts[static_cast<int>(BodyPart::Hands)] = {4, 5, 6, 7, 8, 9, 10, 11, 21, 22, 23, 24};
  g.pool_parts[static_cast<int>(BodyPart::Torso)] = {0, 1, 20};
  g.pool_parts[static_cast<int>(BodyPart::Legs)] = {12, 13, 14, 15, 16, 17, 18, 19};
  g.validate();
  return g;
}

int shortest_path_distance(const SkeletonGraph& graph, int from, int to,
                           const std::vector<int>& allowed) {
  ALCA_THROW_IF(from < 0 || from >= graph.joints || to < 0 || to >= graph.joints,
                ErrorKind::Config, "shortest_path_distance: joint out of range");
  std::vector<bool> usable(static_cast<size_t>(graph.joints), allowed.empty());
  for (int v : allowed) usable[static_cast<size_t>(v)] = true;
  if (!usable[static_cast<size_t>(from)] || !usable[static_cast<size_t>(to)]) {
    return -1;
  }
  if (from == to) return 0;
  const auto adj = graph.adjacency_lists();
  std::vector<int> dist(static_cast<size_t>(graph.joints), -1);
  std::queue<int> queue;
  dist[static_cast<size_t>(from)] = 0;
  queue.push(from);
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop();
    for (int w : adj[static_cast<size_t>(v)]) {
      if (!usable[static_cast<size_t>(w)] || dist[static_cast<size_t>(w)] >= 0) {
        continue;
      }
      dist[static_cast<size_t>(w)] = dist[static_cast<size_t>(v)] + 1;
      if (w == to) return dist[static_cast<size_t>(w)];
      queue.push(w);
    }
  }
  return dist[static_cast<size_t>(to)];
}

GlobalRelations build_global_relations(const SkeletonGraph& graph) {
  const int u = graph.joints;
  std::vector<int> to_center(static_cast<size_t>(u));
  for (int v = 0; v < u; ++v) {
    const int d = shortest_path_distance(graph, v, graph.center);
    ALCA_THROW_IF(d < 0, ErrorKind::Config,
                  "global relations: joint ", v, " cannot reach the center");
    to_center[static_cast<size_t>(v)] = d;
  }
  GlobalRelations rel{JointMatrix::zeros(u), JointMatrix::zeros(u),
                      JointMatrix::zeros(u)};
  for (int i = 0; i < u; ++i) rel.root.at(i, i) = 1.0;
  for (auto [a, b] : graph.edges) {
    // Row i selects the neighbors of joint i, so entry (i, j) describes
    // neighbor j relative to i. Equal center distance counts as centripetal.
    auto classify = [&](int i, int j) {
      if (to_center[static_cast<size_t>(j)] <= to_center[static_cast<size_t>(i)]) {
        rel.centripetal.at(i, j) = 1.0;
      } else {
        rel.centrifugal.at(i, j) = 1.0;
      }
    };
    classify(a, b);
    classify(b, a);
  }
  return rel;
}

JointMatrix build_part_adjacency(const SkeletonGraph& graph, BodyPart part) {
  const auto& members = graph.parts[static_cast<size_t>(part)];
  ALCA_THROW_IF(members.empty(), ErrorKind::Config, "part '",
                body_part_name(part), "' is empty");
  JointMatrix m = JointMatrix::zeros(graph.joints);
  for (int i : members) {
    for (int j : members) {
      const int d = shortest_path_distance(graph, i, j, members);
      if (d >= 0 && d <= 1) m.at(i, j) = 1.0;
    }
  }
  return m;
}

JointMatrix normalize_adjacency(const JointMatrix& raw) {
  ALCA_THROW_IF(raw.joints <= 0 ||
                    raw.values.size() !=
                        static_cast<size_t>(raw.joints) * raw.joints,
                ErrorKind::Runtime, "normalize_adjacency: non-square input");
  const int u = raw.joints;
  std::vector<double> inv_sqrt_deg(static_cast<size_t>(u), 0.0);
  for (int i = 0; i < u; ++i) {
    double deg = 0.0;
    for (int j = 0; j < u; ++j) deg += raw.at(i, j);
    if (deg > 0.0) inv_sqrt_deg[static_cast<size_t>(i)] = 1.0 / std::sqrt(deg);
  }
  JointMatrix out = JointMatrix::zeros(u);
  for (int i = 0; i < u; ++i) {
    for (int j = 0; j < u; ++j) {
      out.at(i, j) = inv_sqrt_deg[static_cast<size_t>(i)] * raw.at(i, j) *
                     inv_sqrt_deg[static_cast<size_t>(j)];
    }
  }
  return out;
}

const char* sampling_strategy_name(SamplingStrategy s) {
  switch (s) {
    case SamplingStrategy::Both: return "both";
    case SamplingStrategy::SkeletonOnly: return "skeleton_only";
    case SamplingStrategy::PartOnly: return "part_only";
  }
  return "?";
}

SamplingStrategy sampling_strategy_from(const std::string& name) {
  if (name == "both") return SamplingStrategy::Both;
  if (name == "skeleton_only") return SamplingStrategy::SkeletonOnly;
  if (name == "part_only") return SamplingStrategy::PartOnly;
  fail(ErrorKind::Config, cat("unknown sampling strategy '", name, "'"));
}

TopologySet build_topology_set(const SkeletonGraph& graph,
                               SamplingStrategy strategy) {
  graph.validate();
  TopologySet set;
  set.joints = graph.joints;
  if (strategy != SamplingStrategy::PartOnly) {
    const GlobalRelations rel = build_global_relations(graph);
    set.names.insert(set.names.end(), {"root", "centripetal", "centrifugal"});
    set.raw.insert(set.raw.end(), {rel.root, rel.centripetal, rel.centrifugal});
  }
  if (strategy != SamplingStrategy::SkeletonOnly) {
    for (int r = 0; r < kNumParts; ++r) {
      const auto part = static_cast<BodyPart>(r);
      set.names.push_back(body_part_name(part));
      set.raw.push_back(build_part_adjacency(graph, part));
    }
  }
  for (const auto& m : set.raw) set.normalized.push_back(normalize_adjacency(m));
  return set;
}

namespace {

std::vector<std::vector<int>> parse_part_object(const json& obj,
                                                const char* what) {
  static const char* order[kNumParts] = {"head", "hands", "torso", "legs"};
  std::vector<std::vector<int>> out(kNumParts);
  for (int r = 0; r < kNumParts; ++r) {
    ALCA_THROW_IF(!obj.contains(order[r]), ErrorKind::Config, what,
                  ": missing '", order[r], "'");
    out[static_cast<size_t>(r)] = obj[order[r]].get<std::vector<int>>();
  }
  return out;
}

std::vector<std::vector<int>> derive_disjoint_pool_parts(
    int joints, const std::vector<std::vector<int>>& parts) {
  std::vector<std::vector<int>> out(kNumParts);
  std::vector<bool> taken(static_cast<size_t>(joints), false);
  for (int r = 0; r < kNumParts; ++r) {
    for (int v : parts[static_cast<size_t>(r)]) {
      if (v >= 0 && v < joints && !taken[static_cast<size_t>(v)]) {
        out[static_cast<size_t>(r)].push_back(v);
        taken[static_cast<size_t>(v)] = true;
      }
    }
  }
  return out;
}

}  // namespace

SkeletonGraph load_skeleton_graph_json(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, cat("topology json: ", e.what()));
  }
  SkeletonGraph g;
  try {
    g.joints = doc.at("joints").get<int>();
    g.center = doc.at("center").get<int>();
    for (const auto& e : doc.at("edges")) {
      g.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    }
    g.parts = parse_part_object(doc.at("parts"), "topology json parts");
    if (doc.contains("pool_parts")) {
      g.pool_parts = parse_part_object(doc["pool_parts"], "topology json pool_parts");
    } else {
      g.pool_parts = derive_disjoint_pool_parts(g.joints, g.parts);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, cat("topology json: ", e.what()));
  }
  g.validate();
  return g;
}

std::string skeleton_graph_to_json(const SkeletonGraph& graph) {
  static const char* order[kNumParts] = {"head", "hands", "torso", "legs"};
  json doc;
  doc["joints"] = graph.joints;
  doc["center"] = graph.center;
  json edges = json::array();
  for (auto [i, j] : graph.edges) edges.push_back({i, j});
  doc["edges"] = edges;
  for (int r = 0; r < kNumParts; ++r) {
    doc["parts"][order[r]] = graph.parts[static_cast<size_t>(r)];
    doc["pool_parts"][order[r]] = graph.pool_parts[static_cast<size_t>(r)];
  }
  return doc.dump(2);
}

}  // namespace alca
