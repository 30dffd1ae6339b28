#ifndef ALCA_REPRESENTATION_HPP
#define ALCA_REPRESENTATION_HPP

#include <array>
#include <random>
#include <string>
#include <vector>

#include "params.hpp"
#include "tensor.hpp"
#include "topology.hpp"

namespace alca {

enum class Division : int { Both = 0, SpatialOnly = 1, TemporalOnly = 2, None = 3 };
const char* division_name(Division d);
Division division_from(const std::string& name);

enum class ConstraintMode : int { Full = 0, NoAdl = 1, NoGlobal = 2 };
const char* constraint_mode_name(ConstraintMode c);
ConstraintMode constraint_mode_from(const std::string& name);

// Canonical comparing-unit enumeration: temporal section major, then body
// part, then performer. Sections split T_feat at floor(i*T/3) boundaries
// (sizes 6,6,7 for T_feat = 19); the remainder goes to the last section.
struct UnitSpec {
  int section = -1;   // -1 when the division has no temporal axis
  int part = -1;      // -1 when the division has no spatial axis
  int performer = 0;
};

// Precomputed pooling masks for one (graph, division, T_feat, M) tuple.
// Masks are flat over (T, U, M) positions matching a row-major (d, T, U, M)
// feature map; only performer validity varies per sequence.
struct PoolPlan {
  int t_feat = 0, joints = 0, performers = 0;
  Division division = Division::Both;
  std::vector<UnitSpec> units;
  std::vector<std::vector<double>> masks;    // per unit
  std::vector<double> position_counts;       // nonzero entries per unit

  size_t unit_count() const { return units.size(); }
};

PoolPlan make_pool_plan(const SkeletonGraph& graph, Division division,
                        bool pool_overlap, int t_feat, int performers);

std::vector<std::pair<int, int>> temporal_sections(int t_feat, int sections = 3);

// The comparing-unit matrix of one instance plus per-unit validity (units of
// an absent performer are invalid and excluded from attention and distances).
template <class S>
struct Representation {
  Tensor<S> units;          // (J, d_feat)
  std::vector<bool> valid;  // length J
  Tensor<S> global;         // (d_feat,) instance-level average embedding

  int valid_count() const {
    int n = 0;
    for (bool v : valid) n += v ? 1 : 0;
    return n;
  }
};

// Segmented mean pooling of an encoded feature map (d, T, U, M) into the
// comparing-unit matrix, per the pool plan and the performer validity.
template <class S>
Representation<S> pool_units(Tape<S>* tape, const Tensor<S>& feature,
                             const PoolPlan& plan,
                             const std::vector<bool>& performer_valid);

// Mean of the feature map over all positions of the valid performers.
template <class S>
Tensor<S> global_embedding(Tape<S>* tape, const Tensor<S>& feature,
                           int performers,
                           const std::vector<bool>& performer_valid);

// Single-head scaled dot-product attention over comparing units plus the
// broadcast global constraint. Invalid units are masked out of every
// attention row; rows stay normalized over the valid units.
template <class S>
class AdlHead {
 public:
  AdlHead(int d_feat, int d_emb, ParamStore<S>& store);
  void init_params(const std::string& init, std::mt19937_64& rng);

  Representation<S> transform(Tape<S>* tape, const Representation<S>& rep,
                              ConstraintMode mode) const;

  // The (J, J) attention matrix for inspection/testing.
  Tensor<S> attention(Tape<S>* tape, const Representation<S>& rep) const;

 private:
  int d_feat_, d_emb_;
  Tensor<S> key_, query_, value_, expand_;
};

}  // namespace alca

#endif
