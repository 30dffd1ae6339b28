#include "representation.hpp"

#include <cmath>

namespace alca {

const char* division_name(Division d) {
  switch (d) {
    case Division::Both: return "both";
    case Division::SpatialOnly: return "spatial_only";
    case Division::TemporalOnly: return "temporal_only";
    case Division::None: return "none";
  }
  return "?";
}

Division division_from(const std::string& name) {
  if (name == "both") return Division::Both;
  if (name == "spatial_only") return Division::SpatialOnly;
  if (name == "temporal_only") return Division::TemporalOnly;
  if (name == "none") return Division::None;
  fail(ErrorKind::Config, cat("unknown division mode '", name, "'"));
}

const char* constraint_mode_name(ConstraintMode c) {
  switch (c) {
    case ConstraintMode::Full: return "full";
    case ConstraintMode::NoAdl: return "no_adl";
    case ConstraintMode::NoGlobal: return "no_global";
  }
  return "?";
}

ConstraintMode constraint_mode_from(const std::string& name) {
  if (name == "full") return ConstraintMode::Full;
  if (name == "no_adl") return ConstraintMode::NoAdl;
  if (name == "no_global") return ConstraintMode::NoGlobal;
  fail(ErrorKind::Config, cat("unknown constraint mode '", name, "'"));
}

std::vector<std::pair<int, int>> temporal_sections(int t_feat, int sections) {
  ALCA_THROW_IF(t_feat < sections, ErrorKind::Config, "temporal_sections: ",
                t_feat, " frames cannot form ", sections, " sections");
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < sections; ++i) {
    const int lo = static_cast<int>(static_cast<int64_t>(i) * t_feat / sections);
    const int hi =
        static_cast<int>(static_cast<int64_t>(i + 1) * t_feat / sections);
    out.emplace_back(lo, hi);
  }
  return out;
}

PoolPlan make_pool_plan(const SkeletonGraph& graph, Division division,
                        bool pool_overlap, int t_feat, int performers) {
  ALCA_THROW_IF(performers < 1, ErrorKind::Config, "pool plan: performers < 1");
  PoolPlan plan;
  plan.t_feat = t_feat;
  plan.joints = graph.joints;
  plan.performers = performers;
  plan.division = division;

  const auto& part_sets = pool_overlap ? graph.parts : graph.pool_parts;
  const bool uses_sections =
      division == Division::Both || division == Division::TemporalOnly;
  const auto sections = uses_sections ? temporal_sections(t_feat, 3)
                                      : std::vector<std::pair<int, int>>{};

  const int u = graph.joints;
  auto push_unit = [&](int section, int part, int performer) {
    UnitSpec spec{section, part, performer};
    std::vector<double> mask(static_cast<size_t>(t_feat) * u * performers, 0.0);
    const int t_lo = section < 0 ? 0 : sections[static_cast<size_t>(section)].first;
    const int t_hi = section < 0 ? t_feat : sections[static_cast<size_t>(section)].second;
    double count = 0.0;
    for (int t = t_lo; t < t_hi; ++t) {
      if (part < 0) {
        for (int v = 0; v < u; ++v) {
          mask[(static_cast<size_t>(t) * u + v) * performers + performer] = 1.0;
          count += 1.0;
        }
      } else {
        for (int v : part_sets[static_cast<size_t>(part)]) {
          mask[(static_cast<size_t>(t) * u + v) * performers + performer] = 1.0;
          count += 1.0;
        }
      }
    }
    plan.units.push_back(spec);
    plan.masks.push_back(std::move(mask));
    plan.position_counts.push_back(count);
  };

  switch (division) {
    case Division::Both:
      for (int i = 0; i < 3; ++i) {
        for (int r = 0; r < kNumParts; ++r) {
          for (int m = 0; m < performers; ++m) push_unit(i, r, m);
        }
      }
      break;
    case Division::SpatialOnly:
      for (int r = 0; r < kNumParts; ++r) {
        for (int m = 0; m < performers; ++m) push_unit(-1, r, m);
      }
      break;
    case Division::TemporalOnly:
      for (int i = 0; i < 3; ++i) {
        for (int m = 0; m < performers; ++m) push_unit(i, -1, m);
      }
      break;
    case Division::None:
      for (int m = 0; m < performers; ++m) push_unit(-1, -1, m);
      break;
  }
  return plan;
}

template <class S>
Representation<S> pool_units(Tape<S>* tape, const Tensor<S>& feature,
                             const PoolPlan& plan,
                             const std::vector<bool>& performer_valid) {
  ALCA_THROW_IF(feature.rank() != 4, ErrorKind::Runtime,
                "pool_units: expected (d, T, U, M), got ",
                shape_str(feature.shape()));
  ALCA_THROW_IF(feature.dim(1) != plan.t_feat || feature.dim(2) != plan.joints ||
                    feature.dim(3) != plan.performers,
                ErrorKind::Runtime, "pool_units: feature ",
                shape_str(feature.shape()), " does not match the pool plan");
  ALCA_THROW_IF(static_cast<int>(performer_valid.size()) != plan.performers,
                ErrorKind::Runtime, "pool_units: validity mask length");

  Representation<S> rep;
  std::vector<Tensor<S>> rows;
  for (size_t j = 0; j < plan.unit_count(); ++j) {
    std::vector<S> mask(plan.masks[j].begin(), plan.masks[j].end());
    rows.push_back(masked_mean(tape, feature, mask));
    rep.valid.push_back(
        performer_valid[static_cast<size_t>(plan.units[j].performer)]);
  }
  rep.units = stack_rows(tape, rows);
  rep.global = global_embedding(tape, feature, plan.performers, performer_valid);
  return rep;
}

template <class S>
Tensor<S> global_embedding(Tape<S>* tape, const Tensor<S>& feature,
                           int performers,
                           const std::vector<bool>& performer_valid) {
  ALCA_THROW_IF(feature.rank() != 4, ErrorKind::Runtime,
                "global_embedding: expected (d, T, U, M)");
  const int64_t t = feature.dim(1), u = feature.dim(2), m = feature.dim(3);
  ALCA_THROW_IF(m != performers ||
                    static_cast<int>(performer_valid.size()) != performers,
                ErrorKind::Runtime, "global_embedding: performer count");
  bool any = false;
  for (bool v : performer_valid) any = any || v;
  ALCA_THROW_IF(!any, ErrorKind::Runtime, "global_embedding: no valid performer");
  std::vector<S> mask(static_cast<size_t>(t * u * m), S(0));
  for (int64_t pos = 0; pos < t * u; ++pos) {
    for (int64_t slot = 0; slot < m; ++slot) {
      if (performer_valid[static_cast<size_t>(slot)]) {
        mask[static_cast<size_t>(pos * m + slot)] = S(1);
      }
    }
  }
  return masked_mean(tape, feature, mask);
}

template <class S>
AdlHead<S>::AdlHead(int d_feat, int d_emb, ParamStore<S>& store)
    : d_feat_(d_feat), d_emb_(d_emb) {
  ALCA_THROW_IF(d_feat < 1 || d_emb < 1, ErrorKind::Config,
                "adl: embedding sizes must be positive");
  key_ = store.add("adl.key", Tensor<S>::zeros({d_emb, d_feat}));
  query_ = store.add("adl.query", Tensor<S>::zeros({d_emb, d_feat}));
  value_ = store.add("adl.value", Tensor<S>::zeros({d_feat, d_feat}));
  expand_ = store.add("adl.expand", Tensor<S>::zeros({d_feat, d_feat}));
}

template <class S>
void AdlHead<S>::init_params(const std::string& init, std::mt19937_64& rng) {
  if (init == "symmetric") return;  // all-zero heads and constraint
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_feat_));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : key_.raw()) v = static_cast<S>(dist(rng));
  for (auto& v : query_.raw()) v = static_cast<S>(dist(rng));
  // Near-identity value head and identity constraint projection keep the
  // early model close to its no-ADL counterpart.
  std::uniform_real_distribution<double> small(-0.05 * bound, 0.05 * bound);
  for (int i = 0; i < d_feat_; ++i) {
    for (int j = 0; j < d_feat_; ++j) {
      value_.raw()[static_cast<size_t>(i) * d_feat_ + j] =
          static_cast<S>((i == j ? 1.0 : 0.0) + small(rng));
      expand_.raw()[static_cast<size_t>(i) * d_feat_ + j] =
          static_cast<S>(i == j ? 1.0 : 0.0);
    }
  }
}

namespace {

template <class S>
Tensor<S> key_mask_bias(const std::vector<bool>& valid) {
  // Added to every attention row before the softmax: a large negative logit
  // zeroes the weight of invalid key units without producing non-finite
  // intermediates.
  std::vector<S> bias(valid.size(), S(0));
  for (size_t j = 0; j < valid.size(); ++j) {
    if (!valid[j]) bias[j] = S(-1e9);
  }
  return Tensor<S>::from({static_cast<int64_t>(valid.size())}, std::move(bias));
}

}  // namespace

template <class S>
Tensor<S> AdlHead<S>::attention(Tape<S>* tape, const Representation<S>& rep) const {
  ALCA_THROW_IF(rep.valid_count() == 0, ErrorKind::Runtime,
                "adl: all comparing units are masked");
  const Tensor<S> kg = matmul(tape, rep.units, transpose2d(tape, key_));
  const Tensor<S> qg = matmul(tape, rep.units, transpose2d(tape, query_));
  Tensor<S> scores = matmul(tape, kg, transpose2d(tape, qg));
  scores = scale(tape, scores, static_cast<S>(1.0 / std::sqrt(static_cast<double>(d_emb_))));
  scores = add(tape, scores, key_mask_bias<S>(rep.valid));
  return softmax_lastdim(tape, scores);
}

template <class S>
Representation<S> AdlHead<S>::transform(Tape<S>* tape,
                                        const Representation<S>& rep,
                                        ConstraintMode mode) const {
  ALCA_THROW_IF(!rep.units.defined() || rep.units.rank() != 2 ||
                    rep.units.dim(1) != d_feat_,
                ErrorKind::Runtime, "adl: representation width mismatch");
  ALCA_THROW_IF(rep.valid_count() == 0, ErrorKind::Runtime,
                "adl: all comparing units are masked");
  Representation<S> out;
  out.valid = rep.valid;
  out.global = rep.global;

  Tensor<S> constraint;
  if (mode != ConstraintMode::NoGlobal) {
    const Tensor<S> projected = matmul(
        tape, expand_, reshape(tape, rep.global, {d_feat_, 1}));
    constraint = reshape(tape, projected, {d_feat_});
  }
  if (mode == ConstraintMode::NoAdl) {
    out.units = add(tape, rep.units, constraint);
    return out;
  }
  const Tensor<S> weights = attention(tape, rep);
  const Tensor<S> vg = matmul(tape, rep.units, transpose2d(tape, value_));
  Tensor<S> mixed = matmul(tape, weights, vg);
  if (mode == ConstraintMode::Full) {
    mixed = add(tape, mixed, constraint);
  }
  out.units = mixed;
  return out;
}

template struct Representation<float>;
template struct Representation<double>;
template class AdlHead<float>;
template class AdlHead<double>;
template Representation<float> pool_units<float>(Tape<float>*, const Tensor<float>&,
                                                 const PoolPlan&,
                                                 const std::vector<bool>&);
template Representation<double> pool_units<double>(Tape<double>*,
                                                   const Tensor<double>&,
                                                   const PoolPlan&,
                                                   const std::vector<bool>&);
template Tensor<float> global_embedding<float>(Tape<float>*, const Tensor<float>&,
                                               int, const std::vector<bool>&);
template Tensor<double> global_embedding<double>(Tape<double>*,
                                                 const Tensor<double>&, int,
                                                 const std::vector<bool>&);

}  // namespace alca
