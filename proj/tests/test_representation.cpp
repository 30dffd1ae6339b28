#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "model.hpp"
#include "pipeline.hpp"
#include "representation.hpp"
#include "synthetic.hpp"
#include "testutil.hpp"

using namespace alca;
using alca::testutil::close;
using T = Tensor<double>;

namespace {

// Feature map (d, T, U, M) filled from a deterministic function of position.
T patterned_feature(int d, int t_feat, int joints, int performers) {
  T f = T::zeros({d, t_feat, joints, performers});
  auto raw = f.raw();
  size_t w = 0;
  for (int c = 0; c < d; ++c) {
    for (int t = 0; t < t_feat; ++t) {
      for (int u = 0; u < joints; ++u) {
        for (int m = 0; m < performers; ++m) {
          raw[w++] = 0.1 * c + 0.01 * t + 0.001 * u + 0.7 * m;
        }
      }
    }
  }
  return f;
}

}  // namespace

TEST_CASE("temporal sections split 19 frames as 6/6/7") {
  const auto sections = temporal_sections(19);
  REQUIRE(sections.size() == 3);
  CHECK(sections[0] == std::pair<int, int>{0, 6});
  CHECK(sections[1] == std::pair<int, int>{6, 12});
  CHECK(sections[2] == std::pair<int, int>{12, 19});
  CHECK_THROWS_AS(temporal_sections(2), Error);
}

TEST_CASE("pool plan unit counts per division") {
  const SkeletonGraph g = ntu25_graph();
  CHECK(make_pool_plan(g, Division::Both, false, 19, 2).unit_count() == 24);
  CHECK(make_pool_plan(g, Division::SpatialOnly, false, 19, 2).unit_count() == 8);
  CHECK(make_pool_plan(g, Division::TemporalOnly, false, 19, 2).unit_count() == 6);
  CHECK(make_pool_plan(g, Division::None, false, 19, 2).unit_count() == 2);
}

TEST_CASE("canonical unit order: temporal major, then part, then performer") {
  const SkeletonGraph g = ntu25_graph();
  const PoolPlan plan = make_pool_plan(g, Division::Both, false, 19, 2);
  size_t j = 0;
  for (int i = 0; i < 3; ++i) {
    for (int r = 0; r < kNumParts; ++r) {
      for (int m = 0; m < 2; ++m, ++j) {
        CHECK(plan.units[j].section == i);
        CHECK(plan.units[j].part == r);
        CHECK(plan.units[j].performer == m);
      }
    }
  }
}

TEST_CASE("pooling a constant feature gives the constant everywhere") {
  const SkeletonGraph g = ntu25_graph();
  const PoolPlan plan = make_pool_plan(g, Division::Both, false, 19, 2);
  const T f = T::full({4, 19, 25, 2}, 3.25);
  const Representation<double> rep =
      pool_units<double>(nullptr, f, plan, {true, true});
  REQUIRE(rep.units.shape() == Shape{24, 4});
  for (double v : rep.units.data()) CHECK(close(v, 3.25, 1e-12));
}

TEST_CASE("division none matches the naive per-performer mean") {
  const SkeletonGraph g = ntu25_graph();
  const PoolPlan plan = make_pool_plan(g, Division::None, false, 19, 2);
  const T f = patterned_feature(3, 19, 25, 2);
  const Representation<double> rep =
      pool_units<double>(nullptr, f, plan, {true, true});
  for (int m = 0; m < 2; ++m) {
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int t = 0; t < 19; ++t) {
        for (int u = 0; u < 25; ++u) {
          acc += f.at({c, t, u, m});
        }
      }
      acc /= 19.0 * 25.0;
      CHECK(close(rep.units.at({m, c}), acc, 1e-12));
    }
  }
}

TEST_CASE("unit (start, head, performer 0) is the enumerated index-set mean") {
  const SkeletonGraph g = ntu25_graph();
  for (bool overlap : {false, true}) {
    const PoolPlan plan = make_pool_plan(g, Division::Both, overlap, 19, 2);
    const T f = patterned_feature(2, 19, 25, 2);
    const Representation<double> rep =
        pool_units<double>(nullptr, f, plan, {true, true});
    const auto& members =
        overlap ? g.parts[static_cast<size_t>(BodyPart::Head)]
                : g.pool_parts[static_cast<size_t>(BodyPart::Head)];
    for (int c = 0; c < 2; ++c) {
      double acc = 0.0;
      for (int t = 0; t < 6; ++t) {
        for (int u : members) acc += f.at({c, t, u, 0});
      }
      acc /= 6.0 * static_cast<double>(members.size());
      // unit 0 in canonical order is (section 0, head, performer 0)
      CHECK(close(rep.units.at({0, c}), acc, 1e-12));
    }
  }
}

TEST_CASE("overlapping pooling counts boundary joints in both parts") {
  const SkeletonGraph g = ntu25_graph();
  const PoolPlan plan = make_pool_plan(g, Division::SpatialOnly, true, 19, 2);
  // joint 4 (left shoulder) belongs to head, hands and torso in the
  // convolution partition
  int hits = 0;
  for (size_t j = 0; j < plan.unit_count(); ++j) {
    if (plan.units[j].performer != 0) continue;
    if (plan.masks[j][static_cast<size_t>(0) * 25 * 2 + 4 * 2 + 0] > 0.0) ++hits;
  }
  CHECK(hits == 3);
}

TEST_CASE("global embedding: constants, zeros and validity masking") {
  const T f = T::full({3, 19, 25, 2}, -1.5);
  const T g1 = global_embedding<double>(nullptr, f, 2, {true, true});
  for (double v : g1.data()) CHECK(close(v, -1.5, 1e-12));

  const T zeros = T::zeros({3, 19, 25, 2});
  const T g0 = global_embedding<double>(nullptr, zeros, 2, {true, true});
  for (double v : g0.data()) CHECK(v == 0.0);

  // masked second performer is excluded from the average
  T mixed = T::zeros({1, 2, 2, 2});
  auto raw = mixed.raw();
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = (i % 2 == 0) ? 1.0 : 100.0;
  const T gm = global_embedding<double>(nullptr, mixed, 2, {true, false});
  CHECK(close(gm.data()[0], 1.0, 1e-12));
  CHECK_THROWS_AS(global_embedding<double>(nullptr, mixed, 2, {false, false}),
                  Error);
}

TEST_CASE("weighted mean of `both` units reproduces the global embedding") {
  const SkeletonGraph g = ntu25_graph();
  const PoolPlan plan = make_pool_plan(g, Division::Both, false, 19, 2);
  std::mt19937_64 rng(19);
  const T f = testutil::random_tensor<double>({5, 19, 25, 2}, rng);
  for (std::vector<bool> valid : {std::vector<bool>{true, true},
                                  std::vector<bool>{true, false}}) {
    const Representation<double> rep = pool_units<double>(nullptr, f, plan, valid);
    std::vector<double> weighted(5, 0.0);
    double total = 0.0;
    for (size_t j = 0; j < plan.unit_count(); ++j) {
      if (!rep.valid[j]) continue;
      const double w = plan.position_counts[j];
      for (int c = 0; c < 5; ++c) {
        weighted[static_cast<size_t>(c)] +=
            w * rep.units.at({static_cast<int64_t>(j), c});
      }
      total += w;
    }
    for (int c = 0; c < 5; ++c) {
      CHECK(close(weighted[static_cast<size_t>(c)] / total,
                  rep.global.data()[static_cast<size_t>(c)], 1e-9));
    }
  }
}

TEST_CASE("adl: singleton unit gets attention weight one") {
  ParamStore<double> store;
  AdlHead<double> adl(4, 4, store);
  std::mt19937_64 rng(23);
  adl.init_params("default", rng);
  Representation<double> rep;
  rep.units = testutil::random_tensor<double>({1, 4}, rng);
  rep.valid = {true};
  rep.global = testutil::random_tensor<double>({4}, rng);
  const T weights = adl.attention(nullptr, rep);
  CHECK(close(weights.data()[0], 1.0, 1e-12));

  // G' = V g + C f_glob, checked against explicit matrix arithmetic
  const Representation<double> out =
      adl.transform(nullptr, rep, ConstraintMode::Full);
  const T value = store.get("adl.value");
  const T expand = store.get("adl.expand");
  for (int i = 0; i < 4; ++i) {
    double expect = 0.0;
    for (int j = 0; j < 4; ++j) {
      expect += value.at({i, j}) * rep.units.at({0, j});
      expect += expand.at({i, j}) * rep.global.data()[static_cast<size_t>(j)];
    }
    CHECK(close(out.units.at({0, i}), expect, 1e-12));
  }
}

TEST_CASE("adl: rows are probability vectors over valid units") {
  ParamStore<double> store;
  AdlHead<double> adl(6, 5, store);
  std::mt19937_64 rng(29);
  adl.init_params("default", rng);
  Representation<double> rep;
  rep.units = testutil::random_tensor<double>({8, 6}, rng);
  rep.valid = {true, true, false, true, true, true, false, true};
  rep.global = testutil::random_tensor<double>({6}, rng);
  const T weights = adl.attention(nullptr, rep);
  for (int i = 0; i < 8; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 8; ++j) {
      const double w = weights.at({i, j});
      CHECK(w >= 0.0);
      if (!rep.valid[static_cast<size_t>(j)]) CHECK(w < 1e-12);
      sum += w;
    }
    CHECK(close(sum, 1.0, 1e-6));
  }
}

TEST_CASE("adl: hand-computed scaled dot-product attention, 3 units") {
  ParamStore<double> store;
  AdlHead<double> adl(4, 4, store);
  std::mt19937_64 rng(31);
  adl.init_params("default", rng);
  Representation<double> rep;
  rep.units = testutil::random_tensor<double>({3, 4}, rng);
  rep.valid = {true, true, true};
  rep.global = T::zeros({4});

  const T key = store.get("adl.key");
  const T query = store.get("adl.query");
  const T value = store.get("adl.value");
  // independent naive computation with explicit loops
  auto proj = [&](const T& m, int unit) {
    std::vector<double> out(4, 0.0);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        out[static_cast<size_t>(i)] += m.at({i, j}) * rep.units.at({unit, j});
      }
    }
    return out;
  };
  std::vector<std::vector<double>> kg, qg, vg;
  for (int u = 0; u < 3; ++u) {
    kg.push_back(proj(key, u));
    qg.push_back(proj(query, u));
    vg.push_back(proj(value, u));
  }
  std::vector<std::vector<double>> expect_w(3, std::vector<double>(3));
  for (int i = 0; i < 3; ++i) {
    double z = 0.0;
    std::vector<double> row(3);
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int c = 0; c < 4; ++c) dot += kg[i][static_cast<size_t>(c)] * qg[j][static_cast<size_t>(c)];
      row[static_cast<size_t>(j)] = std::exp(dot / 2.0);  // sqrt(d_emb)=2
      z += row[static_cast<size_t>(j)];
    }
    for (int j = 0; j < 3; ++j) expect_w[static_cast<size_t>(i)][static_cast<size_t>(j)] = row[static_cast<size_t>(j)] / z;
  }
  const T weights = adl.attention(nullptr, rep);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(close(weights.at({i, j}), expect_w[static_cast<size_t>(i)][static_cast<size_t>(j)], 1e-10));
    }
  }
  const Representation<double> out =
      adl.transform(nullptr, rep, ConstraintMode::NoGlobal);
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c < 4; ++c) {
      double expect = 0.0;
      for (int j = 0; j < 3; ++j) {
        expect += expect_w[static_cast<size_t>(i)][static_cast<size_t>(j)] * vg[static_cast<size_t>(j)][static_cast<size_t>(c)];
      }
      CHECK(close(out.units.at({i, c}), expect, 1e-10));
    }
  }
}

TEST_CASE("adl is equivariant to unit permutation") {
  ParamStore<double> store;
  AdlHead<double> adl(5, 3, store);
  std::mt19937_64 rng(37);
  adl.init_params("default", rng);
  Representation<double> rep;
  rep.units = testutil::random_tensor<double>({6, 5}, rng);
  rep.valid = {true, true, true, false, true, true};
  rep.global = testutil::random_tensor<double>({5}, rng);
  const std::vector<int> perm = {4, 0, 5, 2, 1, 3};

  Representation<double> shuffled;
  shuffled.units = T::zeros({6, 5});
  shuffled.valid.resize(6);
  shuffled.global = rep.global;
  for (int i = 0; i < 6; ++i) {
    shuffled.valid[static_cast<size_t>(i)] = rep.valid[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    for (int c = 0; c < 5; ++c) {
      shuffled.units.at({i, c}) = rep.units.at({perm[static_cast<size_t>(i)], c});
    }
  }
  const Representation<double> a = adl.transform(nullptr, rep, ConstraintMode::Full);
  const Representation<double> b =
      adl.transform(nullptr, shuffled, ConstraintMode::Full);
  for (int i = 0; i < 6; ++i) {
    for (int c = 0; c < 5; ++c) {
      CHECK(close(b.units.at({i, c}), a.units.at({perm[static_cast<size_t>(i)], c}), 1e-10));
    }
  }
}

TEST_CASE("adl rejects an all-masked representation") {
  ParamStore<double> store;
  AdlHead<double> adl(3, 3, store);
  std::mt19937_64 rng(41);
  adl.init_params("default", rng);
  Representation<double> rep;
  rep.units = T::zeros({2, 3});
  rep.valid = {false, false};
  rep.global = T::zeros({3});
  CHECK_THROWS_AS(adl.transform(nullptr, rep, ConstraintMode::Full), Error);
}

TEST_CASE("gradients flow through adl against central differences") {
  ParamStore<double> store;
  AdlHead<double> adl(4, 3, store);
  std::mt19937_64 rng(43);
  adl.init_params("default", rng);
  T units = testutil::random_tensor<double>({5, 4}, rng).set_requires_grad(true);
  T glob = testutil::random_tensor<double>({4}, rng).set_requires_grad(true);
  std::vector<T> leaves = {units, glob};
  for (const auto& name : {"adl.key", "adl.query", "adl.value", "adl.expand"}) {
    leaves.push_back(store.get(name));
  }
  T w = testutil::random_tensor<double>({5, 4}, rng);
  const double err = max_gradient_error(leaves, [&](Tape<double>* t) {
    Representation<double> rep;
    rep.units = units;
    rep.valid = {true, true, true, true, true};
    rep.global = glob;
    const Representation<double> out = adl.transform(t, rep, ConstraintMode::Full);
    return sum_all(t, mul(t, out.units, w));
  }, 1e-6);
  CHECK(err < 1e-4);
}

TEST_CASE("division none + no_adl degenerates to the global-average model") {
  ModelConfig cfg = ModelConfig::paper();
  cfg.encoder.blocks = {{8, 2}, {8, 2}};
  cfg.division = Division::None;
  cfg.constraints = ConstraintMode::NoAdl;
  cfg.encoder.dropout = 0.0;
  cfg.d_emb = 8;
  Model<double> model(cfg);
  model.init_params(3);

  SynthConfig synth;
  synth.classes = 2;
  synth.samples_per_class = 2;
  synth.seed = 6;
  const Dataset ds = preprocess_dataset(generate_synthetic_dataset(synth));
  std::mt19937_64 rng(0);
  const Tensor<double> feature = model.encode(nullptr, ds.sequences[0], false, rng);
  const Representation<double> rep =
      model.represent(nullptr, ds.sequences[0], false, rng);

  // By construction: one unit per performer, equal to that performer's mean
  // plus the projected global average.
  std::vector<bool> valid(ds.sequences[0].performer_mask.begin(),
                          ds.sequences[0].performer_mask.end());
  const Tensor<double> glob =
      global_embedding<double>(nullptr, feature, 2, valid);
  const Tensor<double>& expand = model.store().get("adl.expand");
  for (int m = 0; m < 2; ++m) {
    if (!valid[static_cast<size_t>(m)]) continue;
    std::vector<double> mask(19 * 25 * 2, 0.0);
    for (size_t pos = 0; pos < mask.size(); ++pos) {
      if (static_cast<int>(pos % 2) == m) mask[pos] = 1.0;
    }
    const Tensor<double> mean_m = masked_mean<double>(nullptr, feature, mask);
    for (int c = 0; c < 8; ++c) {
      double constraint = 0.0;
      for (int j = 0; j < 8; ++j) {
        constraint += expand.at({c, j}) * glob.data()[static_cast<size_t>(j)];
      }
      CHECK(close(rep.units.at({m, c}),
                  mean_m.data()[static_cast<size_t>(c)] + constraint, 1e-9));
    }
  }
}
