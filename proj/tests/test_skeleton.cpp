#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "dataset.hpp"
#include "pipeline.hpp"
#include "synthetic.hpp"
#include "testutil.hpp"

using namespace alca;
using alca::testutil::close;

namespace {

// Fixture builder for the .skeleton text layout.
std::string make_fixture(int frames, int bodies_per_frame,
                         double base_value = 0.0, int joints = 25) {
  std::ostringstream os;
  os << frames << "\n";
  for (int t = 0; t < frames; ++t) {
    os << bodies_per_frame << "\n";
    for (int b = 0; b < bodies_per_frame; ++b) {
      os << (1000 + b) << " 0 0 0 0 0 0 0.1 0.2 2\n";  // info line
      os << joints << "\n";
      for (int u = 0; u < joints; ++u) {
        const double v = base_value + b * 100.0 + u;
        os << v << " " << v + 0.5 << " " << v + 0.25
           << " 0 0 0 0 1 0 0 0 2\n";
      }
    }
  }
  return os.str();
}

// Test-only serializer: emits the parsed sequence back into the .skeleton
// text layout (present performers only), to check parse o serialize o parse.
std::string serialize_fixture(const SkeletonSequence& seq) {
  std::ostringstream os;
  os << seq.frames << "\n";
  int bodies = 0;
  for (int m = 0; m < kPerformers; ++m) {
    bodies += seq.performer_mask[static_cast<size_t>(m)] ? 1 : 0;
  }
  for (int t = 0; t < seq.frames; ++t) {
    os << bodies << "\n";
    for (int m = 0; m < kPerformers; ++m) {
      if (!seq.performer_mask[static_cast<size_t>(m)]) continue;
      os << (1000 + m) << " 0 0 0 0 0 0 0 0 2\n" << kJoints << "\n";
      for (int u = 0; u < kJoints; ++u) {
        os << seq.at(0, t, u, m) << " " << seq.at(1, t, u, m) << " "
           << seq.at(2, t, u, m) << " 0 0 0 0 1 0 0 0 2\n";
      }
    }
  }
  return os.str();
}

SkeletonSequence frontal_pose_sequence(int frames) {
  // A coarse standing pose whose facing comes out along +z and whose central
  // hip sits at the origin in frame 0.
  SkeletonSequence seq = SkeletonSequence::zeros(frames);
  seq.performer_mask[0] = true;
  auto set = [&](int u, double x, double y, double z) {
    for (int t = 0; t < frames; ++t) {
      seq.at(0, t, u, 0) = static_cast<float>(x);
      seq.at(1, t, u, 0) = static_cast<float>(y + 0.001 * t);
      seq.at(2, t, u, 0) = static_cast<float>(z);
    }
  };
  set(0, 0.0, 0.0, 0.0);    // central hip at origin
  set(1, 0.0, 0.25, 0.0);   // spine
  set(12, -0.1, -0.05, 0.0);  // left hip
  set(16, 0.1, -0.05, 0.0);   // right hip
  for (int u = 2; u < kJoints; ++u) {
    if (u == 12 || u == 16) continue;
    set(u, 0.02 * u - 0.25, 0.5 + 0.01 * u, 0.05);
  }
  // undo the per-frame drift on frame 0 reference joints only matters for
  // centering; frame 0 y of joint 0 is 0 by construction
  return seq;
}

SkeletonSequence rotate_about_y(const SkeletonSequence& seq, double angle) {
  SkeletonSequence out = seq;
  const double c = std::cos(angle), s = std::sin(angle);
  for (int t = 0; t < seq.frames; ++t) {
    for (int u = 0; u < kJoints; ++u) {
      for (int m = 0; m < kPerformers; ++m) {
        const double x = seq.at(0, t, u, m), z = seq.at(2, t, u, m);
        out.at(0, t, u, m) = static_cast<float>(c * x + s * z);
        out.at(2, t, u, m) = static_cast<float>(-s * x + c * z);
      }
    }
  }
  return out;
}

double max_pairwise_distance_drift(const SkeletonSequence& a,
                                   const SkeletonSequence& b) {
  double worst = 0.0;
  for (int t = 0; t < std::min(a.frames, b.frames); t += 7) {
    for (int u = 0; u < kJoints; ++u) {
      for (int v = u + 1; v < kJoints; v += 3) {
        auto dist = [&](const SkeletonSequence& s, int i, int j) {
          const double dx = s.at(0, t, i, 0) - s.at(0, t, j, 0);
          const double dy = s.at(1, t, i, 0) - s.at(1, t, j, 0);
          const double dz = s.at(2, t, i, 0) - s.at(2, t, j, 0);
          return std::sqrt(dx * dx + dy * dy + dz * dz);
        };
        worst = std::max(worst, std::abs(dist(a, u, v) - dist(b, u, v)));
      }
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("parse: zero fixture gives the right shape and mask") {
  std::istringstream in(make_fixture(2, 1, 0.0));
  const ParseResult r = parse_ntu_skeleton(in);
  CHECK(r.sequence.frames == 2);
  CHECK(r.sequence.performer_mask[0]);
  CHECK_FALSE(r.sequence.performer_mask[1]);
  CHECK(r.sequence.data.size() == static_cast<size_t>(3) * 2 * 25 * 2);
  // second performer slot zero-filled
  for (int t = 0; t < 2; ++t) {
    for (int u = 0; u < 25; ++u) {
      for (int c = 0; c < 3; ++c) CHECK(r.sequence.at(c, t, u, 1) == 0.0f);
    }
  }
  CHECK(r.sequence.at(0, 1, 3, 0) == 3.0f);
  CHECK(r.warnings.empty());
}

TEST_CASE("parse: three bodies keeps two and warns") {
  std::istringstream in(make_fixture(2, 3, 1.0));
  const ParseResult r = parse_ntu_skeleton(in);
  CHECK(r.sequence.performer_mask[0]);
  CHECK(r.sequence.performer_mask[1]);
  CHECK(r.warnings.size() == 2);  // one per frame
  // the two kept bodies are the first two tracking ids (equal presence,
  // earlier appearance wins)
  CHECK(r.sequence.at(0, 0, 0, 0) == 1.0f);
  CHECK(r.sequence.at(0, 0, 0, 1) == 101.0f);
}

TEST_CASE("parse: body vanishing mid-sequence leaves zero frames") {
  std::ostringstream os;
  os << 2 << "\n";
  os << 2 << "\n";  // frame 0: both bodies
  for (int b = 0; b < 2; ++b) {
    os << (7 + b) << " 0 0 0 0 0 0 0 0 2\n" << 25 << "\n";
    for (int u = 0; u < 25; ++u) os << (b + 1) << " 0 0\n";
  }
  os << 1 << "\n";  // frame 1: only body 7
  os << 7 << " 0 0 0 0 0 0 0 0 2\n" << 25 << "\n";
  for (int u = 0; u < 25; ++u) os << "5 0 0\n";
  std::istringstream in(os.str());
  const ParseResult r = parse_ntu_skeleton(in);
  CHECK(r.sequence.performer_mask[1]);
  CHECK(r.sequence.at(0, 0, 0, 1) == 2.0f);
  CHECK(r.sequence.at(0, 1, 0, 1) == 0.0f);  // absent that frame
  CHECK(r.sequence.at(0, 1, 0, 0) == 5.0f);
}

TEST_CASE("parse: malformed inputs carry line numbers") {
  {
    std::istringstream in(make_fixture(1, 1, 0.0, 24));  // joint count 24
    try {
      parse_ntu_skeleton(in);
      FAIL("expected parse error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Data);
      CHECK(std::string(e.what()).find("line 4") != std::string::npos);
      CHECK(std::string(e.what()).find("24") != std::string::npos);
    }
  }
  {
    // truncated: missing the last joint line
    std::string text = make_fixture(1, 1);
    text = text.substr(0, text.rfind("24 ")) ;
    std::istringstream in(text);
    CHECK_THROWS_AS(parse_ntu_skeleton(in), Error);
  }
  {
    // non-numeric token in a joint line
    std::string text = make_fixture(1, 1);
    const auto pos = text.find("3 3.5 3.25");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 1, "x");
    std::istringstream in(text);
    try {
      parse_ntu_skeleton(in);
      FAIL("expected parse error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
  }
}

TEST_CASE("parse o serialize o parse is a fixed point") {
  std::istringstream in(make_fixture(3, 2, 2.5));
  const ParseResult first = parse_ntu_skeleton(in);
  std::istringstream in2(serialize_fixture(first.sequence));
  const ParseResult second = parse_ntu_skeleton(in2);
  CHECK(second.sequence.frames == first.sequence.frames);
  CHECK(second.sequence.performer_mask == first.sequence.performer_mask);
  CHECK(second.sequence.data == first.sequence.data);
}

TEST_CASE("label from filename") {
  CHECK(label_from_filename("S001C001P001R001A042.skeleton") == 41);
  CHECK(label_from_filename("/data/a/S018C002P042R002A120.skeleton") == 119);
  CHECK(label_from_filename("noaction.skeleton") == -1);
}

TEST_CASE("normalize_length: identity, subsampling and padding") {
  SkeletonSequence id = frontal_pose_sequence(75);
  const SkeletonSequence same = normalize_length(id);
  CHECK(same.data == id.data);

  SkeletonSequence longer = SkeletonSequence::zeros(150);
  longer.performer_mask[0] = true;
  for (int t = 0; t < 150; ++t) longer.at(0, t, 0, 0) = static_cast<float>(t);
  const SkeletonSequence down = normalize_length(longer);
  REQUIRE(down.frames == 75);
  for (int i = 0; i < 75; ++i) {
    CHECK(down.at(0, i, 0, 0) == static_cast<float>(2 * i));  // floor(i*150/75)
  }

  SkeletonSequence shorter = SkeletonSequence::zeros(50);
  shorter.performer_mask[0] = true;
  for (int t = 0; t < 50; ++t) shorter.at(1, t, 5, 0) = 1.0f;
  const SkeletonSequence up = normalize_length(shorter);
  REQUIRE(up.frames == 75);
  for (int t = 0; t < 50; ++t) CHECK(up.at(1, t, 5, 0) == 1.0f);
  for (int t = 50; t < 75; ++t) {
    for (int c = 0; c < 3; ++c) {
      for (int u = 0; u < 25; ++u) CHECK(up.at(c, t, u, 0) == 0.0f);
    }
  }
  // idempotent once at target
  CHECK(normalize_length(up).data == up.data);
  CHECK_THROWS_AS(normalize_length(SkeletonSequence{}), Error);
}

TEST_CASE("frontal_align: already frontal stays put") {
  const SkeletonSequence seq = frontal_pose_sequence(10);
  const FrontalAlignResult r = frontal_align(seq);
  CHECK_FALSE(r.degenerate);
  CHECK(std::abs(r.yaw_radians) < 1e-6);
  CHECK(testutil::close(max_pairwise_distance_drift(seq, r.sequence), 0.0, 1e-6));
  for (size_t i = 0; i < seq.data.size(); ++i) {
    CHECK(close(seq.data[i], r.sequence.data[i], 1e-6));
  }
}

TEST_CASE("frontal_align recovers a known rotation") {
  const SkeletonSequence seq = frontal_pose_sequence(12);
  const SkeletonSequence aligned = frontal_align(seq).sequence;
  for (double angle : {0.5, 1.5707963, -2.2, 3.0}) {
    const SkeletonSequence rotated = rotate_about_y(aligned, angle);
    const SkeletonSequence recovered = frontal_align(rotated).sequence;
    double worst = 0.0;
    for (size_t i = 0; i < aligned.data.size(); ++i) {
      worst = std::max(worst, std::abs(static_cast<double>(aligned.data[i]) -
                                       recovered.data[i]));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("frontal_align is rigid and idempotent on synthetic data") {
  SynthConfig cfg;
  cfg.classes = 3;
  cfg.samples_per_class = 2;
  cfg.seed = 5;
  cfg.difficulty = 0.7;
  const Dataset ds = generate_synthetic_dataset(cfg);
  for (const auto& seq : ds.sequences) {
    const SkeletonSequence once = frontal_align(seq).sequence;
    const SkeletonSequence twice = frontal_align(once).sequence;
    CHECK(max_pairwise_distance_drift(seq, once) < 1e-5);
    double worst = 0.0;
    for (size_t i = 0; i < once.data.size(); ++i) {
      worst = std::max(worst, std::abs(static_cast<double>(once.data[i]) -
                                       twice.data[i]));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("frontal_align: zeroed skeleton degenerates to identity") {
  SkeletonSequence zeros = SkeletonSequence::zeros(5);
  zeros.performer_mask[0] = true;
  const FrontalAlignResult r = frontal_align(zeros);
  CHECK(r.degenerate);
  CHECK(r.sequence.data == zeros.data);
}

TEST_CASE("dataset container round trip") {
  testutil::TempDir dir("dataset");
  SynthConfig cfg;
  cfg.classes = 3;
  cfg.samples_per_class = 3;
  cfg.seed = 9;
  cfg.difficulty = 0.3;
  const Dataset ds = generate_synthetic_dataset(cfg);
  const std::string path = dir.file("round.alca");
  save_dataset(ds, path);
  const Dataset back = load_dataset(path);
  REQUIRE(back.sequences.size() == ds.sequences.size());
  for (size_t i = 0; i < ds.sequences.size(); ++i) {
    CHECK(back.sequences[i].label == ds.sequences[i].label);
    CHECK(back.sequences[i].frames == ds.sequences[i].frames);
    CHECK(back.sequences[i].performer_mask == ds.sequences[i].performer_mask);
    CHECK(back.sequences[i].data == ds.sequences[i].data);
  }
}

TEST_CASE("dataset container detects corruption") {
  testutil::TempDir dir("corrupt");
  SynthConfig cfg;
  cfg.classes = 2;
  cfg.samples_per_class = 2;
  const std::string path = dir.file("c.alca");
  save_dataset(generate_synthetic_dataset(cfg), path);
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(100);
  char byte;
  f.seekg(100);
  f.read(&byte, 1);
  byte = static_cast<char>(byte ^ 0x40);
  f.seekp(100);
  f.write(&byte, 1);
  f.close();
  CHECK_THROWS_AS(load_dataset(path), Error);
}

TEST_CASE("empty dataset round trips") {
  testutil::TempDir dir("empty");
  const std::string path = dir.file("e.alca");
  save_dataset(Dataset{}, path);
  CHECK(load_dataset(path).sequences.empty());
}

TEST_CASE("synthetic generator determinism") {
  SynthConfig cfg;
  cfg.classes = 5;
  cfg.samples_per_class = 4;
  cfg.seed = 77;
  cfg.difficulty = 0.6;
  const Dataset a = generate_synthetic_dataset(cfg);
  const Dataset b = generate_synthetic_dataset(cfg);
  REQUIRE(a.sequences.size() == b.sequences.size());
  for (size_t i = 0; i < a.sequences.size(); ++i) {
    CHECK(a.sequences[i].data == b.sequences[i].data);  // bitwise
  }
  cfg.seed = 78;
  const Dataset c = generate_synthetic_dataset(cfg);
  CHECK(a.sequences[0].data != c.sequences[0].data);
}

TEST_CASE("difficulty 0: samples identical up to the injected rotation") {
  SynthConfig cfg;
  cfg.classes = 4;
  cfg.samples_per_class = 3;
  cfg.seed = 13;
  cfg.difficulty = 0.0;
  const Dataset ds = generate_synthetic_dataset(cfg);
  for (int cls = 0; cls < cfg.classes; ++cls) {
    const auto idx = ds.indices_of_class(cls);
    REQUIRE(idx.size() == 3);
    const SkeletonSequence ref = frontal_align(ds.sequences[idx[0]]).sequence;
    for (size_t k = 1; k < idx.size(); ++k) {
      const SkeletonSequence other =
          frontal_align(ds.sequences[idx[k]]).sequence;
      REQUIRE(other.frames == ref.frames);
      double worst = 0.0;
      for (size_t i = 0; i < ref.data.size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(ref.data[i]) -
                                         other.data[i]));
      }
      CHECK(worst < 1e-5);
    }
  }
}

TEST_CASE("difficulty 0: raw-coordinate nearest neighbor is perfect") {
  SynthConfig cfg;
  cfg.classes = 5;
  cfg.samples_per_class = 4;
  cfg.seed = 21;
  cfg.difficulty = 0.0;
  const Dataset prepped = preprocess_dataset(generate_synthetic_dataset(cfg));
  // hold out the first sample of each class as the reference
  int correct = 0, total = 0;
  for (size_t q = 0; q < prepped.sequences.size(); ++q) {
    if (q % cfg.samples_per_class == 0) continue;  // references
    double best = std::numeric_limits<double>::infinity();
    int best_label = -1;
    for (size_t r = 0; r < prepped.sequences.size(); r += cfg.samples_per_class) {
      double d2 = 0.0;
      for (size_t i = 0; i < prepped.sequences[q].data.size(); ++i) {
        const double d = static_cast<double>(prepped.sequences[q].data[i]) -
                         prepped.sequences[r].data[i];
        d2 += d * d;
      }
      if (d2 < best) {
        best = d2;
        best_label = prepped.sequences[r].label;
      }
    }
    correct += best_label == prepped.sequences[q].label ? 1 : 0;
    ++total;
  }
  CHECK(correct == total);
}

TEST_CASE("splits: references, validation holdout and eval classes") {
  SynthConfig cfg;
  cfg.classes = 6;
  cfg.samples_per_class = 10;
  cfg.seed = 31;
  const Dataset ds = generate_synthetic_dataset(cfg);
  SplitPolicy policy;
  policy.eval_classes = 2;
  policy.val_fraction = 0.2;
  policy.seed = 31;
  const DatasetSplits splits = make_splits(ds, policy);
  CHECK(splits.aux_class_ids == std::vector<int>{0, 1, 2, 3});
  CHECK(splits.eval_class_ids == std::vector<int>{4, 5});
  CHECK(splits.eval_references.size() == 2);
  for (const auto& [cls, idx] : splits.eval_references) {
    CHECK(ds.sequences[idx].label == cls);
    // the reference is the lowest index of its class
    for (size_t i : ds.indices_of_class(cls)) CHECK(idx <= i);
  }
  // 20% of 10 per class held out
  CHECK(splits.aux_val.size() == 4 * 2);
  CHECK(splits.aux_train.size() == 4 * 8);
  CHECK(splits.eval_all.size() == 2 * 10);
  // deterministic
  const DatasetSplits again = make_splits(ds, policy);
  CHECK(again.aux_train == splits.aux_train);
  CHECK(again.aux_val == splits.aux_val);
  CHECK_THROWS_AS(make_splits(ds, SplitPolicy{6, 0.1, 1}), Error);
}
