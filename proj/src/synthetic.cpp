#include "synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

namespace alca {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

// Standing rest pose on the 25-joint rig, facing +z, dimensions in meters.
std::array<Vec3, kJoints> rest_pose() {
  std::array<Vec3, kJoints> p{};
  p[0] = {0.00, 0.90, 0.00};   // spine base
  p[1] = {0.00, 1.15, 0.00};   // mid spine
  p[20] = {0.00, 1.40, 0.00};  // spine at shoulders
  p[2] = {0.00, 1.50, 0.00};   // neck
  p[3] = {0.00, 1.65, 0.00};   // head
  p[4] = {-0.25, 1.38, 0.00};  // left shoulder
  p[5] = {-0.30, 1.10, 0.00};  // left elbow
  p[6] = {-0.32, 0.85, 0.00};  // left wrist
  p[7] = {-0.33, 0.76, 0.00};  // left hand
  p[21] = {-0.34, 0.68, 0.02}; // left hand tip
  p[22] = {-0.29, 0.72, 0.04}; // left thumb
  p[8] = {0.25, 1.38, 0.00};
  p[9] = {0.30, 1.10, 0.00};
  p[10] = {0.32, 0.85, 0.00};
  p[11] = {0.33, 0.76, 0.00};
  p[23] = {0.34, 0.68, 0.02};
  p[24] = {0.29, 0.72, 0.04};
  p[12] = {-0.10, 0.85, 0.00}; // left hip
  p[13] = {-0.12, 0.45, 0.00};
  p[14] = {-0.13, 0.08, 0.00};
  p[15] = {-0.13, 0.00, 0.10};
  p[16] = {0.10, 0.85, 0.00};  // right hip
  p[17] = {0.12, 0.45, 0.00};
  p[18] = {0.13, 0.08, 0.00};
  p[19] = {0.13, 0.00, 0.10};
  return p;
}

const std::vector<std::vector<int>>& motif_groups() {
  static const std::vector<std::vector<int>> groups = {
      {2, 3},                // head
      {5, 6, 7, 21, 22},     // left arm below the shoulder
      {9, 10, 11, 23, 24},   // right arm
      {13, 14, 15},          // left leg below the hip
      {17, 18, 19},          // right leg
      {1, 20, 2, 3},         // upper torso lean (head follows)
  };
  return groups;
}

constexpr int kTrajectories = 5;
constexpr int kSections = 3;

Vec3 trajectory_offset(int trajectory, double phase, double amplitude) {
  switch (trajectory) {
    case 0:  // lateral sway
      return {amplitude * std::sin(2.0 * kPi * 2.0 * phase), 0.0, 0.0};
    case 1:  // vertical bob
      return {0.0, amplitude * std::sin(2.0 * kPi * 2.0 * phase), 0.0};
    case 2:  // forward push
      return {0.0, 0.0, amplitude * std::sin(kPi * phase)};
    case 3:  // horizontal circle
      return {amplitude * (std::cos(2.0 * kPi * phase) - 1.0), 0.0,
              amplitude * std::sin(2.0 * kPi * phase)};
    case 4:  // wave
      return {0.5 * amplitude * std::sin(2.0 * kPi * phase),
              0.3 * amplitude * std::sin(4.0 * kPi * phase), 0.0};
    default:
      return {};
  }
}

struct Motif {
  std::vector<int> group;
  int section = 0;     // temporal third
  int trajectory = 0;
  bool second_performer = false;
  double idle_phase = 0.0;
  int base_frames = kTargetFrames;
};

Motif motif_for_class(int class_id, uint64_t seed, int total_classes) {
  const int n_groups = static_cast<int>(motif_groups().size());
  const int capacity = n_groups * kSections * kTrajectories;
  ALCA_THROW_IF(total_classes > capacity, ErrorKind::Config,
                "synthetic generator supports at most ", capacity, " classes");
  // One shared shuffled assignment of motif slots to classes per seed.
  std::vector<int> slots(static_cast<size_t>(capacity));
  std::iota(slots.begin(), slots.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, fnv1a64("motif-assignment")));
  std::shuffle(slots.begin(), slots.end(), rng);

  const int slot = slots[static_cast<size_t>(class_id)];
  Motif m;
  m.group = motif_groups()[static_cast<size_t>(slot % n_groups)];
  m.section = (slot / n_groups) % kSections;
  m.trajectory = slot / (n_groups * kSections);
  m.second_performer = (class_id % 5) == 4;
  const uint64_t h = mix64(seed ^ (static_cast<uint64_t>(class_id) * 0x9e37u));
  m.idle_phase = 2.0 * kPi * static_cast<double>(h % 1000) / 1000.0;
  m.base_frames = 60 + static_cast<int>(h % 31);  // 60..90
  return m;
}

struct SampleNoise {
  double rotation = 0.0;     // always applied
  double jitter_sigma = 0.0;
  double amplitude_scale = 1.0;
  double onset_shift = 0.0;
  Vec3 translation;
  int frames = kTargetFrames;
};

SampleNoise draw_noise(std::mt19937_64& rng, const Motif& motif,
                       double difficulty) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  SampleNoise noise;
  noise.rotation = angle(rng);
  noise.jitter_sigma = 0.02 * difficulty;
  noise.amplitude_scale = 1.0 + 0.25 * difficulty * uni(rng);
  noise.onset_shift = 0.08 * difficulty * uni(rng);
  noise.translation = {0.4 * difficulty * uni(rng), 0.1 * difficulty * uni(rng),
                       0.4 * difficulty * uni(rng)};
  const double warp = 1.0 + 0.25 * difficulty * uni(rng);
  noise.frames = std::clamp(
      static_cast<int>(std::lround(motif.base_frames * warp)), 40, 110);
  return noise;
}

double envelope(double t) {
  const double s = std::sin(kPi * t);
  return s * s;
}

}  // namespace

int synthetic_motif_capacity() {
  return static_cast<int>(motif_groups().size()) * kSections * kTrajectories;
}

Dataset generate_synthetic_dataset(const SynthConfig& config) {
  ALCA_THROW_IF(config.classes < 2, ErrorKind::Config,
                "synthetic: need at least 2 classes");
  ALCA_THROW_IF(config.samples_per_class < 2, ErrorKind::Config,
                "synthetic: need at least 2 samples per class");
  ALCA_THROW_IF(config.difficulty < 0.0 || config.difficulty > 1.0,
                ErrorKind::Config, "synthetic: difficulty must be in [0, 1]");

  const auto base = rest_pose();
  Dataset ds;
  ds.sequences.reserve(static_cast<size_t>(config.classes) *
                       config.samples_per_class);

  for (int cls = 0; cls < config.classes; ++cls) {
    const Motif motif = motif_for_class(cls, config.seed, config.classes);
    for (int sample = 0; sample < config.samples_per_class; ++sample) {
      // Per-sample stream independent of generation order.
      std::mt19937_64 rng(derive_seed(
          config.seed,
          static_cast<uint64_t>(cls) * 1000003ull + static_cast<uint64_t>(sample)));
      const SampleNoise noise = draw_noise(rng, motif, config.difficulty);
      std::normal_distribution<double> gauss(0.0, 1.0);

      const int frames = noise.frames;
      SkeletonSequence seq = SkeletonSequence::zeros(frames);
      seq.label = cls;
      seq.performer_mask[0] = true;
      seq.performer_mask[1] = motif.second_performer;

      const double window_lo =
          static_cast<double>(motif.section) / kSections + noise.onset_shift;
      const double window_hi = window_lo + 1.0 / kSections;
      const double cr = std::cos(noise.rotation);
      const double sr = std::sin(noise.rotation);

      for (int t = 0; t < frames; ++t) {
        const double tau = frames > 1 ? static_cast<double>(t) / (frames - 1) : 0.0;
        // Shared idle sway, class-phased so it carries no inter-class signal
        // beyond the phase itself.
        const Vec3 idle = {0.006 * std::sin(kPi * tau + motif.idle_phase),
                           0.010 * std::sin(2.0 * kPi * tau + motif.idle_phase),
                           0.0};
        Vec3 motion{};
        if (tau >= window_lo && tau < window_hi) {
          const double local = (tau - window_lo) * kSections;
          const Vec3 off = trajectory_offset(
              motif.trajectory, local,
              0.25 * noise.amplitude_scale * envelope(local));
          motion = off;
        }
        for (int m = 0; m < kPerformers; ++m) {
          if (!seq.performer_mask[static_cast<size_t>(m)]) continue;
          const double side_offset = m == 0 ? 0.0 : 0.9;
          for (int u = 0; u < kJoints; ++u) {
            Vec3 p = base[static_cast<size_t>(u)];
            p.x += side_offset;
            p.x += idle.x;
            p.y += idle.y;
            if (m == 0 &&
                std::count(motif.group.begin(), motif.group.end(), u) > 0) {
              p.x += motion.x;
              p.y += motion.y;
              p.z += motion.z;
            }
            if (m == 1) {
              // The partner leans slightly during the motif window.
              if (tau >= window_lo && tau < window_hi) {
                const double local = (tau - window_lo) * kSections;
                p.z += 0.08 * envelope(local) * (u >= 1 ? 1.0 : 0.0);
              }
            }
            if (noise.jitter_sigma > 0.0) {
              p.x += noise.jitter_sigma * gauss(rng);
              p.y += noise.jitter_sigma * gauss(rng);
              p.z += noise.jitter_sigma * gauss(rng);
            }
            // Scene-level rigid rotation about the vertical axis, then the
            // difficulty-scaled translation offset.
            const double rx = cr * p.x + sr * p.z;
            const double rz = -sr * p.x + cr * p.z;
            seq.at(0, t, u, m) = static_cast<float>(rx + noise.translation.x);
            seq.at(1, t, u, m) = static_cast<float>(p.y + noise.translation.y);
            seq.at(2, t, u, m) = static_cast<float>(rz + noise.translation.z);
          }
        }
      }
      ds.sequences.push_back(std::move(seq));
    }
  }
  return ds;
}

}  // namespace alca
