#ifndef ALCA_SYNTHETIC_HPP
#define ALCA_SYNTHETIC_HPP

#include "dataset.hpp"

namespace alca {

// Procedural desk-scale stand-in for a motion-capture corpus. Every class is
// a distinct local motion motif: one body-joint group moves along one
// trajectory inside one temporal third of the clip, on top of a shared idle
// sway. Within-class variation is a always-applied random rotation about the
// vertical axis plus difficulty-scaled joint jitter, amplitude jitter, motif
// onset shift, translation offset and playback-length warping. difficulty 0
// makes all samples of a class identical up to the injected rotation.
struct SynthConfig {
  int classes = 10;
  int samples_per_class = 20;
  uint64_t seed = 1;
  double difficulty = 0.5;  // in [0, 1]
};

Dataset generate_synthetic_dataset(const SynthConfig& config);

// Number of distinct motifs available; `classes` may not exceed it.
int synthetic_motif_capacity();

}  // namespace alca

#endif
