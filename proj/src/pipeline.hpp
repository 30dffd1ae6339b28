#ifndef ALCA_PIPELINE_HPP
#define ALCA_PIPELINE_HPP

#include "dataset.hpp"

namespace alca {

struct PreprocessOptions {
  int target_frames = kTargetFrames;
  bool align = true;
  bool center_origin = true;
  HipSpineJoints joints;
};

// frontal_align then normalize_length, the standard ingestion order.
SkeletonSequence preprocess_sequence(const SkeletonSequence& seq,
                                     const PreprocessOptions& options = {});

Dataset preprocess_dataset(const Dataset& dataset,
                           const PreprocessOptions& options = {});

}  // namespace alca

#endif
