#include "pipeline.hpp"

namespace alca {

SkeletonSequence preprocess_sequence(const SkeletonSequence& seq,
                                     const PreprocessOptions& options) {
  SkeletonSequence out = seq;
  if (options.align) {
    FrontalAlignOptions align;
    align.joints = options.joints;
    align.center_origin = options.center_origin;
    out = frontal_align(out, align).sequence;
  }
  return normalize_length(out, options.target_frames);
}

Dataset preprocess_dataset(const Dataset& dataset,
                           const PreprocessOptions& options) {
  Dataset out;
  out.sequences.reserve(dataset.sequences.size());
  for (const auto& seq : dataset.sequences) {
    out.sequences.push_back(preprocess_sequence(seq, options));
  }
  return out;
}

}  // namespace alca
