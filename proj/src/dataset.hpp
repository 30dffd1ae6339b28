#ifndef ALCA_DATASET_HPP
#define ALCA_DATASET_HPP

#include <optional>
#include <string>
#include <vector>

#include "skeleton.hpp"

namespace alca {

// A labeled collection of skeleton sequences plus the derived protocol
// splits. The on-disk container stores only sequences and labels; the splits
// are a deterministic function of (class list, split policy, seed) and are
// derived after loading.
struct Dataset {
  std::vector<SkeletonSequence> sequences;

  std::vector<int> class_ids() const;  // sorted distinct labels
  std::vector<size_t> indices_of_class(int label) const;
  void validate() const;
};

struct SplitPolicy {
  int eval_classes = 0;       // last N classes become the novel evaluation set
  double val_fraction = 0.1;  // per-class sample holdout inside the auxiliary set
  uint64_t seed = 1;
};

// Index-level view of the three splits. The evaluation reference for each
// novel class is the sample with the smallest dataset index of that class.
struct DatasetSplits {
  std::vector<size_t> aux_train;
  std::vector<size_t> aux_val;
  std::vector<size_t> eval_all;                 // references + probes
  std::vector<int> aux_class_ids;               // sorted
  std::vector<int> eval_class_ids;              // sorted
  std::vector<std::pair<int, size_t>> eval_references;  // class -> index
};

DatasetSplits make_splits(const Dataset& dataset, const SplitPolicy& policy);

// Versioned binary container: magic "ALCA", u16 version, little-endian 32-bit
// floats, per-sequence header (label, frame count, performer mask), trailing
// CRC32 over everything before it.
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace alca

#endif
