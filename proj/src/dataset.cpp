#include "dataset.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>
#include <set>

namespace alca {

std::vector<int> Dataset::class_ids() const {
  std::set<int> ids;
  for (const auto& s : sequences) ids.insert(s.label);
  return {ids.begin(), ids.end()};
}

std::vector<size_t> Dataset::indices_of_class(int label) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < sequences.size(); ++i) {
    if (sequences[i].label == label) out.push_back(i);
  }
  return out;
}

void Dataset::validate() const {
  for (const auto& s : sequences) {
    s.validate();
    ALCA_THROW_IF(s.label < 0, ErrorKind::Data,
                  "dataset: sequence without a class label");
  }
}

DatasetSplits make_splits(const Dataset& dataset, const SplitPolicy& policy) {
  const std::vector<int> classes = dataset.class_ids();
  ALCA_THROW_IF(policy.eval_classes < 0 ||
                    policy.eval_classes >= static_cast<int>(classes.size()),
                ErrorKind::Config, "split: eval_classes ", policy.eval_classes,
                " must leave at least one auxiliary class (have ",
                classes.size(), ")");
  ALCA_THROW_IF(policy.val_fraction < 0.0 || policy.val_fraction >= 1.0,
                ErrorKind::Config, "split: val_fraction must be in [0, 1)");

  DatasetSplits splits;
  const size_t aux_count = classes.size() - static_cast<size_t>(policy.eval_classes);
  splits.aux_class_ids.assign(classes.begin(),
                              classes.begin() + static_cast<long>(aux_count));
  splits.eval_class_ids.assign(classes.begin() + static_cast<long>(aux_count),
                               classes.end());

  std::mt19937_64 rng(derive_seed(policy.seed, fnv1a64("split")));
  for (int cls : splits.aux_class_ids) {
    std::vector<size_t> idx = dataset.indices_of_class(cls);
    // Shuffle within the class so the holdout is not biased by file order,
    // deterministically under the split seed.
    std::shuffle(idx.begin(), idx.end(), rng);
    size_t n_val = static_cast<size_t>(
        static_cast<double>(idx.size()) * policy.val_fraction);
    if (policy.val_fraction > 0.0 && n_val == 0 && idx.size() >= 2) n_val = 1;
    for (size_t i = 0; i < idx.size(); ++i) {
      (i < n_val ? splits.aux_val : splits.aux_train).push_back(idx[i]);
    }
  }
  std::sort(splits.aux_train.begin(), splits.aux_train.end());
  std::sort(splits.aux_val.begin(), splits.aux_val.end());

  for (int cls : splits.eval_class_ids) {
    std::vector<size_t> idx = dataset.indices_of_class(cls);
    ALCA_THROW_IF(idx.empty(), ErrorKind::Data, "split: evaluation class ", cls,
                  " has no samples");
    const size_t ref = *std::min_element(idx.begin(), idx.end());
    splits.eval_references.emplace_back(cls, ref);
    for (size_t i : idx) splits.eval_all.push_back(i);
  }
  std::sort(splits.eval_all.begin(), splits.eval_all.end());
  return splits;
}

namespace {

constexpr char kMagic[4] = {'A', 'L', 'C', 'A'};
constexpr uint16_t kVersion = 1;

template <class T>
void put(std::string& buf, T v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(const std::string& buf, size_t& pos, const std::string& path) {
  ALCA_THROW_IF(pos + sizeof(T) > buf.size(), ErrorKind::Data, "'", path,
                "': truncated dataset file");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::string buf;
  buf.append(kMagic, 4);
  put<uint16_t>(buf, kVersion);
  put<uint8_t>(buf, kCoords);
  put<uint8_t>(buf, kJoints);
  put<uint8_t>(buf, kPerformers);
  put<uint32_t>(buf, static_cast<uint32_t>(dataset.sequences.size()));
  for (const auto& s : dataset.sequences) {
    ALCA_THROW_IF(s.data.size() != s.expected_size(), ErrorKind::Data,
                  "save_dataset: sequence buffer size mismatch");
    put<int32_t>(buf, s.label);
    put<uint32_t>(buf, static_cast<uint32_t>(s.frames));
    uint8_t mask = 0;
    for (int m = 0; m < kPerformers; ++m) {
      if (s.performer_mask[static_cast<size_t>(m)]) mask |= (1u << m);
    }
    put<uint8_t>(buf, mask);
    buf.append(reinterpret_cast<const char*>(s.data.data()),
               s.data.size() * sizeof(float));
  }
  put<uint32_t>(buf, crc32(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  ALCA_THROW_IF(!out, ErrorKind::Data, "cannot write '", path, "'");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  ALCA_THROW_IF(!out, ErrorKind::Data, "short write to '", path, "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  ALCA_THROW_IF(!in, ErrorKind::Data, "cannot open '", path, "'");
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  ALCA_THROW_IF(buf.size() < 15 || std::memcmp(buf.data(), kMagic, 4) != 0,
                ErrorKind::Data, "'", path, "' is not a dataset container");
  uint32_t stored_crc = 0;
  std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
  ALCA_THROW_IF(stored_crc != crc32(buf.data(), buf.size() - 4), ErrorKind::Data,
                "'", path, "': checksum mismatch, file is corrupted");

  size_t pos = 4;
  const uint16_t version = get<uint16_t>(buf, pos, path);
  ALCA_THROW_IF(version != kVersion, ErrorKind::Data, "'", path,
                "': unsupported container version ", version);
  const uint8_t c = get<uint8_t>(buf, pos, path);
  const uint8_t u = get<uint8_t>(buf, pos, path);
  const uint8_t m = get<uint8_t>(buf, pos, path);
  ALCA_THROW_IF(c != kCoords || u != kJoints || m != kPerformers,
                ErrorKind::Data, "'", path, "': unexpected layout ",
                static_cast<int>(c), "x", static_cast<int>(u), "x",
                static_cast<int>(m));
  const uint32_t count = get<uint32_t>(buf, pos, path);

  Dataset ds;
  ds.sequences.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const int32_t label = get<int32_t>(buf, pos, path);
    const uint32_t frames = get<uint32_t>(buf, pos, path);
    const uint8_t mask = get<uint8_t>(buf, pos, path);
    ALCA_THROW_IF(frames < 1, ErrorKind::Data, "'", path,
                  "': sequence with zero frames");
    SkeletonSequence s = SkeletonSequence::zeros(static_cast<int>(frames));
    s.label = label;
    for (int slot = 0; slot < kPerformers; ++slot) {
      s.performer_mask[static_cast<size_t>(slot)] = (mask >> slot) & 1u;
    }
    const size_t bytes = s.data.size() * sizeof(float);
    ALCA_THROW_IF(pos + bytes > buf.size(), ErrorKind::Data, "'", path,
                  "': truncated dataset file");
    std::memcpy(s.data.data(), buf.data() + pos, bytes);
    pos += bytes;
    ds.sequences.push_back(std::move(s));
  }
  ALCA_THROW_IF(pos != buf.size() - 4, ErrorKind::Data, "'", path,
                "': trailing bytes after sequence table");
  return ds;
}

}  // namespace alca
