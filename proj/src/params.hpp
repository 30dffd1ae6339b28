#ifndef ALCA_PARAMS_HPP
#define ALCA_PARAMS_HPP

#include <map>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace alca {

// Named parameter table for one model: trainable tensors plus non-trainable
// buffers (batch-norm running statistics). Registration order is stable and
// defines the optimizer slot order and the checkpoint layout.
template <class S>
class ParamStore {
 public:
  Tensor<S>& add(const std::string& name, Tensor<S> t, bool trainable = true) {
    ALCA_THROW_IF(index_.count(name), ErrorKind::Runtime,
                  "parameter '", name, "' registered twice");
    if (trainable) t.set_requires_grad(true);
    index_[name] = entries_.size();
    entries_.push_back(Entry{name, std::move(t), trainable});
    return entries_.back().tensor;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<S>& get(const std::string& name) {
    auto it = index_.find(name);
    ALCA_THROW_IF(it == index_.end(), ErrorKind::Runtime,
                  "unknown parameter '", name, "'");
    return entries_[it->second].tensor;
  }
  const Tensor<S>& get(const std::string& name) const {
    auto it = index_.find(name);
    ALCA_THROW_IF(it == index_.end(), ErrorKind::Runtime,
                  "unknown parameter '", name, "'");
    return entries_[it->second].tensor;
  }

  std::vector<Tensor<S>> trainable() const {
    std::vector<Tensor<S>> out;
    for (const auto& e : entries_) {
      if (e.trainable) out.push_back(e.tensor);
    }
    return out;
  }
  std::vector<std::string> trainable_names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) {
      if (e.trainable) out.push_back(e.name);
    }
    return out;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
  }

  size_t size() const { return entries_.size(); }
  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  // Deep snapshot / restore of all values (params and buffers alike).
  std::vector<std::vector<S>> snapshot() const {
    std::vector<std::vector<S>> out;
    for (const auto& e : entries_) {
      out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
    }
    return out;
  }
  void restore(const std::vector<std::vector<S>>& snap) {
    ALCA_THROW_IF(snap.size() != entries_.size(), ErrorKind::Runtime,
                  "snapshot does not match parameter table");
    for (size_t i = 0; i < snap.size(); ++i) {
      auto dst = entries_[i].tensor.raw();
      ALCA_THROW_IF(snap[i].size() != dst.size(), ErrorKind::Runtime,
                    "snapshot entry size mismatch for '", entries_[i].name, "'");
      std::copy(snap[i].begin(), snap[i].end(), dst.begin());
    }
  }

  template <class F>
  void for_each(F&& f) const {
    for (const auto& e : entries_) f(e.name, e.tensor, e.trainable);
  }

 private:
  struct Entry {
    std::string name;
    Tensor<S> tensor;
    bool trainable;
  };
  std::vector<Entry> entries_;
  std::map<std::string, size_t> index_;
};

// Checkpoint container: magic "ALCP", u16 version, embedded config JSON,
// named tensor table with f32 little-endian payloads, trailing CRC32.
template <class S>
void save_checkpoint(const ParamStore<S>& store, const std::string& config_json,
                     const std::string& path);

// Loads into an already constructed store; every stored tensor must match an
// existing entry by name and shape. Extra entries in the file are an error,
// missing ones too. Returns the embedded config JSON.
template <class S>
std::string load_checkpoint(ParamStore<S>& store, const std::string& path);

// Reads just the embedded config JSON without touching any tensor table.
std::string checkpoint_peek_config(const std::string& path);

}  // namespace alca

#endif
