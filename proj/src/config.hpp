#ifndef ALCA_CONFIG_HPP
#define ALCA_CONFIG_HPP

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dataset.hpp"
#include "fewshot.hpp"
#include "model.hpp"
#include "pipeline.hpp"
#include "synthetic.hpp"

namespace alca {

// Effective run configuration: defaults, optionally overlaid by a config
// file body and by "dotted.path=value" overrides (later wins). Unknown keys
// are rejected with their full path. The canonical dump is embedded into
// every output artifact.
class RunConfig {
 public:
  static nlohmann::json defaults();
  static RunConfig resolve(const std::string& file_json,
                           const std::vector<std::string>& overrides);

  uint64_t seed() const;
  int threads() const;
  std::string precision() const;  // "f32" | "f64"

  ModelConfig model_config() const;
  TrainConfig train_config() const;
  SynthConfig synth_config() const;
  SplitPolicy split_policy() const;
  PreprocessOptions preprocess_options() const;
  EvalOptions eval_options() const;
  bool prep_skip_bad() const;

  const nlohmann::json& effective() const { return effective_; }
  std::string dump(int indent = 2) const { return effective_.dump(indent); }
  std::string hash() const;  // stable content hash of the canonical dump

 private:
  nlohmann::json effective_;
};

}  // namespace alca

#endif
