#ifndef ALCA_MODEL_HPP
#define ALCA_MODEL_HPP

#include <memory>
#include <optional>
#include <random>
#include <string>

#include "encoder.hpp"
#include "representation.hpp"

namespace alca {

struct ModelConfig {
  EncoderConfig encoder;
  SkeletonGraph graph;
  Division division = Division::Both;
  ConstraintMode constraints = ConstraintMode::Full;
  bool pool_overlap = false;
  int d_emb = 256;
  int frames = kTargetFrames;  // preprocessed input length
  int performers = kPerformers;
  std::string init = "default";  // "default" | "symmetric"
  int head_classes = 0;          // >0 adds the traditional softmax head

  static ModelConfig paper();
  void validate() const;
  int t_feat() const { return encoder.out_frames(frames); }
  int d_feat() const { return encoder.out_channels(); }
};

// Full pipeline state: encoder, pooling plan, ADL head and the optional
// traditional classifier head, all registered in one named parameter store.
template <class S>
class Model {
 public:
  explicit Model(const ModelConfig& config);

  void init_params(uint64_t seed);

  // Preprocessed sequence (frames == config.frames) -> transformed
  // comparing-unit representation G'.
  Representation<S> represent(Tape<S>* tape, const SkeletonSequence& seq,
                              bool training, std::mt19937_64& dropout_rng);

  // Same pipeline over raw per-performer (C, T, U) streams; lets tests and
  // the gradient checker drive tiny rigs that are not 25-joint sequences.
  Representation<S> represent_streams(Tape<S>* tape,
                                      const std::vector<Tensor<S>>& streams,
                                      const std::vector<bool>& performer_valid,
                                      bool training,
                                      std::mt19937_64& dropout_rng);

  // Pooled units before ADL, for the degenerate-regime and pooling tests.
  Representation<S> pool_only(Tape<S>* tape, const SkeletonSequence& seq,
                              bool training, std::mt19937_64& dropout_rng);

  // Mean over valid units of G', the traditional classifier input.
  Tensor<S> head_input(Tape<S>* tape, const Representation<S>& rep);
  Tensor<S> head_logits(Tape<S>* tape, const Representation<S>& rep);

  Tensor<S> encode(Tape<S>* tape, const SkeletonSequence& seq, bool training,
                   std::mt19937_64& dropout_rng) {
    return encoder_.encode(tape, seq, training, dropout_rng);
  }

  const ModelConfig& config() const { return config_; }
  const PoolPlan& pool_plan() const { return plan_; }
  ParamStore<S>& store() { return store_; }
  const ParamStore<S>& store() const { return store_; }
  Encoder<S>& encoder() { return encoder_; }
  const AdlHead<S>& adl() const { return adl_; }

 private:
  ModelConfig config_;
  ParamStore<S> store_;
  Encoder<S> encoder_;
  AdlHead<S> adl_;
  PoolPlan plan_;
  Tensor<S> head_w_, head_b_;
};

}  // namespace alca

#endif
