#ifndef ALCA_ENCODER_HPP
#define ALCA_ENCODER_HPP

#include <random>
#include <string>
#include <vector>

#include "params.hpp"
#include "skeleton.hpp"
#include "tensor.hpp"
#include "topology.hpp"

namespace alca {

struct BlockSpec {
  int channels = 64;
  int stride = 1;
};

struct EncoderConfig {
  std::vector<BlockSpec> blocks;
  SamplingStrategy sampling = SamplingStrategy::Both;
  double dropout = 0.5;
  bool input_bn = true;
  bool residual = true;
  int in_channels = kCoords;

  // 10 blocks, 64x4 -> 128x3 -> 256x3, temporal stride 2 at the two
  // channel-doubling blocks (5 and 8), which maps 75 input frames to 19.
  static EncoderConfig paper();

  int out_channels() const { return blocks.back().channels; }
  int out_frames(int in_frames) const {
    int t = in_frames;
    for (const auto& b : blocks) t = (t + b.stride - 1) / b.stride;
    return t;
  }
  void validate() const;
};

// One spatial graph convolution: sum_k W_k (f . (A_k o E_k)) + bias, applied
// identically at every frame of f (C_in, T, U).
template <class S>
Tensor<S> spatial_gcn(Tape<S>* tape, const Tensor<S>& f,
                      const std::vector<Tensor<S>>& adjacency,
                      const std::vector<Tensor<S>>& edge_masks,
                      const std::vector<Tensor<S>>& weights,
                      const Tensor<S>& bias);

// The hierarchical spatial-temporal encoder. Each performer stream passes 10
// blocks of [spatial gcn -> bn -> relu -> temporal conv -> bn -> dropout
// -> +residual -> relu]; the streams share all parameters and running
// statistics and are stacked back into (d_feat, T_feat, U, M).
template <class S>
class Encoder {
 public:
  Encoder(const EncoderConfig& config, const SkeletonGraph& graph,
          ParamStore<S>& store);

  // Parameter/buffer registration; init="default" draws fan-scaled uniform
  // weights, init="symmetric" zeroes every weight so all inputs map to the
  // same representation (batch-norm scales stay 1).
  void init_params(const std::string& init, std::mt19937_64& rng);

  Tensor<S> forward_performer(Tape<S>* tape, const Tensor<S>& x, bool training,
                              std::mt19937_64& dropout_rng);

  // x as (C, T, U, M) float sequence -> (d_feat, T_feat, U, M)
  Tensor<S> encode(Tape<S>* tape, const SkeletonSequence& seq, bool training,
                   std::mt19937_64& dropout_rng);

  const EncoderConfig& config() const { return config_; }
  const TopologySet& topology() const { return topo_; }
  int matrix_count() const { return static_cast<int>(topo_.count()); }

 private:
  struct BlockRefs {
    std::vector<Tensor<S>> w;  // per adjacency channel
    std::vector<Tensor<S>> e;
    Tensor<S> spatial_bias;
    Tensor<S> bn1_gamma, bn1_beta, bn1_mean, bn1_var;
    Tensor<S> tcn_w, tcn_bias;
    Tensor<S> bn2_gamma, bn2_beta, bn2_mean, bn2_var;
    bool projected_residual = false;
    Tensor<S> res_w;
    Tensor<S> res_bn_gamma, res_bn_beta, res_bn_mean, res_bn_var;
    int in_channels = 0, out_channels = 0, stride = 1;
  };

  EncoderConfig config_;
  SkeletonGraph graph_;
  TopologySet topo_;
  ParamStore<S>* store_;
  std::vector<Tensor<S>> adjacency_;  // normalized A_k as constant tensors
  Tensor<S> input_bn_gamma_, input_bn_beta_, input_bn_mean_, input_bn_var_;
  std::vector<BlockRefs> blocks_;
};

// Converts one performer slice of a sequence to a (C, T, U) tensor.
template <class S>
Tensor<S> performer_tensor(const SkeletonSequence& seq, int performer);

}  // namespace alca

#endif
