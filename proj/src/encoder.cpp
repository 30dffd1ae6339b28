#include "encoder.hpp"

#include <cmath>

namespace alca {

EncoderConfig EncoderConfig::paper() {
  EncoderConfig cfg;
  cfg.blocks = {{64, 1},  {64, 1},  {64, 1},  {64, 1},  {128, 2},
                {128, 1}, {128, 1}, {256, 2}, {256, 1}, {256, 1}};
  return cfg;
}

void EncoderConfig::validate() const {
  ALCA_THROW_IF(blocks.empty(), ErrorKind::Config, "encoder: no blocks");
  ALCA_THROW_IF(in_channels < 1, ErrorKind::Config, "encoder: in_channels < 1");
  ALCA_THROW_IF(dropout < 0.0 || dropout >= 1.0, ErrorKind::Config,
                "encoder: dropout must be in [0, 1)");
  for (const auto& b : blocks) {
    ALCA_THROW_IF(b.channels < 1, ErrorKind::Config, "encoder: bad channel count");
    ALCA_THROW_IF(b.stride != 1 && b.stride != 2, ErrorKind::Config,
                  "encoder: stride must be 1 or 2");
  }
}

template <class S>
Tensor<S> spatial_gcn(Tape<S>* tape, const Tensor<S>& f,
                      const std::vector<Tensor<S>>& adjacency,
                      const std::vector<Tensor<S>>& edge_masks,
                      const std::vector<Tensor<S>>& weights,
                      const Tensor<S>& bias) {
  ALCA_THROW_IF(f.rank() != 3, ErrorKind::Runtime, "spatial_gcn: input rank ",
                f.rank());
  ALCA_THROW_IF(adjacency.empty() || adjacency.size() != edge_masks.size() ||
                    adjacency.size() != weights.size(),
                ErrorKind::Config,
                "spatial_gcn: adjacency/mask/weight counts disagree");
  const int64_t cin = f.dim(0), t = f.dim(1), u = f.dim(2);
  const int64_t cout = weights[0].dim(0);
  ALCA_THROW_IF(weights[0].dim(1) != cin, ErrorKind::Runtime,
                "spatial_gcn: weight expects ", weights[0].dim(1),
                " channels, input has ", cin);
  Tensor<S> acc;
  const Tensor<S> f_flat = reshape(tape, f, {cin * t, u});
  for (size_t k = 0; k < adjacency.size(); ++k) {
    const Tensor<S> masked = mul(tape, adjacency[k], edge_masks[k]);
    const Tensor<S> gathered = matmul(tape, f_flat, masked);  // (Cin*T, U)
    const Tensor<S> mixed = matmul(
        tape, weights[k], reshape(tape, gathered, {cin, t * u}));  // (Cout, T*U)
    acc = acc.defined() ? add(tape, acc, mixed) : mixed;
  }
  Tensor<S> out = reshape(tape, acc, {cout, t, u});
  if (bias.defined()) {
    out = add(tape, out, reshape(tape, bias, {cout, 1, 1}));
  }
  return out;
}

template <class S>
Encoder<S>::Encoder(const EncoderConfig& config, const SkeletonGraph& graph,
                    ParamStore<S>& store)
    : config_(config), graph_(graph), store_(&store) {
  config_.validate();
  topo_ = build_topology_set(graph_, config_.sampling);
  for (const auto& m : topo_.normalized) {
    std::vector<S> vals(m.values.begin(), m.values.end());
    adjacency_.push_back(
        Tensor<S>::from({m.joints, m.joints}, std::move(vals)));
  }

  // Register every parameter and buffer up front so checkpoints can be
  // loaded into a freshly constructed model. Weights start at zero (the
  // "symmetric" init); E masks start at ones since a zero mask would gate
  // every gradient through the spatial convolution off.
  const int u = graph_.joints;
  if (config_.input_bn) {
    const int cu = config_.in_channels * u;
    input_bn_gamma_ = store.add("enc.input_bn.gamma", Tensor<S>::full({cu}, S(1)));
    input_bn_beta_ = store.add("enc.input_bn.beta", Tensor<S>::zeros({cu}));
    input_bn_mean_ = store.add("enc.input_bn.mean", Tensor<S>::zeros({cu}), false);
    input_bn_var_ = store.add("enc.input_bn.var", Tensor<S>::full({cu}, S(1)), false);
  }

  int cin = config_.in_channels;
  for (size_t b = 0; b < config_.blocks.size(); ++b) {
    const auto& spec = config_.blocks[b];
    const std::string p = cat("enc.b", b, ".");
    BlockRefs refs;
    refs.in_channels = cin;
    refs.out_channels = spec.channels;
    refs.stride = spec.stride;

    for (size_t k = 0; k < topo_.count(); ++k) {
      refs.w.push_back(store.add(p + "spatial.w." + topo_.names[k],
                                 Tensor<S>::zeros({spec.channels, cin})));
      refs.e.push_back(store.add(p + "spatial.e." + topo_.names[k],
                                 Tensor<S>::full({u, u}, S(1))));
    }
    refs.spatial_bias = store.add(p + "spatial.bias", Tensor<S>::zeros({spec.channels}));

    refs.bn1_gamma = store.add(p + "bn1.gamma", Tensor<S>::full({spec.channels}, S(1)));
    refs.bn1_beta = store.add(p + "bn1.beta", Tensor<S>::zeros({spec.channels}));
    refs.bn1_mean = store.add(p + "bn1.mean", Tensor<S>::zeros({spec.channels}), false);
    refs.bn1_var = store.add(p + "bn1.var", Tensor<S>::full({spec.channels}, S(1)), false);

    refs.tcn_w = store.add(p + "tcn.w", Tensor<S>::zeros({spec.channels, spec.channels, 3}));
    refs.tcn_bias = store.add(p + "tcn.bias", Tensor<S>::zeros({spec.channels}));

    refs.bn2_gamma = store.add(p + "bn2.gamma", Tensor<S>::full({spec.channels}, S(1)));
    refs.bn2_beta = store.add(p + "bn2.beta", Tensor<S>::zeros({spec.channels}));
    refs.bn2_mean = store.add(p + "bn2.mean", Tensor<S>::zeros({spec.channels}), false);
    refs.bn2_var = store.add(p + "bn2.var", Tensor<S>::full({spec.channels}, S(1)), false);

    refs.projected_residual =
        config_.residual && (cin != spec.channels || spec.stride != 1);
    if (refs.projected_residual) {
      refs.res_w = store.add(p + "res.w", Tensor<S>::zeros({spec.channels, cin}));
      refs.res_bn_gamma = store.add(p + "res.bn.gamma", Tensor<S>::full({spec.channels}, S(1)));
      refs.res_bn_beta = store.add(p + "res.bn.beta", Tensor<S>::zeros({spec.channels}));
      refs.res_bn_mean = store.add(p + "res.bn.mean", Tensor<S>::zeros({spec.channels}), false);
      refs.res_bn_var = store.add(p + "res.bn.var", Tensor<S>::full({spec.channels}, S(1)), false);
    }
    blocks_.push_back(std::move(refs));
    cin = spec.channels;
  }
}

template <class S>
void Encoder<S>::init_params(const std::string& init, std::mt19937_64& rng) {
  ALCA_THROW_IF(init != "default" && init != "symmetric", ErrorKind::Config,
                "encoder: unknown init '", init, "'");
  if (init == "symmetric") return;  // weights stay zero

  auto uniform_fill = [&](Tensor<S>& t, double fan_in) {
    const double bound = 1.0 / std::sqrt(std::max(fan_in, 1.0));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.raw()) v = static_cast<S>(dist(rng));
  };
  for (auto& block : blocks_) {
    for (auto& w : block.w) {
      // Fan-in counts the parallel adjacency branches feeding the same sum.
      uniform_fill(w, static_cast<double>(block.in_channels) *
                          static_cast<double>(topo_.count()));
    }
    uniform_fill(block.tcn_w, 3.0 * block.out_channels);
    if (block.projected_residual) uniform_fill(block.res_w, block.in_channels);
  }
}

template <class S>
Tensor<S> Encoder<S>::forward_performer(Tape<S>* tape, const Tensor<S>& x,
                                        bool training,
                                        std::mt19937_64& dropout_rng) {
  ALCA_THROW_IF(x.rank() != 3 || x.dim(0) != config_.in_channels ||
                    x.dim(2) != graph_.joints,
                ErrorKind::Runtime, "encoder: bad input shape ",
                shape_str(x.shape()));
  const int64_t c = x.dim(0), t = x.dim(1), u = x.dim(2);
  Tensor<S> h = x;
  if (config_.input_bn) {
    // Normalize each coordinate of each joint over time.
    Tensor<S> flat = permute(tape, h, {0, 2, 1});      // (C, U, T)
    flat = reshape(tape, flat, {c * u, t});
    flat = batch_norm(tape, flat, input_bn_gamma_, input_bn_beta_,
                      input_bn_mean_, input_bn_var_, training);
    flat = reshape(tape, flat, {c, u, t});
    h = permute(tape, flat, {0, 2, 1});
  }
  for (auto& block : blocks_) {
    Tensor<S> res;
    if (config_.residual) {
      if (!block.projected_residual) {
        res = h;
      } else {
        const int64_t tin = h.dim(1);
        Tensor<S> r = reshape(tape, h, {block.in_channels, tin * u});
        r = matmul(tape, block.res_w, r);
        r = reshape(tape, r, {block.out_channels, tin, u});
        r = subsample_time(tape, r, block.stride);
        res = batch_norm(tape, r, block.res_bn_gamma, block.res_bn_beta,
                         block.res_bn_mean, block.res_bn_var, training);
      }
    }
    Tensor<S> y = spatial_gcn(tape, h, adjacency_, block.e, block.w,
                              block.spatial_bias);
    y = batch_norm(tape, y, block.bn1_gamma, block.bn1_beta, block.bn1_mean,
                   block.bn1_var, training);
    y = relu(tape, y);
    y = temporal_conv(tape, y, block.tcn_w, block.stride);
    y = add(tape, y, reshape(tape, block.tcn_bias, {block.out_channels, 1, 1}));
    y = batch_norm(tape, y, block.bn2_gamma, block.bn2_beta, block.bn2_mean,
                   block.bn2_var, training);
    y = dropout(tape, y, config_.dropout, dropout_rng, training);
    if (res.defined()) y = add(tape, y, res);
    h = relu(tape, y);
  }
  return h;
}

template <class S>
Tensor<S> Encoder<S>::encode(Tape<S>* tape, const SkeletonSequence& seq,
                             bool training, std::mt19937_64& dropout_rng) {
  seq.validate();
  std::vector<Tensor<S>> streams;
  for (int m = 0; m < kPerformers; ++m) {
    if (!seq.performer_mask[static_cast<size_t>(m)]) {
      // An absent performer contributes a zero feature map and never enters
      // the layers: its units are masked downstream, and running an all-zero
      // stream through training-mode batch norm would drag the running
      // variances toward zero and corrupt every eval-mode forward.
      streams.push_back(Tensor<S>::zeros({config_.out_channels(),
                                          config_.out_frames(seq.frames),
                                          graph_.joints}));
      continue;
    }
    Tensor<S> x = performer_tensor<S>(seq, m);
    streams.push_back(forward_performer(tape, x, training, dropout_rng));
  }
  return stack_lastdim(tape, streams);
}

template <class S>
Tensor<S> performer_tensor(const SkeletonSequence& seq, int performer) {
  ALCA_THROW_IF(performer < 0 || performer >= kPerformers, ErrorKind::Runtime,
                "performer index out of range");
  std::vector<S> vals(static_cast<size_t>(kCoords) * seq.frames * kJoints);
  size_t w = 0;
  for (int c = 0; c < kCoords; ++c) {
    for (int t = 0; t < seq.frames; ++t) {
      for (int u = 0; u < kJoints; ++u) {
        vals[w++] = static_cast<S>(seq.at(c, t, u, performer));
      }
    }
  }
  return Tensor<S>::from({kCoords, seq.frames, kJoints}, std::move(vals));
}

template class Encoder<float>;
template class Encoder<double>;
template Tensor<float> spatial_gcn<float>(Tape<float>*, const Tensor<float>&,
                                          const std::vector<Tensor<float>>&,
                                          const std::vector<Tensor<float>>&,
                                          const std::vector<Tensor<float>>&,
                                          const Tensor<float>&);
template Tensor<double> spatial_gcn<double>(Tape<double>*, const Tensor<double>&,
                                            const std::vector<Tensor<double>>&,
                                            const std::vector<Tensor<double>>&,
                                            const std::vector<Tensor<double>>&,
                                            const Tensor<double>&);
template Tensor<float> performer_tensor<float>(const SkeletonSequence&, int);
template Tensor<double> performer_tensor<double>(const SkeletonSequence&, int);

}  // namespace alca
