#include "model.hpp"

namespace alca {

ModelConfig ModelConfig::paper() {
  ModelConfig cfg;
  cfg.encoder = EncoderConfig::paper();
  cfg.graph = ntu25_graph();
  return cfg;
}

void ModelConfig::validate() const {
  encoder.validate();
  graph.validate();
  ALCA_THROW_IF(d_emb < 1, ErrorKind::Config, "model: d_emb < 1");
  ALCA_THROW_IF(frames < 1, ErrorKind::Config, "model: frames < 1");
  ALCA_THROW_IF(performers < 1, ErrorKind::Config, "model: performers < 1");
  ALCA_THROW_IF(init != "default" && init != "symmetric", ErrorKind::Config,
                "model: unknown init '", init, "'");
  ALCA_THROW_IF(head_classes < 0, ErrorKind::Config, "model: head_classes < 0");
  if (division == Division::Both || division == Division::TemporalOnly) {
    ALCA_THROW_IF(t_feat() < 3, ErrorKind::Config,
                  "model: temporal divisions need T_feat >= 3, got ", t_feat());
  }
}

namespace {

const ModelConfig& validated(const ModelConfig& config) {
  config.validate();
  return config;
}

}  // namespace

template <class S>
Model<S>::Model(const ModelConfig& config)
    : config_(validated(config)),
      encoder_(config.encoder, config.graph, store_),
      adl_(config.d_feat(), config.d_emb, store_),
      plan_(make_pool_plan(config.graph, config.division, config.pool_overlap,
                           config.t_feat(), config.performers)) {
  if (config_.head_classes > 0) {
    head_w_ = store_.add("head.w", Tensor<S>::zeros({config_.head_classes,
                                                     config_.d_feat()}));
    head_b_ = store_.add("head.b", Tensor<S>::zeros({config_.head_classes}));
  }
}

template <class S>
void Model<S>::init_params(uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, fnv1a64("param-init")));
  encoder_.init_params(config_.init, rng);
  adl_.init_params(config_.init, rng);
  if (config_.head_classes > 0 && config_.init != "symmetric") {
    const double bound = 1.0 / std::sqrt(static_cast<double>(config_.d_feat()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : head_w_.raw()) v = static_cast<S>(dist(rng));
  }
}

template <class S>
Representation<S> Model<S>::represent(Tape<S>* tape, const SkeletonSequence& seq,
                                      bool training,
                                      std::mt19937_64& dropout_rng) {
  ALCA_THROW_IF(seq.frames != config_.frames, ErrorKind::Runtime,
                "model: sequence has ", seq.frames, " frames, expected ",
                config_.frames, " (preprocess first)");
  Representation<S> pooled = pool_only(tape, seq, training, dropout_rng);
  return adl_.transform(tape, pooled, config_.constraints);
}

template <class S>
Representation<S> Model<S>::pool_only(Tape<S>* tape, const SkeletonSequence& seq,
                                      bool training,
                                      std::mt19937_64& dropout_rng) {
  const Tensor<S> feature = encoder_.encode(tape, seq, training, dropout_rng);
  std::vector<bool> valid(seq.performer_mask.begin(), seq.performer_mask.end());
  return pool_units(tape, feature, plan_, valid);
}

template <class S>
Representation<S> Model<S>::represent_streams(
    Tape<S>* tape, const std::vector<Tensor<S>>& streams,
    const std::vector<bool>& performer_valid, bool training,
    std::mt19937_64& dropout_rng) {
  ALCA_THROW_IF(static_cast<int>(streams.size()) != config_.performers,
                ErrorKind::Runtime, "model: expected ", config_.performers,
                " performer streams");
  std::vector<Tensor<S>> encoded;
  for (const auto& x : streams) {
    encoded.push_back(
        encoder_.forward_performer(tape, x, training, dropout_rng));
  }
  const Tensor<S> feature = stack_lastdim(tape, encoded);
  Representation<S> pooled = pool_units(tape, feature, plan_, performer_valid);
  return adl_.transform(tape, pooled, config_.constraints);
}

template <class S>
Tensor<S> Model<S>::head_input(Tape<S>* tape, const Representation<S>& rep) {
  std::vector<S> unit_mask(rep.valid.size(), S(0));
  for (size_t j = 0; j < rep.valid.size(); ++j) {
    if (rep.valid[j]) unit_mask[j] = S(1);
  }
  // masked_mean wants channels first: (d, J)
  return masked_mean(tape, transpose2d(tape, rep.units), unit_mask);
}

template <class S>
Tensor<S> Model<S>::head_logits(Tape<S>* tape, const Representation<S>& rep) {
  ALCA_THROW_IF(config_.head_classes <= 0, ErrorKind::Runtime,
                "model built without a classifier head");
  const Tensor<S> z = head_input(tape, rep);
  const Tensor<S> logits = matmul(
      tape, head_w_, reshape(tape, z, {config_.d_feat(), 1}));
  return add(tape, reshape(tape, logits, {config_.head_classes}), head_b_);
}

template class Model<float>;
template class Model<double>;

}  // namespace alca
