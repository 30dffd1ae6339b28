#include "fewshot.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

namespace alca {

using nlohmann::json;

template <class S>
Tensor<S> pairwise_distance(Tape<S>* tape, const Representation<S>& a,
                            const Representation<S>& b) {
  ALCA_THROW_IF(!a.units.defined() || !b.units.defined(), ErrorKind::Runtime,
                "pairwise_distance: undefined representation");
  ALCA_THROW_IF(a.units.shape() != b.units.shape() ||
                    a.valid.size() != b.valid.size(),
                ErrorKind::Runtime,
                "pairwise_distance: unit layout mismatch, ",
                shape_str(a.units.shape()), " vs ", shape_str(b.units.shape()));
  const int64_t j = a.units.dim(0);
  std::vector<S> both(static_cast<size_t>(j), S(0));
  S any = S(0);
  for (int64_t i = 0; i < j; ++i) {
    if (a.valid[static_cast<size_t>(i)] && b.valid[static_cast<size_t>(i)]) {
      both[static_cast<size_t>(i)] = S(1);
      any = S(1);
    }
  }
  ALCA_THROW_IF(any == S(0), ErrorKind::Runtime,
                "pairwise_distance: no unit valid in both representations");
  const Tensor<S> diff = sub(tape, a.units, b.units);
  const Tensor<S> norms = rownorm_l2(tape, diff);
  const Tensor<S> mask = Tensor<S>::from({j}, std::move(both));
  return sum_all(tape, mul(tape, norms, mask));
}

template <class S>
Classification classify(
    const Representation<S>& query,
    const std::vector<std::pair<int, Representation<S>>>& supports) {
  ALCA_THROW_IF(supports.empty(), ErrorKind::Runtime, "classify: no supports");
  Classification out;
  for (const auto& [cls, rep] : supports) {
    out.class_ids.push_back(cls);
    out.distances.push_back(
        static_cast<double>(pairwise_distance<S>(nullptr, query, rep).item()));
  }
  double lowest = out.distances[0];
  for (double d : out.distances) lowest = std::min(lowest, d);
  double z = 0.0;
  for (double d : out.distances) z += std::exp(lowest - d);
  out.probabilities.resize(out.distances.size());
  for (size_t i = 0; i < out.distances.size(); ++i) {
    out.probabilities[i] = std::exp(lowest - out.distances[i]) / z;
  }
  // argmin distance; exact ties go to the lowest class id.
  size_t best = 0;
  for (size_t i = 1; i < out.distances.size(); ++i) {
    if (out.distances[i] < out.distances[best] ||
        (out.distances[i] == out.distances[best] &&
         out.class_ids[i] < out.class_ids[best])) {
      best = i;
    }
  }
  out.predicted = out.class_ids[best];
  return out;
}

Episode sample_episode(const Dataset& dataset, const std::vector<size_t>& pool,
                       int n_way, int queries_per_class, std::mt19937_64& rng) {
  ALCA_THROW_IF(n_way < 2, ErrorKind::Config, "sample_episode: n_way must be >= 2");
  ALCA_THROW_IF(queries_per_class < 1, ErrorKind::Config,
                "sample_episode: queries_per_class must be >= 1");
  std::map<int, std::vector<size_t>> by_class;
  for (size_t idx : pool) by_class[dataset.sequences[idx].label].push_back(idx);
  std::vector<int> eligible;
  for (const auto& [cls, members] : by_class) {
    if (static_cast<int>(members.size()) >= 1 + queries_per_class) {
      eligible.push_back(cls);
    }
  }
  ALCA_THROW_IF(static_cast<int>(eligible.size()) < n_way, ErrorKind::Data,
                "sample_episode: need ", n_way, " classes with at least ",
                1 + queries_per_class, " samples, found ", eligible.size());
  std::shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(static_cast<size_t>(n_way));

  Episode ep;
  for (int cls : eligible) {
    std::vector<size_t> members = by_class[cls];
    std::shuffle(members.begin(), members.end(), rng);
    ep.support.emplace_back(members[0], cls);
    for (int q = 0; q < queries_per_class; ++q) {
      ep.queries.emplace_back(members[static_cast<size_t>(q) + 1], cls);
    }
  }
  return ep;
}

template <class S>
Tensor<S> episodic_loss(Tape<S>* tape, Model<S>& model, const Dataset& dataset,
                        const Episode& episode, bool training,
                        std::mt19937_64& dropout_rng) {
  ALCA_THROW_IF(episode.support.empty() || episode.queries.empty(),
                ErrorKind::Runtime, "episodic_loss: empty episode");
  std::vector<Representation<S>> support_reps;
  for (const auto& [idx, cls] : episode.support) {
    support_reps.push_back(model.represent(
        tape, dataset.sequences[idx], training, dropout_rng));
  }
  Tensor<S> total;
  for (const auto& [idx, cls] : episode.queries) {
    const Representation<S> query_rep =
        model.represent(tape, dataset.sequences[idx], training, dropout_rng);
    std::vector<Tensor<S>> neg_dists;
    int64_t target = -1;
    for (size_t s = 0; s < episode.support.size(); ++s) {
      if (episode.support[s].second == cls) target = static_cast<int64_t>(s);
      neg_dists.push_back(scale(
          tape, pairwise_distance(tape, query_rep, support_reps[s]), S(-1)));
    }
    ALCA_THROW_IF(target < 0, ErrorKind::Runtime,
                  "episodic_loss: query class not among supports");
    const Tensor<S> logits = reshape(
        tape, stack_rows(tape, neg_dists),
        {static_cast<int64_t>(episode.support.size())});
    const Tensor<S> loss_q = cross_entropy_logits(tape, logits, target);
    total = total.defined() ? add(tape, total, loss_q) : loss_q;
  }
  return scale(tape, total, S(1) / static_cast<S>(episode.queries.size()));
}

void TrainConfig::validate() const {
  ALCA_THROW_IF(mode != "episodic" && mode != "traditional", ErrorKind::Config,
                "train: unknown mode '", mode, "'");
  ALCA_THROW_IF(epochs < 1, ErrorKind::Config, "train: epochs must be >= 1");
  ALCA_THROW_IF(patience < 1, ErrorKind::Config, "train: patience must be >= 1");
  ALCA_THROW_IF(episodes_per_epoch < 1, ErrorKind::Config,
                "train: episodes_per_epoch must be >= 1");
  ALCA_THROW_IF(queries_per_class < 1, ErrorKind::Config,
                "train: queries_per_class must be >= 1");
  ALCA_THROW_IF(batch_size < 1, ErrorKind::Config, "train: batch_size must be >= 1");
  ALCA_THROW_IF(lr <= 0.0, ErrorKind::Config, "train: lr must be positive");
  ALCA_THROW_IF(weight_decay < 0.0, ErrorKind::Config,
                "train: weight_decay must be >= 0");
  ALCA_THROW_IF(val_episodes < 1, ErrorKind::Config,
                "train: val_episodes must be >= 1");
}

namespace {

// Number of classes in `pool` having at least min_samples samples.
int eligible_classes(const Dataset& dataset, const std::vector<size_t>& pool,
                     int min_samples) {
  std::map<int, int> counts;
  for (size_t idx : pool) counts[dataset.sequences[idx].label]++;
  int n = 0;
  for (const auto& [cls, count] : counts) {
    if (count >= min_samples) ++n;
  }
  return n;
}

template <class S>
double validate_episodic(Model<S>& model, const Dataset& dataset,
                         const std::vector<size_t>& pool, int n_way,
                         int episodes, uint64_t seed) {
  // Fixed-seed validation episodes make epochs comparable to each other.
  std::mt19937_64 rng(derive_seed(seed, fnv1a64("validation-episodes")));
  std::mt19937_64 silent_dropout(0);
  int correct = 0, total = 0;
  for (int e = 0; e < episodes; ++e) {
    const Episode ep = sample_episode(dataset, pool, n_way, 1, rng);
    std::vector<std::pair<int, Representation<S>>> supports;
    for (const auto& [idx, cls] : ep.support) {
      supports.emplace_back(cls, model.represent(nullptr, dataset.sequences[idx],
                                                 false, silent_dropout));
    }
    for (const auto& [idx, cls] : ep.queries) {
      const Representation<S> rep = model.represent(
          nullptr, dataset.sequences[idx], false, silent_dropout);
      const Classification c = classify(rep, supports);
      correct += c.predicted == cls ? 1 : 0;
      ++total;
    }
  }
  return total > 0 ? static_cast<double>(correct) / total : 0.0;
}

template <class S>
double validate_traditional(Model<S>& model, const Dataset& dataset,
                            const std::vector<size_t>& pool,
                            const std::map<int, int>& class_index) {
  std::mt19937_64 silent_dropout(0);
  int correct = 0, total = 0;
  for (size_t idx : pool) {
    const Representation<S> rep =
        model.represent(nullptr, dataset.sequences[idx], false, silent_dropout);
    const Tensor<S> logits = model.head_logits(nullptr, rep);
    const auto ld = logits.data();
    int best = 0;
    for (int i = 1; i < static_cast<int>(ld.size()); ++i) {
      if (ld[static_cast<size_t>(i)] > ld[static_cast<size_t>(best)]) best = i;
    }
    const int truth = class_index.at(dataset.sequences[idx].label);
    correct += best == truth ? 1 : 0;
    ++total;
  }
  return total > 0 ? static_cast<double>(correct) / total : 0.0;
}

struct EarlyStopper {
  int patience;
  int best_epoch = -1;
  double best_value = -1.0;

  // True when the run should stop after this epoch.
  bool update(int epoch, double value) {
    if (value > best_value) {
      best_value = value;
      best_epoch = epoch;
    }
    return epoch - best_epoch >= patience;
  }
};

}  // namespace

std::map<int, int> head_class_index(const DatasetSplits& splits) {
  std::map<int, int> out;
  int next = 0;
  for (int cls : splits.aux_class_ids) out[cls] = next++;
  return out;
}

template <class S>
TrainResult train_episodic(Model<S>& model, const Dataset& dataset,
                           const DatasetSplits& splits, const TrainConfig& config,
                           const EpochCallback& on_epoch,
                           const ValidationOverride& val_override) {
  config.validate();
  const int train_classes = eligible_classes(dataset, splits.aux_train,
                                             1 + config.queries_per_class);
  const int val_classes = eligible_classes(dataset, splits.aux_val, 2);
  const int n_way = std::min(config.n_way, train_classes);
  ALCA_THROW_IF(n_way < 2, ErrorKind::Data,
                "train: auxiliary split has only ", train_classes,
                " usable classes");
  const int val_way = std::min(n_way, val_classes);
  ALCA_THROW_IF(!val_override && val_way < 2, ErrorKind::Data,
                "train: validation holdout has only ", val_classes,
                " usable classes");

  AdamOptimizer<S> opt(config.lr, config.weight_decay);
  opt.attach(model.store().trainable(), model.store().trainable_names());
  std::mt19937_64 episode_rng(derive_seed(config.seed, fnv1a64("train-episodes")));
  std::mt19937_64 dropout_rng(derive_seed(config.seed, fnv1a64("dropout")));

  TrainResult result;
  EarlyStopper stopper{config.patience};
  std::vector<std::vector<S>> best_snapshot = model.store().snapshot();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, config.epochs, config.lr);
    opt.set_lr(lr);
    double loss_sum = 0.0;
    for (int e = 0; e < config.episodes_per_epoch; ++e) {
      const Episode ep = sample_episode(dataset, splits.aux_train, n_way,
                                        config.queries_per_class, episode_rng);
      try {
        Tape<S> tape;
        const Tensor<S> loss =
            episodic_loss(&tape, model, dataset, ep, true, dropout_rng);
        loss_sum += static_cast<double>(loss.item());
        tape.backward(loss);
        opt.step();
      } catch (const Error& err) {
        if (err.kind() != ErrorKind::Runtime) throw;
        result.diverged = true;
        result.divergence_message =
            cat("epoch ", epoch, " episode ", e, ": ", err.what());
        return result;
      }
    }
    EpochRecord record;
    record.epoch = epoch;
    record.lr = lr;
    record.train_loss = loss_sum / config.episodes_per_epoch;
    record.val_accuracy =
        val_override ? val_override(epoch)
                     : validate_episodic(model, dataset, splits.aux_val, val_way,
                                         config.val_episodes, config.seed);
    result.epochs.push_back(record);
    if (on_epoch) on_epoch(record);

    const bool had_improved = record.val_accuracy > stopper.best_value;
    const bool stop = stopper.update(epoch, record.val_accuracy);
    if (had_improved) best_snapshot = model.store().snapshot();
    if (stop) {
      result.early_stopped = true;
      break;
    }
  }
  model.store().restore(best_snapshot);
  result.best_epoch = stopper.best_epoch;
  result.best_val_accuracy = stopper.best_value;
  return result;
}

template <class S>
TrainResult train_traditional(Model<S>& model, const Dataset& dataset,
                              const DatasetSplits& splits,
                              const TrainConfig& config,
                              const EpochCallback& on_epoch,
                              const ValidationOverride& val_override) {
  config.validate();
  const std::map<int, int> class_index = head_class_index(splits);
  ALCA_THROW_IF(model.config().head_classes !=
                    static_cast<int>(class_index.size()),
                ErrorKind::Config, "train: model head has ",
                model.config().head_classes, " outputs, auxiliary set has ",
                class_index.size(), " classes");
  ALCA_THROW_IF(splits.aux_train.empty(), ErrorKind::Data,
                "train: empty auxiliary training split");

  AdamOptimizer<S> opt(config.lr, config.weight_decay);
  opt.attach(model.store().trainable(), model.store().trainable_names());
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, fnv1a64("batch-shuffle")));
  std::mt19937_64 dropout_rng(derive_seed(config.seed, fnv1a64("dropout")));

  TrainResult result;
  EarlyStopper stopper{config.patience};
  std::vector<std::vector<S>> best_snapshot = model.store().snapshot();
  std::vector<size_t> order = splits.aux_train;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, config.epochs, config.lr);
    opt.set_lr(lr);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t stop_at =
          std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      try {
        Tape<S> tape;
        Tensor<S> batch_loss;
        for (size_t i = start; i < stop_at; ++i) {
          const auto& seq = dataset.sequences[order[i]];
          const Representation<S> rep =
              model.represent(&tape, seq, true, dropout_rng);
          const Tensor<S> logits = model.head_logits(&tape, rep);
          const Tensor<S> loss_i = cross_entropy_logits(
              &tape, logits, class_index.at(seq.label));
          batch_loss = batch_loss.defined() ? add(&tape, batch_loss, loss_i)
                                            : loss_i;
        }
        batch_loss = scale(&tape, batch_loss,
                           S(1) / static_cast<S>(stop_at - start));
        loss_sum += static_cast<double>(batch_loss.item());
        ++batches;
        tape.backward(batch_loss);
        opt.step();
      } catch (const Error& err) {
        if (err.kind() != ErrorKind::Runtime) throw;
        result.diverged = true;
        result.divergence_message =
            cat("epoch ", epoch, " batch at ", start, ": ", err.what());
        return result;
      }
    }
    EpochRecord record;
    record.epoch = epoch;
    record.lr = lr;
    record.train_loss = batches > 0 ? loss_sum / batches : 0.0;
    record.val_accuracy =
        val_override ? val_override(epoch)
                     : validate_traditional(model, dataset, splits.aux_val,
                                            class_index);
    result.epochs.push_back(record);
    if (on_epoch) on_epoch(record);

    const bool had_improved = record.val_accuracy > stopper.best_value;
    const bool stop = stopper.update(epoch, record.val_accuracy);
    if (had_improved) best_snapshot = model.store().snapshot();
    if (stop) {
      result.early_stopped = true;
      break;
    }
  }
  model.store().restore(best_snapshot);
  result.best_epoch = stopper.best_epoch;
  result.best_val_accuracy = stopper.best_value;
  return result;
}

template <class S>
EvalReport evaluate_oneshot(Model<S>& model, const Dataset& dataset,
                            const DatasetSplits& splits,
                            const EvalOptions& options) {
  ALCA_THROW_IF(splits.eval_references.empty(), ErrorKind::Data,
                "evaluate: no evaluation classes");
  std::mt19937_64 silent_dropout(0);

  std::set<size_t> reference_indices;
  std::vector<std::pair<int, Representation<S>>> references;
  EvalReport report;
  for (const auto& [cls, idx] : splits.eval_references) {
    references.emplace_back(
        cls, model.represent(nullptr, dataset.sequences[idx], false,
                             silent_dropout));
    reference_indices.insert(idx);
    report.reference_classes.push_back(cls);
  }
  // Every evaluation class must have exactly one designated reference.
  for (int cls : splits.eval_class_ids) {
    const auto hits = std::count_if(
        splits.eval_references.begin(), splits.eval_references.end(),
        [cls](const auto& p) { return p.first == cls; });
    ALCA_THROW_IF(hits != 1, ErrorKind::Data, "evaluate: class ", cls, " has ",
                  hits, " references");
  }

  for (size_t idx : splits.eval_all) {
    if (!options.include_references && reference_indices.count(idx)) continue;
    const auto& seq = dataset.sequences[idx];
    const Representation<S> rep =
        model.represent(nullptr, seq, false, silent_dropout);
    const Classification c = classify(rep, references);
    PredictionRecord pred;
    pred.index = idx;
    pred.true_class = seq.label;
    pred.predicted = c.predicted;
    if (options.dump_distances) pred.distances = c.distances;
    report.predictions.push_back(std::move(pred));

    report.total += 1;
    const bool ok = c.predicted == seq.label;
    report.correct += ok ? 1 : 0;
    auto& pc = report.per_class[seq.label];
    pc.first += ok ? 1 : 0;
    pc.second += 1;
    report.confusion[{seq.label, c.predicted}] += 1;
  }
  report.accuracy =
      report.total > 0 ? static_cast<double>(report.correct) / report.total : 0.0;
  return report;
}

std::string eval_report_to_json(const EvalReport& report, bool dump_distances) {
  json doc;
  doc["total"] = report.total;
  doc["correct"] = report.correct;
  doc["accuracy"] = report.accuracy;
  doc["reference_classes"] = report.reference_classes;
  json per_class = json::object();
  for (const auto& [cls, counts] : report.per_class) {
    per_class[std::to_string(cls)] = {
        {"correct", counts.first},
        {"total", counts.second},
        {"accuracy", counts.second > 0
                         ? static_cast<double>(counts.first) / counts.second
                         : 0.0}};
  }
  doc["per_class"] = per_class;
  json confusion = json::array();
  for (const auto& [pair, count] : report.confusion) {
    confusion.push_back(
        {{"true", pair.first}, {"predicted", pair.second}, {"count", count}});
  }
  doc["confusion"] = confusion;
  json preds = json::array();
  for (const auto& p : report.predictions) {
    json rec = {{"index", p.index},
                {"true", p.true_class},
                {"predicted", p.predicted}};
    if (dump_distances) rec["distances"] = p.distances;
    preds.push_back(rec);
  }
  doc["predictions"] = preds;
  return doc.dump(2);
}

#define ALCA_INSTANTIATE_FEWSHOT(S)                                            \
  template Tensor<S> pairwise_distance<S>(Tape<S>*, const Representation<S>&,  \
                                          const Representation<S>&);           \
  template Classification classify<S>(                                         \
      const Representation<S>&,                                                \
      const std::vector<std::pair<int, Representation<S>>>&);                  \
  template Tensor<S> episodic_loss<S>(Tape<S>*, Model<S>&, const Dataset&,     \
                                      const Episode&, bool, std::mt19937_64&); \
  template TrainResult train_episodic<S>(Model<S>&, const Dataset&,            \
                                         const DatasetSplits&,                 \
                                         const TrainConfig&,                   \
                                         const EpochCallback&,                 \
                                         const ValidationOverride&);           \
  template TrainResult train_traditional<S>(Model<S>&, const Dataset&,         \
                                            const DatasetSplits&,              \
                                            const TrainConfig&,                \
                                            const EpochCallback&,              \
                                            const ValidationOverride&);        \
  template EvalReport evaluate_oneshot<S>(Model<S>&, const Dataset&,           \
                                          const DatasetSplits&,                \
                                          const EvalOptions&);

ALCA_INSTANTIATE_FEWSHOT(float)
ALCA_INSTANTIATE_FEWSHOT(double)

}  // namespace alca
