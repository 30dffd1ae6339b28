#ifndef ALCA_FEWSHOT_HPP
#define ALCA_FEWSHOT_HPP

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "model.hpp"
#include "optim.hpp"

namespace alca {

// ---------------------------------------------------------------------------
// Decomposed similarity metric
// ---------------------------------------------------------------------------

// Sum over aligned comparing units, valid in both operands, of the Euclidean
// distance between the two unit embeddings.
template <class S>
Tensor<S> pairwise_distance(Tape<S>* tape, const Representation<S>& a,
                            const Representation<S>& b);

struct Classification {
  std::vector<int> class_ids;
  std::vector<double> distances;
  std::vector<double> probabilities;  // softmax over negated distances
  int predicted = -1;                 // argmin distance, ties to lowest class id
};

template <class S>
Classification classify(const Representation<S>& query,
                        const std::vector<std::pair<int, Representation<S>>>& supports);

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

struct Episode {
  std::vector<std::pair<size_t, int>> support;  // (dataset index, class id)
  std::vector<std::pair<size_t, int>> queries;
};

// N distinct classes drawn from the pool, one support plus queries_per_class
// query samples per class, support never among the queries. Deterministic
// under the rng state.
Episode sample_episode(const Dataset& dataset, const std::vector<size_t>& pool,
                       int n_way, int queries_per_class, std::mt19937_64& rng);

// Mean over the episode's queries of the negative log-probability of the
// true class under softmax(-distances).
template <class S>
Tensor<S> episodic_loss(Tape<S>* tape, Model<S>& model, const Dataset& dataset,
                        const Episode& episode, bool training,
                        std::mt19937_64& dropout_rng);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::string mode = "episodic";  // "episodic" | "traditional"
  int epochs = 100;
  int episodes_per_epoch = 200;
  int n_way = 20;  // capped at the number of eligible classes
  int queries_per_class = 1;
  int batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 1e-6;
  int patience = 10;
  int val_episodes = 100;
  uint64_t seed = 1;
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
  bool early_stopped = false;
  bool diverged = false;
  std::string divergence_message;
};

using EpochCallback = std::function<void(const EpochRecord&)>;
// Test hook replacing the validation pass; receives the epoch index.
using ValidationOverride = std::function<double(int)>;

// Episodic meta-training with cosine-annealed Adam and best-checkpoint early
// stopping on the held-out validation episodes. The model is left holding
// the best parameters. The dataset must be preprocessed already.
template <class S>
TrainResult train_episodic(Model<S>& model, const Dataset& dataset,
                           const DatasetSplits& splits, const TrainConfig& config,
                           const EpochCallback& on_epoch = {},
                           const ValidationOverride& val_override = {});

// Batch training of the same backbone plus a linear softmax head over the
// auxiliary classes; evaluation drops the head and classifies by nearest
// neighbor exactly like the episodic model.
template <class S>
TrainResult train_traditional(Model<S>& model, const Dataset& dataset,
                              const DatasetSplits& splits,
                              const TrainConfig& config,
                              const EpochCallback& on_epoch = {},
                              const ValidationOverride& val_override = {});

// Auxiliary class id -> dense head output index (sorted order).
std::map<int, int> head_class_index(const DatasetSplits& splits);

// ---------------------------------------------------------------------------
// One-shot evaluation
// ---------------------------------------------------------------------------

struct EvalOptions {
  bool include_references = false;  // also score each reference against the set
  bool dump_distances = false;
};

struct PredictionRecord {
  size_t index = 0;
  int true_class = -1;
  int predicted = -1;
  std::vector<double> distances;  // aligned with report.reference_classes
};

struct EvalReport {
  int total = 0;
  int correct = 0;
  double accuracy = 0.0;
  std::vector<int> reference_classes;
  std::map<int, std::pair<int, int>> per_class;      // class -> (correct, total)
  std::map<std::pair<int, int>, int> confusion;      // (true, predicted) -> n
  std::vector<PredictionRecord> predictions;
};

template <class S>
EvalReport evaluate_oneshot(Model<S>& model, const Dataset& dataset,
                            const DatasetSplits& splits,
                            const EvalOptions& options = {});

std::string eval_report_to_json(const EvalReport& report, bool dump_distances);

}  // namespace alca

#endif
