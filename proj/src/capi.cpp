#include "alca/alca.h"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "gradcheck.hpp"
#include "params.hpp"

namespace {

using namespace alca;
using nlohmann::json;

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) return nullptr;
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

alca_status to_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return ALCA_ERR_CONFIG;
    case ErrorKind::Data: return ALCA_ERR_DATA;
    case ErrorKind::Runtime: return ALCA_ERR_RUNTIME;
  }
  return ALCA_ERR_RUNTIME;
}

template <class F>
alca_status guarded(F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ALCA_ERR_RUNTIME;
  }
}

RunConfig parse_config(const char* config_json) {
  return RunConfig::resolve(config_json ? config_json : "", {});
}

// The checkpoint's embedded header: the effective run config plus the
// runtime facts needed to rebuild the identical parameter table.
std::string checkpoint_header(const RunConfig& cfg, int head_classes) {
  json doc;
  doc["run_config"] = cfg.effective();
  doc["head_classes"] = head_classes;
  return doc.dump();
}

struct CheckpointInfo {
  RunConfig config;
  int head_classes = 0;
};

CheckpointInfo parse_checkpoint_header(const std::string& header) {
  json doc;
  try {
    doc = json::parse(header);
  } catch (const json::exception& e) {
    fail(ErrorKind::Data, cat("checkpoint header: ", e.what()));
  }
  CheckpointInfo info;
  info.config = RunConfig::resolve(doc.at("run_config").dump(), {});
  info.head_classes = doc.at("head_classes").get<int>();
  return info;
}

}  // namespace

struct alca_dataset {
  Dataset data;
};

extern "C" {

const char* alca_version(void) { return "0.1.0"; }

const char* alca_last_error(void) { return g_last_error.c_str(); }

void alca_string_free(char* s) { std::free(s); }

alca_status alca_config_defaults(char** out_json) {
  return guarded([&]() {
    if (!out_json) fail(ErrorKind::Config, "out_json is null");
    *out_json = dup_string(RunConfig::defaults().dump(2));
    return ALCA_OK;
  });
}

alca_status alca_config_resolve(const char* file_json_or_null,
                                const char* const* overrides, int n_overrides,
                                char** out_effective_json) {
  return guarded([&]() {
    if (!out_effective_json) fail(ErrorKind::Config, "out_effective_json is null");
    std::vector<std::string> ov;
    for (int i = 0; i < n_overrides; ++i) {
      if (overrides && overrides[i]) ov.emplace_back(overrides[i]);
    }
    const RunConfig cfg = RunConfig::resolve(
        file_json_or_null ? file_json_or_null : "", ov);
    *out_effective_json = dup_string(cfg.dump());
    return ALCA_OK;
  });
}

alca_status alca_dataset_synth(const char* config_json, alca_dataset** out) {
  return guarded([&]() {
    if (!out) fail(ErrorKind::Config, "out is null");
    const RunConfig cfg = parse_config(config_json);
    auto* handle = new alca_dataset{generate_synthetic_dataset(cfg.synth_config())};
    *out = handle;
    return ALCA_OK;
  });
}

alca_status alca_dataset_load(const char* path, alca_dataset** out) {
  return guarded([&]() {
    if (!path || !out) fail(ErrorKind::Config, "path/out is null");
    *out = new alca_dataset{load_dataset(path)};
    return ALCA_OK;
  });
}

alca_status alca_dataset_save(const alca_dataset* dataset, const char* path) {
  return guarded([&]() {
    if (!dataset || !path) fail(ErrorKind::Config, "dataset/path is null");
    save_dataset(dataset->data, path);
    return ALCA_OK;
  });
}

alca_status alca_dataset_prep_dir(const char* input_dir,
                                  const char* config_json, alca_dataset** out,
                                  char** out_report_json) {
  return guarded([&]() {
    if (!input_dir || !out) fail(ErrorKind::Config, "input_dir/out is null");
    const RunConfig cfg = parse_config(config_json);
    const PreprocessOptions prep = cfg.preprocess_options();
    const bool skip_bad = cfg.prep_skip_bad();

    namespace fs = std::filesystem;
    ALCA_THROW_IF(!fs::is_directory(input_dir), ErrorKind::Data, "'", input_dir,
                  "' is not a directory");
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(input_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".skeleton") {
        files.push_back(entry.path().string());
      }
    }
    std::sort(files.begin(), files.end());
    ALCA_THROW_IF(files.empty(), ErrorKind::Data, "no .skeleton files under '",
                  input_dir, "'");

    Dataset ds;
    json report;
    report["config"] = cfg.effective();
    json entries = json::array();
    int failures = 0;
    for (const auto& file : files) {
      json rec;
      rec["file"] = file;
      try {
        ParseResult parsed = parse_ntu_skeleton_file(file);
        ALCA_THROW_IF(parsed.sequence.label < 0, ErrorKind::Data, file,
                      ": no action code in the file name");
        json warnings = json::array();
        for (const auto& w : parsed.warnings) warnings.push_back(w.message);
        rec["warnings"] = warnings;
        ds.sequences.push_back(preprocess_sequence(parsed.sequence, prep));
        rec["ok"] = true;
      } catch (const Error& e) {
        ++failures;
        rec["ok"] = false;
        rec["error"] = e.what();
        if (!skip_bad) {
          if (out_report_json) {
            entries.push_back(rec);
            report["files"] = entries;
            *out_report_json = dup_string(report.dump(2));
          }
          throw;
        }
      }
      entries.push_back(rec);
    }
    ALCA_THROW_IF(ds.sequences.empty(), ErrorKind::Data,
                  "no parsable .skeleton files under '", input_dir, "'");
    report["files"] = entries;
    report["parsed"] = static_cast<int>(ds.sequences.size());
    report["failed"] = failures;
    *out = new alca_dataset{std::move(ds)};
    if (out_report_json) *out_report_json = dup_string(report.dump(2));
    return ALCA_OK;
  });
}

int32_t alca_dataset_num_sequences(const alca_dataset* dataset) {
  return dataset ? static_cast<int32_t>(dataset->data.sequences.size()) : -1;
}

int32_t alca_dataset_num_classes(const alca_dataset* dataset) {
  return dataset ? static_cast<int32_t>(dataset->data.class_ids().size()) : -1;
}

void alca_dataset_free(alca_dataset* dataset) { delete dataset; }

}  // extern "C"

namespace {

template <class S>
alca_status train_impl(const RunConfig& cfg, const Dataset& raw,
                       const char* checkpoint_path, const char* metrics_path,
                       char** out_summary_json) {
  const Dataset prepped = preprocess_dataset(raw, cfg.preprocess_options());
  const DatasetSplits splits = make_splits(prepped, cfg.split_policy());
  const TrainConfig train_cfg = cfg.train_config();

  ModelConfig model_cfg = cfg.model_config();
  if (train_cfg.mode == "traditional") {
    model_cfg.head_classes = static_cast<int>(splits.aux_class_ids.size());
  }
  Model<S> model(model_cfg);
  model.init_params(cfg.seed());

  std::ofstream metrics;
  if (metrics_path) {
    metrics.open(metrics_path, std::ios::trunc);
    ALCA_THROW_IF(!metrics, ErrorKind::Data, "cannot write '", metrics_path, "'");
    json header;
    header["type"] = "config";
    header["config"] = cfg.effective();
    header["config_hash"] = cfg.hash();
    metrics << header.dump() << "\n";
  }
  EpochCallback on_epoch = [&](const EpochRecord& r) {
    if (!metrics.is_open()) return;
    json rec;
    rec["type"] = "epoch";
    rec["epoch"] = r.epoch;
    rec["lr"] = r.lr;
    rec["train_loss"] = r.train_loss;
    rec["val_accuracy"] = r.val_accuracy;
    metrics << rec.dump() << "\n";
    metrics.flush();
  };

  const TrainResult result =
      train_cfg.mode == "traditional"
          ? train_traditional(model, prepped, splits, train_cfg, on_epoch)
          : train_episodic(model, prepped, splits, train_cfg, on_epoch);

  if (checkpoint_path) {
    save_checkpoint(model.store(),
                    checkpoint_header(cfg, model_cfg.head_classes),
                    checkpoint_path);
  }
  json summary;
  summary["config_hash"] = cfg.hash();
  summary["mode"] = train_cfg.mode;
  summary["epochs_run"] = static_cast<int>(result.epochs.size());
  summary["best_epoch"] = result.best_epoch;
  summary["best_val_accuracy"] = result.best_val_accuracy;
  summary["early_stopped"] = result.early_stopped;
  summary["diverged"] = result.diverged;
  if (result.diverged) summary["divergence_message"] = result.divergence_message;
  if (out_summary_json) *out_summary_json = dup_string(summary.dump(2));
  if (result.diverged) {
    g_last_error = cat("training diverged: ", result.divergence_message,
                       " (checkpoint of the last finite state written)");
    return ALCA_ERR_RUNTIME;
  }
  return ALCA_OK;
}

template <class S>
std::pair<std::shared_ptr<Model<S>>, RunConfig> load_model(
    const char* checkpoint_path) {
  const std::string header = checkpoint_peek_config(checkpoint_path);
  const CheckpointInfo info = parse_checkpoint_header(header);
  ModelConfig model_cfg = info.config.model_config();
  model_cfg.head_classes = info.head_classes;
  auto model = std::make_shared<Model<S>>(model_cfg);
  load_checkpoint(model->store(), checkpoint_path);
  return {model, info.config};
}

template <class S>
alca_status evaluate_impl(const RunConfig& cfg, const Dataset& raw,
                          const char* checkpoint_path, char** out_report_json) {
  auto [model, ckpt_cfg] = load_model<S>(checkpoint_path);
  const Dataset prepped = preprocess_dataset(raw, cfg.preprocess_options());
  const DatasetSplits splits = make_splits(prepped, cfg.split_policy());
  const EvalOptions options = cfg.eval_options();
  const EvalReport report = evaluate_oneshot(*model, prepped, splits, options);

  json doc = json::parse(eval_report_to_json(report, options.dump_distances));
  doc["config"] = cfg.effective();
  doc["config_hash"] = cfg.hash();
  if (out_report_json) *out_report_json = dup_string(doc.dump(2));
  return ALCA_OK;
}

template <class S>
alca_status represent_impl(const RunConfig& cfg, const Dataset& raw,
                           int32_t index, const char* checkpoint_path,
                           char** out_json) {
  auto [model, ckpt_cfg] = load_model<S>(checkpoint_path);
  ALCA_THROW_IF(index < 0 || index >= static_cast<int32_t>(raw.sequences.size()),
                ErrorKind::Config, "sequence index ", index, " out of range");
  const SkeletonSequence prepped =
      preprocess_sequence(raw.sequences[static_cast<size_t>(index)],
                          cfg.preprocess_options());
  std::mt19937_64 silent(0);
  const Representation<S> rep = model->represent(nullptr, prepped, false, silent);

  const PoolPlan& plan = model->pool_plan();
  json units = json::array();
  for (size_t j = 0; j < plan.unit_count(); ++j) {
    json u;
    u["section"] = plan.units[j].section;
    u["part"] = plan.units[j].part >= 0
                    ? body_part_name(static_cast<BodyPart>(plan.units[j].part))
                    : "all";
    u["performer"] = plan.units[j].performer;
    u["valid"] = static_cast<bool>(rep.valid[j]);
    std::vector<double> row;
    const auto d = rep.units.data();
    const int64_t width = rep.units.dim(1);
    for (int64_t c = 0; c < width; ++c) {
      row.push_back(static_cast<double>(d[static_cast<int64_t>(j) * width + c]));
    }
    u["embedding"] = row;
    units.push_back(u);
  }
  json doc;
  doc["sequence_index"] = index;
  doc["label"] = raw.sequences[static_cast<size_t>(index)].label;
  doc["unit_order"] = "temporal section major, then body part, then performer";
  doc["units"] = units;
  std::vector<double> glob;
  for (S v : rep.global.data()) glob.push_back(static_cast<double>(v));
  doc["global_embedding"] = glob;
  if (out_json) *out_json = dup_string(doc.dump(2));
  return ALCA_OK;
}

struct AblationVariant {
  std::string name;
  std::string override_key;
  std::string override_value;
};

const std::vector<AblationVariant>& ablation_grid() {
  static const std::vector<AblationVariant> grid = {
      {"full", "", ""},
      {"sampling_skeleton", "model.sampling_strategy", "skeleton_only"},
      {"sampling_part", "model.sampling_strategy", "part_only"},
      {"division_none", "model.division", "none"},
      {"division_spatial", "model.division", "spatial_only"},
      {"division_temporal", "model.division", "temporal_only"},
      {"no_adl", "model.constraints", "no_adl"},
      {"no_global", "model.constraints", "no_global"},
  };
  return grid;
}

template <class S>
alca_status ablate_impl(const RunConfig& base_cfg, const Dataset& raw,
                        const char* csv_path, char** out_summary_json) {
  const Dataset prepped = preprocess_dataset(raw, base_cfg.preprocess_options());
  const DatasetSplits splits = make_splits(prepped, base_cfg.split_policy());

  std::ofstream csv(csv_path, std::ios::trunc);
  ALCA_THROW_IF(!csv, ErrorKind::Data, "cannot write '", csv_path, "'");
  csv << "variant,sampling_strategy,division,constraints,config_hash,"
         "epochs_run,best_val_accuracy,eval_accuracy\n";

  json rows = json::array();
  for (const auto& variant : ablation_grid()) {
    std::vector<std::string> overrides;
    if (!variant.override_key.empty()) {
      overrides.push_back(variant.override_key + "=" + variant.override_value);
    }
    const RunConfig cfg = RunConfig::resolve(base_cfg.dump(), overrides);
    const TrainConfig train_cfg = cfg.train_config();
    ModelConfig model_cfg = cfg.model_config();
    if (train_cfg.mode == "traditional") {
      model_cfg.head_classes = static_cast<int>(splits.aux_class_ids.size());
    }
    Model<S> model(model_cfg);
    model.init_params(cfg.seed());
    const TrainResult result =
        train_cfg.mode == "traditional"
            ? train_traditional(model, prepped, splits, train_cfg)
            : train_episodic(model, prepped, splits, train_cfg);
    ALCA_THROW_IF(result.diverged, ErrorKind::Runtime, "ablation variant '",
                  variant.name, "' diverged: ", result.divergence_message);
    const EvalReport report = evaluate_oneshot(model, prepped, splits);

    const json& m = cfg.effective().at("model");
    csv << variant.name << ',' << m.at("sampling_strategy").get<std::string>()
        << ',' << m.at("division").get<std::string>() << ','
        << m.at("constraints").get<std::string>() << ',' << cfg.hash() << ','
        << result.epochs.size() << ',' << result.best_val_accuracy << ','
        << report.accuracy << "\n";
    csv.flush();

    json row;
    row["variant"] = variant.name;
    row["sampling_strategy"] = m.at("sampling_strategy");
    row["division"] = m.at("division");
    row["constraints"] = m.at("constraints");
    row["config_hash"] = cfg.hash();
    row["epochs_run"] = static_cast<int>(result.epochs.size());
    row["best_val_accuracy"] = result.best_val_accuracy;
    row["eval_accuracy"] = report.accuracy;
    rows.push_back(row);
  }
  json summary;
  summary["config"] = base_cfg.effective();
  summary["config_hash"] = base_cfg.hash();
  summary["rows"] = rows;
  if (out_summary_json) *out_summary_json = dup_string(summary.dump(2));
  return ALCA_OK;
}

}  // namespace

extern "C" {

alca_status alca_train(const char* config_json, const alca_dataset* dataset,
                       const char* checkpoint_path, const char* metrics_path,
                       char** out_summary_json) {
  return guarded([&]() {
    if (!dataset) fail(ErrorKind::Config, "dataset is null");
    const RunConfig cfg = parse_config(config_json);
    return cfg.precision() == "f64"
               ? train_impl<double>(cfg, dataset->data, checkpoint_path,
                                    metrics_path, out_summary_json)
               : train_impl<float>(cfg, dataset->data, checkpoint_path,
                                   metrics_path, out_summary_json);
  });
}

alca_status alca_evaluate(const char* config_json, const alca_dataset* dataset,
                          const char* checkpoint_path, char** out_report_json) {
  return guarded([&]() {
    if (!dataset || !checkpoint_path) {
      fail(ErrorKind::Config, "dataset/checkpoint_path is null");
    }
    const RunConfig cfg = parse_config(config_json);
    return cfg.precision() == "f64"
               ? evaluate_impl<double>(cfg, dataset->data, checkpoint_path,
                                       out_report_json)
               : evaluate_impl<float>(cfg, dataset->data, checkpoint_path,
                                      out_report_json);
  });
}

alca_status alca_represent(const char* config_json, const alca_dataset* dataset,
                           int32_t sequence_index, const char* checkpoint_path,
                           char** out_json) {
  return guarded([&]() {
    if (!dataset || !checkpoint_path) {
      fail(ErrorKind::Config, "dataset/checkpoint_path is null");
    }
    const RunConfig cfg = parse_config(config_json);
    return cfg.precision() == "f64"
               ? represent_impl<double>(cfg, dataset->data, sequence_index,
                                        checkpoint_path, out_json)
               : represent_impl<float>(cfg, dataset->data, sequence_index,
                                       checkpoint_path, out_json);
  });
}

alca_status alca_gradcheck(const char* config_json, char** out_report_json) {
  return guarded([&]() {
    const RunConfig cfg = parse_config(config_json);
    const GradCheckReport report = run_gradcheck(cfg.seed());
    if (out_report_json) {
      *out_report_json = dup_string(gradcheck_report_to_json(report));
    }
    if (!report.all_pass) {
      g_last_error = "gradient check failed; see the report for cases";
      return ALCA_ERR_RUNTIME;
    }
    return ALCA_OK;
  });
}

alca_status alca_ablate(const char* config_json, const alca_dataset* dataset,
                        const char* csv_path, char** out_summary_json) {
  return guarded([&]() {
    if (!dataset || !csv_path) fail(ErrorKind::Config, "dataset/csv_path is null");
    const RunConfig cfg = parse_config(config_json);
    return cfg.precision() == "f64"
               ? ablate_impl<double>(cfg, dataset->data, csv_path,
                                     out_summary_json)
               : ablate_impl<float>(cfg, dataset->data, csv_path,
                                    out_summary_json);
  });
}

}  // extern "C"
