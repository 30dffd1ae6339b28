// Command-line front end for the alca shared library. All work happens
// behind the C API; this binary only parses arguments, forwards JSON
// configuration and moves result strings to files or stdout.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "alca/alca.h"

namespace {

struct CommonOpts {
  std::string config_file;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_file, "JSON config file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", opts.overrides,
                  "Override a config key, e.g. --set train.epochs=5");
}

int fail_with(alca_status status, const char* what) {
  std::cerr << "error (" << what << "): " << alca_last_error() << "\n";
  return static_cast<int>(status);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot read '" << path << "'\n";
    std::exit(static_cast<int>(ALCA_ERR_DATA));
  }
  std::ostringstream body;
  body << in.rdbuf();
  return body.str();
}

bool write_file(const std::string& path, const char* text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return false;
  out << (text ? text : "");
  return static_cast<bool>(out);
}

// Resolve the effective config or exit; the caller owns the returned string.
char* resolve_config_or_die(const CommonOpts& opts) {
  std::string file_body;
  if (!opts.config_file.empty()) file_body = read_file(opts.config_file);
  std::vector<const char*> ov;
  for (const auto& s : opts.overrides) ov.push_back(s.c_str());
  char* effective = nullptr;
  const alca_status status = alca_config_resolve(
      file_body.empty() ? nullptr : file_body.c_str(),
      ov.empty() ? nullptr : ov.data(), static_cast<int>(ov.size()),
      &effective);
  if (status != ALCA_OK) {
    std::exit(fail_with(status, "config"));
  }
  return effective;
}

struct StringGuard {
  char* s = nullptr;
  ~StringGuard() { alca_string_free(s); }
};

struct DatasetGuard {
  alca_dataset* ds = nullptr;
  ~DatasetGuard() { alca_dataset_free(ds); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alca: one-shot skeleton action recognition"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(alca_version()));

  // prep ------------------------------------------------------------
  CommonOpts prep_opts;
  std::string prep_input, prep_output, prep_report;
  auto* prep = app.add_subcommand(
      "prep", "Parse .skeleton files, preprocess and pack a dataset");
  add_common(prep, prep_opts);
  prep->add_option("input", prep_input, "Directory of .skeleton files")
      ->required();
  prep->add_option("output", prep_output, "Dataset container to write")
      ->required();
  prep->add_option("--report", prep_report, "Write the per-file report JSON");

  // synth -----------------------------------------------------------
  CommonOpts synth_opts;
  std::string synth_output;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_common(synth, synth_opts);
  synth->add_option("output", synth_output, "Dataset container to write")
      ->required();

  // train -----------------------------------------------------------
  CommonOpts train_opts;
  std::string train_data, train_ckpt = "model.ckpt", train_metrics = "metrics.jsonl";
  auto* train = app.add_subcommand("train", "Train on a dataset container");
  add_common(train, train_opts);
  train->add_option("dataset", train_data, "Dataset container")->required();
  train->add_option("--checkpoint", train_ckpt, "Checkpoint output path");
  train->add_option("--metrics", train_metrics, "Metrics JSON-lines output path");

  // eval ------------------------------------------------------------
  CommonOpts eval_opts;
  std::string eval_data, eval_ckpt, eval_out;
  auto* eval = app.add_subcommand("eval", "One-shot evaluation of a checkpoint");
  add_common(eval, eval_opts);
  eval->add_option("dataset", eval_data, "Dataset container")->required();
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint to evaluate")
      ->required();
  eval->add_option("--out", eval_out, "Write the report JSON here");

  // gradcheck ---------------------------------------------------------
  CommonOpts grad_opts;
  std::string grad_out;
  auto* grad = app.add_subcommand(
      "gradcheck", "Finite-difference verification of all gradients");
  add_common(grad, grad_opts);
  grad->add_option("--out", grad_out, "Write the report JSON here");

  // ablate ------------------------------------------------------------
  CommonOpts ablate_opts;
  std::string ablate_data, ablate_csv = "ablation.csv", ablate_out;
  auto* ablate = app.add_subcommand(
      "ablate", "Train and evaluate the component-ablation grid");
  add_common(ablate, ablate_opts);
  ablate->add_option("dataset", ablate_data, "Dataset container")->required();
  ablate->add_option("--csv", ablate_csv, "Comparison CSV output path");
  ablate->add_option("--out", ablate_out, "Write the summary JSON here");

  // represent ----------------------------------------------------------
  CommonOpts rep_opts;
  std::string rep_data, rep_ckpt, rep_out;
  int rep_index = 0;
  auto* rep = app.add_subcommand(
      "represent", "Dump the comparing-unit embeddings of one sequence");
  add_common(rep, rep_opts);
  rep->add_option("dataset", rep_data, "Dataset container")->required();
  rep->add_option("--checkpoint", rep_ckpt, "Checkpoint")->required();
  rep->add_option("--index", rep_index, "Sequence index")->required();
  rep->add_option("--out", rep_out, "Write the dump JSON here");

  CLI11_PARSE(app, argc, argv);

  if (prep->parsed()) {
    StringGuard config{resolve_config_or_die(prep_opts)};
    DatasetGuard ds;
    StringGuard report;
    const alca_status status =
        alca_dataset_prep_dir(prep_input.c_str(), config.s, &ds.ds, &report.s);
    if (!prep_report.empty() && report.s) write_file(prep_report, report.s);
    if (status != ALCA_OK) return fail_with(status, "prep");
    const alca_status saved = alca_dataset_save(ds.ds, prep_output.c_str());
    if (saved != ALCA_OK) return fail_with(saved, "prep/save");
    std::cout << "packed " << alca_dataset_num_sequences(ds.ds)
              << " sequences (" << alca_dataset_num_classes(ds.ds)
              << " classes) into " << prep_output << "\n";
    return 0;
  }

  if (synth->parsed()) {
    StringGuard config{resolve_config_or_die(synth_opts)};
    DatasetGuard ds;
    const alca_status status = alca_dataset_synth(config.s, &ds.ds);
    if (status != ALCA_OK) return fail_with(status, "synth");
    const alca_status saved = alca_dataset_save(ds.ds, synth_output.c_str());
    if (saved != ALCA_OK) return fail_with(saved, "synth/save");
    std::cout << "generated " << alca_dataset_num_sequences(ds.ds)
              << " sequences (" << alca_dataset_num_classes(ds.ds)
              << " classes) into " << synth_output << "\n";
    return 0;
  }

  if (train->parsed()) {
    StringGuard config{resolve_config_or_die(train_opts)};
    DatasetGuard ds;
    alca_status status = alca_dataset_load(train_data.c_str(), &ds.ds);
    if (status != ALCA_OK) return fail_with(status, "train/load");
    StringGuard summary;
    status = alca_train(config.s, ds.ds, train_ckpt.c_str(),
                        train_metrics.c_str(), &summary.s);
    if (summary.s) std::cout << summary.s << "\n";
    if (status != ALCA_OK) return fail_with(status, "train");
    return 0;
  }

  if (eval->parsed()) {
    StringGuard config{resolve_config_or_die(eval_opts)};
    DatasetGuard ds;
    alca_status status = alca_dataset_load(eval_data.c_str(), &ds.ds);
    if (status != ALCA_OK) return fail_with(status, "eval/load");
    StringGuard report;
    status = alca_evaluate(config.s, ds.ds, eval_ckpt.c_str(), &report.s);
    if (status != ALCA_OK) return fail_with(status, "eval");
    if (!eval_out.empty()) {
      if (!write_file(eval_out, report.s)) {
        std::cerr << "error: cannot write '" << eval_out << "'\n";
        return static_cast<int>(ALCA_ERR_DATA);
      }
    } else if (report.s) {
      std::cout << report.s << "\n";
    }
    return 0;
  }

  if (grad->parsed()) {
    StringGuard config{resolve_config_or_die(grad_opts)};
    StringGuard report;
    const alca_status status = alca_gradcheck(config.s, &report.s);
    if (!grad_out.empty() && report.s) write_file(grad_out, report.s);
    if (report.s && grad_out.empty()) std::cout << report.s << "\n";
    if (status != ALCA_OK) return fail_with(status, "gradcheck");
    return 0;
  }

  if (ablate->parsed()) {
    StringGuard config{resolve_config_or_die(ablate_opts)};
    DatasetGuard ds;
    alca_status status = alca_dataset_load(ablate_data.c_str(), &ds.ds);
    if (status != ALCA_OK) return fail_with(status, "ablate/load");
    StringGuard summary;
    status = alca_ablate(config.s, ds.ds, ablate_csv.c_str(), &summary.s);
    if (status != ALCA_OK) return fail_with(status, "ablate");
    if (!ablate_out.empty() && summary.s) write_file(ablate_out, summary.s);
    std::cout << "ablation grid written to " << ablate_csv << "\n";
    return 0;
  }

  if (rep->parsed()) {
    StringGuard config{resolve_config_or_die(rep_opts)};
    DatasetGuard ds;
    alca_status status = alca_dataset_load(rep_data.c_str(), &ds.ds);
    if (status != ALCA_OK) return fail_with(status, "represent/load");
    StringGuard dump;
    status = alca_represent(config.s, ds.ds, rep_index, rep_ckpt.c_str(), &dump.s);
    if (status != ALCA_OK) return fail_with(status, "represent");
    if (!rep_out.empty()) {
      write_file(rep_out, dump.s);
    } else if (dump.s) {
      std::cout << dump.s << "\n";
    }
    return 0;
  }
  return 0;
}
