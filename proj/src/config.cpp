#include "config.hpp"

#include <fstream>

namespace alca {

using nlohmann::json;

json RunConfig::defaults() {
  return json{
      {"seed", 1},
      {"threads", 1},
      {"precision", "f32"},
      {"data",
       {{"frames", 75}, {"align", true}, {"center_origin", true}}},
      {"synth",
       {{"classes", 25}, {"samples_per_class", 50}, {"difficulty", 0.5}}},
      {"split", {{"eval_classes", 5}, {"val_fraction", 0.1}}},
      {"model",
       {{"channels", json::array({64, 64, 64, 64, 128, 128, 128, 256, 256, 256})},
        {"strides", json::array({1, 1, 1, 1, 2, 1, 1, 2, 1, 1})},
        {"sampling_strategy", "both"},
        {"division", "both"},
        {"constraints", "full"},
        {"pool_overlap", false},
        {"d_emb", 256},
        {"dropout", 0.5},
        {"input_bn", true},
        {"residual", true},
        {"init", "default"},
        {"topology", ""}}},
      {"train",
       {{"mode", "episodic"},
        {"epochs", 100},
        {"episodes_per_epoch", 200},
        {"n_way", 20},
        {"queries_per_class", 1},
        {"batch_size", 64},
        {"lr", 1e-3},
        {"weight_decay", 1e-6},
        {"patience", 10},
        {"val_episodes", 100}}},
      {"eval", {{"include_references", false}, {"dump_distances", false}}},
      {"prep", {{"skip_bad", false}}},
  };
}

namespace {

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  if (a.is_boolean() && b.is_boolean()) return true;
  if (a.is_string() && b.is_string()) return true;
  if (a.is_array() && b.is_array()) return true;
  if (a.is_object() && b.is_object()) return true;
  return false;
}

void merge_checked(json& base, const json& incoming, const std::string& path) {
  ALCA_THROW_IF(!incoming.is_object(), ErrorKind::Config, "config: '",
                path.empty() ? "<root>" : path, "' must be an object");
  for (auto it = incoming.begin(); it != incoming.end(); ++it) {
    const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
    ALCA_THROW_IF(!base.contains(it.key()), ErrorKind::Config,
                  "config: unknown key '", key_path, "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), key_path);
    } else {
      ALCA_THROW_IF(!same_kind(slot, it.value()), ErrorKind::Config,
                    "config: '", key_path, "' expects ", slot.type_name(),
                    ", got ", it.value().type_name());
      slot = it.value();
    }
  }
}

// "a.b.c=value"; the value parses as JSON when possible, else as a string.
void apply_override(json& base, const std::string& spec) {
  const auto eq = spec.find('=');
  ALCA_THROW_IF(eq == std::string::npos, ErrorKind::Config,
                "override '", spec, "' is not of the form key=value");
  const std::string path = spec.substr(0, eq);
  const std::string text = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  std::vector<std::string> keys;
  size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    keys.push_back(path.substr(start, dot == std::string::npos
                                          ? std::string::npos
                                          : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json patch = value;
  for (auto it = keys.rbegin(); it != keys.rend(); ++it) {
    patch = json{{*it, patch}};
  }
  merge_checked(base, patch, "");
}

}  // namespace

RunConfig RunConfig::resolve(const std::string& file_json,
                             const std::vector<std::string>& overrides) {
  RunConfig cfg;
  cfg.effective_ = defaults();
  if (!file_json.empty()) {
    json body;
    try {
      body = json::parse(file_json);
    } catch (const json::exception& e) {
      fail(ErrorKind::Config, cat("config file: ", e.what()));
    }
    merge_checked(cfg.effective_, body, "");
  }
  for (const auto& spec : overrides) apply_override(cfg.effective_, spec);

  // Eager validation of everything derivable without data.
  cfg.model_config();
  cfg.train_config();
  cfg.preprocess_options();
  ALCA_THROW_IF(cfg.threads() < 1, ErrorKind::Config,
                "config: threads must be >= 1");
  ALCA_THROW_IF(cfg.precision() != "f32" && cfg.precision() != "f64",
                ErrorKind::Config, "config: precision must be f32 or f64");
  const auto& split = cfg.effective_.at("split");
  ALCA_THROW_IF(split.at("eval_classes").get<int>() < 0, ErrorKind::Config,
                "config: split.eval_classes must be >= 0");
  return cfg;
}

uint64_t RunConfig::seed() const { return effective_.at("seed").get<uint64_t>(); }
int RunConfig::threads() const { return effective_.at("threads").get<int>(); }
std::string RunConfig::precision() const {
  return effective_.at("precision").get<std::string>();
}

ModelConfig RunConfig::model_config() const {
  const json& m = effective_.at("model");
  ModelConfig cfg;
  const std::string topology = m.at("topology").get<std::string>();
  if (topology.empty()) {
    cfg.graph = ntu25_graph();
  } else {
    std::ifstream in(topology);
    ALCA_THROW_IF(!in, ErrorKind::Config, "config: cannot open topology file '",
                  topology, "'");
    std::string body((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    cfg.graph = load_skeleton_graph_json(body);
  }
  const auto channels = m.at("channels").get<std::vector<int>>();
  const auto strides = m.at("strides").get<std::vector<int>>();
  ALCA_THROW_IF(channels.size() != strides.size() || channels.empty(),
                ErrorKind::Config,
                "config: model.channels and model.strides must be equally "
                "sized and nonempty");
  cfg.encoder.blocks.clear();
  for (size_t i = 0; i < channels.size(); ++i) {
    cfg.encoder.blocks.push_back({channels[i], strides[i]});
  }
  cfg.encoder.sampling =
      sampling_strategy_from(m.at("sampling_strategy").get<std::string>());
  cfg.encoder.dropout = m.at("dropout").get<double>();
  cfg.encoder.input_bn = m.at("input_bn").get<bool>();
  cfg.encoder.residual = m.at("residual").get<bool>();
  cfg.division = division_from(m.at("division").get<std::string>());
  cfg.constraints = constraint_mode_from(m.at("constraints").get<std::string>());
  cfg.pool_overlap = m.at("pool_overlap").get<bool>();
  cfg.d_emb = m.at("d_emb").get<int>();
  cfg.init = m.at("init").get<std::string>();
  cfg.frames = effective_.at("data").at("frames").get<int>();
  cfg.performers = kPerformers;
  cfg.validate();
  return cfg;
}

TrainConfig RunConfig::train_config() const {
  const json& t = effective_.at("train");
  TrainConfig cfg;
  cfg.mode = t.at("mode").get<std::string>();
  cfg.epochs = t.at("epochs").get<int>();
  cfg.episodes_per_epoch = t.at("episodes_per_epoch").get<int>();
  cfg.n_way = t.at("n_way").get<int>();
  cfg.queries_per_class = t.at("queries_per_class").get<int>();
  cfg.batch_size = t.at("batch_size").get<int>();
  cfg.lr = t.at("lr").get<double>();
  cfg.weight_decay = t.at("weight_decay").get<double>();
  cfg.patience = t.at("patience").get<int>();
  cfg.val_episodes = t.at("val_episodes").get<int>();
  cfg.seed = seed();
  cfg.validate();
  ALCA_THROW_IF(cfg.epochs > 100, ErrorKind::Config,
                "config: train.epochs is capped at 100");
  return cfg;
}

SynthConfig RunConfig::synth_config() const {
  const json& s = effective_.at("synth");
  SynthConfig cfg;
  cfg.classes = s.at("classes").get<int>();
  cfg.samples_per_class = s.at("samples_per_class").get<int>();
  cfg.difficulty = s.at("difficulty").get<double>();
  cfg.seed = seed();
  return cfg;
}

SplitPolicy RunConfig::split_policy() const {
  const json& s = effective_.at("split");
  SplitPolicy policy;
  policy.eval_classes = s.at("eval_classes").get<int>();
  policy.val_fraction = s.at("val_fraction").get<double>();
  policy.seed = seed();
  return policy;
}

PreprocessOptions RunConfig::preprocess_options() const {
  const json& d = effective_.at("data");
  PreprocessOptions opt;
  opt.target_frames = d.at("frames").get<int>();
  opt.align = d.at("align").get<bool>();
  opt.center_origin = d.at("center_origin").get<bool>();
  ALCA_THROW_IF(opt.target_frames < 1, ErrorKind::Config,
                "config: data.frames must be >= 1");
  return opt;
}

EvalOptions RunConfig::eval_options() const {
  const json& e = effective_.at("eval");
  EvalOptions opt;
  opt.include_references = e.at("include_references").get<bool>();
  opt.dump_distances = e.at("dump_distances").get<bool>();
  return opt;
}

bool RunConfig::prep_skip_bad() const {
  return effective_.at("prep").at("skip_bad").get<bool>();
}

std::string RunConfig::hash() const {
  return hex64(fnv1a64(effective_.dump()));
}

}  // namespace alca
