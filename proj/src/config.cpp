#include "ordseq/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>
#include <stdexcept>
#include <vector>

namespace ordseq {
namespace {

using nlohmann::json;

struct Problems {
  std::vector<std::string> list;

  void add(std::string msg) { list.push_back(std::move(msg)); }

  void check_keys(const json& obj, const std::string& where,
                  std::initializer_list<const char*> allowed) {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : obj.items()) {
      if (!ok.count(key)) add("unknown key \"" + (where.empty() ? key : where + "." + key) + "\"");
    }
  }

  template <typename T>
  void read(const json& obj, const std::string& where, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
      out = obj.at(key).get<T>();
    } catch (const std::exception&) {
      add("key \"" + (where.empty() ? std::string(key) : where + "." + key) +
          "\" has the wrong type");
    }
  }

  void validate(const char* what, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      add(std::string(what) + ": " + e.what());
    }
  }

  void file_exists(const std::string& path, const std::string& key) {
    if (path.empty()) return;
    if (!std::filesystem::exists(path)) add(key + ": file not found: " + path);
  }

  void raise_if_any(const std::string& context) {
    if (list.empty()) return;
    std::string msg = context + ": " + std::to_string(list.size()) + " problem(s):";
    for (const std::string& m : list) msg += "\n  - " + m;
    throw std::runtime_error(msg);
  }
};

}  // namespace

RunConfig run_config_from_json(const json& j, bool sequences_is_output) {
  RunConfig cfg;
  Problems p;

  if (!j.is_object()) {
    p.add("config root must be a JSON object");
    p.raise_if_any("config");
  }
  p.check_keys(j, "", {"seed", "data", "output_dir", "folds", "jobs", "encoder", "model", "train",
                       "loss", "augment"});

  p.read(j, "", "seed", cfg.seed);
  p.read(j, "", "output_dir", cfg.output_dir);
  p.read(j, "", "folds", cfg.folds);
  p.read(j, "", "jobs", cfg.jobs);

  if (j.contains("data") && j["data"].is_object()) {
    const json& d = j["data"];
    p.check_keys(d, "data", {"sequences", "raw_streams", "labels", "lexicon"});
    p.read(d, "data", "sequences", cfg.sequences_path);
    p.read(d, "data", "raw_streams", cfg.raw_streams_path);
    p.read(d, "data", "labels", cfg.labels_path);
    p.read(d, "data", "lexicon", cfg.lexicon_path);
  } else if (j.contains("data")) {
    p.add("\"data\" must be an object");
  }

  if (j.contains("encoder") && j["encoder"].is_object()) {
    const json& e = j["encoder"];
    p.check_keys(e, "encoder", {"kind", "dim", "ngram_orders", "hash_seed", "vectors_path"});
    std::string kind = "hashed_ngram";
    p.read(e, "encoder", "kind", kind);
    if (kind == "hashed_ngram") {
      cfg.encoder.kind = EncoderSpec::Kind::hashed_ngram;
    } else if (kind == "precomputed") {
      cfg.encoder.kind = EncoderSpec::Kind::precomputed;
    } else {
      p.add("encoder.kind must be \"hashed_ngram\" or \"precomputed\", got \"" + kind + "\"");
    }
    p.read(e, "encoder", "dim", cfg.encoder.dim);
    p.read(e, "encoder", "ngram_orders", cfg.encoder.ngram_orders);
    p.read(e, "encoder", "hash_seed", cfg.encoder.hash_seed);
    p.read(e, "encoder", "vectors_path", cfg.encoder.vectors_path);
  } else if (j.contains("encoder")) {
    p.add("\"encoder\" must be an object");
  }

  if (j.contains("model") && j["model"].is_object()) {
    const json& m = j["model"];
    p.check_keys(m, "model",
                 {"transformer_layers", "attn_heads", "ffn_dim", "pool_heads", "dropout",
                  "use_transformer", "use_stat_features", "stat_hidden"});
    ModelConfig& mc = cfg.train.model;
    p.read(m, "model", "transformer_layers", mc.transformer_layers);
    p.read(m, "model", "attn_heads", mc.attn_heads);
    p.read(m, "model", "ffn_dim", mc.ffn_dim);
    p.read(m, "model", "pool_heads", mc.pool_heads);
    p.read(m, "model", "dropout", mc.dropout);
    p.read(m, "model", "use_transformer", mc.use_transformer);
    p.read(m, "model", "use_stat_features", mc.use_stat_features);
    p.read(m, "model", "stat_hidden", mc.stat_hidden);
  } else if (j.contains("model")) {
    p.add("\"model\" must be an object");
  }

  if (j.contains("train") && j["train"].is_object()) {
    const json& t = j["train"];
    p.check_keys(t, "train",
                 {"base_lr", "weight_decay", "warmup_fraction", "batch_size",
                  "accumulation_steps", "clip_norm", "max_epochs", "patience"});
    p.read(t, "train", "base_lr", cfg.train.base_lr);
    p.read(t, "train", "weight_decay", cfg.train.weight_decay);
    p.read(t, "train", "warmup_fraction", cfg.train.warmup_fraction);
    p.read(t, "train", "batch_size", cfg.train.batch_size);
    p.read(t, "train", "accumulation_steps", cfg.train.accumulation_steps);
    p.read(t, "train", "clip_norm", cfg.train.clip_norm);
    p.read(t, "train", "max_epochs", cfg.train.max_epochs);
    p.read(t, "train", "patience", cfg.train.patience);
  } else if (j.contains("train")) {
    p.add("\"train\" must be an object");
  }

  if (j.contains("loss") && j["loss"].is_object()) {
    const json& l = j["loss"];
    p.check_keys(l, "loss",
                 {"w_coral", "w_ce", "w_focal", "smoothing", "focal_gamma",
                  "normalized_smoothing"});
    p.read(l, "loss", "w_coral", cfg.train.loss.w_coral);
    p.read(l, "loss", "w_ce", cfg.train.loss.w_ce);
    p.read(l, "loss", "w_focal", cfg.train.loss.w_focal);
    p.read(l, "loss", "smoothing", cfg.train.loss.smoothing);
    p.read(l, "loss", "focal_gamma", cfg.train.loss.focal_gamma);
    p.read(l, "loss", "normalized_smoothing", cfg.train.loss.normalized_smoothing);
  } else if (j.contains("loss")) {
    p.add("\"loss\" must be an object");
  }

  if (j.contains("augment") && j["augment"].is_object()) {
    const json& a = j["augment"];
    p.check_keys(a, "augment", {"apply_probability", "deletion_rate", "replacement_rate"});
    p.read(a, "augment", "apply_probability", cfg.train.augment.apply_probability);
    p.read(a, "augment", "deletion_rate", cfg.train.augment.deletion_rate);
    p.read(a, "augment", "replacement_rate", cfg.train.augment.replacement_rate);
  } else if (j.contains("augment")) {
    p.add("\"augment\" must be an object");
  }

  // One root seed drives everything; the model width is the encoder width.
  cfg.train.seed = cfg.seed;
  cfg.train.model.seed = cfg.seed;
  cfg.train.model.dim = cfg.encoder.dim;

  if (cfg.folds < 2) p.add("folds must be >= 2");
  if (cfg.jobs < 1) p.add("jobs must be >= 1");
  p.validate("encoder", [&] { cfg.encoder.validate(); });
  p.validate("train", [&] { cfg.train.validate(); });

  if (!sequences_is_output) p.file_exists(cfg.sequences_path, "data.sequences");
  p.file_exists(cfg.raw_streams_path, "data.raw_streams");
  p.file_exists(cfg.labels_path, "data.labels");
  p.file_exists(cfg.lexicon_path, "data.lexicon");
  p.file_exists(cfg.encoder.vectors_path, "encoder.vectors_path");

  p.raise_if_any("config");
  return cfg;
}

RunConfig load_run_config(const std::string& path, bool sequences_is_output) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error("config " + path + ": " + e.what());
  }
  try {
    return run_config_from_json(j, sequences_is_output);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::string env_config_path() {
  const char* env = std::getenv("ORDSEQ_CONFIG");
  return env != nullptr ? std::string(env) : std::string();
}

}  // namespace ordseq
