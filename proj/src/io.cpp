#include "ordseq/io.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace ordseq {
namespace {

using nlohmann::json;

std::ofstream open_out(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return in;
}

json parse_file(const std::string& path) {
  std::ifstream in = open_in(path);
  try {
    return json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

json record_to_json(const SequenceRecord& rec) {
  json j;
  j["record_id"] = rec.record_id;
  j["posts"] = rec.posts;
  j["timestamps"] = rec.timestamps;
  j["label"] = rec.label;
  j["n_valid"] = rec.n_valid;
  return j;
}

SequenceRecord record_from_json(const json& j) {
  SequenceRecord rec;
  rec.record_id = j.at("record_id").get<std::string>();
  const auto& posts = j.at("posts");
  const auto& ts = j.at("timestamps");
  if (posts.size() != kSeqLen || ts.size() != kSeqLen)
    throw std::runtime_error("posts and timestamps must have exactly " +
                             std::to_string(kSeqLen) + " entries");
  for (int i = 0; i < kSeqLen; ++i) {
    rec.posts[i] = posts[i].get<std::string>();
    rec.timestamps[i] = ts[i].get<long long>();
  }
  rec.label = j.at("label").get<int>();
  rec.n_valid = j.at("n_valid").get<int>();
  rec.validate();
  return rec;
}

}  // namespace

void for_each_jsonl(const std::string& path,
                    const std::function<void(const json&, int line)>& fn) {
  std::ifstream in = open_in(path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line), lineno);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::vector<RawUserStream> load_raw_streams(const std::string& path) {
  std::vector<RawUserStream> streams;
  for_each_jsonl(path, [&](const json& j, int) {
    RawUserStream s;
    s.user_id = j.at("user_id").get<std::string>();
    s.posts = j.at("posts").get<std::vector<std::string>>();
    s.timestamps = j.at("timestamps").get<std::vector<long long>>();
    s.validate();
    streams.push_back(std::move(s));
  });
  return streams;
}

std::map<std::string, std::map<int, int>> load_labels(const std::string& path) {
  std::map<std::string, std::map<int, int>> labels;
  for_each_jsonl(path, [&](const json& j, int) {
    const std::string user = j.at("user_id").get<std::string>();
    const int group = j.at("group").get<int>();
    const int label = j.at("label").get<int>();
    if (!labels[user].emplace(group, label).second)
      throw std::runtime_error("duplicate label for user " + user + " group " +
                               std::to_string(group));
  });
  return labels;
}

std::vector<SequenceRecord> load_sequences(const std::string& path) {
  std::vector<SequenceRecord> records;
  for_each_jsonl(path, [&](const json& j, int) { records.push_back(record_from_json(j)); });
  return records;
}

void save_sequences(const std::string& path, const std::vector<SequenceRecord>& records) {
  std::ofstream out = open_out(path);
  for (const SequenceRecord& rec : records) out << record_to_json(rec).dump() << "\n";
}

SynonymLexicon load_lexicon(const std::string& path) {
  SynonymLexicon lex;
  for_each_jsonl(path, [&](const json& j, int) {
    lex.add(j.at("word").get<std::string>(), j.at("synonyms").get<std::vector<std::string>>());
  });
  return lex;
}

void save_folds(const std::string& path, const FoldAssignment& folds) {
  json j;
  j["k"] = folds.k;
  j["seed"] = folds.seed;
  j["assignment"] = folds.assignment;
  open_out(path) << j.dump(2) << "\n";
}

FoldAssignment load_folds(const std::string& path) {
  const json j = parse_file(path);
  FoldAssignment f;
  f.k = j.at("k").get<int>();
  f.seed = j.at("seed").get<std::uint64_t>();
  f.assignment = j.at("assignment").get<std::map<std::string, int>>();
  for (const auto& [id, fold] : f.assignment) {
    if (fold < 0 || fold >= f.k)
      throw std::runtime_error(path + ": record " + id + " assigned to fold " +
                               std::to_string(fold) + " outside [0, " + std::to_string(f.k) + ")");
  }
  return f;
}

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["dim"] = cfg.dim;
  j["transformer_layers"] = cfg.transformer_layers;
  j["attn_heads"] = cfg.attn_heads;
  j["ffn_dim"] = cfg.ffn_dim;
  j["pool_heads"] = cfg.pool_heads;
  j["dropout"] = cfg.dropout;
  j["use_transformer"] = cfg.use_transformer;
  j["use_stat_features"] = cfg.use_stat_features;
  j["stat_hidden"] = cfg.stat_hidden;
  j["seed"] = cfg.seed;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.dim = j.at("dim").get<std::size_t>();
  cfg.transformer_layers = j.at("transformer_layers").get<int>();
  cfg.attn_heads = j.at("attn_heads").get<std::size_t>();
  cfg.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  cfg.pool_heads = j.at("pool_heads").get<std::size_t>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.use_transformer = j.at("use_transformer").get<bool>();
  cfg.use_stat_features = j.at("use_stat_features").get<bool>();
  cfg.stat_hidden = j.at("stat_hidden").get<std::size_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.validate();
  return cfg;
}

nlohmann::json encoder_spec_to_json(const EncoderSpec& spec) {
  json j;
  j["kind"] = spec.kind == EncoderSpec::Kind::hashed_ngram ? "hashed_ngram" : "precomputed";
  j["dim"] = spec.dim;
  j["ngram_orders"] = spec.ngram_orders;
  j["hash_seed"] = spec.hash_seed;
  j["vectors_path"] = spec.vectors_path;
  return j;
}

EncoderSpec encoder_spec_from_json(const nlohmann::json& j) {
  EncoderSpec spec;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "hashed_ngram") {
    spec.kind = EncoderSpec::Kind::hashed_ngram;
  } else if (kind == "precomputed") {
    spec.kind = EncoderSpec::Kind::precomputed;
  } else {
    throw std::runtime_error("unknown encoder kind \"" + kind + "\"");
  }
  spec.dim = j.at("dim").get<std::size_t>();
  spec.ngram_orders = j.at("ngram_orders").get<std::vector<int>>();
  spec.hash_seed = j.at("hash_seed").get<std::uint64_t>();
  spec.vectors_path = j.at("vectors_path").get<std::string>();
  spec.validate();
  return spec;
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const EncoderSpec& encoder, std::uint64_t seed, int epoch) {
  json j;
  j["format"] = "ordseq-checkpoint-v1";
  j["model"] = model_config_to_json(params.config());
  j["encoder"] = encoder_spec_to_json(encoder);
  j["seed"] = seed;
  j["epoch"] = epoch;
  json p = json::object();
  for (const ParamTensor& t : params.all()) {
    json entry;
    entry["shape"] = t.value.shape();
    entry["data"] = t.value.vec();
    p[t.name] = std::move(entry);
  }
  j["params"] = std::move(p);
  open_out(path) << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  const json j = parse_file(path);
  if (!j.contains("format") || j["format"] != "ordseq-checkpoint-v1")
    throw std::runtime_error(path + ": not an ordseq checkpoint");

  Checkpoint ckpt{ModelParams(model_config_from_json(j.at("model"))),
                  encoder_spec_from_json(j.at("encoder")), j.at("seed").get<std::uint64_t>(),
                  j.at("epoch").get<int>()};

  const json& p = j.at("params");
  std::size_t used = 0;
  for (ParamTensor& t : ckpt.params.all()) {
    if (!p.contains(t.name))
      throw std::runtime_error(path + ": checkpoint is missing parameter " + t.name);
    const json& entry = p.at(t.name);
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != t.value.shape())
      throw std::runtime_error(path + ": parameter " + t.name + " has shape mismatch");
    t.value = Tensor(shape, entry.at("data").get<std::vector<double>>());
    if (!t.value.all_finite())
      throw std::runtime_error(path + ": parameter " + t.name + " contains non-finite values");
    t.grad = Tensor::zeros(shape);
    ++used;
  }
  if (used != p.size())
    throw std::runtime_error(path + ": checkpoint contains unknown parameters");
  return ckpt;
}

void save_history(const std::string& path, const std::vector<EpochLog>& history) {
  std::ofstream out = open_out(path);
  for (const EpochLog& log : history) {
    json j;
    j["fold"] = log.fold;
    j["epoch"] = log.epoch;
    j["train_loss"] = log.train_loss;
    j["val_macro_f1"] = log.val_macro_f1;
    j["val_mae"] = log.val_mae;
    j["val_qwk"] = log.val_qwk;
    j["lr"] = log.lr;
    out << j.dump() << "\n";
  }
}

void save_predictions(const std::string& path, const std::vector<std::string>& record_ids,
                      const std::vector<Prediction>& preds) {
  if (record_ids.size() != preds.size())
    throw std::invalid_argument("save_predictions: ids and predictions differ in length");
  std::ofstream out = open_out(path);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    json j;
    j["record_id"] = record_ids[i];
    j["p_final"] = preds[i].p_final;
    j["p_coral"] = preds[i].p_coral;
    j["p_class"] = preds[i].p_class;
    j["label"] = preds[i].label;
    j["coral_monotone"] = preds[i].coral_monotone;
    out << j.dump() << "\n";
  }
}

std::vector<PredictionRow> load_predictions(const std::string& path) {
  std::vector<PredictionRow> rows;
  for_each_jsonl(path, [&](const json& j, int) {
    PredictionRow row;
    row.record_id = j.at("record_id").get<std::string>();
    row.p_final = j.at("p_final").get<std::array<double, kNumClasses>>();
    row.p_coral = j.at("p_coral").get<std::array<double, kNumClasses>>();
    row.p_class = j.at("p_class").get<std::array<double, kNumClasses>>();
    row.label = j.at("label").get<int>();
    row.coral_monotone = j.at("coral_monotone").get<bool>();
    rows.push_back(std::move(row));
  });
  return rows;
}

nlohmann::json report_to_json(const MetricReport& report) {
  json j;
  j["n"] = report.n;
  j["macro_f1"] = report.macro_f1;
  j["weighted_f1"] = report.weighted_f1;
  j["mae"] = report.mae;
  j["qwk"] = report.qwk;
  j["per_class_f1"] = report.per_class_f1;
  j["confusion"] = report.confusion.counts;
  return j;
}

void save_report(const std::string& path, const nlohmann::json& report) {
  open_out(path) << report.dump(2) << "\n";
}

void save_confusion_csv(const std::string& path, const ConfusionMatrix& cm) {
  std::ofstream out = open_out(path);
  out << "true\\pred";
  for (int j = 0; j < kNumClasses; ++j) out << ",pred_" << j;
  out << "\n";
  for (int i = 0; i < kNumClasses; ++i) {
    out << "true_" << i;
    for (int j = 0; j < kNumClasses; ++j) out << "," << cm.counts[i][j];
    out << "\n";
  }
}

}  // namespace ordseq
