#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ordseq/augment.hpp"
#include "ordseq/corpus.hpp"
#include "ordseq/encoder.hpp"
#include "ordseq/metrics.hpp"
#include "ordseq/model.hpp"
#include "ordseq/trainer.hpp"

namespace ordseq {

// Streams a line-delimited JSON file; parse failures and handler exceptions
// are rethrown as "<path>: line <n>: <what>". Blank lines are skipped.
void for_each_jsonl(const std::string& path,
                    const std::function<void(const nlohmann::json&, int line)>& fn);

std::vector<RawUserStream> load_raw_streams(const std::string& path);

// user_id -> (group index -> label)
std::map<std::string, std::map<int, int>> load_labels(const std::string& path);

std::vector<SequenceRecord> load_sequences(const std::string& path);
void save_sequences(const std::string& path, const std::vector<SequenceRecord>& records);

SynonymLexicon load_lexicon(const std::string& path);

void save_folds(const std::string& path, const FoldAssignment& folds);
FoldAssignment load_folds(const std::string& path);

// Self-describing JSON checkpoint: model config, encoder spec, seed, epoch,
// and every named parameter tensor. 64-bit values survive a round trip
// bitwise (doubles are serialized shortest-round-trip).
struct Checkpoint {
  ModelParams params;
  EncoderSpec encoder;
  std::uint64_t seed = 0;
  int epoch = 0;
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const EncoderSpec& encoder, std::uint64_t seed, int epoch);
Checkpoint load_checkpoint(const std::string& path);

void save_history(const std::string& path, const std::vector<EpochLog>& history);

void save_predictions(const std::string& path, const std::vector<std::string>& record_ids,
                      const std::vector<Prediction>& preds);

struct PredictionRow {
  std::string record_id;
  std::array<double, kNumClasses> p_final{}, p_coral{}, p_class{};
  int label = 0;
  bool coral_monotone = true;
};

std::vector<PredictionRow> load_predictions(const std::string& path);

nlohmann::json report_to_json(const MetricReport& report);
void save_report(const std::string& path, const nlohmann::json& report);

void save_confusion_csv(const std::string& path, const ConfusionMatrix& cm);

// Shared (de)serialization of the two config structs embedded in checkpoints.
nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json encoder_spec_to_json(const EncoderSpec& spec);
EncoderSpec encoder_spec_from_json(const nlohmann::json& j);

}  // namespace ordseq
