#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "ordseq/encoder.hpp"
#include "ordseq/trainer.hpp"

namespace ordseq {

// Everything one run needs, loaded from a single JSON config file. The root
// `seed` is the only seed: it feeds training, fold assignment, augmentation,
// and (offset per fold) model initialization. The model width is always the
// encoder dim, so the two can never disagree.
struct RunConfig {
  std::uint64_t seed = 42;

  std::string sequences_path;
  std::string raw_streams_path;
  std::string labels_path;
  std::string lexicon_path;  // optional; empty disables synonym replacement

  std::string output_dir = "out";
  int folds = 5;
  int jobs = 1;

  EncoderSpec encoder;
  TrainConfig train;  // carries loss, model, and augment sub-configs
};

// Parses and fully validates a config. Every problem found — unknown keys,
// wrong types, invalid values, missing referenced files — is collected and
// reported in one exception message, one line per problem. Commands that
// write the sequence file rather than read it pass sequences_is_output to
// skip the existence check on that one path.
RunConfig load_run_config(const std::string& path, bool sequences_is_output = false);
RunConfig run_config_from_json(const nlohmann::json& j, bool sequences_is_output = false);

// Path named by the ORDSEQ_CONFIG environment variable; empty when unset.
std::string env_config_path();

}  // namespace ordseq
