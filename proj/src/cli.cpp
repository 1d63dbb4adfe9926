#include "ordseq/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ordseq/config.hpp"
#include "ordseq/io.hpp"

namespace ordseq {
namespace {

using nlohmann::json;

struct SharedOpts {
  std::string config_path;
  std::string sequences;
  std::string lexicon;
  std::string out_dir;
  std::uint64_t seed = 0;
  int folds = 0;
  int jobs = 0;

  CLI::Option* o_sequences = nullptr;
  CLI::Option* o_lexicon = nullptr;
  CLI::Option* o_out_dir = nullptr;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_folds = nullptr;
  CLI::Option* o_jobs = nullptr;
};

void add_shared(CLI::App* cmd, SharedOpts& s) {
  cmd->add_option("--config", s.config_path,
                  "JSON config file (falls back to $ORDSEQ_CONFIG, then defaults)");
  s.o_sequences = cmd->add_option("--data", s.sequences, "sequence file (overrides config)");
  s.o_lexicon = cmd->add_option("--lexicon", s.lexicon, "synonym lexicon file (overrides config)");
  s.o_out_dir = cmd->add_option("--out-dir", s.out_dir, "output directory (overrides config)");
  s.o_seed = cmd->add_option("--seed", s.seed, "root PRNG seed (overrides config)");
  s.o_folds = cmd->add_option("--folds", s.folds, "number of CV folds (overrides config)");
  s.o_jobs = cmd->add_option("--jobs", s.jobs, "folds trained in parallel (overrides config)");
}

// Flag > file > default: overrides are injected into the config JSON before
// the single validation pass, so every value is checked exactly once.
RunConfig resolve_config(const SharedOpts& s, bool sequences_is_output = false) {
  json j = json::object();
  std::string path = s.config_path.empty() ? env_config_path() : s.config_path;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path);
    try {
      j = json::parse(in);
    } catch (const std::exception& e) {
      throw std::runtime_error("config " + path + ": " + e.what());
    }
  }
  if (*s.o_sequences) j["data"]["sequences"] = s.sequences;
  if (*s.o_lexicon) j["data"]["lexicon"] = s.lexicon;
  if (*s.o_out_dir) j["output_dir"] = s.out_dir;
  if (*s.o_seed) j["seed"] = s.seed;
  if (*s.o_folds) j["folds"] = s.folds;
  if (*s.o_jobs) j["jobs"] = s.jobs;
  try {
    return run_config_from_json(j, sequences_is_output);
  } catch (const std::exception& e) {
    if (!path.empty()) throw std::runtime_error(path + ": " + e.what());
    throw;
  }
}

std::string require_sequences(const RunConfig& cfg) {
  if (cfg.sequences_path.empty())
    throw std::runtime_error("no sequence file: set data.sequences in the config or pass --data");
  return cfg.sequences_path;
}

SynonymLexicon lexicon_or_empty(const RunConfig& cfg) {
  return cfg.lexicon_path.empty() ? SynonymLexicon() : load_lexicon(cfg.lexicon_path);
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void print_distribution(const ClassDistribution& dist) {
  std::cout << "class  count  proportion\n";
  for (int c = 0; c < kNumClasses; ++c) {
    std::cout << c << "      " << std::setw(5) << dist.counts[c] << "  " << std::fixed
              << std::setprecision(4) << dist.proportions[c] << "\n";
  }
  std::cout.unsetf(std::ios::fixed);
  std::cout << std::setprecision(6);
}

void print_report(const std::string& title, const MetricReport& r) {
  std::cout << title << ": n=" << r.n << " macro_f1=" << std::fixed << std::setprecision(4)
            << r.macro_f1 << " weighted_f1=" << r.weighted_f1 << " mae=" << r.mae
            << " qwk=" << r.qwk << "\n";
  std::cout << "per-class F1:";
  for (double f : r.per_class_f1) std::cout << " " << f;
  std::cout << "\nconfusion (rows=true, cols=pred):\n";
  for (int i = 0; i < kNumClasses; ++i) {
    std::cout << " ";
    for (int j = 0; j < kNumClasses; ++j) std::cout << " " << std::setw(6) << r.confusion.counts[i][j];
    std::cout << "\n";
  }
  std::cout.unsetf(std::ios::fixed);
  std::cout << std::setprecision(6);
}

int cmd_prepare(const std::string& raw_path, const std::string& labels_path,
                const std::string& out_path) {
  if (raw_path.empty()) throw std::runtime_error("prepare: set data.raw_streams or pass --raw");
  if (labels_path.empty()) throw std::runtime_error("prepare: set data.labels or pass --labels");
  if (out_path.empty())
    throw std::runtime_error("prepare: set data.sequences or pass --out for the output file");

  const auto streams = load_raw_streams(raw_path);
  const auto labels = load_labels(labels_path);

  std::vector<SequenceRecord> records;
  for (const RawUserStream& stream : streams) {
    auto it = labels.find(stream.user_id);
    static const std::map<int, int> kNoLabels;
    const auto& user_labels = it != labels.end() ? it->second : kNoLabels;
    auto recs = build_sequences(stream, user_labels);
    records.insert(records.end(), recs.begin(), recs.end());
  }

  save_sequences(out_path, records);
  std::cout << "wrote " << records.size() << " records to " << out_path << "\n";
  if (!records.empty()) print_distribution(class_distribution(records));
  return 0;
}

int cmd_split(const RunConfig& cfg) {
  const auto records = load_sequences(require_sequences(cfg));
  std::string warning;
  FoldAssignment fa = stratified_folds(records, cfg.folds, cfg.seed, &warning);
  const std::string out = join_path(cfg.output_dir, "folds.json");
  save_folds(out, fa);

  std::vector<std::array<long, kNumClasses>> counts(cfg.folds, std::array<long, kNumClasses>{});
  for (const SequenceRecord& r : records) ++counts[fa.assignment.at(r.record_id)][r.label];
  std::cout << "fold  class0  class1  class2  class3\n";
  for (int f = 0; f < cfg.folds; ++f) {
    std::cout << f << "    ";
    for (long c : counts[f]) std::cout << "  " << std::setw(6) << c;
    std::cout << "\n";
  }
  if (!warning.empty()) std::cout << "warning: " << warning << "\n";
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_augment(const RunConfig& cfg, int limit) {
  const auto records = load_sequences(require_sequences(cfg));
  const SynonymLexicon lexicon = lexicon_or_empty(cfg);
  Rng rng(cfg.seed);
  const int n = std::min<int>(limit, static_cast<int>(records.size()));
  for (int i = 0; i < n; ++i) {
    const SequenceRecord& rec = records[i];
    std::cout << rec.record_id << ":\n";
    for (int p = 0; p < rec.n_valid; ++p) {
      const std::string out = augment_post(rec.posts[p], cfg.train.augment, lexicon, rng);
      std::cout << "  - " << rec.posts[p] << "\n  + " << out
                << (out == rec.posts[p] ? "  (unchanged)" : "") << "\n";
    }
  }
  std::cout << "previewed " << n << " of " << records.size() << " records (dry run)\n";
  return 0;
}

void write_cv_outputs(const RunConfig& cfg, const CvResult& cv) {
  const std::string& dir = cfg.output_dir;
  save_folds(join_path(dir, "folds.json"), cv.assignment);

  std::vector<EpochLog> history;
  for (const FoldResult& fr : cv.folds) {
    history.insert(history.end(), fr.fit.history.begin(), fr.fit.history.end());
    save_checkpoint(join_path(dir, "fold" + std::to_string(fr.fold) + ".ckpt.json"),
                    fr.fit.params, cfg.encoder, cfg.seed + static_cast<std::uint64_t>(fr.fold),
                    fr.fit.best_epoch);
  }
  save_history(join_path(dir, "history.jsonl"), history);

  json report;
  report["oof"] = report_to_json(cv.oof.pooled);
  json per_fold = json::array();
  for (const MetricReport& r : cv.oof.per_fold) per_fold.push_back(report_to_json(r));
  report["per_fold"] = std::move(per_fold);
  report["coral_violations"] = cv.coral_violations;
  report["stratification_warning"] = cv.stratification_warning;
  save_report(join_path(dir, "oof_report.json"), report);

  save_confusion_csv(join_path(dir, "confusion.csv"), cv.oof.pooled.confusion);

  std::ofstream preds(join_path(dir, "oof_predictions.jsonl"));
  for (const FoldResult& fr : cv.folds) {
    for (const FoldPrediction& p : fr.predictions) {
      json j;
      j["record_id"] = p.record_id;
      j["fold"] = p.fold;
      j["y_true"] = p.y_true;
      j["y_pred"] = p.y_pred;
      preds << j.dump() << "\n";
    }
  }
}

int cmd_cv(const RunConfig& cfg) {
  const auto records = load_sequences(require_sequences(cfg));
  const Encoder encoder(cfg.encoder);
  const SynonymLexicon lexicon = lexicon_or_empty(cfg);

  CvResult cv = run_cv(records, cfg.folds, cfg.train, encoder, lexicon, cfg.jobs);
  write_cv_outputs(cfg, cv);

  for (const FoldResult& fr : cv.folds) {
    std::cout << "fold " << fr.fold << ": best epoch " << fr.fit.best_epoch << ", val macro_f1 "
              << std::fixed << std::setprecision(4) << fr.fit.best_val_macro_f1 << "\n";
  }
  std::cout.unsetf(std::ios::fixed);
  std::cout << std::setprecision(6);
  print_report("OOF", cv.oof.pooled);
  if (cv.coral_violations > 0)
    std::cout << "coral rank-monotonicity violations: " << cv.coral_violations << "\n";
  if (!cv.stratification_warning.empty())
    std::cout << "warning: " << cv.stratification_warning << "\n";
  std::cout << "outputs in " << cfg.output_dir << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, int fold) {
  const auto records = load_sequences(require_sequences(cfg));
  const Encoder encoder(cfg.encoder);
  const SynonymLexicon lexicon = lexicon_or_empty(cfg);

  if (fold < 0 || fold >= cfg.folds)
    throw std::runtime_error("train: fold must be in [0, " + std::to_string(cfg.folds) + ")");
  std::string warning;
  FoldAssignment fa = stratified_folds(records, cfg.folds, cfg.seed, &warning);
  std::vector<SequenceRecord> train_set, val_set;
  for (const SequenceRecord& r : records)
    (fa.assignment.at(r.record_id) == fold ? val_set : train_set).push_back(r);

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed + static_cast<std::uint64_t>(fold);
  tc.model.seed = tc.seed;
  tc.loss.alpha = class_weights(class_distribution(train_set));

  FitResult res = fit(train_set, val_set, encoder, lexicon, tc);
  for (EpochLog& log : res.history) log.fold = fold;

  const std::string ckpt = join_path(cfg.output_dir, "train_fold" + std::to_string(fold) +
                                                          ".ckpt.json");
  save_checkpoint(ckpt, res.params, cfg.encoder, tc.seed, res.best_epoch);
  save_history(join_path(cfg.output_dir, "train_history.jsonl"), res.history);
  if (!warning.empty()) std::cout << "warning: " << warning << "\n";
  std::cout << "best epoch " << res.best_epoch << ", val macro_f1 " << std::fixed
            << std::setprecision(4) << res.best_val_macro_f1 << "\n";
  std::cout.unsetf(std::ios::fixed);
  std::cout << std::setprecision(6);
  std::cout << "wrote " << ckpt << "\n";
  return 0;
}

int cmd_predict(const RunConfig& cfg, const std::string& checkpoint_path,
                const std::string& out_path) {
  if (checkpoint_path.empty()) throw std::runtime_error("predict: --checkpoint is required");
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  if (ckpt.encoder.dim != ckpt.params.config().dim)
    throw std::runtime_error("predict: dim mismatch: checkpoint model expects d=" +
                             std::to_string(ckpt.params.config().dim) + " but encoder spec emits " +
                             std::to_string(ckpt.encoder.dim));
  const Encoder encoder(ckpt.encoder);
  const auto records = load_sequences(require_sequences(cfg));

  std::vector<Prediction> preds =
      evaluate(ckpt.params, records, encoder, cfg.train.batch_size);
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const SequenceRecord& r : records) ids.push_back(r.record_id);

  const std::string out =
      out_path.empty() ? join_path(cfg.output_dir, "predictions.jsonl") : out_path;
  save_predictions(out, ids, preds);
  std::cout << "wrote " << preds.size() << " predictions to " << out << "\n";
  return 0;
}

MetricReport joined_report(const RunConfig& cfg, const std::string& predictions_path) {
  if (predictions_path.empty()) throw std::runtime_error("--predictions is required");
  const auto rows = load_predictions(predictions_path);
  const auto records = load_sequences(require_sequences(cfg));

  std::map<std::string, int> truth;
  for (const SequenceRecord& r : records) truth[r.record_id] = r.label;

  std::set<std::string> predicted;
  std::vector<std::string> unmatched;
  std::vector<int> y_true, y_pred;
  for (const PredictionRow& row : rows) {
    predicted.insert(row.record_id);
    auto it = truth.find(row.record_id);
    if (it == truth.end()) {
      unmatched.push_back(row.record_id + " (prediction without record)");
      continue;
    }
    y_true.push_back(it->second);
    y_pred.push_back(row.label);
  }
  for (const auto& [id, _] : truth)
    if (!predicted.count(id)) unmatched.push_back(id + " (record without prediction)");

  if (!unmatched.empty()) {
    std::string msg = "unmatched record_ids:";
    const std::size_t shown = std::min<std::size_t>(unmatched.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) msg += "\n  " + unmatched[i];
    if (unmatched.size() > shown)
      msg += "\n  ... and " + std::to_string(unmatched.size() - shown) + " more";
    throw std::runtime_error(msg);
  }
  return compute_report(y_true, y_pred);
}

int cmd_eval(const RunConfig& cfg, const std::string& predictions_path) {
  MetricReport report = joined_report(cfg, predictions_path);
  save_report(join_path(cfg.output_dir, "eval_report.json"), report_to_json(report));
  save_confusion_csv(join_path(cfg.output_dir, "eval_confusion.csv"), report.confusion);
  print_report("eval", report);
  std::cout << "outputs in " << cfg.output_dir << "\n";
  return 0;
}

int cmd_report(const RunConfig& cfg, const std::string& predictions_path) {
  print_report("report", joined_report(cfg, predictions_path));
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"ordinal risk model over 5-post sequences"};
  app.require_subcommand(1);

  SharedOpts prepare_s, split_s, augment_s, cv_s, train_s, predict_s, eval_s, report_s;
  std::string raw_path, labels_path, prepare_out;
  int augment_limit = 5;
  int train_fold = 0;
  std::string checkpoint_path, predict_out, eval_preds, report_preds;

  CLI::App* prepare = app.add_subcommand("prepare", "group raw post streams into sequence records");
  add_shared(prepare, prepare_s);
  prepare->add_option("--raw", raw_path, "raw user stream file (overrides config)");
  prepare->add_option("--labels", labels_path, "group labels file (overrides config)");
  prepare->add_option("--out", prepare_out, "output sequence file (defaults to data.sequences)");

  CLI::App* split = app.add_subcommand("split", "write a stratified fold assignment");
  add_shared(split, split_s);

  CLI::App* augment = app.add_subcommand("augment", "preview augmentations (dry run)");
  add_shared(augment, augment_s);
  augment->add_option("--limit", augment_limit, "records to preview");

  CLI::App* cv = app.add_subcommand("cv", "run stratified k-fold cross-validation");
  add_shared(cv, cv_s);

  CLI::App* train = app.add_subcommand("train", "train one fold and save its checkpoint");
  add_shared(train, train_s);
  train->add_option("--fold", train_fold, "validation fold index");

  CLI::App* predict = app.add_subcommand("predict", "predict a sequence file with a checkpoint");
  add_shared(predict, predict_s);
  predict->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  predict->add_option("--out", predict_out, "output predictions file");

  CLI::App* eval = app.add_subcommand("eval", "score a predictions file against records");
  add_shared(eval, eval_s);
  eval->add_option("--predictions", eval_preds, "predictions file")->required();

  CLI::App* report = app.add_subcommand("report", "print metrics for a predictions file");
  add_shared(report, report_s);
  report->add_option("--predictions", report_preds, "predictions file")->required();

  try {
    app.parse(argc, argv);
    if (prepare->parsed()) {
      RunConfig cfg = resolve_config(prepare_s, /*sequences_is_output=*/true);
      const std::string raw = raw_path.empty() ? cfg.raw_streams_path : raw_path;
      const std::string lbl = labels_path.empty() ? cfg.labels_path : labels_path;
      const std::string out = prepare_out.empty() ? cfg.sequences_path : prepare_out;
      return cmd_prepare(raw, lbl, out);
    }
    if (split->parsed()) return cmd_split(resolve_config(split_s));
    if (augment->parsed()) return cmd_augment(resolve_config(augment_s), augment_limit);
    if (cv->parsed()) return cmd_cv(resolve_config(cv_s));
    if (train->parsed()) return cmd_train(resolve_config(train_s), train_fold);
    if (predict->parsed()) return cmd_predict(resolve_config(predict_s), checkpoint_path, predict_out);
    if (eval->parsed()) return cmd_eval(resolve_config(eval_s), eval_preds);
    if (report->parsed()) return cmd_report(resolve_config(report_s), report_preds);
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("ordseq");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace ordseq
