#include <array>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "ordseq/cli.hpp"
#include "ordseq/config.hpp"
#include "ordseq/io.hpp"
#include "synthdata.hpp"

using namespace ordseq;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;

  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = fs::temp_directory_path() / ("ordseq_cli_" + tag + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

struct CliRun {
  int code = -1;
  std::string out, err;
};

CliRun run_capture(const std::vector<std::string>& args) {
  ::unsetenv("ORDSEQ_CONFIG");
  std::ostringstream out, err;
  std::streambuf* old_out = std::cout.rdbuf(out.rdbuf());
  std::streambuf* old_err = std::cerr.rdbuf(err.rdbuf());
  CliRun r;
  try {
    r.code = run_cli(args);
  } catch (...) {
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    throw;
  }
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << content;
  return path;
}

json parse_json_file(const std::string& path) { return json::parse(read_file(path)); }

std::vector<SequenceRecord> make_sequences_file(const std::string& path, std::size_t n,
                                                std::uint64_t seed) {
  synth::SynthSpec spec;
  spec.n = n;
  spec.cluster_words = 12;
  spec.min_words = 4;
  spec.max_words = 8;
  spec.noise = 0.1;
  spec.short_seq_rate = 0.2;
  spec.seed = seed;
  const auto records = synth::make_corpus(spec);
  save_sequences(path, records);
  return records;
}

json smoke_config(const std::string& seq_path, const std::string& out_dir) {
  json j;
  j["seed"] = 11;
  j["folds"] = 5;
  j["jobs"] = 2;
  j["output_dir"] = out_dir;
  j["data"]["sequences"] = seq_path;
  j["encoder"]["dim"] = 8;
  j["model"]["transformer_layers"] = 1;
  j["model"]["attn_heads"] = 2;
  j["model"]["pool_heads"] = 2;
  j["model"]["stat_hidden"] = 8;
  j["model"]["dropout"] = 0.1;
  j["train"]["batch_size"] = 8;
  j["train"]["max_epochs"] = 2;
  j["train"]["patience"] = 2;
  j["augment"]["apply_probability"] = 0.3;
  return j;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help exits cleanly and bad commands do not") {
  CHECK(run_capture({"--help"}).code == 0);
  CHECK(run_capture({"--help"}).out.find("prepare") != std::string::npos);
  CHECK(run_capture({"bogus"}).code != 0);
  CHECK(run_capture({}).code != 0);
}

TEST_CASE("prepare groups raw streams, byte stable, inputs untouched") {
  TempDir dir("prepare");
  const synth::RawCorpus rc = synth::make_raw_corpus(6, 3);

  std::ostringstream raw;
  for (const RawUserStream& s : rc.streams) {
    json j;
    j["user_id"] = s.user_id;
    j["posts"] = s.posts;
    j["timestamps"] = s.timestamps;
    raw << j.dump() << "\n";
  }
  const std::string raw_path = write_text(dir.file("raw.jsonl"), raw.str());

  std::ostringstream lbl;
  for (const auto& [user, groups] : rc.labels) {
    for (const auto& [group, label] : groups) {
      json j;
      j["user_id"] = user;
      j["group"] = group;
      j["label"] = label;
      lbl << j.dump() << "\n";
    }
  }
  const std::string lbl_path = write_text(dir.file("labels.jsonl"), lbl.str());

  std::map<std::string, std::map<int, int>> label_map(rc.labels.begin(), rc.labels.end());
  std::vector<SequenceRecord> expected;
  for (const RawUserStream& s : rc.streams) {
    const auto recs = build_sequences(s, label_map.at(s.user_id));
    expected.insert(expected.end(), recs.begin(), recs.end());
  }
  REQUIRE(!expected.empty());

  const std::string raw_before = read_file(raw_path);
  const std::string lbl_before = read_file(lbl_path);

  const std::string seq1 = dir.file("seq1.jsonl");
  const CliRun r1 =
      run_capture({"prepare", "--raw", raw_path, "--labels", lbl_path, "--out", seq1});
  CHECK(r1.code == 0);
  CHECK(r1.out.find("wrote") != std::string::npos);

  const auto loaded = load_sequences(seq1);
  REQUIRE(loaded.size() == expected.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].record_id == expected[i].record_id);
    CHECK(loaded[i].posts == expected[i].posts);
    CHECK(loaded[i].timestamps == expected[i].timestamps);
    CHECK(loaded[i].label == expected[i].label);
    CHECK(loaded[i].n_valid == expected[i].n_valid);
  }

  const std::string seq2 = dir.file("seq2.jsonl");
  const CliRun r2 =
      run_capture({"prepare", "--raw", raw_path, "--labels", lbl_path, "--out", seq2});
  CHECK(r2.code == 0);
  CHECK(read_file(seq1) == read_file(seq2));

  CHECK(read_file(raw_path) == raw_before);
  CHECK(read_file(lbl_path) == lbl_before);
}

TEST_CASE("data errors cite the file and line") {
  TempDir dir("badline");
  const std::string seq = dir.file("seq.jsonl");
  make_sequences_file(seq, 6, 4);
  {
    std::ofstream app(seq, std::ios::app | std::ios::binary);
    app << "{oops\n";
  }
  const CliRun r = run_capture({"split", "--data", seq, "--out-dir", dir.file("out")});
  CHECK(r.code == 1);
  CHECK(r.err.find("error: ") != std::string::npos);
  CHECK(r.err.find(seq) != std::string::npos);
  CHECK(r.err.find("line 7") != std::string::npos);
}

TEST_CASE("split writes a stratified assignment and warns on rare classes") {
  TempDir dir("split");
  const std::string seq = dir.file("seq.jsonl");
  const auto records = make_sequences_file(seq, 40, 5);
  const std::string out = dir.file("out");

  const CliRun r =
      run_capture({"split", "--data", seq, "--out-dir", out, "--folds", "5", "--seed", "9"});
  CHECK(r.code == 0);
  CHECK(r.out.find("warning:") != std::string::npos);
  CHECK(r.out.find("class 3") != std::string::npos);

  const FoldAssignment fa = load_folds((fs::path(out) / "folds.json").string());
  CHECK(fa.k == 5);
  CHECK(fa.seed == 9);
  REQUIRE(fa.assignment.size() == records.size());
  for (const SequenceRecord& rec : records) CHECK(fa.assignment.count(rec.record_id) == 1);
}

TEST_CASE("cv writes the full output set and leaves inputs untouched") {
  TempDir dir("cv");
  const std::string seq = dir.file("seq.jsonl");
  make_sequences_file(seq, 40, 5);
  const std::string out = dir.file("out");
  const std::string cfg =
      write_text(dir.file("config.json"), smoke_config(seq, out).dump(2));

  const std::string seq_before = read_file(seq);
  const std::string cfg_before = read_file(cfg);

  const CliRun r = run_capture({"cv", "--config", cfg});
  CAPTURE(r.err);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("OOF") != std::string::npos);

  for (const char* name : {"folds.json", "history.jsonl", "oof_report.json", "confusion.csv",
                           "oof_predictions.jsonl", "fold0.ckpt.json", "fold1.ckpt.json",
                           "fold2.ckpt.json", "fold3.ckpt.json", "fold4.ckpt.json"}) {
    CHECK_MESSAGE(fs::exists(fs::path(out) / name), name);
  }

  const json report = parse_json_file((fs::path(out) / "oof_report.json").string());
  CHECK(report.at("oof").at("n").get<long>() == 40);
  const double macro = report.at("oof").at("macro_f1").get<double>();
  const double kappa = report.at("oof").at("qwk").get<double>();
  CHECK(macro >= 0.0);
  CHECK(macro <= 1.0);
  CHECK(kappa >= -1.0);
  CHECK(kappa <= 1.0);
  CHECK(report.at("per_fold").size() == 5);
  CHECK(report.at("coral_violations").get<long>() >= 0);
  CHECK(report.at("stratification_warning").get<std::string>().find("class 3") !=
        std::string::npos);

  std::set<std::string> ids;
  int lines = 0;
  std::ifstream preds((fs::path(out) / "oof_predictions.jsonl").string());
  std::string line;
  while (std::getline(preds, line)) {
    const json j = json::parse(line);
    ids.insert(j.at("record_id").get<std::string>());
    const int fold = j.at("fold").get<int>();
    const int y_pred = j.at("y_pred").get<int>();
    CHECK(fold >= 0);
    CHECK(fold < 5);
    CHECK(y_pred >= 0);
    CHECK(y_pred < kNumClasses);
    ++lines;
  }
  CHECK(lines == 40);
  CHECK(ids.size() == 40);  // each record predicted exactly once

  int history_lines = 0;
  std::ifstream hist((fs::path(out) / "history.jsonl").string());
  while (std::getline(hist, line)) {
    CHECK(json::parse(line).contains("epoch"));
    ++history_lines;
  }
  CHECK(history_lines >= 5);
  CHECK(history_lines <= 10);  // 5 folds, at most 2 epochs each

  const Checkpoint c0 = load_checkpoint((fs::path(out) / "fold0.ckpt.json").string());
  CHECK(c0.params.config().dim == 8);
  CHECK(c0.encoder.dim == 8);
  CHECK(c0.seed == 11);
  const Checkpoint c3 = load_checkpoint((fs::path(out) / "fold3.ckpt.json").string());
  CHECK(c3.seed == 14);  // root seed offset by the fold index

  CHECK(read_file(seq) == seq_before);
  CHECK(read_file(cfg) == cfg_before);
}

TEST_CASE("cv outputs are byte identical across runs and job counts") {
  TempDir dir("cvdet");
  const std::string seq = dir.file("seq.jsonl");
  make_sequences_file(seq, 40, 5);
  const std::string out1 = dir.file("out1");
  const std::string out2 = dir.file("out2");
  const std::string cfg1 =
      write_text(dir.file("c1.json"), smoke_config(seq, out1).dump(2));
  const std::string cfg2 =
      write_text(dir.file("c2.json"), smoke_config(seq, out2).dump(2));

  const CliRun r1 = run_capture({"cv", "--config", cfg1});
  const CliRun r2 = run_capture({"cv", "--config", cfg2, "--jobs", "1"});
  CAPTURE(r1.err);
  CAPTURE(r2.err);
  REQUIRE(r1.code == 0);
  REQUIRE(r2.code == 0);

  for (const char* name : {"oof_report.json", "history.jsonl", "folds.json", "confusion.csv",
                           "oof_predictions.jsonl", "fold0.ckpt.json", "fold4.ckpt.json"}) {
    CHECK_MESSAGE(read_file((fs::path(out1) / name).string()) ==
                      read_file((fs::path(out2) / name).string()),
                  name);
  }
}

TEST_CASE("train then predict recomposes the ensemble per row") {
  TempDir dir("predict");
  const std::string seq = dir.file("seq.jsonl");
  const auto records = make_sequences_file(seq, 40, 5);
  const std::string out = dir.file("out");
  json cj = smoke_config(seq, out);
  cj["train"]["max_epochs"] = 1;
  cj["jobs"] = 1;
  const std::string cfg = write_text(dir.file("config.json"), cj.dump(2));

  const CliRun tr = run_capture({"train", "--config", cfg, "--fold", "0"});
  CAPTURE(tr.err);
  REQUIRE(tr.code == 0);
  CHECK(tr.out.find("best epoch") != std::string::npos);
  const std::string ckpt = (fs::path(out) / "train_fold0.ckpt.json").string();
  REQUIRE(fs::exists(ckpt));
  CHECK(fs::exists(fs::path(out) / "train_history.jsonl"));

  const std::string preds_path = dir.file("preds.jsonl");
  const CliRun pr =
      run_capture({"predict", "--config", cfg, "--checkpoint", ckpt, "--out", preds_path});
  CAPTURE(pr.err);
  REQUIRE(pr.code == 0);

  const auto rows = load_predictions(preds_path);
  REQUIRE(rows.size() == records.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const PredictionRow& row = rows[i];
    CHECK(row.record_id == records[i].record_id);

    double sf = 0, sc = 0, sk = 0;
    for (int c = 0; c < kNumClasses; ++c) {
      CHECK(row.p_final[c] == 0.5 * row.p_coral[c] + 0.5 * row.p_class[c]);
      sf += row.p_final[c];
      sc += row.p_coral[c];
      sk += row.p_class[c];
    }
    CHECK(sf == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(sc == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(sk == doctest::Approx(1.0).epsilon(1e-9));

    int arg = 0;
    double best = -1.0;
    for (int c = 0; c < kNumClasses; ++c) {
      if (row.p_final[c] >= best) {
        best = row.p_final[c];
        arg = c;
      }
    }
    CHECK(row.label == arg);
  }
}

TEST_CASE("predict rejects a checkpoint whose encoder disagrees with the model") {
  TempDir dir("dimmismatch");
  const std::string seq = dir.file("seq.jsonl");
  make_sequences_file(seq, 6, 4);

  ModelConfig mc;
  mc.dim = 8;
  mc.transformer_layers = 1;
  mc.attn_heads = 2;
  mc.pool_heads = 2;
  mc.stat_hidden = 8;
  mc.dropout = 0.0;
  mc.seed = 1;
  EncoderSpec enc;
  enc.dim = 8;
  const std::string good = dir.file("good.ckpt.json");
  save_checkpoint(good, ModelParams(mc), enc, 1, 1);

  json j = parse_json_file(good);
  j["encoder"]["dim"] = 16;
  const std::string bad = write_text(dir.file("bad.ckpt.json"), j.dump());

  const CliRun r = run_capture({"predict", "--checkpoint", bad, "--data", seq});
  CHECK(r.code == 1);
  CHECK(r.err.find("dim mismatch") != std::string::npos);
  CHECK(r.err.find("d=8") != std::string::npos);
  CHECK(r.err.find("16") != std::string::npos);
}

TEST_CASE("eval scores a perfect predictions file as perfect") {
  TempDir dir("eval");
  const std::string seq = dir.file("seq.jsonl");
  const auto records = make_sequences_file(seq, 30, 6);

  std::vector<std::string> ids;
  std::vector<Prediction> preds;
  std::array<long, kNumClasses> counts{};
  for (const SequenceRecord& rec : records) {
    Prediction p;
    p.label = rec.label;
    p.p_final[rec.label] = 1.0;
    p.p_coral[rec.label] = 1.0;
    p.p_class[rec.label] = 1.0;
    ids.push_back(rec.record_id);
    preds.push_back(p);
    ++counts[rec.label];
  }
  const std::string preds_path = dir.file("preds.jsonl");
  save_predictions(preds_path, ids, preds);

  const std::string out = dir.file("out");
  const CliRun r =
      run_capture({"eval", "--data", seq, "--predictions", preds_path, "--out-dir", out});
  CAPTURE(r.err);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("eval") != std::string::npos);

  const json report = parse_json_file((fs::path(out) / "eval_report.json").string());
  CHECK(report.at("n").get<long>() == 30);
  CHECK(report.at("macro_f1").get<double>() == doctest::Approx(1.0));
  CHECK(report.at("mae").get<double>() == doctest::Approx(0.0));
  CHECK(report.at("qwk").get<double>() == doctest::Approx(1.0));
  for (int i = 0; i < kNumClasses; ++i) {
    for (int j2 = 0; j2 < kNumClasses; ++j2) {
      CHECK(report.at("confusion")[i][j2].get<long>() == (i == j2 ? counts[i] : 0));
    }
  }
  CHECK(fs::exists(fs::path(out) / "eval_confusion.csv"));

  // report prints the same numbers without writing anything
  const CliRun rep =
      run_capture({"report", "--data", seq, "--predictions", preds_path, "--out-dir",
                   dir.file("report_out")});
  CHECK(rep.code == 0);
  CHECK(rep.out.find("report") != std::string::npos);
  CHECK_FALSE(fs::exists(dir.file("report_out")));
}

TEST_CASE("eval names unmatched ids in both directions") {
  TempDir dir("unmatched");
  SequenceRecord b, c;
  b.record_id = "b:0";
  b.posts = {"one two", "three four", "", "", ""};
  b.timestamps = {10, 20, 20, 20, 20};
  b.label = 1;
  b.n_valid = 2;
  c = b;
  c.record_id = "c:0";
  const std::string seq = dir.file("seq.jsonl");
  save_sequences(seq, {b, c});

  std::vector<Prediction> preds(2);
  preds[0].p_final[0] = preds[0].p_coral[0] = preds[0].p_class[0] = 1.0;
  preds[1] = preds[0];
  const std::string preds_path = dir.file("preds.jsonl");
  save_predictions(preds_path, {"a:0", "b:0"}, preds);

  const CliRun r = run_capture(
      {"eval", "--data", seq, "--predictions", preds_path, "--out-dir", dir.file("out")});
  CHECK(r.code == 1);
  CHECK(r.err.find("unmatched record_ids") != std::string::npos);
  CHECK(r.err.find("a:0 (prediction without record)") != std::string::npos);
  CHECK(r.err.find("c:0 (record without prediction)") != std::string::npos);
}

TEST_CASE("config problems come back as one list naming the file") {
  TempDir dir("cfgerr");
  json j;
  j["extre"] = 1;
  j["model"]["dim"] = 32;
  j["folds"] = 1;
  const std::string cfg = write_text(dir.file("config.json"), j.dump());

  const CliRun r = run_capture({"split", "--config", cfg});
  CHECK(r.code == 1);
  CHECK(r.err.find(cfg) != std::string::npos);
  CHECK(r.err.find("problem(s)") != std::string::npos);
  CHECK(r.err.find("unknown key \"extre\"") != std::string::npos);
  CHECK(r.err.find("unknown key \"model.dim\"") != std::string::npos);
  CHECK(r.err.find("folds must be >= 2") != std::string::npos);
}

TEST_CASE("flags override the config file before validation") {
  TempDir dir("override");
  const std::string seq = dir.file("seq.jsonl");
  make_sequences_file(seq, 12, 8);

  json j;
  j["seed"] = 5;
  j["folds"] = 4;
  j["data"]["sequences"] = "/nonexistent/never_checked.jsonl";
  j["output_dir"] = dir.file("dirA");
  const std::string cfg = write_text(dir.file("config.json"), j.dump());

  const CliRun r = run_capture({"split", "--config", cfg, "--data", seq, "--folds", "3",
                                "--out-dir", dir.file("dirB")});
  CAPTURE(r.err);
  REQUIRE(r.code == 0);
  CHECK_FALSE(fs::exists(dir.file("dirA")));

  const FoldAssignment fa = load_folds((fs::path(dir.file("dirB")) / "folds.json").string());
  CHECK(fa.k == 3);
  CHECK(fa.seed == 5);  // seed still comes from the file
}

TEST_CASE("commands that need sequences say how to provide them") {
  const CliRun r = run_capture({"cv"});
  CHECK(r.code == 1);
  CHECK(r.err.find("no sequence file") != std::string::npos);
}

TEST_CASE("augment preview is a dry run") {
  TempDir dir("augment");
  const std::string seq = dir.file("seq.jsonl");
  make_sequences_file(seq, 6, 4);

  json j;
  j["data"]["sequences"] = seq;
  j["augment"]["apply_probability"] = 1.0;
  j["augment"]["deletion_rate"] = 0.3;
  j["augment"]["replacement_rate"] = 0.3;
  const std::string cfg = write_text(dir.file("config.json"), j.dump());
  const std::string before = read_file(seq);

  const CliRun r = run_capture({"augment", "--config", cfg, "--limit", "2"});
  CAPTURE(r.err);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("previewed 2 of 6 records (dry run)") != std::string::npos);
  CHECK(r.out.find("\n  - ") != std::string::npos);
  CHECK(r.out.find("\n  + ") != std::string::npos);
  CHECK(read_file(seq) == before);
}

}  // TEST_SUITE("cli")
