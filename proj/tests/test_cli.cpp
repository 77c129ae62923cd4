#include "doctest.h"

#include "distillkit/checkpoint.hpp"
#include "distillkit/cli.hpp"
#include "distillkit/distill.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

fs::path root() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "distillkit_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "distillkit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return dk::run_cli(static_cast<int>(argv.size()), argv.data());
}

dk::ExperimentConfig base_config() {
  return dk::ExperimentConfig::parse(
      "data_dir=" + (root() / "data").string() +
      "\nd_model=32\nn_heads=4\nffn_dim=64\ninit_std=0.1\nlr=3e-3\nmax_epochs=3\nmax_len=8\n");
}

const fs::path& corpus() {
  static const fs::path dir = [] {
    fs::path d = root() / "data";
    REQUIRE(run({"gen-corpus", "--out", d.string(), "--seed", "3", "--set", "n_train=1000", "--set", "n_val=100",
                 "--set", "n_test=100", "--set", "min_doc_len=6", "--set", "max_doc_len=10"}) == 0);
    return d;
  }();
  return dir;
}

const fs::path& teacher() {
  static const fs::path ckpt = [] {
    corpus();
    auto c = base_config();
    c.set("size=2-2");
    const dk::RougeReport r = dk::cmd_train_teacher(c, root() / "teacher");
    MESSAGE("teacher val rouge2 ", r.rouge2.f1);
    return root() / "teacher" / "model.ckpt";
  }();
  return ckpt;
}

}  // namespace

TEST_CASE("config parsing") {
  auto c = dk::ExperimentConfig::parse("# comment\n\nlr = 0.5\nmethod=kd\nlr=0.25\nphi=1, 3\n");
  CHECK(c.get_double("lr", 0) == 0.25);
  CHECK(c.get("method", "") == "kd");
  CHECK(c.get_int_list("phi", {}) == std::vector<int>{1, 3});
  CHECK(c.get_int("batch_size", 7) == 7);
  c.set(std::string_view("freeze_encoder=yes"));
  CHECK(c.get_bool("freeze_encoder", false));
  CHECK(c.dump() == "freeze_encoder=yes\nlr=0.25\nmethod=kd\nphi=1, 3\n");
  CHECK(dk::ExperimentConfig::parse(c.dump()).values() == c.values());

  CHECK_THROWS_WITH_AS(dk::ExperimentConfig::parse("lr=1\nbogus=2\n"), doctest::Contains("line 2"), std::invalid_argument);
  CHECK_THROWS_AS(c.set(std::string_view("no equals sign")), std::invalid_argument);
  c.set("lr", "fast");
  CHECK_THROWS_AS(c.get_double("lr", 0), std::invalid_argument);
  c.set("freeze_encoder", "maybe");
  CHECK_THROWS_AS(c.get_bool("freeze_encoder", false), std::invalid_argument);
  CHECK_THROWS_AS(c.require("teacher"), std::invalid_argument);
}

TEST_CASE("gen-corpus writes splits and echoes its config") {
  const fs::path d = corpus();
  CHECK(lines(slurp(d / "train.jsonl")).size() == 1000);
  CHECK(lines(slurp(d / "val.jsonl")).size() == 100);
  CHECK(lines(slurp(d / "test.jsonl")).size() == 100);
  CHECK(fs::exists(d / "vocab.txt"));
  const std::string cfg = slurp(d / "config.txt");
  CHECK(cfg.find("seed=3\n") != std::string::npos);
  CHECK(cfg.find("n_train=1000\n") != std::string::npos);
}

TEST_CASE("argument errors exit nonzero") {
  CHECK(run({}) != 0);
  CHECK(run({"frobnicate", "--out", (root() / "x").string()}) != 0);
  CHECK(run({"gen-corpus"}) != 0);
  CHECK(run({"gen-corpus", "--out", (root() / "x").string(), "--set", "bogus=1"}) != 0);
  CHECK(run({"gen-corpus", "--out", (root() / "x").string(), "--set", "task=poetry"}) != 0);
  CHECK(run({"gen-corpus", "--out", (root() / "x").string(), "--config", (root() / "missing.cfg").string()}) != 0);
  CHECK(run({"train-teacher", "--out", (root() / "x").string(), "--set", "data_dir=" + (root() / "none").string()}) != 0);
}

TEST_CASE("train-teacher produces a loadable, reproducible teacher") {
  const fs::path ckpt = teacher();
  auto model = dk::load_model<float>(ckpt);
  CHECK(model.config.enc_layers == 2);
  CHECK(model.config.dec_layers == 2);
  CHECK(fs::exists(ckpt.parent_path() / "vocab.txt"));
  CHECK(fs::exists(ckpt.parent_path() / "history.tsv"));

  std::ifstream rouge(ckpt.parent_path() / "rouge.json");
  std::string record;
  std::getline(rouge, record);
  const double r2 = std::stod(record.substr(record.find("\"rouge2\":") + 9));
  CHECK(r2 > 0.9);

  auto c = base_config();
  c.set("size=2-2");
  dk::cmd_train_teacher(c, root() / "teacher_again");
  CHECK(slurp(root() / "teacher_again" / "model.ckpt") == slurp(ckpt));
  // the last column is wall-clock time
  auto strip_time = [](const std::string& log) {
    std::string out;
    for (const auto& l : lines(log)) out += l.substr(0, l.rfind('\t')) + "\n";
    return out;
  };
  const std::string h1 = slurp(ckpt.parent_path() / "history.tsv"), h2 = slurp(root() / "teacher_again" / "history.tsv");
  CHECK(lines(h1).size() == 30);
  CHECK(strip_time(h1) == strip_time(h2));
}

TEST_CASE("distill runs each method into one results table") {
  const fs::path table = root() / "results.tsv";
  fs::remove(table);
  for (const char* method : {"sft", "kd", "pl"}) {
    auto c = base_config();
    c.set("teacher", teacher().string());
    c.set("student", "2-1");
    c.set("method", method);
    c.set("max_epochs", "1");
    c.set("results", table.string());
    const dk::RougeReport r = dk::cmd_distill(c, root() / (std::string("student_") + method));
    CHECK(r.n_examples == 100);
    auto student = dk::load_model<float>(root() / (std::string("student_") + method) / "model.ckpt");
    CHECK(student.config.dec_layers == 1);
    CHECK(dk::read_checkpoint(root() / (std::string("student_") + method) / "model.ckpt").metadata.at("method") == method);
  }
  auto rows = lines(slurp(table));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] + "\n" == dk::kResultsHeader);
  CHECK(rows[1].rfind("sft\t2-1\tmax_spaced\t", 0) == 0);
  CHECK(rows[2].rfind("kd\t2-1\t", 0) == 0);
  CHECK(rows[3].rfind("pl\t2-1\t", 0) == 0);
}

TEST_CASE("distill at teacher size continues from a full copy") {
  auto c = base_config();
  c.set("teacher", teacher().string());
  c.set("max_epochs", "1");
  c.set("lr", "1e-12");
  c.set("evals_per_epoch", "1");
  dk::cmd_distill(c, root() / "student_full");
  auto t = dk::load_model<float>(teacher());
  auto s = dk::load_model<float>(root() / "student_full" / "model.ckpt");
  CHECK(s.config == t.config);
  // frozen encoder and embeddings are untouched; the rest moves by at most a step
  CHECK(s.token_embedding.value() == t.token_embedding.value());
  CHECK(s.encoder_layers[1].fc1.weight.value() == t.encoder_layers[1].fc1.weight.value());
  CHECK((s.decoder_layers[1].fc1.weight.value() - t.decoder_layers[1].fc1.weight.value()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("distill rejects bad setups") {
  auto c = base_config();
  c.set("method", "kd");
  CHECK_THROWS_AS(dk::cmd_distill(c, root() / "bad"), std::invalid_argument);
  c.set("teacher", (root() / "nope.ckpt").string());
  CHECK_THROWS_AS(dk::cmd_distill(c, root() / "bad"), std::runtime_error);
  c.set("teacher", teacher().string());
  c.set("student", "3-1");
  CHECK_THROWS_WITH_AS(dk::cmd_distill(c, root() / "bad"), doctest::Contains("exceeds"), std::invalid_argument);
  c.set("student", "2-1");
  c.set("method", "distil");
  CHECK_THROWS_AS(dk::cmd_distill(c, root() / "bad"), std::invalid_argument);
  CHECK(run({"distill", "--out", (root() / "bad").string(), "--set", "data_dir=" + corpus().string(), "--set",
             "method=kd"}) == 1);
}

TEST_CASE("pseudo writes one deterministic label per training example") {
  auto c = base_config();
  c.set("teacher", teacher().string());
  c.set("teacher_id", "t2x2");
  c.set("threads", "3");
  dk::cmd_pseudo(c, root() / "pl_a");
  c.set("threads", "1");
  dk::cmd_pseudo(c, root() / "pl_b");
  const std::string a = slurp(root() / "pl_a" / "pseudo_labels.jsonl");
  CHECK(lines(a).size() == 1000);
  CHECK(a == slurp(root() / "pl_b" / "pseudo_labels.jsonl"));

  auto vocab = std::make_shared<const dk::Vocabulary>(dk::Vocabulary::load(corpus() / "vocab.txt"));
  auto labels = dk::load_pseudolabels(root() / "pl_a" / "pseudo_labels.jsonl", vocab);
  CHECK(labels.size() == 1000);
  CHECK(labels.teacher_id == "t2x2");
  auto as_pairs = dk::load_jsonl(root() / "pl_a" / "pseudo_labels.jsonl", vocab);
  CHECK(as_pairs.size() == 1000);
  CHECK(as_pairs.records[0].origin == dk::Origin::pseudo_label("t2x2"));
}

TEST_CASE("eval scores a checkpoint") {
  auto c = base_config();
  c.set("model", teacher().string());
  c.set("min_len", "1");
  c.set("teacher", teacher().string());
  dk::cmd_pseudo(c, root() / "pl_eval");

  c.set("eval_data", (root() / "pl_eval" / "pseudo_labels.jsonl").string());
  const dk::RougeReport echo = dk::cmd_eval(c, root() / "eval_echo");
  CHECK(echo.rouge1.f1 == 1.0);
  CHECK(echo.rouge2.f1 == 1.0);
  CHECK(echo.rougeL.f1 == 1.0);

  auto c2 = base_config();
  c2.set("model", teacher().string());
  const dk::RougeReport r = dk::cmd_eval(c2, root() / "eval_a");
  dk::cmd_eval(c2, root() / "eval_b");
  CHECK(slurp(root() / "eval_a" / "rouge.json") == slurp(root() / "eval_b" / "rouge.json"));

  auto model = dk::load_model<float>(teacher());
  auto vocab = std::make_shared<const dk::Vocabulary>(dk::Vocabulary::load(corpus() / "vocab.txt"));
  dk::BeamParams beam;
  beam.max_len = 8;
  const dk::RougeReport direct = dk::score_corpus(model, dk::load_jsonl(corpus() / "test.jsonl", vocab), beam);
  CHECK(direct.to_record() == r.to_record());
}

TEST_CASE("bench writes timings, both fits and a speedup table") {
  const fs::path out = root() / "bench";
  REQUIRE(run({"bench", "--out", out.string(), "--seed", "1", "--set", "bench_count=12", "--set", "bench_d_model=16",
               "--set", "bench_ffn=32", "--set", "bench_reps=3", "--set", "bench_baseline=4-4", "--set",
               "bench_compare=4-2,4-1"}) == 0);
  CHECK(lines(slurp(out / "timings.csv")).size() == 13);
  const std::string reg = slurp(out / "regression.txt");
  CHECK(reg.find("response=median_ms") != std::string::npos);
  CHECK(reg.find("response=log_median_ms") != std::string::npos);
  CHECK(lines(slurp(out / "speedup.tsv")).size() == 3);
  CHECK(run({"bench", "--out", out.string(), "--set", "bench_mode=sideways"}) == 1);
}
