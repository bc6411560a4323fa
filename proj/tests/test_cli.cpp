#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "commands.hpp"
#include "mpre/cohort.hpp"
#include "test_util.hpp"

using namespace mpre;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> quick(const std::string& command, const std::filesystem::path& out) {
  return {command, "--synth", "default", "--patients", "40", "--folds", "2", "--epochs", "2",
          "--symlet", "3", "--out", out.string()};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::size_t count_lines(const std::string& text) { return std::count(text.begin(), text.end(), '\n'); }

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(testutil::read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("help and parse errors") {
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"train", "--bogus"}).code == 1);
  CHECK(run({}).code == 1);
  CHECK(run({"train", "--synth", "default", "--config", "A9"}).code == 1);
  CHECK(run({"train", "--synth", "default", "--dilations", "0,1"}).code == 1);
}

TEST_CASE("train writes checkpoints, logs, metrics and a manifest, reproducibly") {
  testutil::TempDir a("cli_a"), b("cli_b");
  const auto first = run(quick("train", a.path()));
  REQUIRE(first.code == 0);
  const auto second = run(quick("train", b.path()));
  REQUIRE(second.code == 0);
  for (const char* name : {"metrics.csv", "fold_00.ckpt", "fold_01.ckpt", "fold_00_epochs.csv", "summary.txt"}) {
    INFO(name);
    REQUIRE(std::filesystem::exists(a / name));
    CHECK(testutil::read_text(a / name) == testutil::read_text(b / name));
  }
  const std::string manifest = testutil::read_text(a / "manifest.txt");
  CHECK(first.out.rfind(manifest, 0) == 0);
  CHECK(manifest.find("config = \"A7\"") != std::string::npos);
  CHECK(manifest.find("epochs = 2") != std::string::npos);
  CHECK(count_lines(testutil::read_text(a / "fold_00_epochs.csv")) == 3);

  const auto metrics = read_csv(a / "metrics.csv");
  CHECK(metrics.front() == std::vector<std::string>{"fold", "class", "auroc", "auprc"});
  CHECK(metrics.back()[0] == "mean");

  testutil::TempDir c("cli_c");
  REQUIRE(run(concat(quick("train", c.path()), {"--config", "A1"})).code == 0);
  CHECK(testutil::read_text(c / "manifest.txt").find("config = \"A1\"") != std::string::npos);
}

TEST_CASE("a manifest reruns to identical outputs and flags override it") {
  testutil::TempDir a("cli_m1"), b("cli_m2");
  REQUIRE(run(quick("train", a.path())).code == 0);
  std::string manifest = testutil::read_text(a / "manifest.txt");
  const auto pos = manifest.find("out = ");
  manifest = manifest.substr(0, pos) + "out = \"" + b.path().string() + "\"" +
             manifest.substr(manifest.find('\n', pos));
  testutil::write_text(b / "run.conf", manifest);
  REQUIRE(run({"train", "--config-file", (b / "run.conf").string()}).code == 0);
  CHECK(testutil::read_text(a / "metrics.csv") == testutil::read_text(b / "metrics.csv"));
  CHECK(testutil::read_text(a / "fold_01.ckpt") == testutil::read_text(b / "fold_01.ckpt"));

  testutil::TempDir c("cli_m3");
  REQUIRE(run({"train", "--config-file", (b / "run.conf").string(), "--epochs", "1", "--out", c.path().string()})
              .code == 0);
  CHECK(testutil::read_text(c / "manifest.txt").find("epochs = 1") != std::string::npos);
  CHECK(count_lines(testutil::read_text(c / "fold_00_epochs.csv")) == 2);
}

TEST_CASE("data and numerical errors map to exit codes") {
  testutil::TempDir dir("cli_err");
  REQUIRE(run({"synth", "--synth", "default", "--patients", "20", "--out", dir.path().string()}).code == 0);
  std::filesystem::remove(dir / "labels.csv");
  const auto missing = run({"train", "--visits", (dir / "visits.csv").string(), "--static",
                            (dir / "static.csv").string(), "--labels", (dir / "labels.csv").string(), "--out",
                            (dir / "o").string()});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("labels.csv") != std::string::npos);
  CHECK(count_lines(missing.err) == 1);

  CHECK(run({"train", "--out", (dir / "o").string()}).code == 1);

  const auto blown = run(concat(quick("train", dir / "nan"), {"--lr", "1.7e308"}));
  CHECK(blown.code == 3);
  CHECK(count_lines(blown.err) == 1);
}

TEST_CASE("eval scores a cohort with a checkpoint") {
  testutil::TempDir dir("cli_eval");
  REQUIRE(run(quick("train", dir / "train")).code == 0);
  const std::string ckpt = (dir / "train" / "fold_00.ckpt").string();
  auto eval_args = concat(quick("eval", dir / "e1"), {"--checkpoint", ckpt});
  REQUIRE(run(eval_args).code == 0);
  eval_args = concat(quick("eval", dir / "e2"), {"--checkpoint", ckpt});
  REQUIRE(run(eval_args).code == 0);
  CHECK(testutil::read_text(dir / "e1" / "scores.csv") == testutil::read_text(dir / "e2" / "scores.csv"));

  const auto scores = read_csv(dir / "e1" / "scores.csv");
  REQUIRE(scores.size() == 41);
  for (std::size_t i = 1; i < scores.size(); ++i) {
    double total = 0.0;
    for (std::size_t j = 2; j < scores[i].size(); ++j) total += std::stod(scores[i][j]);
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
  const auto metrics = read_csv(dir / "e1" / "metrics.csv");
  CHECK(std::isfinite(std::stod(metrics.back()[2])));

  // Corrupt magic.
  std::string bytes = testutil::read_text(ckpt);
  bytes[1] = '?';
  testutil::write_text(dir / "bad.ckpt", bytes);
  const auto bad = run(concat(quick("eval", dir / "e3"), {"--checkpoint", (dir / "bad.ckpt").string()}));
  CHECK(bad.code == 1);
  CHECK(bad.err.find("unrecognized checkpoint") != std::string::npos);

  // Data with a different number of dynamic features.
  data::Cohort other = data::synth_generate([] {
    data::SynthSpec s = data::synth_preset("default");
    s.patients = 12;
    s.dynamic_features = 2;
    return s;
  }());
  const auto paths = data::CohortPaths::in_directory(dir / "other");
  std::filesystem::create_directories(dir / "other");
  data::write_cohort(other, paths);
  const auto mismatch = run({"eval", "--checkpoint", ckpt, "--visits", paths.visits.string(), "--static",
                             paths.statics.string(), "--labels", paths.labels.string(), "--out",
                             (dir / "e4").string()});
  CHECK(mismatch.code == 1);
  CHECK(mismatch.err.find("(5, 3, 3)") != std::string::npos);
  CHECK(mismatch.err.find("(2, 3, 3)") != std::string::npos);
}

TEST_CASE("decompose dumps one row per coefficient") {
  testutil::TempDir dir("cli_dec");
  data::Cohort flat;
  flat.dynamic_names = {"level", "wiggle"};
  flat.static_names = {"s"};
  flat.classes = 2;
  for (int i = 0; i < 12; ++i) {
    Tensor v({10, 2});
    for (std::size_t t = 0; t < 10; ++t) {
      v.at(t, 0) = 3.0 + i;
      v.at(t, 1) = t % 2 ? 1.0 : -1.0;
    }
    flat.patients.push_back({"q" + std::to_string(i), v, {0.0}, static_cast<std::size_t>(i % 2)});
  }
  const auto paths = data::CohortPaths::in_directory(dir.path());
  data::write_cohort(flat, paths);
  auto args = [&](const std::string& k, const std::string& feature) {
    return std::vector<std::string>{"decompose", "--visits", paths.visits.string(), "--static", paths.statics.string(),
                                    "--labels", paths.labels.string(), "--symlet", k, "--feature", feature,
                                    "--out", (dir / "out").string()};
  };
  REQUIRE(run(args("4", "level")).code == 0);
  const auto rows = read_csv(dir / "out" / "decompose.csv");
  // m = floor((10 + 7) / 2) = 8 per patient.
  CHECK(rows.size() == 1 + 12 * 8);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(std::abs(std::stod(rows[i][4])) <= 1e-12);
  CHECK(run(args("21", "level")).code == 1);
  CHECK(run(args("1", "level")).code == 1);
  CHECK(run(args("4", "missing")).code == 1);

  // A two-class checkpoint over the same layout for attention inspection.
  REQUIRE(run({"train", "--visits", paths.visits.string(), "--static", paths.statics.string(), "--labels",
               paths.labels.string(), "--folds", "2", "--epochs", "1", "--symlet", "2", "--out",
               (dir / "model").string()})
              .code == 0);
  const auto attention = run({"inspect-attention", "--checkpoint", (dir / "model" / "fold_00.ckpt").string(),
                              "--visits", paths.visits.string(), "--static", paths.statics.string(), "--labels",
                              paths.labels.string(), "--feature", "level", "--out", (dir / "att").string()});
  REQUIRE(attention.code == 0);
  const auto att = read_csv(dir / "att" / "attention.csv");
  CHECK(att.front() == std::vector<std::string>{"patient_id", "feature", "position", "delta", "alpha"});
  std::map<std::string, std::vector<double>> alphas;
  for (std::size_t i = 1; i < att.size(); ++i) alphas[att[i][0]].push_back(std::stod(att[i][4]));
  CHECK(alphas.size() == 12);
  for (const auto& [id, a] : alphas) {
    double total = 0.0;
    for (double x : a) {
      total += x;
      // Constant visits give constant variation, hence uniform attention.
      CHECK(x == doctest::Approx(1.0 / static_cast<double>(a.size())).epsilon(1e-12));
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }

  REQUIRE(run({"train", "--visits", paths.visits.string(), "--static", paths.statics.string(), "--labels",
               paths.labels.string(), "--folds", "2", "--epochs", "1", "--symlet", "2", "--config", "A6", "--out",
               (dir / "nofodam").string()})
              .code == 0);
  const auto off = run({"inspect-attention", "--checkpoint", (dir / "nofodam" / "fold_00.ckpt").string(), "--visits",
                        paths.visits.string(), "--static", paths.statics.string(), "--labels", paths.labels.string(),
                        "--feature", "level", "--out", (dir / "att2").string()});
  CHECK(off.code == 1);
  CHECK(off.err.find("FODAM disabled") != std::string::npos);
}

TEST_CASE("correlate and synth") {
  testutil::TempDir dir("cli_corr");
  REQUIRE(run({"synth", "--synth", "correlation", "--patients", "30", "--seed", "4", "--out", dir.path().string()})
              .code == 0);
  const data::Cohort c = data::load_cohort(data::CohortPaths::in_directory(dir.path()));
  CHECK(c.patients.size() == 30);
  CHECK(c.classes == 2);

  const auto corr = run({"correlate", "--synth", "default", "--patients", "30", "--symlet", "2", "--out",
                         (dir / "corr").string()});
  REQUIRE(corr.code == 0);
  const auto rows = read_csv(dir / "corr" / "correlation.csv");
  CHECK(rows.size() == 6);
  CHECK(rows[0][0] == "rank");
  CHECK(run({"correlate", "--synth", "default", "--symlet", "30", "--out", (dir / "x").string()}).code == 1);
}
