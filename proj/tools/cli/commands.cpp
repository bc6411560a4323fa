#include "commands.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mpre/checkpoint.hpp"
#include "mpre/error.hpp"
#include "mpre/fodam.hpp"
#include "mpre/metrics.hpp"
#include "mpre/wavelet.hpp"

namespace mpre::cli {

namespace fs = std::filesystem;

namespace {

// Shortest representation that parses back to the same double.
std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::array<std::size_t, 3> parse_dilations(const std::string& text) {
  std::array<std::size_t, 3> out{};
  std::size_t count = 0, start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    std::string_view cell(text.data() + start, comma - start);
    while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
    while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (count >= 3 || cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
      throw ConfigError("--dilations expects three comma-separated integers, got '" + text + "'");
    }
    out[count++] = v;
    start = comma + 1;
  }
  if (count != 3) throw ConfigError("--dilations expects three comma-separated integers, got '" + text + "'");
  return out;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void write_manifest(const RunConfig& config, std::ostream& log) {
  const std::string text = config.manifest();
  log << text;
  auto out = open_output(fs::path(config.out) / "manifest.txt");
  out << text;
}

std::string fold_name(std::size_t fold) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "fold_%02zu", fold);
  return buf;
}

data::Cohort padded_cohort(const RunConfig& config, std::size_t t_max, std::size_t classes = 0) {
  return data::pad_truncate(load_raw_cohort(config, classes), t_max);
}

void check_compatible(const checkpoint::Checkpoint& ckpt, const data::Cohort& cohort) {
  const auto& c = ckpt.config;
  if (cohort.dynamic_count() != c.dynamic_features || cohort.static_count() != c.static_features ||
      cohort.classes != c.classes) {
    throw ConfigError("checkpoint expects (dynamic, static, classes) = (" + std::to_string(c.dynamic_features) +
                      ", " + std::to_string(c.static_features) + ", " + std::to_string(c.classes) +
                      "), data has (" + std::to_string(cohort.dynamic_count()) + ", " +
                      std::to_string(cohort.static_count()) + ", " + std::to_string(cohort.classes) + ")");
  }
}

void write_metric_rows(std::ostream& out, const std::string& fold, const metrics::MacroResult& auroc,
                       const metrics::MacroResult& auprc) {
  for (std::size_t j = 0; j < auroc.per_class.size(); ++j) {
    const bool skipped = std::isnan(auroc.per_class[j]);
    out << fold << ',' << j << ',' << (skipped ? "skipped" : num(auroc.per_class[j])) << ','
        << (skipped ? "skipped" : num(auprc.per_class[j])) << '\n';
  }
  out << fold << ",macro," << num(auroc.value) << ',' << num(auprc.value) << '\n';
}

}  // namespace

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig tc;
  tc.lr = lr;
  tc.batch = batch;
  tc.epochs = epochs;
  tc.seed = seed;
  tc.ablation = model::AblationConfig::preset(ablation);
  tc.symlet_order = symlet;
  tc.kernel_width = kernel_width;
  tc.dilations = parse_dilations(dilations);
  tc.validate();
  return tc;
}

std::string RunConfig::manifest() const {
  std::ostringstream text;
  auto str = [&text](const char* key, const std::string& v) {
    if (!v.empty()) text << key << " = \"" << v << "\"\n";
  };
  text << "# mpre " << command << "\n";
  str("visits", visits);
  str("static", statics);
  str("labels", labels);
  str("synth", synth);
  text << "patients = " << patients << "\n";
  str("out", out);
  text << "seed = " << seed << "\n";
  text << "symlet = " << symlet << "\n";
  text << "kernel-width = " << kernel_width << "\n";
  text << "dilations = \"" << dilations << "\"\n";
  text << "tmax = " << tmax << "\n";
  text << "lr = " << num(lr) << "\n";
  text << "batch = " << batch << "\n";
  text << "epochs = " << epochs << "\n";
  text << "folds = " << folds << "\n";
  text << "config = \"" << ablation << "\"\n";
  text << "parallel-folds = " << (parallel_folds ? "true" : "false") << "\n";
  str("checkpoint", checkpoint);
  str("feature", feature);
  return text.str();
}

data::Cohort load_raw_cohort(const RunConfig& config, std::size_t classes) {
  if (!config.synth.empty()) {
    data::SynthSpec spec = data::synth_preset(config.synth);
    spec.seed = config.seed;
    if (config.patients > 0) spec.patients = config.patients;
    data::Cohort cohort = data::synth_generate(spec);
    if (classes != 0 && classes != cohort.classes) cohort.classes = std::max(classes, cohort.classes);
    return cohort;
  }
  if (config.visits.empty() || config.statics.empty() || config.labels.empty()) {
    throw ConfigError("data source required: --visits, --static and --labels, or --synth <preset>");
  }
  for (const std::string& p : {config.visits, config.statics, config.labels}) {
    if (!fs::exists(p)) throw DataError("missing input file " + p);
  }
  return data::load_cohort({config.visits, config.statics, config.labels}, classes);
}

int cmd_train(const RunConfig& config, std::ostream& log) {
  const train::TrainConfig tc = config.train_config();
  write_manifest(config, log);
  const data::Cohort cohort = padded_cohort(config, config.tmax);
  const auto cv = train::cross_validate(cohort, config.folds, tc, config.parallel_folds);

  const fs::path out_dir(config.out);
  auto metrics_csv = open_output(out_dir / "metrics.csv");
  metrics_csv << "fold,class,auroc,auprc\n";
  for (const auto& fold : cv.folds) {
    const std::string name = fold_name(fold.fold);
    auto epochs = open_output(out_dir / (name + "_epochs.csv"));
    epochs << "epoch,mean_loss\n";
    for (std::size_t e = 0; e < fold.trained.epoch_loss.size(); ++e) {
      epochs << e + 1 << ',' << num(fold.trained.epoch_loss[e]) << '\n';
    }
    checkpoint::save(out_dir / (name + ".ckpt"), {fold.trained.config, fold.trained.params, fold.stats});
    write_metric_rows(metrics_csv, std::to_string(fold.fold), fold.auroc, fold.auprc);
  }
  metrics_csv << "mean,macro," << num(cv.mean_auroc) << ',' << num(cv.mean_auprc) << '\n';

  std::ostringstream summary;
  summary << "config " << tc.ablation.name() << ", sym" << tc.symlet_order << ", " << config.folds
          << "-fold cross-validation, " << cohort.patients.size() << " patients\n";
  summary << "fold  auroc     auprc\n";
  for (const auto& fold : cv.folds) {
    char line[96];
    std::snprintf(line, sizeof(line), "%4zu  %.6f  %.6f\n", fold.fold, fold.auroc.value, fold.auprc.value);
    summary << line;
  }
  char line[96];
  std::snprintf(line, sizeof(line), "mean  %.6f  %.6f\n", cv.mean_auroc, cv.mean_auprc);
  summary << line;
  open_output(out_dir / "summary.txt") << summary.str();
  log << summary.str();
  return kOk;
}

int cmd_eval(const RunConfig& config, std::ostream& log) {
  if (config.checkpoint.empty()) throw ConfigError("eval requires --checkpoint");
  write_manifest(config, log);
  const checkpoint::Checkpoint ckpt = checkpoint::load(config.checkpoint);
  data::Cohort cohort = padded_cohort(config, ckpt.config.t_max, ckpt.config.classes);
  check_compatible(ckpt, cohort);
  cohort = data::normalize(cohort, ckpt.stats);
  const metrics::ScoredCohort scored = train::score(ckpt.params, ckpt.config, cohort);

  const fs::path out_dir(config.out);
  auto scores = open_output(out_dir / "scores.csv");
  scores << "patient_id,label";
  for (std::size_t j = 0; j < ckpt.config.classes; ++j) scores << ",p_" << j;
  scores << '\n';
  for (std::size_t i = 0; i < scored.labels.size(); ++i) {
    scores << cohort.patients[i].id << ',' << scored.labels[i];
    for (double p : scored.probabilities[i]) scores << ',' << num(p);
    scores << '\n';
  }
  const auto auroc = metrics::macro_ovr(scored, metrics::BinaryMetric::kAuroc);
  const auto auprc = metrics::macro_ovr(scored, metrics::BinaryMetric::kAuprc);
  auto metrics_csv = open_output(out_dir / "metrics.csv");
  metrics_csv << "fold,class,auroc,auprc\n";
  write_metric_rows(metrics_csv, "eval", auroc, auprc);
  log << "macro auroc " << num(auroc.value) << ", macro auprc " << num(auprc.value) << '\n';
  for (std::size_t j : auroc.skipped) log << "class " << j << " skipped: lacks positives or negatives\n";
  return kOk;
}

int cmd_decompose(const RunConfig& config, std::ostream& log) {
  if (config.feature.empty()) throw ConfigError("decompose requires --feature");
  wavelet::symlet_filters(config.symlet);
  write_manifest(config, log);
  const data::Cohort cohort = padded_cohort(config, config.tmax);
  const std::size_t k = cohort.feature_index(config.feature);
  auto out = open_output(fs::path(config.out) / "decompose.csv");
  out << "patient_id,feature,index,trend,variation\n";
  for (const data::Patient& p : cohort.patients) {
    std::vector<double> column(p.visit_count());
    for (std::size_t t = 0; t < column.size(); ++t) column[t] = p.visits.at(t, k);
    const auto pair = wavelet::dwt_single_level(column, config.symlet);
    for (std::size_t i = 0; i < pair.trend.size(); ++i) {
      out << p.id << ',' << config.feature << ',' << i << ',' << num(pair.trend[i]) << ','
          << num(pair.variation[i]) << '\n';
    }
  }
  log << "wrote " << cohort.patients.size() << " decompositions of " << config.feature << '\n';
  return kOk;
}

int cmd_sweep_symlets(const RunConfig& config, std::ostream& log) {
  train::TrainConfig tc = config.train_config();
  write_manifest(config, log);
  const data::Cohort cohort = padded_cohort(config, config.tmax);
  auto out = open_output(fs::path(config.out) / "sweep.csv");
  out << "symlet,mean_auroc,mean_auprc\n";
  int best = 0;
  double best_auroc = -1.0, best_auprc = -1.0;
  for (int k = wavelet::kMinOrder; k <= wavelet::kMaxOrder; ++k) {
    tc.symlet_order = k;
    const auto cv = train::cross_validate(cohort, config.folds, tc, config.parallel_folds);
    out << k << ',' << num(cv.mean_auroc) << ',' << num(cv.mean_auprc) << '\n';
    log << "sym" << k << ": auroc " << num(cv.mean_auroc) << ", auprc " << num(cv.mean_auprc) << '\n';
    if (cv.mean_auroc > best_auroc || (cv.mean_auroc == best_auroc && cv.mean_auprc > best_auprc)) {
      best = k;
      best_auroc = cv.mean_auroc;
      best_auprc = cv.mean_auprc;
    }
  }
  std::ostringstream summary;
  summary << "best symlet order " << best << " (mean auroc " << num(best_auroc) << ", mean auprc "
          << num(best_auprc) << ")\n";
  open_output(fs::path(config.out) / "summary.txt") << summary.str();
  log << summary.str();
  return kOk;
}

int cmd_inspect_attention(const RunConfig& config, std::ostream& log) {
  if (config.checkpoint.empty()) throw ConfigError("inspect-attention requires --checkpoint");
  if (config.feature.empty()) throw ConfigError("inspect-attention requires --feature");
  write_manifest(config, log);
  const checkpoint::Checkpoint ckpt = checkpoint::load(config.checkpoint);
  if (!ckpt.config.ablation.use_fodam) throw ConfigError("FODAM disabled in this checkpoint");
  data::Cohort cohort = padded_cohort(config, ckpt.config.t_max, ckpt.config.classes);
  check_compatible(ckpt, cohort);
  cohort = data::normalize(cohort, ckpt.stats);
  const std::size_t k = cohort.feature_index(config.feature);

  auto out = open_output(fs::path(config.out) / "attention.csv");
  out << "patient_id,feature,position,delta,alpha\n";
  for (const data::Patient& p : cohort.patients) {
    std::vector<double> column(p.visit_count());
    for (std::size_t t = 0; t < column.size(); ++t) column[t] = p.visits.at(t, k);
    const auto pair = wavelet::dwt_single_level(column, ckpt.config.symlet_order);
    const auto att = fodam::fodam_forward(pair.variation);
    for (std::size_t i = 0; i < att.alpha.size(); ++i) {
      out << p.id << ',' << config.feature << ',' << i << ',' << num(att.delta[i]) << ',' << num(att.alpha[i]) << '\n';
    }
  }
  log << "wrote attention for " << cohort.patients.size() << " patients\n";
  return kOk;
}

int cmd_correlate(const RunConfig& config, std::ostream& log) {
  wavelet::symlet_filters(config.symlet);
  write_manifest(config, log);
  const data::Cohort cohort = padded_cohort(config, config.tmax);
  const auto report = metrics::trend_variation_report(cohort, config.symlet);
  auto out = open_output(fs::path(config.out) / "correlation.csv");
  metrics::write_correlation_csv(out, report);
  metrics::write_correlation_csv(log, report);
  return kOk;
}

int cmd_synth(const RunConfig& config, std::ostream& log) {
  if (config.synth.empty()) throw ConfigError("synth requires --synth <preset>");
  write_manifest(config, log);
  const data::Cohort cohort = load_raw_cohort(config);
  data::write_cohort(cohort, data::CohortPaths::in_directory(config.out));
  log << "wrote " << cohort.patients.size() << " patients to " << config.out << '\n';
  return kOk;
}

int run(const std::vector<std::string>& args, std::ostream& log, std::ostream& err) {
  RunConfig config;
  CLI::App app{"MPRE disease prediction: wavelet trend/variation features, dilated correlation "
               "extraction and difference attention"};
  app.set_config("--config-file", "", "key = value file; command-line flags take precedence");
  app.require_subcommand(1);

  app.add_option("--visits", config.visits, "visits.csv (patient_id,visit_index,<dynamic...>)");
  app.add_option("--static", config.statics, "static.csv (patient_id,<static...>)");
  app.add_option("--labels", config.labels, "labels.csv (patient_id,label)");
  app.add_option("--synth", config.synth, "synthetic cohort preset instead of CSV input (default, correlation)");
  app.add_option("--patients", config.patients, "synthetic patient count (0 keeps the preset)");
  app.add_option("--out", config.out, "output directory")->capture_default_str();
  app.add_option("--seed", config.seed, "random seed")->capture_default_str();
  app.add_option("--symlet", config.symlet, "symlet order K (2..20)")->capture_default_str();
  app.add_option("--kernel-width", config.kernel_width, "temporal kernel width L")->capture_default_str();
  app.add_option("--dilations", config.dilations, "adjacent,short,long dilation rates")->capture_default_str();
  app.add_option("--tmax", config.tmax, "visits per patient after padding/truncation")->capture_default_str();
  app.add_option("--lr", config.lr, "Adam learning rate")->capture_default_str();
  app.add_option("--batch", config.batch, "mini-batch size")->capture_default_str();
  app.add_option("--epochs", config.epochs, "training epochs")->capture_default_str();
  app.add_option("--folds", config.folds, "cross-validation folds")->capture_default_str();
  app.add_option("--config", config.ablation, "ablation configuration A1..A7")->capture_default_str();
  app.add_flag("--parallel-folds", config.parallel_folds, "train folds concurrently");
  app.add_option("--checkpoint", config.checkpoint, "model checkpoint for eval / inspect-attention");
  app.add_option("--feature", config.feature, "dynamic feature name");

  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const RunConfig&, std::ostream&);
  };
  const Command commands[] = {
      {"train", "cross-validated training with checkpoints, epoch logs and metric CSVs", cmd_train},
      {"eval", "score a cohort with a checkpoint", cmd_eval},
      {"decompose", "dump trend/variation coefficients of one feature", cmd_decompose},
      {"sweep-symlets", "cross-validate every symlet order 2..20", cmd_sweep_symlets},
      {"inspect-attention", "dump first-order difference attention for one feature", cmd_inspect_attention},
      {"correlate", "rank features by trend/variation Pearson correlation", cmd_correlate},
      {"synth", "write a synthetic cohort as CSV", cmd_synth},
  };
  for (const Command& c : commands) app.add_subcommand(c.name, c.help)->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    log << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    log << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    for (const Command& c : commands) {
      if (app.got_subcommand(c.name)) {
        config.command = c.name;
        return c.fn(config, log);
      }
    }
    return kConfigError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericalError& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kNumericalError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  }
}

}  // namespace mpre::cli
