#include "mpre/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_map>

#include "mpre/error.hpp"

namespace mpre::data {

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.emplace_back(line.substr(start));
      break;
    }
    cells.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::string text = buffer.str();
  if (text.starts_with("\xEF\xBB\xBF")) text.erase(0, 3);

  CsvTable table;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    if (line.ends_with('\r')) line.remove_suffix(1);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (table.header.empty()) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(table.header.size()) + " cells, got " + std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
    table.line_numbers.push_back(line_no);
  }
  if (table.header.empty()) throw DataError(path.string() + ": missing header row");
  return table;
}

void expect_header(const CsvTable& t, const std::filesystem::path& path,
                   std::span<const std::string_view> leading) {
  for (std::size_t i = 0; i < leading.size(); ++i) {
    if (i >= t.header.size() || t.header[i] != leading[i]) {
      throw DataError(path.string() + ": header column " + std::to_string(i + 1) + " must be '" +
                      std::string(leading[i]) + "'");
    }
  }
}

std::string coordinates(const std::filesystem::path& path, std::size_t line, std::size_t column) {
  return path.string() + ":" + std::to_string(line) + ", column " + std::to_string(column + 1);
}

double parse_number(std::string_view cell, const std::filesystem::path& path, std::size_t line,
                    std::size_t column) {
  while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
  while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
    throw DataError("malformed number '" + std::string(cell) + "' at " + coordinates(path, line, column));
  }
  return value;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

}  // namespace

std::size_t Cohort::feature_index(std::string_view name) const {
  auto it = std::find(dynamic_names.begin(), dynamic_names.end(), name);
  if (it == dynamic_names.end()) {
    throw ConfigError("unknown dynamic feature '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - dynamic_names.begin());
}

Cohort Cohort::subset(std::span<const std::size_t> indices) const {
  Cohort out;
  out.dynamic_names = dynamic_names;
  out.static_names = static_names;
  out.classes = classes;
  out.t_max = t_max;
  out.patients.reserve(indices.size());
  for (std::size_t i : indices) out.patients.push_back(patients.at(i));
  return out;
}

CohortPaths CohortPaths::in_directory(const std::filesystem::path& dir) {
  return {dir / "visits.csv", dir / "static.csv", dir / "labels.csv"};
}

Cohort load_cohort(const CohortPaths& paths, std::size_t classes) {
  const CsvTable labels = read_csv(paths.labels);
  const CsvTable statics = read_csv(paths.statics);
  const CsvTable visits = read_csv(paths.visits);

  constexpr std::string_view kLabelHeader[] = {"patient_id", "label"};
  constexpr std::string_view kStaticHeader[] = {"patient_id"};
  constexpr std::string_view kVisitHeader[] = {"patient_id", "visit_index"};
  expect_header(labels, paths.labels, kLabelHeader);
  expect_header(statics, paths.statics, kStaticHeader);
  expect_header(visits, paths.visits, kVisitHeader);
  if (labels.header.size() != 2) throw DataError(paths.labels.string() + ": expected header patient_id,label");

  Cohort cohort;
  cohort.static_names.assign(statics.header.begin() + 1, statics.header.end());
  cohort.dynamic_names.assign(visits.header.begin() + 2, visits.header.end());
  if (cohort.dynamic_names.empty()) throw DataError(paths.visits.string() + ": no dynamic feature columns");

  std::unordered_map<std::string, std::size_t> index;
  std::size_t max_label = 0;
  for (std::size_t r = 0; r < labels.rows.size(); ++r) {
    const auto& row = labels.rows[r];
    std::string_view cell = row[1];
    long long label = 0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
    if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || label < 0) {
      throw DataError("non-integer label '" + row[1] + "' at " +
                      coordinates(paths.labels, labels.line_numbers[r], 1));
    }
    if (!index.emplace(row[0], cohort.patients.size()).second) {
      throw DataError("duplicate patient id '" + row[0] + "' in " + paths.labels.string());
    }
    Patient p;
    p.id = row[0];
    p.label = static_cast<std::size_t>(label);
    max_label = std::max(max_label, p.label);
    cohort.patients.push_back(std::move(p));
  }
  if (cohort.patients.empty()) throw DataError(paths.labels.string() + ": no patients");
  cohort.classes = classes == 0 ? std::max<std::size_t>(2, max_label + 1) : classes;
  if (max_label >= cohort.classes) {
    throw DataError("label " + std::to_string(max_label) + " outside configured class count " +
                    std::to_string(cohort.classes));
  }

  auto lookup = [&](const std::string& id, const std::filesystem::path& path, std::size_t line) {
    auto it = index.find(id);
    if (it == index.end()) {
      throw DataError("unknown patient id '" + id + "' at " + path.string() + ":" + std::to_string(line));
    }
    return it->second;
  };

  std::vector<bool> has_static(cohort.patients.size(), false);
  for (std::size_t r = 0; r < statics.rows.size(); ++r) {
    const auto& row = statics.rows[r];
    const std::size_t line = statics.line_numbers[r];
    const std::size_t p = lookup(row[0], paths.statics, line);
    if (has_static[p]) throw DataError("duplicate static row for patient '" + row[0] + "'");
    has_static[p] = true;
    auto& s = cohort.patients[p].statics;
    for (std::size_t c = 1; c < row.size(); ++c) s.push_back(parse_number(row[c], paths.statics, line, c));
  }

  const std::size_t c = cohort.dynamic_names.size();
  constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
  struct VisitRow {
    double index;
    std::vector<double> values;
  };
  std::vector<std::vector<VisitRow>> rows_by_patient(cohort.patients.size());
  for (std::size_t r = 0; r < visits.rows.size(); ++r) {
    const auto& row = visits.rows[r];
    const std::size_t line = visits.line_numbers[r];
    const std::size_t p = lookup(row[0], paths.visits, line);
    VisitRow v{parse_number(row[1], paths.visits, line, 1), std::vector<double>(c, kMissing)};
    for (std::size_t k = 0; k < c; ++k) {
      if (!row[k + 2].empty()) v.values[k] = parse_number(row[k + 2], paths.visits, line, k + 2);
    }
    rows_by_patient[p].push_back(std::move(v));
  }

  for (std::size_t p = 0; p < cohort.patients.size(); ++p) {
    Patient& patient = cohort.patients[p];
    if (!has_static[p]) throw DataError("patient '" + patient.id + "' missing from " + paths.statics.string());
    auto& rows = rows_by_patient[p];
    if (rows.empty()) throw DataError("patient '" + patient.id + "' has no rows in " + paths.visits.string());
    std::stable_sort(rows.begin(), rows.end(),
                     [](const VisitRow& a, const VisitRow& b) { return a.index < b.index; });
    patient.visits = Tensor({rows.size(), c});
    for (std::size_t k = 0; k < c; ++k) {
      double carried = kMissing;
      for (std::size_t t = 0; t < rows.size(); ++t) {
        const double v = rows[t].values[k];
        if (!std::isnan(v)) carried = v;
        patient.visits.at(t, k) = std::isnan(carried) ? 0.0 : carried;
      }
    }
  }
  return cohort;
}

void write_cohort(const Cohort& cohort, const CohortPaths& paths) {
  std::string visits = "patient_id,visit_index";
  for (const auto& n : cohort.dynamic_names) visits += "," + n;
  visits += "\n";
  std::string statics = "patient_id";
  for (const auto& n : cohort.static_names) statics += "," + n;
  statics += "\n";
  std::string labels = "patient_id,label\n";
  for (const Patient& p : cohort.patients) {
    labels += p.id + "," + std::to_string(p.label) + "\n";
    statics += p.id;
    for (double v : p.statics) statics += "," + format_number(v);
    statics += "\n";
    for (std::size_t t = 0; t < p.visit_count(); ++t) {
      visits += p.id + "," + std::to_string(t);
      for (std::size_t k = 0; k < p.visits.shape[1]; ++k) visits += "," + format_number(p.visits.at(t, k));
      visits += "\n";
    }
  }
  write_text(paths.visits, visits);
  write_text(paths.statics, statics);
  write_text(paths.labels, labels);
}

Cohort pad_truncate(const Cohort& cohort, std::size_t t_max) {
  if (t_max == 0) throw ConfigError("pad_truncate: t_max must be at least 1");
  if (cohort.patients.empty()) throw DataError("pad_truncate: empty cohort");
  Cohort out = cohort;
  out.t_max = t_max;
  for (Patient& p : out.patients) {
    const std::size_t t = p.visit_count();
    const std::size_t c = p.visits.shape[1];
    Tensor padded({t_max, c});
    const std::size_t skip = t > t_max ? t - t_max : 0;
    for (std::size_t row = 0; row < t_max; ++row) {
      const std::size_t src = std::min(row + skip, t - 1);
      for (std::size_t k = 0; k < c; ++k) padded.at(row, k) = p.visits.at(src, k);
    }
    p.visits = std::move(padded);
  }
  return out;
}

NormalizationStats compute_stats(const Cohort& train) {
  if (train.patients.empty()) throw DataError("compute_stats: empty training cohort");
  const std::size_t c = train.dynamic_count(), s = train.static_count();
  NormalizationStats stats{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0),
                           std::vector<double>(s, 0.0), std::vector<double>(s, 0.0)};
  std::size_t rows = 0;
  for (const Patient& p : train.patients) {
    rows += p.visit_count();
    for (std::size_t t = 0; t < p.visit_count(); ++t)
      for (std::size_t k = 0; k < c; ++k) stats.dynamic_mean[k] += p.visits.at(t, k);
    for (std::size_t k = 0; k < s; ++k) stats.static_mean[k] += p.statics[k];
  }
  const auto n = static_cast<double>(train.patients.size());
  for (double& m : stats.dynamic_mean) m /= static_cast<double>(rows);
  for (double& m : stats.static_mean) m /= n;
  for (const Patient& p : train.patients) {
    for (std::size_t t = 0; t < p.visit_count(); ++t) {
      for (std::size_t k = 0; k < c; ++k) {
        const double d = p.visits.at(t, k) - stats.dynamic_mean[k];
        stats.dynamic_std[k] += d * d;
      }
    }
    for (std::size_t k = 0; k < s; ++k) {
      const double d = p.statics[k] - stats.static_mean[k];
      stats.static_std[k] += d * d;
    }
  }
  for (double& v : stats.dynamic_std) v = std::sqrt(v / static_cast<double>(rows));
  for (double& v : stats.static_std) v = std::sqrt(v / n);
  return stats;
}

Cohort normalize(const Cohort& cohort, const NormalizationStats& stats) {
  if (stats.dynamic_mean.size() != cohort.dynamic_count() || stats.static_mean.size() != cohort.static_count()) {
    throw ConfigError("normalize: statistics cover " + std::to_string(stats.dynamic_mean.size()) + "+" +
                      std::to_string(stats.static_mean.size()) + " features, cohort has " +
                      std::to_string(cohort.dynamic_count()) + "+" + std::to_string(cohort.static_count()));
  }
  constexpr double kMinSpread = 1e-12;
  auto z = [](double v, double mean, double sd) { return sd < kMinSpread ? 0.0 : (v - mean) / sd; };
  Cohort out = cohort;
  for (Patient& p : out.patients) {
    for (std::size_t t = 0; t < p.visit_count(); ++t)
      for (std::size_t k = 0; k < cohort.dynamic_count(); ++k)
        p.visits.at(t, k) = z(p.visits.at(t, k), stats.dynamic_mean[k], stats.dynamic_std[k]);
    for (std::size_t k = 0; k < cohort.static_count(); ++k)
      p.statics[k] = z(p.statics[k], stats.static_mean[k], stats.static_std[k]);
  }
  return out;
}

void SynthSpec::validate() const {
  if (patients == 0) throw ConfigError("synth: patient count must be positive");
  if (classes.size() < 2) throw ConfigError("synth: at least two classes are required");
  if (dynamic_features + noise_features == 0) throw ConfigError("synth: no dynamic features");
  if (!(mean_visits >= 1.0)) throw ConfigError("synth: mean visit count must be at least 1");
  for (std::size_t a = 0; a < classes.size(); ++a) {
    for (std::size_t b = a + 1; b < classes.size(); ++b) {
      if (classes[a] == classes[b]) {
        throw ConfigError("synth: classes " + std::to_string(a) + " and " + std::to_string(b) +
                          " have identical generative parameters");
      }
    }
  }
}

SynthSpec synth_preset(std::string_view name) {
  SynthSpec spec;
  if (name == "default") {
    spec.classes = {{0.5, 0.3, 0.4}, {0.0, 1.0, 0.0}, {-0.5, 0.3, -0.4}};
    return spec;
  }
  if (name == "correlation") {
    spec.classes = {{0.5, 0.0, 0.8}, {0.5, 0.0, -0.8}};
    spec.random_slope_sign = true;
    spec.static_signal = 0.0;
    spec.intercept_scale = 0.3;
    spec.visit_jitter = 0;
    spec.tapered = true;
    spec.noise = 1.0;
    return spec;
  }
  throw ConfigError("unknown synthetic preset '" + std::string(name) + "'; expected default or correlation");
}

Cohort synth_generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t d = spec.classes.size();
  std::vector<std::size_t> labels(spec.patients);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % d;
  std::shuffle(labels.begin(), labels.end(), rng);

  Cohort cohort;
  cohort.classes = d;
  for (std::size_t k = 0; k < spec.dynamic_features; ++k) cohort.dynamic_names.push_back("dyn_" + std::to_string(k + 1));
  for (std::size_t k = 0; k < spec.noise_features; ++k) cohort.dynamic_names.push_back("noise_" + std::to_string(k + 1));
  for (std::size_t k = 0; k < spec.static_features; ++k) cohort.static_names.push_back("st_" + std::to_string(k + 1));
  const std::size_t c = cohort.dynamic_names.size();

  const auto base_visits = static_cast<long>(std::lround(spec.mean_visits));
  const auto spread = static_cast<long>(spec.visit_jitter);
  std::uniform_int_distribution<long> jitter(-spread, spread);
  char id[32];
  for (std::size_t i = 0; i < spec.patients; ++i) {
    Patient p;
    std::snprintf(id, sizeof(id), "p%05zu", i);
    p.id = id;
    p.label = labels[i];
    const ClassProfile& profile = spec.classes[p.label];
    const auto t = static_cast<std::size_t>(std::max(3L, base_visits + jitter(rng)));
    p.visits = Tensor({t, c});
    const double centre = 0.5 * static_cast<double>(t - 1);
    for (std::size_t k = 0; k < c; ++k) {
      if (k >= spec.dynamic_features) {
        for (std::size_t n = 0; n < t; ++n) p.visits.at(n, k) = gauss(rng);
        continue;
      }
      double slope = profile.slope * (1.0 + 0.25 * (2.0 * unit(rng) - 1.0));
      if (spec.random_slope_sign && unit(rng) < 0.5) slope = -slope;
      const double intercept = spec.intercept_scale * gauss(rng);
      for (std::size_t n = 0; n < t; ++n) {
        const double tau = static_cast<double>(n) - centre;
        double shape = tau, envelope = tau;
        if (spec.tapered && t > 1) {
          const double phase = std::numbers::pi * tau / static_cast<double>(t - 1);
          shape = static_cast<double>(t - 1) / std::numbers::pi * std::sin(phase);
          envelope = tau * std::cos(phase);
        }
        const double trend = slope * shape;
        const double swing = (n % 2 == 0 ? 1.0 : -1.0) * (profile.amplitude + profile.coupling * slope * envelope);
        p.visits.at(n, k) = intercept + trend + swing + spec.noise * gauss(rng);
      }
    }
    for (std::size_t k = 0; k < spec.static_features; ++k) {
      const double level = d > 1 ? static_cast<double>((p.label + k) % d) / static_cast<double>(d - 1) - 0.5 : 0.0;
      p.statics.push_back(unit(rng) < 0.5 + spec.static_signal * level ? 1.0 : 0.0);
    }
    cohort.patients.push_back(std::move(p));
  }
  return cohort;
}

}  // namespace mpre::data
