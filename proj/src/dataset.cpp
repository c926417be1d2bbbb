#include "har/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "har/rng.hpp"

namespace fs = std::filesystem;

namespace har {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + b;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void SynthConfig::finalize() {
  if (n_subjects < 1 || n_activities < 1 || channels < 1 || trials < 1)
    throw ContractError("SynthConfig: counts must be positive");
  if (imu_noise_deg < 0 || video_noise_deg < 0)
    throw ContractError("SynthConfig: noise sigma must be non-negative");
  if (video_jitter_prob < 0 || video_jitter_prob > 1)
    throw ContractError("SynthConfig: jitter probability must lie in [0,1]");
  if (base_freq_hz.empty()) {
    base_freq_hz.resize(n_activities);
    for (int a = 0; a < n_activities; ++a) base_freq_hz[a] = 0.8 + 0.3 * a;
  }
  if (base_amp_deg.empty()) base_amp_deg.assign(n_activities, 10.0);
  if (static_cast<int>(base_freq_hz.size()) != n_activities ||
      static_cast<int>(base_amp_deg.size()) != n_activities)
    throw ContractError("SynthConfig: per-activity tables must match n_activities");
  std::set<double> fset(base_freq_hz.begin(), base_freq_hz.end());
  if (static_cast<int>(fset.size()) != n_activities)
    throw ContractError("SynthConfig: activity frequencies must be distinct");
  for (double f : base_freq_hz)
    if (f <= 0) throw ContractError("SynthConfig: frequencies must be positive");
}

namespace {

std::string subject_name(int s) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "S%02d", s);
  return buf;
}

}  // namespace

Dataset synth_generate(const SynthConfig& cfg_in, Modality modality) {
  SynthConfig cfg = cfg_in;
  cfg.finalize();

  const int S = cfg.n_subjects, A = cfg.n_activities, J = cfg.channels;
  const double rate = modality == Modality::kImu ? cfg.imu_rate_hz : cfg.video_rate_hz;
  const double sigma = modality == Modality::kImu ? cfg.imu_noise_deg : cfg.video_noise_deg;
  const int T = static_cast<int>(std::lround(cfg.duration_seconds * rate));

  // Per-dataset tables, drawn in a fixed order from a dedicated stream so a
  // later sigma change cannot shift them.
  Rng table_rng(mix_seed(cfg.seed, 0xA11CE5));
  std::vector<double> amp(static_cast<std::size_t>(A) * J);
  for (int a = 0; a < A; ++a)
    for (int j = 0; j < J; ++j)
      amp[static_cast<std::size_t>(a) * J + j] =
          cfg.base_amp_deg[a] * table_rng.uniform(0.25, 1.0);
  std::vector<double> phase(static_cast<std::size_t>(S) * J), offset(phase.size());
  for (int s = 0; s < S; ++s)
    for (int j = 0; j < J; ++j) {
      phase[static_cast<std::size_t>(s) * J + j] =
          table_rng.uniform(0.0, 1.0) * cfg.phase_spread_rad;
      offset[static_cast<std::size_t>(s) * J + j] =
          table_rng.uniform(-1.0, 1.0) * cfg.offset_spread_deg;
    }

  Dataset ds;
  ds.modality = modality;
  for (int a = 0; a < A; ++a) ds.activity_names.push_back("A" + std::to_string(a));
  for (int j = 0; j < J; ++j) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "j%02d", j);
    ds.channel_names.push_back(buf);
  }

  const std::uint64_t modality_tag = modality == Modality::kImu ? 1 : 2;
  for (int s = 0; s < S; ++s) {
    ds.roster.push_back(subject_name(s));
    for (int a = 0; a < A; ++a)
      for (int trial = 0; trial < cfg.trials; ++trial) {
        Rng noise_rng(mix_seed(cfg.seed, mix_seed(modality_tag,
                                                  (static_cast<std::uint64_t>(s) << 20) ^
                                                      (static_cast<std::uint64_t>(a) << 8) ^
                                                      static_cast<std::uint64_t>(trial))));
        JointAngleSequence seq;
        seq.subject_id = subject_name(s);
        seq.modality = modality;
        seq.activity = a;
        seq.trial = trial;
        seq.sample_rate_hz = rate;
        seq.angles = Tensor::zeros({T, J});
        const double two_pi_f = 2.0 * M_PI * cfg.base_freq_hz[a];
        for (int i = 0; i < T; ++i) {
          double t = i / rate;
          if (modality == Modality::kVideo && cfg.video_jitter_prob > 0.0 &&
              noise_rng.uniform() < cfg.video_jitter_prob)
            t += noise_rng.uniform(-0.4, 0.4) / rate;  // frame grabbed off-schedule
          for (int j = 0; j < J; ++j) {
            const std::size_t sj = static_cast<std::size_t>(s) * J + j;
            double v = amp[static_cast<std::size_t>(a) * J + j] *
                           std::sin(two_pi_f * t + phase[sj]) +
                       offset[sj];
            if (sigma > 0.0) v += noise_rng.normal(0.0, sigma);
            seq.angles.at(i, j) = v;
          }
        }
        ds.sequences.push_back(std::move(seq));
      }
  }
  return ds;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& file, int line_no) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e)
    throw DataError("unparseable number '" + s + "' in " + file + " line " +
                    std::to_string(line_no));
  return v;
}

struct ParsedName {
  std::string subject;
  int activity = -1;
  int trial = 0;
  std::string modality;
};

bool parse_file_name(const std::string& stem, ParsedName& out) {
  // S<subject>_A<activity>_T<trial>_<modality>
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : stem) {
    if (ch == '_') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(cur);
  if (parts.size() != 4) return false;
  if (parts[0].size() < 2 || parts[0][0] != 'S') return false;
  if (parts[1].size() < 2 || parts[1][0] != 'A') return false;
  if (parts[2].size() < 2 || parts[2][0] != 'T') return false;
  out.subject = parts[0];
  try {
    out.activity = std::stoi(parts[1].substr(1));
    out.trial = std::stoi(parts[2].substr(1));
  } catch (const std::exception&) {
    return false;
  }
  out.modality = parts[3];
  return true;
}

}  // namespace

Dataset load_csv_dir(const fs::path& dir, Modality modality, int n_activities) {
  if (!fs::is_directory(dir))
    throw DataError("load_csv_dir: not a directory: " + dir.string());

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  Dataset ds;
  ds.modality = modality;
  for (int a = 0; a < n_activities; ++a)
    ds.activity_names.push_back("A" + std::to_string(a));

  std::set<std::string> subjects;
  for (const fs::path& file : files) {
    ParsedName name;
    if (!parse_file_name(file.stem().string(), name))
      throw DataError("load_csv_dir: file name '" + file.filename().string() +
                      "' does not match S<subject>_A<activity>_T<trial>_<modality>.csv");
    if (name.modality != "imu" && name.modality != "video")
      throw DataError("load_csv_dir: unknown modality token in " + file.filename().string());
    if (modality_from_string(name.modality) != modality) continue;
    if (name.activity < 0 || name.activity >= n_activities)
      throw DataError("load_csv_dir: unknown activity token A" +
                      std::to_string(name.activity) + " in " + file.filename().string());

    std::ifstream in(file);
    if (!in) throw DataError("load_csv_dir: cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line))
      throw DataError("load_csv_dir: empty file " + file.string());
    std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "time")
      throw DataError("load_csv_dir: header must start with 'time' in " + file.string());
    std::vector<std::string> channels(header.begin() + 1, header.end());

    int used_channels = static_cast<int>(channels.size());
    if (ds.channel_names.empty()) {
      ds.channel_names = channels;
    } else {
      const int expected = static_cast<int>(ds.channel_names.size());
      if (used_channels < expected ||
          !std::equal(ds.channel_names.begin(), ds.channel_names.end(), channels.begin()))
        throw DataError("load_csv_dir: channel set in " + file.filename().string() +
                        " differs from the first file");
      if (used_channels > expected) {
        std::fprintf(stderr, "warning: %s: ignoring %d extra column(s)\n",
                     file.filename().string().c_str(), used_channels - expected);
        used_channels = expected;
      }
    }

    std::vector<double> times;
    std::vector<double> values;
    int line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::vector<std::string> cells = split_csv_line(line);
      if (static_cast<int>(cells.size()) < used_channels + 1)
        throw DataError("load_csv_dir: short row in " + file.filename().string() +
                        " line " + std::to_string(line_no));
      times.push_back(parse_double(cells[0], file.filename().string(), line_no));
      for (int j = 0; j < used_channels; ++j)
        values.push_back(parse_double(cells[j + 1], file.filename().string(), line_no));
    }
    if (times.size() < 2)
      throw DataError("load_csv_dir: " + file.filename().string() +
                      " needs at least 2 samples");

    std::vector<double> deltas;
    for (std::size_t i = 1; i < times.size(); ++i) {
      const double d = times[i] - times[i - 1];
      if (d <= 0.0)
        throw DataError("load_csv_dir: non-monotonic time in " + file.filename().string() +
                        " at row " + std::to_string(i + 2));
      deltas.push_back(d);
    }
    std::nth_element(deltas.begin(), deltas.begin() + deltas.size() / 2, deltas.end());
    const double median_dt = deltas[deltas.size() / 2];
    // Snap to 9 significant digits so rate inference is a fixed point of the
    // canonical writer: reloading a written file reproduces the rate exactly.
    char rate_buf[32];
    std::snprintf(rate_buf, sizeof(rate_buf), "%.9g", 1.0 / median_dt);
    const double rate = std::strtod(rate_buf, nullptr);

    JointAngleSequence seq;
    seq.subject_id = name.subject;
    seq.modality = modality;
    seq.activity = name.activity;
    seq.trial = name.trial;
    seq.sample_rate_hz = rate;
    seq.angles = Tensor({static_cast<int>(times.size()), used_channels}, std::move(values));
    check_finite(seq.angles, ("load_csv_dir:" + file.filename().string()).c_str());
    subjects.insert(seq.subject_id);
    ds.sequences.push_back(std::move(seq));
  }

  if (ds.sequences.empty())
    std::fprintf(stderr, "warning: no %s recordings found under %s\n",
                 to_string(modality), dir.string().c_str());
  ds.roster.assign(subjects.begin(), subjects.end());
  return ds;
}

void write_csv_dir(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  for (const JointAngleSequence& seq : ds.sequences) {
    char fname[64];
    std::snprintf(fname, sizeof(fname), "%s_A%d_T%d_%s.csv", seq.subject_id.c_str(),
                  seq.activity, seq.trial, to_string(seq.modality));
    std::ofstream out(dir / fname, std::ios::binary);
    if (!out) throw IoError("write_csv_dir: cannot write " + (dir / fname).string());
    out << "time";
    const int J = seq.channels();
    for (int j = 0; j < J; ++j)
      out << ','
          << (j < static_cast<int>(ds.channel_names.size()) ? ds.channel_names[j]
                                                            : "j" + std::to_string(j));
    out << '\n';
    char buf[32];
    for (int i = 0; i < seq.samples(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", i / seq.sample_rate_hz);
      out << buf;
      for (int j = 0; j < J; ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", seq.angles.at(i, j));
        out << ',' << buf;
      }
      out << '\n';
    }
  }
}

FoldPlan make_folds(const std::vector<std::string>& roster, int k, int n_val,
                    std::uint64_t seed) {
  const int n = static_cast<int>(roster.size());
  if (k < 2) throw ContractError("make_folds: k must be at least 2");
  if (k > n) throw ContractError("make_folds: more folds than subjects");
  if (n_val < 0) throw ContractError("make_folds: n_val must be non-negative");
  const int max_test = (n + k - 1) / k;
  if (n_val > n - max_test)
    throw ContractError("make_folds: n_val=" + std::to_string(n_val) +
                        " leaves no training subjects (roster " + std::to_string(n) +
                        ", k " + std::to_string(k) + ")");

  Rng rng(seed);
  std::vector<std::string> shuffled = roster;
  rng.shuffle(shuffled);

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  int start = 0;
  for (int f = 0; f < k; ++f) {
    const int size = n / k + (f < n % k ? 1 : 0);
    FoldPlan::Fold fold;
    fold.test.assign(shuffled.begin() + start, shuffled.begin() + start + size);
    start += size;

    std::vector<std::string> remainder;
    for (const std::string& s : shuffled)
      if (std::find(fold.test.begin(), fold.test.end(), s) == fold.test.end())
        remainder.push_back(s);
    fold.val = rng.sample(remainder, static_cast<std::size_t>(n_val));
    for (const std::string& s : remainder)
      if (std::find(fold.val.begin(), fold.val.end(), s) == fold.val.end())
        fold.train.push_back(s);

    std::sort(fold.test.begin(), fold.test.end());
    std::sort(fold.val.begin(), fold.val.end());
    std::sort(fold.train.begin(), fold.train.end());
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

void write_fold_plan(const FoldPlan& plan, const fs::path& path) {
  nlohmann::ordered_json j;
  j["k"] = plan.k;
  j["seed"] = plan.seed;
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& fold : plan.folds) {
    nlohmann::ordered_json f;
    f["test"] = fold.test;
    f["val"] = fold.val;
    f["train"] = fold.train;
    j["folds"].push_back(std::move(f));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_fold_plan: cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace har
