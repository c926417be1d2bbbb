#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "har/dataset.hpp"
#include "har/features.hpp"

using namespace har;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SynthConfig small_cfg() {
  SynthConfig cfg;
  cfg.n_subjects = 3;
  cfg.n_activities = 4;
  cfg.channels = 2;
  cfg.trials = 1;
  cfg.duration_seconds = 3.0;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("synth_generate is deterministic in the seed") {
  SynthConfig cfg = small_cfg();
  Dataset a = synth_generate(cfg, Modality::kImu);
  Dataset b = synth_generate(cfg, Modality::kImu);
  REQUIRE(a.sequences.size() == b.sequences.size());
  for (std::size_t i = 0; i < a.sequences.size(); ++i)
    CHECK(a.sequences[i].angles.data == b.sequences[i].angles.data);

  cfg.seed = 8;
  Dataset c = synth_generate(cfg, Modality::kImu);
  CHECK(a.sequences[0].angles.data != c.sequences[0].angles.data);
}

TEST_CASE("noise-free generator with no subject spread repeats across subjects") {
  SynthConfig cfg = small_cfg();
  cfg.imu_noise_deg = 0.0;
  cfg.phase_spread_rad = 0.0;
  cfg.offset_spread_deg = 0.0;
  Dataset ds = synth_generate(cfg, Modality::kImu);
  // One trial per subject-activity: sequences are ordered s-major.
  const auto& s0a0 = ds.sequences[0];
  const auto& s1a0 = ds.sequences[cfg.n_activities];
  REQUIRE(s0a0.activity == s1a0.activity);
  REQUIRE(s0a0.subject_id != s1a0.subject_id);
  CHECK(s0a0.angles.data == s1a0.angles.data);
}

TEST_CASE("mean absolute noise deviation matches the folded-normal expectation") {
  SynthConfig cfg;
  cfg.n_subjects = 2;
  cfg.n_activities = 2;
  cfg.channels = 14;
  cfg.trials = 2;
  cfg.duration_seconds = 20.0;
  cfg.seed = 11;

  SynthConfig clean = cfg;
  clean.imu_noise_deg = 0.0;
  Dataset noisy = synth_generate(cfg, Modality::kImu);
  Dataset base = synth_generate(clean, Modality::kImu);

  double acc = 0.0;
  long long n = 0;
  for (std::size_t i = 0; i < noisy.sequences.size(); ++i) {
    const auto& xn = noisy.sequences[i].angles.data;
    const auto& xc = base.sequences[i].angles.data;
    REQUIRE(xn.size() == xc.size());
    for (std::size_t k = 0; k < xn.size(); ++k) acc += std::abs(xn[k] - xc[k]);
    n += static_cast<long long>(xn.size());
  }
  REQUIRE(n >= 100000);
  const double expected = cfg.imu_noise_deg * std::sqrt(2.0 / M_PI);
  CHECK(std::abs(acc / n - expected) / expected < 0.05);
}

TEST_CASE("synthetic sequences satisfy the feature preconditions") {
  SynthConfig cfg;  // defaults: 16 subjects, 8 activities
  cfg.n_subjects = 2;
  Dataset imu = synth_generate(cfg, Modality::kImu);
  Dataset video = synth_generate(cfg, Modality::kVideo);
  FeatureConfig fc;
  for (const Dataset* ds : {&imu, &video})
    for (const auto& seq : ds->sequences) {
      CHECK(all_finite(seq.angles));
      JointAngleSequence at50 = resample(seq, fc.sample_rate_hz);
      CHECK(at50.samples() >= fc.window_samples());
    }
}

TEST_CASE("csv round trip reproduces angle matrices and is byte-stable") {
  fs::path dir = fresh_dir("har_csv_roundtrip");
  SynthConfig cfg = small_cfg();
  Dataset ds = synth_generate(cfg, Modality::kImu);
  write_csv_dir(ds, dir);

  Dataset loaded = load_csv_dir(dir, Modality::kImu, cfg.n_activities);
  REQUIRE(loaded.sequences.size() == ds.sequences.size());
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    const auto& a = ds.sequences[i];
    const auto& b = loaded.sequences[i];
    CHECK(a.subject_id == b.subject_id);
    CHECK(a.activity == b.activity);
    CHECK(b.sample_rate_hz == doctest::Approx(a.sample_rate_hz).epsilon(1e-9));
    REQUIRE(a.angles.shape == b.angles.shape);
    for (std::size_t k = 0; k < a.angles.data.size(); ++k)
      CHECK(a.angles.data[k] == b.angles.data[k]);  // %.17g round-trips exactly
  }

  // Second write cycle is byte-identical.
  fs::path dir2 = fresh_dir("har_csv_roundtrip2");
  write_csv_dir(loaded, dir2);
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::ifstream f1(entry.path(), std::ios::binary);
    std::ifstream f2(dir2 / entry.path().filename(), std::ios::binary);
    REQUIRE(f2.good());
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
  }
}

TEST_CASE("load-write-load is idempotent from the second cycle") {
  fs::path d1 = fresh_dir("har_csv_cycle1");
  fs::path d2 = fresh_dir("har_csv_cycle2");
  fs::path d3 = fresh_dir("har_csv_cycle3");
  {
    // NTSC-style awkward rate.
    std::ofstream out(d1 / "S00_A0_T0_imu.csv");
    out << "time,j00\n";
    for (int i = 0; i < 40; ++i) out << i / 29.97 << "," << std::sin(0.3 * i) << "\n";
  }
  write_csv_dir(load_csv_dir(d1, Modality::kImu), d2);
  write_csv_dir(load_csv_dir(d2, Modality::kImu), d3);
  std::ifstream f2(d2 / "S00_A0_T0_imu.csv", std::ios::binary);
  std::ifstream f3(d3 / "S00_A0_T0_imu.csv", std::ios::binary);
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  std::string s3((std::istreambuf_iterator<char>(f3)), {});
  REQUIRE(!s2.empty());
  CHECK(s2 == s3);
}

TEST_CASE("loader infers 50 Hz from 0.02 s deltas") {
  fs::path dir = fresh_dir("har_csv_rate");
  {
    std::ofstream out(dir / "S00_A0_T0_imu.csv");
    out << "time,j00\n";
    for (int i = 0; i < 10; ++i) out << i * 0.02 << "," << i << "\n";
  }
  Dataset ds = load_csv_dir(dir, Modality::kImu);
  REQUIRE(ds.sequences.size() == 1);
  CHECK(ds.sequences[0].sample_rate_hz == doctest::Approx(50.0).epsilon(1e-9));
}

TEST_CASE("loader errors name the offending file") {
  fs::path dir = fresh_dir("har_csv_bad");

  SUBCASE("non-monotonic time") {
    std::ofstream(dir / "S00_A0_T0_imu.csv") << "time,j00\n0.0,1\n0.2,2\n0.1,3\n";
    try {
      load_csv_dir(dir, Modality::kImu);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("S00_A0_T0_imu.csv") != std::string::npos);
      CHECK(std::string(e.what()).find("non-monotonic") != std::string::npos);
    }
  }
  SUBCASE("unknown activity index") {
    std::ofstream(dir / "S00_A9_T0_imu.csv") << "time,j00\n0.0,1\n0.02,2\n";
    CHECK_THROWS_AS(load_csv_dir(dir, Modality::kImu, 8), DataError);
  }
  SUBCASE("unparseable value") {
    std::ofstream(dir / "S00_A0_T0_imu.csv") << "time,j00\n0.0,1\n0.02,oops\n";
    CHECK_THROWS_AS(load_csv_dir(dir, Modality::kImu), DataError);
  }
  SUBCASE("bad file name") {
    std::ofstream(dir / "recording1.csv") << "time,j00\n0.0,1\n0.02,2\n";
    CHECK_THROWS_AS(load_csv_dir(dir, Modality::kImu), DataError);
  }
  SUBCASE("inconsistent channels") {
    std::ofstream(dir / "S00_A0_T0_imu.csv") << "time,j00\n0.0,1\n0.02,2\n";
    std::ofstream(dir / "S01_A0_T0_imu.csv") << "time,elbow\n0.0,1\n0.02,2\n";
    CHECK_THROWS_AS(load_csv_dir(dir, Modality::kImu), DataError);
  }
}

TEST_CASE("empty directory loads as an empty dataset") {
  fs::path dir = fresh_dir("har_csv_empty");
  Dataset ds = load_csv_dir(dir, Modality::kImu);
  CHECK(ds.sequences.empty());
  CHECK(ds.roster.empty());
}

TEST_CASE("loader skips recordings of the other modality") {
  fs::path dir = fresh_dir("har_csv_mixed");
  std::ofstream(dir / "S00_A0_T0_imu.csv") << "time,j00\n0.0,1\n0.02,2\n";
  std::ofstream(dir / "S00_A0_T0_video.csv") << "time,j00\n0.0,1\n0.033,2\n";
  Dataset imu = load_csv_dir(dir, Modality::kImu);
  Dataset video = load_csv_dir(dir, Modality::kVideo);
  CHECK(imu.sequences.size() == 1);
  CHECK(video.sequences.size() == 1);
  CHECK(imu.sequences[0].modality == Modality::kImu);
  CHECK(video.sequences[0].modality == Modality::kVideo);
}

TEST_CASE("make_folds reproduces the 16-subject protocol") {
  std::vector<std::string> roster;
  for (int i = 0; i < 16; ++i) roster.push_back("S" + std::to_string(i));
  FoldPlan plan = make_folds(roster, 4, 2, 123);
  REQUIRE(plan.folds.size() == 4);
  for (const auto& fold : plan.folds) {
    CHECK(fold.test.size() == 4);
    CHECK(fold.val.size() == 2);
    CHECK(fold.train.size() == 10);
  }
}

TEST_CASE("leave-one-subject-out boundary") {
  std::vector<std::string> roster = {"a", "b", "c", "d", "e"};
  FoldPlan plan = make_folds(roster, 5, 1, 9);
  REQUIRE(plan.folds.size() == 5);
  std::set<std::string> tested;
  for (const auto& fold : plan.folds) {
    CHECK(fold.test.size() == 1);
    CHECK(fold.val.size() == 1);
    CHECK(fold.train.size() == 3);
    tested.insert(fold.test.begin(), fold.test.end());
  }
  CHECK(tested.size() == 5);
}

TEST_CASE("make_folds rejects an oversized validation request") {
  std::vector<std::string> roster = {"a", "b", "c", "d"};
  CHECK_THROWS_AS(make_folds(roster, 2, 3, 1), ContractError);
}

TEST_CASE("fold plan invariants hold over 100 seeds") {
  std::vector<std::string> roster;
  for (int i = 0; i < 16; ++i) roster.push_back("S" + std::to_string(i));
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    FoldPlan plan = make_folds(roster, 4, 2, seed);
    std::set<std::string> tested;
    for (const auto& fold : plan.folds) {
      std::set<std::string> all;
      for (const auto* group : {&fold.test, &fold.val, &fold.train})
        for (const std::string& s : *group) {
          CHECK(all.insert(s).second);  // disjoint groups
        }
      CHECK(all.size() == roster.size());  // union covers the roster
      CHECK(fold.val.size() == 2);
      for (const std::string& s : fold.test) CHECK(tested.insert(s).second);
    }
    CHECK(tested.size() == roster.size());  // every subject tested exactly once
  }
}

TEST_CASE("fold plan serializes for audit") {
  fs::path dir = fresh_dir("har_foldplan");
  std::vector<std::string> roster = {"a", "b", "c", "d"};
  FoldPlan plan = make_folds(roster, 2, 1, 5);
  write_fold_plan(plan, dir / "folds.json");
  std::ifstream in(dir / "folds.json");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text.find("\"test\"") != std::string::npos);
  CHECK(text.find("\"seed\": 5") != std::string::npos);
}
