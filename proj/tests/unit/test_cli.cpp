#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <gtest/gtest.h>

#include "degenflow/cli/config.hpp"
#include "degenflow/cli/experiment.hpp"
#include "degenflow/cli/output.hpp"
#include "degenflow/cli/validation.hpp"

using namespace degenflow;
using namespace degenflow::cli;
namespace fs = std::filesystem;

namespace {

const char* kCylinder =
    "[model]\n"
    "geometry = cylinder\n"
    "height = 1\n"
    "delta = 0.4\n"
    "[model.boundary.1]\n"
    "alpha = 1\n"
    "beta = 0.5\n"
    "[model.boundary.2]\n";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("degenflow-test-") + info->name());
    fs::remove_all(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  std::string sub(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

ConfigError parse_failure(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "config parsed without errors";
  return ConfigError({});
}

}  // namespace

TEST(ParseConfig, MinimalCylinderGetsDefaults) {
  const auto plans = parse_config(std::string(kCylinder) + "[experiment]\nkind = spectral\n");
  ASSERT_EQ(plans.size(), 1u);
  const auto& p = plans[0];
  EXPECT_EQ(p.kind, ExperimentKind::Spectral);
  EXPECT_EQ(p.spectral_n, 256);
  EXPECT_EQ(p.n, 256u);
  EXPECT_EQ(p.bins, 32);
  EXPECT_EQ(p.seed, 0u);
  const SimConfig defaults;
  EXPECT_EQ(p.sim.dt, defaults.dt);
  EXPECT_EQ(p.sim.dt_interior, defaults.dt_interior);
  EXPECT_EQ(p.sim.dt_tube, defaults.dt_tube);
  EXPECT_EQ(p.sim.dt_log, defaults.dt_log);
  EXPECT_EQ(p.sim.dt_micro, defaults.dt_micro);
  ASSERT_EQ(p.model.boundaries.size(), 2u);
  EXPECT_EQ(p.model.boundaries[0].coefficients.beta(1.0), 0.5);
  EXPECT_EQ(p.model.boundaries[1].coefficients.beta(1.0), BoundaryCoefficients{}.beta(1.0));
}

TEST(ParseConfig, FourierListsAndComments) {
  const auto plans = parse_config(
      "[model]\nheight = 1 # unit height\ndelta = 0.4\n"
      "[model.boundary.1]\nalpha.cos = 1, 0.3\nbeta.cos = 0.5\nbeta.sin = 0, 0.2 ; second harmonic\n"
      "[model.boundary.2]\n[experiment]\nkind = spectral\n");
  const auto& bc = plans[0].model.boundaries[0].coefficients;
  EXPECT_NEAR(bc.alpha(0.0), 1.3, 1e-15);
  EXPECT_NEAR(bc.alpha(kTwoPi / 2), 0.7, 1e-15);
  EXPECT_NEAR(bc.beta(kTwoPi / 8), 0.7, 1e-15);
}

TEST(ParseConfig, NegativeAlphaNamesFunctionBoundaryAndAngle) {
  const auto e = parse_failure(
      "[model]\nheight = 1\ndelta = 0.4\n[model.boundary.1]\n"
      "[model.boundary.2]\nalpha.cos = 0.5, 1\n[experiment]\nkind = spectral\n");
  EXPECT_EQ(e.code(), ErrorCode::ValidationError);
  ASSERT_EQ(e.issues().size(), 1u);
  const std::string msg = e.issues()[0].message;
  EXPECT_NE(msg.find("alpha"), std::string::npos) << msg;
  EXPECT_NE(msg.find("boundary 2"), std::string::npos) << msg;
  std::smatch m;
  ASSERT_TRUE(std::regex_search(msg, m, std::regex("theta=([0-9.eE+-]+)"))) << msg;
  // alpha(theta) = 0.5 + cos(theta) first turns negative at theta = 2 pi / 3 and
  // is most negative at pi; the reported angle lies in the negative arc.
  const double theta = std::stod(m[1]);
  EXPECT_GT(theta, kTwoPi / 3.0);
  EXPECT_LT(theta, 2.0 * kTwoPi / 3.0);
  EXPECT_LT(0.5 + std::cos(theta), 0.0);
}

TEST(ParseConfig, CollectsAllIssues) {
  const auto e = parse_failure(
      "[model]\nheight = 1\ndelta = 0.4\ncolour = red\n[model.boundary.1]\nrho = -1\n"
      "[model.boundary.2]\n[sim]\ndt = fast\n[experiment]\nkind = exitprob\n");
  EXPECT_EQ(e.code(), ErrorCode::ParseError);
  std::vector<std::string> keys;
  for (const auto& is : e.issues()) keys.push_back(is.key);
  auto has = [&](const std::string& k) { return std::find(keys.begin(), keys.end(), k) != keys.end(); };
  EXPECT_TRUE(has("model.colour"));
  EXPECT_TRUE(has("sim.dt"));
  EXPECT_TRUE(has("model.boundary.1"));
  EXPECT_TRUE(has("experiment.kappa"));
  for (const auto& is : e.issues()) {
    if (is.key == "model.colour") {
      EXPECT_EQ(is.line, 4);
      EXPECT_EQ(is.code, ErrorCode::ParseError);
    }
  }
}

TEST(ParseConfig, MissingBoundaryIndexRejected) {
  const auto e = parse_failure(std::string(kCylinder) + "[experiment]\nkind = hitmeasure\nkappa = 0.1\nboundary = 3\n");
  ASSERT_FALSE(e.issues().empty());
  EXPECT_EQ(e.issues()[0].key, "experiment.boundary");
}

TEST(ParseConfig, SharedModelGivesIdenticalHash) {
  const auto plans = parse_config(std::string(kCylinder) +
                                  "[sim]\neps = 1e-2\n[experiment.a]\nkind = spectral\n"
                                  "[experiment.b]\nkind = hitmeasure\nkappa = 0.1\n");
  ASSERT_EQ(plans.size(), 2u);
  EXPECT_EQ(plans[0].name, "a");
  EXPECT_EQ(plans[1].name, "b");
  EXPECT_EQ(plans[0].model_hash, plans[1].model_hash);
  EXPECT_NE(plans[0].kind, plans[1].kind);

  std::string changed = kCylinder;
  changed.replace(changed.find("beta = 0.5"), 10, "beta = 0.6");
  const auto other = parse_config(changed + "[experiment]\nkind = spectral\n");
  EXPECT_NE(other[0].model_hash, plans[0].model_hash);
}

TEST(ParseConfig, LoadResolvesKernelRelativeToConfig) {
  TempDir dir;
  fs::create_directories(dir.path() / "cfg");
  std::ofstream(dir.path() / "cfg" / "h.cfg")
      << "[model]\ngeometry = periodic_plane\ndelta = 0.1\n[model.boundary.1]\ncenter = 0.5, 0.5\n"
         "radius = 0.25\n[experiment]\nkind = homogenize\nkernel = kernel.json\n";
  const auto plans = load_config((dir.path() / "cfg" / "h.cfg").string());
  EXPECT_EQ(fs::path(plans[0].kernel_file), dir.path() / "cfg" / "kernel.json");
}

TEST(Output, DoublesRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 1.0 + 1e-15}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(render_json(nlohmann::json{{"x", 0.1}, {"bad", std::nan("")}}, 0), "{\"bad\":null,\"x\":0.10000000000000001}\n");
}

TEST(Output, CsvRowsAreSorted) {
  CsvTable t;
  t.header = {"k", "v", "s"};
  t.add({2LL, 0.5, std::string("b")});
  t.add({1LL, 0.25, std::string("x,y")});
  EXPECT_EQ(t.render(), "k,v,s\n1,0.25,\"x,y\"\n2,0.5,b\n");
}

TEST(RunExperiment, SpectralSummaryHasGamma) {
  TempDir dir;
  const auto plans = parse_config(std::string(kCylinder) + "[experiment]\nkind = spectral\n");
  RunSettings rs;
  rs.out_dir = dir.sub("out");
  const auto res = run_experiment(plans[0], rs);
  ASSERT_EQ(res.exit_code, 0) << res.error;
  const auto summary = nlohmann::json::parse(read_file(dir.path() / "out" / "summary.json"));
  EXPECT_NEAR(summary["spectral"][0]["gamma"].get<double>(), 0.5, 1e-6);
  EXPECT_EQ(summary["model_hash"], hex_hash(plans[0].model_hash));
  EXPECT_EQ(summary["version"], version_string());
  EXPECT_TRUE(summary.contains("wall_time_s"));
  EXPECT_TRUE(summary.contains("total_paths"));
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "spectral_1.json"));
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "spectral_2.json"));
  const auto sol = nlohmann::json::parse(read_file(dir.path() / "out" / "spectral_1.json"));
  EXPECT_EQ(sol["phi"].size(), 256u);
}

TEST(RunExperiment, RerunsAreByteIdenticalAcrossThreadCounts) {
  TempDir dir;
  const auto plans = parse_config(std::string(kCylinder) +
                                  "[sim]\neps = 1e-2\n[experiment]\nkind = exitprob\nkappa = 0.1\n"
                                  "zeta_ratio = 0.25, 0.5\nn = 300\nseed = 9\n");
  std::string csv[3];
  const int threads[3] = {1, 1, 3};
  for (int i = 0; i < 3; ++i) {
    RunSettings rs;
    rs.out_dir = dir.sub("run" + std::to_string(i));
    rs.threads = threads[i];
    ASSERT_EQ(run_experiment(plans[0], rs).exit_code, 0);
    csv[i] = read_file(fs::path(rs.out_dir) / "results.csv");
  }
  EXPECT_FALSE(csv[0].empty());
  EXPECT_EQ(csv[0], csv[1]);
  EXPECT_EQ(csv[0], csv[2]);

  RunSettings other;
  other.out_dir = dir.sub("seed");
  other.seed = 10;
  ASSERT_EQ(run_experiment(plans[0], other).exit_code, 0);
  EXPECT_NE(read_file(dir.path() / "seed" / "results.csv"), csv[0]);
}

TEST(RunExperiment, AddingGridPointsKeepsExistingRows) {
  TempDir dir;
  const std::string base = std::string(kCylinder) + "[sim]\neps = 1e-2\n[experiment]\nkind = exitprob\nkappa = 0.1\nn = 200\n";
  RunSettings a, b;
  a.out_dir = dir.sub("a");
  b.out_dir = dir.sub("b");
  ASSERT_EQ(run_experiment(parse_config(base + "zeta_ratio = 0.5\n")[0], a).exit_code, 0);
  ASSERT_EQ(run_experiment(parse_config(base + "zeta_ratio = 0.25, 0.5\n")[0], b).exit_code, 0);
  std::istringstream one(read_file(dir.path() / "a" / "results.csv"));
  const std::string both = read_file(dir.path() / "b" / "results.csv");
  std::string line;
  while (std::getline(one, line)) EXPECT_NE(both.find(line), std::string::npos) << line;
}

TEST(RunExperiment, ExhaustedBudgetGivesExitCodeTwo) {
  TempDir dir;
  const auto plans = parse_config(std::string(kCylinder) +
                                  "[sim]\neps = 1e-2\nmax_time = 1e-3\n[experiment]\nkind = exittime\nkappa = 0.1\nn = 50\n");
  RunSettings rs;
  rs.out_dir = dir.sub("out");
  const auto res = run_experiment(plans[0], rs);
  EXPECT_EQ(res.exit_code, 2);
  const auto summary = nlohmann::json::parse(read_file(dir.path() / "out" / "summary.json"));
  EXPECT_GT(summary["budget_exhausted_fraction"].get<double>(), 0.01);
  EXPECT_EQ(summary["exit_code"], 2);
}

TEST(RunExperiment, InnerErrorsAreRecorded) {
  TempDir dir;
  // Gamma_kappa beyond the tube.
  const auto plans = parse_config(std::string(kCylinder) + "[sim]\neps = 1e-2\n[experiment]\nkind = exittime\nkappa = 0.9\nn = 10\n");
  RunSettings rs;
  rs.out_dir = dir.sub("out");
  const auto res = run_experiment(plans[0], rs);
  EXPECT_EQ(res.exit_code, 1);
  const auto summary = nlohmann::json::parse(read_file(dir.path() / "out" / "summary.json"));
  EXPECT_EQ(summary["status"], "error");
  EXPECT_NE(summary["error"].get<std::string>().find("LevelOutOfChart"), std::string::npos);
}

TEST(RunExperiment, KernelJsonRoundTrip) {
  RenewalWalkModel walk;
  walk.rows = {{{{1, 0}, 0, 0.25}, {{-1, 0}, 1, 0.75}}, {{{0, 2}, 0, 1.0}}};
  walk.c = {1.5, 0.5};
  const auto back = walk_from_json(walk_to_json(walk));
  ASSERT_EQ(back.types(), 2);
  EXPECT_EQ(back.rows[0][1].shift, (Cell{-1, 0}));
  EXPECT_EQ(back.rows[0][1].to, 1);
  EXPECT_EQ(back.rows[1][0].prob, 1.0);
  EXPECT_EQ(back.c, walk.c);
  EXPECT_THROW(walk_from_json(nlohmann::json{{"rows", 3}}), Error);
}

TEST(RunExperiment, HomogenizeFromKernelFile) {
  TempDir dir;
  fs::create_directories(dir.path());
  RenewalWalkModel walk;
  walk.rows = {{{{1, 0}, 0, 0.25}, {{-1, 0}, 0, 0.25}, {{0, 1}, 0, 0.25}, {{0, -1}, 0, 0.25}}};
  walk.c = {1.0};
  write_file(dir.sub("kernel.json"), render_json(walk_to_json(walk)));
  std::ofstream(dir.path() / "h.cfg") << "[model]\ngeometry = periodic_plane\ndelta = 0.1\n[model.boundary.1]\n"
                                          "center = 0.5, 0.5\nradius = 0.25\n[experiment]\nkind = homogenize\n"
                                          "kernel = kernel.json\nwalk_steps = 100000\nwalks = 50\n";
  const auto plans = load_config(dir.sub("h.cfg"));
  RunSettings rs;
  rs.out_dir = dir.sub("out");
  const auto res = run_experiment(plans[0], rs);
  ASSERT_EQ(res.exit_code, 0) << res.error;
  const auto summary = nlohmann::json::parse(read_file(dir.path() / "out" / "summary.json"));
  const auto& eff = summary["results"]["effective"];
  EXPECT_NEAR(eff["B"][0][0].get<double>(), 0.5, 1e-12);
  EXPECT_NEAR(eff["B"][1][1].get<double>(), 0.5, 1e-12);
  EXPECT_NEAR(eff["B"][0][1].get<double>(), 0.0, 1e-12);
}

TEST(Validation, FastLevelPasses) {
  ValidationOptions opt;
  const auto report = validate_suite(opt);
  ASSERT_EQ(report.criteria.size(), 3u);
  EXPECT_TRUE(report.all_passed());
  std::vector<int> ids;
  for (const auto& c : report.criteria) {
    ids.push_back(c.id);
    EXPECT_FALSE(c.tolerance.empty());
    EXPECT_EQ(format_result(c).rfind("PASS " + std::to_string(c.id), 0), 0u);
  }
  EXPECT_EQ(ids, (std::vector<int>{1, 2, 6}));
}

TEST(Validation, InjectedBetaSignErrorFailsGamma) {
  ValidationOptions opt;
  opt.inject_beta_sign_error = true;
  const auto report = validate_suite(opt);
  ASSERT_FALSE(report.criteria.empty());
  const auto& c1 = report.criteria[0];
  EXPECT_EQ(c1.id, 1);
  EXPECT_FALSE(c1.passed);
  std::smatch m;
  ASSERT_TRUE(std::regex_search(c1.measured, m, std::regex("gamma=([0-9.eE+-]+)")));
  EXPECT_NEAR(std::stod(m[1]), 1.5, 1e-6);
  EXPECT_FALSE(report.all_passed());
}

TEST(Validation, CommitmentOracleWithoutDrift) {
  // beta = 0 on both sides: no drift anywhere, so the scale function is linear.
  std::vector<BoundarySpec> b(2);
  b[0].coefficients.beta = FourierSeries(0.0);
  b[1].coefficients.beta = FourierSeries(0.0);
  InteriorSpec in;
  in.height = 1.0;
  in.delta = 0.4;
  const auto model = Model::build(GeometryKind::Cylinder, b, in);
  for (double y : {0.1, 0.3, 0.5, 0.77}) EXPECT_NEAR(cylinder_commitment(model, y), 1.0 - y, 1e-8);
}

TEST(Validation, CommitmentOracleSymmetry) {
  std::vector<BoundarySpec> b(2);
  b[0].coefficients.beta = FourierSeries(0.3);
  b[1].coefficients.beta = FourierSeries(0.3);
  InteriorSpec in;
  in.height = 1.0;
  in.delta = 0.4;
  const auto model = Model::build(GeometryKind::Cylinder, b, in);
  EXPECT_NEAR(cylinder_commitment(model, 0.5), 0.5, 1e-8);
  EXPECT_NEAR(cylinder_commitment(model, 0.2) + cylinder_commitment(model, 0.8), 1.0, 1e-8);
  EXPECT_GT(cylinder_commitment(model, 0.2), cylinder_commitment(model, 0.3));
}
