#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

namespace fs = std::filesystem;
using namespace detpol;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("detpol_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string file(const std::string& name, const std::string& text) {
    std::string p = (dir_ / name).string();
    std::ofstream(p) << text;
    return p;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

Json report_of(const std::string& err) {
  // The report is the last line on the error stream.
  std::string line, last;
  std::istringstream in(err);
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  return Json::parse(last);
}

std::vector<std::vector<double>> csv_rows(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_F(CliTest, BrokenRowSumIsRejectedWithFieldPath) {
  Json doc = model_to_json(unit_interval_onestep());
  doc["kernel"][0][1]["absorb"] = 0.5;
  auto r = run({"validate", file("bad.json", doc.dump())});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error: kernel[0][1]"), std::string::npos) << r.err;
  EXPECT_EQ(report_of(r.err)["path"], "kernel[0][1]");
  EXPECT_TRUE(r.out.empty());
}

TEST_F(CliTest, MissingFileIsAnIoError) {
  auto r = run({"validate", path("nope.json")});
  EXPECT_EQ(r.code, 4);
}

TEST_F(CliTest, UnknownCommandIsAParseError) {
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"builtin", "random"}).code, 2);
  EXPECT_EQ(run({"builtin", "no-such-model"}).code, 2);
}

TEST_F(CliTest, CertifyOneStepModel) {
  auto r = run({"certify", "builtin:lyapunov-onestep"});
  ASSERT_EQ(r.code, 0) << r.err;
  Json j = Json::parse(r.out);
  EXPECT_DOUBLE_EQ(j["L"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(j["tail"][1].get<double>(), 0.0);
  EXPECT_EQ(report_of(r.err)["status"], "ok");
}

TEST_F(CliTest, CertifyTruncatedCountableExampleCarriesNote) {
  auto r = run({"certify", "builtin:example-3.12:5"});
  ASSERT_EQ(r.code, 0) << r.err;
  Json j = Json::parse(r.out);
  EXPECT_NE(j["note"].get<std::string>().find("truncation only"), std::string::npos);
}

TEST_F(CliTest, CertifyConvertsDiscountedModels) {
  std::string m = path("d.json");
  AtomlessMDP::Spec s = unit_interval_onestep().spec();
  s.kind = ModelKind::discounted;
  s.beta = 0.5;
  s.kernel[0][0] = KernelRow{PieceMeasure::uniform(1.0), 0.0};
  s.kernel[0][1] = KernelRow{PieceMeasure::uniform(1.0), 0.0};
  save_model(m, AtomlessMDP(s));
  auto r = run({"certify", m});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(Json::parse(r.out)["L"].get<double>(), 2.0, 1e-9);
}

TEST_F(CliTest, UnitIntervalPathIsLinear) {
  std::string p0 = file("p0.txt", "# policy deterministic\n0 1 0\n");
  std::string p1 = file("p1.txt", "# policy deterministic\n0 1 1\n");
  auto r = run({"path", "builtin:unit-interval-onestep", p0, p1, "--grid", "11"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "alpha,threshold,v0,tv_prev,tv_bound");
  auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 11u);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EXPECT_NEAR(rows[k][2], 0.1 * static_cast<double>(k), 1e-12);
    EXPECT_LE(rows[k][3], rows[k][4] + 1e-12);
  }
}

TEST_F(CliTest, MixOnUnitIntervalHasOneBreakpoint) {
  std::string p0 = file("p0.txt", "# policy deterministic\n0 1 0\n");
  std::string p1 = file("p1.txt", "# policy deterministic\n0 1 1\n");
  auto r = run({"mix", "builtin:unit-interval-onestep", p0, p1, "0.5"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto p = std::get<DeterministicPolicy>(parse_policy(r.out));
  ASSERT_EQ(p.partition.size(), 2u);
  EXPECT_NEAR(p.partition.lo(1), 0.5, 1e-6);
  Json rep = report_of(r.err);
  EXPECT_LE(rep["certificate"]["error"].get<double>(), 1e-6);
}

TEST_F(CliTest, MixRejectsLambdaOutsideUnitInterval) {
  std::string p0 = file("p0.txt", "0 1 0\n");
  EXPECT_EQ(run({"mix", "builtin:unit-interval-onestep", p0, p0, "1.5"}).code, 2);
}

TEST_F(CliTest, DerandomizeDeterministicPolicyIsByteIdentical) {
  const std::string text = "# policy deterministic\n0 0.25 1\n0.25 1 0\n";
  std::string in = file("phi.txt", text);
  std::string out = path("out.txt");
  auto r = run({"derandomize", "builtin:unit-interval-onestep", in, "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  EXPECT_EQ(read_text(out), text);
  EXPECT_EQ(report_of(r.err)["outputs"][0], out);
}

TEST_F(CliTest, DerandomizeStationaryPolicy) {
  std::string in = file("pi.txt", "# policy stationary\n0 1 0.3 0.7\n");
  auto r = run({"derandomize", "builtin:unit-interval-onestep", in, "--tol", "1e-9"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto phi = std::get<DeterministicPolicy>(parse_policy(r.out));
  EXPECT_NEAR(exact_performance(unit_interval_onestep(), phi)[0], 0.7, 1e-9);
}

TEST_F(CliTest, EvaluateWritesCriterionTable) {
  std::string in = file("pi.txt", "# policy stationary\n0 1 0.3 0.7\n");
  auto r = run({"evaluate", "builtin:unit-interval-onestep", in});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0][1], 0.7, 1e-12);
}

TEST_F(CliTest, LyapunovFindHalfHalf) {
  auto r = run({"lyapunov", "find", "builtin:lyapunov-onestep", "0.5", "0.5"});
  ASSERT_EQ(r.code, 0) << r.err;
  // Re-integrate the printed set against the densities.
  VectorMeasure vm = linear_density_example();
  std::vector<std::pair<double, double>> iv;
  std::istringstream in(r.out);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double lo, hi;
    ls >> lo >> hi;
    iv.emplace_back(lo, hi);
  }
  Eigen::VectorXd got = measure_of(vm, normalized(iv));
  EXPECT_NEAR(got[0], 0.5, 1e-6);
  EXPECT_NEAR(got[1], 0.5, 1e-6);
}

TEST_F(CliTest, LyapunovFindOutsideRangeIsCertifiedFailure) {
  auto r = run({"lyapunov", "find", "builtin:lyapunov-onestep", "0.5", "0.9"});
  EXPECT_EQ(r.code, 3);
}

TEST_F(CliTest, LyapunovHullFromDensityFile) {
  std::string d = file("d.json", vector_measure_to_json(linear_density_example(8)).dump());
  auto r = run({"lyapunov", "hull", d, "--grid", "16"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(csv_rows(r.out).size(), 16u);
}

TEST_F(CliTest, BuiltinRoundTrip) {
  for (std::string name : {"unit-interval-onestep", "example-3.12:4", "lyapunov-onestep:16"}) {
    std::string out = path("m.json");
    auto r = run({"builtin", name, "--out", out});
    ASSERT_EQ(r.code, 0) << r.err;
    AtomlessMDP loaded = load_model(out);
    EXPECT_EQ(model_to_json(loaded), model_to_json(builtin(name))) << name;
  }
  auto r = run({"builtin", "random", "--seed", "7"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(model_to_json(parse_model(r.out)), model_to_json(random_model(7)));
}

TEST_F(CliTest, WeightTransformPreservesValues) {
  AtomlessMDP m = random_model(3);
  std::string src = path("m.json");
  save_model(src, m);
  std::string w = "1";
  for (std::size_t k = 1; k < m.cells(); ++k) w += "," + std::to_string(1.0 + 0.02 * static_cast<double>(k));
  auto r = run({"transform", "weight", src, w});
  ASSERT_EQ(r.code, 0) << r.err;
  AtomlessMDP t = parse_model(r.out);
  auto phi = constant_policy(m, 0);
  EXPECT_LE((exact_performance(t, phi) - exact_performance(m, phi)).norm(), 1e-9);
}
