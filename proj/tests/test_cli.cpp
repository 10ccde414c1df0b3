#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"

using namespace kahler;
using kahler::io::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
  json doc() const { return json::parse(out); }
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "kahler");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Mat rows_of(const json& m) { return io::matrix_from_json(m); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("kahler_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ::setenv("KAHLER_PROBE_CACHE", (dir_ / "cache.json").c_str(), 1);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

const std::string kTorusPoint = "0.5,0.5,0.5,0.5";

}  // namespace

TEST_F(Cli, DeltaIsByteIdenticalAcrossRunsAndCache) {
  const auto first = run({"delta", "--dim", "4", "--seed", "7"});
  ASSERT_EQ(first.code, 0) << first.err;
  EXPECT_TRUE(fs::exists(path("cache.json")));
  const auto second = run({"delta", "--dim", "4", "--seed", "7"});
  const auto uncached = run({"delta", "--dim", "4", "--seed", "7", "--no-cache"});
  EXPECT_EQ(first.out, second.out);
  EXPECT_EQ(first.out, uncached.out);
  const json r = first.doc().at("result");
  EXPECT_NEAR(r.at("delta").get<double>(), 1.53294, 1e-5);
  EXPECT_EQ(r.at("n"), 2);
  EXPECT_EQ(first.doc().at("config").at("seed"), 7);
}

TEST_F(Cli, EpsilonOverrideBypassesTheCache) {
  const auto r = run({"delta", "--dim", "6", "--epsilon-override", "1.0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_FALSE(fs::exists(path("cache.json")));
  const json d = r.doc().at("result");
  EXPECT_EQ(d.at("curvature_method"), "user_override");
  EXPECT_EQ(d.at("epsilon_used"), 1.0);
}

TEST_F(Cli, FlatTorusProbeIsKahler) {
  const auto r = run({"probe", "--manifold", "flat_torus_4", "--point", kTorusPoint, "--grid", "9", "--no-refine"});
  ASSERT_EQ(r.code, 0) << r.err << r.out;
  const json v = r.doc().at("result");
  EXPECT_EQ(v.at("kind"), "KahlerWitness");
  EXPECT_LT(v.at("certificates").at("coarse").at("nabla_j_residual").get<double>(), 1e-8);
  EXPECT_EQ(v.at("witness"), nullptr);
  EXPECT_TRUE(v.at("j_prime").is_object());
}

TEST_F(Cli, MeanOfTwoPointsIsTheGeodesicMidpoint) {
  const std::string fixture = std::string(KAHLER_TEST_DATA) + "/two_points.json";
  const auto r = run({"mean", "--input", fixture});
  ASSERT_EQ(r.code, 0) << r.err << r.out;
  const json expected = io::read_file(fixture).at("midpoint");
  EXPECT_LT(max_abs(rows_of(r.doc().at("result").at("mean")) - rows_of(expected)), 1e-8);
  EXPECT_TRUE(r.doc().at("result").at("converged").get<bool>());
  const auto d = r.doc().at("result").at("distances_to_mean");
  EXPECT_NEAR(d[0].get<double>(), d[1].get<double>(), 1e-10);
}

TEST_F(Cli, TransportOrbitMeanRoundTrip) {
  const auto t = run({"transport", "--manifold", "round_sphere_4", "--point", "0.1,0.2,0.3,-0.2", "--loops", "3", "--loop-scale", "0.4",
                      "--word-length", "2", "--ode-steps", "500", "--out", path("h.json")});
  ASSERT_EQ(t.code, 0) << t.err << t.out;
  EXPECT_TRUE(t.out.empty());

  // Feeding the samples back gives the same orbit as sampling directly.
  const auto from_file = run({"orbit", "--holonomy", path("h.json"), "--out", path("o.json")});
  ASSERT_EQ(from_file.code, 0) << from_file.err << from_file.out;
  const auto direct = run({"orbit", "--manifold", "round_sphere_4", "--point", "0.1,0.2,0.3,-0.2", "--loops", "3", "--loop-scale", "0.4",
                           "--word-length", "2", "--ode-steps", "500"});
  ASSERT_EQ(direct.code, 0) << direct.err;
  const json a = io::read_file(path("o.json")).at("result"), b = direct.doc().at("result");
  EXPECT_EQ(a.at("distances"), b.at("distances"));
  EXPECT_EQ(a.at("argmax_word"), b.at("argmax_word"));

  const auto m = run({"mean", "--input", path("o.json"), "--out", path("m.json")});
  ASSERT_EQ(m.code, 0) << m.err << m.out;
  EXPECT_EQ(io::read_file(path("m.json")).at("result").at("distances_to_mean").size(), a.at("orbit").size());

  // The mean is accepted wherever a structure is expected.
  const auto again = run({"orbit", "--holonomy", path("h.json"), "--j", path("m.json")});
  ASSERT_EQ(again.code, 0) << again.err << again.out;
  EXPECT_LT(max_abs(rows_of(again.doc().at("result").at("base_j")) - rows_of(io::read_file(path("m.json")).at("result").at("mean"))), 1e-15);
}

TEST_F(Cli, ObstructionVerdictReplays) {
  const auto p = run({"probe", "--manifold", "round_sphere_4", "--point", "0,0,0,0", "--out", path("v.json"), "--csv", path("v.csv")});
  ASSERT_EQ(p.code, 0) << p.err << p.out;
  const json v = io::read_file(path("v.json")).at("result");
  ASSERT_EQ(v.at("kind"), "HolonomyObstruction");
  EXPECT_EQ(slurp(path("v.csv")).rfind("index,word,distance\n", 0), 0u);

  const auto r = run({"transport", "--replay", path("v.json")});
  ASSERT_EQ(r.code, 0) << r.err << r.out;
  const json rr = r.doc().at("result");
  EXPECT_TRUE(rr.at("exceeds_delta").get<bool>());
  EXPECT_NEAR(rr.at("replayed_distance").get<double>(), v.at("witness").at("distance").get<double>(), 1e-6);
}

TEST_F(Cli, ReplayOfAKahlerVerdictIsADomainError) {
  ASSERT_EQ(run({"probe", "--manifold", "flat_torus_4", "--point", kTorusPoint, "--grid", "9", "--no-refine", "--out", path("k.json")}).code, 0);
  const auto r = run({"transport", "--replay", path("k.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.doc().at("error"), "ParseError");
}

TEST_F(Cli, StraightTransportBetweenPoints) {
  const auto r = run({"transport", "--manifold", "flat_torus_4", "--point", "0.2,0.2,0.2,0.2", "--to", "0.7,0.3,0.4,0.6"});
  ASSERT_EQ(r.code, 0) << r.err << r.out;
  EXPECT_LT(max_abs(rows_of(r.doc().at("result").at("matrix")) - Mat::Identity(4, 4)), 1e-14);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"delta", "--bogus"}).code, 1);
  EXPECT_EQ(run({"mean"}).code, 1);
  EXPECT_EQ(run({"probe", "--manifold", "flat_torus_4", "--point", "0.5,x"}).code, 1);
  EXPECT_EQ(run({"probe", "--manifold", "flat_torus_4", "--point", "0.5,0.5"}).code, 1);
  EXPECT_EQ(run({"mean", "--input", path("missing.json")}).code, 1);
  EXPECT_EQ(run({"delta", "--help"}).code, 0);

  const auto odd = run({"delta", "--dim", "5"});
  EXPECT_EQ(odd.code, 2);
  EXPECT_EQ(odd.doc().at("error"), "OddDimension");
  EXPECT_EQ(run({"delta", "--dim", "2"}).doc().at("error"), "DimensionTooSmall");
  EXPECT_EQ(run({"probe", "--manifold", "hyperbolic", "--point", "0,0"}).doc().at("error"), "UnknownManifold");
  EXPECT_EQ(run({"probe", "--manifold", "round_sphere_4", "--point", "5,0,0,0"}).doc().at("error"), "OutsideDomain");
  EXPECT_EQ(run({"probe", "--manifold", "flat_torus_4", "--point", kTorusPoint, "--delta-dim", "6"}).doc().at("error"), "DimensionMismatch");

  std::ofstream(path("bad.json")) << "{ not json";
  const auto bad = run({"mean", "--input", path("bad.json")});
  EXPECT_EQ(bad.code, 2);
  EXPECT_EQ(bad.doc().at("error"), "ParseError");
}

TEST_F(Cli, ConfigFileMergesAndFlagsWin) {
  std::ofstream(path("c.json")) << R"({"subcommand": "delta", "dim": 4, "seed": 7, "samples": 2000})";
  const auto from_config = run({"--config", path("c.json")});
  ASSERT_EQ(from_config.code, 0) << from_config.err;
  EXPECT_EQ(from_config.out, run({"delta", "--dim", "4", "--seed", "7"}).out);

  const auto overridden = run({"delta", "--config", path("c.json"), "--seed", "3"});
  ASSERT_EQ(overridden.code, 0) << overridden.err;
  EXPECT_EQ(overridden.doc().at("config").at("seed"), 3);

  // The resolved config embedded in an output reproduces it.
  std::ofstream(path("resolved.json")) << from_config.doc().at("config").dump();
  EXPECT_EQ(run({"--config", path("resolved.json")}).out, from_config.out);

  std::ofstream(path("typo.json")) << R"({"subcommand": "delta", "dimm": 4})";
  const auto typo = run({"--config", path("typo.json")});
  EXPECT_EQ(typo.code, 1);
  EXPECT_NE(typo.err.find("dimm"), std::string::npos);
  std::ofstream(path("clash.json")) << R"({"subcommand": "mean"})";
  EXPECT_EQ(run({"delta", "--config", path("clash.json")}).code, 1);
}

TEST_F(Cli, ArrayValuedConfigKeys) {
  std::ofstream(path("c.json")) << R"({"manifold": "flat_torus_4", "point": [0.5, 0.5, 0.5, 0.5], "grid": 9, "no-refine": true})";
  const auto r = run({"probe", "--config", path("c.json")});
  ASSERT_EQ(r.code, 0) << r.err << r.out;
  EXPECT_EQ(r.doc().at("result").at("kind"), "KahlerWitness");
}

TEST_F(Cli, OutputDoesNotDependOnThreadCount) {
  const std::vector<std::string> args = {"orbit", "--manifold", "round_sphere_4", "--point", "0.2,0.1,-0.1,0.3", "--loop-kind", "fourier_random",
                                         "--loops", "4", "--loop-scale", "0.5", "--ode-steps", "500", "--seed", "5"};
  auto one = args, four = args;
  one.insert(one.end(), {"--threads", "1"});
  four.insert(four.end(), {"--threads", "4"});
  const auto a = run(one), b = run(four);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  set_max_threads(0);
}

TEST_F(Cli, TimestampIsOptIn) {
  EXPECT_FALSE(run({"delta"}).doc().contains("timestamp"));
  const auto r = run({"--timestamp", "delta"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.doc().contains("timestamp"));
  EXPECT_EQ(run({"delta", "--timestamp", "--no-timestamp"}).code, 1);
}
