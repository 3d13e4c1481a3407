#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "spiderem/config.hpp"

using namespace spiderem;

namespace {

struct TempSpec {
  std::string path;
  explicit TempSpec(const std::string& name, const std::string& contents)
      : path("config_tmp_" + name) {
    std::ofstream out(path);
    out << contents;
  }
  ~TempSpec() { std::filesystem::remove(path); }
};

}  // namespace

TEST_SUITE_BEGIN("config");

TEST_CASE("minimal spec parses with defaults") {
  TempSpec f("minimal.spec",
             "strategies = full-ctt\n"
             "k_out = 5\n"
             "b = 7\n");
  const auto spec = load_spec(f.path);
  CHECK(spec.strategies == std::vector<std::string>{"full-ctt"});
  CHECK(spec.k_out == 5);
  CHECK(spec.b == 7);
  CHECK(spec.dataset == "synth");
  CHECK(spec.validate().empty());
}

TEST_CASE("comments, sections and overrides") {
  TempSpec f("overrides.spec",
             "# benchmark grid\n"
             "strategies = full-ctt, half-geom  ; two of them\n"
             "k_out = 3\n"
             "b = 4\n"
             "gamma = 0.02\n"
             "[strategy:half-geom]\n"
             "gamma = 0.005\n"
             "gamma_reset = 0.1\n");
  const auto spec = load_spec(f.path);
  CHECK(spec.gamma == 0.02);
  REQUIRE(spec.overrides.count("half-geom") == 1);
  CHECK(*spec.overrides.at("half-geom").gamma == 0.005);
  CHECK(*spec.overrides.at("half-geom").gamma_reset == 0.1);
  CHECK(spec.validate().empty());
}

TEST_CASE("every violated field is reported") {
  TempSpec f("broken.spec",
             "strategies = full-ctt, no-such-strategy\n"
             "replications = 0\n"
             "k_out = 0\n"
             "b = -3\n"
             "gamma = -1\n"
             "warmstart_epochs = -2\n");
  const auto spec = load_spec(f.path);
  const auto violations = spec.validate();
  CHECK(violations.size() == 6);
  const auto mentions = [&](const std::string& needle) {
    for (const auto& v : violations)
      if (v.find(needle) != std::string::npos) return true;
    return false;
  };
  CHECK(mentions("no-such-strategy"));
  CHECK(mentions("replications"));
  CHECK(mentions("k_out"));
  CHECK(mentions("b must"));
  CHECK(mentions("gamma"));
  CHECK(mentions("warmstart_epochs"));
}

TEST_CASE("unknown keys and malformed lines are rejected at parse time") {
  {
    TempSpec f("unknown.spec", "strategies = full-ctt\nnot_a_key = 3\n");
    CHECK_THROWS_WITH_AS(load_spec(f.path), doctest::Contains("not_a_key"),
                         std::runtime_error);
  }
  {
    TempSpec f("noeq.spec", "strategies full-ctt\n");
    CHECK_THROWS_AS(load_spec(f.path), std::runtime_error);
  }
  {
    TempSpec f("badsection.spec", "[something]\n");
    CHECK_THROWS_AS(load_spec(f.path), std::runtime_error);
  }
}

TEST_CASE("missing dataset files are flagged at validation time") {
  TempSpec f("missing.spec",
             "strategies = full-ctt\ndataset = /no/such/file.csv\n");
  const auto spec = load_spec(f.path);
  const auto violations = spec.validate();
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].find("does not exist") != std::string::npos);
}

TEST_CASE("the full experiment grid enumerates seven strategies") {
  TempSpec f("grid.spec",
             "strategies = full-geom, half-geom, quad-geom, full-ctt, half-ctt, "
             "quad-ctt, online-em\n"
             "k_out = 2\nb = 3\n");
  const auto spec = load_spec(f.path);
  CHECK(spec.strategies.size() == 7);
  CHECK(spec.validate().empty());
}

TEST_SUITE_END();
