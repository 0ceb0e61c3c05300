#include <doctest.h>

#include <fstream>

#include "commands.hpp"
#include "effortgen/motion.hpp"
#include "test_support.hpp"

#ifndef EFFORTGEN_CLI
#error "EFFORTGEN_CLI must name the command-line binary"
#endif

using namespace effortgen::cli;

namespace {

int cli(const std::string& args, std::string& out) {
  return testsupport::run_capture(std::string(EFFORTGEN_CLI) + " " + args, out);
}

}

TEST_SUITE("cli") {

TEST_CASE("scale specifications") {
  CHECK(parse_scales("1.0") == std::vector<double>{1.0});
  CHECK(parse_scales("0.7,1.0,1.3") == std::vector<double>{0.7, 1.0, 1.3});
  const auto r = parse_scales("0.7..1.3:0.1");
  REQUIRE(r.size() == 7);
  CHECK(r[0] == 0.7);
  CHECK(r[3] == 1.0);
  CHECK(r[6] == 1.3);
  CHECK_THROWS_AS(parse_scales("1..0:0.1"), UsageError);
  CHECK_THROWS_AS(parse_scales("0..1:0"), UsageError);
  CHECK_THROWS_AS(parse_scales("abc"), UsageError);
  CHECK(split_list("a, b,,c") == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("version string carries the release and a revision") {
  const std::string v = version();
  CHECK(v.rfind("0.1.0-", 0) == 0);
  std::string out;
  CHECK(cli("--version", out) == 0);
  CHECK(out.find(v) != std::string::npos);
}

TEST_CASE("exit codes") {
  const auto dir = testsupport::fresh_dir("cli_exit");
  std::string out;
  CHECK(cli("", out) == kUsage);
  CHECK(cli("metrics extract", out) == kUsage);
  CHECK(cli("metrics baseline --bogus", out) == kUsage);
  CHECK(cli("metrics extract " + (dir / "absent.json").string(), out) == kIo);
  std::ofstream(dir / "bad.json") << "{";
  CHECK(cli("metrics extract " + (dir / "bad.json").string(), out) == kValidation);
  CHECK(cli("generate --model " + (dir / "absent.ckpt").string() + " --out-dir " +
                (dir / "gen").string(),
            out) == kMissingModel);
  CHECK(cli("synth --actions 'a person flies' --count 1 --out-dir " + (dir / "s").string(), out) ==
        kValidation);
}

TEST_CASE("metrics extract prints per-region values") {
  const auto dir = testsupport::fresh_dir("cli_extract");
  effortgen::save_motion(effortgen::synth_motion(4, 0.1, 1.0, 10, 1), dir / "m.json");
  std::string out;
  REQUIRE(cli("metrics extract " + (dir / "m.json").string(), out) == 0);
  const auto j = nlohmann::json::parse(out);
  CHECK(j.at("regions").size() == 7);
  CHECK(j.at("peak").size() == 7);
}

TEST_CASE("run records round trip and replay") {
  const auto dir = testsupport::fresh_dir("cli_replay");
  std::string out;
  REQUIRE(cli("synth --count 2 --frames 6 --seed 3 --out-dir " + (dir / "a").string(), out) == 0);
  const nlohmann::json rec = read_run_record(dir / "a" / "run.json");
  CHECK(rec.at("command") == "synth");
  CHECK(rec.at("count") == 2);
  const auto raw = nlohmann::json::parse(testsupport::read_file(dir / "a" / "run.json"));
  CHECK(raw.at("version") == version());
  REQUIRE(cli("replay " + (dir / "a" / "run.json").string() + " --out-dir " + (dir / "b").string(),
              out) == 0);
  for (const char* f : {"synth_0000.json", "synth_0001.json"}) {
    CHECK(testsupport::read_file(dir / "a" / f) == testsupport::read_file(dir / "b" / f));
  }
  CHECK_THROWS(read_run_record(dir / "missing.json"));
}

TEST_CASE("config file values sit between defaults and flags") {
  const auto dir = testsupport::fresh_dir("cli_config");
  std::ofstream(dir / "cfg.json") << R"({"count": 3, "frames": 6})";
  std::string out;
  REQUIRE(cli("synth --config " + (dir / "cfg.json").string() + " --frames 5 --out-dir " +
                  (dir / "o").string(),
              out) == 0);
  const nlohmann::json rec = read_run_record(dir / "o" / "run.json");
  CHECK(rec.at("count") == 3);
  CHECK(rec.at("frames") == 5);
}

}
