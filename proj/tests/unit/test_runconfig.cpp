#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "pertfool/runconfig.hpp"

using namespace pertfool;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& content) {
    static int counter = 0;
    fs::path p = fs::temp_directory_path() /
                 ("pertfool-cfg-" + std::to_string(::getpid()) + "-" +
                  std::to_string(counter++) + ".cfg");
    std::ofstream os(p);
    os << content;
    return p;
}

}  // namespace

TEST_CASE("config parsing") {
    fs::path p = write_temp(
        "# run settings\n"
        "target = 3\n"
        "eta = 15.5   # inline comment\n"
        "\n"
        "mode = linf\n");
    RunConfig cfg = RunConfig::from_file(p);
    CHECK(cfg.get_int("target", -1) == 3);
    CHECK(cfg.get_real("eta", 0.0) == 15.5);
    CHECK(cfg.get("mode", "") == "linf");
    CHECK(cfg.get("absent", "fallback") == "fallback");
    fs::remove(p);
}

TEST_CASE("malformed lines and duplicates are rejected") {
    fs::path bad = write_temp("target 3\n");
    CHECK_THROWS_AS(RunConfig::from_file(bad), ConfigError);
    fs::remove(bad);

    fs::path dup = write_temp("a = 1\na = 2\n");
    CHECK_THROWS_AS(RunConfig::from_file(dup), ConfigError);
    fs::remove(dup);

    fs::path nokey = write_temp("= 2\n");
    CHECK_THROWS_AS(RunConfig::from_file(nokey), ConfigError);
    fs::remove(nokey);
}

TEST_CASE("unknown keys are rejected") {
    RunConfig cfg;
    cfg.set("eta", "10");
    cfg.set("bogus", "1");
    CHECK_THROWS_AS(cfg.require_known({"eta", "mode"}), ConfigError);
    cfg = RunConfig();
    cfg.set("eta", "10");
    CHECK_NOTHROW(cfg.require_known({"eta", "mode"}));
}

TEST_CASE("type errors are config errors") {
    RunConfig cfg;
    cfg.set("n", "12x");
    CHECK_THROWS_AS(cfg.get_int("n", 0), ConfigError);
    cfg.set("x", "1.5.2");
    CHECK_THROWS_AS(cfg.get_real("x", 0.0), ConfigError);
}

TEST_CASE("render emits canonical sorted key = value lines") {
    RunConfig cfg;
    cfg.set("zeta", "1");
    cfg.set("alpha", "2");
    CHECK(cfg.render() == "alpha = 2\nzeta = 1\n");

    // flag overrides replace file values
    cfg.set("zeta", "9");
    CHECK(cfg.get_int("zeta", 0) == 9);
}
