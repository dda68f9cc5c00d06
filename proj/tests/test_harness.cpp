#include "perfrl/errors.hpp"
#include "perfrl/harness.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

using namespace perfrl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_doc() {
    return json::parse(R"({
      "env": {"rule": "affine_mix", "n_states": 2, "n_actions": 2, "gamma": 0.8},
      "reg": {"kind": "entropy", "lambda": 0.5},
      "algorithm": {
        "run": "zfw",
        "zfw": {"iterations": 8, "batch": 10, "step": 0.05, "floor": 0.01, "probe": 0.001},
        "retraining": {"outer_iters": 3, "inner_iters": 10, "inner_step": 0.01}
      },
      "seed": 4,
      "output": {"prefix": "t"}
    })");
}

std::string config_error_path(const json& doc) {
    try {
        (void)parse_config(doc);
    } catch (const ConfigError& e) {
        return e.path();
    }
    return "<accepted>";
}

/// Fresh scratch directory per test case.
struct Scratch {
    fs::path dir;
    explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("perfrl_test_" + name)) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    CommandOptions write(const json& doc) const {
        const fs::path path = dir / "config.json";
        std::ofstream(path) << doc.dump(2);
        return {path.string(), dir.string()};
    }
    std::string read(const std::string& file) const {
        std::ifstream in(dir / file, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
};

} // namespace

TEST_CASE("config validation names the offending field") {
    CHECK(config_error_path(small_doc()) == "<accepted>");
    json doc = small_doc();
    doc["env"]["gamma"] = 1.2;
    CHECK(config_error_path(doc) == "env.gamma");
    doc = small_doc();
    doc["env"]["colour"] = "red";
    CHECK(config_error_path(doc) == "env.colour");
    doc = small_doc();
    doc["algorithm"]["zfw"]["probe"] = 0.5;
    CHECK(config_error_path(doc) == "algorithm.zfw");
    doc = small_doc();
    doc["env"]["n_actions"] = 1;
    CHECK(config_error_path(doc) == "env.n_actions");
    doc = small_doc();
    doc["reg"]["kind"] = "tsallis";
    CHECK(config_error_path(doc) == "reg.kind");
    doc = small_doc();
    doc["algorithm"]["retraining"]["inner_step"] = 1.0;
    CHECK(config_error_path(doc) == "algorithm.retraining.inner_step");
    doc = small_doc();
    doc["env"]["rule"] = "interpolated";
    CHECK(config_error_path(doc) == "env.kappa");
}

TEST_CASE("explicit tables are accepted") {
    json doc = small_doc();
    doc["env"]["rule"] = "fixed";
    doc["env"]["kernel"] = json::parse("[[[0.5,0.5],[1,0]],[[0,1],[0.3,0.7]]]");
    doc["env"]["reward"] = json::parse("[[1,0],[0.2,0.4]]");
    doc["env"]["rho"] = {0.25, 0.75};
    const ExperimentConfig cfg = parse_config(doc);
    const PerformativeEnv env = build_env(cfg.env);
    const Dynamics d = env.dynamics(Policy::uniform(2, 2));
    CHECK(d.kernel(1, 1, 0) == 0.3);
    CHECK(d.reward(1, 0) == 0.2);
    CHECK(env.base().rho[1] == 0.75);
    doc["env"]["kernel"][0][0] = {0.5, 0.6};
    CHECK_THROWS_AS(build_env(parse_config(doc).env), ConfigError);
}

TEST_CASE("number formatting") {
    CHECK(format_number(0.0) == "0");
    CHECK(format_number(1.0) == "1.00000000000");
    CHECK(format_number(18.8629436112) == "18.8629436112");
    CHECK(format_number(-0.000123456789012345) == "-0.000123456789012");
    CHECK(format_number(9.9999999999999) == "10.0000000000");
    CHECK(format_number(123456789012345.0) == "123456789012345");
}

TEST_CASE("trace CSV round trip and schema") {
    std::vector<IterationRecord> trace;
    for (std::size_t t = 0; t < 5; ++t)
        trace.push_back({t, 18.0 + 0.1 * static_cast<double>(t), 13.0 / 3.0, 1e-7 * static_cast<double>(t), 0.001, 0.0});
    std::ostringstream out;
    write_trace_csv(out, trace);
    const std::string text = out.str();
    CHECK(text.rfind(std::string(kTraceHeader) + "\n", 0) == 0);
    CHECK(text.find('\r') == std::string::npos);
    CHECK(text.find('e', text.find('\n')) == std::string::npos);
    const std::regex row(R"(\d+(,(-?\d+(\.\d+)?)){5})");
    std::istringstream lines(text);
    std::string line;
    std::getline(lines, line);
    std::size_t rows = 0;
    while (std::getline(lines, line)) {
        CHECK(std::regex_match(line, row));
        ++rows;
    }
    CHECK(rows == 5);

    std::istringstream in(text);
    const auto back = read_trace_csv(in);
    REQUIRE(back.size() == 5);
    for (std::size_t t = 0; t < 5; ++t) {
        CHECK(back[t].t == t);
        CHECK(back[t].v_reg == doctest::Approx(trace[t].v_reg).epsilon(1e-11));
        CHECK(back[t].fw_gap == doctest::Approx(trace[t].fw_gap).epsilon(1e-11));
    }

    std::istringstream missing("iter,v_reg,fw_gap,min_mass,elapsed_ms\n0,1,0,0.1,0\n");
    try {
        (void)read_trace_csv(missing);
        FAIL("expected a schema error");
    } catch (const ConfigError& e) {
        CHECK(e.path() == "v_unreg");
    }
}

TEST_CASE("run command") {
    Scratch scratch("run");
    std::ostringstream out, err;
    const CommandOptions opts = scratch.write(small_doc());
    REQUIRE(cmd_run(opts, out, err) == kExitOk);
    const std::string first = scratch.read("t_trace.csv");
    const json summary = json::parse(scratch.read("t_summary.json"));
    CHECK(summary["version"] == kVersion);
    CHECK(summary["config"] == small_doc());
    CHECK(summary["result"]["iterations"] == 8);
    CHECK(summary["constants"]["source"] == "certified");
    CHECK(std::ranges::count(first, '\n') == 9);
    REQUIRE(cmd_run(opts, out, err) == kExitOk);
    CHECK(scratch.read("t_trace.csv") == first);

    json retrain = small_doc();
    retrain["algorithm"]["run"] = "retraining";
    REQUIRE(cmd_run(scratch.write(retrain), out, err) == kExitOk);
    CHECK(std::ranges::count(scratch.read("t_trace.csv"), '\n') == 5);
}

TEST_CASE("command exit codes") {
    Scratch scratch("codes");
    std::ostringstream out, err;
    json bad = small_doc();
    bad["env"]["gamma"] = 1.2;
    CHECK(cmd_run(scratch.write(bad), out, err) == kExitConfig);
    CHECK(err.str().find("env.gamma") != std::string::npos);

    CHECK(cmd_run({(scratch.dir / "absent.json").string(), std::nullopt}, out, err) == kExitConfig);

    json no_lambda = small_doc();
    no_lambda["reg"]["lambda"] = 0.0;
    no_lambda["algorithm"].erase("zfw");
    no_lambda["algorithm"]["theory"] = {{"target_eps", 0.01}, {"fail_prob", 0.1}};
    CHECK(cmd_constants(scratch.write(no_lambda), out, err) == kExitConfig);
}

TEST_CASE("constants command") {
    Scratch scratch("constants");
    json doc = small_doc();
    doc["env"] = json::parse(R"({"rule": "affine_mix", "n_states": 2, "n_actions": 2, "gamma": 0.9,
        "constants": {"eps_p": 0, "eps_r": 0, "s_p": 0, "s_r": 0, "d_min": 0.3}})");
    std::ostringstream out, err;
    REQUIRE(cmd_constants(scratch.write(doc), out, err) == kExitOk);
    const json j = json::parse(out.str());
    CHECK(j["source"] == "declared");
    CHECK(j["theory"]["mu"].get<double>() == doctest::Approx(0.3 * 0.5 / 0.1).epsilon(1e-12));
}

TEST_CASE("check command") {
    Scratch scratch("check");
    json doc = small_doc();
    doc["env"] = json::parse(R"({"rule": "fixed", "n_states": 2, "n_actions": 2, "gamma": 0.5, "random_seed": 3})");
    doc["checks"] = {{"suites", {"dominance"}}, {"pairs", 20}};
    std::ostringstream out, err;
    CHECK(cmd_check(scratch.write(doc), out, err) == kExitOk);
    CHECK(json::parse(scratch.read("t_check.json"))["ok"] == true);
    doc["checks"]["debug_mu"] = 1e6;
    CHECK(cmd_check(scratch.write(doc), out, err) == kExitViolations);
}

TEST_CASE("compare command") {
    Scratch scratch("compare");
    std::ostringstream out, err;
    REQUIRE(cmd_compare(scratch.write(small_doc()), out, err) == kExitOk);
    const json j = json::parse(scratch.read("t_comparison.json"));
    CHECK(j["zfw"]["config"] == small_doc()["algorithm"]["zfw"]);
    CHECK(j["retraining"]["config"] == small_doc()["algorithm"]["retraining"]);
    CHECK(j["config"] == small_doc());
    CHECK(j["retraining"]["distance_to_uniform"].get<double>() < 1e-12);
    CHECK(fs::exists(scratch.dir / "t_zfw.csv"));
    CHECK(fs::exists(scratch.dir / "t_retraining.csv"));

    json no_retrain = small_doc();
    no_retrain["algorithm"].erase("retraining");
    CHECK(cmd_compare(scratch.write(no_retrain), out, err) == kExitConfig);
}
