#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "lso/config.hpp"
#include "lso/report.hpp"

using namespace lso;

namespace {

std::string config_dir() { return CONFIG_DIR; }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LSOCTL_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string run_cli_capture(const std::string& args) {
    const std::string tmp = "/tmp/lsoctl_test_out.txt";
    const std::string cmd =
        std::string(LSOCTL_PATH) + " " + args + " > " + tmp + " 2>/dev/null";
    [[maybe_unused]] const int status = std::system(cmd.c_str());
    std::ifstream in(tmp);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("bundled configs parse and validate") {
    for (const char* name :
         {"two_level_degenerate", "three_level_b0", "three_level_generic",
          "simple_spectrum_random", "two_reservoir_ness"}) {
        auto cfg = load_config(config_dir() + "/" + name + ".json");
        CHECK(cfg.name == name);
        CHECK_NOTHROW(cfg.model.validate());
        CHECK(config_hash(cfg).size() == 16);
    }
}

TEST_CASE("schema violations are rejected") {
    json base = json::parse(R"({
        "small_system": {"energies": [0.0, 1.0]},
        "couplings": [{"G": [[[0,0],[1,0]],[[1,0],[0,0]]],
                       "reservoir": {"beta": 1.0,
                                     "form_factor": {"family": "power_cutoff",
                                                     "gamma": 1.0,
                                                     "ir_exponent": 0.0,
                                                     "r_max": 1.0}}}]
    })");
    CHECK_NOTHROW(parse_config(base));

    json unknown = base;
    unknown["surprise"] = 1;
    CHECK_THROWS_AS(parse_config(unknown), ConfigError);

    json nested = base;
    nested["couplings"][0]["reservoir"]["form_factor"]["typo"] = true;
    CHECK_THROWS_AS(parse_config(nested), ConfigError);

    json empty = base;
    empty["couplings"] = json::array();
    CHECK_THROWS_AS(parse_config(empty), ConfigError);

    json negative = base;
    negative["couplings"][0]["reservoir"]["beta"] = -2.0;
    CHECK_THROWS_AS(parse_config(negative), ConfigError);

    json nonherm = base;
    nonherm["couplings"][0]["G"] = json::parse("[[[0,0],[1,0]],[[2,0],[0,0]]]");
    CHECK_THROWS_AS(parse_config(nonherm), ConfigError);
}

TEST_CASE("seeded generation is reproducible") {
    auto a = load_config(config_dir() + "/simple_spectrum_random.json");
    auto b = load_config(config_dir() + "/simple_spectrum_random.json");
    CHECK(a.model.small.energies == b.model.small.energies);
    CHECK((a.model.couplings[0].G - b.model.couplings[0].G).norm() == 0.0);
    // simple spectrum as requested
    for (std::size_t i = 1; i < a.model.small.energies.size(); ++i)
        CHECK(a.model.small.energies[i] - a.model.small.energies[i - 1] > 0.1);
}

TEST_CASE("compute report structure") {
    auto cfg = load_config(config_dir() + "/three_level_generic.json");
    cfg.run.epsilon_grid = {1e-1};
    auto rep = cmd_compute(cfg, false);
    CHECK(rep.contains("sectors"));
    CHECK(!rep.contains("timing"));
    bool saw_zero = false;
    for (const auto& sec : rep["sectors"]) {
        if (sec["bohr_frequency"].get<double>() == 0.0) {
            saw_zero = true;
            CHECK(sec["limit"]["kernel"]["dim"].get<int>() == 2);
            CHECK(sec["pairs"].size() == 5);
        }
        // complex entries serialize as re/im objects
        const auto& entry = sec["limit"]["matrix"][0][0];
        CHECK(entry.contains("re"));
        CHECK(entry.contains("im"));
    }
    CHECK(saw_zero);
}

TEST_CASE("scan engine: infrared classification flips at the boundary") {
    auto cfg = load_config(config_dir() + "/two_level_degenerate.json");
    auto sc = cmd_scan(cfg, "p", -0.75, 0.0, 7);  // grid contains -0.5 exactly
    REQUIRE(sc.rows.size() == 7);
    for (const auto& row : sc.rows) {
        const bool exists = row.columns[1] > 0.5;
        CHECK(exists == (row.value >= -0.5));
    }
    const std::string csv = scan_to_csv(sc);
    CHECK(csv.find("# ") == 0);
    CHECK(csv.find("p,ir_class,lso_exists") != std::string::npos);
}

TEST_CASE("scan engine: small-gap kernel stays quadratic") {
    auto cfg = load_config(config_dir() + "/three_level_b0.json");
    auto sc = cmd_scan(cfg, "delta", 0.3, 0.05, 6);
    // xi1/delta^2 settles within 5% toward small delta
    const auto& rows = sc.rows;
    const double last = rows[rows.size() - 1].columns[1];
    const double prev = rows[rows.size() - 2].columns[1];
    CHECK(std::abs(last - prev) < 0.05 * std::abs(last));
}

TEST_CASE("command line: exit codes and determinism") {
    const std::string cfgs = config_dir();
    CHECK(run_cli("compute --config " + cfgs + "/three_level_generic.json --no-timing") == 0);

    // subcritical limit: exit 3
    const std::string sub = "/tmp/lsoctl_subcritical.json";
    {
        std::ofstream out(sub);
        out << R"({"small_system": {"energies": [0.5, 0.5]},
                   "couplings": [{"G": [[[0,0],[1,0]],[[1,0],[0,0]]],
                                  "reservoir": {"beta": 1.0,
                                                "form_factor": {"family": "power_cutoff",
                                                                "gamma": 1.0,
                                                                "ir_exponent": -0.75,
                                                                "r_max": 1.0}}}]})";
    }
    CHECK(run_cli("compute --config " + sub) == 3);

    // schema rejection: exit 2
    const std::string bad = "/tmp/lsoctl_bad.json";
    {
        std::ofstream out(bad);
        out << R"({"couplings": []})";
    }
    CHECK(run_cli("compute --config " + bad) == 2);
    CHECK(run_cli("compute --config /tmp/does_not_exist.json") == 2);

    // identical config: identical bytes without the timing block
    const std::string a = run_cli_capture("compute --config " + cfgs +
                                          "/three_level_generic.json --no-timing");
    const std::string b = run_cli_capture("compute --config " + cfgs +
                                          "/three_level_generic.json --no-timing");
    CHECK(a == b);
    CHECK(!a.empty());

    // csv spectra
    const std::string csv = run_cli_capture("compute --config " + cfgs +
                                            "/three_level_generic.json --format csv");
    CHECK(csv.find("bohr_frequency,eigenvalue_re,eigenvalue_im,kernel_dim") !=
          std::string::npos);
}

TEST_CASE("table form factors parse through the schema") {
    json j = json::parse(R"({
        "small_system": {"energies": [0.0, 1.0]},
        "couplings": [{"G": [[[0,0],[1,0]],[[1,0],[0,0]]],
                       "reservoir": {"beta": 1.0,
                                     "form_factor": {"family": "table",
                                                     "ir_exponent": 1.0,
                                                     "points": [[0.1, 0.1], [1.0, 1.0],
                                                                [2.0, 0.5]]}}}]
    })");
    auto cfg = parse_config(j);
    const auto& ff = cfg.model.couplings[0].reservoir.form_factor;
    CHECK(ff.uv_cutoff == 2.0);
    CHECK(ff.g(1.5) == Catch::Approx(0.75));   // linear interpolation
    CHECK(ff.g(0.05) == Catch::Approx(0.05));  // power-law extension below the knots
    CHECK(ff.g(2.5) == 0.0);
}

TEST_CASE("command line: eigenbasis rotation helper") {
    const std::string in = "/tmp/lsoctl_diag_in.json";
    {
        std::ofstream out(in);
        out << R"({"H": [[[1.0,0],[0.5,0]],[[0.5,0],[1.0,0]]],
                   "G": [[[[0,0],[1,0]],[[1,0],[0,0]]]]})";
    }
    const std::string text = run_cli_capture("diagonalize --input " + in);
    auto j = json::parse(text);
    REQUIRE(j.contains("energies"));
    auto e = j["energies"].get<std::vector<double>>();
    CHECK(e[0] == Catch::Approx(0.5).margin(1e-12));
    CHECK(e[1] == Catch::Approx(1.5).margin(1e-12));
    // the rotated coupling of sigma_x in the sigma_x eigenbasis is diag(-1, 1)-like
    const double g00 = j["G"][0][0][0]["re"].get<double>();
    const double g11 = j["G"][0][1][1]["re"].get<double>();
    const double g01 = std::hypot(j["G"][0][0][1]["re"].get<double>(),
                                  j["G"][0][0][1]["im"].get<double>());
    CHECK(std::abs(std::abs(g00) - 1.0) < 1e-12);
    CHECK(std::abs(std::abs(g11) - 1.0) < 1e-12);
    CHECK(g00 * g11 < 0);
    CHECK(g01 < 1e-12);
}

TEST_CASE("command line: verify passes and the corrupted fixture fails") {
    const std::string cfgs = config_dir();
    CHECK(run_cli("verify --config " + cfgs + "/two_level_degenerate.json") == 0);
    CHECK(run_cli("verify --config " + cfgs + "/two_level_degenerate.json"
                  " --corrupt-closed-form") == 1);
}
