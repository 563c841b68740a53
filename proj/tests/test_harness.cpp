#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdce/config.hpp"
#include "sdce/harness.hpp"
#include "sdce/rng.hpp"

using namespace sdce;
using namespace sdce::harness;
namespace fs = std::filesystem;

namespace {

cfg::ExperimentConfig small_sweep() {
    cfg::ExperimentConfig c = cfg::default_config();
    cfg::apply_scale(c, "desk");
    c.run.horizon = 3;
    c.seeds = {17, 31};
    c.rho_grid = {0.3, 0.7};
    c.policies = {"none"};
    c.workers = 1;
    c.out_dir.clear();
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

std::string message_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

// Drops the leading run_id column of every data line.
std::vector<std::string> payload_lines(const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        const auto comma = line.find(',');
        REQUIRE(comma != std::string::npos);
        out.push_back(line.substr(comma + 1));
    }
    return out;
}

}  // namespace

TEST_CASE("an empty config text yields the documented defaults") {
    const auto c = cfg::parse_config("");
    CHECK(c.run.n_producers == 1024);
    CHECK(c.run.m_trainers == 16);
    CHECK(c.run.horizon == 10);
    CHECK(c.run.discount == 0.99);
    CHECK(c.run.learning_rate == 3e-4);
    CHECK(c.run.beta_shape == 0.10);
    CHECK(c.run.epsilon_explore == 0.05);
    CHECK(c.run.rights_window == 10.0);
    CHECK(c.policy.kappa == 0.85);
    CHECK(c.policy.lambda_pen == 0.30);
    CHECK(c.human_base == 0.18);
    CHECK(c.synth_base == 0.12);
    CHECK(c.human_slope == 0.083);
    CHECK(c.synth_slope == 0.100);
    CHECK(c.workers == 1);
    CHECK(c.format == "csv");
    CHECK(c.policies == std::vector<std::string>{"none"});
    REQUIRE(c.seeds.size() == 32);
    CHECK(c.seeds[0] == 17);
    CHECK(c.seeds[1] == 31);
    CHECK(c.seeds[2] == 42);
    CHECK(c.seeds[3] == 53);
    CHECK(c.seeds.back() == 9973);
}

TEST_CASE("config parsing handles comments, sections and duplicates") {
    const std::string text =
        "# top comment\n"
        "[run]\n"
        "horizon = 5   # trailing comment\n"
        "\n"
        "horizon = 9\n"
        "royalty = 0.2\n";
    const auto c = cfg::parse_config(text);
    CHECK(c.run.horizon == 9);  // later duplicate wins
    CHECK(c.run.royalty == 0.2);
}

TEST_CASE("config lists parse into the sweep axes") {
    const auto c = cfg::parse_config(
        "rho_grid = 0.1, 0.5\n"
        "policies = none, subsidy\n"
        "seeds = 3, 5, 7\n");
    CHECK(c.rho_grid == std::vector<double>{0.1, 0.5});
    CHECK(c.policies == std::vector<std::string>{"none", "subsidy"});
    CHECK(c.seeds == std::vector<std::uint64_t>{3, 5, 7});
}

TEST_CASE("config errors carry their line number") {
    const std::string unknown =
        message_of([] { cfg::parse_config("horizon = 4\nfrobnicate = 2\n"); });
    CHECK(unknown.find("line 2") != std::string::npos);
    CHECK(unknown.find("frobnicate") != std::string::npos);

    CHECK_THROWS_AS(cfg::parse_config("horizon\n"), cfg::ConfigError);
    CHECK_THROWS_AS(cfg::parse_config("= 3\n"), cfg::ConfigError);
    CHECK_THROWS_AS(cfg::parse_config("[run\n"), cfg::ConfigError);
    CHECK_THROWS_AS(cfg::parse_config("horizon = twelve\n"), cfg::ConfigError);
}

TEST_CASE("out-of-range values are configuration errors") {
    CHECK_THROWS_AS(cfg::parse_config("discount = 1.5\n"), cfg::ConfigError);
    CHECK_THROWS_AS(cfg::parse_config("epsilon_explore = 0\n"), cfg::ConfigError);
    CHECK_THROWS_AS(cfg::parse_config("epsilon_explore = 1\n"), cfg::ConfigError);
    CHECK_THROWS_AS(cfg::parse_config("workers = 0\n"), cfg::ConfigError);
    CHECK_THROWS_AS(cfg::parse_config("format = yaml\n"), cfg::ConfigError);
    CHECK_THROWS_AS(cfg::parse_config("rho_grid = 0.2, 1.4\n"), cfg::ConfigError);
    CHECK_THROWS_AS(cfg::parse_config("kappa = 0\n"), cfg::ConfigError);
}

TEST_CASE("config files load like config text") {
    const fs::path dir = fs::temp_directory_path() / "sdce_cfg_test";
    fs::create_directories(dir);
    const fs::path file = dir / "a.cfg";
    {
        std::ofstream f(file);
        f << "horizon = 4\nseeds = 17\n";
    }
    const auto c = cfg::load_config(file.string());
    CHECK(c.run.horizon == 4);
    CHECK(c.seeds == std::vector<std::uint64_t>{17});
    CHECK_THROWS_AS(cfg::load_config((dir / "missing.cfg").string()), cfg::ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("scale presets set the market dimensions") {
    auto c = cfg::default_config();
    cfg::apply_scale(c, "desk");
    CHECK(c.run.n_producers == 8);
    CHECK(c.run.m_trainers == 2);
    cfg::apply_scale(c, "paper");
    CHECK(c.run.n_producers == 1024);
    CHECK(c.run.m_trainers == 16);
    CHECK_THROWS_AS(cfg::apply_scale(c, "huge"), cfg::ConfigError);
}

TEST_CASE("canonical text is order-free and value-sensitive") {
    const auto a = cfg::parse_config("horizon = 5\nroyalty = 0.2\n");
    const auto b = cfg::parse_config("royalty = 0.2\nhorizon = 5\n");
    CHECK(cfg::canonical_text(a) == cfg::canonical_text(b));
    CHECK(cfg::fingerprint(a) == cfg::fingerprint(b));

    const auto c = cfg::parse_config("royalty = 0.25\nhorizon = 5\n");
    CHECK(cfg::fingerprint(a) != cfg::fingerprint(c));

    // Every tunable appears in the canonical form.
    const std::string text = cfg::canonical_text(a);
    for (const char* key : {"n_producers=", "rights_window=", "temperature=",
                            "flow_step_size=", "kappa=", "format="})
        CHECK(text.find(key) != std::string::npos);
}

TEST_CASE("sweep planning crosses the axes and salts by contamination only") {
    auto c = small_sweep();
    c.policies = {"none", "subsidy"};
    const auto cells = plan_sweep(c);
    REQUIRE(cells.size() == 8);  // 2 rho x 2 policies x 2 seeds

    CHECK(cells[0].run_id == "0000-r0.3-none-s17");
    CHECK(cells[0].cell_seed == split_seed(17, 0));
    CHECK(cells[3].run_id == "0003-r0.3-subsidy-s31");

    // Policy arms share the stream within a contamination cell.
    for (const auto& cell : cells) {
        std::uint64_t ri = cell.forced_rho == 0.3 ? 0 : 1;
        CHECK(cell.cell_seed == split_seed(cell.panel_seed, ri));
    }

    // Endogenous contamination collapses the axis to one tagged cell.
    c.rho_grid.clear();
    c.policies = {"none"};
    const auto endo = plan_sweep(c);
    REQUIRE(endo.size() == 2);
    CHECK(endo[0].run_id == "0000-endo-none-s17");
    CHECK(endo[0].forced_rho < 0.0);
}

TEST_CASE("csv emission round-trips bit for bit") {
    const auto c = small_sweep();
    const auto outcome = run_sweep(c);
    REQUIRE(outcome.records.size() == 4);
    for (const auto& err : outcome.errors) CHECK(err.empty());

    const std::string csv = emit_csv(outcome);
    const auto rows = read_results_csv(csv);
    REQUIRE(rows.size() == 16);  // 4 runs x (horizon + 1)

    std::size_t k = 0;
    for (std::size_t i = 0; i < outcome.records.size(); ++i) {
        for (const auto& gen : outcome.records[i].rows) {
            CHECK(rows[k].run_id == outcome.cells[i].run_id);
            CHECK(rows[k].seed == outcome.cells[i].panel_seed);
            CHECK(rows[k].generation == gen.t);
            CHECK(rows[k].rho == gen.rho);
            CHECK(rows[k].quality_rel == gen.quality_rel);
            CHECK(rows[k].w2_drift == gen.w2_drift);
            CHECK(rows[k].w_prod == gen.w_prod);
            CHECK(rows[k].w_cons == gen.w_cons);
            CHECK(rows[k].l_coll == gen.l_coll);
            CHECK(rows[k].l_info == gen.l_info);
            CHECK(rows[k].welfare_total == gen.welfare_total);
            CHECK(rows[k].residual == gen.residual);
            CHECK(rows[k].schema_version == kSchemaVersion);
            ++k;
        }
    }
}

TEST_CASE("csv and jsonl carry identical numeric payloads") {
    const auto c = small_sweep();
    const auto outcome = run_sweep(c);
    const auto rows = read_results_csv(emit_csv(outcome));

    std::istringstream jl(emit_jsonl(outcome));
    std::string line;
    std::size_t k = 0;
    while (std::getline(jl, line)) {
        REQUIRE(k < rows.size());
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("run_id").get<std::string>() == rows[k].run_id);
        CHECK(j.at("seed").get<std::uint64_t>() == rows[k].seed);
        CHECK(j.at("generation").get<int>() == rows[k].generation);
        CHECK(j.at("rho").get<double>() == rows[k].rho);
        CHECK(j.at("quality_rel").get<double>() == rows[k].quality_rel);
        CHECK(j.at("w2_drift").get<double>() == rows[k].w2_drift);
        CHECK(j.at("welfare_total").get<double>() == rows[k].welfare_total);
        CHECK(j.at("residual").get<double>() == rows[k].residual);
        CHECK(j.at("schema_version").get<int>() == kSchemaVersion);
        ++k;
    }
    CHECK(k == rows.size());
}

TEST_CASE("malformed result files are rejected with context") {
    CHECK_THROWS_AS(read_results_csv(""), std::runtime_error);
    CHECK_THROWS_AS(read_results_csv("not,a,header\n"), std::runtime_error);

    const auto c = small_sweep();
    std::string csv = emit_csv(run_sweep(c));
    // Bump the schema version of the first data row.
    const auto nl = csv.find('\n');
    auto comma = csv.rfind(',', csv.find('\n', nl + 1));
    std::string broken = csv.substr(0, comma + 1) + "99" + csv.substr(csv.find('\n', nl + 1));
    CHECK_THROWS_AS(read_results_csv(broken), std::runtime_error);

    // Truncated data row.
    std::string short_row = csv.substr(0, csv.find('\n', nl + 1) - 5);
    CHECK_THROWS_AS(read_results_csv(short_row), std::runtime_error);
}

TEST_CASE("worker count does not change the emitted bytes") {
    auto c = small_sweep();
    const std::string one = emit_csv(run_sweep(c));
    c.workers = 2;
    const std::string two = emit_csv(run_sweep(c));
    CHECK(one == two);
}

TEST_CASE("identical seeds produce identical payloads under distinct run ids") {
    auto c = small_sweep();
    c.seeds = {17, 17};
    c.rho_grid = {0.5};
    const std::string csv = emit_csv(run_sweep(c));
    const auto lines = payload_lines(csv);
    REQUIRE(lines.size() == 8);
    for (std::size_t i = 0; i < 4; ++i) CHECK(lines[i] == lines[i + 4]);
}

TEST_CASE("a finished sweep resumes from its manifest without recomputing") {
    const fs::path dir = fs::temp_directory_path() / "sdce_resume_test";
    fs::remove_all(dir);
    auto c = small_sweep();
    c.out_dir = dir.string();

    const auto first = run_sweep(c);
    CHECK(first.skipped == 0);
    REQUIRE(fs::exists(dir / "results.csv"));
    REQUIRE(fs::exists(dir / "manifest.json"));
    const std::string bytes = slurp(dir / "results.csv");

    // Second pass: everything is already done.
    const auto second = run_sweep(c);
    CHECK(second.skipped == 4);
    CHECK(slurp(dir / "results.csv") == bytes);
    CHECK(emit_csv(second) == emit_csv(first));

    // Wiping the bookkeeping forces a clean recompute with the same bytes.
    fs::remove(dir / "manifest.json");
    fs::remove(dir / "results.csv");
    const auto third = run_sweep(c);
    CHECK(third.skipped == 0);
    CHECK(slurp(dir / "results.csv") == bytes);

    // A config change invalidates the manifest instead of reusing it.
    c.run.horizon = 4;
    const auto fourth = run_sweep(c);
    CHECK(fourth.skipped == 0);
    fs::remove_all(dir);
}

TEST_CASE("the reference grid has the documented shape") {
    const QualityGrid g = reference_collapse_grid();
    REQUIRE(g.generations.size() == 6);
    REQUIRE(g.ratios.size() == 5);
    REQUIRE(g.values.size() == 30);
    CHECK(g.generations.front() == 1);
    CHECK(g.generations.back() == 10);
    CHECK(g.values.front() == 0.998);
    CHECK(g.values.back() == 0.226);

    const auto d = grid_dataset(g);
    REQUIRE(d.rows.size() == 30);
    CHECK(d.rows[0].t == 1.0);
    CHECK(d.rows[0].rho == 0.1);
    CHECK(d.rows[0].outcome == 0.998);
    CHECK(d.rows[29].t == 10.0);
    CHECK(d.rows[29].rho == 0.9);
    CHECK(d.rows[29].outcome == 0.226);
}

TEST_CASE("the grid rendering matches the frozen golden file") {
    const std::string rendered = render_quality_grid(reference_collapse_grid());
    const std::string golden = slurp(fs::path(SDCE_GOLDEN_DIR) / "reference_grid.txt");
    CHECK(rendered == golden);
}

TEST_CASE("median and the exact sign test") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
    CHECK(median({5.0}) == 5.0);
    CHECK_THROWS_AS(median({}), std::invalid_argument);

    CHECK(sign_test_p(32, 32) == doctest::Approx(2.3283064365386963e-10).epsilon(1e-12));
    CHECK(sign_test_p(31, 32) == doctest::Approx(7.6834112405776978e-09).epsilon(1e-12));
    CHECK(sign_test_p(16, 32) == doctest::Approx(0.56997496704570949).epsilon(1e-12));
    CHECK(sign_test_p(0, 32) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sign_test_p(0, 0) == 1.0);
}
