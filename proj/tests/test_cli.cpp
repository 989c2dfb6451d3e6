#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kBinary = SSFLSIM_BINARY;

struct CmdResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CmdResult run_cmd(const std::string& args, const std::string& env_prefix = "") {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() / "ssfl_cli_io";
    fs::create_directories(dir);
    fs::path out = dir / ("out" + std::to_string(counter));
    fs::path err = dir / ("err" + std::to_string(counter));
    ++counter;
    std::string cmd = env_prefix + kBinary + " " + args + " >" + out.string() + " 2>" +
                      err.string();
    int rc = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("ssfl_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// A config small enough for quick CLI runs.
std::string base_config(const std::string& out_dir, const std::string& extra = "") {
    return "data.classes = 5\n"
           "data.features = 8\n"
           "data.train_per_class = 30\n"
           "data.test_per_class = 10\n"
           "model.hidden = 8,6\n"
           "fl.clients = 4\n"
           "fl.rounds = 2\n"
           "fl.sigma = 0.5\n"
           "fl.local_epochs = 1\n"
           "run.variants = ssfl,dense\n"
           "run.seeds = 1,2\n"
           "mask_study.counts = 1,2,4\n"
           "output.dir = " + out_dir + "\n" + extra;
}

const std::string kMetricsHeader =
    "round,variant,seed,global_acc,mean_local_acc,"
    "uplink_bytes_values_only,uplink_bytes_dense,uplink_bytes_coo,uplink_bytes_bitmask,"
    "downlink_bytes_values_only,downlink_bytes_dense,downlink_bytes_coo,downlink_bytes_bitmask,"
    "lr,p10_local_acc,p50_local_acc,p90_local_acc,seen_acc,holdout_acc";

}  // namespace

TEST_CASE("validate echoes the resolved config and round-trips byte for byte") {
    auto dir = fresh_dir("validate");
    write_file(dir / "exp.cfg", base_config((dir / "out").string()));

    auto first = run_cmd("validate " + (dir / "exp.cfg").string());
    REQUIRE(first.exit_code == 0);
    CHECK(first.out.find("fl.sigma = 0.5") != std::string::npos);
    CHECK(first.out.find("run.variants = ssfl,dense") != std::string::npos);
    CHECK(first.out.find("output.dir = ") != std::string::npos);

    write_file(dir / "echo.cfg", first.out);
    auto second = run_cmd("validate " + (dir / "echo.cfg").string());
    REQUIRE(second.exit_code == 0);
    CHECK(second.out == first.out);
}

TEST_CASE("config errors carry the offending line number") {
    auto dir = fresh_dir("badcfg");
    write_file(dir / "bad.cfg",
               "data.classes = 5\n"
               "data.features = 8\n"
               "no.such.key = 1\n");
    auto r = run_cmd("validate " + (dir / "bad.cfg").string());
    CHECK(r.exit_code != 0);
    CHECK(r.err.find(":3:") != std::string::npos);

    write_file(dir / "dup.cfg",
               "data.classes = 5\n"
               "data.classes = 6\n");
    auto rd = run_cmd("validate " + (dir / "dup.cfg").string());
    CHECK(rd.exit_code != 0);
    CHECK(rd.err.find(":2:") != std::string::npos);

    write_file(dir / "val.cfg", "fl.sigma = 1.5\n");
    auto rv = run_cmd("validate " + (dir / "val.cfg").string());
    CHECK(rv.exit_code != 0);
    CHECK(rv.err.find(":1:") != std::string::npos);

    auto rm = run_cmd("validate " + (dir / "missing.cfg").string());
    CHECK(rm.exit_code != 0);
}

TEST_CASE("run produces the full artifact set with pinned headers") {
    auto dir = fresh_dir("run");
    write_file(dir / "exp.cfg", base_config((dir / "out").string()));
    auto r = run_cmd("run " + (dir / "exp.cfg").string());
    REQUIRE(r.exit_code == 0);

    auto out = dir / "out";
    REQUIRE(fs::exists(out / "metrics.csv"));
    REQUIRE(fs::exists(out / "summary.json"));
    REQUIRE(fs::exists(out / "ledger.csv"));
    REQUIRE(fs::exists(out / "mask_stats.json"));
    REQUIRE(fs::exists(out / "config_resolved.txt"));
    REQUIRE(fs::exists(out / "runs" / "ssfl-s1" / "ledger.csv"));
    REQUIRE(fs::exists(out / "runs" / "ssfl-s1" / "mask.bin"));
    REQUIRE(fs::exists(out / "runs" / "dense-s2"));

    std::string metrics = slurp(out / "metrics.csv");
    CHECK(metrics.rfind(kMetricsHeader + "\n", 0) == 0);
    // 2 variants x 2 seeds x (2 rounds + initial row)
    std::size_t lines = std::count(metrics.begin(), metrics.end(), '\n');
    CHECK(lines == 1 + 2 * 2 * 3);

    std::string ledger = slurp(out / "ledger.csv");
    CHECK(ledger.rfind("variant,seed,round,direction,client,scheme,bytes\n", 0) == 0);
    // Every data row is attributed to its run.
    std::istringstream rows(ledger);
    std::string row;
    std::getline(rows, row);
    std::size_t attributed = 0, data_rows = 0;
    while (std::getline(rows, row)) {
        ++data_rows;
        if (row.rfind("ssfl,", 0) == 0 || row.rfind("dense,", 0) == 0) ++attributed;
    }
    CHECK(data_rows > 0);
    CHECK(attributed == data_rows);
    // The per-run file keeps the bare format.
    std::string one = slurp(out / "runs" / "ssfl-s1" / "ledger.csv");
    CHECK(one.rfind("round,direction,client,scheme,bytes\n", 0) == 0);

    auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
    CHECK(summary["runs"].size() == 4);
    CHECK(summary["variants"].size() == 2);
    bool saw_masked = false, saw_dense = false;
    for (const auto& jr : summary["runs"])
        (jr["mask_active"].is_null() ? saw_dense : saw_masked) = true;
    CHECK(saw_masked);
    CHECK(saw_dense);

    auto mask_stats = nlohmann::json::parse(slurp(out / "mask_stats.json"));
    CHECK(mask_stats.size() == 4);

    // the resolved config re-runs to the identical result set
    auto r2 = run_cmd("run " + (out / "config_resolved.txt").string() + " --out " +
                      (dir / "out2").string());
    REQUIRE(r2.exit_code == 0);
    CHECK(slurp(dir / "out2" / "metrics.csv") == metrics);
}

TEST_CASE("reruns are byte-identical") {
    auto dir = fresh_dir("repro");
    write_file(dir / "exp.cfg", base_config((dir / "out").string()));
    REQUIRE(run_cmd("run " + (dir / "exp.cfg").string()).exit_code == 0);
    std::string m1 = slurp(dir / "out" / "metrics.csv");
    std::string s1 = slurp(dir / "out" / "summary.json");
    REQUIRE(run_cmd("run " + (dir / "exp.cfg").string()).exit_code == 0);
    CHECK(slurp(dir / "out" / "metrics.csv") == m1);
    CHECK(slurp(dir / "out" / "summary.json") == s1);

    // --jobs only changes scheduling, never results
    REQUIRE(run_cmd("run " + (dir / "exp.cfg").string() + " --jobs 3").exit_code == 0);
    CHECK(slurp(dir / "out" / "metrics.csv") == m1);
}

TEST_CASE("seed and output overrides") {
    auto dir = fresh_dir("overrides");
    write_file(dir / "exp.cfg", base_config((dir / "out").string()));
    auto r = run_cmd("run " + (dir / "exp.cfg").string() + " --seed 5 --out " +
                     (dir / "other").string());
    REQUIRE(r.exit_code == 0);
    CHECK(!fs::exists(dir / "out"));
    std::string metrics = slurp(dir / "other" / "metrics.csv");
    std::istringstream lines(metrics);
    std::string line;
    std::getline(lines, line);  // header
    while (std::getline(lines, line)) {
        auto c1 = line.find(',');
        auto c2 = line.find(',', c1 + 1);
        auto c3 = line.find(',', c2 + 1);
        CHECK(line.substr(c2 + 1, c3 - c2 - 1) == "5");
    }
}

TEST_CASE("the environment can pin an output root") {
    auto dir = fresh_dir("envroot");
    write_file(dir / "exp.cfg", base_config("nested/out"));
    auto r = run_cmd("run " + (dir / "exp.cfg").string(),
                     "SSFLSIM_OUT_ROOT=" + dir.string() + " ");
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(dir / "nested" / "out" / "metrics.csv"));
}

TEST_CASE("mask-study writes one row per (count, seed) pair") {
    auto dir = fresh_dir("study");
    write_file(dir / "exp.cfg", base_config((dir / "out").string()));
    auto r = run_cmd("mask-study " + (dir / "exp.cfg").string());
    REQUIRE(r.exit_code == 0);
    std::string csv = slurp(dir / "out" / "mask_study.csv");
    CHECK(csv.rfind("count,seed,mask_error\n", 0) == 0);
    std::size_t lines = std::count(csv.begin(), csv.end(), '\n');
    CHECK(lines == 1 + 3 * 2);  // counts {1,2,4} x seeds {1,2}

    REQUIRE(run_cmd("mask-study " + (dir / "exp.cfg").string()).exit_code == 0);
    CHECK(slurp(dir / "out" / "mask_study.csv") == csv);
}

TEST_CASE("usage errors exit nonzero") {
    CHECK(run_cmd("").exit_code != 0);
    CHECK(run_cmd("frobnicate x.cfg").exit_code != 0);
    CHECK(run_cmd("run").exit_code != 0);
}
