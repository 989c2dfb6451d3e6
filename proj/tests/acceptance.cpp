// Acceptance suite. Each criterion prints exactly one PASS/FAIL line with the
// measured numbers; the process exits nonzero if any criterion fails. The
// heavyweight run cache (5 variants x 5 seeds, 50 rounds) is built once and
// shared by the criteria that compare variant accuracies.
//
// Tolerances are pinned here, next to the checks, on purpose: they are the
// contract of this suite, not configuration.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "oracle_helpers.hpp"
#include "ssfl/comm.hpp"
#include "ssfl/experiment.hpp"
#include "ssfl/mask.hpp"
#include "ssfl/nn.hpp"
#include "ssfl/orchestrator.hpp"
#include "ssfl/partition.hpp"
#include "ssfl/rng.hpp"
#include "ssfl/saliency.hpp"

namespace fs = std::filesystem;
using namespace ssfl;

namespace {

// ---------------------------------------------------------------------------
// Shared benchmark task: 10 Gaussian-blob classes in 32 dims, 5000 training
// rows, one 32-unit hidden layer (d = 1386), 16 clients at Dirichlet 0.3,
// sigma 0.5, 50 rounds. The weight decay is deliberately strong (1.5e-2) so
// that inactive-but-kept coordinates decay away and mask quality shows up in
// the final accuracy instead of being hidden by excess capacity.
// ---------------------------------------------------------------------------

SyntheticSpec bench_data() {
    SyntheticSpec sp;
    sp.classes = 10;
    sp.features = 32;
    sp.train_per_class = 500;  // 5000 training rows total
    sp.test_per_class = 100;
    sp.spread = 3.0;
    return sp;
}

FLConfig bench_fl(Variant v, std::uint64_t seed) {
    FLConfig c;
    c.clients = 16;
    c.rounds = 50;
    c.sigma = 0.5;
    c.batch = 64;
    c.local_epochs = 5.0;
    c.lr0 = 0.1;
    c.lr_decay = 0.998;
    c.weight_decay = 0.015;
    c.hidden = {32};
    c.partition.alpha = 0.3;
    c.variant = v;
    c.seed = seed;
    return c;
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

struct RunCache {
    // variant -> seed -> result
    std::map<Variant, std::map<std::uint64_t, RunResult>> runs;
    bool built = false;
};

RunCache g_cache;

void build_cache() {
    if (g_cache.built) return;
    const Variant variants[] = {Variant::dense, Variant::ssfl, Variant::random_global,
                                Variant::random_local, Variant::shuffled};
    for (std::uint64_t seed : kSeeds) {
        SyntheticSplit split = make_synthetic(bench_data(), seed);
        for (Variant v : variants)
            g_cache.runs[v][seed] = run(bench_fl(v, seed), split.train, split.test);
    }
    g_cache.built = true;
}

double mean_final_acc(Variant v) {
    double sum = 0.0;
    for (std::uint64_t seed : kSeeds)
        sum += g_cache.runs.at(v).at(seed).rounds.back().global_acc;
    return 100.0 * sum / std::size(kSeeds);
}

// ---------------------------------------------------------------------------
// Criterion helpers
// ---------------------------------------------------------------------------

struct Outcome {
    bool pass = false;
    std::string detail;  // appended to the PASS/FAIL line
};

struct Check {
    bool ok = true;
    std::string text;

    void require(bool cond, const std::string& what) {
        ok = ok && cond;
        if (!text.empty()) text += ", ";
        text += what;
    }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), f, a, b, c, d);
    return buf;
}

fs::path fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("ssfl-acceptance-" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// 1. Encoding cost table: percent-of-dense figures for the three sparse
//    encodings at densities 0.5 and 0.05, to 0.1 percentage points.
// ---------------------------------------------------------------------------
Outcome criterion1() {
    Check ck;
    const std::uint64_t P = 1'000'000;
    struct Row {
        double density;
        double values_only, coo, bitmask;
    };
    // Expected percents: values_only 4k/4P, coo 8k/4P, bitmask (4k+P/8)/4P.
    const Row rows[] = {{0.5, 50.0, 100.0, 53.1}, {0.05, 5.0, 10.0, 8.1}};
    std::uint64_t dense = payload_bytes(P, P, Encoding::dense);
    for (const Row& r : rows) {
        double vo = percent_of_dense(payload_bytes_density(P, r.density, Encoding::values_only), dense);
        double co = percent_of_dense(payload_bytes_density(P, r.density, Encoding::coo), dense);
        double bm = percent_of_dense(payload_bytes_density(P, r.density, Encoding::bitmask), dense);
        ck.require(std::abs(vo - r.values_only) <= 0.1,
                   fmt("s=%.2f values_only %.1f%%", r.density, vo));
        ck.require(std::abs(co - r.coo) <= 0.1, fmt("coo %.1f%%", co));
        ck.require(std::abs(bm - r.bitmask) <= 0.1, fmt("bitmask %.1f%%", bm));
    }
    return {ck.ok, ck.text};
}

// ---------------------------------------------------------------------------
// 2. Per-round traffic ratio: a sigma=0.5 masked run moves exactly half the
//    bytes of the dense run under values-only encoding, setup traffic
//    excluded. d = 1386 is even, so the ratio is exact.
// ---------------------------------------------------------------------------
Outcome criterion2() {
    SyntheticSpec sp = bench_data();
    SyntheticSplit split = make_synthetic(sp, 1);
    FLConfig sparse = bench_fl(Variant::ssfl, 1);
    FLConfig dense = bench_fl(Variant::dense, 1);
    sparse.rounds = dense.rounds = 10;
    sparse.clients = dense.clients = 8;
    RunResult rs = run(sparse, split.train, split.test);
    RunResult rd = run(dense, split.train, split.test);

    LedgerSummary ss = summarize(rs.ledger);
    LedgerSummary sd = summarize(rd.ledger);
    // summarize() buckets setup traffic (saliency uploads, mask broadcasts)
    // separately from per-round model payloads, so model_bytes is exactly the
    // setup-excluded cumulative total.
    std::uint64_t sparse_bytes = ss.model_bytes(Direction::uplink, Encoding::values_only) +
                                 ss.model_bytes(Direction::downlink, Encoding::values_only);
    std::uint64_t dense_bytes = sd.model_bytes(Direction::uplink, Encoding::values_only) +
                                sd.model_bytes(Direction::downlink, Encoding::values_only);
    Check ck;
    ck.require(sparse_bytes * 2 == dense_bytes,
               fmt("masked %.0f vs dense %.0f bytes (ratio %.6f)", double(sparse_bytes),
                   double(dense_bytes), double(sparse_bytes) / double(dense_bytes)));
    return {ck.ok, ck.text};
}

// Shared network pool for the two oracle criteria: 20 random problems with
// d <= 200, redrawn until every hidden pre-activation clears the ReLU kink by
// 1e-3 so central differences at step 1e-5 are valid.
std::vector<oracle::RandomProblem> oracle_pool() {
    std::vector<oracle::RandomProblem> pool;
    Rng rng(substream(2024, "acceptance-oracles"));
    for (int i = 0; i < 20; ++i) pool.push_back(oracle::smooth_problem(rng, 200));
    return pool;
}

// ---------------------------------------------------------------------------
// 3. Analytic gradient vs central finite differences on 20 random networks.
// ---------------------------------------------------------------------------
Outcome criterion3() {
    double worst = 0.0;
    for (const auto& prob : oracle_pool()) {
        ParamVector g = gradient(prob.w, prob.batch);
        std::vector<double> fd = oracle::fd_gradient(prob.w, prob.batch);
        for (std::size_t j = 0; j < g.size(); ++j)
            worst = std::max(worst, oracle::rel_err(g.values[j], fd[j]));
    }
    Check ck;
    ck.require(worst <= 1e-4, fmt("max rel err %.3e over 20 nets (tol 1e-4)", worst));
    return {ck.ok, ck.text};
}

// ---------------------------------------------------------------------------
// 4. Saliency |g_j * w_j| vs the gating-vector finite difference dL/dc_j at
//    c = 1 on the same 20 networks.
// ---------------------------------------------------------------------------
Outcome criterion4() {
    double worst = 0.0;
    for (const auto& prob : oracle_pool()) {
        SaliencyVector s = local_saliency(prob.w, prob.batch);
        std::vector<double> fd = oracle::fd_gating_saliency(prob.w, prob.batch);
        for (std::size_t j = 0; j < s.size(); ++j)
            worst = std::max(worst, oracle::rel_err(s[j], fd[j]));
    }
    Check ck;
    ck.require(worst <= 1e-4, fmt("max rel err %.3e over 20 nets (tol 1e-4)", worst));
    return {ck.ok, ck.text};
}

// ---------------------------------------------------------------------------
// 5. Exact sparsity accounting: popcount(mask) == floor((1-sigma)*d) for the
//    sigma grid, and within-layer shuffling preserves per-slice counts.
// ---------------------------------------------------------------------------
Outcome criterion5() {
    Check ck;
    auto layout = std::make_shared<const LayerLayout>(LayerLayout::mlp(32, {32}, 10));
    Rng rng(substream(7, "acceptance-sparsity"));
    ParamVector w = init_params(layout, rng);
    SyntheticSpec sp = bench_data();
    SyntheticSplit split = make_synthetic(sp, 3);
    SaliencyVector s = dataset_saliency(w, split.train);

    const double sigmas[] = {0.5, 0.7, 0.8, 0.9, 0.95};
    std::size_t d = layout->total_params();
    bool counts_ok = true;
    for (double sigma : sigmas) {
        Mask m = topk_mask(s, sigma, *layout, false);
        std::size_t want = static_cast<std::size_t>((1.0 - sigma) * double(d) + double(d) * 1e-12);
        counts_ok = counts_ok && (m.active_count() == want);
    }
    ck.require(counts_ok, "popcount == floor((1-sigma)*d) for sigma in {.5,.7,.8,.9,.95}");

    bool layers_ok = true;
    for (int trial = 0; trial < 10; ++trial) {
        Mask m = topk_mask(s, 0.8, *layout, false);
        Rng sh(substream(7, "acceptance-shuffle", static_cast<std::uint64_t>(trial)));
        Mask shuffled = shuffle_within_layers(m, *layout, sh);
        for (const LayerSlice& sl : layout->slices()) {
            std::size_t a = 0, b = 0;
            for (std::size_t j = sl.offset; j < sl.offset + sl.length; ++j) {
                a += m.at(j) ? 1 : 0;
                b += shuffled.at(j) ? 1 : 0;
            }
            layers_ok = layers_ok && (a == b);
        }
    }
    ck.require(layers_ok, "shuffle preserves per-layer counts (10 trials)");
    return {ck.ok, ck.text};
}

// ---------------------------------------------------------------------------
// 6. Mask-quality ordering on the shared benchmark: saliency mask beats a
//    shared random mask, which beats per-client random masks, each by at
//    least one accuracy point; the masked run stays within five points of
//    dense training.
// ---------------------------------------------------------------------------
Outcome criterion6() {
    build_cache();
    double ssfl = mean_final_acc(Variant::ssfl);
    double rg = mean_final_acc(Variant::random_global);
    double rl = mean_final_acc(Variant::random_local);
    double dense = mean_final_acc(Variant::dense);
    Check ck;
    ck.require(ssfl >= rg + 1.0, fmt("saliency %.2f vs random_global %.2f (need +1)", ssfl, rg));
    ck.require(rg >= rl + 1.0, fmt("random_global %.2f vs random_local %.2f (need +1)", rg, rl));
    ck.require(dense - ssfl <= 5.0, fmt("dense %.2f - saliency %.2f = %.2f (need <= 5)", dense,
                                        ssfl, dense - ssfl));
    return {ck.ok, ck.text};
}

// ---------------------------------------------------------------------------
// 7. Mask-error convergence: the 5-seed mean error against the full-data
//    oracle is non-increasing in the number of aggregated minibatches and
//    drops by at least half from 1 to 32 batches.
// ---------------------------------------------------------------------------
Outcome criterion7() {
    ExperimentConfig c;
    c.synth = bench_data();
    c.synth.spread = 4.0;  // cleaner per-batch estimates; the study isolates estimator noise
    c.fl.hidden = {32};
    c.fl.sigma = 0.5;
    c.fl.batch = 512;
    c.seeds = {1, 2, 3, 4, 5};
    c.mask_study_counts = {1, 2, 4, 8, 16, 32};
    c.out_dir = fresh_dir("mask-study").string();
    run_mask_study(c);

    std::ifstream in(fs::path(c.out_dir) / "mask_study.csv");
    std::string line;
    std::getline(in, line);  // header
    std::map<int, std::pair<double, int>> acc;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string count, seed, err;
        std::getline(ss, count, ',');
        std::getline(ss, seed, ',');
        std::getline(ss, err, ',');
        acc[std::atoi(count.c_str())].first += std::atof(err.c_str());
        acc[std::atoi(count.c_str())].second += 1;
    }
    std::vector<double> means;
    std::string curve;
    for (auto& [count, se] : acc) {
        means.push_back(se.first / se.second);
        if (!curve.empty()) curve += " ";
        curve += fmt("%.4f", means.back());
    }
    bool mono = true;
    for (std::size_t i = 1; i < means.size(); ++i) mono = mono && (means[i] <= means[i - 1] + 1e-12);
    Check ck;
    ck.require(acc.size() == 6 && mono, "5-seed mean non-increasing over {1,2,4,8,16,32}");
    ck.require(means.back() <= 0.5 * means.front(),
               fmt("err@32 %.4f <= half of err@1 %.4f", means.back(), means.front()));
    ck.text += " [" + curve + "]";
    return {ck.ok, ck.text};
}

// ---------------------------------------------------------------------------
// 8. Shuffled-mask control on the shared benchmark: layer allocation alone
//    (shuffled) sits between the saliency mask and the shared random mask;
//    adjacent ties allowed to 0.5 points, but the saliency mask must beat the
//    random mask outright.
// ---------------------------------------------------------------------------
Outcome criterion8() {
    build_cache();
    double ssfl = mean_final_acc(Variant::ssfl);
    double sh = mean_final_acc(Variant::shuffled);
    double rg = mean_final_acc(Variant::random_global);
    Check ck;
    ck.require(ssfl >= sh - 0.5, fmt("saliency %.2f vs shuffled %.2f (tie to 0.5)", ssfl, sh));
    ck.require(sh >= rg - 0.5, fmt("shuffled %.2f vs random_global %.2f (tie to 0.5)", sh, rg));
    ck.require(ssfl > rg, fmt("saliency %.2f > random_global %.2f strict", ssfl, rg));
    return {ck.ok, ck.text};
}

// ---------------------------------------------------------------------------
// 9. Distribution-shift refresh: train on 8 of 10 classes for 30 rounds, then
//    admit new clients holding the 2 held-out classes and refresh the mask
//    once. Held-out accuracy must rise from near-chance (<= 15%) to >= 60%
//    within 25 more rounds while seen-class accuracy drops <= 10 points.
// ---------------------------------------------------------------------------
Outcome criterion9() {
    SyntheticSplit split = make_synthetic(bench_data(), 1);
    FLConfig c = bench_fl(Variant::ssfl, 1);
    c.rounds = 55;
    c.ood.enabled = true;
    c.ood.holdout_classes = {8, 9};
    c.ood.refresh_round = 30;
    c.ood.new_clients = 4;
    RunResult r = run(c, split.train, split.test);

    const RoundMetrics* at30 = nullptr;
    const RoundMetrics* at55 = nullptr;
    for (const RoundMetrics& m : r.rounds) {
        if (m.round == 30) at30 = &m;
        if (m.round == 55) at55 = &m;
    }
    Check ck;
    if (!at30 || !at55) {
        ck.require(false, "metrics rows for rounds 30 and 55 missing");
        return {ck.ok, ck.text};
    }
    double before = 100.0 * at30->holdout_acc;
    double after = 100.0 * at55->holdout_acc;
    double seen30 = 100.0 * at30->seen_acc;
    double seen55 = 100.0 * at55->seen_acc;
    ck.require(before <= 15.0, fmt("holdout before refresh %.1f%% (need <= 15)", before));
    ck.require(after >= 60.0, fmt("holdout after 25 rounds %.1f%% (need >= 60)", after));
    ck.require(seen55 >= seen30 - 10.0,
               fmt("seen %.1f%% -> %.1f%% (drop <= 10)", seen30, seen55));
    return {ck.ok, ck.text};
}

// ---------------------------------------------------------------------------
// 10. Determinism: running the same experiment config twice produces
//     byte-identical metrics.csv files.
// ---------------------------------------------------------------------------
Outcome criterion10() {
    ExperimentConfig c;
    c.synth.classes = 5;
    c.synth.features = 8;
    c.synth.train_per_class = 40;
    c.synth.test_per_class = 10;
    c.synth.spread = 3.0;
    c.fl = bench_fl(Variant::ssfl, 1);
    c.fl.clients = 4;
    c.fl.rounds = 3;
    c.fl.hidden = {8};
    c.fl.batch = 16;
    c.variants = {Variant::ssfl, Variant::dense};
    c.seeds = {1, 2};

    fs::path a = fresh_dir("determinism-a");
    fs::path b = fresh_dir("determinism-b");
    c.out_dir = a.string();
    run_experiment(c, 1);
    c.out_dir = b.string();
    run_experiment(c, 1);

    std::string ma = slurp(a / "metrics.csv");
    std::string mb = slurp(b / "metrics.csv");
    Check ck;
    ck.require(!ma.empty() && ma == mb,
               fmt("metrics.csv identical across reruns (%.0f bytes)", double(ma.size())));
    return {ck.ok, ck.text};
}

// ---------------------------------------------------------------------------
// 11. Partition regimes: near-uniform at alpha = 1e6 (every client within
//     total-variation 0.05 of the uniform prior) and near-single-class at
//     alpha = 1e-4 (>= 90% of clients at >= 95% one label, pooled over 5
//     seeds).
// ---------------------------------------------------------------------------
Outcome criterion11() {
    SyntheticSpec sp = bench_data();
    Check ck;

    double worst_tv = 0.0;
    for (std::uint64_t seed : kSeeds) {
        SyntheticSplit split = make_synthetic(sp, seed);
        PartitionSpec ps;
        ps.mode = PartitionSpec::Mode::dirichlet;
        ps.alpha = 1e6;
        ps.clients = 16;
        ps.seed = seed;
        std::vector<std::size_t> pool(split.train.rows());
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        Partition part = make_partition(split.train, pool, ps);
        for (const ClientShard& sh : part.shards) {
            std::vector<double> hist(sp.classes, 0.0);
            for (std::size_t idx : sh.indices) hist[split.train.y[idx]] += 1.0;
            double tv = 0.0;
            for (double h : hist) tv += std::abs(h / double(sh.size()) - 1.0 / sp.classes);
            worst_tv = std::max(worst_tv, 0.5 * tv);
        }
    }
    ck.require(worst_tv <= 0.05, fmt("alpha=1e6 worst client TV %.4f (need <= 0.05)", worst_tv));

    std::size_t single = 0, total = 0;
    for (std::uint64_t seed : kSeeds) {
        SyntheticSplit split = make_synthetic(sp, seed);
        PartitionSpec ps;
        ps.mode = PartitionSpec::Mode::dirichlet;
        ps.alpha = 1e-4;
        ps.clients = 20;
        ps.seed = seed;
        std::vector<std::size_t> pool(split.train.rows());
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        Partition part = make_partition(split.train, pool, ps);
        for (const ClientShard& sh : part.shards) {
            std::vector<std::size_t> hist(sp.classes, 0);
            for (std::size_t idx : sh.indices) hist[split.train.y[idx]] += 1;
            std::size_t top = *std::max_element(hist.begin(), hist.end());
            if (double(top) >= 0.95 * double(sh.size())) ++single;
            ++total;
        }
    }
    double frac = double(single) / double(total);
    ck.require(frac >= 0.90,
               fmt("alpha=1e-4 single-class clients %.0f/%.0f = %.1f%% (need >= 90%%)",
                   double(single), double(total), 100.0 * frac));
    return {ck.ok, ck.text};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> fn;
    };
    const Criterion criteria[] = {
        {1, "encoding cost table", criterion1},
        {2, "sigma=0.5 halves values-only traffic", criterion2},
        {3, "gradient matches finite differences", criterion3},
        {4, "saliency matches gating finite differences", criterion4},
        {5, "exact mask popcounts and layer-preserving shuffle", criterion5},
        {6, "accuracy ordering saliency/random-global/random-local/dense", criterion6},
        {7, "mask error converges with aggregated minibatches", criterion7},
        {8, "shuffled-mask control ordering", criterion8},
        {9, "held-out class recovery after mask refresh", criterion9},
        {10, "byte-identical rerun", criterion10},
        {11, "dirichlet partition extremes", criterion11},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %2d: %s — %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass) ++failures;
    }
    if (failures) std::printf("%d of 11 criteria failed\n", failures);
    else std::printf("all 11 criteria passed\n");
    return failures == 0 ? 0 : 1;
}
