#include "ssfl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace fs = std::filesystem;

namespace ssfl {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::logic_error("number formatting failed");
    return std::string(buf, p);
}

// Fixed-width accuracy cell; NaN (metric not applicable) renders empty.
std::string fmt_acc(double v) {
    if (std::isnan(v)) return {};
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void write_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open for writing: " + tmp.string());
        f << content;
        if (!f) throw std::runtime_error("failed writing: " + tmp.string());
    }
    fs::rename(tmp, path);
}

struct ConfigLine {
    std::string value;
    std::size_t line = 0;
    bool used = false;
};

// key = value file with '#' comments; keys may repeat only by mistake.
class ConfigReader {
public:
    ConfigReader(const std::string& path) : path_(path) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("cannot open config: " + path);
        std::string line;
        std::size_t no = 0;
        while (std::getline(f, line)) {
            ++no;
            std::string s = strip(line);
            if (s.empty() || s[0] == '#') continue;
            auto eq = s.find('=');
            if (eq == std::string::npos) fail(no, "expected 'key = value'");
            std::string key = strip(s.substr(0, eq));
            std::string value = strip(s.substr(eq + 1));
            if (key.empty()) fail(no, "empty key");
            if (entries_.count(key)) fail(no, "duplicate key '" + key + "'");
            entries_[key] = {value, no, false};
        }
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    std::string raw(const std::string& key, const std::string& fallback) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.used = true;
        return it->second.value;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        return parse_with<std::uint64_t>(key, fallback, [this](const std::string& v,
                                                               std::size_t line) {
            std::uint64_t out = 0;
            auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
            if (ec != std::errc() || p != v.data() + v.size())
                fail(line, "expected a nonnegative integer, got '" + v + "'");
            return out;
        });
    }

    double get_double(const std::string& key, double fallback) {
        return parse_with<double>(key, fallback, [this](const std::string& v, std::size_t line) {
            double out = 0.0;
            auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
            if (ec != std::errc() || p != v.data() + v.size())
                fail(line, "expected a number, got '" + v + "'");
            return out;
        });
    }

    bool get_bool(const std::string& key, bool fallback) {
        return parse_with<bool>(key, fallback, [this](const std::string& v, std::size_t line) {
            if (v == "true") return true;
            if (v == "false") return false;
            fail(line, "expected true or false, got '" + v + "'");
            return false;
        });
    }

    template <typename T, typename Parse>
    std::vector<T> get_list(const std::string& key, std::vector<T> fallback, Parse parse) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.used = true;
        std::vector<T> out;
        std::stringstream ss(it->second.value);
        for (std::string cell; std::getline(ss, cell, ',');) {
            cell = strip(cell);
            if (cell.empty()) fail(it->second.line, "empty list entry");
            out.push_back(parse(cell, it->second.line));
        }
        if (out.empty()) fail(it->second.line, "list must not be empty");
        return out;
    }

    std::size_t line_of(const std::string& key) const {
        auto it = entries_.find(key);
        return it == entries_.end() ? 0 : it->second.line;
    }

    [[noreturn]] void fail(std::size_t line, const std::string& message) const {
        throw std::runtime_error(path_ + ":" + std::to_string(line) + ": " + message);
    }

    [[noreturn]] void fail_key(const std::string& key, const std::string& message) const {
        fail(line_of(key), message + " (key '" + key + "')");
    }

    void reject_unknown() const {
        // Report the earliest unknown key for a stable message.
        const ConfigLine* worst = nullptr;
        std::string worst_key;
        for (const auto& [key, entry] : entries_) {
            if (entry.used) continue;
            if (!worst || entry.line < worst->line) {
                worst = &entry;
                worst_key = key;
            }
        }
        if (worst) fail(worst->line, "unknown key '" + worst_key + "'");
    }

private:
    static std::string strip(const std::string& s) {
        auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    template <typename T, typename Parse>
    T parse_with(const std::string& key, T fallback, Parse parse) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.used = true;
        return parse(it->second.value, it->second.line);
    }

    std::string path_;
    std::map<std::string, ConfigLine> entries_;
};

std::uint64_t parse_u64_cell(ConfigReader& r, const std::string& cell, std::size_t line) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
    if (ec != std::errc() || p != cell.data() + cell.size())
        r.fail(line, "expected a nonnegative integer, got '" + cell + "'");
    return out;
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
    ConfigReader r(path);
    ExperimentConfig c;

    std::string source = r.raw("data.source", "synthetic");
    if (source == "synthetic") {
        c.use_csv = false;
    } else if (source == "csv") {
        c.use_csv = true;
    } else {
        r.fail_key("data.source", "data.source must be synthetic or csv");
    }
    c.synth.classes = r.get_u64("data.classes", c.synth.classes);
    c.synth.features = r.get_u64("data.features", c.synth.features);
    c.synth.train_per_class = r.get_u64("data.train_per_class", c.synth.train_per_class);
    c.synth.test_per_class = r.get_u64("data.test_per_class", c.synth.test_per_class);
    c.synth.spread = r.get_double("data.spread", c.synth.spread);
    c.train_csv = r.raw("data.train_csv", "");
    c.test_csv = r.raw("data.test_csv", "");
    if (c.use_csv && (c.train_csv.empty() || c.test_csv.empty()))
        r.fail_key("data.source", "csv data needs data.train_csv and data.test_csv");

    c.fl.hidden = r.get_list<std::size_t>(
        "model.hidden", c.fl.hidden,
        [&r](const std::string& cell, std::size_t line) {
            return static_cast<std::size_t>(parse_u64_cell(r, cell, line));
        });

    c.fl.clients = r.get_u64("fl.clients", c.fl.clients);
    c.fl.rounds = r.get_u64("fl.rounds", c.fl.rounds);
    c.fl.client_fraction = r.get_double("fl.client_fraction", c.fl.client_fraction);
    c.fl.sigma = r.get_double("fl.sigma", c.fl.sigma);
    c.fl.batch = r.get_u64("fl.batch", c.fl.batch);
    c.fl.local_epochs = r.get_double("fl.local_epochs", c.fl.local_epochs);
    c.fl.lr0 = r.get_double("fl.lr0", c.fl.lr0);
    c.fl.lr_decay = r.get_double("fl.lr_decay", c.fl.lr_decay);
    c.fl.weight_decay = r.get_double("fl.weight_decay", c.fl.weight_decay);
    c.fl.mask_biases = r.get_bool("fl.mask_biases", c.fl.mask_biases);
    c.fl.warmup_rounds = r.get_u64("fl.warmup_rounds", c.fl.warmup_rounds);

    std::string mode = r.raw("partition.mode", "dirichlet");
    if (mode == "dirichlet") {
        c.fl.partition.mode = PartitionSpec::Mode::dirichlet;
    } else if (mode == "pathological") {
        c.fl.partition.mode = PartitionSpec::Mode::pathological;
    } else {
        r.fail_key("partition.mode", "partition.mode must be dirichlet or pathological");
    }
    c.fl.partition.alpha = r.get_double("partition.alpha", c.fl.partition.alpha);
    c.fl.partition.classes_per_client =
        r.get_u64("partition.classes_per_client", c.fl.partition.classes_per_client);
    c.fl.partition.prior = r.get_list<double>(
        "partition.prior", {}, [&r](const std::string& cell, std::size_t line) {
            double v = 0.0;
            auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || p != cell.data() + cell.size())
                r.fail(line, "expected a number, got '" + cell + "'");
            return v;
        });

    c.variants = r.get_list<Variant>(
        "run.variants", c.variants, [&r](const std::string& cell, std::size_t line) {
            try {
                return parse_variant(cell);
            } catch (const std::invalid_argument& e) {
                r.fail(line, e.what());
            }
        });
    c.seeds = r.get_list<std::uint64_t>(
        "run.seeds", c.seeds, [&r](const std::string& cell, std::size_t line) {
            return parse_u64_cell(r, cell, line);
        });

    c.fl.ood.enabled = r.get_bool("ood.enabled", false);
    c.fl.ood.holdout_classes = r.get_list<int>(
        "ood.holdout_classes", {}, [&r](const std::string& cell, std::size_t line) {
            return static_cast<int>(parse_u64_cell(r, cell, line));
        });
    c.fl.ood.refresh_round = r.get_u64("ood.refresh_round", 0);
    c.fl.ood.new_clients = r.get_u64("ood.new_clients", 0);

    c.mask_study_counts = r.get_list<std::size_t>(
        "mask_study.counts", c.mask_study_counts,
        [&r](const std::string& cell, std::size_t line) {
            auto v = static_cast<std::size_t>(parse_u64_cell(r, cell, line));
            if (v == 0) r.fail(line, "minibatch counts must be >= 1");
            return v;
        });

    c.out_dir = r.raw("output.dir", c.out_dir);

    // Range checks: reject impossible values here, with the offending line,
    // instead of failing somewhere mid-run.
    if (!c.use_csv) {
        if (c.synth.classes < 2) r.fail_key("data.classes", "need at least 2 classes");
        if (c.synth.features < 2) r.fail_key("data.features", "need at least 2 features");
        if (c.synth.train_per_class < 10)
            r.fail_key("data.train_per_class", "need at least 10 training samples per class");
        if (c.synth.test_per_class < 1)
            r.fail_key("data.test_per_class", "need at least 1 test sample per class");
        if (!(c.synth.spread > 0.0)) r.fail_key("data.spread", "spread must be positive");
    }
    for (std::size_t width : c.fl.hidden)
        if (width == 0) r.fail_key("model.hidden", "hidden widths must be >= 1");
    if (c.fl.clients == 0) r.fail_key("fl.clients", "need at least one client");
    if (!(c.fl.client_fraction > 0.0 && c.fl.client_fraction <= 1.0))
        r.fail_key("fl.client_fraction", "client fraction must be in (0, 1]");
    if (!(c.fl.sigma >= 0.0 && c.fl.sigma < 1.0))
        r.fail_key("fl.sigma", "sparsity must be in [0, 1)");
    if (c.fl.batch == 0) r.fail_key("fl.batch", "batch must be >= 1");
    if (!(c.fl.local_epochs > 0.0))
        r.fail_key("fl.local_epochs", "local epochs must be positive");
    if (!(c.fl.lr0 > 0.0)) r.fail_key("fl.lr0", "learning rate must be positive");
    if (!(c.fl.lr_decay > 0.0 && c.fl.lr_decay <= 1.0))
        r.fail_key("fl.lr_decay", "decay must be in (0, 1]");
    if (!(c.fl.weight_decay >= 0.0))
        r.fail_key("fl.weight_decay", "weight decay must be >= 0");
    if (!(c.fl.partition.alpha > 0.0)) r.fail_key("partition.alpha", "alpha must be positive");
    if (c.fl.partition.classes_per_client == 0)
        r.fail_key("partition.classes_per_client", "classes per client must be >= 1");
    for (double p : c.fl.partition.prior)
        if (!(p >= 0.0)) r.fail_key("partition.prior", "prior entries must be >= 0");
    if (c.fl.ood.enabled) {
        if (c.fl.ood.holdout_classes.empty())
            r.fail_key("ood.enabled", "a holdout schedule needs ood.holdout_classes");
        if (c.fl.ood.new_clients == 0)
            r.fail_key(r.has("ood.new_clients") ? "ood.new_clients" : "ood.enabled",
                       "a holdout schedule needs at least one arriving client");
        if (c.fl.ood.refresh_round == 0 || c.fl.ood.refresh_round > c.fl.rounds)
            r.fail_key(r.has("ood.refresh_round") ? "ood.refresh_round" : "ood.enabled",
                       "the refresh round must lie in [1, fl.rounds]");
    }

    r.reject_unknown();
    return c;
}

void apply_overrides(ExperimentConfig& config, std::optional<std::uint64_t> seed,
                     const std::optional<std::string>& out, const std::string& out_root) {
    if (seed) config.seeds = {*seed};
    if (out) config.out_dir = *out;
    if (!out_root.empty() && fs::path(config.out_dir).is_relative())
        config.out_dir = (fs::path(out_root) / config.out_dir).string();
}

std::string resolved_config_text(const ExperimentConfig& c) {
    std::ostringstream o;
    auto list_u = [](const auto& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i)
            s += (i ? "," : "") + std::to_string(v[i]);
        return s;
    };
    o << "data.source = " << (c.use_csv ? "csv" : "synthetic") << "\n";
    if (c.use_csv) {
        o << "data.train_csv = " << c.train_csv << "\n";
        o << "data.test_csv = " << c.test_csv << "\n";
    } else {
        o << "data.classes = " << c.synth.classes << "\n";
        o << "data.features = " << c.synth.features << "\n";
        o << "data.train_per_class = " << c.synth.train_per_class << "\n";
        o << "data.test_per_class = " << c.synth.test_per_class << "\n";
        o << "data.spread = " << fmt_double(c.synth.spread) << "\n";
    }
    o << "model.hidden = " << list_u(c.fl.hidden) << "\n";
    o << "fl.clients = " << c.fl.clients << "\n";
    o << "fl.rounds = " << c.fl.rounds << "\n";
    o << "fl.client_fraction = " << fmt_double(c.fl.client_fraction) << "\n";
    o << "fl.sigma = " << fmt_double(c.fl.sigma) << "\n";
    o << "fl.batch = " << c.fl.batch << "\n";
    o << "fl.local_epochs = " << fmt_double(c.fl.local_epochs) << "\n";
    o << "fl.lr0 = " << fmt_double(c.fl.lr0) << "\n";
    o << "fl.lr_decay = " << fmt_double(c.fl.lr_decay) << "\n";
    o << "fl.weight_decay = " << fmt_double(c.fl.weight_decay) << "\n";
    o << "fl.mask_biases = " << (c.fl.mask_biases ? "true" : "false") << "\n";
    o << "fl.warmup_rounds = " << c.fl.warmup_rounds << "\n";
    o << "partition.mode = "
      << (c.fl.partition.mode == PartitionSpec::Mode::dirichlet ? "dirichlet" : "pathological")
      << "\n";
    o << "partition.alpha = " << fmt_double(c.fl.partition.alpha) << "\n";
    o << "partition.classes_per_client = " << c.fl.partition.classes_per_client << "\n";
    if (!c.fl.partition.prior.empty()) {
        o << "partition.prior = ";
        for (std::size_t i = 0; i < c.fl.partition.prior.size(); ++i)
            o << (i ? "," : "") << fmt_double(c.fl.partition.prior[i]);
        o << "\n";
    }
    o << "run.variants = ";
    for (std::size_t i = 0; i < c.variants.size(); ++i)
        o << (i ? "," : "") << variant_name(c.variants[i]);
    o << "\n";
    o << "run.seeds = " << list_u(c.seeds) << "\n";
    o << "ood.enabled = " << (c.fl.ood.enabled ? "true" : "false") << "\n";
    if (!c.fl.ood.holdout_classes.empty())
        o << "ood.holdout_classes = " << list_u(c.fl.ood.holdout_classes) << "\n";
    if (c.fl.ood.refresh_round) o << "ood.refresh_round = " << c.fl.ood.refresh_round << "\n";
    if (c.fl.ood.new_clients) o << "ood.new_clients = " << c.fl.ood.new_clients << "\n";
    o << "mask_study.counts = " << list_u(c.mask_study_counts) << "\n";
    o << "output.dir = " << c.out_dir << "\n";
    return o.str();
}

namespace {

SyntheticSplit dataset_for_seed(const ExperimentConfig& c, std::uint64_t seed) {
    if (c.use_csv) return {read_csv(c.train_csv), read_csv(c.test_csv)};
    return make_synthetic(c.synth, substream(seed, "data"));
}

const char* kMetricsHeader =
    "round,variant,seed,global_acc,mean_local_acc,"
    "uplink_bytes_values_only,uplink_bytes_dense,uplink_bytes_coo,uplink_bytes_bitmask,"
    "downlink_bytes_values_only,downlink_bytes_dense,downlink_bytes_coo,downlink_bytes_bitmask,"
    "lr,p10_local_acc,p50_local_acc,p90_local_acc,seen_acc,holdout_acc\n";

void append_metrics_rows(std::string& out, Variant variant, std::uint64_t seed,
                         const RunResult& res) {
    auto at = [](const std::array<std::uint64_t, 4>& a, Encoding e) {
        return a[static_cast<std::size_t>(e)];
    };
    for (const RoundMetrics& m : res.rounds) {
        std::ostringstream o;
        o << m.round << "," << variant_name(variant) << "," << seed << ","
          << fmt_acc(m.global_acc) << "," << fmt_acc(m.mean_local_acc) << ","
          << at(m.uplink_bytes, Encoding::values_only) << ","
          << at(m.uplink_bytes, Encoding::dense) << "," << at(m.uplink_bytes, Encoding::coo)
          << "," << at(m.uplink_bytes, Encoding::bitmask) << ","
          << at(m.downlink_bytes, Encoding::values_only) << ","
          << at(m.downlink_bytes, Encoding::dense) << "," << at(m.downlink_bytes, Encoding::coo)
          << "," << at(m.downlink_bytes, Encoding::bitmask) << "," << fmt_double(m.lr) << ","
          << fmt_acc(m.p10_local_acc) << "," << fmt_acc(m.p50_local_acc) << ","
          << fmt_acc(m.p90_local_acc) << "," << fmt_acc(m.seen_acc) << ","
          << fmt_acc(m.holdout_acc) << "\n";
        out += o.str();
    }
}

nlohmann::ordered_json comm_json(const RunResult& res) {
    LedgerSummary s = summarize(res.ledger);
    nlohmann::ordered_json j;
    for (const char* dir : {"uplink", "downlink"}) {
        Direction d = dir == std::string("uplink") ? Direction::uplink : Direction::downlink;
        nlohmann::ordered_json bytes, pct;
        const std::uint64_t dense = s.model_bytes(d, Encoding::dense);
        for (Encoding e : kEncodings) {
            bytes[encoding_name(e)] = s.model_bytes(d, e);
            if (dense > 0) pct[encoding_name(e)] = percent_of_dense(s.model_bytes(d, e), dense);
        }
        j[dir]["model_bytes"] = bytes;
        if (dense > 0) j[dir]["pct_of_dense"] = pct;
    }
    j["setup"]["saliency_bytes"] = s.saliency_bytes;
    j["setup"]["mask_bytes"] = s.mask_bytes;
    return j;
}

nlohmann::ordered_json config_json(const ExperimentConfig& c) {
    nlohmann::ordered_json j;
    std::istringstream in(resolved_config_text(c));
    for (std::string line; std::getline(in, line);) {
        auto eq = line.find(" = ");
        j[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return j;
}

}  // namespace

void run_experiment(const ExperimentConfig& config, std::size_t jobs) {
    if (config.variants.empty()) throw std::runtime_error("run.variants must not be empty");
    if (config.seeds.empty()) throw std::runtime_error("run.seeds must not be empty");

    // One dataset per seed, shared by every variant for paired comparisons.
    std::map<std::uint64_t, SyntheticSplit> data;
    for (std::uint64_t seed : config.seeds)
        if (!data.count(seed)) data[seed] = dataset_for_seed(config, seed);

    struct Job {
        Variant variant;
        std::uint64_t seed;
        RunResult result;
    };
    std::vector<Job> runs;
    for (Variant v : config.variants)
        for (std::uint64_t seed : config.seeds) runs.push_back({v, seed, {}});

    std::atomic<std::size_t> cursor{0};
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            std::size_t i = cursor.fetch_add(1);
            if (i >= runs.size() || failed.load()) return;
            try {
                FLConfig fl = config.fl;
                fl.variant = runs[i].variant;
                fl.seed = runs[i].seed;
                const SyntheticSplit& split = data.at(runs[i].seed);
                runs[i].result = run(fl, split.train, split.test);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!failed.exchange(true))
                    first_error = "run " + variant_name(runs[i].variant) + " seed " +
                                  std::to_string(runs[i].seed) + ": " + e.what();
            }
        }
    };
    std::size_t n_workers = std::max<std::size_t>(1, std::min(jobs, runs.size()));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    if (failed.load()) throw std::runtime_error(first_error);

    fs::create_directories(config.out_dir);
    fs::create_directories(fs::path(config.out_dir) / "runs");

    std::string metrics = kMetricsHeader;
    // The combined ledger prefixes every row with the run it came from; the
    // per-run files keep the bare write_ledger_csv format.
    std::string all_ledgers = "variant,seed,round,direction,client,scheme,bytes\n";
    nlohmann::ordered_json summary;
    summary["config"] = config_json(config);
    summary["runs"] = nlohmann::ordered_json::array();
    nlohmann::ordered_json mask_stats = nlohmann::ordered_json::array();

    for (const Job& job : runs) {
        append_metrics_rows(metrics, job.variant, job.seed, job.result);

        std::ostringstream one;
        write_ledger_csv(one, job.result.ledger);
        std::string one_str = one.str();
        std::string prefix = variant_name(job.variant) + "," + std::to_string(job.seed) + ",";
        std::size_t pos = one_str.find('\n') + 1;  // skip the per-run header
        while (pos < one_str.size()) {
            std::size_t end = one_str.find('\n', pos);
            all_ledgers += prefix;
            all_ledgers.append(one_str, pos, end - pos + 1);
            pos = end + 1;
        }

        fs::path run_dir = fs::path(config.out_dir) / "runs" /
                           (variant_name(job.variant) + "-s" + std::to_string(job.seed));
        fs::create_directories(run_dir);
        write_atomic(run_dir / "ledger.csv", one_str);
        if (job.result.masked)
            write_mask((run_dir / "mask.bin").string(), job.result.final_mask,
                       *job.result.layout);

        const RoundMetrics& last = job.result.rounds.back();
        nlohmann::ordered_json jr;
        jr["variant"] = variant_name(job.variant);
        jr["seed"] = job.seed;
        jr["rounds"] = job.result.rounds.size() - 1;
        jr["params"] = job.result.layout->total_params();
        if (job.result.masked)
            jr["mask_active"] = job.result.final_mask.active_count();
        else
            jr["mask_active"] = nullptr;
        jr["final_global_acc"] = last.global_acc;
        jr["final_mean_local_acc"] = last.mean_local_acc;
        if (!std::isnan(last.seen_acc)) jr["final_seen_acc"] = last.seen_acc;
        if (!std::isnan(last.holdout_acc)) jr["final_holdout_acc"] = last.holdout_acc;
        jr["comm"] = comm_json(job.result);
        summary["runs"].push_back(jr);

        nlohmann::ordered_json jm;
        jm["variant"] = variant_name(job.variant);
        jm["seed"] = job.seed;
        jm["params"] = job.result.layout->total_params();
        if (job.result.masked) {
            jm["active"] = job.result.final_mask.active_count();
            nlohmann::ordered_json layers = nlohmann::ordered_json::array();
            for (const SliceDensity& sd :
                 layer_densities(job.result.final_mask, *job.result.layout)) {
                nlohmann::ordered_json jl;
                jl["name"] = sd.name;
                jl["active"] = sd.active;
                jl["length"] = sd.length;
                jl["density"] = sd.density;
                layers.push_back(jl);
            }
            jm["layers"] = layers;
        } else {
            jm["active"] = nullptr;
            jm["layers"] = nullptr;
        }
        mask_stats.push_back(jm);
    }

    // Per-variant aggregation over seeds (population standard deviation).
    summary["variants"] = nlohmann::ordered_json::array();
    for (Variant v : config.variants) {
        std::vector<double> finals;
        for (const Job& job : runs)
            if (job.variant == v) finals.push_back(job.result.rounds.back().global_acc);
        double mean = std::accumulate(finals.begin(), finals.end(), 0.0) /
                      static_cast<double>(finals.size());
        double var = 0.0;
        for (double a : finals) var += (a - mean) * (a - mean);
        var /= static_cast<double>(finals.size());
        nlohmann::ordered_json jv;
        jv["variant"] = variant_name(v);
        jv["seeds"] = finals.size();
        jv["final_global_acc_mean"] = mean;
        jv["final_global_acc_std"] = std::sqrt(var);
        summary["variants"].push_back(jv);
    }

    write_atomic(fs::path(config.out_dir) / "metrics.csv", metrics);
    write_atomic(fs::path(config.out_dir) / "ledger.csv", all_ledgers);
    write_atomic(fs::path(config.out_dir) / "summary.json", summary.dump(2) + "\n");
    write_atomic(fs::path(config.out_dir) / "mask_stats.json", mask_stats.dump(2) + "\n");
    write_atomic(fs::path(config.out_dir) / "config_resolved.txt", resolved_config_text(config));
}

void run_mask_study(const ExperimentConfig& config) {
    if (config.seeds.empty()) throw std::runtime_error("run.seeds must not be empty");
    std::string csv = "count,seed,mask_error\n";
    for (std::uint64_t seed : config.seeds) {
        SyntheticSplit split = dataset_for_seed(config, seed);
        const Dataset& train = split.train;
        auto layout = std::make_shared<const LayerLayout>(
            LayerLayout::mlp(train.features, config.fl.hidden, train.classes));
        Rng init_rng(substream(seed, "init"));
        ParamVector w0 = init_params(layout, init_rng);
        Mask oracle = oracle_mask(w0, train, config.fl.sigma, !config.fl.mask_biases);

        ClientShard everything;
        everything.client_id = 0;
        everything.indices.resize(train.rows());
        std::iota(everything.indices.begin(), everything.indices.end(), std::size_t{0});

        // Nested prefixes: count c reuses the first c minibatches, so the
        // sweep isolates the effect of aggregating more estimates.
        std::size_t max_count =
            *std::max_element(config.mask_study_counts.begin(), config.mask_study_counts.end());
        std::vector<SaliencyVector> scores;
        scores.reserve(max_count);
        for (std::size_t i = 0; i < max_count; ++i) {
            Rng rng(substream(seed, "study", i));
            Batch b = sample_balanced_minibatch(everything, train, config.fl.batch, rng);
            scores.push_back(local_saliency(w0, b));
        }
        for (std::size_t count : config.mask_study_counts) {
            std::vector<SaliencyVector> prefix(scores.begin(),
                                               scores.begin() + static_cast<std::ptrdiff_t>(count));
            std::vector<std::size_t> sizes(count, 1);
            Mask m = topk_mask(aggregate_saliency(prefix, sizes), config.fl.sigma, *layout,
                               !config.fl.mask_biases);
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6f", mask_error(m, oracle));
            csv += std::to_string(count) + "," + std::to_string(seed) + "," + buf + "\n";
        }
    }
    fs::create_directories(config.out_dir);
    write_atomic(fs::path(config.out_dir) / "mask_study.csv", csv);
    write_atomic(fs::path(config.out_dir) / "config_resolved.txt", resolved_config_text(config));
}

}  // namespace ssfl
