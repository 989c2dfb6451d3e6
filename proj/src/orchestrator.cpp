#include "ssfl/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>

namespace ssfl {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::dense: return "dense";
        case Variant::ssfl: return "ssfl";
        case Variant::random_global: return "random_global";
        case Variant::random_local: return "random_local";
        case Variant::shuffled: return "shuffled";
        case Variant::topk_weights: return "topk_weights";
        case Variant::warmup: return "warmup";
    }
    throw std::logic_error("unknown variant");
}

Variant parse_variant(const std::string& name) {
    for (Variant v : {Variant::dense, Variant::ssfl, Variant::random_global,
                      Variant::random_local, Variant::shuffled, Variant::topk_weights,
                      Variant::warmup})
        if (variant_name(v) == name) return v;
    throw std::invalid_argument("unknown variant '" + name + "'");
}

namespace {

bool uses_global_mask(Variant v) {
    return v == Variant::ssfl || v == Variant::random_global || v == Variant::shuffled ||
           v == Variant::warmup;
}

std::size_t selected_count(double fraction, std::size_t clients) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("client_fraction must be in (0, 1]");
    auto m = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(clients) - 1e-9));
    return std::clamp<std::size_t>(m, 1, clients);
}

std::size_t local_steps(double epochs, std::size_t n, std::size_t batch) {
    double t = std::ceil(epochs * static_cast<double>(n) / static_cast<double>(batch));
    return std::max<std::size_t>(1, static_cast<std::size_t>(t));
}

// Linear-interpolation quantile of unsorted values, q in [0, 1].
double quantile(std::vector<double> v, double q) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    double h = q * static_cast<double>(v.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(h));
    auto hi = static_cast<std::size_t>(std::ceil(h));
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Indices of the n largest |values|, ties to the lower index.
std::vector<std::size_t> top_magnitude(const std::vector<double>& values, std::size_t n) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto rank = [&values](std::size_t a, std::size_t b) {
        double ma = std::abs(values[a]), mb = std::abs(values[b]);
        if (ma != mb) return ma > mb;
        return a < b;
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n - 1), idx.end(),
                     rank);
    idx.resize(n);
    return idx;
}

struct EvalContext {
    Batch full_test;
    Batch seen_test;     // rows == 0 when unused
    Batch holdout_test;  // rows == 0 when unused
    std::vector<ClientShard> client_test;
};

void evaluate_round(const ParamVector& effective, const Dataset& test, const EvalContext& ctx,
                    RoundMetrics& row) {
    row.global_acc = accuracy(effective, ctx.full_test);
    std::vector<double> local;
    local.reserve(ctx.client_test.size());
    for (const ClientShard& s : ctx.client_test) {
        if (s.indices.empty()) continue;  // tiny test pools can starve a client
        local.push_back(accuracy(effective, gather(test, s.indices)));
    }
    if (local.empty()) {
        row.mean_local_acc = std::numeric_limits<double>::quiet_NaN();
        row.p10_local_acc = row.p50_local_acc = row.p90_local_acc = row.mean_local_acc;
    } else {
        row.mean_local_acc =
            std::accumulate(local.begin(), local.end(), 0.0) / static_cast<double>(local.size());
        row.p10_local_acc = quantile(local, 0.10);
        row.p50_local_acc = quantile(local, 0.50);
        row.p90_local_acc = quantile(local, 0.90);
    }
    if (ctx.seen_test.rows > 0) row.seen_acc = accuracy(effective, ctx.seen_test);
    if (ctx.holdout_test.rows > 0) row.holdout_acc = accuracy(effective, ctx.holdout_test);
}

void validate(const FLConfig& cfg, const Dataset& train, const Dataset& test) {
    if (cfg.clients < 1) throw std::invalid_argument("need at least one client");
    if (cfg.batch < 1) throw std::invalid_argument("batch must be >= 1");
    if (!(cfg.local_epochs > 0.0)) throw std::invalid_argument("local_epochs must be positive");
    if (!(cfg.lr0 > 0.0)) throw std::invalid_argument("lr0 must be positive");
    if (!(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0))
        throw std::invalid_argument("lr_decay must be in (0, 1]");
    if (cfg.weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
    selected_count(cfg.client_fraction, cfg.clients);  // validates the fraction
    if (cfg.variant != Variant::dense && !(cfg.sigma > 0.0 && cfg.sigma < 1.0))
        throw std::invalid_argument("sigma must be in (0, 1) for sparse variants");
    if (train.features != test.features || train.classes != test.classes)
        throw std::invalid_argument("train and test datasets disagree on shape");
    if (cfg.ood.enabled) {
        if (cfg.ood.holdout_classes.empty())
            throw std::invalid_argument("ood.holdout_classes must be non-empty");
        for (int c : cfg.ood.holdout_classes)
            if (c < 0 || static_cast<std::size_t>(c) >= train.classes)
                throw std::invalid_argument("ood.holdout_classes entry out of range");
        if (cfg.ood.holdout_classes.size() >= train.classes)
            throw std::invalid_argument("ood.holdout_classes must leave classes to train on");
        if (cfg.ood.new_clients < 1)
            throw std::invalid_argument("ood.new_clients must be >= 1 when ood is enabled");
        if (cfg.ood.refresh_round < 1 || cfg.ood.refresh_round > cfg.rounds)
            throw std::invalid_argument("ood.refresh_round must be within [1, rounds]");
    }
}

}  // namespace

Mask discover_mask(const ParamVector& params, const std::vector<ClientShard>& clients,
                   const Dataset& train, double sigma, std::size_t batch, bool exempt_biases,
                   std::uint64_t seed, std::string_view stream, int ledger_round,
                   CommLedger& ledger) {
    if (clients.empty()) throw std::invalid_argument("mask discovery needs at least one client");
    const auto params_count = static_cast<std::uint64_t>(params.size());
    std::vector<SaliencyVector> scores(clients.size());
    std::vector<std::size_t> sizes(clients.size());
    const auto n_clients = static_cast<std::int64_t>(clients.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n_clients; ++i) {
        const ClientShard& shard = clients[static_cast<std::size_t>(i)];
        Rng rng(substream(seed, stream, static_cast<std::uint64_t>(shard.client_id)));
        Batch b = sample_balanced_minibatch(shard, train, batch, rng);
        scores[static_cast<std::size_t>(i)] = local_saliency(params, b);
        sizes[static_cast<std::size_t>(i)] = shard.size();
    }
    for (const ClientShard& shard : clients)
        ledger.record_saliency(ledger_round, Direction::uplink,
                               static_cast<int>(shard.client_id), params_count);
    Mask m = topk_mask(aggregate_saliency(scores, sizes), sigma, *params.layout, exempt_biases);
    for (const ClientShard& shard : clients)
        ledger.record_mask(ledger_round, Direction::downlink, static_cast<int>(shard.client_id),
                           params_count);
    return m;
}

Mask ood_adapt(const ParamVector& stored, const std::vector<ClientShard>& all_clients,
               const Dataset& train, double sigma, std::size_t batch, bool exempt_biases,
               std::uint64_t seed, int round, CommLedger& ledger) {
    return discover_mask(stored, all_clients, train, sigma, batch, exempt_biases, seed,
                         "saliency-refresh", round, ledger);
}

ParamVector local_train(const ParamVector& w_start, const Mask* mask, const ClientShard& shard,
                        const Dataset& train, std::size_t steps, double lr, double weight_decay,
                        std::size_t batch, Rng& sampler_rng) {
    EpochSampler sampler(shard.indices, sampler_rng);
    ParamVector w = w_start;
    for (std::size_t t = 0; t < steps; ++t) {
        Batch b = gather(train, sampler.next(batch));
        if (mask) {
            ParamVector g = gradient(w, *mask, b);
            w = sgd_step(w, g, lr, weight_decay, *mask);
        } else {
            ParamVector g = gradient(w, b);
            w = sgd_step(w, g, lr, weight_decay);
        }
    }
    return w;
}

ParamVector aggregate(const std::vector<ParamVector>& models,
                      const std::vector<std::size_t>& sizes) {
    if (models.empty()) throw std::invalid_argument("nothing to aggregate");
    if (models.size() != sizes.size())
        throw std::invalid_argument("models and sizes differ in length");
    std::size_t total = 0;
    for (std::size_t n : sizes) {
        if (n == 0) throw std::invalid_argument("client data size must be >= 1");
        total += n;
    }
    const std::size_t d = models.front().size();
    ParamVector out = models.front();
    for (std::size_t c = 1; c < models.size(); ++c) {
        if (models[c].size() != d) throw std::invalid_argument("model size mismatch");
        double p = static_cast<double>(sizes[c]) / static_cast<double>(total);
        for (std::size_t j = 0; j < d; ++j)
            out.values[j] += p * (models[c].values[j] - models.front().values[j]);
    }
    return out;
}

RunResult run(const FLConfig& config, const Dataset& train, const Dataset& test) {
    validate(config, train, test);

    auto layout = std::make_shared<const LayerLayout>(
        LayerLayout::mlp(train.features, config.hidden, train.classes));
    const auto d = static_cast<std::uint64_t>(layout->total_params());

    Rng init_rng(substream(config.seed, "init"));
    ParamVector stored = init_params(layout, init_rng);

    // Split the sample pools when holdout classes are scheduled to arrive.
    std::vector<std::size_t> train_pool(train.rows());
    std::iota(train_pool.begin(), train_pool.end(), std::size_t{0});
    std::vector<std::size_t> test_pool(test.rows());
    std::iota(test_pool.begin(), test_pool.end(), std::size_t{0});
    std::vector<std::size_t> ood_train_pool, ood_test_pool;
    if (config.ood.enabled) {
        const std::vector<int>& held = config.ood.holdout_classes;
        auto is_held = [&held](int label) {
            return std::find(held.begin(), held.end(), label) != held.end();
        };
        std::vector<std::size_t> seen_train, seen_test;
        for (std::size_t i : train_pool)
            (is_held(train.y[i]) ? ood_train_pool : seen_train).push_back(i);
        for (std::size_t i : test_pool)
            (is_held(test.y[i]) ? ood_test_pool : seen_test).push_back(i);
        if (ood_train_pool.empty())
            throw std::invalid_argument("holdout classes have no training samples");
        train_pool = std::move(seen_train);
        test_pool = std::move(seen_test);
    }

    PartitionSpec pspec = config.partition;
    pspec.clients = config.clients;
    pspec.seed = substream(config.seed, "partition");
    Partition part = make_partition(train, train_pool, pspec);
    std::vector<ClientShard> shards = std::move(part.shards);

    EvalContext eval;
    {
        std::vector<std::size_t> all(test.rows());
        std::iota(all.begin(), all.end(), std::size_t{0});
        eval.full_test = gather(test, all);
        if (config.ood.enabled) {
            eval.seen_test = gather(test, test_pool);
            eval.holdout_test = gather(test, ood_test_pool);
        }
        Rng deal_rng(substream(config.seed, "test-deal"));
        eval.client_test = allocate_by_shares(test, test_pool, part.class_shares, deal_rng);
    }

    CommLedger ledger;
    std::optional<Mask> global_mask;
    std::vector<Mask> client_masks;  // random_local only
    std::size_t topk_count = 0;      // topk_weights only
    switch (config.variant) {
        case Variant::dense:
            break;
        case Variant::warmup:
            if (config.warmup_rounds == 0)  // degenerate warmup = immediate discovery
                global_mask = discover_mask(stored, shards, train, config.sigma, config.batch,
                                            !config.mask_biases, config.seed, "saliency", -1,
                                            ledger);
            break;
        case Variant::topk_weights:
            topk_count = active_count_for(config.sigma, d);
            break;
        case Variant::ssfl:
            global_mask = discover_mask(stored, shards, train, config.sigma, config.batch,
                                        !config.mask_biases, config.seed, "saliency", -1, ledger);
            break;
        case Variant::shuffled: {
            Mask base = discover_mask(stored, shards, train, config.sigma, config.batch,
                                      !config.mask_biases, config.seed, "saliency", -1, ledger);
            Rng rng(substream(config.seed, "masks"));
            global_mask = shuffle_within_layers(base, *layout, rng);
            break;
        }
        case Variant::random_global: {
            Rng rng(substream(config.seed, "masks"));
            global_mask = random_mask(*layout, config.sigma, !config.mask_biases, rng);
            for (const ClientShard& s : shards)
                ledger.record_mask(-1, Direction::downlink, static_cast<int>(s.client_id), d);
            break;
        }
        case Variant::random_local: {
            client_masks.resize(config.clients);
            for (std::size_t c = 0; c < config.clients; ++c) {
                Rng rng(substream(config.seed, "masks", c));
                client_masks[c] = random_mask(*layout, config.sigma, !config.mask_biases, rng);
                ledger.record_mask(-1, Direction::downlink, static_cast<int>(c), d);
            }
            break;
        }
    }

    RunResult result;
    result.layout = layout;
    result.rounds.reserve(config.rounds + 1);

    auto effective_model = [&]() {
        return global_mask ? apply_mask(stored, *global_mask) : stored;
    };
    {
        RoundMetrics row;
        row.round = 0;
        row.lr = config.lr0;
        evaluate_round(effective_model(), test, eval, row);
        result.rounds.push_back(row);
    }

    for (std::size_t r = 1; r <= config.rounds; ++r) {
        const double lr = lr_at_round(config.lr0, config.lr_decay, r - 1);
        const bool warmup_phase =
            config.variant == Variant::warmup && (!global_mask || r <= config.warmup_rounds);

        Rng select_rng(substream(config.seed, "selection", r));
        std::vector<std::size_t> picked =
            select_rng.sample_without_replacement(shards.size(),
                                                  selected_count(config.client_fraction,
                                                                 shards.size()));
        std::sort(picked.begin(), picked.end());

        std::vector<ParamVector> locals(picked.size());
        std::vector<std::size_t> sizes(picked.size());
        const auto n_picked = static_cast<std::int64_t>(picked.size());
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t i = 0; i < n_picked; ++i) {
            const ClientShard& shard = shards[picked[static_cast<std::size_t>(i)]];
            const Mask* mask = nullptr;
            if (global_mask && !warmup_phase)
                mask = &*global_mask;
            else if (config.variant == Variant::random_local)
                mask = &client_masks[shard.client_id];
            ParamVector start = mask ? apply_mask(stored, *mask) : stored;
            Rng sampler(substream(config.seed, "sampling", shard.client_id, r));
            std::size_t steps = local_steps(config.local_epochs, shard.size(), config.batch);
            locals[static_cast<std::size_t>(i)] =
                local_train(start, mask, shard, train, steps, lr, config.weight_decay,
                            config.batch, sampler);
            sizes[static_cast<std::size_t>(i)] = shard.size();
        }

        // Wire accounting. k is what each transfer actually carries.
        for (std::size_t i = 0; i < picked.size(); ++i) {
            const ClientShard& shard = shards[picked[i]];
            std::uint64_t k_down = d, k_up = d;
            if (global_mask && !warmup_phase) {
                k_down = k_up = global_mask->active_count();
            } else if (config.variant == Variant::random_local) {
                k_down = k_up = client_masks[shard.client_id].active_count();
            } else if (config.variant == Variant::topk_weights) {
                k_up = topk_count;
            }
            ledger.record_model(static_cast<int>(r), Direction::downlink,
                                static_cast<int>(shard.client_id), d, k_down);
            ledger.record_model(static_cast<int>(r), Direction::uplink,
                                static_cast<int>(shard.client_id), d, k_up);
        }

        if (config.variant == Variant::topk_weights) {
            // Per-coordinate weighted mean over the clients that sent the
            // coordinate; unsent coordinates keep the previous global value.
            std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
            std::vector<double> num(stored.size(), 0.0), den(stored.size(), 0.0);
            for (std::size_t i = 0; i < picked.size(); ++i) {
                double p = static_cast<double>(sizes[i]) / static_cast<double>(total);
                for (std::size_t j : top_magnitude(locals[i].values, topk_count)) {
                    num[j] += p * locals[i].values[j];
                    den[j] += p;
                }
            }
            for (std::size_t j = 0; j < stored.size(); ++j)
                if (den[j] > 0.0) stored.values[j] = num[j] / den[j];
        } else {
            ParamVector agg = aggregate(locals, sizes);
            if (global_mask && !warmup_phase) {
                // Masked coordinates stay frozen in the stored vector.
                for (std::size_t j = 0; j < stored.size(); ++j)
                    if (global_mask->keep[j]) stored.values[j] = agg.values[j];
            } else {
                stored = std::move(agg);
            }
        }

        RoundMetrics row;
        row.round = r;
        row.lr = lr;
        for (const CommEntry& e : ledger.entries) {
            if (e.round != static_cast<int>(r) || e.kind != PayloadKind::model) continue;
            auto& arr = e.direction == Direction::uplink ? row.uplink_bytes : row.downlink_bytes;
            for (Encoding enc : kEncodings)
                arr[static_cast<std::size_t>(enc)] += entry_bytes(e, enc);
        }
        evaluate_round(effective_model(), test, eval, row);
        result.rounds.push_back(row);

        // End-of-warmup discovery: build the mask from the trained weights.
        if (config.variant == Variant::warmup && !global_mask && r == config.warmup_rounds) {
            global_mask = discover_mask(stored, shards, train, config.sigma, config.batch,
                                        !config.mask_biases, config.seed, "saliency",
                                        static_cast<int>(r), ledger);
        }

        // Distribution shift: admit the holdout-class clients and refresh.
        if (config.ood.enabled && r == config.ood.refresh_round) {
            PartitionSpec ospec = config.partition;
            ospec.clients = config.ood.new_clients;
            ospec.seed = substream(config.seed, "partition-ood");
            Partition opart = make_partition(train, ood_train_pool, ospec);
            const std::size_t base_id = shards.size();
            for (ClientShard& s : opart.shards) {
                s.client_id += base_id;
                shards.push_back(std::move(s));
            }
            Rng deal_rng(substream(config.seed, "test-deal-ood"));
            for (ClientShard& s :
                 allocate_by_shares(test, ood_test_pool, opart.class_shares, deal_rng))
                eval.client_test.push_back(std::move(s));
            if (config.variant == Variant::random_local) {
                for (std::size_t c = config.clients; c < shards.size(); ++c) {
                    Rng rng(substream(config.seed, "masks", c));
                    client_masks.push_back(random_mask(*layout, config.sigma,
                                                       !config.mask_biases, rng));
                    ledger.record_mask(static_cast<int>(r), Direction::downlink,
                                       static_cast<int>(c), d);
                }
            }
            if (global_mask) {
                global_mask = ood_adapt(stored, shards, train, config.sigma, config.batch,
                                        !config.mask_biases, config.seed, static_cast<int>(r),
                                        ledger);
            }
        }
    }

    result.masked = global_mask.has_value();
    if (global_mask) result.final_mask = *global_mask;
    result.stored = std::move(stored);
    result.ledger = std::move(ledger);
    return result;
}

}  // namespace ssfl
