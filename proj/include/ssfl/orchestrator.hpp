#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ssfl/comm.hpp"
#include "ssfl/dataset.hpp"
#include "ssfl/mask.hpp"
#include "ssfl/nn.hpp"
#include "ssfl/partition.hpp"
#include "ssfl/saliency.hpp"

namespace ssfl {

// Training schemes: the saliency-mask method, a dense baseline, and the
// ablations it is compared against.
//   dense          no mask, plain federated averaging
//   ssfl           one-shot saliency mask shared by all clients
//   random_global  one random mask shared by all clients
//   random_local   an independent random mask per client
//   shuffled       the ssfl mask with bits permuted within each layer
//   topk_weights   dense local training; clients upload only their largest-
//                  magnitude weights, averaged per coordinate over senders
//   warmup         dense rounds first, then saliency discovery on the
//                  current weights and sparse training thereafter
enum class Variant { dense, ssfl, random_global, random_local, shuffled, topk_weights, warmup };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

// Optional distribution shift: train on the non-holdout classes, then at the
// end of `refresh_round` admit `new_clients` holding the holdout classes and
// refresh the mask from saliency on the full stored vector.
struct OodSchedule {
    bool enabled = false;
    std::vector<int> holdout_classes;
    std::size_t refresh_round = 0;
    std::size_t new_clients = 0;
};

struct FLConfig {
    std::size_t clients = 16;
    std::size_t rounds = 50;
    double client_fraction = 1.0;
    double sigma = 0.5;
    std::size_t batch = 16;
    double local_epochs = 5.0;  // local steps per round T = ceil(epochs * n_k / batch)
    double lr0 = 0.1;
    double lr_decay = 0.998;
    double weight_decay = 0.0005;
    std::vector<std::size_t> hidden = {64, 32};
    Variant variant = Variant::ssfl;
    std::size_t warmup_rounds = 10;  // used by Variant::warmup
    bool mask_biases = true;         // false exempts biases from masking
    PartitionSpec partition;         // clients/seed fields are overwritten from this config
    OodSchedule ood;
    std::uint64_t seed = 1;
};

struct RoundMetrics {
    std::size_t round = 0;  // 0 is the untrained (post-discovery) model
    double lr = 0.0;
    double global_acc = 0.0;
    double mean_local_acc = 0.0;
    double p10_local_acc = 0.0;
    double p50_local_acc = 0.0;
    double p90_local_acc = 0.0;
    // Only meaningful when the OOD schedule is on; NaN otherwise.
    double seen_acc = std::numeric_limits<double>::quiet_NaN();
    double holdout_acc = std::numeric_limits<double>::quiet_NaN();
    // Model traffic this round, per encoding (indexed like kEncodings).
    std::array<std::uint64_t, 4> uplink_bytes{};
    std::array<std::uint64_t, 4> downlink_bytes{};
};

struct RunResult {
    std::vector<RoundMetrics> rounds;  // rounds + 1 entries
    CommLedger ledger;
    std::shared_ptr<const LayerLayout> layout;
    bool masked = false;  // whether a shared global mask was in force at the end
    Mask final_mask;      // meaningful when masked
    ParamVector stored;   // final stored parameter vector (full, unmasked)
};

// Per-client saliency on one class-balanced minibatch, size-weighted
// aggregation, top-k mask. Records one dense saliency upload and one mask
// broadcast per client at `ledger_round` (-1 = pre-training setup).
Mask discover_mask(const ParamVector& params, const std::vector<ClientShard>& clients,
                   const Dataset& train, double sigma, std::size_t batch, bool exempt_biases,
                   std::uint64_t seed, std::string_view stream, int ledger_round,
                   CommLedger& ledger);

// Mask refresh after a distribution shift: identical mechanics, but saliency
// is taken on the full stored vector with the old mask suspended.
Mask ood_adapt(const ParamVector& stored, const std::vector<ClientShard>& all_clients,
               const Dataset& train, double sigma, std::size_t batch, bool exempt_biases,
               std::uint64_t seed, int round, CommLedger& ledger);

// T minibatch SGD steps from w_start on the client's shard; with a mask, the
// gradient and update touch only active coordinates.
ParamVector local_train(const ParamVector& w_start, const Mask* mask, const ClientShard& shard,
                        const Dataset& train, std::size_t steps, double lr, double weight_decay,
                        std::size_t batch, Rng& sampler_rng);

// Size-weighted federated average, anchored on the first model so that
// averaging identical inputs returns them bit for bit.
ParamVector aggregate(const std::vector<ParamVector>& models,
                      const std::vector<std::size_t>& sizes);

RunResult run(const FLConfig& config, const Dataset& train, const Dataset& test);

}  // namespace ssfl
