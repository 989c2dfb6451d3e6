#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ssfl/dataset.hpp"
#include "ssfl/rng.hpp"

namespace ssfl {

struct PartitionSpec {
    enum class Mode { dirichlet, pathological };

    Mode mode = Mode::dirichlet;
    double alpha = 0.3;                  // Dirichlet concentration
    std::size_t classes_per_client = 2;  // pathological deal width
    std::size_t clients = 1;
    // Prior class proportions p (length data.classes). Empty means uniform
    // over the classes present in the pool.
    std::vector<double> prior;
    std::uint64_t seed = 0;
};

struct ClientShard {
    std::size_t client_id = 0;
    std::vector<std::size_t> indices;  // rows of the dataset, unique

    std::size_t size() const { return indices.size(); }
};

// Shards plus the per-class allocation fractions that produced them.
// class_shares[k][c] is client k's share of class c; columns over clients sum
// to 1 for every class present in the pool. Reusing the same shares on a
// held-out pool yields per-client test sets with matching class mixture.
struct Partition {
    std::vector<ClientShard> shards;
    std::vector<std::vector<double>> class_shares;
};

// Splits `pool` (row indices into `data`) across spec.clients shards.
// dirichlet: client class-proportions q_k ~ Dir(alpha * p); each class is
//   divided among clients proportionally to the drawn fractions.
// pathological: each client receives exactly min(classes_per_client, present
//   classes) classes from a shuffled circular deal; claimants of a class
//   split its samples evenly.
// Every pool row lands in exactly one shard and every shard is non-empty;
// infeasible requests (more clients than samples, or a deal that cannot give
// every client a sample) throw.
Partition make_partition(const Dataset& data, const std::vector<std::size_t>& pool,
                         const PartitionSpec& spec);

// Distributes `pool` by per-class largest-remainder rounding of the given
// share matrix; used for held-out pools. Shards may be empty if the pool is
// small.
std::vector<ClientShard> allocate_by_shares(const Dataset& data,
                                            const std::vector<std::size_t>& pool,
                                            const std::vector<std::vector<double>>& class_shares,
                                            Rng& rng);

// Minibatch whose per-class counts differ by at most one across the classes
// present in the shard; classes with too few local samples recycle them.
// Requires B >= number of distinct classes in the shard.
Batch sample_balanced_minibatch(const ClientShard& shard, const Dataset& data, std::size_t B,
                                Rng& rng);

// Without-replacement minibatch stream: yields each shard row exactly once
// per epoch in shuffled order (final batch of an epoch may be short), then
// reshuffles.
class EpochSampler {
public:
    EpochSampler(std::vector<std::size_t> indices, Rng& rng);

    std::vector<std::size_t> next(std::size_t batch);

private:
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    Rng* rng_;
};

}  // namespace ssfl
