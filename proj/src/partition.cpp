#include "ssfl/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ssfl {

namespace {

std::vector<std::vector<std::size_t>> pool_by_class(const Dataset& data,
                                                    const std::vector<std::size_t>& pool) {
    std::vector<std::vector<std::size_t>> by_class(data.classes);
    for (std::size_t i : pool) {
        if (i >= data.rows()) throw std::invalid_argument("pool index out of range");
        by_class[static_cast<std::size_t>(data.y[i])].push_back(i);
    }
    return by_class;
}

// Integer counts per client for one class: largest-remainder rounding of
// total * share_k, ties to the lower client id.
std::vector<std::size_t> largest_remainder(const std::vector<double>& shares, std::size_t total) {
    const std::size_t k = shares.size();
    std::vector<std::size_t> counts(k, 0);
    std::vector<std::pair<double, std::size_t>> rema;
    rema.reserve(k);
    std::size_t assigned = 0;
    double sum = 0.0;
    for (double s : shares) sum += s;
    if (!(sum > 0.0)) {
        if (total == 0) return counts;
        throw std::invalid_argument("cannot allocate samples with all-zero shares");
    }
    for (std::size_t c = 0; c < k; ++c) {
        double target = static_cast<double>(total) * (shares[c] / sum);
        auto base = static_cast<std::size_t>(std::floor(target));
        counts[c] = base;
        assigned += base;
        rema.emplace_back(target - static_cast<double>(base), c);
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t r = 0; assigned < total; ++r, ++assigned) counts[rema[r].second] += 1;
    return counts;
}

std::vector<ClientShard> deal_by_shares(const Dataset& data, const std::vector<std::size_t>& pool,
                                        const std::vector<std::vector<double>>& class_shares,
                                        Rng& rng) {
    const std::size_t k = class_shares.size();
    auto by_class = pool_by_class(data, pool);
    std::vector<ClientShard> shards(k);
    for (std::size_t c = 0; c < k; ++c) shards[c].client_id = c;

    for (std::size_t cls = 0; cls < by_class.size(); ++cls) {
        std::vector<std::size_t>& rows = by_class[cls];
        if (rows.empty()) continue;
        rng.shuffle(rows);
        std::vector<double> shares(k);
        for (std::size_t c = 0; c < k; ++c) {
            if (class_shares[c].size() != data.classes)
                throw std::invalid_argument("share matrix width does not match class count");
            shares[c] = class_shares[c][cls];
        }
        std::vector<std::size_t> counts = largest_remainder(shares, rows.size());
        std::size_t off = 0;
        for (std::size_t c = 0; c < k; ++c) {
            shards[c].indices.insert(shards[c].indices.end(), rows.begin() + off,
                                     rows.begin() + off + counts[c]);
            off += counts[c];
        }
    }
    return shards;
}

std::vector<double> resolve_prior(const Dataset& data, const PartitionSpec& spec,
                                  const std::vector<std::vector<std::size_t>>& by_class) {
    if (!spec.prior.empty()) {
        if (spec.prior.size() != data.classes)
            throw std::invalid_argument("prior length does not match class count");
        double sum = 0.0;
        for (double p : spec.prior) {
            if (p < 0.0) throw std::invalid_argument("prior entries must be nonnegative");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("prior must sum to 1");
        return spec.prior;
    }
    std::size_t present = 0;
    for (const auto& rows : by_class)
        if (!rows.empty()) ++present;
    std::vector<double> prior(data.classes, 0.0);
    for (std::size_t c = 0; c < data.classes; ++c)
        if (!by_class[c].empty()) prior[c] = 1.0 / static_cast<double>(present);
    return prior;
}

Partition partition_dirichlet(const Dataset& data, const std::vector<std::size_t>& pool,
                              const PartitionSpec& spec) {
    auto by_class = pool_by_class(data, pool);
    std::vector<double> prior = resolve_prior(data, spec, by_class);
    for (std::size_t c = 0; c < data.classes; ++c)
        if (prior[c] > 0.0 && by_class[c].empty())
            throw std::invalid_argument("prior puts mass on a class absent from the pool");
    if (!(spec.alpha > 0.0)) throw std::invalid_argument("alpha must be positive");

    const std::size_t k = spec.clients;
    Rng rng(substream(spec.seed, "partition"));

    // q[k] ~ Dir(alpha * p) over the classes with prior mass.
    std::vector<std::size_t> support;
    std::vector<double> alphas;
    for (std::size_t c = 0; c < data.classes; ++c)
        if (prior[c] > 0.0) {
            support.push_back(c);
            alphas.push_back(spec.alpha * prior[c]);
        }
    // Proportions are carried as log q so that tiny concentrations (where
    // the linear values underflow to zero) still produce usable columns.
    auto draw_log_q = [&](Rng& r) {
        std::vector<double> row(data.classes, -std::numeric_limits<double>::infinity());
        std::vector<double> lq = r.dirichlet_log(alphas);
        for (std::size_t j = 0; j < support.size(); ++j) row[support[j]] = lq[j];
        return row;
    };

    std::vector<std::vector<double>> q(k);
    for (std::size_t c = 0; c < k; ++c) q[c] = draw_log_q(rng);

    auto shares_from_q = [&](const std::vector<std::vector<double>>& log_qm) {
        std::vector<std::vector<double>> shares(k, std::vector<double>(data.classes, 0.0));
        for (std::size_t cls : support) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, log_qm[c][cls]);
            double col = 0.0;
            for (std::size_t c = 0; c < k; ++c) col += std::exp(log_qm[c][cls] - mx);
            for (std::size_t c = 0; c < k; ++c)
                shares[c][cls] = std::exp(log_qm[c][cls] - mx) / col;
        }
        return shares;
    };

    // Redraw the proportion vectors of clients that came out empty (the
    // drawn fractions can starve a client when alpha is tiny); after 100
    // attempts give up and move single samples over from the largest shard.
    std::vector<std::vector<double>> shares = shares_from_q(q);
    Rng deal_rng(substream(spec.seed, "partition", 1));
    std::vector<ClientShard> shards = deal_by_shares(data, pool, shares, deal_rng);
    for (int attempt = 0; attempt < 100; ++attempt) {
        bool any_empty = false;
        for (std::size_t c = 0; c < k; ++c)
            if (shards[c].indices.empty()) {
                q[c] = draw_log_q(rng);
                any_empty = true;
            }
        if (!any_empty) break;
        shares = shares_from_q(q);
        Rng retry_rng(substream(spec.seed, "partition", 2, static_cast<std::uint64_t>(attempt)));
        shards = deal_by_shares(data, pool, shares, retry_rng);
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (!shards[c].indices.empty()) continue;
        auto donor = std::max_element(shards.begin(), shards.end(),
                                      [](const ClientShard& a, const ClientShard& b) {
                                          return a.size() < b.size();
                                      });
        if (donor->size() < 2) throw std::invalid_argument("too few samples to fill every shard");
        std::size_t pick = static_cast<std::size_t>(rng.bounded(donor->size()));
        shards[c].indices.push_back(donor->indices[pick]);
        donor->indices.erase(donor->indices.begin() + static_cast<std::ptrdiff_t>(pick));
    }

    return {std::move(shards), std::move(shares)};
}

Partition partition_pathological(const Dataset& data, const std::vector<std::size_t>& pool,
                                 const PartitionSpec& spec) {
    auto by_class = pool_by_class(data, pool);
    std::vector<std::size_t> present;
    for (std::size_t c = 0; c < data.classes; ++c)
        if (!by_class[c].empty()) present.push_back(c);
    if (spec.classes_per_client < 1) throw std::invalid_argument("classes_per_client must be >= 1");

    const std::size_t k = spec.clients;
    const std::size_t width = std::min(spec.classes_per_client, present.size());
    if (k * width < present.size())
        throw std::invalid_argument("deal cannot cover every class; raise classes_per_client");

    Rng rng(substream(spec.seed, "partition"));
    rng.shuffle(present);

    // Circular deal: client c claims `width` consecutive classes of the
    // shuffled order, so claims wrap evenly around all present classes.
    std::vector<std::vector<std::size_t>> claimants(data.classes);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < width; ++j)
            claimants[present[(c * width + j) % present.size()]].push_back(c);

    std::vector<std::vector<double>> shares(k, std::vector<double>(data.classes, 0.0));
    for (std::size_t cls : present) {
        if (claimants[cls].size() > by_class[cls].size())
            throw std::invalid_argument("class has fewer samples than claiming clients");
        for (std::size_t c : claimants[cls])
            shares[c][cls] += 1.0 / static_cast<double>(claimants[cls].size());
    }

    Rng deal_rng(substream(spec.seed, "partition", 1));
    std::vector<ClientShard> shards = deal_by_shares(data, pool, shares, deal_rng);
    for (const ClientShard& s : shards)
        if (s.indices.empty()) throw std::invalid_argument("deal produced an empty shard");
    return {std::move(shards), std::move(shares)};
}

}  // namespace

Partition make_partition(const Dataset& data, const std::vector<std::size_t>& pool,
                         const PartitionSpec& spec) {
    if (spec.clients < 1) throw std::invalid_argument("need at least one client");
    if (pool.size() < spec.clients)
        throw std::invalid_argument("more clients than pooled samples");
    Partition p = spec.mode == PartitionSpec::Mode::dirichlet
                      ? partition_dirichlet(data, pool, spec)
                      : partition_pathological(data, pool, spec);
    for (ClientShard& s : p.shards) std::sort(s.indices.begin(), s.indices.end());
    return p;
}

std::vector<ClientShard> allocate_by_shares(const Dataset& data,
                                            const std::vector<std::size_t>& pool,
                                            const std::vector<std::vector<double>>& class_shares,
                                            Rng& rng) {
    std::vector<ClientShard> shards = deal_by_shares(data, pool, class_shares, rng);
    for (ClientShard& s : shards) std::sort(s.indices.begin(), s.indices.end());
    return shards;
}

Batch sample_balanced_minibatch(const ClientShard& shard, const Dataset& data, std::size_t B,
                                Rng& rng) {
    if (shard.indices.empty()) throw std::invalid_argument("cannot sample from an empty shard");
    std::vector<std::vector<std::size_t>> local(data.classes);
    for (std::size_t i : shard.indices) local[static_cast<std::size_t>(data.y[i])].push_back(i);
    std::vector<std::size_t> classes;
    for (std::size_t c = 0; c < data.classes; ++c)
        if (!local[c].empty()) classes.push_back(c);
    if (B < classes.size())
        throw std::invalid_argument("batch smaller than the shard's class count");

    // Spread the remainder over randomly chosen classes so no class is
    // systematically favored.
    rng.shuffle(classes);
    const std::size_t base = B / classes.size();
    const std::size_t extra = B % classes.size();

    std::vector<std::size_t> picks;
    picks.reserve(B);
    for (std::size_t j = 0; j < classes.size(); ++j) {
        std::size_t want = base + (j < extra ? 1 : 0);
        std::vector<std::size_t>& rows = local[classes[j]];
        rng.shuffle(rows);
        // Cycling a shuffled order reuses samples only once the class runs out.
        for (std::size_t n = 0; n < want; ++n) picks.push_back(rows[n % rows.size()]);
    }
    return gather(data, picks);
}

EpochSampler::EpochSampler(std::vector<std::size_t> indices, Rng& rng)
    : order_(std::move(indices)), rng_(&rng) {
    if (order_.empty()) throw std::invalid_argument("cannot sample from an empty shard");
    rng_->shuffle(order_);
}

std::vector<std::size_t> EpochSampler::next(std::size_t batch) {
    if (batch == 0) throw std::invalid_argument("batch must be positive");
    std::size_t take = std::min(batch, order_.size() - cursor_);
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
    cursor_ += take;
    if (cursor_ == order_.size()) {
        rng_->shuffle(order_);
        cursor_ = 0;
    }
    return out;
}

}  // namespace ssfl
