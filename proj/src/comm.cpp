#include "ssfl/comm.hpp"

#include <cmath>
#include <ostream>
#include <set>
#include <stdexcept>

namespace ssfl {

std::string encoding_name(Encoding e) {
    switch (e) {
        case Encoding::dense: return "dense";
        case Encoding::values_only: return "values_only";
        case Encoding::coo: return "coo";
        case Encoding::bitmask: return "bitmask";
    }
    throw std::logic_error("unknown encoding");
}

std::uint64_t payload_bytes(std::uint64_t params, std::uint64_t k, Encoding scheme) {
    if (params == 0) throw std::invalid_argument("payload needs at least one parameter");
    if (k > params) throw std::invalid_argument("nonzero count exceeds parameter count");
    switch (scheme) {
        case Encoding::dense: return 4 * params;
        case Encoding::values_only: return 4 * k;
        case Encoding::coo: return 8 * k;
        case Encoding::bitmask: return 4 * k + (params + 7) / 8;
    }
    throw std::logic_error("unknown encoding");
}

std::uint64_t payload_bytes_density(std::uint64_t params, double density, Encoding scheme) {
    if (!(density > 0.0 && density <= 1.0)) throw std::invalid_argument("density must be in (0,1]");
    auto k = static_cast<std::uint64_t>(
        std::llround(density * static_cast<double>(params)));
    return payload_bytes(params, k, scheme);
}

std::pair<std::uint64_t, std::uint64_t> setup_costs(std::uint64_t params, std::uint64_t clients) {
    if (params == 0) throw std::invalid_argument("setup needs at least one parameter");
    return {clients * 4 * params, clients * ((params + 7) / 8)};
}

std::uint64_t entry_bytes(const CommEntry& e, Encoding scheme) {
    switch (e.kind) {
        case PayloadKind::model: return payload_bytes(e.params, e.k, scheme);
        case PayloadKind::saliency: return 4 * e.params;  // dense real vector
        case PayloadKind::mask: return (e.params + 7) / 8;
    }
    throw std::logic_error("unknown payload kind");
}

void CommLedger::record_model(int round, Direction dir, int client, std::uint64_t params,
                              std::uint64_t k) {
    if (k > params) throw std::invalid_argument("nonzero count exceeds parameter count");
    entries.push_back({round, dir, client, PayloadKind::model, params, k});
}

void CommLedger::record_saliency(int round, Direction dir, int client, std::uint64_t params) {
    entries.push_back({round, dir, client, PayloadKind::saliency, params, params});
}

void CommLedger::record_mask(int round, Direction dir, int client, std::uint64_t params) {
    entries.push_back({round, dir, client, PayloadKind::mask, params, params});
}

void CommLedger::append(const CommLedger& other) {
    entries.insert(entries.end(), other.entries.begin(), other.entries.end());
}

std::uint64_t LedgerSummary::model_bytes(Direction dir, Encoding scheme) const {
    const auto& arr = dir == Direction::uplink ? uplink_model_bytes : downlink_model_bytes;
    return arr[static_cast<std::size_t>(scheme)];
}

LedgerSummary summarize(const CommLedger& ledger) {
    LedgerSummary s;
    std::set<int> rounds;
    for (const CommEntry& e : ledger.entries) {
        if (e.kind == PayloadKind::saliency) {
            s.saliency_bytes += entry_bytes(e, Encoding::dense);
            continue;
        }
        if (e.kind == PayloadKind::mask) {
            s.mask_bytes += entry_bytes(e, Encoding::bitmask);
            continue;
        }
        if (e.round < 0) continue;  // setup-phase model traffic would be a bug
        rounds.insert(e.round);
        auto& arr = e.direction == Direction::uplink ? s.uplink_model_bytes
                                                     : s.downlink_model_bytes;
        for (Encoding enc : kEncodings)
            arr[static_cast<std::size_t>(enc)] += entry_bytes(e, enc);
    }
    s.rounds_seen = rounds.size();
    return s;
}

double percent_of_dense(std::uint64_t bytes, std::uint64_t dense_bytes) {
    if (dense_bytes == 0) throw std::invalid_argument("dense byte count is zero");
    double pct = 100.0 * static_cast<double>(bytes) / static_cast<double>(dense_bytes);
    return std::round(pct * 10.0) / 10.0;
}

void write_ledger_csv(std::ostream& out, const CommLedger& ledger) {
    out << "round,direction,client,scheme,bytes\n";
    for (const CommEntry& e : ledger.entries) {
        const char* dir = e.direction == Direction::uplink ? "uplink" : "downlink";
        if (e.kind == PayloadKind::model) {
            for (Encoding enc : kEncodings)
                out << e.round << "," << dir << "," << e.client << "," << encoding_name(enc)
                    << "," << entry_bytes(e, enc) << "\n";
        } else {
            const char* scheme = e.kind == PayloadKind::saliency ? "saliency" : "mask";
            out << e.round << "," << dir << "," << e.client << "," << scheme << ","
                << entry_bytes(e, e.kind == PayloadKind::saliency ? Encoding::dense
                                                                  : Encoding::bitmask)
                << "\n";
        }
    }
}

}  // namespace ssfl
