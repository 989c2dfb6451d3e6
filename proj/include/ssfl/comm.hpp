#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ssfl {

// How a model payload is encoded on the wire. Values are priced at 4 bytes
// (fp32 convention) regardless of the simulator's internal precision.
enum class Encoding { dense, values_only, coo, bitmask };

inline constexpr std::array<Encoding, 4> kEncodings = {Encoding::dense, Encoding::values_only,
                                                       Encoding::coo, Encoding::bitmask};

std::string encoding_name(Encoding e);

// Bytes to move a model of P parameters with k nonzeros:
//   dense        4P
//   values_only  4k        (mask known to both ends)
//   coo          8k        (4-byte value + 4-byte index per nonzero)
//   bitmask      4k + ceil(P/8)
std::uint64_t payload_bytes(std::uint64_t params, std::uint64_t k, Encoding scheme);

// Same, with k derived from a density s in (0, 1] as round(s * P).
std::uint64_t payload_bytes_density(std::uint64_t params, double density, Encoding scheme);

// One-time discovery costs for K clients and P parameters:
// (dense saliency uploads K*4P, bitmask broadcasts K*ceil(P/8)).
std::pair<std::uint64_t, std::uint64_t> setup_costs(std::uint64_t params, std::uint64_t clients);

enum class Direction { uplink, downlink };
enum class PayloadKind { model, saliency, mask };

// One recorded transmission. Model entries are priced under every encoding;
// saliency is always a dense real vector (4P) and masks always travel as
// bitmasks (ceil(P/8)). round -1 marks pre-training setup traffic.
struct CommEntry {
    int round = 0;
    Direction direction = Direction::uplink;
    int client = 0;
    PayloadKind kind = PayloadKind::model;
    std::uint64_t params = 0;
    std::uint64_t k = 0;  // nonzero count; meaningful for model entries
};

std::uint64_t entry_bytes(const CommEntry& e, Encoding scheme);

struct CommLedger {
    std::vector<CommEntry> entries;

    void record_model(int round, Direction dir, int client, std::uint64_t params, std::uint64_t k);
    void record_saliency(int round, Direction dir, int client, std::uint64_t params);
    void record_mask(int round, Direction dir, int client, std::uint64_t params);
    void append(const CommLedger& other);
};

// Cumulative totals, split into the per-round training traffic (model
// payloads, round >= 0) and one-off discovery traffic (saliency + mask
// payloads at any round, plus anything recorded at round -1).
struct LedgerSummary {
    std::array<std::uint64_t, 4> uplink_model_bytes{};    // indexed like kEncodings
    std::array<std::uint64_t, 4> downlink_model_bytes{};
    std::uint64_t saliency_bytes = 0;
    std::uint64_t mask_bytes = 0;
    std::uint64_t rounds_seen = 0;  // distinct training rounds with traffic

    std::uint64_t model_bytes(Direction dir, Encoding scheme) const;
};

LedgerSummary summarize(const CommLedger& ledger);

// Percent of the dense cost, rounded to 0.1 points (e.g. 53.125 -> 53.1).
double percent_of_dense(std::uint64_t bytes, std::uint64_t dense_bytes);

// CSV export, header: round,direction,client,scheme,bytes. Model entries emit
// one row per encoding; saliency and mask entries emit a single row with
// scheme "saliency" / "mask".
void write_ledger_csv(std::ostream& out, const CommLedger& ledger);

}  // namespace ssfl
