#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>
#include <string>

#include "ssfl/comm.hpp"

using namespace ssfl;

TEST_CASE("payload byte formulas") {
    CHECK(payload_bytes(100, 50, Encoding::dense) == 400);
    CHECK(payload_bytes(100, 50, Encoding::values_only) == 200);
    CHECK(payload_bytes(100, 50, Encoding::coo) == 400);
    CHECK(payload_bytes(100, 50, Encoding::bitmask) == 200 + 13);

    CHECK(payload_bytes(8, 0, Encoding::values_only) == 0);
    CHECK(payload_bytes(8, 0, Encoding::bitmask) == 1);
    CHECK(payload_bytes(9, 9, Encoding::bitmask) == 36 + 2);

    // a full payload under values_only costs exactly the dense price
    CHECK(payload_bytes(12345, 12345, Encoding::values_only) ==
          payload_bytes(12345, 0, Encoding::dense));

    CHECK_THROWS(payload_bytes(0, 0, Encoding::dense));
    CHECK_THROWS(payload_bytes(10, 11, Encoding::coo));
}

TEST_CASE("per-round cost table at densities 0.5 and 0.05") {
    const std::uint64_t P = 1'000'000;
    const std::uint64_t dense = payload_bytes_density(P, 1.0, Encoding::dense);
    CHECK(dense == 4 * P);

    CHECK(percent_of_dense(payload_bytes_density(P, 0.5, Encoding::values_only), dense) == 50.0);
    CHECK(percent_of_dense(payload_bytes_density(P, 0.5, Encoding::bitmask), dense) == 53.1);
    CHECK(percent_of_dense(payload_bytes_density(P, 0.5, Encoding::coo), dense) == 100.0);

    CHECK(percent_of_dense(payload_bytes_density(P, 0.05, Encoding::values_only), dense) == 5.0);
    CHECK(percent_of_dense(payload_bytes_density(P, 0.05, Encoding::bitmask), dense) == 8.1);
    CHECK(percent_of_dense(payload_bytes_density(P, 0.05, Encoding::coo), dense) == 10.0);
}

TEST_CASE("scheme inequalities") {
    for (std::uint64_t P : {64ULL, 1000ULL, 999983ULL}) {
        for (std::uint64_t k = 0; k <= P; k += std::max<std::uint64_t>(1, P / 13)) {
            auto vo = payload_bytes(P, k, Encoding::values_only);
            auto coo = payload_bytes(P, k, Encoding::coo);
            auto bm = payload_bytes(P, k, Encoding::bitmask);
            CHECK(vo <= coo);
            CHECK(vo <= bm);
            // the bitmask beats coordinate lists exactly when the index maps
            // cost more than the bit table
            if ((P + 7) / 8 < 4 * k) {
                CHECK(bm < coo);
            } else {
                CHECK(bm >= coo);
            }
        }
    }
}

TEST_CASE("one-time discovery costs") {
    auto [saliency, mask] = setup_costs(8, 1);
    CHECK(saliency == 32);
    CHECK(mask == 1);

    auto zero = setup_costs(123, 0);
    CHECK(zero.first == 0);
    CHECK(zero.second == 0);

    auto big = setup_costs(1'730'000, 100);
    CHECK(big.first == 692'000'000ULL);
    CHECK(big.second == 100ULL * 216'250ULL);

    CHECK_THROWS(setup_costs(0, 4));
}

TEST_CASE("entry pricing by payload kind") {
    CommEntry model{3, Direction::uplink, 0, PayloadKind::model, 100, 25};
    CHECK(entry_bytes(model, Encoding::values_only) == 100);
    CHECK(entry_bytes(model, Encoding::dense) == 400);

    CommEntry saliency{-1, Direction::uplink, 0, PayloadKind::saliency, 100, 100};
    for (Encoding enc : kEncodings) CHECK(entry_bytes(saliency, enc) == 400);

    CommEntry mask{-1, Direction::downlink, 0, PayloadKind::mask, 100, 100};
    for (Encoding enc : kEncodings) CHECK(entry_bytes(mask, enc) == 13);
}

TEST_CASE("ledger summary buckets model and discovery traffic") {
    CommLedger ledger;
    CHECK(summarize(ledger).rounds_seen == 0);
    CHECK(summarize(ledger).model_bytes(Direction::uplink, Encoding::dense) == 0);

    ledger.record_saliency(-1, Direction::uplink, 0, 100);
    ledger.record_saliency(-1, Direction::uplink, 1, 100);
    ledger.record_mask(-1, Direction::downlink, 0, 100);
    ledger.record_model(1, Direction::uplink, 0, 100, 50);
    ledger.record_model(1, Direction::uplink, 1, 100, 50);
    ledger.record_model(1, Direction::downlink, 0, 100, 50);
    ledger.record_model(2, Direction::uplink, 0, 100, 25);

    LedgerSummary s = summarize(ledger);
    CHECK(s.saliency_bytes == 800);
    CHECK(s.mask_bytes == 13);
    CHECK(s.rounds_seen == 2);
    CHECK(s.model_bytes(Direction::uplink, Encoding::values_only) == 200 + 200 + 100);
    CHECK(s.model_bytes(Direction::uplink, Encoding::dense) == 3 * 400);
    CHECK(s.model_bytes(Direction::downlink, Encoding::values_only) == 200);
    CHECK(s.model_bytes(Direction::downlink, Encoding::coo) == 400);

    // appending a copy doubles every bucket
    CommLedger twice;
    twice.append(ledger);
    twice.append(ledger);
    LedgerSummary d = summarize(twice);
    CHECK(d.saliency_bytes == 2 * s.saliency_bytes);
    CHECK(d.model_bytes(Direction::uplink, Encoding::bitmask) ==
          2 * s.model_bytes(Direction::uplink, Encoding::bitmask));
    CHECK(d.rounds_seen == 2);  // same two rounds, just more traffic
}

TEST_CASE("percentage rounding is to one decimal place") {
    CHECK(percent_of_dense(53'125, 100'000) == 53.1);
    CHECK(percent_of_dense(8'125, 100'000) == 8.1);
    CHECK(percent_of_dense(50'000, 100'000) == 50.0);
    CHECK(percent_of_dense(100'000, 100'000) == 100.0);
    CHECK(percent_of_dense(54'999, 100'000) == 55.0);
    CHECK_THROWS(percent_of_dense(1, 0));
}

TEST_CASE("ledger csv layout") {
    CommLedger ledger;
    ledger.record_saliency(-1, Direction::uplink, 2, 16);
    ledger.record_mask(-1, Direction::downlink, 2, 16);
    ledger.record_model(0, Direction::uplink, 2, 16, 4);

    std::ostringstream out;
    write_ledger_csv(out, ledger);
    const std::string expect =
        "round,direction,client,scheme,bytes\n"
        "-1,uplink,2,saliency,64\n"
        "-1,downlink,2,mask,2\n"
        "0,uplink,2,dense,64\n"
        "0,uplink,2,values_only,16\n"
        "0,uplink,2,coo,32\n"
        "0,uplink,2,bitmask,18\n";
    CHECK(out.str() == expect);
}
