#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedfog/errors.hpp"
#include "fedfog/metrics.hpp"
#include "fedfog/rng.hpp"
#include "fedfog/runner.hpp"

using namespace fedfog;

namespace {

TransferEvent make_event(const std::string& strategy, int round, EventKind kind, int src, int dst,
                         std::uint64_t bytes, double latency, double energy) {
    TransferEvent e;
    e.strategy = strategy;
    e.round = round;
    e.kind = kind;
    e.src = src;
    e.dst = dst;
    e.bytes = bytes;
    e.latency_s = latency;
    e.energy_j = energy;
    return e;
}

// Builds a ledger of random events plus ground-truth accumulators computed a
// second time, by hand, as the events are generated.
struct RandomLedger {
    TransferLedger ledger;
    double critical_latency = 0.0;
    double energy = 0.0;
    std::uint64_t bytes = 0;
};

RandomLedger build_random_ledger(int n_events, std::uint64_t seed) {
    Rng rng(seed);
    RandomLedger out;
    const char* strategies[] = {"star", "hier", "hier-d2d"};
    for (int i = 0; i < n_events; ++i) {
        auto e = make_event(strategies[rng.index(3)], static_cast<int>(rng.index(20)),
                            static_cast<EventKind>(rng.index(5)), static_cast<int>(rng.index(50)),
                            static_cast<int>(rng.index(50)), rng.next_u64() % 10'000'000,
                            rng.uniform(0.0, 2.0), rng.uniform(0.0, 5.0));
        out.energy += e.energy_j;
        out.bytes += e.bytes;
        auto idx = out.ledger.record_transfer(e);
        if (rng.uniform() < 0.4) {
            out.ledger.mark_critical(idx);
            out.critical_latency += e.latency_s;
        }
    }
    return out;
}

AccuracyTable full_accuracy_table(const TransferLedger& ledger, double value) {
    AccuracyTable table;
    for (const auto& e : ledger.events()) table[{e.strategy, e.round}] = value;
    return table;
}

} // namespace

TEST_CASE("totals re-sum a thousand random events exactly") {
    auto r = build_random_ledger(1000, 404);
    auto t = totals(r.ledger);
    CHECK(t.events == 1000);
    CHECK(t.bytes == r.bytes);
    CHECK(t.energy_j == doctest::Approx(r.energy).epsilon(1e-12));
    CHECK(t.critical_latency_s == doctest::Approx(r.critical_latency).epsilon(1e-12));
}

TEST_CASE("record_transfer rejects negative fields") {
    TransferLedger ledger;
    auto good = make_event("star", 0, EventKind::Uplink, 1, 2, 10, 0.5, 0.5);
    CHECK(ledger.record_transfer(good) == 0);

    auto bad = good;
    bad.round = -1;
    CHECK_THROWS_AS(ledger.record_transfer(bad), AccountingError);
    bad = good;
    bad.src = -1;
    CHECK_THROWS_AS(ledger.record_transfer(bad), AccountingError);
    bad = good;
    bad.latency_s = -0.1;
    CHECK_THROWS_AS(ledger.record_transfer(bad), AccountingError);
    bad = good;
    bad.energy_j = -0.1;
    CHECK_THROWS_AS(ledger.record_transfer(bad), AccountingError);
    CHECK(ledger.size() == 1); // failed records must not leak in

    CHECK_THROWS_AS(ledger.mark_critical(5), AccountingError);
}

TEST_CASE("record_compute stores a self-loop with zero bytes") {
    TransferLedger ledger;
    ledger.record_compute("hier", 3, 7, 1.25, 4.5);
    const auto& e = ledger.events().at(0);
    CHECK(e.kind == EventKind::Compute);
    CHECK(e.src == 7);
    CHECK(e.dst == 7);
    CHECK(e.bytes == 0);
    CHECK(e.latency_s == 1.25);
    CHECK(e.energy_j == 4.5);
    CHECK(!e.critical);
}

TEST_CASE("summarize accumulates per-round and cumulative columns") {
    TransferLedger ledger;
    // Round 0: critical 1.0 + uncounted 9.0, energy 2.0 + 3.0.
    auto a = ledger.record_transfer(make_event("star", 0, EventKind::Uplink, 0, 1, 5, 1.0, 2.0));
    ledger.record_transfer(make_event("star", 0, EventKind::Uplink, 1, 2, 5, 9.0, 3.0));
    ledger.mark_critical(a);
    // Round 1: critical 2.5, energy 1.0.
    auto b = ledger.record_transfer(make_event("star", 1, EventKind::Downlink, 2, 0, 5, 2.5, 1.0));
    ledger.mark_critical(b);

    AccuracyTable acc;
    acc[{"star", 0}] = 0.25;
    acc[{"star", 1}] = 0.5;
    auto reports = summarize(ledger, acc);
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].round_latency_s == 1.0);
    CHECK(reports[0].round_energy_j == 5.0);
    CHECK(reports[0].cum_latency_s == 1.0);
    CHECK(reports[0].cum_energy_j == 5.0);
    CHECK(reports[0].accuracy == 0.25);
    CHECK(reports[1].round_latency_s == 2.5);
    CHECK(reports[1].cum_latency_s == 3.5);
    CHECK(reports[1].cum_energy_j == 6.0);
    CHECK(reports[1].accuracy == 0.5);
}

TEST_CASE("summarize keeps strategies in first-appearance order, rounds ascending") {
    TransferLedger ledger;
    ledger.record_transfer(make_event("hier", 2, EventKind::Uplink, 0, 1, 1, 0.1, 0.1));
    ledger.record_transfer(make_event("star", 0, EventKind::Uplink, 0, 1, 1, 0.1, 0.1));
    ledger.record_transfer(make_event("hier", 0, EventKind::Uplink, 0, 1, 1, 0.1, 0.1));
    auto reports = summarize(ledger, full_accuracy_table(ledger, 0.5));
    REQUIRE(reports.size() == 3);
    CHECK(reports[0].strategy == "hier");
    CHECK(reports[0].round == 0);
    CHECK(reports[1].strategy == "hier");
    CHECK(reports[1].round == 2);
    CHECK(reports[2].strategy == "star");
}

TEST_CASE("summarize cumulative columns are monotone on random ledgers") {
    auto r = build_random_ledger(400, 808);
    auto reports = summarize(r.ledger, full_accuracy_table(r.ledger, 0.9));
    std::string strategy;
    double lat = 0.0;
    double eng = 0.0;
    for (const auto& rep : reports) {
        if (rep.strategy != strategy) {
            strategy = rep.strategy;
            lat = 0.0;
            eng = 0.0;
        }
        CHECK(rep.cum_latency_s >= lat);
        CHECK(rep.cum_energy_j >= eng);
        lat = rep.cum_latency_s;
        eng = rep.cum_energy_j;
    }
}

TEST_CASE("energy totals ignore critical-path stamps") {
    auto r = build_random_ledger(200, 111);
    TransferLedger unmarked;
    for (auto e : r.ledger.events()) {
        e.critical = false;
        unmarked.record_transfer(e);
    }
    CHECK(totals(unmarked).energy_j == totals(r.ledger).energy_j);
    CHECK(totals(unmarked).critical_latency_s == 0.0);
}

TEST_CASE("summarize demands an accuracy for every strategy-round pair") {
    TransferLedger ledger;
    ledger.record_transfer(make_event("star", 0, EventKind::Uplink, 0, 1, 1, 0.1, 0.1));
    ledger.record_transfer(make_event("star", 1, EventKind::Uplink, 0, 1, 1, 0.1, 0.1));
    AccuracyTable partial;
    partial[{"star", 0}] = 0.5;
    CHECK_THROWS_AS(summarize(ledger, partial), ReportError);
    partial[{"star", 1}] = 1.5;
    CHECK_THROWS_AS(summarize(ledger, partial), ReportError);
}

TEST_CASE("format_real emits the shortest round-tripping decimal") {
    CHECK(format_real(0.0) == "0");
    CHECK(format_real(1.0) == "1");
    CHECK(format_real(0.5) == "0.5");
    CHECK(format_real(0.1) == "0.1");
    Rng rng(2024);
    for (int i = 0; i < 200; ++i) {
        double v = rng.uniform(-1e6, 1e6) * std::pow(10.0, rng.uniform(-6.0, 6.0));
        double parsed = 0.0;
        std::sscanf(format_real(v).c_str(), "%lf", &parsed);
        CHECK(parsed == v);
    }
}

TEST_CASE("emit_csv writes the documented header and read_report_csv inverts it") {
    auto r = build_random_ledger(300, 555);
    auto reports = summarize(r.ledger, full_accuracy_table(r.ledger, 0.375));

    std::ostringstream out;
    emit_csv(reports, out);
    const std::string text = out.str();
    CHECK(text.rfind("strategy,round,cum_latency_s,cum_energy_j,accuracy\n", 0) == 0);

    const std::string path = "test_metrics_report.csv";
    emit_csv(reports, path);
    auto back = read_report_csv(path);
    REQUIRE(back.size() == reports.size());
    for (std::size_t i = 0; i < reports.size(); ++i) {
        CHECK(back[i].strategy == reports[i].strategy);
        CHECK(back[i].round == reports[i].round);
        // %g round-trip rendering makes the parse exact, not approximate.
        CHECK(back[i].cum_latency_s == reports[i].cum_latency_s);
        CHECK(back[i].cum_energy_j == reports[i].cum_energy_j);
        CHECK(back[i].accuracy == reports[i].accuracy);
    }
    std::remove(path.c_str());
}

TEST_CASE("csv emission is byte-deterministic") {
    auto build = [] {
        auto r = build_random_ledger(250, 777);
        std::ostringstream out;
        emit_csv(summarize(r.ledger, full_accuracy_table(r.ledger, 0.625)), out);
        return out.str();
    };
    CHECK(build() == build());
}

TEST_CASE("ledger csv carries the optional seed column") {
    TransferLedger ledger;
    auto idx = ledger.record_transfer(make_event("star", 2, EventKind::Backhaul, 40, 41, 99, 0.25, 0.75));
    ledger.mark_critical(idx);
    ledger.record_compute("star", 2, 3, 1.5, 2.5);

    std::ostringstream plain;
    emit_ledger_csv(ledger, plain);
    CHECK(plain.str() ==
          "strategy,round,kind,src,dst,bytes,latency_s,energy_j,critical\n"
          "star,2,backhaul,40,41,99,0.25,0.75,1\n"
          "star,2,compute,3,3,0,1.5,2.5,0\n");

    std::ostringstream seeded;
    emit_ledger_csv(ledger, seeded, 7);
    CHECK(seeded.str() ==
          "seed,strategy,round,kind,src,dst,bytes,latency_s,energy_j,critical\n"
          "7,star,2,backhaul,40,41,99,0.25,0.75,1\n"
          "7,star,2,compute,3,3,0,1.5,2.5,0\n");

    std::ostringstream headerless;
    emit_ledger_csv(ledger, headerless, 7, false);
    CHECK(headerless.str().rfind("7,star,2,backhaul", 0) == 0);
}

TEST_CASE("emit_table reports the final round of each strategy") {
    TransferLedger ledger;
    for (int round = 0; round < 3; ++round) {
        auto i = ledger.record_transfer(
            make_event("star", round, EventKind::Uplink, 0, 1, 10, 1.0, 2.0));
        ledger.mark_critical(i);
        auto j = ledger.record_transfer(
            make_event("hier", round, EventKind::Uplink, 0, 1, 10, 0.5, 1.0));
        ledger.mark_critical(j);
    }
    AccuracyTable acc;
    for (int round = 0; round < 3; ++round) {
        acc[{"star", round}] = 0.1 * (round + 1);
        acc[{"hier", round}] = 0.2 * (round + 1);
    }
    std::ostringstream out;
    emit_table(summarize(ledger, acc), {{"star", "every round"}}, out);
    const std::string text = out.str();
    CHECK(text.find("| star | every round | 2 | 3.000 | 6.000 | 0.3000 |") != std::string::npos);
    CHECK(text.find("| hier | - | 2 | 1.500 | 3.000 | 0.6000 |") != std::string::npos);
    // One header, one divider, one row per strategy.
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}

TEST_CASE("mean_reports averages aligned per-seed runs") {
    auto make = [](double acc, double lat) {
        std::vector<RoundReport> reports;
        for (int round = 0; round < 2; ++round) {
            RoundReport r;
            r.strategy = "star";
            r.round = round;
            r.cum_latency_s = lat * (round + 1);
            r.cum_energy_j = 2.0 * lat * (round + 1);
            r.accuracy = acc;
            reports.push_back(r);
        }
        return reports;
    };
    auto mean = mean_reports({make(0.4, 1.0), make(0.6, 3.0)});
    REQUIRE(mean.size() == 2);
    CHECK(mean[0].accuracy == doctest::Approx(0.5));
    CHECK(mean[0].cum_latency_s == doctest::Approx(2.0));
    CHECK(mean[1].cum_energy_j == doctest::Approx(8.0));
}
