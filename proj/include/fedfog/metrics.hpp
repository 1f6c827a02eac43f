#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace fedfog {

enum class EventKind { Uplink, Downlink, D2D, Backhaul, Compute };

const char* event_kind_name(EventKind kind);

struct TransferEvent {
    std::string strategy;
    int round = 0;
    int src = -1;
    int dst = -1;
    EventKind kind = EventKind::Uplink;
    std::uint64_t bytes = 0;
    double latency_s = 0.0;
    double energy_j = 0.0;
    // Set by the protocol once a round's synchronization structure is known;
    // summarize() counts only stamped latencies toward the round latency.
    bool critical = false;
};

class TransferLedger {
public:
    std::size_t record_transfer(TransferEvent event);
    std::size_t record_compute(std::string strategy, int round, int device, double seconds,
                               double joules);
    void mark_critical(std::size_t index);

    const std::vector<TransferEvent>& events() const { return events_; }
    std::size_t size() const { return events_.size(); }

private:
    std::vector<TransferEvent> events_;
};

struct LedgerTotals {
    double critical_latency_s = 0.0;
    double energy_j = 0.0;
    std::uint64_t bytes = 0;
    std::size_t events = 0;
};

LedgerTotals totals(const TransferLedger& ledger);

struct RoundReport {
    std::string strategy;
    int round = 0;
    double round_latency_s = 0.0;
    double round_energy_j = 0.0;
    double cum_latency_s = 0.0;
    double cum_energy_j = 0.0;
    double accuracy = 0.0;
};

// Keyed by (strategy, round); every pair present in the ledger needs an entry.
using AccuracyTable = std::map<std::pair<std::string, int>, double>;

std::vector<RoundReport> summarize(const TransferLedger& ledger, const AccuracyTable& accuracies);

// Shortest decimal form that round-trips a 64-bit real.
std::string format_real(double value);

void emit_csv(const std::vector<RoundReport>& reports, std::ostream& out);
void emit_csv(const std::vector<RoundReport>& reports, const std::string& path);

// Final-round comparison per strategy; `notes` adds an aggregation-schedule
// column keyed by strategy label.
void emit_table(const std::vector<RoundReport>& reports,
                const std::map<std::string, std::string>& notes, std::ostream& out);
void emit_table(const std::vector<RoundReport>& reports,
                const std::map<std::string, std::string>& notes, const std::string& path);

void emit_ledger_csv(const TransferLedger& ledger, std::ostream& out,
                     std::optional<std::uint64_t> seed = std::nullopt, bool header = true);

} // namespace fedfog
