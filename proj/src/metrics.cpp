#include "fedfog/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>

#include "fedfog/errors.hpp"

namespace fedfog {

const char* event_kind_name(EventKind kind) {
    switch (kind) {
    case EventKind::Uplink: return "uplink";
    case EventKind::Downlink: return "downlink";
    case EventKind::D2D: return "d2d";
    case EventKind::Backhaul: return "backhaul";
    case EventKind::Compute: return "compute";
    }
    return "?";
}

std::size_t TransferLedger::record_transfer(TransferEvent event) {
    if (event.round < 0 || event.src < 0 || event.dst < 0 || event.latency_s < 0.0 ||
        event.energy_j < 0.0) {
        throw AccountingError("record_transfer: negative field in event");
    }
    events_.push_back(std::move(event));
    return events_.size() - 1;
}

std::size_t TransferLedger::record_compute(std::string strategy, int round, int device,
                                           double seconds, double joules) {
    TransferEvent event;
    event.strategy = std::move(strategy);
    event.round = round;
    event.src = device;
    event.dst = device;
    event.kind = EventKind::Compute;
    event.bytes = 0;
    event.latency_s = seconds;
    event.energy_j = joules;
    return record_transfer(std::move(event));
}

void TransferLedger::mark_critical(std::size_t index) {
    if (index >= events_.size()) {
        throw AccountingError("mark_critical: index out of range");
    }
    events_[index].critical = true;
}

LedgerTotals totals(const TransferLedger& ledger) {
    LedgerTotals t;
    for (const auto& e : ledger.events()) {
        if (e.critical) t.critical_latency_s += e.latency_s;
        t.energy_j += e.energy_j;
        t.bytes += e.bytes;
        ++t.events;
    }
    t.events = ledger.size();
    return t;
}

std::vector<RoundReport> summarize(const TransferLedger& ledger, const AccuracyTable& accuracies) {
    // Strategies keep first-appearance order; rounds are reported ascending.
    std::vector<std::string> order;
    std::map<std::string, std::map<int, std::pair<double, double>>> acc; // latency, energy
    for (const auto& e : ledger.events()) {
        if (acc.find(e.strategy) == acc.end()) order.push_back(e.strategy);
        auto& cell = acc[e.strategy][e.round];
        if (e.critical) cell.first += e.latency_s;
        cell.second += e.energy_j;
    }

    std::vector<RoundReport> reports;
    for (const auto& strategy : order) {
        double cum_latency = 0.0;
        double cum_energy = 0.0;
        for (const auto& [round, cell] : acc[strategy]) {
            auto it = accuracies.find({strategy, round});
            if (it == accuracies.end()) {
                throw ReportError("summarize: no accuracy for strategy '" + strategy +
                                  "' round " + std::to_string(round));
            }
            if (it->second < 0.0 || it->second > 1.0) {
                throw ReportError("summarize: accuracy out of [0,1] for strategy '" + strategy +
                                  "' round " + std::to_string(round));
            }
            cum_latency += cell.first;
            cum_energy += cell.second;
            RoundReport r;
            r.strategy = strategy;
            r.round = round;
            r.round_latency_s = cell.first;
            r.round_energy_j = cell.second;
            r.cum_latency_s = cum_latency;
            r.cum_energy_j = cum_energy;
            r.accuracy = it->second;
            reports.push_back(std::move(r));
        }
    }
    return reports;
}

std::string format_real(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    double parsed = 0.0;
    std::sscanf(buf, "%lf", &parsed);
    if (parsed == value) {
        // Trim to the shortest precision that still round-trips.
        for (int prec = 1; prec < 17; ++prec) {
            char probe[64];
            std::snprintf(probe, sizeof(probe), "%.*g", prec, value);
            std::sscanf(probe, "%lf", &parsed);
            if (parsed == value) return probe;
        }
    }
    return buf;
}

void emit_csv(const std::vector<RoundReport>& reports, std::ostream& out) {
    out << "strategy,round,cum_latency_s,cum_energy_j,accuracy\n";
    for (const auto& r : reports) {
        out << r.strategy << ',' << r.round << ',' << format_real(r.cum_latency_s) << ','
            << format_real(r.cum_energy_j) << ',' << format_real(r.accuracy) << '\n';
    }
}

namespace {

void write_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    body(out);
    out.flush();
    if (!out) throw IoError("write failed on " + path);
}

std::string fixed(double value, int prec) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, value);
    return buf;
}

} // namespace

void emit_csv(const std::vector<RoundReport>& reports, const std::string& path) {
    write_file(path, [&](std::ostream& out) { emit_csv(reports, out); });
}

void emit_table(const std::vector<RoundReport>& reports,
                const std::map<std::string, std::string>& notes, std::ostream& out) {
    // Final round per strategy, in report order.
    std::vector<const RoundReport*> finals;
    for (const auto& r : reports) {
        auto it = std::find_if(finals.begin(), finals.end(),
                               [&](const RoundReport* f) { return f->strategy == r.strategy; });
        if (it == finals.end()) {
            finals.push_back(&r);
        } else if (r.round >= (*it)->round) {
            *it = &r;
        }
    }
    out << "| strategy | aggregation | rounds | latency_s | energy_j | accuracy |\n";
    out << "|---|---|---|---|---|---|\n";
    for (const auto* r : finals) {
        auto note = notes.find(r->strategy);
        out << "| " << r->strategy << " | " << (note == notes.end() ? "-" : note->second)
            << " | " << r->round << " | " << fixed(r->cum_latency_s, 3) << " | "
            << fixed(r->cum_energy_j, 3) << " | " << fixed(r->accuracy, 4) << " |\n";
    }
}

void emit_table(const std::vector<RoundReport>& reports,
                const std::map<std::string, std::string>& notes, const std::string& path) {
    write_file(path, [&](std::ostream& out) { emit_table(reports, notes, out); });
}

void emit_ledger_csv(const TransferLedger& ledger, std::ostream& out,
                     std::optional<std::uint64_t> seed, bool header) {
    if (header) {
        if (seed) out << "seed,";
        out << "strategy,round,kind,src,dst,bytes,latency_s,energy_j,critical\n";
    }
    for (const auto& e : ledger.events()) {
        if (seed) out << *seed << ',';
        out << e.strategy << ',' << e.round << ',' << event_kind_name(e.kind) << ',' << e.src
            << ',' << e.dst << ',' << e.bytes << ',' << format_real(e.latency_s) << ','
            << format_real(e.energy_j) << ',' << (e.critical ? 1 : 0) << '\n';
    }
}

} // namespace fedfog
