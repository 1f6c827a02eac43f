#pragma once

#include <cstdint>

namespace fedfog {

enum class LinkKind { Uplink, Downlink, D2D, Backhaul };

/// Wireless link parameterization: log-distance path loss + Shannon capacity
/// for the distance-dependent kinds (uplink, D2D), fixed configured rates for
/// downlink and edge<->cloud backhaul.
struct ChannelParams {
    double uplink_bandwidth_hz = 1.0e6;
    double d2d_bandwidth_hz = 4.0e7;
    double noise_dbm_per_hz = -174.0;    // thermal noise spectral density
    double path_loss_exponent = 3.0;
    double reference_distance_m = 1.0;
    double reference_loss_db = 40.0;     // loss at the reference distance
    double backhaul_rate_bps = 1.0e9;
    double downlink_rate_bps = 1.0e8;
    double rx_idle_power_w = 0.0;        // 0 disables receive-energy accounting
};

struct TransferCost {
    double latency_s = 0.0;
    double energy_j = 0.0;
    double rate_bps = 0.0;
};

/// Log-distance path loss in dB. Distances below the reference distance are
/// clamped to it.
double path_loss_db(double distance_m, const ChannelParams& params);

/// Achievable rate for one link. Shannon-capacity for Uplink/D2D,
/// the fixed configured rate for Downlink/Backhaul.
double link_rate_bps(double distance_m, double tx_power_w, LinkKind kind,
                     const ChannelParams& params);

/// Latency and transmit (plus optional receive) energy of moving `bytes`
/// over a link at `rate_bps`.
TransferCost transfer_cost(std::uint64_t bytes, double rate_bps, double tx_power_w,
                           const ChannelParams& params);

const char* link_kind_name(LinkKind kind);

} // namespace fedfog
