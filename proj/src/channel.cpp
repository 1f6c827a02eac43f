#include "fedfog/channel.hpp"

#include <algorithm>
#include <cmath>

namespace fedfog {

double path_loss_db(double distance_m, const ChannelParams& params) {
    const double d = std::max(distance_m, params.reference_distance_m);
    return params.reference_loss_db +
           10.0 * params.path_loss_exponent * std::log10(d / params.reference_distance_m);
}

double link_rate_bps(double distance_m, double tx_power_w, LinkKind kind,
                     const ChannelParams& params) {
    switch (kind) {
    case LinkKind::Downlink:
        return params.downlink_rate_bps;
    case LinkKind::Backhaul:
        return params.backhaul_rate_bps;
    case LinkKind::Uplink:
    case LinkKind::D2D: {
        const double bandwidth_hz =
            kind == LinkKind::Uplink ? params.uplink_bandwidth_hz : params.d2d_bandwidth_hz;
        const double loss_db = path_loss_db(distance_m, params);
        const double rx_power_w = tx_power_w * std::pow(10.0, -loss_db / 10.0);
        const double noise_w_per_hz = std::pow(10.0, (params.noise_dbm_per_hz - 30.0) / 10.0);
        const double snr = rx_power_w / (noise_w_per_hz * bandwidth_hz);
        return bandwidth_hz * std::log2(1.0 + snr);
    }
    }
    return 0.0;
}

TransferCost transfer_cost(std::uint64_t bytes, double rate_bps, double tx_power_w,
                           const ChannelParams& params) {
    TransferCost cost;
    cost.rate_bps = rate_bps;
    cost.latency_s = 8.0 * static_cast<double>(bytes) / rate_bps;
    cost.energy_j = (tx_power_w + params.rx_idle_power_w) * cost.latency_s;
    return cost;
}

const char* link_kind_name(LinkKind kind) {
    switch (kind) {
    case LinkKind::Uplink: return "uplink";
    case LinkKind::Downlink: return "downlink";
    case LinkKind::D2D: return "d2d";
    case LinkKind::Backhaul: return "backhaul";
    }
    return "?";
}

} // namespace fedfog
