#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "blis/common.hpp"
#include "blis/protocol.hpp"

namespace blis {

using protocol::DeviceState;

/// Application requirements: how many modules, and how many readings per
/// module per period in each device state.
struct AppSpec {
    int app_id = 1;
    int module_count = 1;
    std::vector<int> sensors_per_module;  // empty means one sensor per module
    std::uint16_t rate_nml = 10;
    std::uint16_t rate_lp = 5;
    SimTime period_us = 3600 * kMicrosPerSecond;

    protocol::ChannelId channel() const { return protocol::channel_for_app(app_id); }

    int sensors_of(int module) const {
        return sensors_per_module.empty() ? 1 : sensors_per_module.at(static_cast<std::size_t>(module));
    }

    int total_sensors() const {
        int n = 0;
        for (int j = 0; j < module_count; ++j) n += sensors_of(j);
        return n;
    }

    /// Index of the module's first sensor in the app-wide flattened sensor list.
    int first_sensor_of(int module) const {
        int n = 0;
        for (int j = 0; j < module; ++j) n += sensors_of(j);
        return n;
    }

    std::uint16_t rate_for(DeviceState s) const { return s == DeviceState::Normal ? rate_nml : rate_lp; }

    void validate() const {
        protocol::channel_for_app(app_id);
        if (module_count < 1 || module_count > 255) {
            throw Error(ErrorCode::InvalidArgument, "module_count must be in [1,255]");
        }
        if (!sensors_per_module.empty()) {
            if (static_cast<int>(sensors_per_module.size()) != module_count) {
                throw Error(ErrorCode::InvalidArgument, "sensors_per_module length must equal module_count");
            }
            for (int s : sensors_per_module) {
                if (s < 1) throw Error(ErrorCode::InvalidArgument, "every module needs at least one sensor");
            }
        }
        if (rate_lp == 0 || rate_nml == 0) throw Error(ErrorCode::InvalidArgument, "rates must be > 0");
        if (rate_nml < rate_lp) throw Error(ErrorCode::InvalidArgument, "rate_nml must be >= rate_lp");
        if (period_us <= 0) throw Error(ErrorCode::InvalidArgument, "period must be > 0");
    }
};

}  // namespace blis
