#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blis/common.hpp"

namespace blis::protocol {

inline constexpr std::size_t kMaxPayloadBytes = 251;  // BLE data PDU payload ceiling
inline constexpr int kMaxApplications = 40;           // one BLE channel per application
inline constexpr std::uint8_t kWireVersion = 1;

enum class DeviceState : std::uint8_t { LowPower = 0, Normal = 1 };

const char* to_string(DeviceState s);

class ChannelId {
public:
    explicit ChannelId(int index);
    int index() const { return index_; }
    friend bool operator==(ChannelId, ChannelId) = default;

private:
    int index_;
};

/// Maps application ids 1..40 onto channels 0..39; TooManyApps beyond that.
ChannelId channel_for_app(int app_id);

struct SensorReading {
    std::uint8_t sensor_id = 0;
    std::int32_t value = 0;  // engineering value * 1000
    std::uint32_t sample_time_ms = 0;
    friend bool operator==(const SensorReading&, const SensorReading&) = default;
};

struct SensorDataMsg {
    std::uint8_t app_id = 1;
    std::uint8_t module_id = 0;
    std::vector<SensorReading> readings;
    friend bool operator==(const SensorDataMsg&, const SensorDataMsg&) = default;
};

struct RateControlMsg {
    std::vector<std::uint16_t> rate_current;  // per sensor, readings per period
    std::vector<std::uint16_t> rate_new;
    friend bool operator==(const RateControlMsg&, const RateControlMsg&) = default;
};

using SyncVector = std::vector<std::uint16_t>;

struct AppSynchMsg {
    SyncVector sync_current;
    SyncVector sync_new;
    friend bool operator==(const AppSynchMsg&, const AppSynchMsg&) = default;
};

struct ActuatorControlMsg {
    bool state = false;
    std::uint8_t target_module = 0;
    friend bool operator==(const ActuatorControlMsg&, const ActuatorControlMsg&) = default;
};

struct Beacon {
    std::uint8_t app_id = 1;
    std::uint32_t seq = 0;
    RateControlMsg rate_control;
    AppSynchMsg app_synch;
    std::optional<ActuatorControlMsg> actuator_control;
    friend bool operator==(const Beacon&, const Beacon&) = default;
};

/// Device condition piggy-backed on every sensor packet so the aggregator can
/// track the actual device state.
struct DeviceReport {
    DeviceState state = DeviceState::LowPower;
    std::uint32_t stored_energy_nj = 0;
    friend bool operator==(const DeviceReport&, const DeviceReport&) = default;
};

struct SensorDataPacket {
    std::uint32_t in_reply_to = 0;
    DeviceReport report;
    SensorDataMsg payload;

    std::uint8_t app_id() const { return payload.app_id; }
    std::uint8_t module_id() const { return payload.module_id; }
    friend bool operator==(const SensorDataPacket&, const SensorDataPacket&) = default;
};

/// Checked constructor; rejects packets that would violate the wire invariants.
SensorDataPacket make_sensor_packet(std::uint8_t app_id, std::uint8_t module_id,
                                    std::uint32_t in_reply_to, DeviceReport report,
                                    std::vector<SensorReading> readings);

void validate(const Beacon& b);
void validate(const SensorDataPacket& p);

/// Malformed input error carrying the byte offset where decoding failed.
class DecodeError : public Error {
public:
    DecodeError(std::size_t offset, const std::string& what)
        : Error(ErrorCode::Malformed, "offset " + std::to_string(offset) + ": " + what),
          offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

using Bytes = std::vector<std::uint8_t>;

Bytes encode_beacon(const Beacon& b);
Beacon decode_beacon(std::span<const std::uint8_t> bytes);

Bytes encode_sensor_packet(const SensorDataPacket& p);
SensorDataPacket decode_sensor_packet(std::span<const std::uint8_t> bytes);

enum class PacketKind { Beacon, SensorData, Unknown };
PacketKind sniff(std::span<const std::uint8_t> bytes);

/// Human-readable field dump of either packet type, used by the codec tool.
std::string describe_packet(std::span<const std::uint8_t> bytes);

Bytes parse_hex(std::string_view hex);
std::string to_hex(std::span<const std::uint8_t> bytes);

}  // namespace blis::protocol
