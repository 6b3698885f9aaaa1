#include "blis/protocol.hpp"

#include <cctype>
#include <numeric>
#include <sstream>

namespace blis::protocol {

namespace {

constexpr std::uint8_t kBeaconMagic[2] = {0x42, 0x43};  // "BC"
constexpr std::uint8_t kSensorMagic[2] = {0x53, 0x44};  // "SD"
constexpr std::size_t kMaxListLength = 255;

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) {
        out_.push_back(static_cast<std::uint8_t>(v));
        out_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    Bytes take() { return std::move(out_); }

private:
    Bytes out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    std::size_t offset() const { return pos_; }

    std::uint8_t u8(const char* field) {
        need(1, field);
        return in_[pos_++];
    }
    std::uint16_t u16(const char* field) {
        need(2, field);
        auto v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::int32_t i32(const char* field) { return static_cast<std::int32_t>(u32(field)); }

    void magic(const std::uint8_t (&expected)[2]) {
        need(2, "magic");
        if (in_[0] != expected[0] || in_[1] != expected[1]) throw DecodeError(0, "bad magic");
        pos_ = 2;
    }
    void version() {
        const std::size_t at = pos_;
        if (u8("version") != kWireVersion) throw DecodeError(at, "unsupported version");
    }
    void finish() {
        if (pos_ != in_.size()) throw DecodeError(pos_, "trailing bytes");
    }

private:
    void need(std::size_t n, const char* field) {
        if (in_.size() - pos_ < n) {
            throw DecodeError(pos_, std::string("truncated ") + field);
        }
    }

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

bool app_id_valid(int app_id) { return app_id >= 1 && app_id <= kMaxApplications; }

std::vector<std::uint16_t> read_u16_list(Reader& r, std::size_t n, const char* field) {
    std::vector<std::uint16_t> v(n);
    for (auto& x : v) x = r.u16(field);
    return v;
}

// Returns an error message or empty when the vectors form a valid synch message.
std::string synch_violation(const AppSynchMsg& s) {
    if (s.sync_current.empty()) return "sync vectors must be non-empty";
    if (s.sync_current.size() != s.sync_new.size()) return "sync vector lengths differ";
    if (s.sync_current.size() > kMaxListLength) return "too many modules";
    unsigned increments = 0;
    for (std::size_t j = 0; j < s.sync_current.size(); ++j) {
        if (s.sync_new[j] < s.sync_current[j]) return "sync_new below sync_current";
        increments += s.sync_new[j] - s.sync_current[j];
    }
    if (increments > 1) return "sync_new solicits more than one reading";
    return {};
}

std::string list_str(const std::vector<std::uint16_t>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s + "]";
}

}  // namespace

const char* to_string(DeviceState s) { return s == DeviceState::Normal ? "NML" : "LP"; }

ChannelId::ChannelId(int index) : index_(index) {
    if (index < 0 || index >= kMaxApplications) {
        throw Error(ErrorCode::OutOfRange, "channel index " + std::to_string(index));
    }
}

ChannelId channel_for_app(int app_id) {
    if (app_id > kMaxApplications) {
        throw Error(ErrorCode::TooManyApps,
                    "app " + std::to_string(app_id) + " exceeds the 40-channel limit");
    }
    if (app_id < 1) throw Error(ErrorCode::InvalidArgument, "app ids start at 1");
    return ChannelId(app_id - 1);
}

void validate(const Beacon& b) {
    if (!app_id_valid(b.app_id)) throw Error(ErrorCode::InvalidArgument, "beacon app_id out of range");
    if (b.rate_control.rate_current.size() != b.rate_control.rate_new.size()) {
        throw Error(ErrorCode::InvalidArgument, "rate lists differ in length");
    }
    if (b.rate_control.rate_current.size() > kMaxListLength) {
        throw Error(ErrorCode::Oversize, "too many sensors");
    }
    if (auto msg = synch_violation(b.app_synch); !msg.empty()) {
        throw Error(ErrorCode::InvalidArgument, msg);
    }
    if (b.actuator_control && b.actuator_control->target_module >= b.app_synch.sync_current.size()) {
        throw Error(ErrorCode::InvalidArgument, "actuator target outside application");
    }
}

void validate(const SensorDataPacket& p) {
    if (!app_id_valid(p.payload.app_id)) throw Error(ErrorCode::InvalidArgument, "packet app_id out of range");
    if (p.payload.readings.empty()) throw Error(ErrorCode::InvalidArgument, "sensor packet has no readings");
    if (p.payload.readings.size() > kMaxListLength) throw Error(ErrorCode::Oversize, "too many readings");
}

SensorDataPacket make_sensor_packet(std::uint8_t app_id, std::uint8_t module_id,
                                    std::uint32_t in_reply_to, DeviceReport report,
                                    std::vector<SensorReading> readings) {
    SensorDataPacket p{in_reply_to, report, SensorDataMsg{app_id, module_id, std::move(readings)}};
    validate(p);
    return p;
}

Bytes encode_beacon(const Beacon& b) {
    validate(b);
    Writer w;
    w.u8(kBeaconMagic[0]);
    w.u8(kBeaconMagic[1]);
    w.u8(kWireVersion);
    w.u8(b.app_id);
    w.u32(b.seq);
    w.u8(static_cast<std::uint8_t>(b.rate_control.rate_current.size()));
    for (auto r : b.rate_control.rate_current) w.u16(r);
    for (auto r : b.rate_control.rate_new) w.u16(r);
    w.u8(static_cast<std::uint8_t>(b.app_synch.sync_current.size()));
    for (auto v : b.app_synch.sync_current) w.u16(v);
    for (auto v : b.app_synch.sync_new) w.u16(v);
    if (b.actuator_control) {
        w.u8(1);
        w.u8(b.actuator_control->state ? 1 : 0);
        w.u8(b.actuator_control->target_module);
    } else {
        w.u8(0);
    }
    auto out = w.take();
    if (out.size() > kMaxPayloadBytes) {
        throw Error(ErrorCode::Oversize, "beacon encodes to " + std::to_string(out.size()) + " bytes");
    }
    return out;
}

Beacon decode_beacon(std::span<const std::uint8_t> bytes) {
    if (bytes.size() > kMaxPayloadBytes) throw DecodeError(kMaxPayloadBytes, "longer than one PDU");
    Reader r(bytes);
    r.magic(kBeaconMagic);
    r.version();
    Beacon b;
    std::size_t at = r.offset();
    b.app_id = r.u8("app_id");
    if (!app_id_valid(b.app_id)) throw DecodeError(at, "app_id out of range");
    b.seq = r.u32("seq");
    const std::size_t n = r.u8("rate count");
    b.rate_control.rate_current = read_u16_list(r, n, "rate_current");
    b.rate_control.rate_new = read_u16_list(r, n, "rate_new");
    at = r.offset();
    const std::size_t m = r.u8("module count");
    b.app_synch.sync_current = read_u16_list(r, m, "sync_current");
    b.app_synch.sync_new = read_u16_list(r, m, "sync_new");
    if (auto msg = synch_violation(b.app_synch); !msg.empty()) throw DecodeError(at, msg);
    at = r.offset();
    const auto flag = r.u8("actuator flag");
    if (flag == 1) {
        ActuatorControlMsg a;
        const std::size_t state_at = r.offset();
        const auto state = r.u8("actuator state");
        if (state > 1) throw DecodeError(state_at, "actuator state must be 0 or 1");
        a.state = state == 1;
        const std::size_t target_at = r.offset();
        a.target_module = r.u8("actuator target");
        if (a.target_module >= m) throw DecodeError(target_at, "actuator target outside application");
        b.actuator_control = a;
    } else if (flag != 0) {
        throw DecodeError(at, "actuator flag must be 0 or 1");
    }
    r.finish();
    return b;
}

Bytes encode_sensor_packet(const SensorDataPacket& p) {
    validate(p);
    Writer w;
    w.u8(kSensorMagic[0]);
    w.u8(kSensorMagic[1]);
    w.u8(kWireVersion);
    w.u8(p.payload.app_id);
    w.u8(p.payload.module_id);
    w.u32(p.in_reply_to);
    w.u8(static_cast<std::uint8_t>(p.report.state));
    w.u32(p.report.stored_energy_nj);
    w.u8(static_cast<std::uint8_t>(p.payload.readings.size()));
    for (const auto& rd : p.payload.readings) {
        w.u8(rd.sensor_id);
        w.i32(rd.value);
        w.u32(rd.sample_time_ms);
    }
    auto out = w.take();
    if (out.size() > kMaxPayloadBytes) {
        throw Error(ErrorCode::Oversize, "sensor packet encodes to " + std::to_string(out.size()) + " bytes");
    }
    return out;
}

SensorDataPacket decode_sensor_packet(std::span<const std::uint8_t> bytes) {
    if (bytes.size() > kMaxPayloadBytes) throw DecodeError(kMaxPayloadBytes, "longer than one PDU");
    Reader r(bytes);
    r.magic(kSensorMagic);
    r.version();
    SensorDataPacket p;
    std::size_t at = r.offset();
    p.payload.app_id = r.u8("app_id");
    if (!app_id_valid(p.payload.app_id)) throw DecodeError(at, "app_id out of range");
    p.payload.module_id = r.u8("module_id");
    p.in_reply_to = r.u32("in_reply_to");
    at = r.offset();
    const auto state = r.u8("device_state");
    if (state > 1) throw DecodeError(at, "device_state must be 0 or 1");
    p.report.state = static_cast<DeviceState>(state);
    p.report.stored_energy_nj = r.u32("stored_energy_nj");
    at = r.offset();
    const std::size_t n = r.u8("reading count");
    if (n == 0) throw DecodeError(at, "sensor packet has no readings");
    p.payload.readings.resize(n);
    for (auto& rd : p.payload.readings) {
        rd.sensor_id = r.u8("sensor_id");
        rd.value = r.i32("value");
        rd.sample_time_ms = r.u32("sample_time_ms");
    }
    r.finish();
    return p;
}

PacketKind sniff(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2) return PacketKind::Unknown;
    if (bytes[0] == kBeaconMagic[0] && bytes[1] == kBeaconMagic[1]) return PacketKind::Beacon;
    if (bytes[0] == kSensorMagic[0] && bytes[1] == kSensorMagic[1]) return PacketKind::SensorData;
    return PacketKind::Unknown;
}

std::string describe_packet(std::span<const std::uint8_t> bytes) {
    std::ostringstream os;
    switch (sniff(bytes)) {
        case PacketKind::Beacon: {
            const Beacon b = decode_beacon(bytes);
            const std::size_t n = b.rate_control.rate_current.size();
            const std::size_t m = b.app_synch.sync_current.size();
            std::size_t off = 8;
            os << "beacon (" << bytes.size() << " bytes)\n"
               << "  [0] magic        BC\n"
               << "  [2] version      " << int(kWireVersion) << "\n"
               << "  [3] app_id       " << int(b.app_id) << " (channel " << channel_for_app(b.app_id).index() << ")\n"
               << "  [4] seq          " << b.seq << "\n"
               << "  [" << off << "] rate_count   " << n << "\n";
            off += 1;
            os << "  [" << off << "] rate_current " << list_str(b.rate_control.rate_current) << "\n";
            off += 2 * n;
            os << "  [" << off << "] rate_new     " << list_str(b.rate_control.rate_new) << "\n";
            off += 2 * n;
            os << "  [" << off << "] modules      " << m << "\n";
            off += 1;
            os << "  [" << off << "] sync_current " << list_str(b.app_synch.sync_current) << "\n";
            off += 2 * m;
            os << "  [" << off << "] sync_new     " << list_str(b.app_synch.sync_new) << "\n";
            off += 2 * m;
            if (b.actuator_control) {
                os << "  [" << off << "] actuator     state=" << (b.actuator_control->state ? "on" : "off")
                   << " target_module=" << int(b.actuator_control->target_module) << "\n";
            } else {
                os << "  [" << off << "] actuator     none\n";
            }
            break;
        }
        case PacketKind::SensorData: {
            const SensorDataPacket p = decode_sensor_packet(bytes);
            os << "sensor_data (" << bytes.size() << " bytes)\n"
               << "  [0] magic        SD\n"
               << "  [2] version      " << int(kWireVersion) << "\n"
               << "  [3] app_id       " << int(p.app_id()) << "\n"
               << "  [4] module_id    " << int(p.module_id()) << "\n"
               << "  [5] in_reply_to  " << p.in_reply_to << "\n"
               << "  [9] device_state " << to_string(p.report.state) << "\n"
               << "  [10] stored_nj   " << p.report.stored_energy_nj << "\n"
               << "  [14] readings    " << p.payload.readings.size() << "\n";
            std::size_t off = 15;
            for (const auto& rd : p.payload.readings) {
                os << "  [" << off << "] sensor " << int(rd.sensor_id) << " value=" << rd.value / 1000.0
                   << " t_ms=" << rd.sample_time_ms << "\n";
                off += 9;
            }
            break;
        }
        case PacketKind::Unknown:
            throw DecodeError(0, "unknown packet magic");
    }
    return os.str();
}

Bytes parse_hex(std::string_view hex) {
    Bytes out;
    int pending = -1;
    for (std::size_t i = 0; i < hex.size(); ++i) {
        const char c = hex[i];
        if (std::isspace(static_cast<unsigned char>(c)) || c == ':' || c == '-') continue;
        int nibble;
        if (c >= '0' && c <= '9') nibble = c - '0';
        else if (c >= 'a' && c <= 'f') nibble = c - 'a' + 10;
        else if (c >= 'A' && c <= 'F') nibble = c - 'A' + 10;
        else throw Error(ErrorCode::InvalidArgument, "non-hex character at position " + std::to_string(i));
        if (pending < 0) {
            pending = nibble;
        } else {
            out.push_back(static_cast<std::uint8_t>(pending << 4 | nibble));
            pending = -1;
        }
    }
    if (pending >= 0) throw Error(ErrorCode::InvalidArgument, "odd number of hex digits");
    return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string s;
    s.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        s.push_back(kDigits[b >> 4]);
        s.push_back(kDigits[b & 0xF]);
    }
    return s;
}

}  // namespace blis::protocol
