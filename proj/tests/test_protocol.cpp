#include "doctest.h"

#include "blis/protocol.hpp"
#include "generators.hpp"

using namespace blis;
using namespace blis::protocol;

TEST_SUITE("protocol") {

TEST_CASE("first replay beacon round-trips") {
    Beacon b;
    b.app_id = 1;
    b.seq = 0;
    b.app_synch = {{0, 0}, {1, 0}};
    b.rate_control = {{3, 1}, {3, 1}};
    const auto bytes = encode_beacon(b);
    const auto back = decode_beacon(bytes);
    CHECK(back == b);
    CHECK(back.app_synch.sync_current == SyncVector{0, 0});
    CHECK(back.app_synch.sync_new == SyncVector{1, 0});
    CHECK(sniff(bytes) == PacketKind::Beacon);
}

TEST_CASE("beacon layout is little-endian with magic and version") {
    Beacon b;
    b.app_id = 2;
    b.seq = 0x01020304;
    b.app_synch = {{5}, {5}};
    const auto bytes = encode_beacon(b);
    REQUIRE(bytes.size() == 15);
    CHECK(bytes[0] == 0x42);
    CHECK(bytes[1] == 0x43);
    CHECK(bytes[2] == kWireVersion);
    CHECK(bytes[3] == 2);
    CHECK(bytes[4] == 0x04);
    CHECK(bytes[7] == 0x01);
    CHECK(bytes[8] == 0);    // no rates
    CHECK(bytes[9] == 1);    // one module
    CHECK(bytes[10] == 5);
    CHECK(bytes[12] == 5);
    CHECK(bytes[14] == 0);  // no actuator
}

TEST_CASE("beacons differing only in seq encode differently") {
    Beacon a;
    a.app_synch = {{0, 0}, {1, 0}};
    Beacon b = a;
    b.seq = 1;
    CHECK(encode_beacon(a) != encode_beacon(b));
}

TEST_CASE("decoder rejects empty, truncated and mutated input") {
    CHECK_THROWS_AS(decode_beacon({}), DecodeError);
    CHECK_THROWS_AS(decode_sensor_packet({}), DecodeError);
    Beacon b;
    b.app_synch = {{0, 0, 0}, {0, 1, 0}};
    b.rate_control = {{1, 2}, {3, 4}};
    auto bytes = encode_beacon(b);
    for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
        CHECK_THROWS_AS(decode_beacon(std::span(bytes).first(cut)), DecodeError);
    }
    auto bad_len = bytes;
    bad_len[8] = 200;  // rate count
    try {
        decode_beacon(bad_len);
        FAIL("expected DecodeError");
    } catch (const DecodeError& e) {
        CHECK(e.code() == ErrorCode::Malformed);
        CHECK(e.offset() > 8);
    }
    auto bad_magic = bytes;
    bad_magic[0] = 0;
    CHECK_THROWS_AS(decode_beacon(bad_magic), DecodeError);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_beacon(trailing), DecodeError);
}

TEST_CASE("decoder rejects a sync vector soliciting two readings") {
    Beacon b;
    b.app_synch = {{0, 0}, {1, 0}};
    auto bytes = encode_beacon(b);
    // sync_new[1] lives after the header (9), count, and sync_current (4)
    bytes[9 + 1 + 4 + 2] = 1;
    CHECK_THROWS_AS(decode_beacon(bytes), DecodeError);
    b.app_synch = {{0, 0}, {1, 1}};
    CHECK_THROWS_AS(encode_beacon(b), Error);
}

TEST_CASE("sensor packet round trip and construction rules") {
    const auto p = make_sensor_packet(3, 4, 77, {DeviceState::Normal, 123456}, {{0, -1500, 10}, {1, 2500, 20}});
    const auto bytes = encode_sensor_packet(p);
    CHECK(decode_sensor_packet(bytes) == p);
    CHECK(sniff(bytes) == PacketKind::SensorData);
    CHECK(p.app_id() == 3);
    CHECK(p.module_id() == 4);
    CHECK_THROWS_AS(make_sensor_packet(1, 0, 0, {}, {}), Error);
    CHECK_THROWS_AS(make_sensor_packet(41, 0, 0, {}, {{0, 0, 0}}), Error);
}

TEST_CASE("generated packets round-trip byte-identically") {
    Rng rng(2024);
    for (int k = 0; k < 2000; ++k) {
        const auto b = testgen::random_beacon(rng);
        const auto bytes = encode_beacon(b);
        CHECK(bytes.size() <= kMaxPayloadBytes);
        const auto back = decode_beacon(bytes);
        REQUIRE(back == b);
        REQUIRE(encode_beacon(back) == bytes);

        const auto p = testgen::random_sensor_packet(rng);
        const auto pb = encode_sensor_packet(p);
        const auto pback = decode_sensor_packet(pb);
        REQUIRE(pback == p);
        REQUIRE(encode_sensor_packet(pback) == pb);
    }
}

TEST_CASE("oversize beacon is refused") {
    Beacon b;
    b.app_synch.sync_current.assign(60, 0);
    b.app_synch.sync_new.assign(60, 0);
    CHECK(encode_beacon(b).size() == kMaxPayloadBytes);
    b.app_synch.sync_current.assign(61, 0);
    b.app_synch.sync_new.assign(61, 0);
    CHECK_THROWS_AS(encode_beacon(b), Error);
}

TEST_CASE("random bytes never crash the decoders") {
    Rng rng(99);
    for (int k = 0; k < 5000; ++k) {
        Bytes bytes(static_cast<std::size_t>(rng.uniform_int(0, 300)));
        for (auto& x : bytes) x = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
        if (rng.bernoulli(0.5) && bytes.size() >= 3) {
            bytes[0] = rng.bernoulli(0.5) ? 0x42 : 0x53;
            bytes[1] = bytes[0] == 0x42 ? 0x43 : 0x44;
            bytes[2] = kWireVersion;
        }
        for (auto decode : {+[](const Bytes& x) { (void)decode_beacon(x); },
                            +[](const Bytes& x) { (void)decode_sensor_packet(x); },
                            +[](const Bytes& x) { (void)describe_packet(x); }}) {
            try {
                decode(bytes);
            } catch (const DecodeError&) {
            } catch (const Error& e) {
                CHECK(e.code() == ErrorCode::Malformed);
            }
        }
    }
}

TEST_CASE("channel assignment") {
    CHECK(channel_for_app(1).index() == 0);
    CHECK(channel_for_app(40).index() == 39);
    try {
        channel_for_app(41);
        FAIL("expected TooManyApps");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TooManyApps);
    }
    for (int a = 1; a < 40; ++a) CHECK(channel_for_app(a).index() != channel_for_app(a + 1).index());
}

TEST_CASE("hex helpers and packet description") {
    Beacon b;
    b.app_synch = {{0, 0}, {1, 0}};
    const auto bytes = encode_beacon(b);
    const auto hex = to_hex(bytes);
    CHECK(parse_hex(hex) == bytes);
    CHECK(parse_hex("42 43:01") == Bytes{0x42, 0x43, 0x01});
    CHECK_THROWS_AS(parse_hex("4"), Error);
    CHECK_THROWS_AS(parse_hex("zz"), Error);
    const auto text = describe_packet(bytes);
    CHECK(text.find("beacon") != std::string::npos);
    CHECK(text.find("sync_new") != std::string::npos);
}

}  // TEST_SUITE
