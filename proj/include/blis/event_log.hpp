#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "blis/common.hpp"

namespace blis {

/// One line of the replay log: `time_us,entity,event,detail`.
/// detail is a space-separated list of key=value pairs and never contains commas.
struct LogRecord {
    SimTime time_us = 0;
    std::string entity;
    std::string event;
    std::string detail;

    friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

class Detail {
public:
    Detail& kv(std::string_view key, std::string_view value);
    Detail& kv(std::string_view key, const char* value) { return kv(key, std::string_view(value)); }
    Detail& kv(std::string_view key, const std::string& value) { return kv(key, std::string_view(value)); }
    Detail& kv(std::string_view key, double value);
    Detail& kv(std::string_view key, std::int64_t value);
    Detail& kv(std::string_view key, int value) { return kv(key, static_cast<std::int64_t>(value)); }
    Detail& kv(std::string_view key, unsigned value) { return kv(key, static_cast<std::int64_t>(value)); }
    Detail& kv(std::string_view key, std::size_t value) { return kv(key, static_cast<std::int64_t>(value)); }
    Detail& kv(std::string_view key, bool value) { return kv(key, value ? "1" : "0"); }
    Detail& kv(std::string_view key, const std::vector<std::uint16_t>& values);

    std::string str() && { return std::move(text_); }
    const std::string& str() const& { return text_; }

private:
    std::string text_;
};

std::string format_double(double v);

/// Parsed view of a detail string.
class DetailFields {
public:
    explicit DetailFields(std::string_view detail);

    bool has(std::string_view key) const;
    std::string_view get(std::string_view key) const;  // throws MalformedLog if absent
    double number(std::string_view key) const;
    std::int64_t integer(std::string_view key) const;
    std::vector<std::uint16_t> vector(std::string_view key) const;

private:
    std::map<std::string, std::string, std::less<>> fields_;
};

class EventLog {
public:
    void add(SimTime t, std::string entity, std::string event, std::string detail = {});

    const std::vector<LogRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    void write(std::ostream& out) const;
    std::string to_string() const;
    /// Throws Error(MalformedLog) naming the offending record number.
    static EventLog parse(std::istream& in);
    static EventLog parse(std::string_view text);

private:
    std::vector<LogRecord> records_;
};

}  // namespace blis
