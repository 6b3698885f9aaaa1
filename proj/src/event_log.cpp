#include "blis/event_log.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace blis {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

Detail& Detail::kv(std::string_view key, std::string_view value) {
    if (!text_.empty()) text_ += ' ';
    text_.append(key);
    text_ += '=';
    text_.append(value);
    return *this;
}

Detail& Detail::kv(std::string_view key, double value) { return kv(key, format_double(value)); }

Detail& Detail::kv(std::string_view key, std::int64_t value) { return kv(key, std::to_string(value)); }

Detail& Detail::kv(std::string_view key, const std::vector<std::uint16_t>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) s += '/';
        s += std::to_string(values[i]);
    }
    return kv(key, values.empty() ? std::string("-") : s);
}

DetailFields::DetailFields(std::string_view detail) {
    while (!detail.empty()) {
        const auto space = detail.find(' ');
        std::string_view token = detail.substr(0, space);
        detail = space == std::string_view::npos ? std::string_view{} : detail.substr(space + 1);
        if (token.empty()) continue;
        const auto eq = token.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorCode::MalformedLog, "detail token without '=': " + std::string(token));
        }
        fields_.emplace(std::string(token.substr(0, eq)), std::string(token.substr(eq + 1)));
    }
}

bool DetailFields::has(std::string_view key) const { return fields_.find(key) != fields_.end(); }

std::string_view DetailFields::get(std::string_view key) const {
    auto it = fields_.find(key);
    if (it == fields_.end()) throw Error(ErrorCode::MalformedLog, "missing detail key " + std::string(key));
    return it->second;
}

double DetailFields::number(std::string_view key) const {
    const auto text = get(key);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw Error(ErrorCode::MalformedLog, "non-numeric value for " + std::string(key));
    }
    return v;
}

std::int64_t DetailFields::integer(std::string_view key) const {
    const auto text = get(key);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw Error(ErrorCode::MalformedLog, "non-integer value for " + std::string(key));
    }
    return v;
}

std::vector<std::uint16_t> DetailFields::vector(std::string_view key) const {
    std::string_view text = get(key);
    std::vector<std::uint16_t> out;
    if (text == "-") return out;
    while (true) {
        const auto slash = text.find('/');
        const auto part = text.substr(0, slash);
        std::uint16_t v = 0;
        auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (ec != std::errc() || ptr != part.data() + part.size()) {
            throw Error(ErrorCode::MalformedLog, "bad vector element for " + std::string(key));
        }
        out.push_back(v);
        if (slash == std::string_view::npos) break;
        text.remove_prefix(slash + 1);
    }
    return out;
}

void EventLog::add(SimTime t, std::string entity, std::string event, std::string detail) {
    records_.push_back(LogRecord{t, std::move(entity), std::move(event), std::move(detail)});
}

void EventLog::write(std::ostream& out) const {
    out << "time_us,entity,event,detail\n";
    for (const auto& r : records_) {
        out << r.time_us << ',' << r.entity << ',' << r.event << ',' << r.detail << '\n';
    }
}

std::string EventLog::to_string() const {
    std::ostringstream os;
    write(os);
    return os.str();
}

EventLog EventLog::parse(std::istream& in) {
    EventLog log;
    std::string line;
    std::size_t record = 0;
    if (!std::getline(in, line)) return log;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "time_us,entity,event,detail") {
        throw Error(ErrorCode::MalformedLog, "record 0: bad header");
    }
    while (std::getline(in, line)) {
        ++record;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::string_view rest = line;
        std::string_view fields[3];
        for (auto& f : fields) {
            const auto comma = rest.find(',');
            if (comma == std::string_view::npos) {
                throw Error(ErrorCode::MalformedLog, "record " + std::to_string(record) + ": too few fields");
            }
            f = rest.substr(0, comma);
            rest.remove_prefix(comma + 1);
        }
        if (rest.find(',') != std::string_view::npos) {
            throw Error(ErrorCode::MalformedLog, "record " + std::to_string(record) + ": too many fields");
        }
        SimTime t = 0;
        auto [ptr, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), t);
        if (ec != std::errc() || ptr != fields[0].data() + fields[0].size()) {
            throw Error(ErrorCode::MalformedLog, "record " + std::to_string(record) + ": bad time");
        }
        log.add(t, std::string(fields[1]), std::string(fields[2]), std::string(rest));
    }
    return log;
}

EventLog EventLog::parse(std::string_view text) {
    std::istringstream is{std::string(text)};
    return parse(is);
}

}  // namespace blis
