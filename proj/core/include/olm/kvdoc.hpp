#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace olm {

// Ordered key = value document. This is the one text format used for
// configuration, adjustment parameter files, serialized models and the
// machine-readable estimate report. Keys are dotted paths; values are
// opaque strings. Serialization preserves insertion order and round-trips
// exactly.
class KvDoc {
public:
    void set(const std::string& key, std::string value);
    void set_number(const std::string& key, double v);
    void set_int(const std::string& key, std::int64_t v);

    bool has(const std::string& key) const;
    const std::string* find(const std::string& key) const;
    const std::string& at(const std::string& key) const;
    double number_at(const std::string& key) const;
    std::int64_t int_at(const std::string& key) const;

    // Lookup with defaults, for config parsing.
    std::string get_or(const std::string& key, std::string fallback) const;
    double number_or(const std::string& key, double fallback) const;
    std::int64_t int_or(const std::string& key, std::int64_t fallback) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const {
        return entries_;
    }
    std::size_t size() const { return entries_.size(); }

    // Keys beginning with the given prefix, in insertion order.
    std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

    static KvDoc parse(std::istream& in);
    static KvDoc parse_string(const std::string& text);
    static KvDoc load_file(const std::string& path);

    void write(std::ostream& out) const;
    std::string to_string() const;
    void save_file(const std::string& path) const;

    bool operator==(const KvDoc& other) const { return entries_ == other.entries_; }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

} // namespace olm
