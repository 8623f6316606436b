#include "olm/kvdoc.hpp"

#include "olm/errors.hpp"
#include "olm/text.hpp"

#include <fstream>
#include <sstream>

namespace olm {

namespace {

bool valid_key(std::string_view key) {
    if (key.empty()) return false;
    for (char c : key) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                  (c >= '0' && c <= '9') || c == '_' || c == '.' || c == '-';
        if (!ok) return false;
    }
    return true;
}

} // namespace

void KvDoc::set(const std::string& key, std::string value) {
    if (!valid_key(key)) throw ValidationError("invalid key: '" + key + "'");
    auto it = index_.find(key);
    if (it != index_.end()) {
        entries_[it->second].second = std::move(value);
        return;
    }
    index_.emplace(key, entries_.size());
    entries_.emplace_back(key, std::move(value));
}

void KvDoc::set_number(const std::string& key, double v) {
    set(key, format_number(v));
}

void KvDoc::set_int(const std::string& key, std::int64_t v) {
    set(key, format_int(v));
}

bool KvDoc::has(const std::string& key) const { return index_.count(key) > 0; }

const std::string* KvDoc::find(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return nullptr;
    return &entries_[it->second].second;
}

const std::string& KvDoc::at(const std::string& key) const {
    const std::string* v = find(key);
    if (!v) throw ValidationError("missing key: '" + key + "'");
    return *v;
}

double KvDoc::number_at(const std::string& key) const {
    return parse_number(at(key));
}

std::int64_t KvDoc::int_at(const std::string& key) const {
    return parse_int(at(key));
}

std::string KvDoc::get_or(const std::string& key, std::string fallback) const {
    const std::string* v = find(key);
    return v ? *v : std::move(fallback);
}

double KvDoc::number_or(const std::string& key, double fallback) const {
    const std::string* v = find(key);
    return v ? parse_number(*v) : fallback;
}

std::int64_t KvDoc::int_or(const std::string& key, std::int64_t fallback) const {
    const std::string* v = find(key);
    return v ? parse_int(*v) : fallback;
}

std::vector<std::string> KvDoc::keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> keys;
    for (const auto& [k, v] : entries_) {
        if (k.rfind(prefix, 0) == 0) keys.push_back(k);
    }
    return keys;
}

KvDoc KvDoc::parse(std::istream& in) {
    KvDoc doc;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv = trim(line);
        if (sv.empty() || sv.front() == '#') continue;
        std::size_t eq = sv.find('=');
        if (eq == std::string_view::npos) {
            throw ValidationError("line " + format_int(static_cast<std::int64_t>(line_no)) +
                                  ": expected 'key = value', got '" + std::string(sv) + "'");
        }
        std::string key(trim(sv.substr(0, eq)));
        std::string value(trim(sv.substr(eq + 1)));
        if (!valid_key(key)) {
            throw ValidationError("line " + format_int(static_cast<std::int64_t>(line_no)) +
                                  ": invalid key '" + key + "'");
        }
        if (doc.has(key)) {
            throw ValidationError("line " + format_int(static_cast<std::int64_t>(line_no)) +
                                  ": duplicate key '" + key + "'");
        }
        doc.set(key, std::move(value));
    }
    return doc;
}

KvDoc KvDoc::parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
}

KvDoc KvDoc::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open file: " + path);
    return parse(in);
}

void KvDoc::write(std::ostream& out) const {
    for (const auto& [k, v] : entries_) {
        out << k << " = " << v << '\n';
    }
}

std::string KvDoc::to_string() const {
    std::ostringstream out;
    write(out);
    return out.str();
}

void KvDoc::save_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write file: " + path);
    write(out);
}

} // namespace olm
