#include "olm/csv.hpp"

#include "olm/errors.hpp"
#include "olm/text.hpp"

#include <istream>
#include <ostream>

namespace olm {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    std::size_t i = 0;
    while (i < line.size()) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current += '"';
                    i += 2;
                    continue;
                }
                quoted = false;
                ++i;
            } else {
                current += c;
                ++i;
            }
        } else if (c == '"' && current.empty()) {
            quoted = true;
            ++i;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
            ++i;
        } else if (c == '\r' && i + 1 == line.size()) {
            ++i;
        } else {
            current += c;
            ++i;
        }
    }
    if (quoted) throw ValidationError("unterminated quote in line: " + line);
    fields.push_back(std::move(current));
    return fields;
}

std::string join_csv_line(const std::vector<std::string>& fields) {
    std::vector<std::string> escaped;
    escaped.reserve(fields.size());
    for (const auto& f : fields) {
        if (f.find_first_of(",\"\n") != std::string::npos) {
            std::string q = "\"";
            for (char c : f) {
                if (c == '"') q += "\"\"";
                else q += c;
            }
            q += '"';
            escaped.push_back(std::move(q));
        } else {
            escaped.push_back(f);
        }
    }
    return join(escaped, ",");
}

CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        auto fields = split_csv_line(line);
        if (table.header.empty()) {
            table.header = std::move(fields);
        } else {
            if (fields.size() != table.header.size()) {
                throw ValidationError("line " + format_int(static_cast<std::int64_t>(line_no)) +
                                      ": expected " + format_int(static_cast<std::int64_t>(table.header.size())) +
                                      " fields, got " + format_int(static_cast<std::int64_t>(fields.size())));
            }
            table.rows.push_back(std::move(fields));
        }
    }
    if (table.header.empty()) throw ValidationError("empty delimited file");
    return table;
}

void write_csv(std::ostream& out, const CsvTable& table) {
    out << join_csv_line(table.header) << '\n';
    for (const auto& row : table.rows) {
        out << join_csv_line(row) << '\n';
    }
}

} // namespace olm
