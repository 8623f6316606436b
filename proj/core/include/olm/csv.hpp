#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace olm {

// Minimal delimited-text support shared by the census file, feature matrix
// exports and figure emitters. Fields containing the delimiter, quotes or
// newlines are double-quoted on write; embedded newlines are not supported
// on read (one record per line).

std::vector<std::string> split_csv_line(const std::string& line);
std::string join_csv_line(const std::vector<std::string>& fields);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// Reads header + rows; rejects rows whose field count differs from the
// header's. Line numbers in errors are 1-based file lines.
CsvTable read_csv(std::istream& in);

void write_csv(std::ostream& out, const CsvTable& table);

} // namespace olm
