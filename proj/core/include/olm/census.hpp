#pragma once

#include "olm/date.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace olm {

// One platform row of the census. Optional fields stay absent when the
// source file leaves them empty; absence is data (it drives imputation),
// never an error.
struct PlatformRecord {
    std::string name; // unique key within a census
    std::string url;
    std::optional<std::int64_t> registered_count;
    std::optional<std::int64_t> ever_worked_count;
    std::optional<std::int64_t> fulltime_count; // >=10 projects or >=$1000 earned
    std::optional<std::int64_t> alexa_rank;
    std::optional<std::int64_t> monthly_uniques;
    std::optional<double> trends_sum;
    std::optional<double> trends_median;
    std::string source;
    Date observed_at;

    bool operator==(const PlatformRecord&) const = default;
};

struct Census {
    std::vector<PlatformRecord> records;
    // Metadata, carried as '#' comment lines ahead of the header row.
    std::string source_description;
    std::optional<Date> collected_at;

    bool operator==(const Census&) const = default;
};

struct SummaryRow {
    std::int64_t n = 0;
    double mean = 0;
    double median = 0;
    double min = 0;
    double max = 0;

    bool operator==(const SummaryRow&) const = default;
};

enum class CensusField {
    registered_count,
    ever_worked_count,
    fulltime_count,
    alexa_rank,
    monthly_uniques,
    trends_sum,
    trends_median,
};

std::string_view field_name(CensusField f);

inline constexpr const char* kCensusHeader =
    "name,url,registered_count,ever_worked_count,fulltime_count,alexa_rank,"
    "monthly_uniques,trends_sum,trends_median,source,observed_at";

// Parses and validates a census file. Errors carry the 1-based file line of
// the offending row. Rows violating count ordering (ever_worked > registered,
// fulltime > ever_worked) are rejected, not clamped.
Census parse_census(std::istream& in);
Census load_census(const std::string& path);

void serialize_census(const Census& census, std::ostream& out);
void save_census(const Census& census, const std::string& path);

// Descriptive statistics over the records where `field` is present.
// Median of an even-sized set is the midpoint average. Throws NoDataError
// when no record carries the field.
SummaryRow summary_stats(const Census& census, CensusField field);

struct BucketRow {
    std::string label;
    std::int64_t n = 0;
    std::optional<SummaryRow> stats; // absent for empty buckets
};

// Size distribution of registered_count over the fixed buckets
// [0,10k), [10k,100k), [100k,1m), [1m,10m), [10m,inf). Always returns the
// five rows in order; bucket n values sum to summary_stats(...).n.
std::vector<BucketRow> bucket_counts(const Census& census);

// Rounds to `digits` significant digits, half away from zero. 0 maps to 0.
double round_sig(double x, int digits);

} // namespace olm
