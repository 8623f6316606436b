#include "olm/census.hpp"

#include "olm/csv.hpp"
#include "olm/errors.hpp"
#include "olm/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_set>

namespace olm {

namespace {

std::string line_tag(std::size_t line_no) {
    return "line " + format_int(static_cast<std::int64_t>(line_no));
}

std::optional<std::int64_t> parse_opt_count(const std::string& field, const std::string& what,
                                            std::size_t line_no) {
    if (trim(field).empty()) return std::nullopt;
    std::int64_t v;
    try {
        v = parse_int(field);
    } catch (const ValidationError&) {
        throw ValidationError(line_tag(line_no) + ": " + what + " is not an integer: '" + field + "'");
    }
    if (v < 0) {
        throw ValidationError(line_tag(line_no) + ": negative " + what + " (" + field + ")");
    }
    return v;
}

std::optional<double> parse_opt_real(const std::string& field, const std::string& what,
                                     std::size_t line_no) {
    if (trim(field).empty()) return std::nullopt;
    double v;
    try {
        v = parse_number(field);
    } catch (const ValidationError&) {
        throw ValidationError(line_tag(line_no) + ": " + what + " is not a number: '" + field + "'");
    }
    if (v < 0 || !std::isfinite(v)) {
        throw ValidationError(line_tag(line_no) + ": negative " + what + " (" + field + ")");
    }
    return v;
}

std::string opt_int_field(const std::optional<std::int64_t>& v) {
    return v ? format_int(*v) : std::string();
}

std::string opt_real_field(const std::optional<double>& v) {
    return v ? format_number(*v) : std::string();
}

double median_of_sorted(const std::vector<double>& sorted) {
    std::size_t n = sorted.size();
    if (n % 2 == 1) return sorted[n / 2];
    return (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
}

SummaryRow summarize_values(std::vector<double> values) {
    SummaryRow row;
    row.n = static_cast<std::int64_t>(values.size());
    double sum = 0;
    for (double v : values) sum += v;
    row.mean = sum / static_cast<double>(values.size());
    std::sort(values.begin(), values.end());
    row.median = median_of_sorted(values);
    row.min = values.front();
    row.max = values.back();
    return row;
}

std::vector<double> collect_field(const Census& census, CensusField field) {
    std::vector<double> values;
    for (const auto& r : census.records) {
        switch (field) {
        case CensusField::registered_count:
            if (r.registered_count) values.push_back(static_cast<double>(*r.registered_count));
            break;
        case CensusField::ever_worked_count:
            if (r.ever_worked_count) values.push_back(static_cast<double>(*r.ever_worked_count));
            break;
        case CensusField::fulltime_count:
            if (r.fulltime_count) values.push_back(static_cast<double>(*r.fulltime_count));
            break;
        case CensusField::alexa_rank:
            if (r.alexa_rank) values.push_back(static_cast<double>(*r.alexa_rank));
            break;
        case CensusField::monthly_uniques:
            if (r.monthly_uniques) values.push_back(static_cast<double>(*r.monthly_uniques));
            break;
        case CensusField::trends_sum:
            if (r.trends_sum) values.push_back(*r.trends_sum);
            break;
        case CensusField::trends_median:
            if (r.trends_median) values.push_back(*r.trends_median);
            break;
        }
    }
    return values;
}

} // namespace

std::string_view field_name(CensusField f) {
    switch (f) {
    case CensusField::registered_count: return "registered_count";
    case CensusField::ever_worked_count: return "ever_worked_count";
    case CensusField::fulltime_count: return "fulltime_count";
    case CensusField::alexa_rank: return "alexa_rank";
    case CensusField::monthly_uniques: return "monthly_uniques";
    case CensusField::trends_sum: return "trends_sum";
    case CensusField::trends_median: return "trends_median";
    }
    throw InternalError("unknown census field");
}

Census parse_census(std::istream& in) {
    Census census;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::unordered_set<std::string> names;

    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv = trim(line);
        if (sv.empty()) continue;
        if (!header_seen && sv.front() == '#') {
            // Optional metadata block ahead of the header.
            std::string_view body = trim(sv.substr(1));
            std::size_t eq = body.find('=');
            if (eq != std::string_view::npos) {
                std::string key(trim(body.substr(0, eq)));
                std::string value(trim(body.substr(eq + 1)));
                if (key == "source") census.source_description = value;
                else if (key == "collected") census.collected_at = parse_date(value);
            }
            continue;
        }
        if (!header_seen) {
            if (std::string(sv) != kCensusHeader) {
                throw ValidationError(line_tag(line_no) + ": unexpected census header; expected '" +
                                      std::string(kCensusHeader) + "'");
            }
            header_seen = true;
            continue;
        }

        auto fields = split_csv_line(line);
        if (fields.size() != 11) {
            throw ValidationError(line_tag(line_no) + ": expected 11 fields, got " +
                                  format_int(static_cast<std::int64_t>(fields.size())));
        }

        PlatformRecord r;
        r.name = std::string(trim(fields[0]));
        r.url = std::string(trim(fields[1]));
        if (r.name.empty()) throw ValidationError(line_tag(line_no) + ": empty platform name");
        if (r.url.empty()) throw ValidationError(line_tag(line_no) + ": empty url for '" + r.name + "'");
        if (!names.insert(r.name).second) {
            throw ValidationError(line_tag(line_no) + ": duplicate platform name '" + r.name + "'");
        }

        r.registered_count = parse_opt_count(fields[2], "registered_count", line_no);
        r.ever_worked_count = parse_opt_count(fields[3], "ever_worked_count", line_no);
        r.fulltime_count = parse_opt_count(fields[4], "fulltime_count", line_no);
        r.alexa_rank = parse_opt_count(fields[5], "alexa_rank", line_no);
        r.monthly_uniques = parse_opt_count(fields[6], "monthly_uniques", line_no);
        r.trends_sum = parse_opt_real(fields[7], "trends_sum", line_no);
        r.trends_median = parse_opt_real(fields[8], "trends_median", line_no);
        r.source = fields[9];
        try {
            r.observed_at = parse_date(trim(fields[10]));
        } catch (const ValidationError& e) {
            throw ValidationError(line_tag(line_no) + ": " + e.what());
        }

        if (r.alexa_rank && *r.alexa_rank < 1) {
            throw ValidationError(line_tag(line_no) + ": alexa_rank must be >= 1 for '" + r.name + "'");
        }
        if (r.registered_count && r.ever_worked_count &&
            *r.ever_worked_count > *r.registered_count) {
            throw ValidationError(line_tag(line_no) + ": ever_worked_count " +
                                  format_int(*r.ever_worked_count) + " exceeds registered_count " +
                                  format_int(*r.registered_count) + " for '" + r.name + "'");
        }
        if (r.ever_worked_count && r.fulltime_count &&
            *r.fulltime_count > *r.ever_worked_count) {
            throw ValidationError(line_tag(line_no) + ": fulltime_count " +
                                  format_int(*r.fulltime_count) + " exceeds ever_worked_count " +
                                  format_int(*r.ever_worked_count) + " for '" + r.name + "'");
        }

        census.records.push_back(std::move(r));
    }

    if (!header_seen) throw ValidationError("census file has no header row");
    return census;
}

Census load_census(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open census file: " + path);
    return parse_census(in);
}

void serialize_census(const Census& census, std::ostream& out) {
    if (!census.source_description.empty()) {
        out << "# source = " << census.source_description << '\n';
    }
    if (census.collected_at) {
        out << "# collected = " << format_date(*census.collected_at) << '\n';
    }
    out << kCensusHeader << '\n';
    for (const auto& r : census.records) {
        std::vector<std::string> fields = {
            r.name,
            r.url,
            opt_int_field(r.registered_count),
            opt_int_field(r.ever_worked_count),
            opt_int_field(r.fulltime_count),
            opt_int_field(r.alexa_rank),
            opt_int_field(r.monthly_uniques),
            opt_real_field(r.trends_sum),
            opt_real_field(r.trends_median),
            r.source,
            format_date(r.observed_at),
        };
        out << join_csv_line(fields) << '\n';
    }
}

void save_census(const Census& census, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write census file: " + path);
    serialize_census(census, out);
}

SummaryRow summary_stats(const Census& census, CensusField field) {
    auto values = collect_field(census, field);
    if (values.empty()) {
        throw NoDataError("no record has " + std::string(field_name(field)) + " present");
    }
    return summarize_values(std::move(values));
}

std::vector<BucketRow> bucket_counts(const Census& census) {
    auto values = collect_field(census, CensusField::registered_count);
    if (values.empty()) throw NoDataError("no record has registered_count present");

    struct Bucket {
        const char* label;
        double lo, hi;
    };
    static constexpr Bucket kBuckets[] = {
        {"<10k", 0.0, 1e4},
        {"10k-100k", 1e4, 1e5},
        {"100k-1m", 1e5, 1e6},
        {"1m-10m", 1e6, 1e7},
        {">10m", 1e7, std::numeric_limits<double>::infinity()},
    };

    std::vector<BucketRow> rows;
    for (const auto& b : kBuckets) {
        std::vector<double> in_bucket;
        for (double v : values) {
            if (v >= b.lo && v < b.hi) in_bucket.push_back(v);
        }
        BucketRow row;
        row.label = b.label;
        row.n = static_cast<std::int64_t>(in_bucket.size());
        if (!in_bucket.empty()) row.stats = summarize_values(std::move(in_bucket));
        rows.push_back(std::move(row));
    }
    return rows;
}

double round_sig(double x, int digits) {
    if (digits < 1) throw ValidationError("significant digits must be >= 1");
    if (x == 0 || !std::isfinite(x)) return x;

    double ax = std::abs(x);
    int exp = static_cast<int>(std::floor(std::log10(ax)));
    int shift = digits - 1 - exp;
    long double scaled = static_cast<long double>(ax) * powl(10.0L, shift);
    // log10 can land one off at decade boundaries; renormalize into
    // [10^(digits-1), 10^digits).
    const long double hi = powl(10.0L, digits);
    const long double lo = hi / 10.0L;
    while (scaled >= hi) {
        scaled /= 10.0L;
        --shift;
    }
    while (scaled < lo) {
        scaled *= 10.0L;
        ++shift;
    }
    long double rounded = floorl(scaled + 0.5L); // ties away from zero
    double result = static_cast<double>(rounded * powl(10.0L, -shift));
    return x < 0 ? -result : result;
}

} // namespace olm
