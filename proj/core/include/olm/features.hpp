#pragma once

#include "olm/census.hpp"
#include "olm/date.hpp"
#include "olm/matrix.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace olm {

struct TrendsPoint {
    Date date;
    double value = 0;

    bool operator==(const TrendsPoint&) const = default;
};

// Daily search-interest series for one site. Raw series come straight off
// the wire; normalized series hold the pointwise ratio to the batch anchor
// and are comparable across batches sharing that anchor.
struct TrendsSeries {
    std::string site;
    std::vector<TrendsPoint> points; // dates strictly increasing
    std::string anchor_site;         // set once normalized
    bool is_normalized = false;
    // Dates where the anchor's raw value was 0; the ratio is defined as 0
    // there and the date recorded here.
    std::vector<Date> zero_anchor_dates;

    bool operator==(const TrendsSeries&) const = default;
};

inline constexpr std::size_t kFeatureCount = 4;
inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "alexa_rank", "monthly_uniques", "trends_sum", "trends_median"};

// The model's four popularity features for one platform, after imputation.
// imputed flags mark exactly the fields that were absent in the record.
struct FeatureVector {
    double alexa_rank = 0;
    double monthly_uniques = 0;
    double trends_sum = 0;
    double trends_median = 0;
    std::array<bool, kFeatureCount> imputed = {false, false, false, false};

    double operator[](std::size_t i) const;

    bool operator==(const FeatureVector&) const = default;
};

// Per-feature log1p + standardize parameters, fitted on training rows and
// reused verbatim at prediction time.
struct FeatureTransform {
    struct PerFeature {
        double offset = 1.0; // x -> log(x + offset)
        double mean = 0;
        double stddev = 1;

        bool operator==(const PerFeature&) const = default;
    };
    std::array<PerFeature, kFeatureCount> features;

    bool operator==(const FeatureTransform&) const = default;
};

// Divides every series in the batch pointwise by the anchor's raw series.
// The batch must contain the anchor, share one date grid and hold at most
// five series. Anchor dates with raw value 0 yield 0 and are flagged.
std::vector<TrendsSeries> normalize_trends_batch(const std::vector<TrendsSeries>& batch,
                                                 const std::string& anchor);

// (sum, median) of a normalized series' daily values.
std::pair<double, double> summarize_trends(const TrendsSeries& series);

// Largest alexa_rank present anywhere in the census; the imputation value
// for records missing theirs. Throws NoDataError if no record has one.
std::int64_t census_max_alexa(const Census& census);

// Missing-value rules: alexa_rank -> census maximum, everything else -> 0.
// Present values pass through untouched.
FeatureVector impute_missing(const PlatformRecord& record, std::int64_t max_alexa);

struct FitTransformResult {
    FeatureTransform params;
    Matrix transformed;
};

// Fits x -> (log(x+1) - mean) / stddev per feature on the training rows
// (population stddev, divide by n) and returns the transformed matrix.
// Rejects constant feature columns.
FitTransformResult fit_transform(const std::vector<FeatureVector>& training_rows);

Matrix apply_transform(const FeatureTransform& params,
                       const std::vector<FeatureVector>& rows);

std::array<double, kFeatureCount> apply_transform_row(const FeatureTransform& params,
                                                      const FeatureVector& row);

// Inverse of apply_transform; recovers raw feature values.
std::vector<FeatureVector> invert_transform(const FeatureTransform& params,
                                            const Matrix& transformed);

} // namespace olm
