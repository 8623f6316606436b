#include "olm/features.hpp"

#include "olm/errors.hpp"
#include "olm/text.hpp"

#include <algorithm>
#include <cmath>

namespace olm {

double FeatureVector::operator[](std::size_t i) const {
    switch (i) {
    case 0: return alexa_rank;
    case 1: return monthly_uniques;
    case 2: return trends_sum;
    case 3: return trends_median;
    }
    throw InternalError("feature index out of range");
}

namespace {

void check_grid(const TrendsSeries& a, const TrendsSeries& b) {
    if (a.points.size() != b.points.size()) {
        throw ValidationError("trends series '" + a.site + "' and '" + b.site +
                              "' have different date grids");
    }
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        if (a.points[i].date != b.points[i].date) {
            throw ValidationError("trends series '" + a.site + "' and '" + b.site +
                                  "' have different date grids");
        }
    }
}

void check_increasing(const TrendsSeries& s) {
    for (std::size_t i = 1; i < s.points.size(); ++i) {
        if (!(s.points[i - 1].date < s.points[i].date)) {
            throw ValidationError("trends series '" + s.site +
                                  "' dates are not strictly increasing");
        }
    }
}

double set_feature(FeatureVector& fv, std::size_t i, double v) {
    switch (i) {
    case 0: return fv.alexa_rank = v;
    case 1: return fv.monthly_uniques = v;
    case 2: return fv.trends_sum = v;
    case 3: return fv.trends_median = v;
    }
    throw InternalError("feature index out of range");
}

} // namespace

std::vector<TrendsSeries> normalize_trends_batch(const std::vector<TrendsSeries>& batch,
                                                 const std::string& anchor) {
    if (batch.size() > 5) {
        throw ValidationError("trends batch holds " + format_int(static_cast<std::int64_t>(batch.size())) +
                              " series; the service compares at most 5 terms");
    }
    const TrendsSeries* anchor_series = nullptr;
    for (const auto& s : batch) {
        check_increasing(s);
        if (s.site == anchor) anchor_series = &s;
    }
    if (!anchor_series) {
        throw ValidationError("anchor '" + anchor + "' not present in trends batch");
    }
    for (const auto& s : batch) check_grid(*anchor_series, s);

    std::vector<TrendsSeries> out;
    out.reserve(batch.size());
    for (const auto& s : batch) {
        TrendsSeries norm;
        norm.site = s.site;
        norm.anchor_site = anchor;
        norm.is_normalized = true;
        norm.points.reserve(s.points.size());
        for (std::size_t i = 0; i < s.points.size(); ++i) {
            double a = anchor_series->points[i].value;
            double v;
            if (a == 0) {
                v = 0; // ratio undefined; defined as 0 and flagged
                norm.zero_anchor_dates.push_back(s.points[i].date);
            } else {
                v = s.points[i].value / a;
            }
            norm.points.push_back({s.points[i].date, v});
        }
        out.push_back(std::move(norm));
    }
    return out;
}

std::pair<double, double> summarize_trends(const TrendsSeries& series) {
    if (series.points.empty()) {
        throw NoDataError("cannot summarize an empty trends series for '" + series.site + "'");
    }
    if (!series.is_normalized) {
        throw ValidationError("trends series '" + series.site + "' is not normalized");
    }
    double sum = 0;
    std::vector<double> values;
    values.reserve(series.points.size());
    for (const auto& p : series.points) {
        sum += p.value;
        values.push_back(p.value);
    }
    std::sort(values.begin(), values.end());
    std::size_t n = values.size();
    double median = (n % 2 == 1) ? values[n / 2]
                                 : (values[n / 2 - 1] + values[n / 2]) / 2.0;
    return {sum, median};
}

std::int64_t census_max_alexa(const Census& census) {
    std::int64_t max_rank = 0;
    bool any = false;
    for (const auto& r : census.records) {
        if (r.alexa_rank) {
            any = true;
            max_rank = std::max(max_rank, *r.alexa_rank);
        }
    }
    if (!any) throw NoDataError("no record has alexa_rank present");
    return max_rank;
}

FeatureVector impute_missing(const PlatformRecord& record, std::int64_t max_alexa) {
    if (max_alexa < 1) throw ValidationError("census maximum alexa rank must be >= 1");
    FeatureVector fv;
    if (record.alexa_rank) {
        fv.alexa_rank = static_cast<double>(*record.alexa_rank);
    } else {
        fv.alexa_rank = static_cast<double>(max_alexa);
        fv.imputed[0] = true;
    }
    if (record.monthly_uniques) {
        fv.monthly_uniques = static_cast<double>(*record.monthly_uniques);
    } else {
        fv.monthly_uniques = 0;
        fv.imputed[1] = true;
    }
    if (record.trends_sum) {
        fv.trends_sum = *record.trends_sum;
    } else {
        fv.trends_sum = 0;
        fv.imputed[2] = true;
    }
    if (record.trends_median) {
        fv.trends_median = *record.trends_median;
    } else {
        fv.trends_median = 0;
        fv.imputed[3] = true;
    }
    return fv;
}

FitTransformResult fit_transform(const std::vector<FeatureVector>& training_rows) {
    const std::size_t n = training_rows.size();
    if (n < 2) throw ValidationError("fit_transform needs at least 2 rows");

    FitTransformResult result;
    Matrix logs(n, kFeatureCount);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < kFeatureCount; ++c) {
            double x = training_rows[r][c];
            if (x < 0 || !std::isfinite(x)) {
                throw ValidationError("feature '" + std::string(kFeatureNames[c]) +
                                      "' must be finite and >= 0 before the log transform");
            }
            logs.at(r, c) = std::log1p(x);
        }
    }

    for (std::size_t c = 0; c < kFeatureCount; ++c) {
        double lo = logs.at(0, c), hi = lo;
        double sum = 0;
        for (std::size_t r = 0; r < n; ++r) {
            double v = logs.at(r, c);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
        }
        // Checked on the raw values: the accumulated stddev of identical
        // values can come out a few ulp above zero.
        if (lo == hi) {
            throw ValidationError("feature '" + std::string(kFeatureNames[c]) +
                                  "' is constant across training rows; cannot standardize");
        }
        double mean = sum / static_cast<double>(n);
        double ss = 0;
        for (std::size_t r = 0; r < n; ++r) {
            double d = logs.at(r, c) - mean;
            ss += d * d;
        }
        double stddev = std::sqrt(ss / static_cast<double>(n)); // population convention
        if (stddev == 0) {
            throw ValidationError("feature '" + std::string(kFeatureNames[c]) +
                                  "' is constant across training rows; cannot standardize");
        }
        result.params.features[c].mean = mean;
        result.params.features[c].stddev = stddev;
    }

    result.transformed = Matrix(n, kFeatureCount);
    for (std::size_t r = 0; r < n; ++r) {
        auto row = apply_transform_row(result.params, training_rows[r]);
        for (std::size_t c = 0; c < kFeatureCount; ++c) result.transformed.at(r, c) = row[c];
    }
    return result;
}

std::array<double, kFeatureCount> apply_transform_row(const FeatureTransform& params,
                                                      const FeatureVector& row) {
    std::array<double, kFeatureCount> out{};
    for (std::size_t c = 0; c < kFeatureCount; ++c) {
        double x = row[c];
        if (x < 0 || !std::isfinite(x)) {
            throw ValidationError("feature '" + std::string(kFeatureNames[c]) +
                                  "' must be finite and >= 0 before the log transform");
        }
        const auto& p = params.features[c];
        out[c] = (std::log1p(x) - p.mean) / p.stddev;
    }
    return out;
}

Matrix apply_transform(const FeatureTransform& params,
                       const std::vector<FeatureVector>& rows) {
    Matrix m(rows.size(), kFeatureCount);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        auto row = apply_transform_row(params, rows[r]);
        for (std::size_t c = 0; c < kFeatureCount; ++c) m.at(r, c) = row[c];
    }
    return m;
}

std::vector<FeatureVector> invert_transform(const FeatureTransform& params,
                                            const Matrix& transformed) {
    if (transformed.cols() != kFeatureCount) {
        throw ValidationError("transformed matrix must have 4 columns");
    }
    std::vector<FeatureVector> rows(transformed.rows());
    for (std::size_t r = 0; r < transformed.rows(); ++r) {
        for (std::size_t c = 0; c < kFeatureCount; ++c) {
            const auto& p = params.features[c];
            double x = std::expm1(transformed.at(r, c) * p.stddev + p.mean);
            set_feature(rows[r], c, x);
        }
    }
    return rows;
}

} // namespace olm
