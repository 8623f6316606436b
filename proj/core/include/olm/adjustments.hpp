#pragma once

#include "olm/census.hpp"
#include "olm/kvdoc.hpp"

#include <cstdint>
#include <span>
#include <string>

namespace olm::adjust {

// How a BandedParam's error band was produced; carried for audit output.
enum class BandMethod {
    MinMax,             // extremes of the per-platform ratios
    Percentile25975,    // nearest-rank 2.5th / 97.5th percentiles
    Normal196Se,        // value +/- 1.96 * standard error
    BootstrapPercentile // percentile interval from bootstrap replicates
};

std::string band_method_name(BandMethod method);
BandMethod band_method_from_name(const std::string& name);

struct BandedParam {
    double value = 0;
    double lower = 0;
    double upper = 0;
    BandMethod method = BandMethod::MinMax;

    bool operator==(const BandedParam&) const = default;
};

// lower <= value <= upper, except that a bootstrap percentile band is not
// guaranteed to contain the point estimate (only lower <= upper holds).
void validate_banded(const BandedParam& p, const std::string& name);

enum class MultiworkingDirection { Multiply, Divide };

std::string direction_name(MultiworkingDirection d);
MultiworkingDirection direction_from_name(const std::string& name);

// The four survey-derived corrections applied after the registered-profile
// total: share that ever worked, share working full-time, average number
// of platforms per worker, and the proportion of workers sharing accounts
// (with the direction in which that correction is applied).
struct AdjustmentParams {
    BandedParam ever_worked_share;  // in [0, 1]
    BandedParam fulltime_share;     // in [0, 1]
    BandedParam multihoming_mean;   // >= 1
    BandedParam multiworking_prop;  // in [0, 1]
    MultiworkingDirection multiworking_direction = MultiworkingDirection::Divide;

    void validate() const;

    bool operator==(const AdjustmentParams&) const = default;
};

struct UpperBounds {
    double registered = 0;
    double ever_worked = 0;
    double fulltime = 0;

    bool operator==(const UpperBounds&) const = default;
};

// Every stage of the headline computation, raw precision throughout;
// rounding happens only in rounded_report copies.
struct EstimateReport {
    double registered_observed = 0;
    BandedParam registered_predicted;
    double registered_total = 0;
    BandedParam ever_worked; // absolute counts; band = total x share band
    BandedParam fulltime;
    double ever_worked_after_multihoming = 0;
    double fulltime_after_multihoming = 0;
    double ever_worked_after_multiworking = 0;
    double fulltime_after_multiworking = 0;
    UpperBounds upper_bounds;
    AdjustmentParams params; // inputs echoed so the report is self-contained

    bool operator==(const EstimateReport&) const = default;
};

// Unweighted mean of per-platform numerator/registered ratios with a
// min-max band. Qualifying records have both counts present and a
// positive registered count.
BandedParam estimate_share(const Census& census, CensusField numerator_field);

// Mean platforms-per-worker with a nearest-rank 2.5/97.5 percentile band.
BandedParam multihoming_param(std::span<const double> platform_counts);

// Survey proportion with a +/- 1.96 SE band, clipped to [0, 1].
BandedParam multiworking_param(double p_hat, std::int64_t respondents);

// Runs the full chain: total = observed + predicted, shares applied to the
// total, division by the multi-homing mean, then the multi-working factor
// (1 + prop) applied in the configured direction. Upper bounds combine the
// upper predicted count with point shares unless pessimistic_upper, which
// uses the upper shares as well.
EstimateReport cascade(double observed_sum, const BandedParam& predicted,
                       const AdjustmentParams& params, bool pessimistic_upper = false);

UpperBounds propagate_upper(double observed_sum, double predicted_upper,
                            double ever_worked_share, double fulltime_share);

// Scale a partial platform total to a market estimate under an assumed
// coverage share.
double rule_of_thumb(double top_platform_sum, double assumed_share);

// Copy of the report with every absolute count rounded to the given number
// of significant digits; shares and factors in params stay exact.
EstimateReport rounded_report(const EstimateReport& report, int digits = 2);

KvDoc params_to_kv(const AdjustmentParams& params);
AdjustmentParams params_from_kv(const KvDoc& doc);

// Raw and rounded report fields under one document; round-trips through
// report_from_kv (which reads only the raw fields).
KvDoc report_to_kv(const EstimateReport& report, int round_digits = 2);
EstimateReport report_from_kv(const KvDoc& doc);

} // namespace olm::adjust
