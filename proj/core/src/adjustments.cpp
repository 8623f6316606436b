#include "olm/adjustments.hpp"

#include "olm/bootstrap.hpp"
#include "olm/errors.hpp"
#include "olm/text.hpp"

#include <algorithm>
#include <cmath>

namespace olm::adjust {

namespace {

void require_finite(double v, const std::string& name) {
    if (!std::isfinite(v)) throw ValidationError(name + " must be finite");
}

void validate_share(const BandedParam& p, const std::string& name) {
    validate_banded(p, name);
    if (p.lower < 0 || p.upper > 1) {
        throw ValidationError(name + " band must stay in [0, 1]");
    }
}

double apply_multiworking(double x, double prop, MultiworkingDirection direction) {
    double factor = 1.0 + prop;
    return direction == MultiworkingDirection::Multiply ? x * factor : x / factor;
}

} // namespace

std::string band_method_name(BandMethod method) {
    switch (method) {
        case BandMethod::MinMax: return "min-max";
        case BandMethod::Percentile25975: return "percentile-2.5-97.5";
        case BandMethod::Normal196Se: return "normal-1.96-se";
        case BandMethod::BootstrapPercentile: return "bootstrap-percentile";
    }
    throw InternalError("unhandled band method");
}

BandMethod band_method_from_name(const std::string& name) {
    if (name == "min-max") return BandMethod::MinMax;
    if (name == "percentile-2.5-97.5") return BandMethod::Percentile25975;
    if (name == "normal-1.96-se") return BandMethod::Normal196Se;
    if (name == "bootstrap-percentile") return BandMethod::BootstrapPercentile;
    throw ValidationError("unknown band method '" + name + "'");
}

std::string direction_name(MultiworkingDirection d) {
    return d == MultiworkingDirection::Multiply ? "multiply" : "divide";
}

MultiworkingDirection direction_from_name(const std::string& name) {
    if (name == "multiply") return MultiworkingDirection::Multiply;
    if (name == "divide") return MultiworkingDirection::Divide;
    throw ValidationError("multiworking direction must be multiply or divide, got '" + name +
                          "'");
}

void validate_banded(const BandedParam& p, const std::string& name) {
    require_finite(p.value, name + ".value");
    require_finite(p.lower, name + ".lower");
    require_finite(p.upper, name + ".upper");
    if (p.lower > p.upper) {
        throw ValidationError(name + ": lower " + format_number(p.lower) + " exceeds upper " +
                              format_number(p.upper));
    }
    if (p.method != BandMethod::BootstrapPercentile &&
        (p.value < p.lower || p.value > p.upper)) {
        throw ValidationError(name + ": value " + format_number(p.value) +
                              " outside band [" + format_number(p.lower) + ", " +
                              format_number(p.upper) + "]");
    }
}

void AdjustmentParams::validate() const {
    validate_share(ever_worked_share, "ever_worked_share");
    validate_share(fulltime_share, "fulltime_share");
    validate_banded(multihoming_mean, "multihoming_mean");
    if (multihoming_mean.lower < 1) {
        throw ValidationError("multihoming_mean must be >= 1 across its band");
    }
    validate_share(multiworking_prop, "multiworking_prop");
}

BandedParam estimate_share(const Census& census, CensusField numerator_field) {
    std::optional<std::int64_t> PlatformRecord::*member = nullptr;
    switch (numerator_field) {
        case CensusField::ever_worked_count: member = &PlatformRecord::ever_worked_count; break;
        case CensusField::fulltime_count: member = &PlatformRecord::fulltime_count; break;
        default:
            throw ValidationError("share numerator must be ever_worked_count or fulltime_count, "
                                  "got " + std::string(field_name(numerator_field)));
    }

    std::vector<double> ratios;
    for (const PlatformRecord& rec : census.records) {
        if (!rec.registered_count || *rec.registered_count <= 0) continue;
        if (!(rec.*member)) continue;
        ratios.push_back(static_cast<double>(*(rec.*member)) /
                         static_cast<double>(*rec.registered_count));
    }
    if (ratios.empty()) {
        throw NoDataError("no record carries both registered_count and " +
                          std::string(field_name(numerator_field)));
    }

    BandedParam p;
    p.method = BandMethod::MinMax;
    double sum = 0;
    p.lower = ratios.front();
    p.upper = ratios.front();
    for (double r : ratios) {
        sum += r;
        p.lower = std::min(p.lower, r);
        p.upper = std::max(p.upper, r);
    }
    p.value = sum / static_cast<double>(ratios.size());
    return p;
}

BandedParam multihoming_param(std::span<const double> platform_counts) {
    if (platform_counts.empty()) throw NoDataError("no multi-homing responses");
    double sum = 0;
    for (double c : platform_counts) {
        if (!std::isfinite(c) || c < 1) {
            throw ValidationError("platform counts must be >= 1, got " + format_number(c));
        }
        sum += c;
    }
    BandedParam p;
    p.method = BandMethod::Percentile25975;
    p.value = sum / static_cast<double>(platform_counts.size());
    p.lower = bootstrap::percentile(platform_counts, 0.025);
    p.upper = bootstrap::percentile(platform_counts, 0.975);
    return p;
}

BandedParam multiworking_param(double p_hat, std::int64_t respondents) {
    if (!(p_hat >= 0) || !(p_hat <= 1)) {
        throw ValidationError("proportion must be in [0, 1], got " + format_number(p_hat));
    }
    if (respondents < 1) throw ValidationError("respondent count must be >= 1");
    double se = std::sqrt(p_hat * (1.0 - p_hat) / static_cast<double>(respondents));
    BandedParam p;
    p.method = BandMethod::Normal196Se;
    p.value = p_hat;
    p.lower = std::max(0.0, p_hat - 1.96 * se);
    p.upper = std::min(1.0, p_hat + 1.96 * se);
    return p;
}

UpperBounds propagate_upper(double observed_sum, double predicted_upper,
                            double ever_worked_share, double fulltime_share) {
    require_finite(observed_sum, "observed_sum");
    require_finite(predicted_upper, "predicted_upper");
    if (observed_sum < 0 || predicted_upper < 0) {
        throw ValidationError("counts must be >= 0");
    }
    UpperBounds u;
    u.registered = observed_sum + predicted_upper;
    u.ever_worked = u.registered * ever_worked_share;
    u.fulltime = u.registered * fulltime_share;
    return u;
}

EstimateReport cascade(double observed_sum, const BandedParam& predicted,
                       const AdjustmentParams& params, bool pessimistic_upper) {
    require_finite(observed_sum, "observed_sum");
    if (observed_sum < 0) throw ValidationError("observed_sum must be >= 0");
    validate_banded(predicted, "registered_predicted");
    if (predicted.lower < 0) throw ValidationError("predicted counts must be >= 0");
    params.validate();

    EstimateReport rep;
    rep.registered_observed = observed_sum;
    rep.registered_predicted = predicted;
    rep.params = params;
    rep.registered_total = observed_sum + predicted.value;

    auto scaled = [&](const BandedParam& share) {
        BandedParam out;
        out.method = share.method;
        out.value = rep.registered_total * share.value;
        out.lower = rep.registered_total * share.lower;
        out.upper = rep.registered_total * share.upper;
        return out;
    };
    rep.ever_worked = scaled(params.ever_worked_share);
    rep.fulltime = scaled(params.fulltime_share);

    rep.ever_worked_after_multihoming = rep.ever_worked.value / params.multihoming_mean.value;
    rep.fulltime_after_multihoming = rep.fulltime.value / params.multihoming_mean.value;

    rep.ever_worked_after_multiworking =
        apply_multiworking(rep.ever_worked_after_multihoming, params.multiworking_prop.value,
                           params.multiworking_direction);
    rep.fulltime_after_multiworking =
        apply_multiworking(rep.fulltime_after_multihoming, params.multiworking_prop.value,
                           params.multiworking_direction);

    double ever_share = pessimistic_upper ? params.ever_worked_share.upper
                                          : params.ever_worked_share.value;
    double fulltime_share = pessimistic_upper ? params.fulltime_share.upper
                                              : params.fulltime_share.value;
    rep.upper_bounds = propagate_upper(observed_sum, predicted.upper, ever_share, fulltime_share);
    return rep;
}

double rule_of_thumb(double top_platform_sum, double assumed_share) {
    require_finite(top_platform_sum, "top_platform_sum");
    if (!(top_platform_sum > 0)) throw ValidationError("platform sum must be positive");
    if (!(assumed_share > 0) || assumed_share > 1) {
        throw ValidationError("assumed share must be in (0, 1], got " +
                              format_number(assumed_share));
    }
    return top_platform_sum / assumed_share;
}

EstimateReport rounded_report(const EstimateReport& report, int digits) {
    EstimateReport r = report;
    auto rd = [digits](double v) { return round_sig(v, digits); };
    auto rd_band = [&](BandedParam& p) {
        p.value = rd(p.value);
        p.lower = rd(p.lower);
        p.upper = rd(p.upper);
    };
    r.registered_observed = rd(r.registered_observed);
    rd_band(r.registered_predicted);
    // The printed total is the sum of the printed components, so it can
    // carry one more significant digit than either part.
    r.registered_total = r.registered_observed + r.registered_predicted.value;
    rd_band(r.ever_worked);
    rd_band(r.fulltime);
    r.ever_worked_after_multihoming = rd(r.ever_worked_after_multihoming);
    r.fulltime_after_multihoming = rd(r.fulltime_after_multihoming);
    r.ever_worked_after_multiworking = rd(r.ever_worked_after_multiworking);
    r.fulltime_after_multiworking = rd(r.fulltime_after_multiworking);
    r.upper_bounds.registered = r.registered_observed + r.registered_predicted.upper;
    r.upper_bounds.ever_worked = rd(r.upper_bounds.ever_worked);
    r.upper_bounds.fulltime = rd(r.upper_bounds.fulltime);
    return r;
}

namespace {

void banded_to_kv(KvDoc& doc, const std::string& prefix, const BandedParam& p) {
    doc.set_number(prefix + ".value", p.value);
    doc.set_number(prefix + ".lower", p.lower);
    doc.set_number(prefix + ".upper", p.upper);
    doc.set(prefix + ".method", band_method_name(p.method));
}

BandedParam banded_from_kv(const KvDoc& doc, const std::string& prefix) {
    BandedParam p;
    p.value = doc.number_at(prefix + ".value");
    p.lower = doc.number_at(prefix + ".lower");
    p.upper = doc.number_at(prefix + ".upper");
    p.method = band_method_from_name(doc.at(prefix + ".method"));
    return p;
}

void counts_to_kv(KvDoc& doc, const std::string& prefix, const EstimateReport& r) {
    doc.set_number(prefix + ".registered.observed", r.registered_observed);
    banded_to_kv(doc, prefix + ".registered.predicted", r.registered_predicted);
    doc.set_number(prefix + ".registered.total", r.registered_total);
    banded_to_kv(doc, prefix + ".ever_worked", r.ever_worked);
    banded_to_kv(doc, prefix + ".fulltime", r.fulltime);
    doc.set_number(prefix + ".after_multihoming.ever_worked", r.ever_worked_after_multihoming);
    doc.set_number(prefix + ".after_multihoming.fulltime", r.fulltime_after_multihoming);
    doc.set_number(prefix + ".after_multiworking.ever_worked", r.ever_worked_after_multiworking);
    doc.set_number(prefix + ".after_multiworking.fulltime", r.fulltime_after_multiworking);
    doc.set_number(prefix + ".upper.registered", r.upper_bounds.registered);
    doc.set_number(prefix + ".upper.ever_worked", r.upper_bounds.ever_worked);
    doc.set_number(prefix + ".upper.fulltime", r.upper_bounds.fulltime);
}

} // namespace

KvDoc params_to_kv(const AdjustmentParams& params) {
    KvDoc doc;
    banded_to_kv(doc, "adjust.ever_worked_share", params.ever_worked_share);
    banded_to_kv(doc, "adjust.fulltime_share", params.fulltime_share);
    banded_to_kv(doc, "adjust.multihoming_mean", params.multihoming_mean);
    banded_to_kv(doc, "adjust.multiworking_prop", params.multiworking_prop);
    doc.set("adjust.multiworking_direction", direction_name(params.multiworking_direction));
    return doc;
}

AdjustmentParams params_from_kv(const KvDoc& doc) {
    AdjustmentParams params;
    params.ever_worked_share = banded_from_kv(doc, "adjust.ever_worked_share");
    params.fulltime_share = banded_from_kv(doc, "adjust.fulltime_share");
    params.multihoming_mean = banded_from_kv(doc, "adjust.multihoming_mean");
    params.multiworking_prop = banded_from_kv(doc, "adjust.multiworking_prop");
    params.multiworking_direction =
        direction_from_name(doc.at("adjust.multiworking_direction"));
    params.validate();
    return params;
}

KvDoc report_to_kv(const EstimateReport& report, int round_digits) {
    KvDoc doc;
    counts_to_kv(doc, "estimate", report);
    banded_to_kv(doc, "estimate.params.ever_worked_share", report.params.ever_worked_share);
    banded_to_kv(doc, "estimate.params.fulltime_share", report.params.fulltime_share);
    banded_to_kv(doc, "estimate.params.multihoming_mean", report.params.multihoming_mean);
    banded_to_kv(doc, "estimate.params.multiworking_prop", report.params.multiworking_prop);
    doc.set("estimate.params.multiworking_direction",
            direction_name(report.params.multiworking_direction));
    counts_to_kv(doc, "estimate.rounded", rounded_report(report, round_digits));
    return doc;
}

EstimateReport report_from_kv(const KvDoc& doc) {
    EstimateReport r;
    r.registered_observed = doc.number_at("estimate.registered.observed");
    r.registered_predicted = banded_from_kv(doc, "estimate.registered.predicted");
    r.registered_total = doc.number_at("estimate.registered.total");
    r.ever_worked = banded_from_kv(doc, "estimate.ever_worked");
    r.fulltime = banded_from_kv(doc, "estimate.fulltime");
    r.ever_worked_after_multihoming = doc.number_at("estimate.after_multihoming.ever_worked");
    r.fulltime_after_multihoming = doc.number_at("estimate.after_multihoming.fulltime");
    r.ever_worked_after_multiworking = doc.number_at("estimate.after_multiworking.ever_worked");
    r.fulltime_after_multiworking = doc.number_at("estimate.after_multiworking.fulltime");
    r.upper_bounds.registered = doc.number_at("estimate.upper.registered");
    r.upper_bounds.ever_worked = doc.number_at("estimate.upper.ever_worked");
    r.upper_bounds.fulltime = doc.number_at("estimate.upper.fulltime");
    r.params.ever_worked_share = banded_from_kv(doc, "estimate.params.ever_worked_share");
    r.params.fulltime_share = banded_from_kv(doc, "estimate.params.fulltime_share");
    r.params.multihoming_mean = banded_from_kv(doc, "estimate.params.multihoming_mean");
    r.params.multiworking_prop = banded_from_kv(doc, "estimate.params.multiworking_prop");
    r.params.multiworking_direction =
        direction_from_name(doc.at("estimate.params.multiworking_direction"));
    return r;
}

} // namespace olm::adjust
