#include "olm/bootstrap.hpp"

#include "olm/errors.hpp"
#include "olm/rng.hpp"
#include "olm/text.hpp"

#include <algorithm>
#include <cmath>
#include <future>

namespace olm::bootstrap {

namespace {

constexpr int kMaxRedraws = 64;

} // namespace

double percentile(std::span<const double> samples, double q) {
    if (samples.empty()) throw NoDataError("percentile of an empty sample");
    if (!(q >= 0.0) || !(q <= 1.0)) {
        throw ValidationError("percentile level must be in [0, 1], got " + format_number(q));
    }
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    if (q == 0.0) return sorted.front();

    double pos = q * static_cast<double>(sorted.size());
    // ceil() must not be fooled by q*n landing a few ulps above the exact
    // integer rank (e.g. 0.025 * 200).
    double nearest = std::round(pos);
    if (std::abs(pos - nearest) <= 1e-9 * std::max(1.0, nearest)) pos = nearest;
    auto rank = static_cast<std::size_t>(std::ceil(pos)); // 1-based
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

double bootstrap_replicate_sum(const std::vector<FeatureVector>& observed_x,
                               std::span<const double> observed_y,
                               const std::vector<FeatureVector>& unobserved_x,
                               const gbt::Hyperparams& hp,
                               std::uint64_t replicate_seed) {
    const std::size_t n = observed_x.size();
    if (n == 0) throw NoDataError("no observed rows to resample");
    if (observed_y.size() != n) throw ValidationError("observed feature/target lengths differ");
    if (unobserved_x.empty()) throw NoDataError("no unobserved rows to predict");

    Rng rng(replicate_seed);
    std::vector<FeatureVector> sample_x(n);
    std::vector<double> sample_y(n);

    for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
        bool any_positive = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t j = rng.below(n);
            sample_x[i] = observed_x[j];
            sample_y[i] = observed_y[j];
            any_positive |= sample_y[i] > 0;
        }
        if (!any_positive) continue;

        FitTransformResult transform;
        try {
            transform = fit_transform(sample_x);
        } catch (const ValidationError&) {
            continue; // constant feature column in this resample
        }
        gbt::GbtModel model = gbt::fit(transform.transformed, sample_y, hp, replicate_seed);
        Matrix x_unobserved = apply_transform(transform.params, unobserved_x);
        double sum = 0;
        for (double p : gbt::predict(model, x_unobserved)) sum += p;
        return sum;
    }
    throw ValidationError("bootstrap resampling failed " + format_int(kMaxRedraws) +
                          " times; observed data too degenerate to resample");
}

PredictionInterval bootstrap_predict_sum(const std::vector<FeatureVector>& observed_x,
                                         std::span<const double> observed_y,
                                         const std::vector<FeatureVector>& unobserved_x,
                                         const gbt::Hyperparams& hp, int B, double level,
                                         std::uint64_t seed, int workers) {
    if (B < 1) throw ValidationError("replicate count must be >= 1");
    if (!(level > 0.0) || !(level < 1.0)) {
        throw ValidationError("interval level must be in (0, 1)");
    }
    hp.validate();

    PredictionInterval interval;
    interval.level = level;
    interval.replicates = static_cast<std::size_t>(B);
    interval.replicate_sums.resize(static_cast<std::size_t>(B));

    auto run_replicate = [&](std::size_t b) {
        // Replicates are numbered 1..B; b is the 0-based slot.
        std::uint64_t sub_seed = seed ^ (static_cast<std::uint64_t>(b) + 1);
        interval.replicate_sums[b] =
            bootstrap_replicate_sum(observed_x, observed_y, unobserved_x, hp, sub_seed);
    };

    if (workers <= 1 || B == 1) {
        for (std::size_t b = 0; b < static_cast<std::size_t>(B); ++b) run_replicate(b);
    } else {
        std::size_t n_workers =
            std::min<std::size_t>(static_cast<std::size_t>(workers), static_cast<std::size_t>(B));
        std::vector<std::future<void>> futures;
        for (std::size_t w = 0; w < n_workers; ++w) {
            futures.push_back(std::async(std::launch::async, [&, w] {
                for (std::size_t b = w; b < static_cast<std::size_t>(B); b += n_workers) {
                    run_replicate(b);
                }
            }));
        }
        for (auto& fut : futures) fut.get();
    }

    // Point estimate from the full observed data, same recipe as a replicate.
    FitTransformResult transform = fit_transform(observed_x);
    gbt::GbtModel model = gbt::fit(transform.transformed, observed_y, hp, seed);
    Matrix x_unobserved = apply_transform(transform.params, unobserved_x);
    interval.point = 0;
    for (double p : gbt::predict(model, x_unobserved)) interval.point += p;

    interval.lower = percentile(interval.replicate_sums, (1.0 - level) / 2.0);
    interval.upper = percentile(interval.replicate_sums, 1.0 - (1.0 - level) / 2.0);
    return interval;
}

} // namespace olm::bootstrap
