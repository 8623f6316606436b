#pragma once

#include "olm/features.hpp"
#include "olm/gbt.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace olm::bootstrap {

// Uncertainty band for the predicted total over the unobserved platforms.
// point comes from the model fit on the full data; lower/upper are
// percentiles of the replicate sums, so point need not lie inside them.
struct PredictionInterval {
    double point = 0;
    double lower = 0;
    double upper = 0;
    double level = 0;                   // e.g. 0.95
    std::size_t replicates = 0;         // == replicate_sums.size()
    std::vector<double> replicate_sums; // replicate order, not sorted
};

// Nearest-rank percentile: value at 1-based index ceil(q*n) of the sorted
// samples; q=0 maps to the minimum. Positions within rounding error of an
// integer rank snap to it before the ceiling.
double percentile(std::span<const double> samples, double q);

// One bootstrap replicate: resample the observed rows with replacement
// (size preserved, all draws from the replicate's own seeded stream),
// refit the feature transform and the model on the resample, and sum the
// predictions over the unobserved rows. Resamples with all-zero targets
// or a constant feature column are redrawn from the same stream, a
// bounded number of times. Exposed separately so replicates can run in
// any order or concurrently; the result depends only on the arguments.
double bootstrap_replicate_sum(const std::vector<FeatureVector>& observed_x,
                               std::span<const double> observed_y,
                               const std::vector<FeatureVector>& unobserved_x,
                               const gbt::Hyperparams& hp,
                               std::uint64_t replicate_seed);

// Runs B replicates with sub-seeds seed^1 .. seed^B and aggregates the
// percentile interval at the given level. Deterministic given the seed;
// independent of worker count and scheduling.
PredictionInterval bootstrap_predict_sum(const std::vector<FeatureVector>& observed_x,
                                         std::span<const double> observed_y,
                                         const std::vector<FeatureVector>& unobserved_x,
                                         const gbt::Hyperparams& hp, int B, double level,
                                         std::uint64_t seed, int workers = 1);

} // namespace olm::bootstrap
