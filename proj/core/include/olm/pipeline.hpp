#pragma once

#include "olm/adjustments.hpp"
#include "olm/census.hpp"
#include "olm/date.hpp"
#include "olm/gbt.hpp"
#include "olm/kvdoc.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace olm::pipeline {

// Hyperparameter grid as lists per knob; expanded in nested order
// learning_rate > max_depth > num_rounds > reg_lambda > gamma >
// min_child_weight, which is also the tie-break order of last resort.
struct GridSpec {
    std::vector<double> learning_rate = {0.05, 0.1, 0.3};
    std::vector<int> max_depth = {2, 3, 4};
    std::vector<int> num_rounds = {50, 100, 200};
    std::vector<double> reg_lambda = {0, 1, 10};
    std::vector<double> gamma = {0};
    std::vector<double> min_child_weight = {1};

    std::vector<gbt::Hyperparams> expand() const;
};

// Every knob of the pipeline, loaded from a key-value config file. Seeds
// are fixed constants unless configured; nothing seeds from the clock.
struct PipelineConfig {
    std::string config_path;
    std::uint64_t config_hash = 0; // fnv1a64 of the config file bytes

    std::string census_path;
    std::string out_dir = "out";

    std::string fetch_mode = "replay"; // replay | live
    std::string fixture_dir = "fixtures";
    std::string fetch_host;
    int fetch_port = 80;
    double rate_interval = 2.0;   // seconds between live requests
    double rate_jitter = 0.25;    // fraction of the interval
    int fetch_attempts = 3;

    std::string anchor;
    Date window_start;
    Date window_end;

    double train_fraction = 0.8;
    std::uint64_t split_seed = 1;
    std::uint64_t model_seed = 1;
    int train_workers = 1;
    GridSpec grid;

    int bootstrap_replicates = 1000;
    double bootstrap_level = 0.95;
    std::uint64_t bootstrap_seed = 1;
    int bootstrap_workers = 1;

    std::string params_file; // adjustment parameters document, optional
    int round_digits = 2;
    bool pessimistic_upper = false;

    std::optional<double> observed_sum_override;
    // When set, the estimate stage skips the bootstrap and uses this band
    // (e.g. replaying published numbers through the cascade).
    std::optional<adjust::BandedParam> predicted_stub;

    KvDoc raw; // full document, for inline adjustment parameters
};

PipelineConfig load_config(const std::string& path);

// --seed overrides every configured seed with one value.
void override_seeds(PipelineConfig& config, std::uint64_t seed);

// Stage entry points. Each writes its artifacts under config.out_dir and
// prints a short human summary to `out`. Errors are thrown: ValidationError
// for bad inputs or missing prerequisites, TransportError from acquisition,
// InternalError for broken invariants.
void cmd_ingest(const PipelineConfig& config, std::ostream& out);
void cmd_enrich(const PipelineConfig& config, std::ostream& out);
void cmd_train(const PipelineConfig& config, std::ostream& out);
void cmd_estimate(const PipelineConfig& config, std::ostream& out);
void cmd_figures(const PipelineConfig& config, std::ostream& out);
void cmd_report(const PipelineConfig& config, std::ostream& out);

// Stage artifact names under out_dir.
inline constexpr const char* kSummaryFile = "summary.csv";
inline constexpr const char* kEnrichedCensusFile = "enriched_census.csv";
inline constexpr const char* kTrendsCacheFile = "trends_normalized.csv";
inline constexpr const char* kFeaturesRawFile = "features_raw.csv";
inline constexpr const char* kFeaturesTransformedFile = "features_transformed.csv";
inline constexpr const char* kModelFile = "model.kv";
inline constexpr const char* kGridTrialsFile = "grid_trials.csv";
inline constexpr const char* kEstimateFile = "estimate.kv";
inline constexpr const char* kReplicateSumsFile = "replicate_sums.csv";
inline constexpr const char* kPredictionsFile = "predictions.csv";
inline constexpr const char* kHistogramFile = "fig_hist_registered.csv";
inline constexpr const char* kEverWorkedFigFile = "fig_ever_worked_ratio.csv";
inline constexpr const char* kFulltimeFigFile = "fig_fulltime_ratio.csv";
inline constexpr const char* kReportFile = "report.txt";

} // namespace olm::pipeline
