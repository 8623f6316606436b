#include "olm/pipeline.hpp"

#include "olm/bootstrap.hpp"
#include "olm/csv.hpp"
#include "olm/errors.hpp"
#include "olm/features.hpp"
#include "olm/fetch.hpp"
#include "olm/text.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <sstream>

namespace olm::pipeline {

namespace fs = std::filesystem;

std::vector<gbt::Hyperparams> GridSpec::expand() const {
    if (learning_rate.empty() || max_depth.empty() || num_rounds.empty() ||
        reg_lambda.empty() || gamma.empty() || min_child_weight.empty()) {
        throw ValidationError("every grid dimension needs at least one value");
    }
    std::vector<gbt::Hyperparams> grid;
    for (double lr : learning_rate)
        for (int depth : max_depth)
            for (int rounds : num_rounds)
                for (double lambda : reg_lambda)
                    for (double g : gamma)
                        for (double mcw : min_child_weight) {
                            gbt::Hyperparams hp;
                            hp.learning_rate = lr;
                            hp.max_depth = depth;
                            hp.num_rounds = rounds;
                            hp.reg_lambda = lambda;
                            hp.gamma = g;
                            hp.min_child_weight = mcw;
                            hp.validate();
                            grid.push_back(hp);
                        }
    return grid;
}

namespace {

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file_bytes(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write file: " + path.string());
    out << bytes;
}

std::vector<double> parse_number_list(const std::string& text, const std::string& key) {
    std::vector<double> out;
    for (const std::string& token : split(text, ',')) {
        try {
            out.push_back(parse_number(std::string(trim(token))));
        } catch (const ValidationError& e) {
            throw ValidationError(key + ": " + e.what());
        }
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& key) {
    std::vector<int> out;
    for (const std::string& token : split(text, ',')) {
        try {
            out.push_back(static_cast<int>(parse_int(std::string(trim(token)))));
        } catch (const ValidationError& e) {
            throw ValidationError(key + ": " + e.what());
        }
    }
    return out;
}

bool parse_bool(const std::string& text, const std::string& key) {
    if (text == "true") return true;
    if (text == "false") return false;
    throw ValidationError(key + " must be true or false, got '" + text + "'");
}

std::uint64_t seed_at(const KvDoc& doc, const std::string& key, std::uint64_t fallback) {
    std::int64_t v = doc.int_or(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ValidationError(key + " must be >= 0");
    return static_cast<std::uint64_t>(v);
}

fs::path out_path(const PipelineConfig& config, const char* name) {
    return fs::path(config.out_dir) / name;
}

void ensure_out_dir(const PipelineConfig& config) {
    fs::create_directories(config.out_dir);
}

// Stages downstream of enrich read the enriched census when it exists and
// fall back to the configured input file otherwise.
Census load_input_census(const PipelineConfig& config, std::string* used_path) {
    fs::path enriched = out_path(config, kEnrichedCensusFile);
    std::string path = fs::exists(enriched) ? enriched.string() : config.census_path;
    if (used_path) *used_path = path;
    return load_census(path);
}

std::vector<std::size_t> observed_indices(const Census& census) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < census.records.size(); ++i) {
        if (census.records[i].registered_count) idx.push_back(i);
    }
    return idx;
}

std::vector<std::size_t> unobserved_indices(const Census& census) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < census.records.size(); ++i) {
        if (!census.records[i].registered_count) idx.push_back(i);
    }
    return idx;
}

std::vector<FeatureVector> build_features(const Census& census) {
    std::int64_t max_alexa = census_max_alexa(census);
    std::vector<FeatureVector> rows;
    rows.reserve(census.records.size());
    for (const PlatformRecord& rec : census.records) {
        rows.push_back(impute_missing(rec, max_alexa));
    }
    return rows;
}

std::string fixture_index_hash(const PipelineConfig& config) {
    fs::path index = fs::path(config.fixture_dir) / "index.txt";
    if (!fs::exists(index)) return "none";
    return hex64(fnv1a64(read_file_bytes(index.string())));
}

void save_table(const fs::path& path, const CsvTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write file: " + path.string());
    write_csv(out, table);
}

struct TrainedModel {
    gbt::GbtModel model; // fit on every observed row, transform attached
    gbt::GridSearchResult search;
};

// The train recipe shared by cmd_train and (when no saved model exists)
// cmd_estimate: grid search on a train/validation split, then a refit of
// the winner on all observed rows.
TrainedModel train_model(const PipelineConfig& config, const Census& census,
                         const std::vector<FeatureVector>& features,
                         const std::vector<std::size_t>& obs) {
    if (obs.size() < 2) {
        throw ValidationError("training needs at least 2 rows with registered_count, found " +
                              format_int(static_cast<std::int64_t>(obs.size())));
    }
    std::vector<FeatureVector> x_obs;
    std::vector<double> y_obs;
    for (std::size_t i : obs) {
        x_obs.push_back(features[i]);
        y_obs.push_back(static_cast<double>(*census.records[i].registered_count));
    }

    std::vector<gbt::Hyperparams> grid = config.grid.expand();
    TrainedModel trained;
    trained.search = gbt::grid_search(x_obs, y_obs, grid, config.train_fraction,
                                      config.split_seed, config.model_seed,
                                      config.train_workers);

    FitTransformResult transform = fit_transform(x_obs);
    trained.model = gbt::fit(transform.transformed, y_obs, trained.search.best,
                             config.model_seed);
    trained.model.transform = transform.params;
    return trained;
}

void write_train_artifacts(const PipelineConfig& config, const std::string& census_path,
                           const TrainedModel& trained,
                           const std::vector<gbt::Hyperparams>& grid,
                           const Census& census,
                           const std::vector<FeatureVector>& features) {
    KvDoc doc = gbt::model_to_kv(trained.model);
    doc.set("train.census", census_path);
    doc.set_number("train.fraction", config.train_fraction);
    doc.set_int("train.split_seed", static_cast<std::int64_t>(config.split_seed));
    doc.set_int("train.model_seed", static_cast<std::int64_t>(config.model_seed));
    doc.set_int("train.grid_size", static_cast<std::int64_t>(grid.size()));
    doc.set_number("train.validation_rmse", trained.search.validation_rmse);
    doc.save_file(out_path(config, kModelFile).string());

    CsvTable trials;
    trials.header = {"learning_rate", "max_depth",        "num_rounds", "reg_lambda",
                     "gamma",         "min_child_weight", "validation_rmse", "selected"};
    for (const gbt::GridTrial& trial : trained.search.all_trials) {
        trials.rows.push_back({format_number(trial.hp.learning_rate),
                               format_int(trial.hp.max_depth),
                               format_int(trial.hp.num_rounds),
                               format_number(trial.hp.reg_lambda),
                               format_number(trial.hp.gamma),
                               format_number(trial.hp.min_child_weight),
                               format_number(trial.validation_rmse),
                               trial.hp == trained.search.best ? "1" : "0"});
    }
    save_table(out_path(config, kGridTrialsFile), trials);

    CsvTable transformed;
    transformed.header = {"name", "alexa_rank", "monthly_uniques", "trends_sum",
                          "trends_median"};
    for (std::size_t i = 0; i < census.records.size(); ++i) {
        std::array<double, kFeatureCount> z =
            apply_transform_row(*trained.model.transform, features[i]);
        transformed.rows.push_back({census.records[i].name, format_number(z[0]),
                                    format_number(z[1]), format_number(z[2]),
                                    format_number(z[3])});
    }
    save_table(out_path(config, kFeaturesTransformedFile), transformed);
}

} // namespace

PipelineConfig load_config(const std::string& path) {
    PipelineConfig c;
    c.config_path = path;
    std::string bytes = read_file_bytes(path);
    c.config_hash = fnv1a64(bytes);
    c.raw = KvDoc::parse_string(bytes);
    const KvDoc& doc = c.raw;

    if (!doc.has("census")) throw ValidationError("config is missing the census path");
    c.census_path = doc.at("census");
    c.out_dir = doc.get_or("out", c.out_dir);

    c.fetch_mode = doc.get_or("fetch.mode", c.fetch_mode);
    if (c.fetch_mode != "replay" && c.fetch_mode != "live") {
        throw ValidationError("fetch.mode must be replay or live, got '" + c.fetch_mode + "'");
    }
    c.fixture_dir = doc.get_or("fetch.fixture_dir", c.fixture_dir);
    c.fetch_host = doc.get_or("fetch.host", "");
    c.fetch_port = static_cast<int>(doc.int_or("fetch.port", c.fetch_port));
    c.rate_interval = doc.number_or("fetch.rate_interval", c.rate_interval);
    c.rate_jitter = doc.number_or("fetch.rate_jitter", c.rate_jitter);
    c.fetch_attempts = static_cast<int>(doc.int_or("fetch.attempts", c.fetch_attempts));
    if (c.rate_interval < 0 || c.rate_jitter < 0 || c.fetch_attempts < 1) {
        throw ValidationError("fetch rate/attempt settings out of range");
    }

    c.anchor = doc.get_or("trends.anchor", "");
    if (doc.has("trends.start")) c.window_start = parse_date(doc.at("trends.start"));
    if (doc.has("trends.end")) c.window_end = parse_date(doc.at("trends.end"));

    c.train_fraction = doc.number_or("train.fraction", c.train_fraction);
    if (!(c.train_fraction > 0) || !(c.train_fraction < 1)) {
        throw ValidationError("train.fraction must be in (0, 1)");
    }
    c.split_seed = seed_at(doc, "train.split_seed", c.split_seed);
    c.model_seed = seed_at(doc, "train.model_seed", c.model_seed);
    c.train_workers = static_cast<int>(doc.int_or("train.workers", c.train_workers));

    if (doc.has("train.grid.learning_rate")) {
        c.grid.learning_rate =
            parse_number_list(doc.at("train.grid.learning_rate"), "train.grid.learning_rate");
    }
    if (doc.has("train.grid.max_depth")) {
        c.grid.max_depth = parse_int_list(doc.at("train.grid.max_depth"), "train.grid.max_depth");
    }
    if (doc.has("train.grid.num_rounds")) {
        c.grid.num_rounds =
            parse_int_list(doc.at("train.grid.num_rounds"), "train.grid.num_rounds");
    }
    if (doc.has("train.grid.reg_lambda")) {
        c.grid.reg_lambda =
            parse_number_list(doc.at("train.grid.reg_lambda"), "train.grid.reg_lambda");
    }
    if (doc.has("train.grid.gamma")) {
        c.grid.gamma = parse_number_list(doc.at("train.grid.gamma"), "train.grid.gamma");
    }
    if (doc.has("train.grid.min_child_weight")) {
        c.grid.min_child_weight = parse_number_list(doc.at("train.grid.min_child_weight"),
                                                    "train.grid.min_child_weight");
    }

    c.bootstrap_replicates =
        static_cast<int>(doc.int_or("bootstrap.replicates", c.bootstrap_replicates));
    if (c.bootstrap_replicates < 1) throw ValidationError("bootstrap.replicates must be >= 1");
    c.bootstrap_level = doc.number_or("bootstrap.level", c.bootstrap_level);
    if (!(c.bootstrap_level > 0) || !(c.bootstrap_level < 1)) {
        throw ValidationError("bootstrap.level must be in (0, 1)");
    }
    c.bootstrap_seed = seed_at(doc, "bootstrap.seed", c.bootstrap_seed);
    c.bootstrap_workers = static_cast<int>(doc.int_or("bootstrap.workers", c.bootstrap_workers));

    c.params_file = doc.get_or("adjust.params_file", "");
    c.round_digits = static_cast<int>(doc.int_or("round.digits", c.round_digits));
    if (c.round_digits < 1) throw ValidationError("round.digits must be >= 1");
    if (doc.has("estimate.pessimistic_upper")) {
        c.pessimistic_upper =
            parse_bool(doc.at("estimate.pessimistic_upper"), "estimate.pessimistic_upper");
    }
    if (doc.has("estimate.observed_sum")) {
        c.observed_sum_override = doc.number_at("estimate.observed_sum");
        if (*c.observed_sum_override < 0) {
            throw ValidationError("estimate.observed_sum must be >= 0");
        }
    }
    if (doc.has("estimate.predicted.value")) {
        adjust::BandedParam stub;
        stub.value = doc.number_at("estimate.predicted.value");
        stub.lower = doc.number_at("estimate.predicted.lower");
        stub.upper = doc.number_at("estimate.predicted.upper");
        stub.method = adjust::band_method_from_name(
            doc.get_or("estimate.predicted.method", "bootstrap-percentile"));
        adjust::validate_banded(stub, "estimate.predicted");
        c.predicted_stub = stub;
    }
    return c;
}

void override_seeds(PipelineConfig& config, std::uint64_t seed) {
    config.split_seed = seed;
    config.model_seed = seed;
    config.bootstrap_seed = seed;
}

void cmd_ingest(const PipelineConfig& config, std::ostream& out) {
    Census census = load_census(config.census_path);
    ensure_out_dir(config);

    CsvTable table;
    table.header = {"field", "bucket", "n", "mean", "median", "min", "max"};
    auto stats_row = [&](std::string field, std::string bucket,
                         const std::optional<SummaryRow>& s, std::int64_t n) {
        std::vector<std::string> row{std::move(field), std::move(bucket), format_int(n)};
        if (s) {
            row.push_back(format_number(s->mean));
            row.push_back(format_number(s->median));
            row.push_back(format_number(s->min));
            row.push_back(format_number(s->max));
        } else {
            row.insert(row.end(), {"", "", "", ""});
        }
        table.rows.push_back(std::move(row));
    };

    SummaryRow registered = summary_stats(census, CensusField::registered_count);
    stats_row("registered_count", "total", registered, registered.n);
    for (const BucketRow& bucket : bucket_counts(census)) {
        stats_row("registered_count", bucket.label, bucket.stats, bucket.n);
    }
    for (CensusField field :
         {CensusField::alexa_rank, CensusField::monthly_uniques, CensusField::trends_sum,
          CensusField::trends_median, CensusField::ever_worked_count,
          CensusField::fulltime_count}) {
        try {
            SummaryRow s = summary_stats(census, field);
            stats_row(std::string(field_name(field)), "total", s, s.n);
        } catch (const NoDataError&) {
            stats_row(std::string(field_name(field)), "total", std::nullopt, 0);
        }
    }
    save_table(out_path(config, kSummaryFile), table);

    out << "census: " << config.census_path << " (" << census.records.size()
        << " platforms, " << observed_indices(census).size() << " with registered counts)\n";
    for (const auto& row : table.rows) {
        out << "  " << std::left << std::setw(18) << row[0] << std::setw(10) << row[1]
            << std::right << std::setw(6) << row[2];
        if (!row[3].empty()) {
            out << "  mean=" << row[3] << " median=" << row[4] << " min=" << row[5]
                << " max=" << row[6];
        }
        out << "\n";
    }
    out << "wrote " << out_path(config, kSummaryFile).string() << "\n";
}

namespace {

struct TransportBundle {
    fetch::FixtureStore store;
    fetch::SystemClock clock;
    std::unique_ptr<fetch::RateLimiter> limiter;
    std::unique_ptr<fetch::Transport> transport;

    explicit TransportBundle(const PipelineConfig& config) : store(config.fixture_dir) {
        if (config.fetch_mode == "replay") {
            transport = std::make_unique<fetch::ReplayTransport>(store);
            return;
        }
        if (config.fetch_host.empty()) {
            throw ValidationError("fetch.host is required in live mode");
        }
        limiter = std::make_unique<fetch::RateLimiter>(config.rate_interval,
                                                       config.rate_jitter,
                                                       config.bootstrap_seed, clock);
        fetch::HttpOptions options;
        options.host = config.fetch_host;
        options.port = config.fetch_port;
        options.max_attempts = config.fetch_attempts;
        transport = std::make_unique<fetch::HttpTransport>(options, *limiter, clock, &store);
    }
};

} // namespace

void cmd_enrich(const PipelineConfig& config, std::ostream& out) {
    Census census = load_census(config.census_path);
    ensure_out_dir(config);

    // Sites whose search-interest features are absent get fetched; present
    // file values are kept (blank the columns to force a re-pull).
    std::vector<std::string> sites_needing_trends;
    for (const PlatformRecord& rec : census.records) {
        if (rec.trends_sum && rec.trends_median) continue;
        if (rec.url == config.anchor) continue; // anchor is implicit in every batch
        if (std::find(sites_needing_trends.begin(), sites_needing_trends.end(), rec.url) ==
            sites_needing_trends.end()) {
            sites_needing_trends.push_back(rec.url);
        }
    }
    bool anchor_needs_trends = false;
    for (const PlatformRecord& rec : census.records) {
        if (rec.url == config.anchor && (!rec.trends_sum || !rec.trends_median)) {
            anchor_needs_trends = true;
        }
    }

    std::size_t siterank_fetches = 0;
    std::vector<TrendsSeries> cache_series;

    bool needs_transport = !sites_needing_trends.empty() || anchor_needs_trends;
    for (const PlatformRecord& rec : census.records) {
        if (!rec.alexa_rank || !rec.monthly_uniques) needs_transport = true;
    }

    if (needs_transport) {
        TransportBundle bundle(config);

        if (!sites_needing_trends.empty() || anchor_needs_trends) {
            if (config.anchor.empty()) {
                throw ValidationError("trends.anchor is required to fetch search interest");
            }
            std::vector<std::string> plan_sites = sites_needing_trends;
            if (plan_sites.empty()) {
                // Only the anchor record lacks trends; any single-batch plan
                // that includes the anchor serves.
                throw ValidationError(
                    "only the anchor is missing trends; add a second site or fill the "
                    "anchor's columns");
            }
            fetch::FetchPlan plan = fetch::plan_batches(plan_sites, config.anchor);
            plan.window_start = config.window_start;
            plan.window_end = config.window_end;
            std::vector<TrendsSeries> raw = fetch::fetch_trends(plan, *bundle.transport);

            std::map<std::string, TrendsSeries> normalized; // site -> first normalized form
            std::size_t offset = 0;
            for (const auto& batch : plan.batches) {
                std::vector<TrendsSeries> batch_series(
                    raw.begin() + static_cast<std::ptrdiff_t>(offset),
                    raw.begin() + static_cast<std::ptrdiff_t>(offset + batch.size()));
                offset += batch.size();
                for (TrendsSeries& s : normalize_trends_batch(batch_series, config.anchor)) {
                    std::string site = s.site;
                    normalized.emplace(std::move(site), std::move(s)); // first anchor copy wins
                }
            }

            auto cache_in_order = [&](const std::string& site) {
                auto it = normalized.find(site);
                if (it != normalized.end()) cache_series.push_back(it->second);
            };
            cache_in_order(config.anchor);
            for (const std::string& site : plan.sites) cache_in_order(site);

            for (PlatformRecord& rec : census.records) {
                auto it = normalized.find(rec.url);
                if (it == normalized.end()) continue;
                auto [sum, median] = summarize_trends(it->second);
                if (!rec.trends_sum) rec.trends_sum = sum;
                if (!rec.trends_median) rec.trends_median = median;
            }
        }

        for (PlatformRecord& rec : census.records) {
            if (rec.alexa_rank && rec.monthly_uniques) continue;
            fetch::SiterankResult r = fetch::fetch_siterank(rec.url, *bundle.transport);
            ++siterank_fetches;
            if (!rec.alexa_rank) rec.alexa_rank = r.alexa_rank;
            if (!rec.monthly_uniques) rec.monthly_uniques = r.monthly_uniques;
        }
    }

    save_census(census, out_path(config, kEnrichedCensusFile).string());

    CsvTable cache;
    cache.header = {"site", "date", "value", "anchor"};
    for (const TrendsSeries& s : cache_series) {
        for (const TrendsPoint& p : s.points) {
            cache.rows.push_back(
                {s.site, format_date(p.date), format_number(p.value), s.anchor_site});
        }
    }
    save_table(out_path(config, kTrendsCacheFile), cache);

    CsvTable features_csv;
    features_csv.header = {"name", "alexa_rank", "monthly_uniques", "trends_sum",
                           "trends_median"};
    std::vector<FeatureVector> features = build_features(census);
    for (std::size_t i = 0; i < census.records.size(); ++i) {
        features_csv.rows.push_back({census.records[i].name,
                                     format_number(features[i].alexa_rank),
                                     format_number(features[i].monthly_uniques),
                                     format_number(features[i].trends_sum),
                                     format_number(features[i].trends_median)});
    }
    save_table(out_path(config, kFeaturesRawFile), features_csv);

    out << "enriched " << census.records.size() << " platforms ("
        << cache_series.size() << " trends series cached, " << siterank_fetches
        << " site-rank lookups)\n";
    out << "wrote " << out_path(config, kEnrichedCensusFile).string() << "\n";
}

void cmd_train(const PipelineConfig& config, std::ostream& out) {
    std::string census_path;
    Census census = load_input_census(config, &census_path);
    ensure_out_dir(config);

    std::vector<FeatureVector> features = build_features(census);
    std::vector<std::size_t> obs = observed_indices(census);
    std::vector<gbt::Hyperparams> grid = config.grid.expand();
    TrainedModel trained = train_model(config, census, features, obs);
    write_train_artifacts(config, census_path, trained, grid, census, features);

    out << "grid search over " << grid.size() << " points on " << obs.size()
        << " observed platforms\n";
    out << "winner " << trained.search.best.describe()
        << " validation rmse " << format_number(trained.search.validation_rmse) << "\n";
    out << "wrote " << out_path(config, kModelFile).string() << "\n";
}

namespace {

adjust::BandedParam resolve_param(const PipelineConfig& config, const KvDoc* file_doc,
                                  const std::string& name,
                                  const std::function<adjust::BandedParam()>& derive) {
    std::string prefix = "adjust." + name;
    auto from_doc = [&](const KvDoc& doc) {
        adjust::BandedParam p;
        p.value = doc.number_at(prefix + ".value");
        p.lower = doc.number_at(prefix + ".lower");
        p.upper = doc.number_at(prefix + ".upper");
        p.method = adjust::band_method_from_name(doc.at(prefix + ".method"));
        return p;
    };
    if (config.raw.has(prefix + ".value")) return from_doc(config.raw);
    if (file_doc && file_doc->has(prefix + ".value")) return from_doc(*file_doc);
    return derive();
}

adjust::AdjustmentParams resolve_params(const PipelineConfig& config, const Census& census) {
    std::optional<KvDoc> file_doc;
    if (!config.params_file.empty()) file_doc = KvDoc::load_file(config.params_file);
    const KvDoc* file = file_doc ? &*file_doc : nullptr;

    adjust::AdjustmentParams params;
    params.ever_worked_share = resolve_param(config, file, "ever_worked_share", [&] {
        return adjust::estimate_share(census, CensusField::ever_worked_count);
    });
    params.fulltime_share = resolve_param(config, file, "fulltime_share", [&] {
        return adjust::estimate_share(census, CensusField::fulltime_count);
    });
    params.multihoming_mean = resolve_param(config, file, "multihoming_mean", [&] {
        if (!config.raw.has("adjust.multihoming_responses")) {
            throw ValidationError(
                "no source for multihoming_mean: set adjust.multihoming_mean.* inline, "
                "point adjust.params_file at a parameter document, or list "
                "adjust.multihoming_responses");
        }
        std::vector<double> counts = parse_number_list(
            config.raw.at("adjust.multihoming_responses"), "adjust.multihoming_responses");
        return adjust::multihoming_param(counts);
    });
    params.multiworking_prop = resolve_param(config, file, "multiworking_prop", [&] {
        if (!config.raw.has("adjust.multiworking_p") ||
            !config.raw.has("adjust.multiworking_n")) {
            throw ValidationError(
                "no source for multiworking_prop: set adjust.multiworking_prop.* inline, "
                "use adjust.params_file, or give adjust.multiworking_p and "
                "adjust.multiworking_n");
        }
        return adjust::multiworking_param(config.raw.number_at("adjust.multiworking_p"),
                                          config.raw.int_at("adjust.multiworking_n"));
    });

    std::string direction = config.raw.get_or(
        "adjust.multiworking_direction",
        file && file->has("adjust.multiworking_direction")
            ? file->at("adjust.multiworking_direction")
            : "divide");
    params.multiworking_direction = adjust::direction_from_name(direction);
    params.validate();
    return params;
}

} // namespace

void cmd_estimate(const PipelineConfig& config, std::ostream& out) {
    std::string census_path;
    Census census = load_input_census(config, &census_path);
    ensure_out_dir(config);

    std::vector<FeatureVector> features = build_features(census);
    std::vector<std::size_t> obs = observed_indices(census);
    std::vector<std::size_t> unobs = unobserved_indices(census);

    double observed_sum = 0;
    if (config.observed_sum_override) {
        observed_sum = *config.observed_sum_override;
    } else {
        for (std::size_t i : obs) {
            observed_sum += static_cast<double>(*census.records[i].registered_count);
        }
    }

    adjust::BandedParam predicted;
    bool ran_bootstrap = false;
    std::vector<double> replicate_sums;
    std::vector<std::pair<std::string, double>> per_platform; // unobserved predictions
    gbt::Hyperparams winning_hp;

    if (config.predicted_stub) {
        predicted = *config.predicted_stub;
    } else {
        if (unobs.empty()) {
            throw NoDataError("every platform has a registered count; nothing to predict. "
                              "Set estimate.predicted.* to run the cascade alone");
        }
        fs::path model_path = out_path(config, kModelFile);
        if (fs::exists(model_path)) {
            winning_hp = gbt::load_model(model_path.string()).hp;
        } else {
            std::vector<gbt::Hyperparams> grid = config.grid.expand();
            TrainedModel trained = train_model(config, census, features, obs);
            write_train_artifacts(config, census_path, trained, grid, census, features);
            winning_hp = trained.search.best;
            out << "no saved model; trained " << winning_hp.describe() << "\n";
        }

        std::vector<FeatureVector> x_obs, x_unobs;
        std::vector<double> y_obs;
        for (std::size_t i : obs) {
            x_obs.push_back(features[i]);
            y_obs.push_back(static_cast<double>(*census.records[i].registered_count));
        }
        for (std::size_t i : unobs) x_unobs.push_back(features[i]);

        bootstrap::PredictionInterval interval = bootstrap::bootstrap_predict_sum(
            x_obs, y_obs, x_unobs, winning_hp, config.bootstrap_replicates,
            config.bootstrap_level, config.bootstrap_seed, config.bootstrap_workers);
        ran_bootstrap = true;
        replicate_sums = interval.replicate_sums;
        predicted.value = interval.point;
        predicted.lower = interval.lower;
        predicted.upper = interval.upper;
        predicted.method = adjust::BandMethod::BootstrapPercentile;

        // Per-platform point predictions, same full-data recipe as the
        // interval's point; the sums must agree.
        FitTransformResult transform = fit_transform(x_obs);
        gbt::GbtModel point_model =
            gbt::fit(transform.transformed, y_obs, winning_hp, config.bootstrap_seed);
        Matrix x_unobs_z = apply_transform(transform.params, x_unobs);
        double check_sum = 0;
        for (std::size_t k = 0; k < unobs.size(); ++k) {
            double p = gbt::predict_row(point_model, x_unobs_z.row(k));
            per_platform.emplace_back(census.records[unobs[k]].name, p);
            check_sum += p;
        }
        if (std::abs(check_sum - interval.point) >
            1e-9 * std::max(1.0, std::abs(interval.point))) {
            throw InternalError("per-platform predictions disagree with the interval point");
        }
    }

    adjust::AdjustmentParams params = resolve_params(config, census);
    adjust::EstimateReport report =
        adjust::cascade(observed_sum, predicted, params, config.pessimistic_upper);

    KvDoc doc;
    doc.set("run.config", config.config_path);
    doc.set("run.config_hash", hex64(config.config_hash));
    doc.set("run.census", census_path);
    doc.set("run.out", config.out_dir);
    doc.set_int("run.split_seed", static_cast<std::int64_t>(config.split_seed));
    doc.set_int("run.model_seed", static_cast<std::int64_t>(config.model_seed));
    doc.set_int("run.bootstrap_seed", static_cast<std::int64_t>(config.bootstrap_seed));
    doc.set("run.fixture_dir", config.fixture_dir);
    doc.set("run.fixture_index_hash", fixture_index_hash(config));
    doc.set_int("run.observed_platforms", static_cast<std::int64_t>(obs.size()));
    doc.set_int("run.unobserved_platforms", static_cast<std::int64_t>(unobs.size()));
    doc.set("predicted.source", ran_bootstrap ? "bootstrap" : "stub");
    if (ran_bootstrap) {
        doc.set_int("bootstrap.replicates", config.bootstrap_replicates);
        doc.set_number("bootstrap.level", config.bootstrap_level);
        doc.set("bootstrap.hyperparams", winning_hp.describe());
    }
    doc.set_int("round.digits", config.round_digits);
    KvDoc report_doc = adjust::report_to_kv(report, config.round_digits);
    for (const auto& [key, value] : report_doc.entries()) {
        doc.set(key, value);
    }
    doc.save_file(out_path(config, kEstimateFile).string());

    if (ran_bootstrap) {
        CsvTable sums;
        sums.header = {"replicate_sum"};
        for (double s : replicate_sums) sums.rows.push_back({format_number(s)});
        save_table(out_path(config, kReplicateSumsFile), sums);

        CsvTable predictions;
        predictions.header = {"name", "predicted_count"};
        for (const auto& [name, value] : per_platform) {
            predictions.rows.push_back({name, format_number(value)});
        }
        save_table(out_path(config, kPredictionsFile), predictions);
    }

    out << "registered total " << format_number(report.registered_total) << " (observed "
        << format_number(report.registered_observed) << " + predicted "
        << format_number(report.registered_predicted.value) << " ["
        << format_number(report.registered_predicted.lower) << ", "
        << format_number(report.registered_predicted.upper) << "])\n";
    out << "wrote " << out_path(config, kEstimateFile).string() << "\n";
}

void cmd_figures(const PipelineConfig& config, std::ostream& out) {
    std::string census_path;
    Census census = load_input_census(config, &census_path);
    ensure_out_dir(config);

    std::vector<std::size_t> unobs = unobserved_indices(census);
    std::vector<double> observed_values;
    for (const PlatformRecord& rec : census.records) {
        if (rec.registered_count && *rec.registered_count > 0) {
            observed_values.push_back(static_cast<double>(*rec.registered_count));
        }
    }

    std::vector<double> predicted_values;
    fs::path predictions_path = out_path(config, kPredictionsFile);
    if (!unobs.empty()) {
        if (!fs::exists(predictions_path)) {
            throw ValidationError("predictions file " + predictions_path.string() +
                                  " not found; run the estimate stage first");
        }
        std::ifstream in(predictions_path, std::ios::binary);
        CsvTable table = read_csv(in);
        if (table.header != std::vector<std::string>{"name", "predicted_count"}) {
            throw ValidationError(predictions_path.string() + ": unexpected header");
        }
        for (const auto& row : table.rows) predicted_values.push_back(parse_number(row[1]));
    }

    if (observed_values.empty() && predicted_values.empty()) {
        throw NoDataError("no positive registered counts to draw");
    }

    double lo_log = std::numeric_limits<double>::infinity();
    double hi_log = -std::numeric_limits<double>::infinity();
    for (double v : observed_values) {
        lo_log = std::min(lo_log, std::log10(v));
        hi_log = std::max(hi_log, std::log10(v));
    }
    for (double v : predicted_values) {
        lo_log = std::min(lo_log, std::log10(v));
        hi_log = std::max(hi_log, std::log10(v));
    }
    double lo = std::floor(lo_log * 2.0) / 2.0; // half-decade bins
    double hi = std::ceil(hi_log * 2.0) / 2.0;
    std::size_t bins = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround((hi - lo) / 0.5)));

    std::vector<std::int64_t> observed_n(bins, 0), predicted_n(bins, 0);
    auto bin_of = [&](double v) {
        auto idx = static_cast<std::size_t>((std::log10(v) - lo) / 0.5);
        return std::min(idx, bins - 1);
    };
    for (double v : observed_values) ++observed_n[bin_of(v)];
    for (double v : predicted_values) ++predicted_n[bin_of(v)];

    CsvTable hist;
    hist.header = {"log10_low", "log10_high", "observed_n", "predicted_n"};
    for (std::size_t b = 0; b < bins; ++b) {
        hist.rows.push_back({format_number(lo + 0.5 * static_cast<double>(b)),
                             format_number(lo + 0.5 * static_cast<double>(b + 1)),
                             format_int(observed_n[b]), format_int(predicted_n[b])});
    }
    save_table(out_path(config, kHistogramFile), hist);

    auto ratio_figure = [&](CensusField field, const char* filename) {
        adjust::BandedParam share = adjust::estimate_share(census, field);
        CsvTable table;
        table.header = {"record", "name", "value"};
        for (const PlatformRecord& rec : census.records) {
            if (!rec.registered_count || *rec.registered_count <= 0) continue;
            const std::optional<std::int64_t>& numerator =
                field == CensusField::ever_worked_count ? rec.ever_worked_count
                                                        : rec.fulltime_count;
            if (!numerator) continue;
            double ratio = static_cast<double>(*numerator) /
                           static_cast<double>(*rec.registered_count);
            table.rows.push_back({"platform", rec.name, format_number(ratio)});
        }
        table.rows.push_back({"mean", "", format_number(share.value)});
        save_table(out_path(config, filename), table);
    };
    ratio_figure(CensusField::ever_worked_count, kEverWorkedFigFile);
    ratio_figure(CensusField::fulltime_count, kFulltimeFigFile);

    out << "wrote " << out_path(config, kHistogramFile).string() << ", "
        << out_path(config, kEverWorkedFigFile).string() << ", "
        << out_path(config, kFulltimeFigFile).string() << "\n";
}

namespace {

std::string banded_line(const KvDoc& doc, const std::string& prefix) {
    return doc.at(prefix + ".value") + " [" + doc.at(prefix + ".lower") + ", " +
           doc.at(prefix + ".upper") + "] (" + doc.at(prefix + ".method") + ")";
}

void report_line(std::ostream& os, const std::string& label, const std::string& value) {
    os << "  " << std::left << std::setw(38) << label << value << "\n";
}

void raw_rounded_line(std::ostream& os, const KvDoc& doc, const std::string& label,
                      const std::string& key) {
    report_line(os, label,
                doc.at("estimate." + key) + " -> " + doc.at("estimate.rounded." + key));
}

} // namespace

void cmd_report(const PipelineConfig& config, std::ostream& out) {
    fs::path estimate_path = out_path(config, kEstimateFile);
    if (!fs::exists(estimate_path)) {
        throw ValidationError("estimate file " + estimate_path.string() +
                              " not found; run the estimate stage first");
    }
    KvDoc doc = KvDoc::load_file(estimate_path.string());

    std::ostringstream os;
    os << "# config = " << doc.at("run.config") << " (fnv1a64 " << doc.at("run.config_hash")
       << ")\n";
    os << "# census = " << doc.at("run.census") << "\n";
    os << "# seeds: split=" << doc.at("run.split_seed") << " model=" << doc.at("run.model_seed")
       << " bootstrap=" << doc.at("run.bootstrap_seed") << "\n";
    os << "# fixtures: " << doc.at("run.fixture_dir") << " (index "
       << doc.at("run.fixture_index_hash") << ")\n";
    os << "# predicted source: " << doc.at("predicted.source");
    if (doc.has("bootstrap.replicates")) {
        os << ", " << doc.at("bootstrap.replicates") << " replicates at level "
           << doc.at("bootstrap.level");
    }
    os << "\n\n";

    os << "Worker population estimate\n";
    os << "--------------------------\n";
    report_line(os, "(a) registered, observed", doc.at("estimate.registered.observed"));
    report_line(os, "(b) registered, predicted",
                banded_line(doc, "estimate.registered.predicted"));
    report_line(os, "registered, total", doc.at("estimate.registered.total"));
    report_line(os, "(c) ever-worked share",
                banded_line(doc, "estimate.params.ever_worked_share"));
    report_line(os, "(d) full-time share", banded_line(doc, "estimate.params.fulltime_share"));
    report_line(os, "(e) multi-homing mean",
                banded_line(doc, "estimate.params.multihoming_mean"));
    report_line(os, "(f) multi-working proportion",
                banded_line(doc, "estimate.params.multiworking_prop"));
    os << "\n";

    std::string direction = doc.at("estimate.params.multiworking_direction");
    os << "Cascade (raw -> rounded to " << doc.at("round.digits") << " significant digits)\n";
    os << "---------------------------------------------------\n";
    raw_rounded_line(os, doc, "registered total", "registered.total");
    raw_rounded_line(os, doc, "ever worked", "ever_worked.value");
    raw_rounded_line(os, doc, "full time", "fulltime.value");
    raw_rounded_line(os, doc, "ever worked / multi-homing", "after_multihoming.ever_worked");
    raw_rounded_line(os, doc, "full time / multi-homing", "after_multihoming.fulltime");
    raw_rounded_line(os, doc, "ever worked, multi-working (" + direction + ")",
                     "after_multiworking.ever_worked");
    raw_rounded_line(os, doc, "full time, multi-working (" + direction + ")",
                     "after_multiworking.fulltime");
    raw_rounded_line(os, doc, "upper bound, registered", "upper.registered");
    raw_rounded_line(os, doc, "upper bound, ever worked", "upper.ever_worked");
    raw_rounded_line(os, doc, "upper bound, full time", "upper.fulltime");

    std::string text = os.str();
    write_file_bytes(out_path(config, kReportFile), text);
    out << text;
}

} // namespace olm::pipeline
