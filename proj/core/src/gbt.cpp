#include "olm/gbt.hpp"

#include "olm/errors.hpp"
#include "olm/rng.hpp"
#include "olm/text.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <iostream>
#include <numeric>

namespace olm::gbt {

namespace {

constexpr double kBaseEps = 1e-8;
// Leaf steps on the log scale are clamped; unclamped Newton steps can
// overshoot badly when a prediction sits far below its target, and the
// cap keeps the training deviance monotone for any learning rate <= 1.
constexpr double kMaxDeltaStep = 0.7;

double leaf_weight(double grad_sum, double hess_sum, double reg_lambda) {
    double w = -grad_sum / (hess_sum + reg_lambda);
    return std::clamp(w, -kMaxDeltaStep, kMaxDeltaStep);
}

} // namespace

void Hyperparams::validate() const {
    if (!(learning_rate > 0) || learning_rate > 1) {
        throw ValidationError("learning_rate must be in (0, 1], got " + format_number(learning_rate));
    }
    if (max_depth < 1) throw ValidationError("max_depth must be >= 1");
    if (num_rounds < 1) throw ValidationError("num_rounds must be >= 1");
    if (reg_lambda < 0) throw ValidationError("reg_lambda must be >= 0");
    if (gamma < 0) throw ValidationError("gamma must be >= 0");
    if (min_child_weight < 0) throw ValidationError("min_child_weight must be >= 0");
}

std::string Hyperparams::describe() const {
    return "{lr=" + format_number(learning_rate) + ", depth=" + format_int(max_depth) +
           ", rounds=" + format_int(num_rounds) + ", lambda=" + format_number(reg_lambda) +
           ", gamma=" + format_number(gamma) + ", mcw=" + format_number(min_child_weight) + "}";
}

double Tree::value_at(std::span<const double> row) const {
    int id = 0;
    while (!nodes[id].is_leaf()) {
        const TreeNode& nd = nodes[id];
        id = row[static_cast<std::size_t>(nd.feature)] < nd.threshold ? nd.left : nd.right;
    }
    return nodes[id].weight;
}

int Tree::depth() const {
    // Iterative preorder with explicit depths.
    if (nodes.empty()) return 0;
    std::vector<std::pair<int, int>> stack{{0, 0}};
    int deepest = 0;
    while (!stack.empty()) {
        auto [id, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        if (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
            stack.push_back({nodes[static_cast<std::size_t>(id)].left, d + 1});
            stack.push_back({nodes[static_cast<std::size_t>(id)].right, d + 1});
        }
    }
    return deepest;
}

GradHess poisson_grad_hess(double pred_log, double y) {
    if (!std::isfinite(pred_log)) throw ValidationError("prediction must be finite");
    if (y < 0 || !std::isfinite(y)) throw ValidationError("target must be finite and >= 0");
    double e = std::exp(pred_log);
    return {e - y, e};
}

std::optional<SplitDecision> best_split(const Matrix& X, std::span<const std::size_t> rows,
                                        std::span<const double> grad,
                                        std::span<const double> hess,
                                        const Hyperparams& hp) {
    if (rows.size() < 2) return std::nullopt;

    double total_grad = 0, total_hess = 0;
    for (std::size_t r : rows) {
        total_grad += grad[r];
        total_hess += hess[r];
    }
    const double parent_score = total_grad * total_grad / (total_hess + hp.reg_lambda);

    std::optional<SplitDecision> best;
    std::vector<std::pair<double, std::size_t>> sorted;
    sorted.reserve(rows.size());

    for (std::size_t f = 0; f < X.cols(); ++f) {
        sorted.clear();
        for (std::size_t r : rows) sorted.emplace_back(X.at(r, f), r);
        std::stable_sort(sorted.begin(), sorted.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });

        double left_grad = 0, left_hess = 0;
        for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
            left_grad += grad[sorted[i].second];
            left_hess += hess[sorted[i].second];
            double lo = sorted[i].first;
            double hi = sorted[i + 1].first;
            if (lo == hi) continue;
            double threshold = lo + (hi - lo) / 2;
            // Adjacent representables can collapse the midpoint onto an
            // endpoint; no usable threshold exists between them then.
            if (!(threshold > lo) || !(threshold <= hi)) continue;

            double right_grad = total_grad - left_grad;
            double right_hess = total_hess - left_hess;
            if (left_hess < hp.min_child_weight || right_hess < hp.min_child_weight) continue;

            double gain = 0.5 * (left_grad * left_grad / (left_hess + hp.reg_lambda) +
                                 right_grad * right_grad / (right_hess + hp.reg_lambda) -
                                 parent_score);
            if (gain - hp.gamma <= 0) continue;
            if (!best || gain > best->gain) {
                best = SplitDecision{static_cast<int>(f), threshold, gain,
                                     left_grad,  left_hess,
                                     right_grad, right_hess};
            }
        }
    }
    return best;
}

namespace {

struct TreeBuilder {
    const Matrix& X;
    std::span<const double> grad;
    std::span<const double> hess;
    const Hyperparams& hp;
    Tree tree;
    // (leaf node id, rows) pairs for the prediction update after the build.
    std::vector<std::pair<int, std::vector<std::size_t>>> leaves;

    int build(std::vector<std::size_t> rows, int depth) {
        int id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});

        std::optional<SplitDecision> split;
        if (depth < hp.max_depth && rows.size() >= 2) {
            split = best_split(X, rows, grad, hess, hp);
        }
        if (!split) {
            double g = 0, h = 0;
            for (std::size_t r : rows) {
                g += grad[r];
                h += hess[r];
            }
            tree.nodes[static_cast<std::size_t>(id)].weight = leaf_weight(g, h, hp.reg_lambda);
            leaves.emplace_back(id, std::move(rows));
            return id;
        }

        std::vector<std::size_t> left_rows, right_rows;
        for (std::size_t r : rows) {
            if (X.at(r, static_cast<std::size_t>(split->feature)) < split->threshold) {
                left_rows.push_back(r);
            } else {
                right_rows.push_back(r);
            }
        }
        tree.nodes[static_cast<std::size_t>(id)].feature = split->feature;
        tree.nodes[static_cast<std::size_t>(id)].threshold = split->threshold;
        int left = build(std::move(left_rows), depth + 1);
        int right = build(std::move(right_rows), depth + 1);
        tree.nodes[static_cast<std::size_t>(id)].left = left;
        tree.nodes[static_cast<std::size_t>(id)].right = right;
        return id;
    }
};

// Total order over rows so that fit() is invariant under input permutation:
// lexicographic by feature values, then target.
std::vector<std::size_t> canonical_order(const Matrix& X, std::span<const double> y) {
    std::vector<std::size_t> order(X.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        for (std::size_t c = 0; c < X.cols(); ++c) {
            if (X.at(a, c) != X.at(b, c)) return X.at(a, c) < X.at(b, c);
        }
        return y[a] < y[b];
    });
    return order;
}

} // namespace

GbtModel fit(const Matrix& X, std::span<const double> y, const Hyperparams& hp,
             std::uint64_t seed) {
    hp.validate();
    (void)seed; // no stochastic components yet; kept for interface stability
    const std::size_t n = X.rows();
    if (n != y.size()) throw ValidationError("feature matrix and target lengths differ");
    if (n < 2) throw ValidationError("training needs at least 2 rows");

    bool any_positive = false;
    for (double v : y) {
        if (v < 0 || !std::isfinite(v)) throw ValidationError("targets must be finite and >= 0");
        if (v > 0) any_positive = true;
    }
    if (!any_positive) {
        std::cerr << "warning: all training targets are zero; model predicts the epsilon floor\n";
    }

    const std::vector<std::size_t> canon = canonical_order(X, y);

    double y_sum = 0;
    for (std::size_t r : canon) y_sum += y[r];
    const double base_score = std::log(y_sum / static_cast<double>(n) + kBaseEps);

    GbtModel model;
    model.base_score = base_score;
    model.hp = hp;
    model.n_features = X.cols();

    std::vector<double> f(n, base_score);
    std::vector<double> grad(n), hess(n);

    auto deviance = [&] {
        double d = 0;
        for (std::size_t r : canon) d += std::exp(f[r]) - y[r] * f[r];
        return d;
    };
    model.round_deviance.push_back(deviance());

    for (int round = 0; round < hp.num_rounds; ++round) {
        for (std::size_t r : canon) {
            GradHess gh = poisson_grad_hess(f[r], y[r]);
            grad[r] = gh.grad;
            hess[r] = gh.hess;
        }

        TreeBuilder builder{X, grad, hess, hp, {}, {}};
        builder.build(canon, 0);

        for (const auto& [leaf_id, rows] : builder.leaves) {
            double w = builder.tree.nodes[static_cast<std::size_t>(leaf_id)].weight;
            for (std::size_t r : rows) f[r] += hp.learning_rate * w;
        }
        model.trees.push_back(std::move(builder.tree));

        double d = deviance();
        double prev = model.round_deviance.back();
        if (d > prev + 1e-9 * std::max(1.0, std::abs(prev))) {
            throw InternalError("training deviance increased at round " + format_int(round + 1) +
                                " (" + format_number(prev) + " -> " + format_number(d) + ")");
        }
        model.round_deviance.push_back(d);
    }
    return model;
}

double predict_row(const GbtModel& model, std::span<const double> row) {
    if (row.size() != model.n_features) {
        throw ValidationError("expected " + format_int(static_cast<std::int64_t>(model.n_features)) +
                              " features, got " + format_int(static_cast<std::int64_t>(row.size())));
    }
    double f = model.base_score;
    for (const Tree& t : model.trees) f += model.hp.learning_rate * t.value_at(row);
    return std::exp(f);
}

std::vector<double> predict(const GbtModel& model, const Matrix& X) {
    if (X.cols() != model.n_features) {
        throw ValidationError("expected " + format_int(static_cast<std::int64_t>(model.n_features)) +
                              " features, got " + format_int(static_cast<std::int64_t>(X.cols())));
    }
    std::vector<double> out(X.rows());
    for (std::size_t r = 0; r < X.rows(); ++r) out[r] = predict_row(model, X.row(r));
    return out;
}

TrainValidationSplit split_train_validation(std::size_t n, double fraction_train,
                                            std::uint64_t seed) {
    if (!(fraction_train > 0) || !(fraction_train < 1)) {
        throw ValidationError("fraction_train must be in (0, 1)");
    }
    if (n < 2) throw ValidationError("need at least 2 rows to split");

    std::size_t n_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(n) * fraction_train));
    if (n_train == 0 || n_train == n) {
        throw ValidationError("degenerate split: " + format_int(static_cast<std::int64_t>(n_train)) +
                              " train / " + format_int(static_cast<std::int64_t>(n - n_train)) +
                              " validation rows");
    }

    std::vector<std::size_t> indices(n);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(indices);

    TrainValidationSplit split;
    split.train.assign(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.validation.assign(indices.begin() + static_cast<std::ptrdiff_t>(n_train), indices.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    return split;
}

double rmse(std::span<const double> pred, std::span<const double> actual) {
    if (pred.size() != actual.size()) throw ValidationError("rmse length mismatch");
    if (pred.empty()) throw ValidationError("rmse over empty vectors");
    double ss = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - actual[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(pred.size()));
}

GridSearchResult grid_search(const std::vector<FeatureVector>& raw_rows,
                             std::span<const double> y,
                             std::span<const Hyperparams> grid, double fraction_train,
                             std::uint64_t split_seed, std::uint64_t model_seed,
                             int workers) {
    if (grid.empty()) throw ValidationError("hyperparameter grid is empty");
    if (raw_rows.size() != y.size()) throw ValidationError("feature/target lengths differ");

    TrainValidationSplit split =
        split_train_validation(raw_rows.size(), fraction_train, split_seed);

    std::vector<FeatureVector> train_rows, validation_rows;
    std::vector<double> y_train, y_validation;
    for (std::size_t i : split.train) {
        train_rows.push_back(raw_rows[i]);
        y_train.push_back(y[i]);
    }
    for (std::size_t i : split.validation) {
        validation_rows.push_back(raw_rows[i]);
        y_validation.push_back(y[i]);
    }

    FitTransformResult transform = fit_transform(train_rows);
    Matrix x_validation = apply_transform(transform.params, validation_rows);

    std::vector<GridTrial> trials(grid.size());
    auto run_trial = [&](std::size_t g) {
        try {
            GbtModel model = fit(transform.transformed, y_train, grid[g], model_seed);
            std::vector<double> pred = predict(model, x_validation);
            trials[g] = GridTrial{grid[g], rmse(pred, y_validation)};
        } catch (const ValidationError& e) {
            throw ValidationError("grid point " + grid[g].describe() + ": " + e.what());
        }
    };

    if (workers <= 1 || grid.size() == 1) {
        for (std::size_t g = 0; g < grid.size(); ++g) run_trial(g);
    } else {
        std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(workers), grid.size());
        std::vector<std::future<void>> futures;
        for (std::size_t w = 0; w < n_workers; ++w) {
            futures.push_back(std::async(std::launch::async, [&, w] {
                for (std::size_t g = w; g < grid.size(); g += n_workers) run_trial(g);
            }));
        }
        for (auto& fut : futures) fut.get();
    }

    std::size_t best_idx = 0;
    for (std::size_t g = 1; g < trials.size(); ++g) {
        const GridTrial& a = trials[g];
        const GridTrial& b = trials[best_idx];
        auto key = [](const GridTrial& t) {
            return std::make_tuple(t.validation_rmse, t.hp.num_rounds, t.hp.max_depth);
        };
        if (key(a) < key(b)) best_idx = g; // final tie-break: grid order
    }

    return GridSearchResult{trials[best_idx].hp, trials[best_idx].validation_rmse,
                            std::move(trials)};
}

KvDoc model_to_kv(const GbtModel& model) {
    KvDoc doc;
    doc.set("model.format", "olm-gbt-1");
    doc.set_number("model.base_score", model.base_score);
    doc.set_int("model.n_features", static_cast<std::int64_t>(model.n_features));
    doc.set_number("model.hp.learning_rate", model.hp.learning_rate);
    doc.set_int("model.hp.max_depth", model.hp.max_depth);
    doc.set_int("model.hp.num_rounds", model.hp.num_rounds);
    doc.set_number("model.hp.reg_lambda", model.hp.reg_lambda);
    doc.set_number("model.hp.gamma", model.hp.gamma);
    doc.set_number("model.hp.min_child_weight", model.hp.min_child_weight);

    doc.set("model.transform.present", model.transform ? "true" : "false");
    if (model.transform) {
        for (std::size_t c = 0; c < kFeatureCount; ++c) {
            const auto& pf = model.transform->features[c];
            std::string prefix = "model.transform." + format_int(static_cast<std::int64_t>(c));
            doc.set_number(prefix + ".offset", pf.offset);
            doc.set_number(prefix + ".mean", pf.mean);
            doc.set_number(prefix + ".stddev", pf.stddev);
        }
    }

    std::vector<std::string> deviance;
    deviance.reserve(model.round_deviance.size());
    for (double d : model.round_deviance) deviance.push_back(format_number(d));
    doc.set("model.deviance", join(deviance, ","));

    doc.set_int("model.trees", static_cast<std::int64_t>(model.trees.size()));
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        const Tree& tree = model.trees[t];
        std::string tp = "model.tree." + format_int(static_cast<std::int64_t>(t));
        doc.set_int(tp + ".nodes", static_cast<std::int64_t>(tree.nodes.size()));
        for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
            const TreeNode& nd = tree.nodes[i];
            std::string value =
                nd.is_leaf()
                    ? "leaf " + format_number(nd.weight)
                    : "split " + format_int(nd.feature) + " " + format_number(nd.threshold) +
                          " " + format_int(nd.left) + " " + format_int(nd.right);
            doc.set(tp + ".node." + format_int(static_cast<std::int64_t>(i)), value);
        }
    }
    return doc;
}

GbtModel model_from_kv(const KvDoc& doc) {
    if (doc.get_or("model.format", "") != "olm-gbt-1") {
        throw ValidationError("unrecognized model format '" +
                              doc.get_or("model.format", "<missing>") + "'");
    }
    GbtModel model;
    model.base_score = doc.number_at("model.base_score");
    std::int64_t nf = doc.int_at("model.n_features");
    if (nf < 1) throw ValidationError("model.n_features must be >= 1");
    model.n_features = static_cast<std::size_t>(nf);
    model.hp.learning_rate = doc.number_at("model.hp.learning_rate");
    model.hp.max_depth = static_cast<int>(doc.int_at("model.hp.max_depth"));
    model.hp.num_rounds = static_cast<int>(doc.int_at("model.hp.num_rounds"));
    model.hp.reg_lambda = doc.number_at("model.hp.reg_lambda");
    model.hp.gamma = doc.number_at("model.hp.gamma");
    model.hp.min_child_weight = doc.number_at("model.hp.min_child_weight");
    model.hp.validate();

    const std::string& present = doc.at("model.transform.present");
    if (present == "true") {
        FeatureTransform ft;
        for (std::size_t c = 0; c < kFeatureCount; ++c) {
            std::string prefix = "model.transform." + format_int(static_cast<std::int64_t>(c));
            ft.features[c].offset = doc.number_at(prefix + ".offset");
            ft.features[c].mean = doc.number_at(prefix + ".mean");
            ft.features[c].stddev = doc.number_at(prefix + ".stddev");
        }
        model.transform = ft;
    } else if (present != "false") {
        throw ValidationError("model.transform.present must be true or false");
    }

    for (const std::string& token : split(doc.at("model.deviance"), ',')) {
        if (token.empty()) continue;
        model.round_deviance.push_back(parse_number(token));
    }

    std::int64_t n_trees = doc.int_at("model.trees");
    if (n_trees < 0) throw ValidationError("model.trees must be >= 0");
    for (std::int64_t t = 0; t < n_trees; ++t) {
        std::string tp = "model.tree." + format_int(t);
        std::int64_t n_nodes = doc.int_at(tp + ".nodes");
        if (n_nodes < 1) throw ValidationError(tp + " has no nodes");
        Tree tree;
        for (std::int64_t i = 0; i < n_nodes; ++i) {
            std::string key = tp + ".node." + format_int(i);
            std::vector<std::string> parts = split(doc.at(key), ' ');
            TreeNode nd;
            if (parts.size() == 2 && parts[0] == "leaf") {
                nd.weight = parse_number(parts[1]);
            } else if (parts.size() == 5 && parts[0] == "split") {
                nd.feature = static_cast<int>(parse_int(parts[1]));
                nd.threshold = parse_number(parts[2]);
                nd.left = static_cast<int>(parse_int(parts[3]));
                nd.right = static_cast<int>(parse_int(parts[4]));
                bool refs_ok = nd.feature >= 0 &&
                               static_cast<std::size_t>(nd.feature) < model.n_features &&
                               nd.left > 0 && nd.left < n_nodes && nd.right > 0 &&
                               nd.right < n_nodes;
                if (!refs_ok) throw ValidationError(key + ": reference out of range");
            } else {
                throw ValidationError(key + ": expected 'leaf <w>' or 'split <f> <t> <l> <r>'");
            }
            tree.nodes.push_back(nd);
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

void save_model(const GbtModel& model, const std::string& path) {
    model_to_kv(model).save_file(path);
}

GbtModel load_model(const std::string& path) {
    return model_from_kv(KvDoc::load_file(path));
}

} // namespace olm::gbt
