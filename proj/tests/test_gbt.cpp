#include "olm/gbt.hpp"

#include "olm/errors.hpp"
#include "olm/features.hpp"
#include "olm/matrix.hpp"
#include "olm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <tuple>
#include <vector>

#include "doctest.h"

using namespace olm;
using namespace olm::gbt;

namespace {

double poisson_loss(double f, double y) { return std::exp(f) - y * f; }

struct RandomDataset {
    Matrix x;
    std::vector<double> y;
};

// y ~ Poisson(exp(2 + 1.2*x0 - 0.6*x1)); the remaining columns are noise.
RandomDataset make_dataset(std::size_t n, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    RandomDataset ds;
    ds.x = Matrix(n, cols);
    ds.y.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < cols; ++c) ds.x.at(r, c) = rng.uniform(-1.0, 1.0);
        double rate = std::exp(2.0 + 1.2 * ds.x.at(r, 0) - (cols > 1 ? 0.6 * ds.x.at(r, 1) : 0.0));
        ds.y[r] = static_cast<double>(rng.poisson(rate));
    }
    return ds;
}

// Independent split search: enumerates every feature and every midpoint
// between consecutive distinct values, partitioning by a full scan instead
// of the incremental prefix sums the learner uses. Mirrors the tie rules:
// strict improvement only, features and thresholds visited in ascending
// order. Also reports the runner-up gain so callers can skip the argmax
// comparison when two candidates are too close to order reliably.
struct BruteForceBest {
    std::optional<SplitDecision> best;
    double runner_up_gain = -1e300;
};

BruteForceBest brute_force_split(const Matrix& x, const std::vector<std::size_t>& rows,
                                 const std::vector<double>& grad,
                                 const std::vector<double>& hess, const Hyperparams& hp) {
    BruteForceBest out;
    if (rows.size() < 2) return out;

    double total_grad = 0, total_hess = 0;
    for (std::size_t r : rows) {
        total_grad += grad[r];
        total_hess += hess[r];
    }
    const double parent = total_grad * total_grad / (total_hess + hp.reg_lambda);

    for (std::size_t f = 0; f < x.cols(); ++f) {
        std::vector<double> values;
        for (std::size_t r : rows) values.push_back(x.at(r, f));
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());

        for (std::size_t i = 0; i + 1 < values.size(); ++i) {
            double lo = values[i];
            double hi = values[i + 1];
            double threshold = lo + (hi - lo) / 2;
            if (!(threshold > lo) || !(threshold <= hi)) continue;

            double lg = 0, lh = 0, rg = 0, rh = 0;
            for (std::size_t r : rows) {
                if (x.at(r, f) < threshold) {
                    lg += grad[r];
                    lh += hess[r];
                } else {
                    rg += grad[r];
                    rh += hess[r];
                }
            }
            if (lh < hp.min_child_weight || rh < hp.min_child_weight) continue;

            double gain = 0.5 * (lg * lg / (lh + hp.reg_lambda) +
                                 rg * rg / (rh + hp.reg_lambda) - parent);
            if (gain - hp.gamma <= 0) continue;
            if (!out.best || gain > out.best->gain) {
                if (out.best) out.runner_up_gain = std::max(out.runner_up_gain, out.best->gain);
                out.best = SplitDecision{static_cast<int>(f), threshold, gain, lg, lh, rg, rh};
            } else {
                out.runner_up_gain = std::max(out.runner_up_gain, gain);
            }
        }
    }
    return out;
}

std::vector<FeatureVector> to_feature_rows(const Matrix& x) {
    std::vector<FeatureVector> rows;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        FeatureVector v;
        // Raw features must stay nonnegative for the log1p transform.
        v.alexa_rank = std::exp(x.at(r, 0));
        v.monthly_uniques = std::exp(x.at(r, 1 % x.cols()));
        v.trends_sum = std::exp(x.at(r, 2 % x.cols()));
        v.trends_median = std::exp(x.at(r, 3 % x.cols()));
        rows.push_back(v);
    }
    return rows;
}

} // namespace

TEST_CASE("poisson gradient and hessian match finite differences") {
    const double fs[] = {-2.0, -0.5, 0.0, 0.3, 1.5, 3.0};
    const double ys[] = {0.0, 1.0, 7.0, 120.5};
    for (double f : fs) {
        for (double y : ys) {
            GradHess gh = poisson_grad_hess(f, y);
            CHECK(gh.grad == std::exp(f) - y);
            CHECK(gh.hess == std::exp(f));
            CHECK(gh.hess > 0);

            double h = 1e-5;
            double fd_grad = (poisson_loss(f + h, y) - poisson_loss(f - h, y)) / (2 * h);
            CHECK(gh.grad == doctest::Approx(fd_grad).epsilon(1e-6));

            h = 1e-4;
            double fd_hess =
                (poisson_loss(f + h, y) - 2 * poisson_loss(f, y) + poisson_loss(f - h, y)) /
                (h * h);
            CHECK(gh.hess == doctest::Approx(fd_hess).epsilon(1e-5));
        }
    }
    CHECK_THROWS_AS(poisson_grad_hess(std::nan(""), 1.0), ValidationError);
    CHECK_THROWS_AS(poisson_grad_hess(0.0, -1.0), ValidationError);
}

TEST_CASE("hand-worked split on four rows") {
    Matrix x = Matrix::from_rows({{1}, {2}, {3}, {4}});
    std::vector<std::size_t> rows = {0, 1, 2, 3};
    std::vector<double> grad = {4.5, 4.5, -4.5, -4.5};
    std::vector<double> hess = {5.5, 5.5, 5.5, 5.5};
    Hyperparams hp;
    hp.reg_lambda = 0;
    hp.gamma = 0;
    hp.min_child_weight = 0;

    auto split = best_split(x, rows, grad, hess, hp);
    REQUIRE(split.has_value());
    CHECK(split->feature == 0);
    CHECK(split->threshold == 2.5);
    // GL=9, HL=11, GR=-9, HR=11, G=0: gain = 0.5*(81/11 + 81/11) = 81/11.
    CHECK(split->gain == 81.0 / 11.0);
    CHECK(split->left_grad == 9.0);
    CHECK(split->left_hess == 11.0);
    CHECK(split->right_grad == -9.0);
    CHECK(split->right_hess == 11.0);

    // One round at learning rate 1: the Newton steps -/+ 9/11 exceed the
    // 0.7 step cap, so the leaves land exactly on the cap.
    hp.max_depth = 1;
    hp.num_rounds = 1;
    hp.learning_rate = 1.0;
    std::vector<double> y = {1, 1, 10, 10};
    GbtModel model = fit(x, y, hp, 0);
    REQUIRE(model.trees.size() == 1);
    REQUIRE(model.trees[0].nodes.size() == 3);
    CHECK(model.trees[0].nodes[0].feature == 0);
    CHECK(model.trees[0].nodes[0].threshold == 2.5);
    CHECK(model.trees[0].nodes[1].weight == -0.7);
    CHECK(model.trees[0].nodes[2].weight == 0.7);
    CHECK(predict_row(model, x.row(0)) == doctest::Approx(5.5 * std::exp(-0.7)).epsilon(1e-7));
    CHECK(predict_row(model, x.row(3)) == doctest::Approx(5.5 * std::exp(0.7)).epsilon(1e-7));
}

TEST_CASE("split search agrees with a brute-force scan") {
    Rng rng(20240811);
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        std::size_t n = 2 + rng.below(39);
        std::size_t cols = 1 + rng.below(4);
        Matrix x(n, cols);
        std::vector<double> grad(n), hess(n);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                double v = rng.uniform(0.0, 10.0);
                // Snap half the values to a coarse grid to force duplicates.
                if (rng.below(2) == 0) v = std::floor(v * 2) / 2;
                x.at(r, c) = v;
            }
            grad[r] = rng.uniform(-3.0, 3.0);
            hess[r] = rng.uniform(0.1, 5.0);
        }

        Hyperparams hp;
        hp.reg_lambda = (trial % 2 == 0) ? 0.0 : 1.0;
        hp.gamma = (trial % 3 == 0) ? 0.2 : 0.0;
        hp.min_child_weight = (trial % 5 == 0) ? 1.5 : 0.0;

        std::vector<std::size_t> rows(n);
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        if (trial % 4 == 0 && n > 4) rows.resize(n / 2 + 1); // subset of the matrix

        auto got = best_split(x, rows, grad, hess, hp);
        BruteForceBest want = brute_force_split(x, rows, grad, hess, hp);

        REQUIRE(got.has_value() == want.best.has_value());
        if (!got) continue;
        ++checked;
        CHECK(got->gain == doctest::Approx(want.best->gain).epsilon(1e-9));
        // Only compare the argmax when the top two candidates are clearly
        // separated; closer than that and floating-point noise may order
        // them differently between the two scans.
        double gap = want.best->gain - want.runner_up_gain;
        if (gap > 1e-7 * std::max(1.0, std::abs(want.best->gain))) {
            CHECK(got->feature == want.best->feature);
            CHECK(got->threshold == want.best->threshold);
            CHECK(got->left_grad == doctest::Approx(want.best->left_grad).epsilon(1e-9));
            CHECK(got->left_hess == doctest::Approx(want.best->left_hess).epsilon(1e-9));
            CHECK(got->right_grad == doctest::Approx(want.best->right_grad).epsilon(1e-9));
            CHECK(got->right_hess == doctest::Approx(want.best->right_hess).epsilon(1e-9));
        }
    }
    CHECK(checked >= 30); // most trials should admit a split
}

TEST_CASE("split search respects constraints") {
    Matrix x = Matrix::from_rows({{1}, {2}, {3}, {4}});
    std::vector<std::size_t> rows = {0, 1, 2, 3};
    std::vector<double> grad = {4.5, 4.5, -4.5, -4.5};
    std::vector<double> hess = {5.5, 5.5, 5.5, 5.5};

    Hyperparams hp;
    hp.reg_lambda = 0;
    hp.min_child_weight = 0;

    hp.gamma = 81.0 / 11.0 + 0.001; // just above the best achievable gain
    CHECK_FALSE(best_split(x, rows, grad, hess, hp).has_value());

    hp.gamma = 0;
    hp.min_child_weight = 12.0; // no partition reaches 12 on both sides
    CHECK_FALSE(best_split(x, rows, grad, hess, hp).has_value());

    hp.min_child_weight = 11.0; // only the 2/2 partition has 11 per side
    auto split = best_split(x, rows, grad, hess, hp);
    REQUIRE(split.has_value());
    CHECK(split->threshold == 2.5);

    // A constant column admits no threshold at all.
    Matrix constant = Matrix::from_rows({{3}, {3}, {3}});
    std::vector<std::size_t> r3 = {0, 1, 2};
    std::vector<double> g3 = {1, -2, 1};
    std::vector<double> h3 = {1, 1, 1};
    hp.min_child_weight = 0;
    CHECK_FALSE(best_split(constant, r3, g3, h3, hp).has_value());

    CHECK_FALSE(best_split(x, std::vector<std::size_t>{1}, grad, hess, hp).has_value());
}

TEST_CASE("training deviance is recorded and never increases") {
    RandomDataset ds = make_dataset(60, 3, 7);
    Hyperparams hp;
    hp.learning_rate = 0.3;
    hp.max_depth = 3;
    hp.num_rounds = 40;
    GbtModel model = fit(ds.x, ds.y, hp, 0);

    REQUIRE(model.round_deviance.size() == 41);
    double y_sum = std::accumulate(ds.y.begin(), ds.y.end(), 0.0);
    double base = std::log(y_sum / 60.0 + 1e-8);
    CHECK(model.base_score == doctest::Approx(base).epsilon(1e-12));

    double expected_first = 0;
    for (double v : ds.y) expected_first += std::exp(base) - v * base;
    CHECK(model.round_deviance.front() == doctest::Approx(expected_first).epsilon(1e-12));

    for (std::size_t i = 1; i < model.round_deviance.size(); ++i) {
        double prev = model.round_deviance[i - 1];
        CHECK(model.round_deviance[i] <= prev + 1e-9 * std::max(1.0, std::abs(prev)));
    }
    CHECK(model.round_deviance.back() < model.round_deviance.front());

    // Every leaf step obeys the cap, even on wild targets.
    for (const Tree& t : model.trees) {
        for (const TreeNode& nd : t.nodes) {
            if (nd.is_leaf()) CHECK(std::abs(nd.weight) <= 0.7);
        }
        CHECK(t.depth() <= hp.max_depth);
    }
}

TEST_CASE("predictions are strictly positive") {
    RandomDataset ds = make_dataset(40, 2, 11);
    for (std::size_t i = 0; i < ds.y.size(); i += 3) ds.y[i] = 0; // mix in zeros
    Hyperparams hp;
    hp.num_rounds = 30;
    GbtModel model = fit(ds.x, ds.y, hp, 0);
    for (double p : predict(model, ds.x)) CHECK(p > 0);

    // All-zero targets collapse to the epsilon floor but stay positive.
    std::vector<double> zeros(ds.y.size(), 0.0);
    GbtModel floor_model = fit(ds.x, zeros, hp, 0);
    for (double p : predict(floor_model, ds.x)) {
        CHECK(p > 0);
        CHECK(p < 1e-6);
    }
}

TEST_CASE("training is deterministic and permutation invariant") {
    RandomDataset ds = make_dataset(50, 4, 13);
    // Duplicate feature rows exercise the canonical-order tie-break on y.
    for (std::size_t c = 0; c < 4; ++c) ds.x.at(4, c) = ds.x.at(3, c);
    ds.y[3] = 2;
    ds.y[4] = 5;
    for (std::size_t c = 0; c < 4; ++c) ds.x.at(8, c) = ds.x.at(7, c);
    ds.y[8] = ds.y[7];

    Hyperparams hp;
    hp.num_rounds = 25;
    GbtModel a = fit(ds.x, ds.y, hp, 1);
    GbtModel b = fit(ds.x, ds.y, hp, 1);
    CHECK(a == b);

    std::vector<std::size_t> perm(ds.x.rows());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(99);
    rng.shuffle(perm);
    Matrix px = ds.x.take_rows(perm);
    std::vector<double> py(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) py[i] = ds.y[perm[i]];

    GbtModel c = fit(px, py, hp, 1);
    CHECK(a == c); // bit-exact, including every tree and deviance entry

    RandomDataset probe = make_dataset(10, 4, 17);
    std::vector<double> pa = predict(a, probe.x);
    std::vector<double> pc = predict(c, probe.x);
    CHECK(pa == pc);
}

TEST_CASE("fit rejects malformed inputs") {
    Matrix x = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
    Hyperparams hp;
    CHECK_THROWS_AS(fit(x, std::vector<double>{1, 2}, hp, 0), ValidationError);
    CHECK_THROWS_AS(fit(Matrix::from_rows({{1.0}}), std::vector<double>{2}, hp, 0),
                    ValidationError);
    CHECK_THROWS_AS(fit(x, std::vector<double>{1, -2, 3}, hp, 0), ValidationError);
    CHECK_THROWS_AS(fit(x, std::vector<double>{1, std::nan(""), 3}, hp, 0), ValidationError);

    Hyperparams bad;
    bad.learning_rate = 0;
    CHECK_THROWS_AS(fit(x, std::vector<double>{1, 2, 3}, bad, 0), ValidationError);

    GbtModel model = fit(x, std::vector<double>{1, 2, 3}, hp, 0);
    CHECK_THROWS_AS(predict(model, Matrix::from_rows({{1.0}})), ValidationError);
    CHECK_THROWS_AS(predict_row(model, std::vector<double>{1.0}), ValidationError);
}

TEST_CASE("hyperparameter validation") {
    Hyperparams hp;
    CHECK_NOTHROW(hp.validate());
    hp.learning_rate = 1.0;
    CHECK_NOTHROW(hp.validate());

    auto expect_throw = [](auto setter) {
        Hyperparams h;
        setter(h);
        CHECK_THROWS_AS(h.validate(), ValidationError);
    };
    expect_throw([](Hyperparams& h) { h.learning_rate = 0; });
    expect_throw([](Hyperparams& h) { h.learning_rate = 1.0001; });
    expect_throw([](Hyperparams& h) { h.learning_rate = -0.1; });
    expect_throw([](Hyperparams& h) { h.max_depth = 0; });
    expect_throw([](Hyperparams& h) { h.num_rounds = 0; });
    expect_throw([](Hyperparams& h) { h.reg_lambda = -0.001; });
    expect_throw([](Hyperparams& h) { h.gamma = -1; });
    expect_throw([](Hyperparams& h) { h.min_child_weight = -1; });

    CHECK(Hyperparams{}.describe() ==
          "{lr=0.1, depth=3, rounds=100, lambda=1, gamma=0, mcw=1}");
}

TEST_CASE("train/validation split properties") {
    TrainValidationSplit s = split_train_validation(10, 0.8, 1);
    CHECK(s.train.size() == 8);
    CHECK(s.validation.size() == 2);
    CHECK(std::is_sorted(s.train.begin(), s.train.end()));
    CHECK(std::is_sorted(s.validation.begin(), s.validation.end()));

    std::vector<std::size_t> all = s.train;
    all.insert(all.end(), s.validation.begin(), s.validation.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected(10);
    std::iota(expected.begin(), expected.end(), std::size_t{0});
    CHECK(all == expected); // disjoint and exhaustive

    TrainValidationSplit again = split_train_validation(10, 0.8, 1);
    CHECK(s.train == again.train);
    CHECK(s.validation == again.validation);

    int distinct = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        TrainValidationSplit t = split_train_validation(10, 0.8, seed);
        if (t.train != s.train) ++distinct;
    }
    CHECK(distinct >= 1);

    TrainValidationSplit tiny = split_train_validation(2, 0.5, 3);
    CHECK(tiny.train.size() == 1);
    CHECK(tiny.validation.size() == 1);

    CHECK(split_train_validation(5, 0.9999, 1).train.size() == 4); // floor(4.9995)

    CHECK_THROWS_AS(split_train_validation(5, 0.19, 1), ValidationError);  // 0 train rows
    CHECK_THROWS_AS(split_train_validation(1, 0.5, 1), ValidationError);
    CHECK_THROWS_AS(split_train_validation(10, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(split_train_validation(10, 1.0, 1), ValidationError);
    CHECK_THROWS_AS(split_train_validation(10, -0.5, 1), ValidationError);
}

TEST_CASE("rmse") {
    std::vector<double> pred = {1, 2, 3};
    std::vector<double> actual = {2, 2, 5};
    CHECK(rmse(pred, actual) == std::sqrt(5.0 / 3.0));
    CHECK(rmse(pred, pred) == 0.0);
    CHECK_THROWS_AS(rmse(pred, std::vector<double>{1, 2}), ValidationError);
    CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), ValidationError);
}

TEST_CASE("grid search beats the constant baseline and is worker invariant") {
    RandomDataset ds = make_dataset(80, 4, 23);
    std::vector<FeatureVector> rows = to_feature_rows(ds.x);

    std::vector<Hyperparams> grid;
    for (double lr : {0.1, 0.3}) {
        for (int depth : {2, 3}) {
            for (int rounds : {50, 100}) {
                Hyperparams hp;
                hp.learning_rate = lr;
                hp.max_depth = depth;
                hp.num_rounds = rounds;
                hp.reg_lambda = 1;
                grid.push_back(hp);
            }
        }
    }

    GridSearchResult result = grid_search(rows, ds.y, grid, 0.8, 5, 9, 1);
    REQUIRE(result.all_trials.size() == grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) CHECK(result.all_trials[g].hp == grid[g]);

    // The winner must be the tuple-minimum of (rmse, rounds, depth) over
    // the trials, first occurrence winning.
    std::size_t best_idx = 0;
    auto key = [](const GridTrial& t) {
        return std::make_tuple(t.validation_rmse, t.hp.num_rounds, t.hp.max_depth);
    };
    for (std::size_t g = 1; g < result.all_trials.size(); ++g) {
        if (key(result.all_trials[g]) < key(result.all_trials[best_idx])) best_idx = g;
    }
    CHECK(result.best == result.all_trials[best_idx].hp);
    CHECK(result.validation_rmse == result.all_trials[best_idx].validation_rmse);

    // Constant-mean baseline on the same split.
    TrainValidationSplit split = split_train_validation(rows.size(), 0.8, 5);
    double mean = 0;
    for (std::size_t i : split.train) mean += ds.y[i];
    mean /= static_cast<double>(split.train.size());
    std::vector<double> baseline_pred(split.validation.size(), mean);
    std::vector<double> y_validation;
    for (std::size_t i : split.validation) y_validation.push_back(ds.y[i]);
    CHECK(result.validation_rmse < 0.9 * rmse(baseline_pred, y_validation));

    GridSearchResult threaded = grid_search(rows, ds.y, grid, 0.8, 5, 9, 3);
    CHECK(threaded.best == result.best);
    CHECK(threaded.validation_rmse == result.validation_rmse);
    REQUIRE(threaded.all_trials.size() == result.all_trials.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        CHECK(threaded.all_trials[g].hp == result.all_trials[g].hp);
        CHECK(threaded.all_trials[g].validation_rmse == result.all_trials[g].validation_rmse);
    }
}

TEST_CASE("grid search ties break toward shallower depth") {
    // Four perfectly correlated binary columns: a tree can usefully split
    // exactly once, so depths 2, 3 and 5 fit identical models and tie on
    // validation RMSE. The tie must resolve to the shallowest depth.
    std::vector<FeatureVector> rows;
    std::vector<double> y;
    Rng rng(31);
    for (int i = 0; i < 12; ++i) {
        bool high = i % 2 == 1;
        FeatureVector v;
        v.alexa_rank = high ? 120 : 8;
        v.monthly_uniques = high ? 4000 : 60;
        v.trends_sum = high ? 90 : 3;
        v.trends_median = high ? 7 : 0.5;
        rows.push_back(v);
        y.push_back(high ? 11.0 + rng.below(3) : 3.0 + rng.below(2));
    }

    std::vector<Hyperparams> grid;
    for (int depth : {5, 3, 2}) {
        Hyperparams hp;
        hp.max_depth = depth;
        hp.num_rounds = 30;
        grid.push_back(hp);
    }
    GridSearchResult result = grid_search(rows, y, grid, 0.75, 2, 1, 1);
    CHECK(result.all_trials[0].validation_rmse == result.all_trials[1].validation_rmse);
    CHECK(result.all_trials[1].validation_rmse == result.all_trials[2].validation_rmse);
    CHECK(result.best.max_depth == 2);
}

TEST_CASE("grid search rejects malformed inputs") {
    RandomDataset ds = make_dataset(20, 4, 41);
    std::vector<FeatureVector> rows = to_feature_rows(ds.x);
    CHECK_THROWS_AS(grid_search(rows, ds.y, std::vector<Hyperparams>{}, 0.8, 1, 1, 1),
                    ValidationError);

    std::vector<double> short_y(ds.y.begin(), ds.y.end() - 1);
    std::vector<Hyperparams> grid(1);
    CHECK_THROWS_AS(grid_search(rows, short_y, grid, 0.8, 1, 1, 1), ValidationError);

    grid[0].num_rounds = 0;
    try {
        grid_search(rows, ds.y, grid, 0.8, 1, 1, 1);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("grid point") != std::string::npos);
    }
}

TEST_CASE("model serialization round-trips exactly") {
    RandomDataset ds = make_dataset(40, 4, 57);
    std::vector<FeatureVector> rows = to_feature_rows(ds.x);
    FitTransformResult ft = fit_transform(rows);

    Hyperparams hp;
    hp.num_rounds = 20;
    GbtModel model = fit(ft.transformed, ds.y, hp, 3);
    model.transform = ft.params;

    GbtModel back = model_from_kv(model_to_kv(model));
    CHECK(back == model);

    std::vector<double> p1 = predict(model, ft.transformed);
    std::vector<double> p2 = predict(back, ft.transformed);
    CHECK(p1 == p2);

    // Without a transform attached.
    GbtModel bare = fit(ft.transformed, ds.y, hp, 3);
    CHECK(model_from_kv(model_to_kv(bare)) == bare);

    // Zero trees is a valid (intercept-only) model.
    GbtModel stub;
    stub.base_score = 0.3;
    stub.n_features = 4;
    stub.round_deviance = {12.5};
    CHECK(model_from_kv(model_to_kv(stub)) == stub);

    std::filesystem::path path =
        std::filesystem::temp_directory_path() / "olm_test_model.kv";
    save_model(model, path.string());
    CHECK(load_model(path.string()) == model);
    std::filesystem::remove(path);
}

TEST_CASE("model deserialization rejects corrupted documents") {
    Hyperparams hp;
    hp.num_rounds = 3;
    RandomDataset ds = make_dataset(12, 2, 61);
    GbtModel model = fit(ds.x, ds.y, hp, 0);
    KvDoc good = model_to_kv(model);
    CHECK_NOTHROW(model_from_kv(good));

    auto corrupt = [&](const std::string& key, const std::string& value) {
        KvDoc doc = good;
        doc.set(key, value);
        CHECK_THROWS_AS(model_from_kv(doc), ValidationError);
    };
    corrupt("model.format", "olm-gbt-2");
    corrupt("model.n_features", "0");
    corrupt("model.hp.learning_rate", "0");
    corrupt("model.hp.max_depth", "-1");
    corrupt("model.transform.present", "banana");
    corrupt("model.deviance", "1.5,abc");
    corrupt("model.base_score", "not-a-number");
    corrupt("model.tree.0.node.0", "pruned 1 2");
    corrupt("model.tree.0.nodes", "0");

    // Structural references must stay inside the tree and the feature set.
    KvDoc refs = good;
    refs.set("model.tree.0.node.0", "split 0 1.5 0 2"); // left points at the root
    try {
        model_from_kv(refs);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("reference out of range") != std::string::npos);
    }
    refs = good;
    refs.set("model.tree.0.node.0", "split 7 1.5 1 2"); // feature out of range
    CHECK_THROWS_AS(model_from_kv(refs), ValidationError);

    KvDoc empty;
    try {
        model_from_kv(empty);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("unrecognized model format") != std::string::npos);
    }
}
