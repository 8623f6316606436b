#pragma once

#include "olm/features.hpp"
#include "olm/kvdoc.hpp"
#include "olm/matrix.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace olm::gbt {

struct Hyperparams {
    double learning_rate = 0.1; // in (0, 1]
    int max_depth = 3;
    int num_rounds = 100;
    double reg_lambda = 1.0;      // leaf L2
    double gamma = 0.0;           // minimum split gain
    double min_child_weight = 1.0; // minimum hessian sum per child

    void validate() const;
    std::string describe() const;

    bool operator==(const Hyperparams&) const = default;
};

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0;
    int left = -1;
    int right = -1;
    double weight = 0; // leaf value on the log scale, before learning rate

    bool is_leaf() const { return feature < 0; }

    bool operator==(const TreeNode&) const = default;
};

struct Tree {
    std::vector<TreeNode> nodes; // nodes[0] is the root, preorder

    double value_at(std::span<const double> row) const;
    int depth() const;

    bool operator==(const Tree&) const = default;
};

// The fitted ensemble. Prediction for a row is
// exp(base_score + sum_t learning_rate * leaf_t(row)).
struct GbtModel {
    double base_score = 0;
    std::vector<Tree> trees;
    Hyperparams hp;
    std::size_t n_features = 0;
    // Transform the features were fitted under; absent when the caller
    // trained on pre-transformed or raw data.
    std::optional<FeatureTransform> transform;
    // Training deviance sum(exp(f) - y*f) after the base score and after
    // each round; length trees.size() + 1.
    std::vector<double> round_deviance;

    bool operator==(const GbtModel&) const = default;
};

struct GradHess {
    double grad = 0;
    double hess = 0;
};

// Second-order expansion of the Poisson negative log-likelihood with log
// link, L(f) = exp(f) - y*f: grad = exp(f) - y, hess = exp(f) > 0.
GradHess poisson_grad_hess(double pred_log, double y);

struct SplitDecision {
    int feature = -1;
    double threshold = 0;
    double gain = 0; // raw gain, gamma not subtracted
    double left_grad = 0, left_hess = 0;
    double right_grad = 0, right_hess = 0;
};

// Exact greedy search over every feature and every midpoint between
// consecutive distinct sorted values. Returns the candidate maximizing
// gain = 0.5*[GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda)],
// or nullopt when no candidate clears gamma and the child constraints.
std::optional<SplitDecision> best_split(const Matrix& X, std::span<const std::size_t> rows,
                                        std::span<const double> grad,
                                        std::span<const double> hess,
                                        const Hyperparams& hp);

// Trains the boosted ensemble. Deterministic given (X, y, hp, seed) and
// invariant under permutation of the training rows (rows are brought into
// a canonical order before any accumulation). The seed is reserved for
// stochastic variants; the current learner does not subsample.
GbtModel fit(const Matrix& X, std::span<const double> y, const Hyperparams& hp,
             std::uint64_t seed);

// Strictly positive predicted counts.
std::vector<double> predict(const GbtModel& model, const Matrix& X);
double predict_row(const GbtModel& model, std::span<const double> row);

struct TrainValidationSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

// Disjoint, exhaustive, deterministic given the seed; train side takes
// floor(n * fraction_train) rows.
TrainValidationSplit split_train_validation(std::size_t n, double fraction_train,
                                            std::uint64_t seed);

double rmse(std::span<const double> pred, std::span<const double> actual);

struct GridTrial {
    Hyperparams hp;
    double validation_rmse = 0;
};

struct GridSearchResult {
    Hyperparams best;
    double validation_rmse = 0;
    std::vector<GridTrial> all_trials; // grid order
};

// Fits the transform on the training side, trains every grid point on it
// and scores RMSE on the validation side. Ties break toward fewer rounds,
// then shallower depth, then grid order. Grid points are independent and
// may be trained concurrently (workers > 1); the outcome does not depend
// on scheduling.
GridSearchResult grid_search(const std::vector<FeatureVector>& raw_rows,
                             std::span<const double> y,
                             std::span<const Hyperparams> grid, double fraction_train,
                             std::uint64_t split_seed, std::uint64_t model_seed,
                             int workers = 1);

// Model (de)serialization as a key-value document; round-trips exactly.
KvDoc model_to_kv(const GbtModel& model);
GbtModel model_from_kv(const KvDoc& doc);
void save_model(const GbtModel& model, const std::string& path);
GbtModel load_model(const std::string& path);

} // namespace olm::gbt
