#pragma once

#include "deepsep/dataset.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace deepsep {

struct PropParams {
    std::optional<double> sigma;  // Gaussian bandwidth; median pairwise distance when unset
    int max_iter = 1000;
    double tol = 1e-9;
    // Called with the full (l+u) x c matrix after every iteration.
    std::function<void(const ProbMatrix&)> observer;
};

struct PropResult {
    ProbMatrix unlabeled;       // rows for the points not listed as labeled, in input order
    std::vector<bool> flagged;  // unreachable from any labeled point; row set to uniform
    int iterations = 0;
    bool converged = false;
    double sigma = 0.0;
};

/// Row-stochastic transition matrix from Gaussian similarities
/// exp(-|xi - xj|^2 / (2 sigma^2)) with no self loops. Rows without any
/// neighbour mass are left all-zero.
Matrix transition_matrix(const Matrix& X, double sigma);

double median_pairwise_distance(const Matrix& X);

/// Label propagation with hard clamping: Y <- T Y, renormalize rows, reset
/// labeled rows to one-hot, until max |dY| < tol. `labels` holds class ids
/// aligned with `labeled_rows`.
PropResult propagate(const Matrix& X, std::span<const Eigen::Index> labeled_rows,
                     std::span<const int> labels, int num_classes, const PropParams& params = {});

}  // namespace deepsep
