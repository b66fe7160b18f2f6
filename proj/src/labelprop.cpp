#include "deepsep/labelprop.hpp"

#include "deepsep/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace deepsep {

double median_pairwise_distance(const Matrix& X) {
    const Eigen::Index n = X.rows();
    if (n < 2) return 1.0;
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((X.row(i) - X.row(j)).norm());
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    return *mid > 0.0 ? *mid : 1.0;
}

Matrix transition_matrix(const Matrix& X, double sigma) {
    if (!(sigma > 0.0)) throw ParameterError("label propagation: sigma must be positive");
    const Eigen::Index n = X.rows();
    const Vector sq = X.rowwise().squaredNorm();
    Matrix T = X * X.transpose();
    const double scale = -1.0 / (2.0 * sigma * sigma);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
            T(i, j) = i == j ? 0.0 : std::exp(scale * std::max(0.0, sq[i] + sq[j] - 2.0 * T(i, j)));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s = T.row(i).sum();
        if (s > 0.0) T.row(i) /= s;
    }
    return T;
}

PropResult propagate(const Matrix& X, std::span<const Eigen::Index> labeled_rows,
                     std::span<const int> labels, int num_classes, const PropParams& params) {
    if (num_classes < 2) throw ParameterError("propagate: need at least 2 classes");
    if (labeled_rows.size() != labels.size()) throw InputError("propagate: labels and rows differ in length");
    if (!X.allFinite()) throw InputError("propagate: non-finite features");
    if (params.max_iter < 1) throw ParameterError("propagate: max_iter must be >= 1");
    const Eigen::Index n = X.rows();

    std::vector<int> row_label(static_cast<std::size_t>(n), 0);
    std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
    for (std::size_t k = 0; k < labels.size(); ++k) {
        const auto r = labeled_rows[k];
        if (r < 0 || r >= n) throw InputError("propagate: labeled row index out of range");
        if (labels[k] < 1 || labels[k] > num_classes) throw InputError("propagate: label out of range");
        row_label[static_cast<std::size_t>(r)] = labels[k];
        seen[static_cast<std::size_t>(labels[k] - 1)] = true;
    }
    for (int k = 0; k < num_classes; ++k)
        if (!seen[static_cast<std::size_t>(k)])
            throw DegenerateError("propagate: class " + std::to_string(k + 1) + " has no labeled point");

    PropResult res;
    res.sigma = params.sigma ? *params.sigma : median_pairwise_distance(X);
    const Matrix T = transition_matrix(X, res.sigma);

    // Points reachable from a labeled point through edges with positive weight.
    // Mass flows along T(i, j) > 0 from j into i.
    std::vector<bool> reached(static_cast<std::size_t>(n), false);
    std::deque<Eigen::Index> queue;
    for (Eigen::Index i = 0; i < n; ++i)
        if (row_label[static_cast<std::size_t>(i)] > 0) {
            reached[static_cast<std::size_t>(i)] = true;
            queue.push_back(i);
        }
    while (!queue.empty()) {
        const Eigen::Index j = queue.front();
        queue.pop_front();
        for (Eigen::Index i = 0; i < n; ++i)
            if (!reached[static_cast<std::size_t>(i)] && T(i, j) > 0.0) {
                reached[static_cast<std::size_t>(i)] = true;
                queue.push_back(i);
            }
    }

    const double uniform = 1.0 / num_classes;
    auto clamp = [&](ProbMatrix& Y) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const int y = row_label[static_cast<std::size_t>(i)];
            if (y > 0) {
                Y.row(i).setZero();
                Y(i, y - 1) = 1.0;
            } else if (!reached[static_cast<std::size_t>(i)]) {
                Y.row(i).setConstant(uniform);
            }
        }
    };
    ProbMatrix Y = ProbMatrix::Constant(n, num_classes, uniform);
    clamp(Y);

    for (int it = 1; it <= params.max_iter; ++it) {
        ProbMatrix next = T * Y;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double s = next.row(i).sum();
            if (s > 0.0)
                next.row(i) /= s;
            else
                next.row(i).setConstant(uniform);
        }
        clamp(next);
        const double delta = (next - Y).cwiseAbs().maxCoeff();
        Y = std::move(next);
        res.iterations = it;
        if (params.observer) params.observer(Y);
        if (delta < params.tol) {
            res.converged = true;
            break;
        }
    }

    std::vector<Eigen::Index> unl;
    for (Eigen::Index i = 0; i < n; ++i)
        if (row_label[static_cast<std::size_t>(i)] == 0) unl.push_back(i);
    res.unlabeled = select_rows(Y, unl);
    for (auto i : unl) res.flagged.push_back(!reached[static_cast<std::size_t>(i)]);
    return res;
}

}  // namespace deepsep
