#include "deepsep/tsvm.hpp"

#include "deepsep/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace deepsep {

void TsvmParams::validate() const {
    if (!(C > 0.0)) throw ParameterError("tsvm: C must be positive");
    if (!(Cstar >= 0.0)) throw ParameterError("tsvm: C* must be non-negative");
    if (!(s <= 0.0)) throw ParameterError("tsvm: ramp knee s must be <= 0");
    if (!(tol > 0.0)) throw ParameterError("tsvm: tol must be positive");
    if (max_outer < 1) throw ParameterError("tsvm: max_outer must be >= 1");
    if (max_passes < 1) throw ParameterError("tsvm: max_passes must be >= 1");
}

Vector TsvmModel::decisions(const Matrix& X) const {
    if (X.cols() != w.size()) throw InputError("tsvm: decision input has wrong dimension");
    return (X * w).array() + b;
}

std::string to_string(FitStatus status) {
    return status == FitStatus::Converged ? "converged" : "max_outer_reached";
}

namespace {

void check_signs(std::span<const int> signs, Eigen::Index rows) {
    if (static_cast<Eigen::Index>(signs.size()) != rows)
        throw InputError("tsvm: sign count does not match rows");
    for (int y : signs)
        if (y != 1 && y != -1) throw InputError("tsvm: labels must be +1 or -1");
}

// Dual of a linear SVM with one equality constraint:
//   max  zeta.a - 1/2 a'Ka   s.t.  sum a = 0,  lower <= a <= upper
// Multipliers are signed (w = X'a). An infinite box is allowed for the
// balancing row.
struct BoxQp {
    const Matrix* K = nullptr;
    Vector zeta;
    Vector lower;
    Vector upper;
    Eigen::Index pinned = -1;  // row whose gradient defines b exactly, or -1
};

struct BoxQpResult {
    Vector alpha;
    Vector grad;  // zeta - K alpha
    double b = 0.0;
    double violation = 0.0;
    long iterations = 0;
    bool converged = false;
};

// Pairwise updates on the maximal violating pair. `alpha` must be feasible.
BoxQpResult solve_box_qp(const BoxQp& qp, Vector alpha, double tol, long max_iter) {
    const Matrix& K = *qp.K;
    const Eigen::Index n = qp.zeta.size();
    BoxQpResult r;
    r.grad = qp.zeta - K * alpha;
    constexpr double kTau = 1e-12;

    for (;;) {
        Eigen::Index up = -1, down = -1;
        double gmax = -std::numeric_limits<double>::infinity();
        double gmin = std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < n; ++k) {
            const double g = r.grad[k];
            if (alpha[k] < qp.upper[k] && g > gmax) {
                gmax = g;
                up = k;
            }
            if (alpha[k] > qp.lower[k] && g < gmin) {
                gmin = g;
                down = k;
            }
        }
        r.violation = (up < 0 || down < 0) ? 0.0 : gmax - gmin;
        if (r.violation <= tol) {
            r.converged = true;
            break;
        }
        if (r.iterations >= max_iter) break;
        ++r.iterations;

        double eta = K(up, up) + K(down, down) - 2.0 * K(up, down);
        if (eta < kTau) eta = kTau;
        double step = (gmax - gmin) / eta;
        step = std::min(step, qp.upper[up] - alpha[up]);
        step = std::min(step, alpha[down] - qp.lower[down]);
        alpha[up] += step;
        alpha[down] -= step;
        r.grad.noalias() -= step * (K.col(up) - K.col(down));
    }

    if (qp.pinned >= 0) {
        r.b = r.grad[qp.pinned];
    } else {
        double sum = 0.0;
        int free = 0;
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < n; ++k) {
            const double span = qp.upper[k] - qp.lower[k];
            const double margin = 1e-12 * std::max(1.0, span);
            const bool can_up = alpha[k] < qp.upper[k] - margin;
            const bool can_down = alpha[k] > qp.lower[k] + margin;
            if (can_up && can_down) {
                sum += r.grad[k];
                ++free;
            }
            if (alpha[k] < qp.upper[k]) lo = std::max(lo, r.grad[k]);
            if (alpha[k] > qp.lower[k]) hi = std::min(hi, r.grad[k]);
        }
        if (free > 0)
            r.b = sum / free;
        else if (std::isfinite(lo) && std::isfinite(hi))
            r.b = 0.5 * (lo + hi);
        else
            r.b = std::isfinite(lo) ? lo : (std::isfinite(hi) ? hi : 0.0);
    }
    r.alpha = std::move(alpha);
    return r;
}

double supervised_primal(const Matrix& X, std::span<const int> signs, std::span<const double> costs,
                         const Vector& w, double b) {
    double p = 0.5 * w.squaredNorm();
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        p += costs[k] * hinge(signs[k] * (X.row(i).dot(w) + b));
    }
    return p;
}

}  // namespace

double tsvm_objective(const Vector& w, double b, double C, double Cstar, const Matrix& labeled,
                      std::span<const int> signs, const Matrix& unlabeled) {
    check_signs(signs, labeled.rows());
    if (labeled.cols() != w.size() || (unlabeled.rows() > 0 && unlabeled.cols() != w.size()))
        throw InputError("tsvm_objective: dimension mismatch");
    double j = 0.5 * w.squaredNorm();
    for (Eigen::Index i = 0; i < labeled.rows(); ++i)
        j += C * hinge(signs[static_cast<std::size_t>(i)] * (labeled.row(i).dot(w) + b));
    for (Eigen::Index i = 0; i < unlabeled.rows(); ++i)
        j += Cstar * hinge(std::abs(unlabeled.row(i).dot(w) + b));
    return j;
}

double tsvm_objective(const TsvmModel& model, const Matrix& labeled, std::span<const int> signs,
                      const Matrix& unlabeled) {
    return tsvm_objective(model.w, model.b, model.params.C, model.params.Cstar, labeled, signs,
                          unlabeled);
}

double ramp_objective(const Vector& w, double b, const TsvmParams& params, const Matrix& labeled,
                      std::span<const int> signs, const Matrix& unlabeled) {
    check_signs(signs, labeled.rows());
    double j = 0.5 * w.squaredNorm();
    for (Eigen::Index i = 0; i < labeled.rows(); ++i)
        j += params.C * hinge(signs[static_cast<std::size_t>(i)] * (labeled.row(i).dot(w) + b));
    for (Eigen::Index i = 0; i < unlabeled.rows(); ++i) {
        const double f = unlabeled.row(i).dot(w) + b;
        j += params.Cstar * (ramp(f, params.s) + ramp(-f, params.s));
    }
    return j;
}

QpSolution solve_svm_dual(const Matrix& X, std::span<const int> signs, std::span<const double> costs,
                          double tol, long max_passes) {
    check_signs(signs, X.rows());
    if (static_cast<Eigen::Index>(costs.size()) != X.rows())
        throw InputError("solve_svm_dual: cost count does not match rows");
    if (!X.allFinite()) throw InputError("solve_svm_dual: non-finite features");
    if (!(tol > 0.0)) throw ParameterError("solve_svm_dual: tol must be positive");
    const bool has_pos = std::find(signs.begin(), signs.end(), 1) != signs.end();
    const bool has_neg = std::find(signs.begin(), signs.end(), -1) != signs.end();
    if (!has_pos || !has_neg) throw DegenerateError("solve_svm_dual: both classes must be present");

    const Eigen::Index n = X.rows();
    const Matrix K = X * X.transpose();
    BoxQp qp;
    qp.K = &K;
    qp.zeta.resize(n);
    qp.lower.resize(n);
    qp.upper.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (!(costs[k] >= 0.0)) throw ParameterError("solve_svm_dual: costs must be non-negative");
        qp.zeta[i] = signs[k];
        qp.lower[i] = signs[k] > 0 ? 0.0 : -costs[k];
        qp.upper[i] = signs[k] > 0 ? costs[k] : 0.0;
    }

    const long max_iter = max_passes * std::max<Eigen::Index>(n, 1);
    double kkt_tol = tol;
    BoxQpResult r = solve_box_qp(qp, Vector::Zero(n), kkt_tol, max_iter);
    QpSolution sol;
    long total = r.iterations;
    // Tighten the KKT tolerance until the duality gap is within tol as well.
    for (;;) {
        if (!r.converged)
            throw SolverError("solve_svm_dual: no convergence after " + std::to_string(total) +
                              " iterations, KKT residual " + std::to_string(r.violation));
        sol.w = X.transpose() * r.alpha;
        sol.b = r.b;
        sol.primal = supervised_primal(X, signs, costs, sol.w, sol.b);
        sol.dual = qp.zeta.dot(r.alpha) - 0.5 * sol.w.squaredNorm();
        if (sol.primal - sol.dual <= tol * std::max(1.0, std::abs(sol.primal)) || kkt_tol < 1e-14) break;
        kkt_tol *= 0.1;
        r = solve_box_qp(qp, r.alpha, kkt_tol, max_iter);
        total += r.iterations;
    }
    sol.alpha.resize(n);
    sol.support.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        sol.alpha[i] = signs[static_cast<std::size_t>(i)] * r.alpha[i];
        sol.support[static_cast<std::size_t>(i)] = sol.alpha[i] > 0.0;
    }
    sol.max_violation = r.violation;
    sol.iterations = total;
    return sol;
}

TsvmModel cccp_fit(const Matrix& labeled, std::span<const int> signs, const Matrix& unlabeled,
                   const TsvmParams& params) {
    params.validate();
    check_signs(signs, labeled.rows());
    if (!labeled.allFinite() || !unlabeled.allFinite()) throw InputError("cccp_fit: non-finite features");
    if (unlabeled.rows() > 0 && unlabeled.cols() != labeled.cols())
        throw InputError("cccp_fit: labeled and unlabeled dimensions differ");

    const Eigen::Index l = labeled.rows();
    const Eigen::Index u = unlabeled.rows();
    const Eigen::Index dim = labeled.cols();

    TsvmModel model;
    model.params = params;
    {
        const std::vector<double> costs(static_cast<std::size_t>(l), params.C);
        const QpSolution sup = solve_svm_dual(labeled, signs, costs, params.tol, params.max_passes);
        model.w = sup.w;
        model.b = sup.b;
    }
    if (u == 0 || params.Cstar == 0.0) return model;

    // Rows: labeled, unlabeled as +1, unlabeled as -1, optional balancing row.
    const Eigen::Index n = l + 2 * u + (params.balance ? 1 : 0);
    Matrix X(n, dim);
    X.topRows(l) = labeled;
    X.middleRows(l, u) = unlabeled;
    X.middleRows(l + u, u) = unlabeled;
    Vector y(n);
    for (Eigen::Index i = 0; i < l; ++i) y[i] = signs[static_cast<std::size_t>(i)];
    y.segment(l, u).setOnes();
    y.segment(l + u, u).setConstant(-1.0);

    BoxQp qp;
    qp.zeta = y;
    qp.lower.resize(n);
    qp.upper.resize(n);
    for (Eigen::Index i = 0; i < l; ++i) {
        qp.lower[i] = y[i] > 0 ? 0.0 : -params.C;
        qp.upper[i] = y[i] > 0 ? params.C : 0.0;
    }
    if (params.balance) {
        const Eigen::Index z = n - 1;
        X.row(z) = unlabeled.colwise().mean();
        y[z] = 0.0;
        double mean_label = 0.0;
        for (int s : signs) mean_label += s;
        qp.zeta[z] = mean_label / static_cast<double>(l);
        qp.lower[z] = -std::numeric_limits<double>::infinity();
        qp.upper[z] = std::numeric_limits<double>::infinity();
        qp.pinned = z;
    }
    const Matrix K = X * X.transpose();
    qp.K = &K;

    const long max_iter = params.max_passes * n;
    std::vector<bool> active(static_cast<std::size_t>(2 * u));
    auto update_active = [&](const Vector& w, double b) {
        std::size_t count = 0;
        bool changed = false;
        for (Eigen::Index i = 0; i < 2 * u; ++i) {
            const Eigen::Index row = l + i;
            const bool a = y[row] * (X.row(row).dot(w) + b) < params.s;
            const auto k = static_cast<std::size_t>(i);
            changed = changed || a != active[k];
            active[k] = a;
            count += a ? 1 : 0;
        }
        return std::pair{changed, count};
    };
    update_active(model.w, model.b);

    // Convex part of the surrogate plus the linearized concave part, up to a
    // constant, for the current active set.
    auto linearized = [&](const Vector& w, double b) {
        double j = 0.5 * w.squaredNorm();
        for (Eigen::Index i = 0; i < l; ++i) j += params.C * hinge(y[i] * (X.row(i).dot(w) + b));
        for (Eigen::Index i = 0; i < 2 * u; ++i) {
            const Eigen::Index row = l + i;
            const double z = y[row] * (X.row(row).dot(w) + b);
            j += params.Cstar * hinge(z);
            if (active[static_cast<std::size_t>(i)]) j += params.Cstar * z;
        }
        return j;
    };
    Vector prev_w = model.w;
    double prev_b = model.b;

    Vector alpha = Vector::Zero(n);
    Vector best_w = model.w;
    double best_b = model.b;
    double best_j = std::numeric_limits<double>::infinity();
    model.trace.status = FitStatus::MaxOuterReached;
    for (int t = 1; t <= params.max_outer; ++t) {
        // box for the linearized subproblem: -beta <= y a <= C* - beta
        for (Eigen::Index i = 0; i < 2 * u; ++i) {
            const Eigen::Index row = l + i;
            const double beta = active[static_cast<std::size_t>(i)] ? params.Cstar : 0.0;
            const double lo = -beta, hi = params.Cstar - beta;
            qp.lower[row] = y[row] > 0 ? lo : -hi;
            qp.upper[row] = y[row] > 0 ? hi : -lo;
        }
        // warm start: clip into the new box, then restore sum(alpha) = 0
        if (params.balance) {
            for (Eigen::Index i = 0; i < n - 1; ++i) alpha[i] = std::clamp(alpha[i], qp.lower[i], qp.upper[i]);
            alpha[n - 1] = 0.0;
            alpha[n - 1] = -alpha.sum();
        } else {
            alpha.setZero();
        }
        BoxQpResult r = solve_box_qp(qp, alpha, params.tol, max_iter);
        // The descent argument needs the new iterate to be no worse than the
        // previous one on this subproblem's objective; tighten the KKT
        // tolerance until it is.
        if (t >= 2 || !params.balance) {
            double kkt_tol = params.tol;
            const double before = linearized(prev_w, prev_b);
            while (linearized(X.transpose() * r.alpha, r.b) > before && kkt_tol > 1e-14) {
                kkt_tol *= 0.1;
                r = solve_box_qp(qp, r.alpha, kkt_tol, max_iter);
            }
        }
        alpha = r.alpha;
        const Vector w = X.transpose() * alpha;
        const double b = r.b;
        prev_w = w;
        prev_b = b;
        const double j = ramp_objective(w, b, params, labeled, signs, unlabeled);

        model.trace.w.push_back(w);
        model.trace.b.push_back(b);
        model.trace.surrogate.push_back(j);
        model.trace.outer_iterations = t;
        if (j < best_j) {
            best_j = j;
            best_w = w;
            best_b = b;
        }
        const auto [changed, count] = update_active(w, b);
        model.trace.active.push_back(count);
        const std::size_t m = model.trace.surrogate.size();
        const bool flat = m >= 2 && std::abs(model.trace.surrogate[m - 2] - j) <=
                                        params.objective_tol * std::max(1.0, std::abs(j));
        if (!changed || flat) {
            model.trace.status = FitStatus::Converged;
            break;
        }
    }
    if (model.trace.status == FitStatus::Converged) {
        model.w = model.trace.w.back();
        model.b = model.trace.b.back();
    } else {
        model.w = best_w;
        model.b = best_b;
    }
    return model;
}

std::vector<TsvmModel> ovr_fit(const Matrix& labeled, std::span<const int> labels, int num_classes,
                               const Matrix& unlabeled, const TsvmParams& params) {
    if (num_classes < 2) throw ParameterError("ovr_fit: need at least 2 classes");
    if (static_cast<Eigen::Index>(labels.size()) != labeled.rows())
        throw InputError("ovr_fit: label count does not match rows");
    std::vector<int> count(static_cast<std::size_t>(num_classes), 0);
    for (int y : labels) {
        if (y < 1 || y > num_classes) throw InputError("ovr_fit: label " + std::to_string(y) + " out of range");
        ++count[static_cast<std::size_t>(y - 1)];
    }
    for (int k = 0; k < num_classes; ++k)
        if (count[static_cast<std::size_t>(k)] == 0)
            throw DegenerateError("ovr_fit: class " + std::to_string(k + 1) + " has no labeled points");

    std::vector<TsvmModel> models;
    models.reserve(static_cast<std::size_t>(num_classes));
    std::vector<int> signs(labels.size());
    for (int k = 1; k <= num_classes; ++k) {
        for (std::size_t i = 0; i < labels.size(); ++i) signs[i] = labels[i] == k ? 1 : -1;
        models.push_back(cccp_fit(labeled, signs, unlabeled, params));
    }
    return models;
}

Matrix ovr_decisions(std::span<const TsvmModel> models, const Matrix& X) {
    Matrix d(X.rows(), static_cast<Eigen::Index>(models.size()));
    for (std::size_t k = 0; k < models.size(); ++k) d.col(static_cast<Eigen::Index>(k)) = models[k].decisions(X);
    return d;
}

ProbMatrix decisions_to_probs(const Matrix& decisions) {
    if (!decisions.allFinite()) throw InputError("decisions_to_probs: non-finite decision values");
    ProbMatrix p(decisions.rows(), decisions.cols());
    // log sigma(d) = -log(1 + exp(-d)), evaluated without overflow
    auto log_sigmoid = [](double d) { return d >= 0 ? -std::log1p(std::exp(-d)) : d - std::log1p(std::exp(d)); };
    for (Eigen::Index i = 0; i < decisions.rows(); ++i) {
        for (Eigen::Index j = 0; j < decisions.cols(); ++j) p(i, j) = log_sigmoid(decisions(i, j));
        const double mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp().matrix();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

}  // namespace deepsep
