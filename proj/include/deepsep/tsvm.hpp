#pragma once

#include "deepsep/dataset.hpp"

#include <span>
#include <string>
#include <vector>

namespace deepsep {

struct TsvmParams {
    double C = 0.1;       // labeled cost
    double Cstar = 0.1;   // unlabeled cost
    double s = -0.3;      // ramp knee, <= 0
    bool balance = true;  // mean unlabeled decision == mean labeled label
    double tol = 1e-6;    // KKT tolerance of each dual subproblem
    double objective_tol = 1e-12;  // relative surrogate change that counts as converged
    int max_outer = 50;
    long max_passes = 10000;  // dual solver budget, in multiples of the point count

    void validate() const;
};

enum class FitStatus { Converged, MaxOuterReached };

struct CccpTrace {
    // Iterate t (t >= 1) is the solution of the t-th convex subproblem.
    std::vector<Vector> w;
    std::vector<double> b;
    std::vector<double> surrogate;      // ramp-loss objective at each iterate
    std::vector<std::size_t> active;    // unlabeled copies in the concave-active region
    int outer_iterations = 0;
    FitStatus status = FitStatus::Converged;
};

struct TsvmModel {
    Vector w;
    double b = 0.0;
    TsvmParams params;
    CccpTrace trace;

    double decision(const Eigen::Ref<const Vector>& x) const { return w.dot(x) + b; }
    Vector decisions(const Matrix& X) const;
};

struct QpSolution {
    Vector alpha;               // y_i * signed multiplier, in [0, cost_i]
    std::vector<bool> support;  // alpha_i > 0
    Vector w;
    double b = 0.0;
    double primal = 0.0;
    double dual = 0.0;
    double max_violation = 0.0;
    long iterations = 0;
};

inline double hinge(double x) { return x < 1.0 ? 1.0 - x : 0.0; }

/// min(1 - s, hinge(x)): the hinge clipped at the knee s.
inline double ramp(double x, double s) {
    const double h = hinge(x);
    return h < 1.0 - s ? h : 1.0 - s;
}

/// 1/2 |w|^2 + C sum hinge(y f(x)) + C* sum hinge(|f(x)|) over labeled and
/// unlabeled points, f(x) = w.x + b. Labels are +-1.
double tsvm_objective(const Vector& w, double b, double C, double Cstar, const Matrix& labeled,
                      std::span<const int> signs, const Matrix& unlabeled);
double tsvm_objective(const TsvmModel& model, const Matrix& labeled, std::span<const int> signs,
                      const Matrix& unlabeled);

/// The CCCP surrogate: each unlabeled point contributes
/// ramp(f(x), s) + ramp(-f(x), s) in place of hinge(|f(x)|).
double ramp_objective(const Vector& w, double b, const TsvmParams& params, const Matrix& labeled,
                      std::span<const int> signs, const Matrix& unlabeled);

/// Soft-margin linear SVM through its dual, with a per-point cost bound.
/// Throws DegenerateError when only one sign is present and SolverError when
/// the iteration budget runs out.
QpSolution solve_svm_dual(const Matrix& X, std::span<const int> signs, std::span<const double> costs,
                          double tol = 1e-6, long max_passes = 10000);

/// Binary transductive SVM by the concave-convex procedure. Unlabeled points
/// enter twice, once per sign; each outer step linearizes the concave part of
/// the ramp loss and solves the resulting convex dual. With no unlabeled
/// points or Cstar == 0 it returns the supervised SVM.
TsvmModel cccp_fit(const Matrix& labeled, std::span<const int> signs, const Matrix& unlabeled,
                   const TsvmParams& params);

/// One-vs-rest over classes 1..num_classes; model k separates class k+1.
std::vector<TsvmModel> ovr_fit(const Matrix& labeled, std::span<const int> labels, int num_classes,
                               const Matrix& unlabeled, const TsvmParams& params);

/// n x c matrix of decision values.
Matrix ovr_decisions(std::span<const TsvmModel> models, const Matrix& X);

/// Normalized logistic squashing: p_ij = sigma(d_ij) / sum_k sigma(d_ik).
ProbMatrix decisions_to_probs(const Matrix& decisions);

std::string to_string(FitStatus status);

}  // namespace deepsep
