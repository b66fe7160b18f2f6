#include "deepsep/error.hpp"
#include "deepsep/tsvm.hpp"

#include "doctest.h"
#include "instances.hpp"

#include <cmath>

using namespace deepsep;
using deepsep::testing::BinaryInstance;

TEST_CASE("hinge") {
    CHECK(hinge(0.0) == 1.0);
    CHECK(hinge(2.0) == 0.0);
    CHECK(hinge(-1.0) == 2.0);
    CHECK(ramp(-5.0, -0.3) == 1.3);
    CHECK(ramp(0.5, -0.3) == 0.5);
}

TEST_CASE("tsvm objective examples") {
    Matrix L(2, 2);
    L << 2, 0, -2, 0;
    const std::vector<int> y{1, -1};
    Matrix U(1, 2);
    U << 0.5, 0;
    Vector w(2);
    w << 1, 0;
    CHECK(tsvm_objective(w, 0.0, 1.0, 1.0, L, y, U) == doctest::Approx(1.0).epsilon(1e-15));

    // w = 0, b = 0: every hinge is H(0) = 1
    Matrix U3 = Matrix::Ones(3, 2);
    CHECK(tsvm_objective(Vector::Zero(2), 0.0, 0.7, 0.2, L, y, U3) == doctest::Approx(0.7 * 2 + 0.2 * 3));

    // no unlabeled data: standard soft-margin primal
    Vector w2(2);
    w2 << 0.3, -0.1;
    const double primal = 0.5 * w2.squaredNorm() + 2.0 * (hinge(0.6 + 0.25) + hinge(-(-0.6 + 0.25)));
    CHECK(tsvm_objective(w2, 0.25, 2.0, 5.0, L, y, Matrix(0, 2)) == doctest::Approx(primal).epsilon(1e-15));

    CHECK_THROWS_AS(tsvm_objective(Vector::Zero(3), 0.0, 1, 1, L, y, U), InputError);
    CHECK_THROWS_AS(tsvm_objective(w, 0.0, 1, 1, L, std::vector<int>{1, 0}, U), InputError);
}

TEST_CASE("dual solver: canonical 1-D max margin") {
    Matrix X(2, 1);
    X << 1, -1;
    const std::vector<int> y{1, -1};
    const std::vector<double> c{1e6, 1e6};
    const QpSolution s = solve_svm_dual(X, y, c, 1e-6);
    CHECK(s.w[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(s.b) < 1e-9);
    CHECK(s.alpha[0] == doctest::Approx(0.5));
    CHECK(s.primal - s.dual <= 1e-6 * std::max(1.0, s.primal));
}

TEST_CASE("dual solver: canonical 2-D instances") {
    Matrix X(2, 2);
    X << 1, 1, -1, -1;
    const QpSolution a = solve_svm_dual(X, std::vector<int>{1, -1}, std::vector<double>{100, 100});
    CHECK(a.w[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(a.w[1] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(std::abs(a.b) < 1e-6);

    Matrix Y(3, 2);
    Y << 2, 0, 3, 1, 0, 0;
    const QpSolution b = solve_svm_dual(Y, std::vector<int>{1, 1, -1}, std::vector<double>{100, 100, 100});
    CHECK(b.w[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(b.w[1]) < 1e-6);
    CHECK(b.b == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(b.support[0]);
    CHECK(!b.support[1]);
}

TEST_CASE("dual solver: duplicated data at half cost gives the same hyperplane") {
    BinaryInstance inst = deepsep::testing::random_binary(3);
    const auto n = inst.labeled.rows();
    const std::vector<double> c(static_cast<std::size_t>(n), 0.8);
    const QpSolution a = solve_svm_dual(inst.labeled, inst.signs, c, 1e-9);

    Matrix X2(2 * n, inst.labeled.cols());
    X2 << inst.labeled, inst.labeled;
    std::vector<int> y2 = inst.signs;
    y2.insert(y2.end(), inst.signs.begin(), inst.signs.end());
    const std::vector<double> c2(static_cast<std::size_t>(2 * n), 0.4);
    const QpSolution b = solve_svm_dual(X2, y2, c2, 1e-9);
    CHECK((a.w - b.w).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(std::abs(a.b - b.b) < 1e-6);
}

TEST_CASE("dual solver: separable data has no margin violations at large cost") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        std::normal_distribution<double> g(0.0, 1.0);
        const Eigen::Vector2d w_true(g(rng), g(rng));
        const double b_true = g(rng) * 0.3;
        Matrix X(40, 2);
        std::vector<int> y;
        for (int i = 0; i < 40;) {
            const Eigen::Vector2d x(g(rng) * 2, g(rng) * 2);
            const double f = (w_true.dot(x) + b_true) / w_true.norm();
            if (std::abs(f) < 0.3) continue;  // keep a clear gap so a separator exists
            X.row(i++) = x.transpose();
            y.push_back(f > 0 ? 1 : -1);
        }
        if (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), -1) == 0) continue;
        const QpSolution s = solve_svm_dual(X, y, std::vector<double>(40, 1e4), 1e-8);
        for (int i = 0; i < 40; ++i) CHECK(y[static_cast<std::size_t>(i)] * (X.row(i).dot(s.w) + s.b) >= 1.0 - 1e-6);
    }
}

TEST_CASE("dual solver: KKT conditions and duality gap") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        BinaryInstance inst = deepsep::testing::random_binary(seed);
        const auto n = static_cast<std::size_t>(inst.labeled.rows());
        std::vector<double> c(n);
        for (std::size_t i = 0; i < n; ++i) c[i] = 0.1 + 0.2 * static_cast<double>(i % 4);
        const double tol = 1e-6;
        const QpSolution s = solve_svm_dual(inst.labeled, inst.signs, c, tol);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(s.alpha[static_cast<Eigen::Index>(i)] >= 0.0);
            CHECK(s.alpha[static_cast<Eigen::Index>(i)] <= c[i] + 1e-15);
            const double margin = inst.signs[i] * (inst.labeled.row(static_cast<Eigen::Index>(i)).dot(s.w) + s.b);
            if (s.alpha[static_cast<Eigen::Index>(i)] == 0.0) CHECK(margin >= 1.0 - 1e-5);
            if (s.alpha[static_cast<Eigen::Index>(i)] == c[i]) CHECK(margin <= 1.0 + 1e-5);
        }
        CHECK(s.primal - s.dual <= tol * std::max(1.0, s.primal));
        CHECK(s.primal - s.dual >= -1e-9);
    }
}

TEST_CASE("dual solver: feature scaling with matching cost keeps the sign pattern") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        BinaryInstance inst = deepsep::testing::random_binary(seed + 100);
        const auto n = static_cast<std::size_t>(inst.labeled.rows());
        const double kappa = 3.5;
        const QpSolution a = solve_svm_dual(inst.labeled, inst.signs, std::vector<double>(n, 1.0), 1e-9);
        const QpSolution b = solve_svm_dual(kappa * inst.labeled, inst.signs,
                                            std::vector<double>(n, 1.0 / (kappa * kappa)), 1e-9);
        const Vector fa = (inst.labeled * a.w).array() + a.b;
        const Vector fb = (kappa * inst.labeled * b.w).array() + b.b;
        for (std::size_t i = 0; i < n; ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            if (std::abs(fa[k]) > 1e-6) CHECK((fa[k] > 0) == (fb[k] > 0));
        }
    }
}

TEST_CASE("dual solver errors") {
    Matrix X(2, 1);
    X << 1, 2;
    CHECK_THROWS_AS(solve_svm_dual(X, std::vector<int>{1, 1}, std::vector<double>{1, 1}), DegenerateError);
    CHECK_THROWS_AS(solve_svm_dual(X, std::vector<int>{1, -1}, std::vector<double>{1}), InputError);
    BinaryInstance inst = deepsep::testing::random_binary(8);
    const std::vector<double> c(static_cast<std::size_t>(inst.labeled.rows()), 1e3);
    CHECK_THROWS_AS(solve_svm_dual(inst.labeled, inst.signs, c, 1e-12, 1), SolverError);
}

TEST_CASE("cccp without unlabeled influence is the supervised svm") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        BinaryInstance inst = deepsep::testing::random_binary(seed);
        TsvmParams p;
        p.C = 0.7;
        p.Cstar = 0.3;
        const QpSolution sup = solve_svm_dual(inst.labeled, inst.signs,
                                              std::vector<double>(inst.signs.size(), p.C), p.tol);
        const TsvmModel none = cccp_fit(inst.labeled, inst.signs, Matrix(0, inst.labeled.cols()), p);
        CHECK((none.w - sup.w).cwiseAbs().maxCoeff() < 1e-6);
        CHECK(std::abs(none.b - sup.b) < 1e-6);

        p.Cstar = 0.0;
        const TsvmModel zero = cccp_fit(inst.labeled, inst.signs, inst.unlabeled, p);
        CHECK((zero.w - sup.w).cwiseAbs().maxCoeff() < 1e-6);
        CHECK(std::abs(zero.b - sup.b) < 1e-6);
    }
}

TEST_CASE("cccp surrogate is non-increasing") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        BinaryInstance inst = deepsep::testing::random_binary(seed);
        for (bool balance : {true, false}) {
            TsvmParams p;
            p.C = 1.0;
            p.Cstar = 0.5;
            p.balance = balance;
            const TsvmModel m = cccp_fit(inst.labeled, inst.signs, inst.unlabeled, p);
            const auto& j = m.trace.surrogate;
            for (std::size_t t = 1; t < j.size(); ++t) CHECK(j[t] <= j[t - 1] + 1e-9);
            if (inst.unlabeled.rows() > 0) CHECK(m.trace.status == FitStatus::Converged);
        }
    }
}

TEST_CASE("balancing constraint holds at the solution") {
    BinaryInstance inst = deepsep::testing::random_binary(4);
    REQUIRE(inst.unlabeled.rows() > 0);
    TsvmParams p;
    p.C = 1.0;
    p.Cstar = 0.5;
    const TsvmModel m = cccp_fit(inst.labeled, inst.signs, inst.unlabeled, p);
    double mean_label = 0;
    for (int s : inst.signs) mean_label += s;
    mean_label /= static_cast<double>(inst.signs.size());
    CHECK(m.decisions(inst.unlabeled).mean() == doctest::Approx(mean_label).epsilon(1e-9));
}

namespace {

// Exhaustive search over (w, b) minimizing the transductive objective.
std::pair<double, double> grid_minimize(const BinaryInstance& inst, double C, double Cstar) {
    double best = std::numeric_limits<double>::infinity(), bw = 0, bb = 0;
    for (int i = 1; i <= 400; ++i) {
        const double w = 0.02 * i;
        for (int k = -400; k <= 400; ++k) {
            const double b = 0.01 * k;
            const double j = tsvm_objective(Vector::Constant(1, w), b, C, Cstar, inst.labeled, inst.signs, inst.unlabeled);
            if (j < best) {
                best = j;
                bw = w;
                bb = b;
            }
        }
    }
    return {bw, bb};
}

}  // namespace

TEST_CASE("cccp places the 1-D boundary in the density gap") {
    const double C = 1.0, Cstar = 0.5;
    int closer = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const BinaryInstance inst = deepsep::testing::two_gaussian_1d(seed);
        TsvmParams p;
        p.C = C;
        p.Cstar = Cstar;
        const TsvmModel tsvm = cccp_fit(inst.labeled, inst.signs, inst.unlabeled, p);
        const QpSolution sup = solve_svm_dual(inst.labeled, inst.signs, std::vector<double>{C, C});
        const double tsvm_boundary = -tsvm.b / tsvm.w[0];
        const double sup_boundary = -sup.b / sup.w[0];
        const auto [gw, gb] = grid_minimize(inst, C, Cstar);
        const double grid_boundary = -gb / gw;
        CAPTURE(seed);
        CAPTURE(tsvm_boundary);
        CAPTURE(sup_boundary);
        CAPTURE(grid_boundary);
        // the unconstrained minimizer is flat across the gap, so only ask
        // that it sits between the clusters
        CHECK(std::abs(grid_boundary) < 1.0);
        CHECK(std::abs(tsvm_boundary) < 1.0);
        closer += std::abs(tsvm_boundary) < std::abs(sup_boundary) ? 1 : 0;
        CHECK(tsvm_objective(tsvm, inst.labeled, inst.signs, inst.unlabeled) <
              tsvm_objective(sup.w, sup.b, C, Cstar, inst.labeled, inst.signs, inst.unlabeled));
    }
    CHECK(closer >= 4);
}

TEST_CASE("one-vs-rest") {
    SUBCASE("two classes give mirrored models") {
        const SyntheticData d = gen_gaussian_mixture(40, 2, 3, 3.0, 5);
        const SyntheticData u = gen_gaussian_mixture(60, 2, 3, 3.0, 6);
        TsvmParams p;
        p.C = 1.0;
        p.Cstar = 0.2;
        p.tol = 1e-9;
        const auto models = ovr_fit(d.features, d.labels, 2, u.features, p);
        REQUIRE(models.size() == 2);
        const Matrix dv = ovr_decisions(models, u.features);
        CHECK((dv.col(0) + dv.col(1)).cwiseAbs().maxCoeff() < 1e-5);
    }
    SUBCASE("separated five-class mixture reproduces labeled classes") {
        const SyntheticData d = gen_gaussian_mixture(50, 5, 8, 12.0, 7);
        const SyntheticData u = gen_gaussian_mixture(100, 5, 8, 12.0, 8);
        TsvmParams p;
        p.C = 1.0;
        p.Cstar = 0.5;
        const auto models = ovr_fit(d.features, d.labels, 5, u.features, p);
        const Matrix dv = ovr_decisions(models, d.features);
        for (Eigen::Index i = 0; i < dv.rows(); ++i) {
            Eigen::Index k = 0;
            dv.row(i).maxCoeff(&k);
            CHECK(k + 1 == d.labels[static_cast<std::size_t>(i)]);
        }
        for (const auto& m : models) {
            CHECK(m.params.Cstar == p.Cstar);
            CHECK(m.w.size() == 8);
        }
    }
    SUBCASE("missing class is reported by name") {
        const SyntheticData d = gen_gaussian_mixture(20, 2, 3, 3.0, 5);
        try {
            ovr_fit(d.features, d.labels, 3, Matrix(0, 3), TsvmParams{});
            FAIL("expected DegenerateError");
        } catch (const DegenerateError& e) {
            CHECK(std::string(e.what()).find("class 3") != std::string::npos);
        }
    }
}

TEST_CASE("decisions_to_probs") {
    Matrix same = Matrix::Constant(2, 4, 0.7);
    CHECK((decisions_to_probs(same).array() - 0.25).abs().maxCoeff() < 1e-15);

    Matrix sat(1, 3);
    sat << -1e3, 1e3, -1e3;
    const ProbMatrix p = decisions_to_probs(sat);
    CHECK(std::abs(p(0, 1) - 1.0) < 1e-6);
    CHECK(p(0, 0) < 1e-6);

    Matrix all_low = Matrix::Constant(1, 3, -1e3);
    CHECK((decisions_to_probs(all_low).array() - 1.0 / 3.0).abs().maxCoeff() < 1e-12);

    Rng rng(3);
    std::normal_distribution<double> g(0.0, 4.0);
    Matrix d(50, 5);
    for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = g(rng);
    const ProbMatrix q = decisions_to_probs(d);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        CHECK(std::abs(q.row(i).sum() - 1.0) < 1e-12);
        Eigen::Index a = 0, b = 0;
        q.row(i).maxCoeff(&a);
        d.row(i).maxCoeff(&b);
        CHECK(a == b);
    }
}
