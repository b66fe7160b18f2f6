#include "deepsep/deepsep.hpp"
#include "deepsep/error.hpp"

#include "doctest.h"

#include <filesystem>
#include <fstream>

using namespace deepsep;

namespace {

DeepSepConfig small_config(std::uint64_t seed) {
    DeepSepConfig c;
    c.T = 3;
    c.init_epochs = 20;
    c.mse_epochs = 2;
    c.kl_epochs = 2;
    c.u_sub = 60;
    c.hidden1 = 16;
    c.hidden2 = 8;
    c.seed = seed;
    return c;
}

struct Problem {
    LabeledSet labeled;
    UnlabeledSet unlabeled;
    std::vector<int> truth;
};

Problem blobs(int ell, int u, std::uint64_t seed, double sep = 8.0) {
    const SyntheticData a = gen_gaussian_mixture(ell, 3, 4, sep, seed);
    const SyntheticData b = gen_gaussian_mixture(u, 3, 4, sep, seed + 1000);
    return {{a.features, a.labels, 3}, {b.features}, b.labels};
}

}  // namespace

TEST_CASE("ema update examples") {
    EmaEnsemble e;
    ProbMatrix a(1, 2), b(1, 2);
    a << 1, 0;
    b << 0, 1;
    ema_update(e, a, 0.8);
    CHECK(e.running(0, 0) == 1.0);
    ema_update(e, b, 0.8);
    CHECK(e.running(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(e.running(0, 1) == doctest::Approx(0.2).epsilon(1e-15));

    EmaEnsemble k;
    ProbMatrix p(2, 3);
    p << 0.2, 0.3, 0.5, 0.1, 0.1, 0.8;
    for (int t = 0; t < 20; ++t) ema_update(k, p, 0.8);
    CHECK((k.running - p).cwiseAbs().maxCoeff() < 1e-14);

    CHECK_THROWS_AS(ema_update(k, ProbMatrix::Zero(3, 3), 0.8), InputError);
    CHECK_THROWS_AS(ema_update(k, p, 1.0), ParameterError);
}

TEST_CASE("ema rows stay on the simplex") {
    Rng rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    EmaEnsemble e;
    for (int t = 0; t < 10; ++t) {
        ProbMatrix p(5, 4);
        for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = u(rng);
        for (Eigen::Index i = 0; i < 5; ++i) p.row(i) /= p.row(i).sum();
        ema_update(e, p, 0.8);
        for (Eigen::Index i = 0; i < 5; ++i) CHECK(std::abs(e.running.row(i).sum() - 1.0) < 1e-12);
    }
}

TEST_CASE("accuracy helpers") {
    ProbMatrix s(3, 2);
    s << 0.9, 0.1, 0.5, 0.5, 0.2, 0.8;
    CHECK(argmax_labels(s) == std::vector<int>{1, 1, 2});
    CHECK(accuracy_percent(s, std::vector<int>{1, 2, 2}) == doctest::Approx(100.0 * 2 / 3));
    CHECK_THROWS_AS(accuracy_percent(s, std::vector<int>{1}), InputError);
}

TEST_CASE("init with zero epochs leaves the model untouched") {
    const Problem pr = blobs(30, 10, 3);
    DeepSepConfig cfg = small_config(1);
    cfg.init_epochs = 0;
    MlpModel m = init_glorot(cfg.mlp(4, 3), 5);
    const MlpModel before = m;
    AdamState adam;
    Rng rng(2);
    const InitReport r = init_supervised(m, adam, pr.labeled, nullptr, cfg, rng);
    CHECK(r.epochs_run == 0);
    CHECK(adam.step == 0);
    for (std::size_t k = 0; k < MlpParams::kNames.size(); ++k)
        CHECK(*m.params.tensors()[k] == *before.params.tensors()[k]);
}

TEST_CASE("supervised init fits separated blobs") {
    const Problem pr = blobs(60, 10, 4);
    DeepSepConfig cfg = small_config(1);
    cfg.init_epochs = 60;
    MlpModel m = init_glorot(cfg.mlp(4, 3), 7);
    AdamState adam;
    Rng rng(3);
    const InitReport r = init_supervised(m, adam, pr.labeled, nullptr, cfg, rng);
    CHECK(r.end_loss < r.start_loss);
    CHECK(accuracy_percent(predict(m, pr.labeled.features), pr.labeled.labels) == 100.0);
    // dropout makes single epochs noisy; compare block means
    const auto& l = r.epoch_losses;
    REQUIRE(l.size() == 60);
    double first = 0, last = 0;
    for (int i = 0; i < 10; ++i) {
        first += l[static_cast<std::size_t>(i)];
        last += l[l.size() - 1 - static_cast<std::size_t>(i)];
    }
    CHECK(last < first);
}

TEST_CASE("early stopping keeps the best validation epoch") {
    const Problem pr = blobs(30, 10, 5, 2.0);
    const Problem val = blobs(30, 10, 6, 2.0);
    DeepSepConfig cfg = small_config(1);
    cfg.init_epochs = 200;
    cfg.patience = 3;
    MlpModel m = init_glorot(cfg.mlp(4, 3), 7);
    AdamState adam;
    Rng rng(3);
    const InitReport r = init_supervised(m, adam, pr.labeled, &val.labeled, cfg, rng);
    CHECK(r.best_epoch >= 1);
    CHECK(r.epochs_run <= 200);
    if (r.epochs_run < 200) CHECK(r.epochs_run - r.best_epoch == cfg.patience);
}

TEST_CASE("refine with no unlabeled data only retrains on the labeled set") {
    const Problem pr = blobs(30, 10, 7);
    DeepSepConfig cfg = small_config(1);
    MlpModel m = init_glorot(cfg.mlp(4, 3), 1);
    AdamState adam;
    Rng rng(3);
    const RefineResult r = refine_once(m, adam, pr.labeled, UnlabeledSet{Matrix(0, 4)}, cfg, rng);
    CHECK(r.phat.rows() == 0);
    CHECK(r.tsvm_objective.empty());
    CHECK(adam.step > 0);
}

TEST_CASE("refine produces probabilities for every unlabeled row") {
    const Problem pr = blobs(30, 90, 8);
    DeepSepConfig cfg = small_config(1);
    MlpModel m = init_glorot(cfg.mlp(4, 3), 1);
    AdamState adam;
    Rng rng(3);
    const RefineResult r = refine_once(m, adam, pr.labeled, pr.unlabeled, cfg, rng);
    REQUIRE(r.phat.rows() == 90);
    CHECK(r.tsvm_objective.size() == 3);
    for (Eigen::Index i = 0; i < r.phat.rows(); ++i) CHECK(std::abs(r.phat.row(i).sum() - 1.0) < 1e-12);
}

TEST_CASE("run history and determinism") {
    const Problem pr = blobs(30, 60, 9);
    const DeepSepConfig cfg = small_config(11);
    const RunResult a = run(pr.labeled, pr.unlabeled, cfg);
    REQUIRE(a.history.size() == static_cast<std::size_t>(cfg.T + 1));
    REQUIRE(a.ensemble_history.size() == a.history.size());
    CHECK(a.log.size() == a.history.size());
    CHECK((a.ensemble_history.front() - a.history.front()).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(a.ensemble == a.ensemble_history.back());

    // history[0] is the initial network alone
    DeepSepConfig init_only = cfg;
    init_only.T = 0;
    const RunResult z = run(pr.labeled, pr.unlabeled, init_only);
    CHECK(z.history.size() == 1);
    CHECK(z.history.front() == a.history.front());

    const RunResult b = run(pr.labeled, pr.unlabeled, cfg);
    for (std::size_t t = 0; t < a.history.size(); ++t) CHECK(a.history[t] == b.history[t]);
    CHECK(a.ensemble == b.ensemble);

    DeepSepConfig other = cfg;
    other.seed = 12;
    CHECK(run(pr.labeled, pr.unlabeled, other).ensemble != a.ensemble);
}

TEST_CASE("run rejects bad inputs") {
    const Problem pr = blobs(30, 60, 9);
    DeepSepConfig cfg = small_config(1);
    LabeledSet missing = pr.labeled;
    for (int& y : missing.labels)
        if (y == 3) y = 1;
    CHECK_THROWS_AS(run(missing, pr.unlabeled, cfg), DegenerateError);
    CHECK_THROWS_AS(run(pr.labeled, UnlabeledSet{Matrix::Zero(5, 3)}, cfg), InputError);
    cfg.rho = 1.5;
    CHECK_THROWS_AS(run(pr.labeled, pr.unlabeled, cfg), ParameterError);
}

TEST_CASE("run directory receives log and checkpoints") {
    const Problem pr = blobs(30, 60, 10);
    DeepSepConfig cfg = small_config(2);
    cfg.T = 2;
    const auto dir = std::filesystem::temp_directory_path() / "deepsep_test_run_dir";
    std::filesystem::remove_all(dir);
    RunOptions opt;
    opt.run_dir = dir;
    opt.validation = &pr.labeled;
    const RunResult r = run(pr.labeled, pr.unlabeled, cfg, opt);
    std::ifstream log(dir / "log.jsonl");
    int lines = 0;
    for (std::string line; std::getline(log, line);) ++lines;
    CHECK(lines == 3);
    for (int t = 0; t <= 2; ++t) {
        CHECK(std::filesystem::exists(dir / ("model_iter" + std::to_string(t) + ".json")));
        CHECK(std::filesystem::exists(dir / ("ensemble_iter" + std::to_string(t) + ".csv")));
    }
    const MlpModel back = load_model(dir / "model_iter2.json");
    CHECK(predict(back, pr.unlabeled.features).isApprox(r.history.back(), 1e-12));
    CHECK(r.log.back().val_accuracy.has_value());
    std::filesystem::remove_all(dir);
}

TEST_CASE("refinement helps on two moons") {
    // 10 labeled points, 600 unlabeled; low-density separation should pull
    // the boundary into the gap between the arcs.
    int better = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const SyntheticData d = gen_two_moons(610, 0.1, seed);
        SplitSpec sp;
        sp.train_sizes = {10};
        sp.val_size = 0;
        sp.test_size = 600;
        sp.seed = seed;
        const auto parts = split_and_mask(d.features, d.labels, 2, sp);
        DeepSepConfig cfg;
        cfg.T = 4;
        cfg.init_epochs = 100;
        cfg.mse_epochs = 5;
        cfg.kl_epochs = 5;
        cfg.seed = seed;
        const RunResult r = run(parts[0].train, parts[0].unlabeled, cfg);
        const double before = accuracy_percent(r.history.front(), parts[0].hidden_labels);
        const double after = accuracy_percent(r.history.back(), parts[0].hidden_labels);
        CAPTURE(seed);
        CAPTURE(before);
        CAPTURE(after);
        better += after > before ? 1 : 0;
    }
    CHECK(better >= 4);
}
