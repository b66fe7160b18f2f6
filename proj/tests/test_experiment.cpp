#include "deepsep/error.hpp"
#include "deepsep/experiment.hpp"

#include "doctest.h"

#include <sstream>

using namespace deepsep;

namespace {

ExperimentSpec tiny_spec() {
    ExperimentSpec s;
    s.dataset.generator = "mixture";
    s.dataset.n = 300;
    s.dataset.classes = 3;
    s.dataset.dim = 4;
    s.dataset.sep = 4.0;
    s.methods = {"initial_nn", "deepsep_nn", "deepsep_ensemble", "tsvm", "labelprop"};
    s.ells = {15, 30};
    s.shuffles = 2;
    s.val_size = 15;
    s.test_size = 90;
    s.seed = 42;
    s.deepsep.T = 2;
    s.deepsep.init_epochs = 10;
    s.deepsep.mse_epochs = 1;
    s.deepsep.kl_epochs = 1;
    s.deepsep.hidden1 = 16;
    s.deepsep.hidden2 = 8;
    s.deepsep.u_sub = 40;
    return s;
}

}  // namespace

TEST_CASE("derive_seed separates streams and cells") {
    const auto a = derive_seed(1, 1, 35, "deepsep");
    CHECK(a == derive_seed(1, 1, 35, "deepsep"));
    CHECK(a != derive_seed(1, 1, 35, "tsvm"));
    CHECK(a != derive_seed(1, 2, 35, "deepsep"));
    CHECK(a != derive_seed(1, 1, 50, "deepsep"));
    CHECK(a != derive_seed(2, 1, 35, "deepsep"));
}

TEST_CASE("experiment table shape and determinism") {
    const ExperimentSpec spec = tiny_spec();
    const ExperimentResult a = run_experiment(spec);
    CHECK(a.table.cells.size() == spec.methods.size() * spec.ells.size() * 2);
    CHECK(a.test_size == 90);
    for (const auto& [key, cell] : a.table.cells) {
        CAPTURE(key.method);
        CHECK(cell.accuracy.has_value());
        CHECK(*cell.accuracy >= 0.0);
        CHECK(*cell.accuracy <= 100.0);
    }
    CHECK(a.traces.size() == 2 * 2 * 3);

    const ExperimentResult b = run_experiment(spec);
    CHECK(a.table == b.table);
    CHECK(report(a.table, ReportFormat::Csv) == report(b.table, ReportFormat::Csv));
    CHECK(traces_csv(a.traces) == traces_csv(b.traces));
}

TEST_CASE("one shuffle, one size gives one cell per method") {
    ExperimentSpec spec = tiny_spec();
    spec.shuffles = 1;
    spec.ells = {30};
    spec.methods = {"tsvm", "labelprop"};
    const ExperimentResult r = run_experiment(spec);
    CHECK(r.table.cells.size() == 2);
}

TEST_CASE("report averages match a direct recomputation") {
    ResultTable t;
    t.methods = {"a", "b"};
    t.ells = {10, 20};
    t.shuffles = 3;
    const double va[3] = {50.0, 60.5, 71.25};
    for (int s = 1; s <= 3; ++s) {
        t.cells[{s, "a", 10}] = Cell{va[s - 1], {}};
        t.cells[{s, "a", 20}] = Cell{10.0 * s, {}};
        t.cells[{s, "b", 10}] = s == 2 ? Cell{std::nullopt, "boom"} : Cell{30.0, {}};
        t.cells[{s, "b", 20}] = Cell{std::nullopt, "boom"};
    }
    CHECK(*t.average("a", 10) == doctest::Approx((50.0 + 60.5 + 71.25) / 3.0));
    CHECK(*t.average("b", 10) == 30.0);
    CHECK_FALSE(t.average("b", 20).has_value());

    const std::string csv = report(t, ReportFormat::Csv);
    CHECK(csv.find("2,b,10,NA,boom\n") != std::string::npos);
    CHECK(csv.find("avg,b,20,NA,\n") != std::string::npos);
    CHECK(csv.find("avg,a,20,20,\n") != std::string::npos);

    const std::string text = report(t, ReportFormat::Text);
    CHECK(text.find("   60.50") != std::string::npos);
    CHECK(text.find("Average") != std::string::npos);
    CHECK(text.find("    fail") != std::string::npos);

    std::istringstream in(csv);
    CHECK(parse_results_csv(in) == t);
}

TEST_CASE("empty method list reports a header only") {
    ResultTable t;
    t.ells = {10};
    t.shuffles = 2;
    CHECK(report(t, ReportFormat::Csv) == "shuffle,method,ell,accuracy,error\n");
}

TEST_CASE("impossible sizes become failure markers") {
    ExperimentSpec spec = tiny_spec();
    spec.ells = {400};
    spec.methods = {"tsvm"};
    spec.shuffles = 1;
    const ExperimentResult r = run_experiment(spec);
    REQUIRE(r.table.cells.size() == 1);
    const Cell& c = r.table.cells.begin()->second;
    CHECK_FALSE(c.accuracy.has_value());
    CHECK_FALSE(c.error.empty());
}

TEST_CASE("spec validation") {
    ExperimentSpec spec = tiny_spec();
    spec.methods = {"nope"};
    CHECK_THROWS_AS(run_experiment(spec), ParameterError);
    spec = tiny_spec();
    spec.ells = {30, 15};
    CHECK_THROWS_AS(run_experiment(spec), ParameterError);
    spec = tiny_spec();
    spec.dataset.generator = "weird";
    CHECK_THROWS_AS(run_experiment(spec), ParameterError);
}

TEST_CASE("results csv parse errors carry line numbers") {
    std::istringstream bad("shuffle,method,ell,accuracy,error\n1,a,10,xx,\n");
    try {
        parse_results_csv(bad);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
}
