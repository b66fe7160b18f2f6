#pragma once

#include "deepsep/deepsep.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace deepsep {

struct DatasetSpec {
    std::string generator = "mixture";  // mixture | moons | csv
    int n = 7500;
    int classes = 5;
    int dim = 20;
    double sep = 3.0;
    double noise = 0.1;  // two-moons only
    std::uint64_t seed = 1;
    std::filesystem::path csv;  // generator == "csv"
};

// Method names: initial_nn, deepsep_nn, deepsep_ensemble (one shared DeepSep
// run per cell), tsvm (one-vs-rest TSVM on raw features), labelprop.
inline const std::vector<std::string> kKnownMethods{"initial_nn", "deepsep_nn", "deepsep_ensemble",
                                                    "tsvm", "labelprop"};

struct ExperimentSpec {
    DatasetSpec dataset;
    std::vector<std::string> methods{"tsvm", "initial_nn", "deepsep_nn", "deepsep_ensemble"};
    std::vector<int> ells{35, 50, 125, 250, 500, 1250, 2500};
    int shuffles = 5;
    int val_size = 100;
    int test_size = 4780;  // capped by available data
    std::uint64_t seed = 0;
    DeepSepConfig deepsep;
    std::optional<std::filesystem::path> checkpoint_dir;

    void validate() const;
};

struct CellKey {
    int shuffle = 0;  // 1-based
    std::string method;
    int ell = 0;
    auto operator<=>(const CellKey&) const = default;
};

struct Cell {
    std::optional<double> accuracy;  // percent; empty when the cell failed
    std::string error;
    bool operator==(const Cell&) const = default;
};

struct ResultTable {
    std::vector<std::string> methods;
    std::vector<int> ells;
    int shuffles = 0;
    std::map<CellKey, Cell> cells;

    /// Mean over shuffles of the successful cells; empty when none succeeded.
    std::optional<double> average(const std::string& method, int ell) const;
    bool operator==(const ResultTable&) const = default;
};

struct IterationTrace {
    int shuffle = 0;
    int ell = 0;
    int iteration = 0;
    double nn_accuracy = 0.0;
    double ensemble_accuracy = 0.0;
};

struct ExperimentResult {
    ResultTable table;
    std::vector<IterationTrace> traces;
    std::map<CellKey, double> seconds;  // wall clock per cell
    int test_size = 0;                  // after capping
};

/// Per-cell seed from (master seed, shuffle, ell, stream name); order-free so
/// cells can run in any order.
std::uint64_t derive_seed(std::uint64_t master, int shuffle, int ell, std::string_view stream);

SyntheticData load_dataset(const DatasetSpec& spec);

ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::function<void(const std::string&)>& progress = {});

enum class ReportFormat { Text, Csv };

/// Text: aligned blocks per shuffle plus an Average block, two decimals.
/// CSV: shuffle,method,ell,accuracy,error with full precision; average rows
/// use shuffle "avg".
std::string report(const ResultTable& table, ReportFormat format);
ResultTable parse_results_csv(std::istream& in);
ResultTable load_results_csv(const std::filesystem::path& path);

std::string traces_csv(const std::vector<IterationTrace>& traces);
std::string timings_csv(const std::map<CellKey, double>& seconds);

}  // namespace deepsep
