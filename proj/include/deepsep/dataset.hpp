#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace deepsep {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Rows are c-dimensional probability vectors. Smoothed targets are the one
// exception to the unit row sum (they sum to 1 - eps).
using ProbMatrix = Eigen::MatrixXd;

using Rng = std::mt19937_64;

// Class ids are 1-based throughout; -1 marks a missing label in files.
inline constexpr int kMissingLabel = -1;

struct LabeledSet {
    Matrix features;          // l x d
    std::vector<int> labels;  // l entries in {1..num_classes}
    int num_classes = 0;

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }
    void validate() const;
};

// Deliberately label-free: nothing held here can leak evaluation labels.
struct UnlabeledSet {
    Matrix features;  // u x d

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }
    void validate(Eigen::Index expected_dim) const;
};

struct SplitSpec {
    std::vector<int> train_sizes;
    int val_size = 0;
    int test_size = 0;
    std::uint64_t seed = 0;
    bool balanced = true;
};

// One nested training level. The unlabeled set is the test pool with its
// labels removed; `hidden_labels` keeps them for scoring only.
struct SplitPart {
    LabeledSet train;
    UnlabeledSet unlabeled;
    LabeledSet val;
    LabeledSet test;
    std::vector<int> hidden_labels;
    std::vector<Eigen::Index> train_indices;
    std::vector<Eigen::Index> val_indices;
    std::vector<Eigen::Index> test_indices;
};

struct SyntheticData {
    Matrix features;
    std::vector<int> labels;
    int num_classes = 0;
    Matrix means;  // c x d cluster centers (moon centers for two-moons)
};

struct CsvData {
    Matrix features;
    std::optional<std::vector<int>> labels;  // kMissingLabel where unlabeled
};

/// One-hot encoding with every off-class entry raised to eps and the true
/// class lowered to 1 - c*eps, eps in (0, 1/(c+1)). Rows sum to 1 - eps;
/// they are not renormalized.
ProbMatrix smooth_labels(std::span<const int> labels, int num_classes, double eps);

/// Two interleaved half circles of radius 1. Class 1 is the upper arc centered
/// at the origin, class 2 the lower arc centered at (1, 0.5).
SyntheticData gen_two_moons(int n, double noise, std::uint64_t seed);

/// c unit-variance isotropic Gaussian clusters in d dimensions whose means are
/// pairwise at least `sep` apart. Sample i belongs to class (i mod c) + 1.
SyntheticData gen_gaussian_mixture(int n, int num_classes, int dim, double sep,
                                   std::uint64_t seed);

/// Splits into test, validation and nested training sets. Each entry of the
/// result corresponds to spec.train_sizes[k]; a larger training set is always
/// a superset of every smaller one and val/test are shared across levels.
std::vector<SplitPart> split_and_mask(const Matrix& features, std::span<const int> labels,
                                      int num_classes, const SplitSpec& spec);

CsvData load_csv(const std::filesystem::path& path);
CsvData parse_csv(std::istream& in, std::optional<int> num_classes = std::nullopt);
void save_csv(const std::filesystem::path& path, const Matrix& features,
              const std::optional<std::vector<int>>& labels = std::nullopt);
void write_csv(std::ostream& out, const Matrix& features,
               const std::optional<std::vector<int>>& labels = std::nullopt);

/// Rows with a real label go to the labeled set, rows marked -1 to the
/// unlabeled set.
std::pair<LabeledSet, UnlabeledSet> partition_labeled(const CsvData& data, int num_classes);

Matrix select_rows(const Matrix& m, std::span<const Eigen::Index> rows);
int max_label(std::span<const int> labels);

}  // namespace deepsep
