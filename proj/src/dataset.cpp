#include "deepsep/dataset.hpp"

#include "deepsep/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

namespace deepsep {

void LabeledSet::validate() const {
    if (features.rows() < 1) throw SizeError("labeled set is empty");
    if (static_cast<Eigen::Index>(labels.size()) != features.rows())
        throw InputError("labeled set: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(features.rows()) + " rows");
    if (num_classes < 1) throw ParameterError("labeled set: num_classes must be positive");
    for (int y : labels)
        if (y < 1 || y > num_classes)
            throw InputError("label " + std::to_string(y) + " outside 1.." +
                             std::to_string(num_classes));
    if (!features.allFinite()) throw InputError("labeled set has non-finite features");
}

void UnlabeledSet::validate(Eigen::Index expected_dim) const {
    if (features.rows() > 0 && features.cols() != expected_dim)
        throw InputError("unlabeled set dimension " + std::to_string(features.cols()) +
                         " != " + std::to_string(expected_dim));
    if (!features.allFinite()) throw InputError("unlabeled set has non-finite features");
}

ProbMatrix smooth_labels(std::span<const int> labels, int num_classes, double eps) {
    if (num_classes < 2) throw ParameterError("smooth_labels: need at least 2 classes");
    // 1 - c*eps must stay above eps or the true class loses the argmax
    if (!(eps > 0.0) || !(eps < 1.0 / (num_classes + 1)))
        throw ParameterError("smooth_labels: eps must lie in (0, 1/(c+1))");
    ProbMatrix out = ProbMatrix::Constant(static_cast<Eigen::Index>(labels.size()), num_classes, eps);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 1 || y > num_classes)
            throw InputError("smooth_labels: label " + std::to_string(y) + " out of range");
        out(static_cast<Eigen::Index>(i), y - 1) = 1.0 - num_classes * eps;
    }
    return out;
}

SyntheticData gen_two_moons(int n, double noise, std::uint64_t seed) {
    if (n < 2) throw ParameterError("gen_two_moons: n must be at least 2");
    if (!(noise >= 0.0)) throw ParameterError("gen_two_moons: noise must be non-negative");
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const int n_upper = n / 2;
    const int n_lower = n - n_upper;
    SyntheticData out;
    out.num_classes = 2;
    out.features.resize(n, 2);
    out.labels.resize(n);
    out.means.resize(2, 2);
    out.means << 0.0, 0.0, 1.0, 0.5;

    auto angle = [](int k, int count) {
        return count == 1 ? 0.0 : std::numbers::pi * k / (count - 1);
    };
    for (int k = 0; k < n_upper; ++k) {
        const double t = angle(k, n_upper);
        out.features.row(k) << std::cos(t), std::sin(t);
        out.labels[k] = 1;
    }
    for (int k = 0; k < n_lower; ++k) {
        const double t = angle(k, n_lower);
        out.features.row(n_upper + k) << 1.0 - std::cos(t), 0.5 - std::sin(t);
        out.labels[n_upper + k] = 2;
    }
    if (noise > 0.0)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 2; ++j) out.features(i, j) += noise * gauss(rng);
    return out;
}

SyntheticData gen_gaussian_mixture(int n, int num_classes, int dim, double sep,
                                   std::uint64_t seed) {
    if (num_classes < 2) throw ParameterError("gen_gaussian_mixture: need c >= 2");
    if (dim < 1) throw ParameterError("gen_gaussian_mixture: need d >= 1");
    if (!(sep > 0.0)) throw ParameterError("gen_gaussian_mixture: sep must be positive");
    if (n < 0) throw ParameterError("gen_gaussian_mixture: n must be non-negative");

    SyntheticData out;
    out.num_classes = num_classes;
    out.means = Matrix::Zero(num_classes, dim);
    if (num_classes <= dim) {
        // scaled simplex corners: every pair exactly sep apart
        for (int k = 0; k < num_classes; ++k) out.means(k, k) = sep / std::numbers::sqrt2;
    } else {
        for (int k = 0; k < num_classes; ++k) out.means(k, 0) = sep * k;
    }

    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    out.features.resize(n, dim);
    out.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        const int k = i % num_classes;
        out.labels[i] = k + 1;
        for (int j = 0; j < dim; ++j) out.features(i, j) = out.means(k, j) + gauss(rng);
    }
    return out;
}

Matrix select_rows(const Matrix& m, std::span<const Eigen::Index> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
}

int max_label(std::span<const int> labels) {
    int c = 0;
    for (int y : labels) c = std::max(c, y);
    return c;
}

namespace {

// Share of `total` given to class k when spreading it over c classes.
int class_share(int total, int c, int k) { return total / c + (k < total % c ? 1 : 0); }

LabeledSet make_labeled(const Matrix& features, std::span<const int> labels, int c,
                        const std::vector<Eigen::Index>& idx) {
    LabeledSet s;
    s.features = select_rows(features, idx);
    s.labels.reserve(idx.size());
    for (auto i : idx) s.labels.push_back(labels[static_cast<std::size_t>(i)]);
    s.num_classes = c;
    return s;
}

}  // namespace

std::vector<SplitPart> split_and_mask(const Matrix& features, std::span<const int> labels,
                                      int num_classes, const SplitSpec& spec) {
    if (static_cast<Eigen::Index>(labels.size()) != features.rows())
        throw InputError("split_and_mask: label count does not match feature rows");
    if (num_classes < 2) throw ParameterError("split_and_mask: need at least 2 classes");
    if (spec.train_sizes.empty()) throw SizeError("split_and_mask: no training sizes given");
    for (int s : spec.train_sizes)
        if (s <= 0) throw SizeError("split_and_mask: training sizes must be positive");
    if (spec.test_size <= 0) throw SizeError("split_and_mask: test size must be positive");
    if (spec.val_size < 0) throw SizeError("split_and_mask: validation size must be non-negative");
    for (int y : labels)
        if (y < 1 || y > num_classes) throw InputError("split_and_mask: label out of range");

    const int max_train = *std::max_element(spec.train_sizes.begin(), spec.train_sizes.end());
    Rng rng(spec.seed);

    std::vector<Eigen::Index> test_idx, val_idx;
    // train_pool[k] holds the ordered training candidates of class k (balanced)
    // or, unbalanced, a single ordered pool in train_pool[0].
    std::vector<std::vector<Eigen::Index>> train_pool;

    if (spec.balanced) {
        std::vector<std::vector<Eigen::Index>> by_class(num_classes);
        for (std::size_t i = 0; i < labels.size(); ++i)
            by_class[labels[i] - 1].push_back(static_cast<Eigen::Index>(i));
        train_pool.resize(num_classes);
        for (int k = 0; k < num_classes; ++k) {
            auto& pool = by_class[k];
            std::shuffle(pool.begin(), pool.end(), rng);
            const int nt = class_share(spec.test_size, num_classes, k);
            const int nv = class_share(spec.val_size, num_classes, k);
            const int nl = class_share(max_train, num_classes, k);
            if (static_cast<std::size_t>(nt + nv + nl) > pool.size())
                throw SizeError("split_and_mask: class " + std::to_string(k + 1) + " has " +
                                std::to_string(pool.size()) + " samples, needs " +
                                std::to_string(nt + nv + nl));
            auto it = pool.begin();
            test_idx.insert(test_idx.end(), it, it + nt);
            it += nt;
            val_idx.insert(val_idx.end(), it, it + nv);
            it += nv;
            train_pool[k].assign(it, it + nl);
        }
    } else {
        std::vector<Eigen::Index> all(labels.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Eigen::Index>(i);
        std::shuffle(all.begin(), all.end(), rng);
        const std::size_t need = static_cast<std::size_t>(spec.test_size) + spec.val_size + max_train;
        if (need > all.size())
            throw SizeError("split_and_mask: " + std::to_string(all.size()) +
                            " samples, needs " + std::to_string(need));
        auto it = all.begin();
        test_idx.assign(it, it + spec.test_size);
        it += spec.test_size;
        val_idx.assign(it, it + spec.val_size);
        it += spec.val_size;
        train_pool.emplace_back(it, it + max_train);
    }

    LabeledSet test = make_labeled(features, labels, num_classes, test_idx);
    LabeledSet val = make_labeled(features, labels, num_classes, val_idx);

    std::vector<SplitPart> parts;
    parts.reserve(spec.train_sizes.size());
    for (int ell : spec.train_sizes) {
        SplitPart part;
        if (spec.balanced) {
            for (int k = 0; k < num_classes; ++k) {
                const int nl = class_share(ell, num_classes, k);
                part.train_indices.insert(part.train_indices.end(), train_pool[k].begin(),
                                          train_pool[k].begin() + nl);
            }
        } else {
            part.train_indices.assign(train_pool[0].begin(), train_pool[0].begin() + ell);
        }
        part.train = make_labeled(features, labels, num_classes, part.train_indices);
        part.val = val;
        part.test = test;
        part.val_indices = val_idx;
        part.test_indices = test_idx;
        part.unlabeled.features = test.features;
        part.hidden_labels = test.labels;
        parts.push_back(std::move(part));
    }
    return parts;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

}  // namespace

CsvData parse_csv(std::istream& in, std::optional<int> num_classes) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty file", 1);
    ++line_no;
    auto header = split_commas(line);
    for (auto& h : header) h = trim(h);
    if (header.empty() || (header.size() == 1 && header[0].empty()))
        throw ParseError("missing header", line_no);
    const bool has_labels = header.back() == "label";
    const std::size_t ncols = header.size();
    const std::size_t nfeat = has_labels ? ncols - 1 : ncols;
    if (nfeat == 0) throw ParseError("header names no feature columns", line_no);

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_commas(line);
        if (cells.size() != ncols)
            throw ParseError("expected " + std::to_string(ncols) + " fields, found " +
                                 std::to_string(cells.size()),
                             line_no);
        for (std::size_t j = 0; j < nfeat; ++j) {
            const auto cell = trim(cells[j]);
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty())
                throw ParseError("non-numeric feature '" + std::string(cell) + "'", line_no);
            if (!std::isfinite(v)) throw ParseError("non-finite feature", line_no);
            values.push_back(v);
        }
        if (has_labels) {
            const auto cell = trim(cells.back());
            int y = 0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), y);
            if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty())
                throw ParseError("non-integer label '" + std::string(cell) + "'", line_no);
            const bool in_range = y >= 1 && (!num_classes || y <= *num_classes);
            if (y != kMissingLabel && !in_range)
                throw ParseError("label " + std::to_string(y) + " is neither a class id nor -1",
                                 line_no);
            labels.push_back(y);
        }
        ++rows;
    }
    if (rows == 0) throw ParseError("no data rows", line_no);

    CsvData out;
    out.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(nfeat));
    if (has_labels) out.labels = std::move(labels);
    return out;
}

CsvData load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    return parse_csv(in);
}

void write_csv(std::ostream& out, const Matrix& features,
               const std::optional<std::vector<int>>& labels) {
    if (labels && static_cast<Eigen::Index>(labels->size()) != features.rows())
        throw InputError("write_csv: label count does not match rows");
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
        if (j) out << ',';
        out << 'f' << (j + 1);
    }
    if (labels) out << ",label";
    out << '\n';
    char buf[64];
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        for (Eigen::Index j = 0; j < features.cols(); ++j) {
            if (j) out << ',';
            const auto res = std::to_chars(buf, buf + sizeof buf, features(i, j));
            out.write(buf, res.ptr - buf);
        }
        if (labels) out << ',' << (*labels)[static_cast<std::size_t>(i)];
        out << '\n';
    }
}

void save_csv(const std::filesystem::path& path, const Matrix& features,
              const std::optional<std::vector<int>>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    write_csv(out, features, labels);
}

std::pair<LabeledSet, UnlabeledSet> partition_labeled(const CsvData& data, int num_classes) {
    std::vector<Eigen::Index> lab, unl;
    for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
        if (data.labels && (*data.labels)[static_cast<std::size_t>(i)] != kMissingLabel)
            lab.push_back(i);
        else
            unl.push_back(i);
    }
    LabeledSet ls;
    ls.features = select_rows(data.features, lab);
    ls.num_classes = num_classes;
    for (auto i : lab) {
        const int y = (*data.labels)[static_cast<std::size_t>(i)];
        if (y < 1 || y > num_classes) throw InputError("label " + std::to_string(y) + " out of range");
        ls.labels.push_back(y);
    }
    UnlabeledSet us;
    us.features = select_rows(data.features, unl);
    return {std::move(ls), std::move(us)};
}

}  // namespace deepsep
