#include "deepsep/experiment.hpp"

#include "deepsep/error.hpp"
#include "deepsep/labelprop.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace deepsep {

void ExperimentSpec::validate() const {
    if (shuffles < 1) throw ParameterError("experiment: shuffle count must be >= 1");
    if (ells.empty()) throw ParameterError("experiment: empty training-size grid");
    if (!std::is_sorted(ells.begin(), ells.end()) ||
        std::adjacent_find(ells.begin(), ells.end()) != ells.end())
        throw ParameterError("experiment: training sizes must be strictly ascending");
    for (int l : ells)
        if (l < 1) throw ParameterError("experiment: training sizes must be positive");
    for (const auto& m : methods)
        if (std::find(kKnownMethods.begin(), kKnownMethods.end(), m) == kKnownMethods.end())
            throw ParameterError("experiment: unknown method '" + m + "'");
    if (val_size < 0 || test_size < 1) throw ParameterError("experiment: bad validation/test size");
    deepsep.validate();
}

std::optional<double> ResultTable::average(const std::string& method, int ell) const {
    double sum = 0.0;
    int count = 0;
    for (int s = 1; s <= shuffles; ++s) {
        const auto it = cells.find({s, method, ell});
        if (it != cells.end() && it->second.accuracy) {
            sum += *it->second.accuracy;
            ++count;
        }
    }
    if (count == 0) return std::nullopt;
    return sum / count;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string sanitize(std::string s) {
    for (char& ch : s)
        if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
    return s;
}

bool wants(const ExperimentSpec& spec, std::string_view m) {
    return std::find(spec.methods.begin(), spec.methods.end(), m) != spec.methods.end();
}

// Largest balanced test size that still leaves room for validation and the
// largest training set in every class.
int capped_test_size(const SyntheticData& data, const ExperimentSpec& spec) {
    const int c = data.num_classes;
    std::vector<int> count(static_cast<std::size_t>(c), 0);
    for (int y : data.labels) ++count[static_cast<std::size_t>(y - 1)];
    const int max_ell = spec.ells.back();
    int per_class = std::numeric_limits<int>::max();
    for (int k = 0; k < c; ++k) {
        const int val_k = spec.val_size / c + (k < spec.val_size % c ? 1 : 0);
        const int ell_k = max_ell / c + (k < max_ell % c ? 1 : 0);
        per_class = std::min(per_class, count[static_cast<std::size_t>(k)] - val_k - ell_k);
    }
    return std::max(0, std::min(spec.test_size, per_class * c));
}

Matrix subsample_rows(const Matrix& X, int take, Rng& rng) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(X.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    const auto k = std::min<std::size_t>(idx.size(), static_cast<std::size_t>(take));
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(k);
    return select_rows(X, idx);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, int shuffle, int ell, std::string_view stream) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the stream name
    for (unsigned char ch : stream) h = (h ^ ch) * 0x100000001b3ULL;
    std::uint64_t x = splitmix(master);
    x = splitmix(x ^ static_cast<std::uint64_t>(shuffle));
    x = splitmix(x ^ (static_cast<std::uint64_t>(ell) << 20));
    return splitmix(x ^ h);
}

SyntheticData load_dataset(const DatasetSpec& spec) {
    if (spec.generator == "mixture")
        return gen_gaussian_mixture(spec.n, spec.classes, spec.dim, spec.sep, spec.seed);
    if (spec.generator == "moons") return gen_two_moons(spec.n, spec.noise, spec.seed);
    if (spec.generator == "csv") {
        const CsvData csv = load_csv(spec.csv);
        if (!csv.labels) throw InputError("experiment: CSV dataset needs a label column");
        SyntheticData d;
        std::vector<Eigen::Index> keep;
        for (std::size_t i = 0; i < csv.labels->size(); ++i)
            if ((*csv.labels)[i] != kMissingLabel) keep.push_back(static_cast<Eigen::Index>(i));
        d.features = select_rows(csv.features, keep);
        for (auto i : keep) d.labels.push_back((*csv.labels)[static_cast<std::size_t>(i)]);
        d.num_classes = max_label(d.labels);
        return d;
    }
    throw ParameterError("experiment: unknown generator '" + spec.generator + "'");
}

ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::function<void(const std::string&)>& progress) {
    spec.validate();
    const SyntheticData data = load_dataset(spec.dataset);
    const int c = data.num_classes;

    ExperimentResult out;
    out.table.methods = spec.methods;
    out.table.ells = spec.ells;
    out.table.shuffles = spec.shuffles;
    out.test_size = capped_test_size(data, spec);

    using clock = std::chrono::steady_clock;
    auto seconds_since = [](clock::time_point t0) {
        return std::chrono::duration<double>(clock::now() - t0).count();
    };
    auto fail_all = [&](int s, int ell, const std::string& msg, std::initializer_list<std::string_view> only = {}) {
        for (const auto& m : spec.methods)
            if (only.size() == 0 || std::find(only.begin(), only.end(), m) != only.end())
                out.table.cells[{s, m, ell}] = Cell{std::nullopt, sanitize(msg)};
    };

    const bool any_deepsep = wants(spec, "initial_nn") || wants(spec, "deepsep_nn") || wants(spec, "deepsep_ensemble");
    for (int s = 1; s <= spec.shuffles; ++s) {
        std::vector<SplitPart> parts;
        try {
            SplitSpec split;
            split.train_sizes = spec.ells;
            split.val_size = spec.val_size;
            split.test_size = out.test_size;
            split.seed = derive_seed(spec.seed, s, 0, "split");
            parts = split_and_mask(data.features, data.labels, c, split);
        } catch (const Error& e) {
            for (int ell : spec.ells) fail_all(s, ell, e.what());
            continue;
        }
        for (std::size_t li = 0; li < spec.ells.size(); ++li) {
            const int ell = spec.ells[li];
            const SplitPart& part = parts[li];
            if (progress) progress("shuffle " + std::to_string(s) + " l=" + std::to_string(ell));

            if (any_deepsep) {
                const auto t0 = clock::now();
                try {
                    DeepSepConfig cfg = spec.deepsep;
                    cfg.seed = derive_seed(spec.seed, s, ell, "deepsep");
                    RunOptions opts;
                    opts.validation = &part.val;
                    if (spec.checkpoint_dir)
                        opts.run_dir = *spec.checkpoint_dir / ("shuffle" + std::to_string(s) + "_l" + std::to_string(ell));
                    const RunResult r = run(part.train, part.unlabeled, cfg, opts);
                    const auto& truth = part.hidden_labels;
                    const double dt = seconds_since(t0);
                    auto put = [&](const char* m, const ProbMatrix& p) {
                        if (!wants(spec, m)) return;
                        out.table.cells[{s, m, ell}] = Cell{accuracy_percent(p, truth), {}};
                        out.seconds[{s, m, ell}] = dt;
                    };
                    put("initial_nn", r.history.front());
                    put("deepsep_nn", r.history.back());
                    put("deepsep_ensemble", r.ensemble);
                    for (std::size_t t = 0; t < r.history.size(); ++t)
                        out.traces.push_back({s, ell, static_cast<int>(t), accuracy_percent(r.history[t], truth),
                                              accuracy_percent(r.ensemble_history[t], truth)});
                } catch (const Error& e) {
                    fail_all(s, ell, e.what(), {"initial_nn", "deepsep_nn", "deepsep_ensemble"});
                }
            }
            if (wants(spec, "tsvm")) {
                const auto t0 = clock::now();
                try {
                    Rng rng(derive_seed(spec.seed, s, ell, "tsvm"));
                    const Matrix sub = subsample_rows(part.unlabeled.features, spec.deepsep.u_sub, rng);
                    const TsvmParams params = spec.deepsep.tsvm(part.train.size(), sub.rows());
                    const auto models = ovr_fit(part.train.features, part.train.labels, c, sub, params);
                    const Matrix d = ovr_decisions(models, part.unlabeled.features);
                    out.table.cells[{s, "tsvm", ell}] = Cell{accuracy_percent(d, part.hidden_labels), {}};
                    out.seconds[{s, "tsvm", ell}] = seconds_since(t0);
                } catch (const Error& e) {
                    fail_all(s, ell, e.what(), {"tsvm"});
                }
            }
            if (wants(spec, "labelprop")) {
                const auto t0 = clock::now();
                try {
                    Matrix X(part.train.size() + part.unlabeled.size(), data.features.cols());
                    X << part.train.features, part.unlabeled.features;
                    std::vector<Eigen::Index> rows(static_cast<std::size_t>(part.train.size()));
                    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
                    const PropResult r = propagate(X, rows, part.train.labels, c);
                    out.table.cells[{s, "labelprop", ell}] = Cell{accuracy_percent(r.unlabeled, part.hidden_labels), {}};
                    out.seconds[{s, "labelprop", ell}] = seconds_since(t0);
                } catch (const Error& e) {
                    fail_all(s, ell, e.what(), {"labelprop"});
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// reports

std::string report(const ResultTable& table, ReportFormat format) {
    std::ostringstream os;
    if (format == ReportFormat::Csv) {
        os << "shuffle,method,ell,accuracy,error\n";
        auto emit = [&](const std::string& shuffle, const std::string& m, int ell, const std::optional<double>& acc,
                        const std::string& err) {
            os << shuffle << ',' << m << ',' << ell << ',' << (acc ? format_double(*acc) : "NA") << ','
               << err << '\n';
        };
        for (int s = 1; s <= table.shuffles; ++s)
            for (const auto& m : table.methods)
                for (int ell : table.ells) {
                    const auto it = table.cells.find({s, m, ell});
                    if (it == table.cells.end()) continue;
                    emit(std::to_string(s), m, ell, it->second.accuracy, it->second.error);
                }
        for (const auto& m : table.methods)
            for (int ell : table.ells) emit("avg", m, ell, table.average(m, ell), "");
        return os.str();
    }

    std::size_t width = 5;
    for (const auto& m : table.methods) width = std::max(width, m.size());
    char buf[64];
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    os << pad("Shuffle", 9) << pad("Model", width + 2);
    for (int ell : table.ells) {
        std::snprintf(buf, sizeof buf, "%8d", ell);
        os << buf;
    }
    os << '\n';
    auto cell_text = [&](const std::optional<double>& acc) {
        if (!acc) return std::string("    fail");
        std::snprintf(buf, sizeof buf, "%8.2f", *acc);
        return std::string(buf);
    };
    for (int s = 1; s <= table.shuffles && !table.methods.empty(); ++s) {
        bool first = true;
        for (const auto& m : table.methods) {
            os << pad(first ? std::to_string(s) : "", 9) << pad(m, width + 2);
            first = false;
            for (int ell : table.ells) {
                const auto it = table.cells.find({s, m, ell});
                os << (it == table.cells.end() ? std::string("       -") : cell_text(it->second.accuracy));
            }
            os << '\n';
        }
    }
    bool first = true;
    for (const auto& m : table.methods) {
        os << pad(first ? "Average" : "", 9) << pad(m, width + 2);
        first = false;
        for (int ell : table.ells) os << cell_text(table.average(m, ell));
        os << '\n';
    }
    return os.str();
}

ResultTable parse_results_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw ParseError("empty results file", 1);
    if (line != "shuffle,method,ell,accuracy,error") throw ParseError("unexpected results header", 1);
    ResultTable t;
    std::set<int> ells;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ',')) f.push_back(item);
        if (!line.empty() && line.back() == ',') f.emplace_back();
        if (f.size() != 5) throw ParseError("expected 5 fields", line_no);
        if (f[0] == "avg") continue;
        CellKey key;
        Cell cell;
        try {
            key.shuffle = std::stoi(f[0]);
            key.ell = std::stoi(f[2]);
        } catch (const std::exception&) {
            throw ParseError("bad shuffle or ell field", line_no);
        }
        key.method = f[1];
        if (f[3] != "NA") {
            double v = 0.0;
            const auto r = std::from_chars(f[3].data(), f[3].data() + f[3].size(), v);
            if (r.ec != std::errc{} || r.ptr != f[3].data() + f[3].size())
                throw ParseError("bad accuracy field", line_no);
            cell.accuracy = v;
        }
        cell.error = f[4];
        if (std::find(t.methods.begin(), t.methods.end(), key.method) == t.methods.end())
            t.methods.push_back(key.method);
        ells.insert(key.ell);
        t.shuffles = std::max(t.shuffles, key.shuffle);
        t.cells[key] = cell;
    }
    t.ells.assign(ells.begin(), ells.end());
    return t;
}

ResultTable load_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    return parse_results_csv(in);
}

std::string traces_csv(const std::vector<IterationTrace>& traces) {
    std::ostringstream os;
    os << "shuffle,ell,iteration,nn_accuracy,ensemble_accuracy\n";
    for (const auto& t : traces)
        os << t.shuffle << ',' << t.ell << ',' << t.iteration << ',' << format_double(t.nn_accuracy) << ','
           << format_double(t.ensemble_accuracy) << '\n';
    return os.str();
}

std::string timings_csv(const std::map<CellKey, double>& seconds) {
    std::ostringstream os;
    os << "shuffle,method,ell,seconds\n";
    for (const auto& [k, v] : seconds) os << k.shuffle << ',' << k.method << ',' << k.ell << ',' << v << '\n';
    return os.str();
}

}  // namespace deepsep
