// deepsep: dataset generation, experiment runs and result reports.
//
//   deepsep gen    --generator mixture --n 2500 --out data.csv
//   deepsep run    --config exp.ini --seed 7 --out results/
//   deepsep report --results results/ [--format csv]

#include "deepsep/error.hpp"
#include "deepsep/experiment.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw deepsep::InputError("cannot write " + path.string());
    out << text;
}

void add_dataset_options(CLI::App* cmd, deepsep::DatasetSpec& d) {
    cmd->add_option("--generator", d.generator, "mixture | moons | csv")->check(CLI::IsMember({"mixture", "moons", "csv"}));
    cmd->add_option("--n", d.n, "number of samples")->check(CLI::PositiveNumber);
    cmd->add_option("--classes", d.classes, "mixture: class count")->check(CLI::Range(2, 1000));
    cmd->add_option("--dim", d.dim, "mixture: feature dimension")->check(CLI::PositiveNumber);
    cmd->add_option("--sep", d.sep, "mixture: minimum distance between class means")->check(CLI::PositiveNumber);
    cmd->add_option("--noise", d.noise, "moons: Gaussian noise std-dev")->check(CLI::NonNegativeNumber);
    cmd->add_option("--data-seed", d.seed, "generator seed");
}

// Options given on the command line win over the file.
void apply_config(CLI::App* cmd, const std::filesystem::path& path) {
    for (const auto& item : CLI::ConfigINI().from_file(path.string())) {
        if (item.name == "config" || item.name == "++" || item.name == "--") continue;
        if (!item.parents.empty()) throw deepsep::InputError(path.string() + ": sections are not supported");
        CLI::Option* opt = cmd->get_option_no_throw("--" + item.name);
        if (opt == nullptr) throw deepsep::InputError(path.string() + ": unknown key '" + item.name + "'");
        if (opt->count() > 0) continue;
        std::vector<std::string> values;
        for (const auto& v : item.inputs)
            if (!v.empty()) values.push_back(v);
        if (values.empty()) continue;
        opt->clear();
        opt->add_result(values);
        opt->run_callback();
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep low-density separation experiments"};
    app.require_subcommand(1);

    // gen
    deepsep::DatasetSpec gen_spec;
    std::filesystem::path gen_out;
    double mask_fraction = 0.0;
    std::uint64_t mask_seed = 0;
    auto* gen = app.add_subcommand("gen", "write a synthetic dataset as CSV");
    add_dataset_options(gen, gen_spec);
    gen->add_option("--out", gen_out, "output CSV path")->required();
    gen->add_option("--mask-fraction", mask_fraction, "fraction of labels replaced by -1")->check(CLI::Range(0.0, 1.0));
    gen->add_option("--mask-seed", mask_seed, "seed for label masking");

    // run
    deepsep::ExperimentSpec spec;
    auto& ds = spec.deepsep;
    std::filesystem::path run_out;
    bool checkpoints = false;
    auto* run = app.add_subcommand("run", "run the shuffled multi-seed protocol");
    std::filesystem::path config_path;
    run->option_defaults()->always_capture_default();
    run->add_option("--config", config_path, "flat key = value file; every key is also a --flag")
        ->check(CLI::ExistingFile);
    add_dataset_options(run, spec.dataset);
    run->add_option("--csv", spec.dataset.csv, "dataset CSV when --generator csv");
    run->add_option("--methods", spec.methods, "initial_nn deepsep_nn deepsep_ensemble tsvm labelprop");
    run->add_option("--ells", spec.ells, "ascending labeled-set sizes");
    run->add_option("--shuffles", spec.shuffles)->check(CLI::PositiveNumber);
    run->add_option("--val-size", spec.val_size)->check(CLI::NonNegativeNumber);
    run->add_option("--test-size", spec.test_size, "capped by available data")->check(CLI::PositiveNumber);
    run->add_option("--seed", spec.seed, "master seed")->required();
    run->add_option("--out", run_out, "results directory")->required();
    run->add_flag("--checkpoints", checkpoints, "write per-iteration checkpoints and logs per cell");
    run->add_option("--iterations", ds.T, "refinement rounds T");
    run->add_option("--rho", ds.rho, "EMA discount");
    run->add_option("--eps", ds.eps, "label smoothing");
    run->add_option("--cost", ds.C, "labeled TSVM cost C");
    run->add_option("--u-sub", ds.u_sub, "unlabeled subsample per TSVM round");
    run->add_option("--lr", ds.lr, "initial Adam learning rate");
    run->add_option("--refine-lr-factor", ds.refine_lr_factor);
    run->add_option("--init-epochs", ds.init_epochs);
    run->add_option("--mse-epochs", ds.mse_epochs);
    run->add_option("--kl-epochs", ds.kl_epochs);
    run->add_option("--patience", ds.patience);
    run->add_option("--batch-size", ds.batch_size);
    run->add_option("--ramp-s", ds.ramp_s);
    run->add_option("--balance", ds.balance);
    run->add_option("--hidden1", ds.hidden1);
    run->add_option("--hidden2", ds.hidden2);
    run->add_option("--dropout", ds.dropout);
    run->add_option("--max-outer", ds.max_outer);

    // report
    std::filesystem::path results;
    std::string format = "text";
    auto* rep = app.add_subcommand("report", "render a results table");
    rep->add_option("--results", results, "results directory or results.csv")->required();
    rep->add_option("--format", format)->check(CLI::IsMember({"text", "csv"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            deepsep::SyntheticData data = deepsep::load_dataset(gen_spec);
            if (mask_fraction > 0.0) {
                deepsep::Rng rng(mask_seed);
                std::bernoulli_distribution coin(mask_fraction);
                for (int& y : data.labels)
                    if (coin(rng)) y = deepsep::kMissingLabel;
            }
            deepsep::save_csv(gen_out, data.features, data.labels);
            std::cerr << "wrote " << data.features.rows() << " rows to " << gen_out << '\n';
        } else if (*run) {
            if (!config_path.empty()) apply_config(run, config_path);
            std::filesystem::create_directories(run_out);
            if (checkpoints) spec.checkpoint_dir = run_out / "runs";
            const auto result = deepsep::run_experiment(spec, [](const std::string& msg) { std::cerr << msg << '\n'; });
            write_file(run_out / "config.ini", run->config_to_str(true, false));
            write_file(run_out / "results.csv", deepsep::report(result.table, deepsep::ReportFormat::Csv));
            write_file(run_out / "iterations.csv", deepsep::traces_csv(result.traces));
            write_file(run_out / "timings.csv", deepsep::timings_csv(result.seconds));
            const std::string text = deepsep::report(result.table, deepsep::ReportFormat::Text);
            write_file(run_out / "report.txt", text);
            std::cout << text;
        } else if (*rep) {
            const auto path = std::filesystem::is_directory(results) ? results / "results.csv" : results;
            const auto table = deepsep::load_results_csv(path);
            std::cout << deepsep::report(table, format == "csv" ? deepsep::ReportFormat::Csv : deepsep::ReportFormat::Text);
        }
    } catch (const std::exception& e) {
        std::cerr << "deepsep: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
