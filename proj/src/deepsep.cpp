#include "deepsep/deepsep.hpp"

#include "deepsep/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace deepsep {

void DeepSepConfig::validate() const {
    if (T < 0) throw ParameterError("deepsep: T must be >= 0");
    if (!(rho > 0.0 && rho < 1.0)) throw ParameterError("deepsep: rho must lie in (0, 1)");
    if (u_sub < 1) throw ParameterError("deepsep: u_sub must be >= 1");
    if (!(C > 0.0)) throw ParameterError("deepsep: C must be positive");
    if (!(refine_lr_factor > 0.0)) throw ParameterError("deepsep: refine_lr_factor must be positive");
    if (mse_epochs < 0 || kl_epochs < 0 || init_epochs < 0)
        throw ParameterError("deepsep: epoch counts must be non-negative");
    if (batch_size < 1) throw ParameterError("deepsep: batch_size must be >= 1");
    if (!(lr > 0.0)) throw ParameterError("deepsep: lr must be positive");
    if (patience < 1) throw ParameterError("deepsep: patience must be >= 1");
}

MlpConfig DeepSepConfig::mlp(int input_dim, int num_classes) const {
    MlpConfig m;
    m.input_dim = input_dim;
    m.num_classes = num_classes;
    m.hidden1 = hidden1;
    m.hidden2 = hidden2;
    m.dropout = dropout;
    m.tikhonov = tikhonov;
    return m;
}

TsvmParams DeepSepConfig::tsvm(Eigen::Index labeled, Eigen::Index unlabeled) const {
    TsvmParams p;
    p.C = C;
    p.Cstar = unlabeled > 0 ? static_cast<double>(labeled) / static_cast<double>(unlabeled) * C : 0.0;
    p.s = ramp_s;
    p.balance = balance;
    p.tol = tsvm_tol;
    p.max_outer = max_outer;
    return p;
}

void ema_update(EmaEnsemble& ensemble, const ProbMatrix& p, double rho) {
    if (!(rho > 0.0 && rho < 1.0)) throw ParameterError("ema_update: rho must lie in (0, 1)");
    if (!ensemble.initialized) {
        ensemble.running = p;
        ensemble.initialized = true;
    } else {
        if (p.rows() != ensemble.running.rows() || p.cols() != ensemble.running.cols())
            throw InputError("ema_update: shape mismatch");
        ensemble.running = rho * ensemble.running + (1.0 - rho) * p;
    }
    for (Eigen::Index i = 0; i < ensemble.running.rows(); ++i) {
        const double s = ensemble.running.row(i).sum();
        if (s > 0.0) ensemble.running.row(i) /= s;
    }
}

std::vector<int> argmax_labels(const Matrix& scores) {
    std::vector<int> out(static_cast<std::size_t>(scores.rows()));
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        Eigen::Index j = 0;
        scores.row(i).maxCoeff(&j);
        out[static_cast<std::size_t>(i)] = static_cast<int>(j) + 1;
    }
    return out;
}

double accuracy_percent(const ProbMatrix& scores, std::span<const int> labels) {
    if (static_cast<Eigen::Index>(labels.size()) != scores.rows())
        throw InputError("accuracy: label count does not match rows");
    if (labels.empty()) return 0.0;
    const auto pred = argmax_labels(scores);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i] ? 1 : 0;
    return 100.0 * static_cast<double>(hit) / static_cast<double>(labels.size());
}

double train_epoch(MlpModel& model, AdamState& adam, const Matrix& X, const ProbMatrix& targets,
                   LossKind kind, int batch_size, Rng& rng) {
    const Eigen::Index n = X.rows();
    if (targets.rows() != n) throw InputError("train_epoch: target rows do not match inputs");
    if (n == 0) return 0.0;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);

    double total = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += batch_size) {
        const Eigen::Index stop = std::min<Eigen::Index>(n, start + batch_size);
        const std::span<const Eigen::Index> idx(order.data() + start, static_cast<std::size_t>(stop - start));
        const Matrix xb = select_rows(X, idx);
        const ProbMatrix tb = select_rows(targets, idx);
        const ForwardPass pass = forward(model, xb, Mode::Train, &rng);
        const double loss = data_loss(kind, tb, pass.probs);
        if (!std::isfinite(loss)) throw TrainingError("training diverged: " + loss_name(kind) + " loss is not finite");
        const Gradients g = backward(model, pass, kind, tb);
        if (!g.all_finite()) throw TrainingError("training diverged: non-finite gradient");
        commit_batch_stats(model, pass);
        adam_step(adam, model, g);
        total += loss;
        ++batches;
    }
    return total / batches;
}

InitReport init_supervised(MlpModel& model, AdamState& adam, const LabeledSet& labeled,
                           const LabeledSet* validation, const DeepSepConfig& config, Rng& rng) {
    labeled.validate();
    const ProbMatrix targets = smooth_labels(labeled.labels, labeled.num_classes, config.eps);
    InitReport rep;
    rep.start_loss = kl_loss(targets, predict(model, labeled.features));

    const bool early_stop = validation != nullptr && validation->size() > 0;
    ProbMatrix val_targets;
    if (early_stop) val_targets = smooth_labels(validation->labels, validation->num_classes, config.eps);

    MlpModel best = model;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int epoch = 1; epoch <= config.init_epochs; ++epoch) {
        rep.epoch_losses.push_back(
            train_epoch(model, adam, labeled.features, targets, LossKind::KL, config.batch_size, rng));
        rep.epochs_run = epoch;
        if (!early_stop) continue;
        const double v = kl_loss(val_targets, predict(model, validation->features));
        if (!std::isfinite(v)) throw TrainingError("training diverged: validation loss is not finite");
        if (v < best_val) {
            best_val = v;
            best = model;
            rep.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    if (early_stop && rep.best_epoch > 0) {
        const auto version = model.version;
        model = std::move(best);
        model.version = version + 1;
    } else {
        rep.best_epoch = rep.epochs_run;
    }
    rep.end_loss = kl_loss(targets, predict(model, labeled.features));
    return rep;
}

RefineResult refine_once(MlpModel& model, AdamState& adam, const LabeledSet& labeled,
                         const UnlabeledSet& unlabeled, const DeepSepConfig& config, Rng& rng) {
    RefineResult res;
    const Eigen::Index u = unlabeled.size();
    const ProbMatrix targets = smooth_labels(labeled.labels, labeled.num_classes, config.eps);

    if (u > 0) {
        const Matrix emb_l = embed(model, labeled.features);
        const Matrix emb_u = embed(model, unlabeled.features);

        // fresh subsample without replacement (partial Fisher-Yates)
        std::vector<Eigen::Index> pool(static_cast<std::size_t>(u));
        std::iota(pool.begin(), pool.end(), Eigen::Index{0});
        const auto take = static_cast<std::size_t>(std::min<Eigen::Index>(u, config.u_sub));
        for (std::size_t k = 0; k < take; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
            std::swap(pool[k], pool[pick(rng)]);
        }
        pool.resize(take);
        const Matrix sub = select_rows(emb_u, pool);

        const TsvmParams params = config.tsvm(labeled.size(), sub.rows());
        const auto models = ovr_fit(emb_l, labeled.labels, labeled.num_classes, sub, params);
        std::vector<int> signs(labeled.labels.size());
        for (int k = 1; k <= labeled.num_classes; ++k) {
            for (std::size_t i = 0; i < signs.size(); ++i) signs[i] = labeled.labels[i] == k ? 1 : -1;
            res.tsvm_objective.push_back(tsvm_objective(models[static_cast<std::size_t>(k - 1)], emb_l, signs, sub));
        }
        res.phat = decisions_to_probs(ovr_decisions(models, emb_u));

        for (int e = 0; e < config.mse_epochs; ++e)
            res.mse_loss = train_epoch(model, adam, unlabeled.features, res.phat, LossKind::MSE,
                                       config.batch_size, rng);
    } else {
        res.phat = ProbMatrix(0, labeled.num_classes);
    }
    for (int e = 0; e < config.kl_epochs; ++e)
        res.kl_loss = train_epoch(model, adam, labeled.features, targets, LossKind::KL, config.batch_size, rng);
    return res;
}

namespace {

void write_log_line(std::ofstream& out, const IterationLog& rec) {
    nlohmann::json j;
    j["iteration"] = rec.iteration;
    j["tsvm_objective"] = rec.tsvm_objective;
    j["train_loss"] = rec.train_loss;
    j["val_accuracy"] = rec.val_accuracy ? nlohmann::json(*rec.val_accuracy) : nlohmann::json(nullptr);
    out << j.dump() << '\n';
}

void checkpoint(const std::filesystem::path& dir, int t, const MlpModel& model, const ProbMatrix& ensemble) {
    save_model(dir / ("model_iter" + std::to_string(t) + ".json"), model);
    save_csv(dir / ("ensemble_iter" + std::to_string(t) + ".csv"), ensemble);
}

}  // namespace

RunResult run(const LabeledSet& labeled, const UnlabeledSet& unlabeled, const DeepSepConfig& config,
              const RunOptions& options) {
    config.validate();
    labeled.validate();
    unlabeled.validate(labeled.dim());
    for (int k = 1; k <= labeled.num_classes; ++k)
        if (std::find(labeled.labels.begin(), labeled.labels.end(), k) == labeled.labels.end())
            throw DegenerateError("deepsep: class " + std::to_string(k) + " has no labeled points");

    Rng rng(config.seed);
    RunResult out;
    out.model = init_glorot(config.mlp(static_cast<int>(labeled.dim()), labeled.num_classes), rng());
    AdamState adam;
    adam.lr = config.lr;

    std::optional<std::ofstream> log_file;
    if (options.run_dir) {
        std::filesystem::create_directories(*options.run_dir);
        log_file.emplace(*options.run_dir / "log.jsonl");
        if (!*log_file) throw InputError("cannot write run log in " + options.run_dir->string());
    }
    auto val_accuracy = [&]() -> std::optional<double> {
        if (options.validation == nullptr || options.validation->size() == 0) return std::nullopt;
        return accuracy_percent(predict(out.model, options.validation->features), options.validation->labels);
    };

    out.init = init_supervised(out.model, adam, labeled, options.validation, config, rng);
    EmaEnsemble ema;
    auto record = [&](IterationLog rec) {
        ProbMatrix p = predict(out.model, unlabeled.features);
        ema_update(ema, p, config.rho);
        out.history.push_back(std::move(p));
        out.ensemble_history.push_back(ema.running);
        rec.val_accuracy = val_accuracy();
        if (log_file) write_log_line(*log_file, rec);
        if (options.run_dir) checkpoint(*options.run_dir, rec.iteration, out.model, ema.running);
        out.log.push_back(std::move(rec));
    };
    record({0, {}, out.init.end_loss, std::nullopt});

    scale_lr(adam, config.refine_lr_factor);
    for (int t = 1; t <= config.T; ++t) {
        RefineResult r = refine_once(out.model, adam, labeled, unlabeled, config, rng);
        record({t, std::move(r.tsvm_objective), r.kl_loss, std::nullopt});
    }
    out.ensemble = ema.running;
    return out;
}

}  // namespace deepsep
