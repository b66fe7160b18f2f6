#pragma once

#include "deepsep/dataset.hpp"
#include "deepsep/nn.hpp"
#include "deepsep/optim.hpp"
#include "deepsep/tsvm.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace deepsep {

struct DeepSepConfig {
    int T = 6;              // refinement rounds
    double rho = 0.8;       // EMA discount: running <- rho*running + (1-rho)*new
    double eps = 1e-3;      // label smoothing
    double C = 0.1;         // labeled TSVM cost; C* = (l / u_sub) * C
    int u_sub = 250;        // unlabeled points handed to each TSVM round
    double refine_lr_factor = 0.1;
    int mse_epochs = 10;
    int kl_epochs = 10;
    int init_epochs = 100;
    int patience = 10;      // early stopping on validation KL during init
    int batch_size = 32;
    double lr = 1e-3;
    double ramp_s = -0.3;
    bool balance = true;
    double tsvm_tol = 1e-6;
    int max_outer = 50;
    int hidden1 = 128;
    int hidden2 = 32;
    double dropout = 0.5;
    std::array<double, 3> tikhonov{1e-2, 1e-3, 1e-4};
    std::uint64_t seed = 0;

    void validate() const;
    MlpConfig mlp(int input_dim, int num_classes) const;
    TsvmParams tsvm(Eigen::Index labeled, Eigen::Index unlabeled) const;
};

struct EmaEnsemble {
    ProbMatrix running;
    bool initialized = false;
};

/// First call copies p; later calls blend rho*running + (1-rho)*p and
/// renormalize rows.
void ema_update(EmaEnsemble& ensemble, const ProbMatrix& p, double rho);

struct InitReport {
    std::vector<double> epoch_losses;  // mean minibatch KL per epoch
    double start_loss = 0.0;           // eval-mode KL on D0 before training
    double end_loss = 0.0;             // eval-mode KL on D0 after training
    int epochs_run = 0;
    int best_epoch = 0;
};

struct RefineResult {
    ProbMatrix phat;                     // TSVM class probabilities for every unlabeled row
    std::vector<double> tsvm_objective;  // per class, on the embedded subsample
    double mse_loss = 0.0;               // mean minibatch loss of the final MSE epoch
    double kl_loss = 0.0;                // mean minibatch loss of the final KL epoch
};

struct IterationLog {
    int iteration = 0;
    std::vector<double> tsvm_objective;
    double train_loss = 0.0;
    std::optional<double> val_accuracy;
};

struct RunOptions {
    const LabeledSet* validation = nullptr;
    std::optional<std::filesystem::path> run_dir;  // checkpoints + log.jsonl when set
};

struct RunResult {
    MlpModel model;
    ProbMatrix ensemble;
    std::vector<ProbMatrix> history;  // network predictions on D1; entry 0 is the initial model
    std::vector<ProbMatrix> ensemble_history;
    std::vector<IterationLog> log;
    InitReport init;
};

/// One pass over (X, targets) in shuffled minibatches; returns the mean
/// minibatch data loss.
double train_epoch(MlpModel& model, AdamState& adam, const Matrix& X, const ProbMatrix& targets,
                   LossKind kind, int batch_size, Rng& rng);

/// Supervised training on smoothed labels with KL. With a validation set the
/// weights of the epoch with the lowest validation KL are kept.
InitReport init_supervised(MlpModel& model, AdamState& adam, const LabeledSet& labeled,
                           const LabeledSet* validation, const DeepSepConfig& config, Rng& rng);

/// Embed, fit one-vs-rest TSVMs on a fresh unlabeled subsample, score every
/// unlabeled point, then train mse_epochs towards those scores and kl_epochs
/// on the labeled set at the optimizer's current rate.
RefineResult refine_once(MlpModel& model, AdamState& adam, const LabeledSet& labeled,
                         const UnlabeledSet& unlabeled, const DeepSepConfig& config, Rng& rng);

RunResult run(const LabeledSet& labeled, const UnlabeledSet& unlabeled, const DeepSepConfig& config,
              const RunOptions& options = {});

/// Percentage of rows whose argmax (first maximum) equals the 1-based label.
double accuracy_percent(const ProbMatrix& scores, std::span<const int> labels);
std::vector<int> argmax_labels(const Matrix& scores);

}  // namespace deepsep
