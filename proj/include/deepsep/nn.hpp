#pragma once

#include "deepsep/dataset.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

namespace deepsep {

// Layer sizes and regularization for the embedding network f and head g:
//   f: dense(d -> hidden1) tanh -> batch-norm -> dropout -> dense(hidden1 -> hidden2) tanh
//   g: dense(hidden2 -> c) softmax
struct MlpConfig {
    int input_dim = 0;
    int hidden1 = 128;
    int hidden2 = 32;  // embedding dimension m
    int num_classes = 0;
    double dropout = 0.5;
    double bn_momentum = 0.9;
    double bn_eps = 1e-3;
    // Tikhonov coefficients for W1, W2, W3; must be non-increasing.
    std::array<double, 3> tikhonov{1e-2, 1e-3, 1e-4};

    void validate() const;
};

// Every trainable tensor. Vectors are stored as 1 x k matrices so that the
// optimizer can treat all tensors uniformly. Also used for gradients.
struct MlpParams {
    Matrix W1, b1, gamma, beta, W2, b2;  // theta (embedding f)
    Matrix W3, b3;                       // psi (head g)

    static constexpr std::size_t kTensorCount = 8;
    static constexpr std::array<const char*, kTensorCount> kNames{
        "W1", "b1", "gamma", "beta", "W2", "b2", "W3", "b3"};

    std::array<Matrix*, kTensorCount> tensors() {
        return {&W1, &b1, &gamma, &beta, &W2, &b2, &W3, &b3};
    }
    std::array<const Matrix*, kTensorCount> tensors() const {
        return {&W1, &b1, &gamma, &beta, &W2, &b2, &W3, &b3};
    }
    MlpParams zeros_like() const;
    bool all_finite() const;
};

using Gradients = MlpParams;

enum class Mode { Train, Eval };

struct MlpModel {
    MlpConfig config;
    MlpParams params;
    Matrix running_mean;  // 1 x hidden1
    Matrix running_var;   // 1 x hidden1
    // Bumped on every parameter write; a forward pass remembers the value it saw.
    std::uint64_t version = 0;

    void touch() { ++version; }
};

/// Everything backward() needs from a forward call.
struct ForwardPass {
    Mode mode = Mode::Eval;
    std::uint64_t version = 0;
    Matrix input;
    Matrix a1;         // tanh(X W1 + b1)
    Matrix xhat;       // normalized a1
    Matrix bn_mean;    // statistics actually used (batch or running)
    Matrix bn_var;
    Matrix inv_std;
    Matrix mask;       // inverted-dropout multipliers (0 or 1/(1-p)); empty in eval
    Matrix dropped;    // batch-norm output after dropout
    Matrix embedding;  // tanh(dropped W2 + b2), n x hidden2
    Matrix logits;
    ProbMatrix probs;
};

enum class LossKind { KL, CrossEntropy, MSE };

/// Glorot-normal weights (std sqrt(2/(fan_in+fan_out))), zero biases,
/// batch-norm scale 1 and shift 0, running variance 1.
MlpModel init_glorot(const MlpConfig& config, std::uint64_t seed);

/// Train mode draws the dropout mask from `rng` and normalizes with batch
/// statistics; it does not touch the running statistics (see
/// commit_batch_stats). Eval mode is a pure function of model and input.
ForwardPass forward(const MlpModel& model, const Matrix& X, Mode mode, Rng* rng = nullptr);

/// Folds the batch statistics of a train-mode pass into the running averages.
void commit_batch_stats(MlpModel& model, const ForwardPass& pass);

Matrix embed(const MlpModel& model, const Matrix& X);
ProbMatrix predict(const MlpModel& model, const Matrix& X);
ProbMatrix softmax_rows(const Matrix& logits);

double kl_loss(const ProbMatrix& target, const ProbMatrix& pred);
double cross_entropy_loss(const ProbMatrix& target, const ProbMatrix& pred);
double mse_loss(const ProbMatrix& target, const ProbMatrix& pred);
double data_loss(LossKind kind, const ProbMatrix& target, const ProbMatrix& pred);
double tikhonov_penalty(const MlpModel& model);

/// Gradient of data_loss + tikhonov_penalty with respect to every parameter.
/// Throws UsageError when the pass was produced before the latest parameter
/// update.
Gradients backward(const MlpModel& model, const ForwardPass& pass, LossKind kind,
                   const ProbMatrix& target);

std::string loss_name(LossKind kind);

// Checkpoints are JSON: {"format":"deepsep-mlp","version":1,"config":{...},
// "tensors":{name:{"rows":r,"cols":c,"data":[row-major]}}}.
void save_model(const std::filesystem::path& path, const MlpModel& model);
MlpModel load_model(const std::filesystem::path& path);
std::string model_to_json(const MlpModel& model);
MlpModel model_from_json(const std::string& text);

}  // namespace deepsep
