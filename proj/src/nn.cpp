#include "deepsep/nn.hpp"

#include "deepsep/error.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace deepsep {

void MlpConfig::validate() const {
    if (input_dim < 1) throw ParameterError("mlp: input_dim must be >= 1");
    if (num_classes < 2) throw ParameterError("mlp: num_classes must be >= 2");
    if (hidden1 < 1 || hidden2 < 1) throw ParameterError("mlp: hidden sizes must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("mlp: dropout must be in [0, 1)");
    if (!(bn_momentum >= 0.0 && bn_momentum < 1.0))
        throw ParameterError("mlp: bn_momentum must be in [0, 1)");
    if (!(bn_eps > 0.0)) throw ParameterError("mlp: bn_eps must be positive");
    if (tikhonov[2] < 0.0 || tikhonov[1] < tikhonov[2] || tikhonov[0] < tikhonov[1])
        throw ParameterError("mlp: Tikhonov coefficients must be non-negative and non-increasing");
}

MlpParams MlpParams::zeros_like() const {
    MlpParams z;
    auto dst = z.tensors();
    auto src = tensors();
    for (std::size_t k = 0; k < kTensorCount; ++k) *dst[k] = Matrix::Zero(src[k]->rows(), src[k]->cols());
    return z;
}

bool MlpParams::all_finite() const {
    for (const Matrix* t : tensors())
        if (!t->allFinite()) return false;
    return true;
}

MlpModel init_glorot(const MlpConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    auto glorot = [&rng](int fan_in, int fan_out) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (fan_in + fan_out)));
        Matrix W(fan_in, fan_out);
        for (Eigen::Index j = 0; j < W.cols(); ++j)
            for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = dist(rng);
        return W;
    };
    MlpModel m;
    m.config = config;
    m.params.W1 = glorot(config.input_dim, config.hidden1);
    m.params.b1 = Matrix::Zero(1, config.hidden1);
    m.params.gamma = Matrix::Ones(1, config.hidden1);
    m.params.beta = Matrix::Zero(1, config.hidden1);
    m.params.W2 = glorot(config.hidden1, config.hidden2);
    m.params.b2 = Matrix::Zero(1, config.hidden2);
    m.params.W3 = glorot(config.hidden2, config.num_classes);
    m.params.b3 = Matrix::Zero(1, config.num_classes);
    m.running_mean = Matrix::Zero(1, config.hidden1);
    m.running_var = Matrix::Ones(1, config.hidden1);
    return m;
}

ProbMatrix softmax_rows(const Matrix& logits) {
    ProbMatrix p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        p.row(i) = (logits.row(i).array() - mx).exp().matrix();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

ForwardPass forward(const MlpModel& model, const Matrix& X, Mode mode, Rng* rng) {
    const auto& cfg = model.config;
    const auto& P = model.params;
    if (X.cols() != cfg.input_dim)
        throw InputError("forward: expected " + std::to_string(cfg.input_dim) + " columns, got " +
                         std::to_string(X.cols()));
    if (!X.allFinite()) throw InputError("forward: non-finite input");
    if (mode == Mode::Train && cfg.dropout > 0.0 && rng == nullptr)
        throw UsageError("forward: train mode needs a random generator for dropout");

    ForwardPass f;
    f.mode = mode;
    f.version = model.version;
    f.input = X;
    const Eigen::Index n = X.rows();

    f.a1 = ((X * P.W1).rowwise() + P.b1.row(0)).array().tanh().matrix();
    if (mode == Mode::Train && n > 0) {
        f.bn_mean = f.a1.colwise().mean();
        f.bn_var = (f.a1.rowwise() - f.bn_mean.row(0)).array().square().colwise().mean().matrix();
    } else {
        f.bn_mean = model.running_mean;
        f.bn_var = model.running_var;
    }
    f.inv_std = (f.bn_var.array() + cfg.bn_eps).rsqrt().matrix();
    f.xhat = ((f.a1.rowwise() - f.bn_mean.row(0)).array().rowwise() * f.inv_std.row(0).array()).matrix();
    Matrix bn = ((f.xhat.array().rowwise() * P.gamma.row(0).array()).rowwise() + P.beta.row(0).array()).matrix();

    if (mode == Mode::Train && cfg.dropout > 0.0) {
        const double keep = 1.0 - cfg.dropout;
        std::bernoulli_distribution coin(keep);
        f.mask.resize(n, cfg.hidden1);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < cfg.hidden1; ++j) f.mask(i, j) = coin(*rng) ? 1.0 / keep : 0.0;
        f.dropped = bn.cwiseProduct(f.mask);
    } else {
        f.dropped = std::move(bn);
    }

    f.embedding = ((f.dropped * P.W2).rowwise() + P.b2.row(0)).array().tanh().matrix();
    f.logits = (f.embedding * P.W3).rowwise() + P.b3.row(0);
    f.probs = softmax_rows(f.logits);
    return f;
}

void commit_batch_stats(MlpModel& model, const ForwardPass& pass) {
    if (pass.mode != Mode::Train || pass.input.rows() == 0) return;
    const double mom = model.config.bn_momentum;
    model.running_mean = mom * model.running_mean + (1.0 - mom) * pass.bn_mean;
    model.running_var = mom * model.running_var + (1.0 - mom) * pass.bn_var;
}

Matrix embed(const MlpModel& model, const Matrix& X) { return forward(model, X, Mode::Eval).embedding; }

ProbMatrix predict(const MlpModel& model, const Matrix& X) { return forward(model, X, Mode::Eval).probs; }

namespace {

void check_same_shape(const ProbMatrix& a, const ProbMatrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw InputError(std::string(what) + ": shape mismatch");
}

}  // namespace

double kl_loss(const ProbMatrix& target, const ProbMatrix& pred) {
    check_same_shape(target, pred, "kl_loss");
    if (target.rows() == 0) return 0.0;
    double total = 0.0;
    for (Eigen::Index i = 0; i < target.rows(); ++i)
        for (Eigen::Index j = 0; j < target.cols(); ++j) {
            const double t = target(i, j);
            if (t > 0.0) total += t * std::log(t / pred(i, j));
        }
    return total / static_cast<double>(target.rows());
}

double cross_entropy_loss(const ProbMatrix& target, const ProbMatrix& pred) {
    check_same_shape(target, pred, "cross_entropy_loss");
    if (target.rows() == 0) return 0.0;
    double total = 0.0;
    for (Eigen::Index i = 0; i < target.rows(); ++i)
        for (Eigen::Index j = 0; j < target.cols(); ++j)
            if (target(i, j) > 0.0) total -= target(i, j) * std::log(pred(i, j));
    return total / static_cast<double>(target.rows());
}

double mse_loss(const ProbMatrix& target, const ProbMatrix& pred) {
    check_same_shape(target, pred, "mse_loss");
    if (target.size() == 0) return 0.0;
    return (target - pred).squaredNorm() / static_cast<double>(target.size());
}

double data_loss(LossKind kind, const ProbMatrix& target, const ProbMatrix& pred) {
    switch (kind) {
        case LossKind::KL: return kl_loss(target, pred);
        case LossKind::CrossEntropy: return cross_entropy_loss(target, pred);
        case LossKind::MSE: return mse_loss(target, pred);
    }
    return 0.0;
}

double tikhonov_penalty(const MlpModel& model) {
    const auto& lam = model.config.tikhonov;
    const auto& P = model.params;
    return lam[0] * P.W1.squaredNorm() + lam[1] * P.W2.squaredNorm() + lam[2] * P.W3.squaredNorm();
}

std::string loss_name(LossKind kind) {
    switch (kind) {
        case LossKind::KL: return "kl";
        case LossKind::CrossEntropy: return "cross_entropy";
        case LossKind::MSE: return "mse";
    }
    return "?";
}

Gradients backward(const MlpModel& model, const ForwardPass& pass, LossKind kind,
                   const ProbMatrix& target) {
    if (pass.version != model.version)
        throw UsageError("backward: forward pass is stale (model updated since)");
    if (pass.input.cols() != model.config.input_dim || pass.probs.cols() != model.config.num_classes)
        throw UsageError("backward: forward pass does not belong to this model");
    check_same_shape(target, pass.probs, "backward");

    const auto& P = model.params;
    const auto& lam = model.config.tikhonov;
    const auto n = static_cast<double>(pass.input.rows());
    const ProbMatrix& p = pass.probs;
    Gradients g;

    Matrix dlogits;
    if (n == 0.0) {
        dlogits = Matrix::Zero(0, p.cols());
    } else if (kind == LossKind::MSE) {
        const Matrix gp = 2.0 * (p - target) / (n * static_cast<double>(p.cols()));
        const Eigen::VectorXd inner = gp.cwiseProduct(p).rowwise().sum();
        dlogits = p.cwiseProduct(gp.colwise() - inner);
    } else {
        // softmax + KL/CE; targets need not sum to one
        const Eigen::VectorXd mass = target.rowwise().sum();
        dlogits = (p.array().colwise() * mass.array()).matrix() - target;
        dlogits /= n;
    }

    g.W3 = pass.embedding.transpose() * dlogits + 2.0 * lam[2] * P.W3;
    g.b3 = dlogits.colwise().sum();

    const Matrix dz2 = (dlogits * P.W3.transpose()).cwiseProduct(
        (1.0 - pass.embedding.array().square()).matrix());
    g.W2 = pass.dropped.transpose() * dz2 + 2.0 * lam[1] * P.W2;
    g.b2 = dz2.colwise().sum();

    Matrix dbn = dz2 * P.W2.transpose();
    if (pass.mask.size() > 0) dbn = dbn.cwiseProduct(pass.mask);
    g.gamma = dbn.cwiseProduct(pass.xhat).colwise().sum();
    g.beta = dbn.colwise().sum();

    const Matrix dxhat = (dbn.array().rowwise() * P.gamma.row(0).array()).matrix();
    Matrix da1;
    if (pass.mode == Mode::Train && n > 0.0) {
        const Matrix sum_dxhat = dxhat.colwise().sum();
        const Matrix sum_dxhat_xhat = dxhat.cwiseProduct(pass.xhat).colwise().sum();
        Matrix centered = n * dxhat;
        centered.rowwise() -= sum_dxhat.row(0);
        centered -= (pass.xhat.array().rowwise() * sum_dxhat_xhat.row(0).array()).matrix();
        da1 = ((centered.array().rowwise() * pass.inv_std.row(0).array()) / n).matrix();
    } else {
        da1 = (dxhat.array().rowwise() * pass.inv_std.row(0).array()).matrix();
    }
    const Matrix dz1 = da1.cwiseProduct((1.0 - pass.a1.array().square()).matrix());
    g.W1 = pass.input.transpose() * dz1 + 2.0 * lam[0] * P.W1;
    g.b1 = dz1.colwise().sum();
    return g;
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

using nlohmann::json;

json tensor_to_json(const Matrix& m) {
    json data = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix tensor_from_json(const json& j, const std::string& name) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw InputError("checkpoint tensor " + name + " has wrong element count");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)].get<double>();
    return m;
}

}  // namespace

std::string model_to_json(const MlpModel& model) {
    const auto& c = model.config;
    json j;
    j["format"] = "deepsep-mlp";
    j["version"] = 1;
    j["config"] = {{"input_dim", c.input_dim},     {"hidden1", c.hidden1},
                   {"hidden2", c.hidden2},         {"num_classes", c.num_classes},
                   {"dropout", c.dropout},         {"bn_momentum", c.bn_momentum},
                   {"bn_eps", c.bn_eps},           {"tikhonov", c.tikhonov}};
    json tensors;
    const auto ts = model.params.tensors();
    for (std::size_t k = 0; k < MlpParams::kTensorCount; ++k) tensors[MlpParams::kNames[k]] = tensor_to_json(*ts[k]);
    tensors["running_mean"] = tensor_to_json(model.running_mean);
    tensors["running_var"] = tensor_to_json(model.running_var);
    j["tensors"] = std::move(tensors);
    return j.dump();
}

MlpModel model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InputError(std::string("checkpoint: ") + e.what());
    }
    try {
        if (j.at("format") != "deepsep-mlp" || j.at("version") != 1)
            throw InputError("checkpoint: unsupported format or version");
        MlpModel m;
        const auto& c = j.at("config");
        m.config.input_dim = c.at("input_dim");
        m.config.hidden1 = c.at("hidden1");
        m.config.hidden2 = c.at("hidden2");
        m.config.num_classes = c.at("num_classes");
        m.config.dropout = c.at("dropout");
        m.config.bn_momentum = c.at("bn_momentum");
        m.config.bn_eps = c.at("bn_eps");
        m.config.tikhonov = c.at("tikhonov").get<std::array<double, 3>>();
        m.config.validate();
        const auto& t = j.at("tensors");
        auto ts = m.params.tensors();
        for (std::size_t k = 0; k < MlpParams::kTensorCount; ++k)
            *ts[k] = tensor_from_json(t.at(MlpParams::kNames[k]), MlpParams::kNames[k]);
        m.running_mean = tensor_from_json(t.at("running_mean"), "running_mean");
        m.running_var = tensor_from_json(t.at("running_var"), "running_var");
        const auto& P = m.params;
        const auto& cf = m.config;
        if (P.W1.rows() != cf.input_dim || P.W1.cols() != cf.hidden1 || P.W2.rows() != cf.hidden1 ||
            P.W2.cols() != cf.hidden2 || P.W3.rows() != cf.hidden2 || P.W3.cols() != cf.num_classes ||
            P.b1.cols() != cf.hidden1 || P.gamma.cols() != cf.hidden1 || P.beta.cols() != cf.hidden1 ||
            P.b2.cols() != cf.hidden2 || P.b3.cols() != cf.num_classes ||
            m.running_mean.cols() != cf.hidden1 || m.running_var.cols() != cf.hidden1)
            throw InputError("checkpoint: tensor shapes disagree with config");
        return m;
    } catch (const json::exception& e) {
        throw InputError(std::string("checkpoint: ") + e.what());
    }
}

void save_model(const std::filesystem::path& path, const MlpModel& model) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << model_to_json(model) << '\n';
}

MlpModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

}  // namespace deepsep
