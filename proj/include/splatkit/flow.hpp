// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "splatkit/io/raw.hpp"
#include "splatkit/rng.hpp"
#include "splatkit/voxel.hpp"

namespace splatkit {

// Rectified-flow refinement over latent grids. Time runs from 0 (data) to 1
// (noise); the forward corruption is the straight path
// x_t = (1 - t) * x + t * eps, and the velocity target is eps - x. Sampling
// integrates the learned velocity backwards with uniform Euler steps.

inline Eigen::VectorXd time_embedding(double t, int dim) {
    if (dim < 2 || dim % 2 != 0)
        throw ValidationError("time embedding dimension must be even and at least 2");
    Eigen::VectorXd e(dim);
    const int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        const double freq =
            half == 1 ? 1.0 : std::pow(256.0, static_cast<double>(k) / (half - 1));
        e[2 * k] = std::sin(freq * t);
        e[2 * k + 1] = std::cos(freq * t);
    }
    return e;
}

struct FlowNetConfig {
    int hidden = 128;
    int time_embed = 16;
};

// The straight-path velocity (eps - x0) at state x_t equals (x_t - x0) / t,
// a gain that an additive time conditioning cannot express. The network body
// therefore predicts the clean sample and the velocity is derived from it;
// the floor keeps the division defined for the rare draws below the smallest
// sampling time.
inline constexpr double kVelocityTimeFloor = 0.02;

// Small fully-connected residual network with sinusoidal time embedding:
//   h1 = tanh(w1 x + u1 e(t) + b1)
//   h2 = tanh(w2 h1 + b2) + h1
//   clean = w3 h2 + b3
//   v     = (x - clean) / max(t, floor)
// Weights are public so the trainer can run backpropagation over them; treat
// them as read-only elsewhere.
struct FlowModel {
    Eigen::MatrixXd w1, u1, w2, w3;
    Eigen::VectorXd b1, b2, b3;

    FlowModel() = default;
    FlowModel(int input_dim, const FlowNetConfig& cfg, Rng& rng) {
        if (input_dim < 1) throw ValidationError("flow model input dimension must be positive");
        if (cfg.hidden < 1) throw ValidationError("flow model hidden width must be positive");
        const int h = cfg.hidden, e = cfg.time_embed, f = input_dim;
        time_embedding(0.0, e);  // validates the embedding dimension
        const auto fill = [&rng](Eigen::MatrixXd& m, int rows, int cols, double stddev) {
            m.resize(rows, cols);
            for (int c = 0; c < cols; ++c)
                for (int r = 0; r < rows; ++r) m(r, c) = stddev * rng.normal();
        };
        fill(w1, h, f, 1.0 / std::sqrt(static_cast<double>(f)));
        fill(u1, h, e, 1.0 / std::sqrt(static_cast<double>(e)));
        fill(w2, h, h, 1.0 / std::sqrt(static_cast<double>(h)));
        fill(w3, f, h, 0.1 / std::sqrt(static_cast<double>(h)));
        b1 = Eigen::VectorXd::Zero(h);
        b2 = Eigen::VectorXd::Zero(h);
        b3 = Eigen::VectorXd::Zero(f);
    }

    int input_dim() const { return static_cast<int>(w1.cols()); }
    int hidden_dim() const { return static_cast<int>(w1.rows()); }
    int embed_dim() const { return static_cast<int>(u1.cols()); }

    // Network body: estimate of the clean sample the corrupted state came from.
    Eigen::VectorXd clean_estimate(const Eigen::VectorXd& x, double t) const {
        if (x.size() != w1.cols()) throw ValidationError("velocity input has the wrong dimension");
        const Eigen::VectorXd e = time_embedding(t, embed_dim());
        const Eigen::VectorXd h1 = (w1 * x + u1 * e + b1).array().tanh();
        const Eigen::VectorXd h2 = (w2 * h1 + b2).array().tanh().matrix() + h1;
        return w3 * h2 + b3;
    }

    Eigen::VectorXd velocity(const Eigen::VectorXd& x, double t) const {
        return (x - clean_estimate(x, t)) / std::max(t, kVelocityTimeFloor);
    }

    std::vector<double> parameters() const {
        std::vector<double> out;
        const auto append = [&out](const auto& block) {
            out.insert(out.end(), block.data(), block.data() + block.size());
        };
        append(w1);
        append(u1);
        append(b1);
        append(w2);
        append(b2);
        append(w3);
        append(b3);
        return out;
    }

    void set_parameters(const std::vector<double>& flat) {
        std::size_t pos = 0;
        const auto take = [&flat, &pos](auto& block) {
            if (pos + static_cast<std::size_t>(block.size()) > flat.size())
                throw ValidationError("parameter vector is too short for this architecture");
            std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                      flat.begin() + static_cast<std::ptrdiff_t>(pos + block.size()),
                      block.data());
            pos += static_cast<std::size_t>(block.size());
        };
        take(w1);
        take(u1);
        take(b1);
        take(w2);
        take(b2);
        take(w3);
        take(b3);
        if (pos != flat.size())
            throw ValidationError("parameter vector is too long for this architecture");
    }
};

struct FlowTrainConfig {
    int steps = 2000;
    double lr = 3e-3;
    std::uint64_t seed = 0;
    int batch = 16;
    FlowNetConfig net;
};

struct FlowTrainResult {
    FlowModel model;
    std::vector<double> loss_history;  // one mean-squared error per step
};

namespace detail {

// One Adam moment pair per weight block.
template <typename Block>
struct AdamBlock {
    Block m, v;
    void init(const Block& like) {
        m = Block::Zero(like.rows(), like.cols());
        v = Block::Zero(like.rows(), like.cols());
    }
    void step(Block& w, const Block& g, double lr, double bias1, double bias2) {
        constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
        m = kBeta1 * m + (1.0 - kBeta1) * g;
        v = kBeta2 * v + (1.0 - kBeta2) * g.array().square().matrix();
        w.array() -= lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + kEps);
    }
};

inline Eigen::VectorXd latent_as_vector(const LatentGrid& g) {
    return Eigen::Map<const Eigen::VectorXd>(g.values.data(),
                                             static_cast<Eigen::Index>(g.values.size()));
}

inline LatentGrid vector_as_latent(const Eigen::VectorXd& x, const LatentGrid& like) {
    LatentGrid out(like.resolution, like.channels);
    std::copy(x.data(), x.data() + x.size(), out.values.begin());
    return out;
}

inline void check_flow_dataset(const std::vector<LatentGrid>& dataset) {
    if (dataset.empty()) throw ValidationError("flow training needs at least one latent sample");
    dataset.front().validate();
    for (const LatentGrid& g : dataset) {
        if (g.resolution != dataset.front().resolution || g.channels != dataset.front().channels)
            throw ValidationError("flow training samples must share one shape");
        g.validate();
    }
}

// Draws one corrupted sample; consumes idx, t, then input_dim normals, so the
// stream position is independent of the data content.
inline void draw_flow_sample(const std::vector<LatentGrid>& dataset, Rng& rng,
                             Eigen::Ref<Eigen::VectorXd> x, Eigen::Ref<Eigen::VectorXd> y,
                             double& t) {
    const std::size_t idx = rng.uniform_index(dataset.size());
    t = rng.uniform();
    const Eigen::VectorXd data = latent_as_vector(dataset[idx]);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double eps = rng.normal();
        x[i] = (1.0 - t) * data[i] + t * eps;
        y[i] = eps - data[i];
    }
}

}  // namespace detail

// Mean-squared velocity-regression error over one sampled batch; the same
// objective the trainer minimizes.
inline double flow_batch_loss(const FlowModel& model, const std::vector<LatentGrid>& dataset,
                              int batch, Rng& rng) {
    detail::check_flow_dataset(dataset);
    if (batch < 1) throw ValidationError("batch size must be positive");
    const int f = model.input_dim();
    double total = 0.0;
    Eigen::VectorXd x(f), y(f);
    for (int b = 0; b < batch; ++b) {
        double t = 0.0;
        detail::draw_flow_sample(dataset, rng, x, y, t);
        total += (model.velocity(x, t) - y).squaredNorm();
    }
    return total / (static_cast<double>(batch) * f);
}

inline FlowTrainResult train_toy_flow(const std::vector<LatentGrid>& dataset,
                                      const FlowTrainConfig& cfg) {
    detail::check_flow_dataset(dataset);
    if (cfg.steps < 0) throw ValidationError("training step count must not be negative");
    if (cfg.batch < 1) throw ValidationError("batch size must be positive");
    if (!(cfg.lr > 0.0)) throw ValidationError("learning rate must be positive");

    const int f = static_cast<int>(dataset.front().values.size());
    const Rng base(cfg.seed);
    Rng init_rng = base.fork("init");
    Rng train_rng = base.fork("train");

    FlowTrainResult result;
    result.model = FlowModel(f, cfg.net, init_rng);
    FlowModel& net = result.model;
    const int e = net.embed_dim(), batch = cfg.batch;

    detail::AdamBlock<Eigen::MatrixXd> aw1, au1, aw2, aw3;
    detail::AdamBlock<Eigen::VectorXd> ab1, ab2, ab3;
    aw1.init(net.w1);
    au1.init(net.u1);
    ab1.init(net.b1);
    aw2.init(net.w2);
    ab2.init(net.b2);
    aw3.init(net.w3);
    ab3.init(net.b3);

    Eigen::MatrixXd xb(f, batch), yb(f, batch), emb(e, batch);
    Eigen::VectorXd invt(batch);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(batch);
    for (int step = 0; step < cfg.steps; ++step) {
        for (int b = 0; b < batch; ++b) {
            double t = 0.0;
            detail::draw_flow_sample(dataset, train_rng, xb.col(b), yb.col(b), t);
            emb.col(b) = time_embedding(t, e);
            invt[b] = 1.0 / std::max(t, kVelocityTimeFloor);
        }

        const Eigen::MatrixXd h1 =
            ((net.w1 * xb + net.u1 * emb).colwise() + net.b1).array().tanh();
        const Eigen::MatrixXd t2 = ((net.w2 * h1).colwise() + net.b2).array().tanh();
        const Eigen::MatrixXd h2 = t2 + h1;
        const Eigen::MatrixXd clean = (net.w3 * h2).colwise() + net.b3;
        const Eigen::MatrixXd resid = (xb - clean) * invt.asDiagonal() - yb;
        const double loss = resid.squaredNorm() / (static_cast<double>(batch) * f);
        result.loss_history.push_back(loss);
        if (!std::isfinite(loss) || loss > 1e8)
            throw StageError("regen", "flow training diverged at step " + std::to_string(step));

        // The velocity is (x - clean) / t', so the gradient into the network
        // body picks up a -1/t' factor per sample.
        const Eigen::MatrixXd dv =
            (-2.0 / (static_cast<double>(batch) * f)) * (resid * invt.asDiagonal());
        const Eigen::MatrixXd gw3 = dv * h2.transpose();
        const Eigen::VectorXd gb3 = dv * ones;
        const Eigen::MatrixXd dh2 = net.w3.transpose() * dv;
        const Eigen::MatrixXd dz2 = dh2.array() * (1.0 - t2.array().square());
        const Eigen::MatrixXd dh1 = net.w2.transpose() * dz2 + dh2;
        const Eigen::MatrixXd gw2 = dz2 * h1.transpose();
        const Eigen::VectorXd gb2 = dz2 * ones;
        const Eigen::MatrixXd dz1 = dh1.array() * (1.0 - h1.array().square());
        const Eigen::MatrixXd gw1 = dz1 * xb.transpose();
        const Eigen::MatrixXd gu1 = dz1 * emb.transpose();
        const Eigen::VectorXd gb1 = dz1 * ones;

        // Cosine decay to 1% of the initial rate; the tail drives the
        // stochastic-gradient noise floor down so late training refines
        // rather than jitters.
        const double progress = static_cast<double>(step) / cfg.steps;
        const double lr = cfg.lr * (0.01 + 0.99 * 0.5 * (1.0 + std::cos(kPi * progress)));
        const double bias1 = 1.0 - std::pow(0.9, step + 1);
        const double bias2 = 1.0 - std::pow(0.999, step + 1);
        aw1.step(net.w1, gw1, lr, bias1, bias2);
        au1.step(net.u1, gu1, lr, bias1, bias2);
        aw2.step(net.w2, gw2, lr, bias1, bias2);
        aw3.step(net.w3, gw3, lr, bias1, bias2);
        ab1.step(net.b1, gb1, lr, bias1, bias2);
        ab2.step(net.b2, gb2, lr, bias1, bias2);
        ab3.step(net.b3, gb3, lr, bias1, bias2);
    }
    return result;
}

// Start from the prior corrupted to time t and integrate the learned
// velocity back to time 0 with uniform Euler steps of size 1/n_steps. The
// number of active steps is the integer part of n_steps * t, so t = 0 runs no
// steps and returns the prior untouched.
inline LatentGrid inject_prior_sample(const FlowModel& model, const LatentGrid& prior, double t,
                                      int n_steps, Rng& rng) {
    prior.validate();
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("injection timestep must lie in [0, 1]");
    if (n_steps < 1) throw ValidationError("sampling needs at least one step");
    if (static_cast<int>(prior.values.size()) != model.input_dim())
        throw ValidationError("prior shape does not match the flow model");

    Eigen::VectorXd x = detail::latent_as_vector(prior);
    if (t > 0.0)
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = (1.0 - t) * x[i] + t * rng.normal();

    const int active = static_cast<int>(n_steps * t);
    const double h = 1.0 / n_steps;
    for (int i = active - 1; i >= 0; --i) x -= h * model.velocity(x, (i + 1) * h);
    return detail::vector_as_latent(x, prior);
}

inline constexpr double kDefaultInjectionTime = 0.3;  // midpoint of the useful [0.2, 0.4] band
inline constexpr int kDefaultSampleSteps = 50;

inline nlohmann::json flow_architecture_json(const FlowModel& model) {
    return {{"input_dim", model.input_dim()},
            {"hidden", model.hidden_dim()},
            {"time_embed", model.embed_dim()},
            {"parameter_count", model.parameters().size()}};
}

inline void save_flow_model(const FlowModel& model, const std::string& data_path,
                            const std::string& json_path) {
    const std::vector<double> flat = model.parameters();
    nlohmann::json meta = flow_architecture_json(model);
    meta["dtype"] = "float32";
    meta["shape"] = {static_cast<int>(flat.size())};
    meta["layout"] = "row-major";
    std::vector<float> f(flat.begin(), flat.end());
    detail::write_blob(data_path, f);
    std::ofstream out(json_path);
    if (!out) throw ValidationError("cannot open for writing: " + json_path);
    out << meta.dump(2) << "\n";
}

inline FlowModel load_flow_model(const std::string& data_path, const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw ValidationError("cannot open: " + json_path);
    const nlohmann::json meta = nlohmann::json::parse(in);
    FlowNetConfig cfg;
    cfg.hidden = meta.at("hidden").get<int>();
    cfg.time_embed = meta.at("time_embed").get<int>();
    Rng scratch(0);
    FlowModel model(meta.at("input_dim").get<int>(), cfg, scratch);
    const std::size_t count = meta.at("parameter_count").get<std::size_t>();
    const auto f = detail::read_blob<float>(data_path, count);
    model.set_parameters(std::vector<double>(f.begin(), f.end()));
    return model;
}

}  // namespace splatkit
