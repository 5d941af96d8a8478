#include "ntkw/network.hpp"

#include <cmath>
#include <iostream>
#include <random>

#include "ntkw/errors.hpp"
#include "ntkw/io.hpp"
#include "ntkw/rng.hpp"

namespace ntkw {

void NetParams::validate_shapes() const {
    if (depth < 2) throw ArgumentError("depth must be >= 2");
    if (Eigen::Index(layers.size()) != depth) throw ArgumentError("layer count != depth");
    if (layers[0].rows() != width || layers[0].cols() != dim)
        throw ArgumentError("W1 must be m x d");
    for (int l = 1; l + 1 < depth; ++l)
        if (layers[std::size_t(l)].rows() != width || layers[std::size_t(l)].cols() != width)
            throw ArgumentError("hidden layer " + std::to_string(l + 1) + " must be m x m");
    if (layers.back().rows() != 1 || layers.back().cols() != width)
        throw ArgumentError("W_L must be 1 x m");
}

NetParams init_params(Eigen::Index m, Eigen::Index d, int depth, std::uint64_t seed) {
    if (m < 1 || d < 1) throw ArgumentError("width and dimension must be positive");
    if (depth < 2) throw ArgumentError("depth must be >= 2");

    NetParams params;
    params.width = m;
    params.dim = d;
    params.depth = depth;
    params.init_seed = seed;
    params.layers.reserve(std::size_t(depth));

    double hidden_sd = std::sqrt(2.0 / double(m));
    double out_sd = std::sqrt(1.0 / double(m));
    for (int l = 0; l < depth; ++l) {
        // Per-layer sub-stream: entries of layer l do not depend on the
        // sampling order of other layers.
        auto rng = make_rng(seed, "init-layer-" + std::to_string(l));
        std::normal_distribution<double> gauss(0.0, l + 1 == depth ? out_sd : hidden_sd);
        Eigen::Index rows = l + 1 == depth ? 1 : m;
        Eigen::Index cols = l == 0 ? d : m;
        Eigen::MatrixXd w(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = gauss(rng);
        params.layers.push_back(std::move(w));
    }
    return params;
}

namespace {

ActivationTrace forward_impl(const NetParams& params, const Eigen::VectorXd& x,
                             bool with_backward) {
    if (x.size() != params.dim) throw ArgumentError("input dimension mismatch");
    double norm = x.norm();
    if (std::abs(norm - 1.0) > 1e-9)
        std::cerr << "warning: input norm " << norm << " deviates from 1\n";

    const int L = params.depth;
    ActivationTrace trace;
    trace.hidden.reserve(std::size_t(L));
    trace.patterns.reserve(std::size_t(L - 1));
    trace.hidden.push_back(x);

    for (int l = 1; l < L; ++l) {
        Eigen::VectorXd pre = params.layers[std::size_t(l - 1)] * trace.hidden.back();
        std::vector<std::uint8_t> bits(std::size_t(pre.size()));
        for (Eigen::Index j = 0; j < pre.size(); ++j) {
            bool on = pre(j) > 0.0;
            bits[std::size_t(j)] = on;
            if (!on) pre(j) = 0.0;
        }
        trace.patterns.push_back(std::move(bits));
        trace.hidden.push_back(std::move(pre));
    }

    double sqrt_m = std::sqrt(double(params.width));
    trace.output = sqrt_m * (params.layers.back() * trace.hidden.back())(0);
    if (!std::isfinite(trace.output)) throw NumericError("non-finite network output");

    if (with_backward) {
        // b_l = D_l (W_{l+1}^T b_{l+1}), seeded with b_{L-1} = D_{L-1} W_L^T.
        trace.back.assign(std::size_t(L - 1), Eigen::VectorXd());
        Eigen::VectorXd v = params.layers.back().transpose();
        for (int l = L - 1; l >= 1; --l) {
            const auto& bits = trace.patterns[std::size_t(l - 1)];
            for (Eigen::Index j = 0; j < v.size(); ++j)
                if (!bits[std::size_t(j)]) v(j) = 0.0;
            trace.back[std::size_t(l - 1)] = v;
            if (l > 1) v = params.layers[std::size_t(l - 1)].transpose() * v;
        }
    }
    return trace;
}

}  // namespace

ActivationTrace forward(const NetParams& params, const Eigen::VectorXd& x) {
    return forward_impl(params, x, true);
}

ActivationTrace forward_no_backward(const NetParams& params, const Eigen::VectorXd& x) {
    return forward_impl(params, x, false);
}

std::vector<Eigen::MatrixXd> materialize_gradient(const NetParams& params,
                                                  const ActivationTrace& trace) {
    if (params.width > 128)
        throw ArgumentError("materialize_gradient is guarded to m <= 128");
    double sqrt_m = std::sqrt(double(params.width));
    std::vector<Eigen::MatrixXd> grads;
    grads.reserve(std::size_t(params.depth));
    for (int l = 0; l + 1 < params.depth; ++l)
        grads.push_back(sqrt_m * trace.back[std::size_t(l)] *
                        trace.hidden[std::size_t(l)].transpose());
    grads.push_back(sqrt_m * trace.hidden.back().transpose().eval());
    return grads;
}

double gradient_dot(const ActivationTrace& a, const ActivationTrace& b, Eigen::Index m) {
    double acc = a.hidden.back().dot(b.hidden.back());
    for (std::size_t l = 0; l < a.back.size(); ++l)
        acc += a.back[l].dot(b.back[l]) * a.hidden[l].dot(b.hidden[l]);
    return double(m) * acc;
}

std::vector<double> gradient_layer_norms(const ActivationTrace& trace, Eigen::Index m) {
    double sqrt_m = std::sqrt(double(m));
    std::vector<double> norms;
    norms.reserve(trace.back.size() + 1);
    for (std::size_t l = 0; l < trace.back.size(); ++l)
        norms.push_back(sqrt_m * trace.back[l].norm() * trace.hidden[l].norm());
    norms.push_back(sqrt_m * trace.hidden.back().norm());
    return norms;
}

double cross_entropy(double z) {
    // log(1 + exp(-z)) without overflow on either tail
    return z >= 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double cross_entropy_derivative(double z) {
    return z >= 0.0 ? -std::exp(-z) / (1.0 + std::exp(-z)) : -1.0 / (1.0 + std::exp(z));
}

LossGrad loss_and_grad(const NetParams& params, const Eigen::VectorXd& x, int y) {
    LossGrad lg;
    lg.trace = forward(params, x);
    double z = double(y) * lg.trace.output;
    lg.loss = cross_entropy(z);
    lg.scale = cross_entropy_derivative(z) * double(y);
    return lg;
}

void save_params(const NetParams& params, const std::string& path) {
    auto out = io::open_out(path);
    io::write_header(out, "params");
    io::write_u64(out, std::uint64_t(params.depth));
    io::write_u64(out, std::uint64_t(params.width));
    io::write_u64(out, std::uint64_t(params.dim));
    io::write_u64(out, params.init_seed);
    for (const auto& w : params.layers) io::write_matrix(out, w);
}

NetParams load_params(const std::string& path) {
    auto in = io::open_in(path);
    io::expect_header(in, "params", path);
    NetParams params;
    params.depth = int(io::read_u64(in, path));
    params.width = Eigen::Index(io::read_u64(in, path));
    params.dim = Eigen::Index(io::read_u64(in, path));
    params.init_seed = io::read_u64(in, path);
    params.layers.resize(std::size_t(params.depth));
    for (int l = 0; l < params.depth; ++l) {
        Eigen::Index rows = l + 1 == params.depth ? 1 : params.width;
        Eigen::Index cols = l == 0 ? params.dim : params.width;
        io::read_matrix(in, params.layers[std::size_t(l)], rows, cols, path);
    }
    params.validate_shapes();
    return params;
}

}  // namespace ntkw
