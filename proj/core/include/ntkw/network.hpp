#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace ntkw {

// Weights of an L-layer ReLU network of width m:
//   W1: m x d, W2..W_{L-1}: m x m, W_L: 1 x m,
// evaluated as f(x) = sqrt(m) * W_L relu(W_{L-1} ... relu(W1 x)).
struct NetParams {
    std::vector<Eigen::MatrixXd> layers;
    Eigen::Index width = 0;   // m
    Eigen::Index dim = 0;     // d
    int depth = 0;            // L >= 2
    std::uint64_t init_seed = 0;

    void validate_shapes() const;
};

// Everything the backward pass knows about one input:
//   hidden[l] = h_l for l = 0..L-1 (h_0 = x),
//   patterns[l-1] = ReLU activation bits of layer l, l = 1..L-1,
//   back[l-1] = b_l with grad(W_l) f = sqrt(m) * b_l h_{l-1}^T, l = 1..L-1
// (the last layer's gradient is sqrt(m) * h_{L-1}^T, no back vector needed).
struct ActivationTrace {
    std::vector<Eigen::VectorXd> hidden;
    std::vector<std::vector<std::uint8_t>> patterns;
    std::vector<Eigen::VectorXd> back;
    double output = 0.0;
};

// He-style initialization: hidden layers N(0, 2/m), output layer N(0, 1/m).
// Each layer draws from its own seed sub-stream so entries are independent
// of construction order.
NetParams init_params(Eigen::Index m, Eigen::Index d, int depth, std::uint64_t seed);

// Forward pass with the full trace (hidden vectors, activation patterns and
// backprop vectors). sigma'(0) = 0: a pattern bit is set only for strictly
// positive pre-activation. Warns on stderr when ||x|| strays from 1 by more
// than 1e-9; throws NumericError on non-finite output.
ActivationTrace forward(const NetParams& params, const Eigen::VectorXd& x);

// Forward pass without the backward vectors (cheaper; used by norm checks).
ActivationTrace forward_no_backward(const NetParams& params, const Eigen::VectorXd& x);

// Materializes grad(W_l) f as dense matrices from a trace. Tests only;
// guarded to m <= 128.
std::vector<Eigen::MatrixXd> materialize_gradient(const NetParams& params,
                                                  const ActivationTrace& trace);

// <grad f(x), grad f(x')> across all layers via the rank-one factorization:
// m * sum_l <b_l, b'_l><h_{l-1}, h'_{l-1}> + m * <h_{L-1}, h'_{L-1}>.
double gradient_dot(const ActivationTrace& a, const ActivationTrace& b, Eigen::Index m);

// ||grad(W_l) f||_F per layer, from the factors.
std::vector<double> gradient_layer_norms(const ActivationTrace& trace, Eigen::Index m);

// Cross-entropy loss l(z) = log(1 + exp(-z)) and its derivative, computed in
// a form that stays finite for |z| <= 700.
double cross_entropy(double z);
double cross_entropy_derivative(double z);  // -1 / (1 + exp(z)), in (-1, 0)

struct LossGrad {
    double loss = 0.0;
    double scale = 0.0;  // l'(y f) * y; loss gradient = scale * network gradient
    ActivationTrace trace;
};

// Loss l(y * f(x)) plus the factored loss gradient.
LossGrad loss_and_grad(const NetParams& params, const Eigen::VectorXd& x, int y);

// Parameter checkpoint ("ntkw-params v1").
void save_params(const NetParams& params, const std::string& path);
NetParams load_params(const std::string& path);

}  // namespace ntkw
