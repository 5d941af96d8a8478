#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ntkw/network.hpp"

namespace ntkw {

// State of the depth-L NTK recursion on n inputs: covariance matrices
// Sigma^(1..L), accumulated tangent matrices ThetaTilde^(1..L), and the
// final kernel Theta = (ThetaTilde^(L) + Sigma^(L)) / 2.
struct KernelStack {
    std::vector<Eigen::MatrixXd> sigma;
    std::vector<Eigen::MatrixXd> theta_tilde;
    Eigen::MatrixXd theta;
    int depth = 0;
    Eigen::Index n = 0;
};

// Finite-width empirical kernel G_ij = m^{-1} <grad f(x_i), grad f(x_j)> at
// a fixed (freshly initialized) parameter set.
struct GramMatrix {
    Eigen::MatrixXd values;
    Eigen::Index width = 0;
    std::uint64_t seed = 0;
};

struct ReluPairExpectations {
    double kappa1;  // 2 E[relu(u) relu(v)]
    double kappa0;  // 2 E[relu'(u) relu'(v)]
};

// Closed-form ReLU Gaussian pair expectations for (u,v) ~ N(0, [[sii,sij],[sij,sjj]]),
// with the factor 2 of the variance-2/m initialization scaling:
//   kappa1 = sqrt(sii*sjj)/pi * (lam*(pi - acos(lam)) + sqrt(1-lam^2))
//   kappa0 = (pi - acos(lam)) / pi,     lam = sij / sqrt(sii*sjj) clamped to [-1,1].
ReluPairExpectations relu_pair_expectations(double sii, double sjj, double sij);

// Runs the kernel recursion on unit-norm input rows. Warns on stderr about
// near-parallel input pairs (|corr| > 1 - 1e-9).
KernelStack kernel_stack(const Eigen::MatrixXd& inputs, int depth);

// Blockwise empirical Gram matrix; gradients are never materialized, memory
// stays at O(block * L * m) floats.
GramMatrix empirical_gram(const NetParams& params, const Eigen::MatrixXd& inputs,
                          Eigen::Index block = 64);

struct GramConvergenceRow {
    Eigen::Index width;
    double median_dev;
    double max_dev;
};

struct GramConvergenceReport {
    std::vector<GramConvergenceRow> rows;
    bool pass = false;  // per-width medians non-increasing across the sweep
};

// max_ij |G - Theta| per (width, seed), summarized per width.
GramConvergenceReport gram_convergence_report(const Eigen::MatrixXd& inputs, int depth,
                                              const std::vector<Eigen::Index>& widths,
                                              int seeds, std::uint64_t base_seed = 0);

struct PsdSolveResult {
    Eigen::VectorXd solution;
    double jitter = 0.0;  // diagonal shift actually applied (0 when clean)
};

// Cholesky solve with escalating jitter: eps * I starting at
// 1e-10 * trace/n, escalating x10 up to 1e-4 * trace/n. Throws NumericError
// naming the highest-correlation input pair once the ceiling is exceeded.
PsdSolveResult psd_solve(const Eigen::MatrixXd& theta, const Eigen::VectorXd& rhs);

// Kernel matrix file ("ntkw-kernel v1"); sigma/theta_tilde sections optional.
void save_kernel(const KernelStack& stack, const std::string& path,
                 bool with_sections = false);
KernelStack load_kernel(const std::string& path);

}  // namespace ntkw
