#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ntkw {

enum class Verdict { Pass, TrendPass, Fail };

std::string to_string(Verdict v);

// Outcome of one empirical lemma check. On Fail, `failure_detail` names the
// violating seed and values and `repro_command` gives the exact CLI line.
struct LemmaCheckResult {
    std::string lemma_id;
    int trials = 0;
    std::map<std::string, double> statistics;
    Verdict verdict = Verdict::Fail;
    std::string config;
    std::string failure_detail;
    std::string repro_command;
};

struct VerifyConfig {
    Eigen::Index m = 1024;
    int depth = 3;
    Eigen::Index n = 10;
    int seeds = 5;
    std::uint64_t base_seed = 0;
};

// Near-linearity of f in W around init: for unit-Frobenius directions U and
// shrinking t, e(t) = |f(W + tU) - f(W) - <grad f(W), tU>| must have e(t)/t
// decreasing in t (the residual is superlinear).
LemmaCheckResult check_linearization(const VerifyConfig& cfg,
                                     const std::vector<double>& t_grid = {});

// Almost-convexity of the per-example loss in the radius-omega ball:
// violations of the first-order convexity inequality stay below
// 10 * omega^{4/3} L^2 sqrt(m log m) and shrink with omega.
LemmaCheckResult check_almost_convexity(const VerifyConfig& cfg, double omega = 0.0,
                                        int pairs = 50);

// Hidden-layer norms stay in [1/2, 3/2] throughout the perturbation ball
// (and in [3/4, 5/4] at init itself).
LemmaCheckResult check_hidden_norms(const VerifyConfig& cfg, double omega = 0.0);

// ||grad(W_l) f||_F / sqrt(m) <= 4 over layers and examples; the loss
// gradient never exceeds the network gradient.
LemmaCheckResult check_gradient_norms(const VerifyConfig& cfg);

// Fraction of flipped ReLU activation bits under radius-omega perturbations
// scales like omega^{2/3}: fitted log-log exponent in [0.4, 0.9].
LemmaCheckResult check_pattern_stability(const VerifyConfig& cfg,
                                         const std::vector<double>& omega_grid = {});

// Gram-vs-NTK convergence trend wrapped as a lemma check (widths doubling,
// medians of max|G - Theta| non-increasing).
LemmaCheckResult check_gram_convergence(const VerifyConfig& cfg,
                                        const std::vector<Eigen::Index>& widths = {});

// NDJSON line {"lemma_id":..., "config":..., "statistic":..., "verdict":...}.
std::string to_ndjson(const LemmaCheckResult& result);

}  // namespace ntkw
