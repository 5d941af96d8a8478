#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "ntkw/dataset.hpp"
#include "ntkw/network.hpp"
#include "ntkw/ntk.hpp"

namespace ntkw {

// Linearized model around a frozen anchor W^(1):
//   f(x) = f_anchor(x) + sum_l <grad(W_l) f_anchor(x), delta_l>,
// with every delta_l constrained to the Frobenius ball of radius R/sqrt(m).
struct NtrfModel {
    std::shared_ptr<const NetParams> anchor;
    std::vector<Eigen::MatrixXd> delta;  // same shapes as anchor->layers
    double radius = 0.0;                 // R

    void validate() const;  // ball constraint + shape match
};

// Gradient features of the anchor on a fixed dataset, laid out column-wise
// for batched evaluation: hidden[l] is (len x n) holding h_l per example,
// back[l-1] holds b_l per example. Valid as long as the anchor is frozen.
struct FeatureCache {
    std::vector<Eigen::MatrixXd> hidden;  // l = 0..L-1
    std::vector<Eigen::MatrixXd> back;    // l = 1..L-1
    Eigen::VectorXd anchor_output;        // f_anchor(x_i)
    Eigen::Index width = 0;
    int depth = 0;
};

FeatureCache build_feature_cache(const NetParams& anchor, const Eigen::MatrixXd& inputs);

// f_anchor(x) + <grad f_anchor(x), delta> via the rank-one factors.
double ntrf_eval(const NtrfModel& model, const Eigen::VectorXd& x);

// Batched NTRF outputs on all cached examples.
Eigen::VectorXd ntrf_eval_cached(const std::vector<Eigen::MatrixXd>& delta,
                                 const FeatureCache& cache);

// Per-layer projection onto the Frobenius ball of radius R/sqrt(m).
void project_ball(std::vector<Eigen::MatrixXd>& delta, double radius, Eigen::Index m);

struct NtrfFitOptions {
    int epochs = 50;
    int batch = 32;
    double lr = 0.0;  // 0 -> default 0.5 * R / (m sqrt(n)), halved on epoch-loss increase
    std::uint64_t seed = 0;
};

struct NtrfFitResult {
    NtrfModel model;
    std::vector<double> epoch_losses;  // mean cross-entropy per epoch
};

// Projected mini-batch SGD on delta for (1/n) sum l(y_i f(x_i)). The anchor
// features are computed once up front; each step ends with a ball projection.
NtrfFitResult fit_projected_sgd(std::shared_ptr<const NetParams> anchor,
                                const LabeledDataset& data, double radius,
                                const NtrfFitOptions& opts);

struct InterpolantResult {
    NtrfModel model;
    Eigen::VectorXd coeffs;        // representer coefficients c
    double delta_norm = 0.0;       // ||delta||_F over all layers
    double kernel_predicted_norm;  // sqrt(yhat^T Theta^-1 yhat / m)
    double target_scale = 0.0;     // Bbar
    double jitter = 0.0;
};

// Least-norm delta with <grad f_anchor(x_i), delta> = Bbar * y_i for all i,
// via the representer form c = G^-1 yhat / sqrt(m) on the empirical Gram.
// Bbar = B + B' with B = log(1/(exp(n^-1/2) - 1)) and B' = max_i |f_anchor(x_i)|.
InterpolantResult min_distance_interpolant(std::shared_ptr<const NetParams> anchor,
                                           const LabeledDataset& data,
                                           const KernelStack& theta);

// NTRF checkpoint ("ntkw-ntrf v1").
void save_ntrf(const NtrfModel& model, const std::string& path);
std::vector<Eigen::MatrixXd> load_ntrf_delta(const std::string& path, double& radius_out);

}  // namespace ntkw
