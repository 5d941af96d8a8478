#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ntkw/dataset.hpp"
#include "ntkw/ntk.hpp"
#include "ntkw/ntrf.hpp"

namespace ntkw {

enum class BoundKind { NtrfTheorem, KernelCorollary };

struct BoundHyper {
    Eigen::Index n = 0;
    Eigen::Index m = 0;
    int depth = 0;
    double radius = 0.0;
    double delta = 0.01;
    double flip_ratio = 0.0;
    std::uint64_t seed = 0;
};

// Evaluated bound terms. Deviation terms carry explicit constant 1 and are
// shape-only: the theory hides unspecified absolute constants.
struct BoundReport {
    BoundKind kind;
    double first_term = 0.0;
    double term_LR_sqrt_n = 0.0;      // L R / sqrt(n)
    double term_conf = 0.0;           // sqrt(log(1/delta) / n)
    double kernel_quantity = 0.0;     // sqrt(y^T Theta^-1 y / n) (kernel kind only)
    BoundHyper hyper;
    double jitter_used = 0.0;
    std::string notes;
};

// First term of the linearized-model bound: (4/n) sum l(y_i f(x_i)) at the
// projected-SGD fit (an upper estimate of the infimum over the ball).
BoundReport ntrf_bound_first_term(std::shared_ptr<const NetParams> anchor,
                                  const LabeledDataset& data, double radius,
                                  const NtrfFitOptions& opts);

// Kernel-form bound L * sqrt(y^T Theta^-1 y / n) with targets fixed to the
// labels themselves.
BoundReport kernel_bound(const KernelStack& theta, const std::vector<int>& labels);

struct FlipSweepRow {
    double ratio;
    std::uint64_t seed;
    double quantity;  // sqrt(y^T Theta^-1 y / n)
    double jitter;
};

struct FlipSweepTable {
    std::vector<FlipSweepRow> rows;
    std::vector<double> ratios;
    std::vector<double> medians;  // per ratio, across seeds
};

// Label-flip sweep: kernel computed once, labels reflipped per (ratio, seed),
// only the solve is repeated.
FlipSweepTable flip_sweep(const LabeledDataset& data, int depth,
                          const std::vector<double>& ratios, int seeds,
                          std::uint64_t base_seed = 0);

void save_flip_sweep_csv(const FlipSweepTable& table, const std::string& path);

}  // namespace ntkw
