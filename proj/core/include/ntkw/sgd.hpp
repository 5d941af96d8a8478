#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ntkw/dataset.hpp"
#include "ntkw/network.hpp"

namespace ntkw {

struct SgdStepRecord {
    double loss = 0.0;                // l(y_i f) at the pre-update iterate
    int zero_one = 0;                 // 1{y_i f <= 0} (ties count as errors)
    std::vector<double> layer_dist;   // ||W_l^(i) - W_l^(1)||_F per layer
    double grad_norm = 0.0;           // ||grad loss||_F over all layers
};

struct SgdRunRecord {
    std::vector<SgdStepRecord> per_step;
    double eta = 0.0;
    Eigen::Index n = 0;
    Eigen::Index selected_index = 0;  // 1-based uniform draw
    std::uint64_t seed = 0;
    std::vector<Eigen::Index> snapshot_steps;  // 1-based step of each snapshot
};

struct SgdResult {
    SgdRunRecord record;
    NetParams final_params;
    NetParams selected_params;                // the uniformly drawn iterate W^(i)
    std::vector<NetParams> snapshots;         // every snapshot_every steps
};

// One-pass online SGD (each example visited exactly once, in stream order).
// Step i records metrics at W^(i) before applying the rank-one update
// W_l <- W_l - eta * l'(y f) y sqrt(m) b_l h_{l-1}^T. The selected iterate
// index is drawn uniformly from [1, n] with the given seed; snapshot_every=0
// picks the default ceil(n/20).
SgdResult run_sgd(const NetParams& init, const LabeledDataset& stream, double eta,
                  std::uint64_t seed, Eigen::Index snapshot_every = 0);

struct CumulativeLossReport {
    double sgd_total = 0.0;        // sum_i L_i(W^(i))
    double reference_total = 0.0;  // sum_i L_i(W*)
    double gap = 0.0;
    double gap_per_example = 0.0;
    double slack = 0.0;
    bool pass = false;
};

// Cumulative-loss comparison against a fixed competitor evaluated on the same
// stream in the same order. Default slack: 3 L R / sqrt(2 n) + 0.1.
CumulativeLossReport cumulative_loss_check(const SgdRunRecord& record,
                                           const std::vector<double>& reference_losses,
                                           int depth, double radius);

enum class BatchEvalMode { Selected, Average };

// 0-1 test error of the drawn iterate, or the mean over snapshots (the
// online-to-batch estimate of the expected error of a uniform iterate draw).
double online_to_batch_eval(const std::vector<NetParams>& snapshots,
                            const NetParams& selected, const LabeledDataset& test,
                            BatchEvalMode mode);

// 0-1 error of one parameter set on a dataset; ties y*f = 0 count as errors.
double zero_one_error(const NetParams& params, const LabeledDataset& data);

// Run record as CSV: step, loss, zero_one, dist_l1..dist_lL.
void save_run_csv(const SgdRunRecord& record, const std::string& path);

}  // namespace ntkw
