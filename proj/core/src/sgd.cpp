#include "ntkw/sgd.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "ntkw/errors.hpp"
#include "ntkw/rng.hpp"

namespace ntkw {

SgdResult run_sgd(const NetParams& init, const LabeledDataset& stream, double eta,
                  std::uint64_t seed, Eigen::Index snapshot_every) {
    if (eta < 0.0) throw ArgumentError("eta must be non-negative");
    stream.validate(1e-9);
    const Eigen::Index n = stream.n();
    const int L = init.depth;
    double sqrt_m = std::sqrt(double(init.width));

    if (snapshot_every <= 0) snapshot_every = (n + 19) / 20;

    auto rng = make_rng(seed, "sgd-select");
    Eigen::Index selected =
        std::uniform_int_distribution<Eigen::Index>(1, n)(rng);

    SgdResult result;
    result.record.eta = eta;
    result.record.n = n;
    result.record.seed = seed;
    result.record.selected_index = selected;
    result.record.per_step.reserve(std::size_t(n));

    NetParams params = init;
    for (Eigen::Index step = 1; step <= n; ++step) {
        const Eigen::Index i = step - 1;
        int y = stream.labels[std::size_t(i)];
        LossGrad lg;
        try {
            lg = loss_and_grad(params, stream.inputs.row(i).transpose(), y);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " at SGD step " + std::to_string(step));
        }

        SgdStepRecord rec;
        rec.loss = lg.loss;
        rec.zero_one = double(y) * lg.trace.output <= 0.0 ? 1 : 0;
        rec.layer_dist.reserve(std::size_t(L));
        double grad_sq = 0.0;
        for (double g : gradient_layer_norms(lg.trace, init.width)) grad_sq += g * g;
        rec.grad_norm = std::abs(lg.scale) * std::sqrt(grad_sq);
        for (int l = 0; l < L; ++l)
            rec.layer_dist.push_back(
                (params.layers[std::size_t(l)] - init.layers[std::size_t(l)]).norm());
        result.record.per_step.push_back(std::move(rec));

        // This step's iterate is W^(step); snapshot before updating.
        if (step % snapshot_every == 0 || step == n) {
            result.snapshots.push_back(params);
            result.record.snapshot_steps.push_back(step);
        }
        if (step == selected) result.selected_params = params;

        double scale = eta * lg.scale * sqrt_m;
        for (int l = 0; l + 1 < L; ++l)
            params.layers[std::size_t(l)].noalias() -=
                scale * lg.trace.back[std::size_t(l)] * lg.trace.hidden[std::size_t(l)].transpose();
        params.layers.back().noalias() -= scale * lg.trace.hidden.back().transpose();
    }

    result.final_params = std::move(params);
    return result;
}

CumulativeLossReport cumulative_loss_check(const SgdRunRecord& record,
                                           const std::vector<double>& reference_losses,
                                           int depth, double radius) {
    if (reference_losses.size() != record.per_step.size())
        throw DataError("reference loss count does not match the run length");

    CumulativeLossReport report;
    for (const auto& step : record.per_step) report.sgd_total += step.loss;
    for (double l : reference_losses) report.reference_total += l;
    report.gap = report.sgd_total - report.reference_total;
    auto n = double(record.n);
    report.gap_per_example = report.gap / n;
    report.slack = 3.0 * double(depth) * radius / std::sqrt(2.0 * n) + 0.1;
    report.pass = report.gap_per_example <= report.slack;
    return report;
}

double zero_one_error(const NetParams& params, const LabeledDataset& data) {
    if (data.n() == 0) throw ArgumentError("empty evaluation set");
    Eigen::Index errors = 0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        ActivationTrace t = forward_no_backward(params, data.inputs.row(i).transpose());
        if (double(data.labels[std::size_t(i)]) * t.output <= 0.0) ++errors;
    }
    return double(errors) / double(data.n());
}

double online_to_batch_eval(const std::vector<NetParams>& snapshots,
                            const NetParams& selected, const LabeledDataset& test,
                            BatchEvalMode mode) {
    if (test.n() == 0) throw ArgumentError("empty test set");
    if (mode == BatchEvalMode::Selected) return zero_one_error(selected, test);
    if (snapshots.empty()) throw ArgumentError("no snapshots to average");
    double total = 0.0;
    for (const auto& params : snapshots) total += zero_one_error(params, test);
    return total / double(snapshots.size());
}

void save_run_csv(const SgdRunRecord& record, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    std::size_t layers = record.per_step.empty() ? 0 : record.per_step[0].layer_dist.size();
    out << "step,loss,zero_one";
    for (std::size_t l = 1; l <= layers; ++l) out << ",dist_l" << l;
    out << "\n";
    for (std::size_t s = 0; s < record.per_step.size(); ++s) {
        const auto& step = record.per_step[s];
        out << (s + 1) << "," << step.loss << "," << step.zero_one;
        for (double d : step.layer_dist) out << "," << d;
        out << "\n";
    }
}

}  // namespace ntkw
