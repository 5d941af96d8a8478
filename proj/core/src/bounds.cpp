#include "ntkw/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ntkw/errors.hpp"
#include "ntkw/network.hpp"

namespace ntkw {

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v.size() % 2 == 1 ? v[v.size() / 2]
                             : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

}  // namespace

BoundReport ntrf_bound_first_term(std::shared_ptr<const NetParams> anchor,
                                  const LabeledDataset& data, double radius,
                                  const NtrfFitOptions& opts) {
    NtrfFitResult fit = fit_projected_sgd(anchor, data, radius, opts);

    FeatureCache cache = build_feature_cache(*fit.model.anchor, data.inputs);
    Eigen::VectorXd outputs = ntrf_eval_cached(fit.model.delta, cache);
    double total = 0.0;
    for (Eigen::Index i = 0; i < data.n(); ++i)
        total += cross_entropy(double(data.labels[std::size_t(i)]) * outputs(i));

    BoundReport report;
    report.kind = BoundKind::NtrfTheorem;
    report.first_term = 4.0 * total / double(data.n());
    report.hyper.n = data.n();
    report.hyper.m = fit.model.anchor->width;
    report.hyper.depth = fit.model.anchor->depth;
    report.hyper.radius = radius;
    report.hyper.seed = opts.seed;
    report.term_LR_sqrt_n =
        double(report.hyper.depth) * radius / std::sqrt(double(data.n()));
    report.term_conf = std::sqrt(std::log(1.0 / report.hyper.delta) / double(data.n()));
    report.notes = "first term is the fitted upper estimate of the infimum; deviation terms shape-only";
    return report;
}

BoundReport kernel_bound(const KernelStack& theta, const std::vector<int>& labels) {
    Eigen::Index n = theta.theta.rows();
    if (Eigen::Index(labels.size()) != n) throw ArgumentError("label count does not match kernel");

    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = double(labels[std::size_t(i)]);

    PsdSolveResult solve = psd_solve(theta.theta, y);
    double quad = y.dot(solve.solution);

    // Sanity envelope: entries of Theta are bounded by L, so y^T Theta^-1 y >= 1/L * 1.
    double lower = 1.0 / double(theta.depth);
    if (quad < lower * (1.0 - 1e-9))
        throw NumericError("kernel quadratic form " + std::to_string(quad) +
                           " below the 1/L lower bound");

    BoundReport report;
    report.kind = BoundKind::KernelCorollary;
    report.kernel_quantity = std::sqrt(quad / double(n));
    report.first_term = double(theta.depth) * report.kernel_quantity;
    report.hyper.n = n;
    report.hyper.depth = theta.depth;
    report.term_conf = std::sqrt(std::log(1.0 / report.hyper.delta) / double(n));
    report.jitter_used = solve.jitter;
    return report;
}

FlipSweepTable flip_sweep(const LabeledDataset& data, int depth,
                          const std::vector<double>& ratios, int seeds,
                          std::uint64_t base_seed) {
    for (double r : ratios)
        if (r < 0.0 || r > 0.5) throw ArgumentError("flip ratios must lie in [0, 0.5]");

    KernelStack stack = kernel_stack(data.inputs, depth);

    FlipSweepTable table;
    table.ratios = ratios;
    for (double ratio : ratios) {
        std::vector<double> values;
        for (int s = 0; s < seeds; ++s) {
            std::uint64_t seed = base_seed + std::uint64_t(s);
            LabeledDataset flipped = flip_labels(data, ratio, seed);
            BoundReport report = kernel_bound(stack, flipped.labels);
            table.rows.push_back({ratio, seed, report.kernel_quantity, report.jitter_used});
            values.push_back(report.kernel_quantity);
        }
        table.medians.push_back(median_of(values));
    }
    return table;
}

void save_flip_sweep_csv(const FlipSweepTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "ratio,seed,quantity,jitter\n";
    for (const auto& row : table.rows)
        out << row.ratio << "," << row.seed << "," << row.quantity << "," << row.jitter << "\n";
}

}  // namespace ntkw
