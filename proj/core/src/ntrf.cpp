#include "ntkw/ntrf.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "ntkw/errors.hpp"
#include "ntkw/io.hpp"
#include "ntkw/rng.hpp"

namespace ntkw {

void NtrfModel::validate() const {
    if (!anchor) throw ArgumentError("NtrfModel has no anchor");
    if (delta.size() != anchor->layers.size()) throw ArgumentError("delta layer count mismatch");
    double cap = radius / std::sqrt(double(anchor->width)) + 1e-9;
    for (std::size_t l = 0; l < delta.size(); ++l) {
        if (delta[l].rows() != anchor->layers[l].rows() ||
            delta[l].cols() != anchor->layers[l].cols())
            throw ArgumentError("delta layer " + std::to_string(l) + " shape mismatch");
        if (delta[l].norm() > cap)
            throw ArgumentError("delta layer " + std::to_string(l) + " violates the ball constraint");
    }
}

FeatureCache build_feature_cache(const NetParams& anchor, const Eigen::MatrixXd& inputs) {
    Eigen::Index n = inputs.rows();
    const int L = anchor.depth;
    FeatureCache cache;
    cache.width = anchor.width;
    cache.depth = L;
    cache.hidden.resize(std::size_t(L));
    cache.back.resize(std::size_t(L - 1));
    cache.hidden[0].resize(anchor.dim, n);
    for (int l = 1; l < L; ++l) cache.hidden[std::size_t(l)].resize(anchor.width, n);
    for (int l = 0; l + 1 < L; ++l) cache.back[std::size_t(l)].resize(anchor.width, n);
    cache.anchor_output.resize(n);

    for (Eigen::Index i = 0; i < n; ++i) {
        ActivationTrace trace = forward(anchor, inputs.row(i).transpose());
        for (int l = 0; l < L; ++l) cache.hidden[std::size_t(l)].col(i) = trace.hidden[std::size_t(l)];
        for (int l = 0; l + 1 < L; ++l) cache.back[std::size_t(l)].col(i) = trace.back[std::size_t(l)];
        cache.anchor_output(i) = trace.output;
    }
    return cache;
}

double ntrf_eval(const NtrfModel& model, const Eigen::VectorXd& x) {
    const NetParams& anchor = *model.anchor;
    ActivationTrace trace = forward(anchor, x);
    double sqrt_m = std::sqrt(double(anchor.width));
    double value = trace.output;
    for (int l = 0; l + 1 < anchor.depth; ++l)
        value += sqrt_m * trace.back[std::size_t(l)].dot(model.delta[std::size_t(l)] *
                                                         trace.hidden[std::size_t(l)]);
    value += sqrt_m * (model.delta.back() * trace.hidden.back())(0);
    return value;
}

Eigen::VectorXd ntrf_eval_cached(const std::vector<Eigen::MatrixXd>& delta,
                                 const FeatureCache& cache) {
    double sqrt_m = std::sqrt(double(cache.width));
    Eigen::VectorXd out = cache.anchor_output;
    for (int l = 0; l + 1 < cache.depth; ++l) {
        // sum_i b_l^i . (delta_l h_{l-1}^i) for all examples in one GEMM
        Eigen::MatrixXd u = delta[std::size_t(l)] * cache.hidden[std::size_t(l)];
        out += sqrt_m * cache.back[std::size_t(l)].cwiseProduct(u).colwise().sum().transpose();
    }
    out += sqrt_m * (delta.back() * cache.hidden.back()).transpose();
    return out;
}

void project_ball(std::vector<Eigen::MatrixXd>& delta, double radius, Eigen::Index m) {
    if (radius <= 0.0) throw ArgumentError("radius must be positive");
    double cap = radius / std::sqrt(double(m));
    for (auto& layer : delta) {
        double norm = layer.norm();
        if (norm > cap) layer *= cap / norm;
    }
}

NtrfFitResult fit_projected_sgd(std::shared_ptr<const NetParams> anchor,
                                const LabeledDataset& data, double radius,
                                const NtrfFitOptions& opts) {
    if (opts.epochs < 1 || opts.batch < 1) throw ArgumentError("epochs and batch must be >= 1");
    if (radius <= 0.0) throw ArgumentError("radius must be positive");
    const Eigen::Index n = data.n();
    const Eigen::Index m = anchor->width;
    const int L = anchor->depth;

    FeatureCache cache = build_feature_cache(*anchor, data.inputs);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = double(data.labels[std::size_t(i)]);

    std::vector<Eigen::MatrixXd> delta;
    delta.reserve(std::size_t(L));
    for (const auto& w : anchor->layers) delta.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));

    double lr = opts.lr > 0.0 ? opts.lr : 0.5 * radius / (double(m) * std::sqrt(double(n)));
    double sqrt_m = std::sqrt(double(m));
    auto rng = make_rng(opts.seed, "ntrf-sgd");

    auto mean_loss = [&](const std::vector<Eigen::MatrixXd>& d) {
        Eigen::VectorXd margins = y.cwiseProduct(ntrf_eval_cached(d, cache));
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double l = cross_entropy(margins(i));
            if (!std::isfinite(l))
                throw NumericError("non-finite NTRF loss at example " + std::to_string(i));
            total += l;
        }
        return total / double(n);
    };

    NtrfFitResult result;
    result.epoch_losses.reserve(std::size_t(opts.epochs));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index(0));

    std::vector<Eigen::MatrixXd> best_delta = delta;
    double best_loss = mean_loss(delta);
    double prev_loss = best_loss;

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index start = 0; start < n; start += opts.batch) {
            Eigen::Index len = std::min<Eigen::Index>(opts.batch, n - start);

            // Gather the batch columns once, then each layer update is a GEMM.
            Eigen::VectorXd coef(len);
            std::vector<Eigen::MatrixXd> bh(std::size_t(L - 1)), bb(std::size_t(L - 1));
            Eigen::MatrixXd h_last(m, len);
            for (int l = 0; l + 1 < L; ++l) {
                bh[std::size_t(l)].resize(cache.hidden[std::size_t(l)].rows(), len);
                bb[std::size_t(l)].resize(m, len);
            }
            for (Eigen::Index k = 0; k < len; ++k) {
                Eigen::Index i = order[std::size_t(start + k)];
                for (int l = 0; l + 1 < L; ++l) {
                    bh[std::size_t(l)].col(k) = cache.hidden[std::size_t(l)].col(i);
                    bb[std::size_t(l)].col(k) = cache.back[std::size_t(l)].col(i);
                }
                h_last.col(k) = cache.hidden.back().col(i);
            }
            for (Eigen::Index k = 0; k < len; ++k) {
                Eigen::Index i = order[std::size_t(start + k)];
                double value = cache.anchor_output(i);
                for (int l = 0; l + 1 < L; ++l)
                    value += sqrt_m * bb[std::size_t(l)].col(k).dot(
                                          delta[std::size_t(l)] * bh[std::size_t(l)].col(k));
                value += sqrt_m * (delta.back() * h_last.col(k))(0);
                coef(k) = cross_entropy_derivative(y(i) * value) * y(i) / double(len);
            }

            double step = lr * sqrt_m;
            for (int l = 0; l + 1 < L; ++l)
                delta[std::size_t(l)].noalias() -=
                    step * (bb[std::size_t(l)] * coef.asDiagonal()) * bh[std::size_t(l)].transpose();
            delta.back().noalias() -= step * (h_last * coef).transpose();
            project_ball(delta, radius, m);
        }

        double epoch_loss = mean_loss(delta);
        result.epoch_losses.push_back(epoch_loss);
        if (epoch_loss < best_loss) {
            best_loss = epoch_loss;
            best_delta = delta;
        }
        if (epoch_loss > prev_loss) {
            lr *= 0.5;
            if (epoch_loss > prev_loss * 1.05)
                std::cerr << "warning: NTRF epoch loss increased from " << prev_loss << " to "
                          << epoch_loss << "\n";
        }
        prev_loss = epoch_loss;
    }

    result.model.anchor = std::move(anchor);
    result.model.delta = std::move(best_delta);
    result.model.radius = radius;
    return result;
}

InterpolantResult min_distance_interpolant(std::shared_ptr<const NetParams> anchor,
                                           const LabeledDataset& data,
                                           const KernelStack& theta) {
    const Eigen::Index n = data.n();
    const Eigen::Index m = anchor->width;
    double sqrt_m = std::sqrt(double(m));

    FeatureCache cache = build_feature_cache(*anchor, data.inputs);

    double b_margin = std::log(1.0 / (std::exp(1.0 / std::sqrt(double(n))) - 1.0));
    double b_init = cache.anchor_output.cwiseAbs().maxCoeff();
    double target_scale = b_margin + b_init;

    Eigen::VectorXd yhat(n);
    for (Eigen::Index i = 0; i < n; ++i)
        yhat(i) = target_scale * double(data.labels[std::size_t(i)]);

    // Empirical Gram from the cached factors.
    Eigen::MatrixXd gram = cache.hidden.back().transpose() * cache.hidden.back();
    for (int l = 0; l + 2 <= cache.depth; ++l) {
        Eigen::MatrixXd hh = cache.hidden[std::size_t(l)].transpose() * cache.hidden[std::size_t(l)];
        Eigen::MatrixXd bbm = cache.back[std::size_t(l)].transpose() * cache.back[std::size_t(l)];
        gram += hh.cwiseProduct(bbm);
    }

    PsdSolveResult solve = psd_solve(gram, yhat);
    Eigen::VectorXd c = solve.solution / sqrt_m;

    InterpolantResult result;
    result.coeffs = c;
    result.jitter = solve.jitter;
    result.target_scale = target_scale;

    // delta_l = sum_i c_i b_l^i (h_{l-1}^i)^T, delta_L = (H_{L-1} c)^T
    result.model.anchor = anchor;
    result.model.delta.reserve(anchor->layers.size());
    for (int l = 0; l + 1 < cache.depth; ++l)
        result.model.delta.push_back(cache.back[std::size_t(l)] * c.asDiagonal() *
                                     cache.hidden[std::size_t(l)].transpose());
    result.model.delta.push_back((cache.hidden.back() * c).transpose());

    double norm_sq = 0.0;
    for (const auto& layer : result.model.delta) norm_sq += layer.squaredNorm();
    result.delta_norm = std::sqrt(norm_sq);

    PsdSolveResult kernel_solve = psd_solve(theta.theta, yhat);
    result.kernel_predicted_norm = std::sqrt(yhat.dot(kernel_solve.solution) / double(m));

    // Radius is derived from what the construction produced.
    double max_layer = 0.0;
    for (const auto& layer : result.model.delta) max_layer = std::max(max_layer, layer.norm());
    result.model.radius = max_layer * sqrt_m;
    return result;
}

void save_ntrf(const NtrfModel& model, const std::string& path) {
    auto out = io::open_out(path);
    io::write_header(out, "ntrf");
    out << model.radius << "\n";
    io::write_u64(out, model.anchor->init_seed);  // anchor identity check
    io::write_u64(out, std::uint64_t(model.delta.size()));
    for (const auto& layer : model.delta) {
        io::write_u64(out, std::uint64_t(layer.rows()));
        io::write_u64(out, std::uint64_t(layer.cols()));
        io::write_matrix(out, layer);
    }
}

std::vector<Eigen::MatrixXd> load_ntrf_delta(const std::string& path, double& radius_out) {
    auto in = io::open_in(path);
    io::expect_header(in, "ntrf", path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": truncated");
    radius_out = std::stod(line);
    io::read_u64(in, path);  // anchor seed, informational
    auto count = io::read_u64(in, path);
    std::vector<Eigen::MatrixXd> delta(count);
    for (auto& layer : delta) {
        auto rows = Eigen::Index(io::read_u64(in, path));
        auto cols = Eigen::Index(io::read_u64(in, path));
        io::read_matrix(in, layer, rows, cols, path);
    }
    return delta;
}

}  // namespace ntkw
