#include "ntkw/ntk.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

#include "ntkw/errors.hpp"
#include "ntkw/io.hpp"

namespace ntkw {

ReluPairExpectations relu_pair_expectations(double sii, double sjj, double sij) {
    if (sii <= 0.0 || sjj <= 0.0) throw ArgumentError("variances must be positive");
    double prod = sii * sjj;
    if (sij * sij > prod + 1e-12) throw ArgumentError("invalid covariance: sij^2 > sii*sjj");

    double lam = std::clamp(sij / std::sqrt(prod), -1.0, 1.0);
    double angle = std::acos(lam);
    constexpr double pi = std::numbers::pi;
    ReluPairExpectations e;
    e.kappa1 = std::sqrt(prod) / pi * (lam * (pi - angle) + std::sqrt(1.0 - lam * lam));
    e.kappa0 = (pi - angle) / pi;
    return e;
}

KernelStack kernel_stack(const Eigen::MatrixXd& inputs, int depth) {
    if (depth < 2) throw ArgumentError("depth must be >= 2");
    Eigen::Index n = inputs.rows();
    if (n < 1) throw ArgumentError("need at least one input");
    for (Eigen::Index i = 0; i < n; ++i)
        if (std::abs(inputs.row(i).norm() - 1.0) > 1e-9)
            throw ArgumentError("kernel_stack: row " + std::to_string(i) + " is not unit-norm");

    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            if (std::abs(inputs.row(i).dot(inputs.row(j))) > 1.0 - 1e-9)
                std::cerr << "warning: inputs " << i << " and " << j
                          << " are nearly parallel; kernel may be singular\n";

    KernelStack stack;
    stack.depth = depth;
    stack.n = n;
    stack.sigma.reserve(std::size_t(depth));
    stack.theta_tilde.reserve(std::size_t(depth));

    Eigen::MatrixXd base = inputs * inputs.transpose();
    stack.sigma.push_back(base);
    stack.theta_tilde.push_back(base);

    for (int l = 1; l < depth; ++l) {
        const Eigen::MatrixXd& prev_sigma = stack.sigma.back();
        const Eigen::MatrixXd& prev_theta = stack.theta_tilde.back();
        Eigen::MatrixXd sigma(n, n), theta(n, n);
        // upper triangle computed, mirrored for exact symmetry
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i; j < n; ++j) {
                auto e = relu_pair_expectations(prev_sigma(i, i), prev_sigma(j, j),
                                                prev_sigma(i, j));
                sigma(i, j) = e.kappa1;
                theta(i, j) = prev_theta(i, j) * e.kappa0 + e.kappa1;
                sigma(j, i) = sigma(i, j);
                theta(j, i) = theta(i, j);
            }
        }
        stack.sigma.push_back(std::move(sigma));
        stack.theta_tilde.push_back(std::move(theta));
    }

    stack.theta = 0.5 * (stack.theta_tilde.back() + stack.sigma.back());
    return stack;
}

GramMatrix empirical_gram(const NetParams& params, const Eigen::MatrixXd& inputs,
                          Eigen::Index block) {
    if (block < 1) throw ArgumentError("block must be >= 1");
    Eigen::Index n = inputs.rows();
    GramMatrix gram;
    gram.width = params.width;
    gram.seed = params.init_seed;
    gram.values.setZero(n, n);

    auto block_traces = [&](Eigen::Index lo, Eigen::Index hi) {
        std::vector<ActivationTrace> traces;
        traces.reserve(std::size_t(hi - lo));
        for (Eigen::Index i = lo; i < hi; ++i)
            traces.push_back(forward(params, inputs.row(i).transpose()));
        return traces;
    };

    double m = double(params.width);
    for (Eigen::Index bi = 0; bi < n; bi += block) {
        Eigen::Index bi_end = std::min(n, bi + block);
        auto ti = block_traces(bi, bi_end);
        for (Eigen::Index bj = bi; bj < n; bj += block) {
            Eigen::Index bj_end = std::min(n, bj + block);
            auto tj = (bj == bi) ? std::vector<ActivationTrace>() : block_traces(bj, bj_end);
            const auto& right = (bj == bi) ? ti : tj;
            for (Eigen::Index i = bi; i < bi_end; ++i) {
                for (Eigen::Index j = std::max(bj, i); j < bj_end; ++j) {
                    double g = gradient_dot(ti[std::size_t(i - bi)],
                                            right[std::size_t(j - bj)], params.width) / m;
                    gram.values(i, j) = g;
                    gram.values(j, i) = g;
                }
            }
        }
    }
    return gram;
}

GramConvergenceReport gram_convergence_report(const Eigen::MatrixXd& inputs, int depth,
                                              const std::vector<Eigen::Index>& widths,
                                              int seeds, std::uint64_t base_seed) {
    for (std::size_t k = 1; k < widths.size(); ++k)
        if (widths[k] <= widths[k - 1]) throw ArgumentError("widths must be strictly increasing");
    for (Eigen::Index w : widths)
        if (w < 64) throw ArgumentError("widths must be >= 64");

    KernelStack stack = kernel_stack(inputs, depth);

    GramConvergenceReport report;
    for (Eigen::Index w : widths) {
        std::vector<double> devs;
        devs.reserve(std::size_t(seeds));
        for (int s = 0; s < seeds; ++s) {
            NetParams params = init_params(w, inputs.cols(), depth, base_seed + std::uint64_t(s));
            GramMatrix gram = empirical_gram(params, inputs);
            devs.push_back((gram.values - stack.theta).cwiseAbs().maxCoeff());
        }
        std::sort(devs.begin(), devs.end());
        double median = devs.size() % 2 == 1
                            ? devs[devs.size() / 2]
                            : 0.5 * (devs[devs.size() / 2 - 1] + devs[devs.size() / 2]);
        report.rows.push_back({w, median, devs.back()});
    }

    report.pass = true;
    for (std::size_t k = 1; k < report.rows.size(); ++k)
        if (report.rows[k].median_dev > report.rows[k - 1].median_dev) report.pass = false;
    return report;
}

PsdSolveResult psd_solve(const Eigen::MatrixXd& theta, const Eigen::VectorXd& rhs) {
    Eigen::Index n = theta.rows();
    if (theta.cols() != n || rhs.size() != n) throw ArgumentError("psd_solve shape mismatch");

    double scale = theta.trace() / double(n);
    double eps = 1e-10 * scale;
    double ceiling = 1e-4 * scale;

    PsdSolveResult result;
    for (double jitter = 0.0;;) {
        Eigen::MatrixXd shifted = theta;
        if (jitter > 0.0) shifted.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(shifted);
        if (llt.info() == Eigen::Success) {
            result.solution = llt.solve(rhs);
            result.jitter = jitter;
            if (jitter > 0.0)
                std::cerr << "warning: psd_solve applied jitter " << jitter << "\n";
            return result;
        }
        jitter = jitter == 0.0 ? eps : jitter * 10.0;
        if (jitter > ceiling) break;
    }

    // Name the most suspicious pair before giving up.
    Eigen::Index bi = 0, bj = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double denom = std::sqrt(std::abs(theta(i, i) * theta(j, j)));
            double corr = denom > 0.0 ? std::abs(theta(i, j)) / denom : 0.0;
            if (corr > best) { best = corr; bi = i; bj = j; }
        }
    throw NumericError("kernel matrix singular beyond jitter ceiling; highest-correlation pair (" +
                       std::to_string(bi) + ", " + std::to_string(bj) + ") with |corr| = " +
                       std::to_string(best));
}

void save_kernel(const KernelStack& stack, const std::string& path, bool with_sections) {
    auto out = io::open_out(path);
    io::write_header(out, "kernel");
    io::write_u64(out, std::uint64_t(stack.depth));
    io::write_u64(out, std::uint64_t(stack.n));
    io::write_u64(out, with_sections ? 1 : 0);  // flags byte: bit 0 = Sigma/ThetaTilde present
    io::write_matrix(out, stack.theta);
    if (with_sections) {
        io::write_matrix(out, stack.sigma.back());
        io::write_matrix(out, stack.theta_tilde.back());
    }
}

KernelStack load_kernel(const std::string& path) {
    auto in = io::open_in(path);
    io::expect_header(in, "kernel", path);
    KernelStack stack;
    stack.depth = int(io::read_u64(in, path));
    stack.n = Eigen::Index(io::read_u64(in, path));
    std::uint64_t flags = io::read_u64(in, path);
    io::read_matrix(in, stack.theta, stack.n, stack.n, path);
    if (flags & 1) {
        Eigen::MatrixXd sigma, theta_tilde;
        io::read_matrix(in, sigma, stack.n, stack.n, path);
        io::read_matrix(in, theta_tilde, stack.n, stack.n, path);
        stack.sigma.push_back(std::move(sigma));
        stack.theta_tilde.push_back(std::move(theta_tilde));
    }
    return stack;
}

}  // namespace ntkw
