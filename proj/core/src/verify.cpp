#include "ntkw/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "ntkw/errors.hpp"
#include "ntkw/network.hpp"
#include "ntkw/ntk.hpp"
#include "ntkw/rng.hpp"

namespace ntkw {

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::Pass: return "PASS";
        case Verdict::TrendPass: return "TREND_PASS";
        case Verdict::Fail: return "FAIL";
    }
    return "FAIL";
}

namespace {

std::string config_string(const VerifyConfig& cfg) {
    std::ostringstream os;
    os << "m=" << cfg.m << ",L=" << cfg.depth << ",n=" << cfg.n << ",seeds=" << cfg.seeds
       << ",seed=" << cfg.base_seed;
    return os.str();
}

std::string repro(const VerifyConfig& cfg, const std::string& lemma) {
    std::ostringstream os;
    os << "ntkw verify --lemma " << lemma << " --m " << cfg.m << " --depth " << cfg.depth
       << " --n " << cfg.n << " --seeds " << cfg.seeds << " --seed " << cfg.base_seed;
    return os.str();
}

Eigen::VectorXd random_unit_input(Eigen::Index d, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd x(d);
    for (Eigen::Index j = 0; j < d; ++j) x(j) = gauss(rng);
    return x / x.norm();
}

// Per-layer Gaussian directions scaled to Frobenius norm `radius` each
// (boundary of the perturbation ball, the worst case for the checks).
std::vector<Eigen::MatrixXd> random_ball_offset(const NetParams& params, double radius,
                                                std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Eigen::MatrixXd> offset;
    offset.reserve(params.layers.size());
    for (const auto& w : params.layers) {
        Eigen::MatrixXd u(w.rows(), w.cols());
        for (Eigen::Index i = 0; i < u.rows(); ++i)
            for (Eigen::Index j = 0; j < u.cols(); ++j) u(i, j) = gauss(rng);
        u *= radius / u.norm();
        offset.push_back(std::move(u));
    }
    return offset;
}

NetParams perturbed(const NetParams& params, const std::vector<Eigen::MatrixXd>& offset,
                    double scale = 1.0) {
    NetParams out = params;
    for (std::size_t l = 0; l < out.layers.size(); ++l) out.layers[l] += scale * offset[l];
    return out;
}

// <grad f(x), offset> across layers, from the factored gradient.
double gradient_inner(const ActivationTrace& trace, const std::vector<Eigen::MatrixXd>& offset,
                      Eigen::Index m) {
    double sqrt_m = std::sqrt(double(m));
    double acc = 0.0;
    for (std::size_t l = 0; l + 1 < offset.size(); ++l)
        acc += sqrt_m * trace.back[l].dot(offset[l] * trace.hidden[l]);
    acc += sqrt_m * (offset.back() * trace.hidden.back())(0);
    return acc;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v.size() % 2 == 1 ? v[v.size() / 2]
                             : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

}  // namespace

LemmaCheckResult check_linearization(const VerifyConfig& cfg, const std::vector<double>& t_grid) {
    std::vector<double> grid = t_grid;
    if (grid.empty()) {
        double base = 1.0 / std::sqrt(double(cfg.m));
        grid = {1e-2 * base, 1e-3 * base, 1e-4 * base};
    }
    for (std::size_t k = 1; k < grid.size(); ++k)
        if (grid[k] >= grid[k - 1]) throw ArgumentError("t grid must be decreasing");

    LemmaCheckResult result;
    result.lemma_id = "linearization";
    result.config = config_string(cfg);
    result.repro_command = repro(cfg, "linearization");
    result.trials = cfg.seeds;

    const Eigen::Index d = 10;
    std::vector<std::vector<double>> ratios(grid.size());
    double smallest_t_rel = 0.0;

    for (int s = 0; s < cfg.seeds; ++s) {
        std::uint64_t seed = cfg.base_seed + std::uint64_t(s);
        auto rng = make_rng(seed, "verify-lin");
        NetParams params = init_params(cfg.m, d, cfg.depth, seed);
        Eigen::VectorXd x = random_unit_input(d, rng);
        ActivationTrace trace = forward(params, x);
        auto direction = random_ball_offset(params, 1.0, rng);
        // normalize the whole direction collection to unit Frobenius norm
        double total = std::sqrt(double(direction.size()));
        for (auto& u : direction) u /= total;

        double slope = gradient_inner(trace, direction, cfg.m);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            double t = grid[k];
            NetParams moved = perturbed(params, direction, t);
            double f_moved = forward_no_backward(moved, x).output;
            double err = std::abs(f_moved - trace.output - t * slope);
            ratios[k].push_back(err / t);
            if (k + 1 == grid.size())
                smallest_t_rel = std::max(smallest_t_rel, err / std::abs(t * slope));
        }
    }

    bool decreasing = true;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        double med = median_of(ratios[k]);
        result.statistics["ratio_t" + std::to_string(k)] = med;
        if (k > 0 && med > result.statistics["ratio_t" + std::to_string(k - 1)])
            decreasing = false;
    }
    result.statistics["smallest_t_relative_error"] = smallest_t_rel;

    if (decreasing) {
        result.verdict = Verdict::TrendPass;
    } else {
        result.verdict = Verdict::Fail;
        result.failure_detail = "median e(t)/t not decreasing along the t grid";
    }
    return result;
}

LemmaCheckResult check_almost_convexity(const VerifyConfig& cfg, double omega, int pairs) {
    if (omega <= 0.0) omega = 0.1 / std::sqrt(double(cfg.m));

    LemmaCheckResult result;
    result.lemma_id = "convexity";
    result.config = config_string(cfg) + ",omega=" + std::to_string(omega);
    result.repro_command = repro(cfg, "convexity");
    result.trials = cfg.seeds * pairs;

    auto max_violation_at = [&](double w) {
        double worst = 0.0;
        for (int s = 0; s < cfg.seeds; ++s) {
            std::uint64_t seed = cfg.base_seed + std::uint64_t(s);
            auto rng = make_rng(seed, "verify-cvx");
            const Eigen::Index d = 10;
            NetParams init = init_params(cfg.m, d, cfg.depth, seed);
            Eigen::VectorXd x = random_unit_input(d, rng);
            int y = (rng() & 1) ? 1 : -1;
            for (int p = 0; p < pairs; ++p) {
                NetParams a = perturbed(init, random_ball_offset(init, w, rng));
                NetParams b = perturbed(init, random_ball_offset(init, w, rng));
                LossGrad la = loss_and_grad(a, x, y);
                double lb = cross_entropy(double(y) * forward_no_backward(b, x).output);
                std::vector<Eigen::MatrixXd> diff;
                diff.reserve(a.layers.size());
                for (std::size_t l = 0; l < a.layers.size(); ++l)
                    diff.push_back(b.layers[l] - a.layers[l]);
                double inner = la.scale * gradient_inner(la.trace, diff, cfg.m);
                worst = std::max(worst, la.loss + inner - lb);
            }
        }
        return worst;
    };

    double violation = max_violation_at(omega);
    double budget = 10.0 * std::pow(omega, 4.0 / 3.0) * double(cfg.depth) * double(cfg.depth) *
                    std::sqrt(double(cfg.m) * std::log(double(cfg.m)));
    result.statistics["max_violation"] = violation;
    result.statistics["budget"] = budget;

    if (violation <= budget) {
        result.verdict = Verdict::Pass;
    } else {
        double half = max_violation_at(omega / 2.0);
        result.statistics["max_violation_half_omega"] = half;
        if (half < violation) {
            result.verdict = Verdict::TrendPass;
        } else {
            result.verdict = Verdict::Fail;
            result.failure_detail = "violation " + std::to_string(violation) +
                                    " exceeds budget " + std::to_string(budget) +
                                    " and does not shrink with omega";
        }
    }
    return result;
}

LemmaCheckResult check_hidden_norms(const VerifyConfig& cfg, double omega) {
    if (omega <= 0.0) omega = 0.01 / std::sqrt(double(cfg.m));

    LemmaCheckResult result;
    result.lemma_id = "norms";
    result.config = config_string(cfg) + ",omega=" + std::to_string(omega);
    result.repro_command = repro(cfg, "norms");
    result.trials = cfg.seeds;

    double lo_init = 2.0, hi_init = 0.0, lo_ball = 2.0, hi_ball = 0.0;
    bool failed = false;
    for (int s = 0; s < cfg.seeds && !failed; ++s) {
        std::uint64_t seed = cfg.base_seed + std::uint64_t(s);
        auto rng = make_rng(seed, "verify-norms");
        const Eigen::Index d = 10;
        NetParams init = init_params(cfg.m, d, cfg.depth, seed);
        NetParams moved = perturbed(init, random_ball_offset(init, omega, rng));
        for (Eigen::Index i = 0; i < cfg.n; ++i) {
            Eigen::VectorXd x = random_unit_input(d, rng);
            ActivationTrace t0 = forward_no_backward(init, x);
            ActivationTrace t1 = forward_no_backward(moved, x);
            for (std::size_t l = 1; l < t0.hidden.size(); ++l) {
                double norm0 = t0.hidden[l].norm();
                double norm1 = t1.hidden[l].norm();
                lo_init = std::min(lo_init, norm0);
                hi_init = std::max(hi_init, norm0);
                lo_ball = std::min(lo_ball, std::min(norm0, norm1));
                hi_ball = std::max(hi_ball, std::max(norm0, norm1));
            }
        }
        if (lo_ball < 0.5 || hi_ball > 1.5) {
            failed = true;
            result.failure_detail = "hidden norm out of [1/2, 3/2] at seed " +
                                    std::to_string(seed) + " (min " + std::to_string(lo_ball) +
                                    ", max " + std::to_string(hi_ball) + ")";
        }
    }

    result.statistics["min_norm_init"] = lo_init;
    result.statistics["max_norm_init"] = hi_init;
    result.statistics["min_norm_ball"] = lo_ball;
    result.statistics["max_norm_ball"] = hi_ball;
    result.verdict = failed ? Verdict::Fail : Verdict::Pass;
    return result;
}

LemmaCheckResult check_gradient_norms(const VerifyConfig& cfg) {
    LemmaCheckResult result;
    result.lemma_id = "gradients";
    result.config = config_string(cfg);
    result.repro_command = repro(cfg, "gradients");
    result.trials = cfg.seeds;

    double sqrt_m = std::sqrt(double(cfg.m));
    double worst_net = 0.0, worst_loss = 0.0;
    bool loss_le_net = true;
    for (int s = 0; s < cfg.seeds; ++s) {
        std::uint64_t seed = cfg.base_seed + std::uint64_t(s);
        auto rng = make_rng(seed, "verify-grad");
        const Eigen::Index d = 10;
        NetParams init = init_params(cfg.m, d, cfg.depth, seed);
        for (Eigen::Index i = 0; i < cfg.n; ++i) {
            Eigen::VectorXd x = random_unit_input(d, rng);
            int y = (rng() & 1) ? 1 : -1;
            LossGrad lg = loss_and_grad(init, x, y);
            for (double g : gradient_layer_norms(lg.trace, cfg.m)) {
                worst_net = std::max(worst_net, g / sqrt_m);
                double loss_norm = std::abs(lg.scale) * g;
                worst_loss = std::max(worst_loss, loss_norm / sqrt_m);
                if (loss_norm > g * (1.0 + 1e-12)) loss_le_net = false;
            }
        }
    }

    result.statistics["max_net_grad_ratio"] = worst_net;
    result.statistics["max_loss_grad_ratio"] = worst_loss;
    if (worst_net <= 4.0 && worst_loss <= 4.0 && loss_le_net) {
        result.verdict = Verdict::Pass;
    } else {
        result.verdict = Verdict::Fail;
        result.failure_detail = "gradient ratio exceeded 4 (net " + std::to_string(worst_net) +
                                ", loss " + std::to_string(worst_loss) + ")";
    }
    return result;
}

LemmaCheckResult check_pattern_stability(const VerifyConfig& cfg,
                                         const std::vector<double>& omega_grid) {
    std::vector<double> grid = omega_grid;
    if (grid.empty()) {
        double base = 1.0 / std::sqrt(double(cfg.m));
        grid = {0.04 * base, 0.02 * base, 0.01 * base, 0.005 * base};
    }
    for (std::size_t k = 1; k < grid.size(); ++k)
        if (grid[k] >= grid[k - 1]) throw ArgumentError("omega grid must be decreasing");

    LemmaCheckResult result;
    result.lemma_id = "patterns";
    result.config = config_string(cfg);
    result.repro_command = repro(cfg, "patterns");
    result.trials = cfg.seeds;

    // Random directions at these radii flip essentially nothing; the omega^{2/3}
    // law is extremal. Count the most activation bits a radius-omega per-layer
    // perturbation can flip: zeroing unit j of layer l costs a row change of
    // norm |preact_j| / ||h_{l-1}||, so the budget admits the cheapest prefix
    // with sum of squared costs <= omega^2.
    std::vector<double> med_flips(grid.size());
    std::vector<std::vector<double>> flips(grid.size());
    for (int s = 0; s < cfg.seeds; ++s) {
        std::uint64_t seed = cfg.base_seed + std::uint64_t(s);
        auto rng = make_rng(seed, "verify-pat");
        const Eigen::Index d = 10;
        NetParams init = init_params(cfg.m, d, cfg.depth, seed);
        Eigen::VectorXd x = random_unit_input(d, rng);
        ActivationTrace t0 = forward_no_backward(init, x);

        std::vector<std::vector<double>> layer_costs(t0.patterns.size());
        for (std::size_t l = 0; l < t0.patterns.size(); ++l) {
            Eigen::VectorXd preact = init.layers[l] * t0.hidden[l];
            double feed = t0.hidden[l].norm();
            layer_costs[l].reserve(std::size_t(preact.size()));
            for (Eigen::Index j = 0; j < preact.size(); ++j)
                layer_costs[l].push_back(std::abs(preact(j)) / feed);
            std::sort(layer_costs[l].begin(), layer_costs[l].end());
        }

        for (std::size_t k = 0; k < grid.size(); ++k) {
            double budget_sq = grid[k] * grid[k];
            Eigen::Index changed = 0;
            for (const auto& costs : layer_costs) {
                double spent = 0.0;
                for (double c : costs) {
                    spent += c * c;
                    if (spent > budget_sq) break;
                    ++changed;
                }
            }
            flips[k].push_back(double(changed));
        }
    }

    // least-squares slope of log(flips) vs log(omega)
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int used = 0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        med_flips[k] = median_of(flips[k]);
        result.statistics["flips_omega" + std::to_string(k)] = med_flips[k];
        if (med_flips[k] <= 0.0) continue;
        double lx = std::log(grid[k]), ly = std::log(med_flips[k]);
        sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
        ++used;
    }
    double slope = used >= 2 ? (double(used) * sxy - sx * sy) / (double(used) * sxx - sx * sx)
                             : 0.0;
    result.statistics["loglog_slope"] = slope;

    if (used >= 2 && slope >= 0.4 && slope <= 0.9) {
        result.verdict = Verdict::TrendPass;
    } else {
        result.verdict = Verdict::Fail;
        result.failure_detail = "flip-count exponent " + std::to_string(slope) +
                                " outside [0.4, 0.9]";
    }
    return result;
}

LemmaCheckResult check_gram_convergence(const VerifyConfig& cfg,
                                        const std::vector<Eigen::Index>& widths) {
    std::vector<Eigen::Index> w = widths;
    if (w.empty()) w = {256, 512, 1024};

    auto rng = make_rng(cfg.base_seed, "verify-gram-x");
    const Eigen::Index d = 10;
    Eigen::MatrixXd inputs(cfg.n, d);
    for (Eigen::Index i = 0; i < cfg.n; ++i)
        inputs.row(i) = random_unit_input(d, rng).transpose();

    GramConvergenceReport report =
        gram_convergence_report(inputs, cfg.depth, w, cfg.seeds, cfg.base_seed);

    LemmaCheckResult result;
    result.lemma_id = "gram";
    result.config = config_string(cfg);
    result.repro_command = repro(cfg, "gram");
    result.trials = cfg.seeds * int(w.size());
    for (const auto& row : report.rows)
        result.statistics["median_dev_m" + std::to_string(row.width)] = row.median_dev;
    if (report.pass) {
        result.verdict = Verdict::TrendPass;
    } else {
        result.verdict = Verdict::Fail;
        result.failure_detail = "per-width median of max|G - Theta| not non-increasing";
    }
    return result;
}

std::string to_ndjson(const LemmaCheckResult& result) {
    std::ostringstream os;
    os << "{\"lemma_id\":\"" << result.lemma_id << "\",\"config\":\"" << result.config
       << "\",\"trials\":" << result.trials << ",\"statistic\":{";
    bool first = true;
    for (const auto& [key, value] : result.statistics) {
        if (!first) os << ",";
        os << "\"" << key << "\":" << value;
        first = false;
    }
    os << "},\"verdict\":\"" << to_string(result.verdict) << "\"";
    if (!result.failure_detail.empty()) {
        os << ",\"failure\":\"" << result.failure_detail << "\",\"repro\":\""
           << result.repro_command << "\"";
    }
    os << "}";
    return os.str();
}

}  // namespace ntkw
