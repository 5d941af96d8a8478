#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "ntkw/errors.hpp"
#include "ntkw/ntk.hpp"
#include "ntkw/rng.hpp"

using namespace ntkw;

namespace {

Eigen::MatrixXd random_sphere_rows(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    auto rng = make_rng(seed, "test-sphere");
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = gauss(rng);
        x.row(i) /= x.row(i).norm();
    }
    return x;
}

// Monte Carlo oracle for the pair expectations; returns estimates and the
// standard errors of 2*relu(u)relu(v) and 2*relu'(u)relu'(v).
struct McEstimate {
    double kappa1, se1, kappa0, se0;
};

McEstimate mc_pair_expectations(double sii, double sjj, double sij, int samples,
                                std::uint64_t seed) {
    auto rng = make_rng(seed, "mc-oracle");
    std::normal_distribution<double> gauss(0.0, 1.0);
    double a = std::sqrt(sii);
    double rho = sij / std::sqrt(sii * sjj);
    double s1 = 0.0, s1sq = 0.0, s0 = 0.0, s0sq = 0.0;
    for (int k = 0; k < samples; ++k) {
        double z1 = gauss(rng), z2 = gauss(rng);
        double u = a * z1;
        double v = std::sqrt(sjj) * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2);
        double t1 = 2.0 * std::max(0.0, u) * std::max(0.0, v);
        double t0 = (u > 0 && v > 0) ? 2.0 : 0.0;
        s1 += t1; s1sq += t1 * t1;
        s0 += t0; s0sq += t0 * t0;
    }
    double n = double(samples);
    McEstimate est;
    est.kappa1 = s1 / n;
    est.kappa0 = s0 / n;
    est.se1 = std::sqrt((s1sq / n - est.kappa1 * est.kappa1) / n);
    est.se0 = std::sqrt((s0sq / n - est.kappa0 * est.kappa0) / n);
    return est;
}

}  // namespace

TEST_CASE("relu_pair_expectations closed forms") {
    constexpr double inv_pi = 1.0 / std::numbers::pi;

    auto full = relu_pair_expectations(1.0, 1.0, 1.0);
    CHECK(full.kappa1 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(full.kappa0 == doctest::Approx(1.0).epsilon(1e-12));

    auto anti = relu_pair_expectations(1.0, 1.0, -1.0);
    CHECK(anti.kappa1 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(anti.kappa0 == doctest::Approx(0.0).epsilon(1e-12));

    auto ortho = relu_pair_expectations(1.0, 1.0, 0.0);
    CHECK(ortho.kappa1 == doctest::Approx(inv_pi).epsilon(1e-12));
    CHECK(ortho.kappa0 == doctest::Approx(0.5).epsilon(1e-12));

    SUBCASE("Monte Carlo agreement at the orthogonal point") {
        McEstimate mc = mc_pair_expectations(1.0, 1.0, 0.0, 1000000, 7);
        CHECK(std::abs(ortho.kappa1 - mc.kappa1) <= 3.0 * mc.se1);
        CHECK(std::abs(ortho.kappa0 - mc.kappa0) <= 3.0 * mc.se0);
    }
    SUBCASE("monotone in the covariance") {
        double prev1 = -1.0, prev0 = -1.0;
        for (double s = -1.0; s <= 1.0; s += 0.05) {
            auto e = relu_pair_expectations(1.0, 1.0, s);
            CHECK(e.kappa1 >= prev1 - 1e-12);
            CHECK(e.kappa0 >= prev0 - 1e-12);
            prev1 = e.kappa1;
            prev0 = e.kappa0;
        }
    }
    SUBCASE("invalid covariance rejected") {
        CHECK_THROWS_AS(relu_pair_expectations(1.0, 1.0, 1.5), ArgumentError);
        CHECK_THROWS_AS(relu_pair_expectations(0.0, 1.0, 0.0), ArgumentError);
    }
    SUBCASE("correlation just past 1 from rounding is clamped, not NaN") {
        auto e = relu_pair_expectations(1.0, 1.0, 1.0 + 1e-15);
        CHECK(std::isfinite(e.kappa1));
        CHECK(e.kappa0 == doctest::Approx(1.0));
    }
}

TEST_CASE("kernel_stack") {
    SUBCASE("orthogonal pair at depth 2, by hand") {
        Eigen::MatrixXd x(2, 2);
        x << 1, 0, 0, 1;
        KernelStack stack = kernel_stack(x, 2);
        constexpr double inv_pi = 1.0 / std::numbers::pi;
        CHECK(stack.sigma.back()(0, 1) == doctest::Approx(inv_pi).epsilon(1e-12));
        CHECK(stack.theta_tilde.back()(0, 1) == doctest::Approx(inv_pi).epsilon(1e-12));
        CHECK(stack.theta(0, 1) == doctest::Approx(inv_pi).epsilon(1e-12));
        CHECK(stack.theta(0, 0) == doctest::Approx(1.5).epsilon(1e-12));
    }
    SUBCASE("diagonal identities at every depth") {
        Eigen::MatrixXd x = random_sphere_rows(7, 5, 3);
        for (int depth : {2, 3, 5}) {
            KernelStack stack = kernel_stack(x, depth);
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                CHECK(std::abs(stack.sigma.back()(i, i) - 1.0) <= 1e-12);
                CHECK(std::abs(stack.theta_tilde.back()(i, i) - double(depth)) <= 1e-12);
                CHECK(std::abs(stack.theta(i, i) - (depth + 1.0) / 2.0) <= 1e-12);
            }
        }
    }
    SUBCASE("duplicated input row") {
        Eigen::MatrixXd x(2, 3);
        x << 1, 0, 0, 1, 0, 0;
        KernelStack stack = kernel_stack(x, 4);
        CHECK(stack.theta(0, 1) == doctest::Approx(2.5).epsilon(1e-12));
    }
    SUBCASE("entries of ThetaTilde are bounded by the depth") {
        Eigen::MatrixXd x = random_sphere_rows(10, 4, 9);
        for (int depth : {2, 3, 5}) {
            KernelStack stack = kernel_stack(x, depth);
            CHECK(stack.theta_tilde.back().cwiseAbs().maxCoeff() <= double(depth) + 1e-12);
        }
    }
    SUBCASE("permutation equivariance") {
        Eigen::MatrixXd x = random_sphere_rows(5, 6, 11);
        KernelStack base = kernel_stack(x, 3);
        Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
        perm.setIdentity();
        std::swap(perm.indices()(0), perm.indices()(3));
        std::swap(perm.indices()(1), perm.indices()(4));
        Eigen::MatrixXd shuffled = perm * x;
        KernelStack permuted = kernel_stack(shuffled, 3);
        Eigen::MatrixXd expect = perm * base.theta * perm.transpose();
        CHECK((permuted.theta - expect).cwiseAbs().maxCoeff() <= 1e-12);
    }
    SUBCASE("non-unit rows rejected") {
        Eigen::MatrixXd x(1, 3);
        x << 1, 1, 0;
        CHECK_THROWS_AS(kernel_stack(x, 2), ArgumentError);
    }
}

TEST_CASE("empirical_gram matches the brute-force flattened-gradient oracle") {
    const Eigen::Index m = 64, n = 8;
    Eigen::MatrixXd x = random_sphere_rows(n, 10, 5);
    NetParams params = init_params(m, 10, 3, 5);
    GramMatrix gram = empirical_gram(params, x, 3);  // block smaller than n

    Eigen::MatrixXd brute(n, n);
    std::vector<std::vector<Eigen::MatrixXd>> grads;
    for (Eigen::Index i = 0; i < n; ++i)
        grads.push_back(materialize_gradient(params, forward(params, x.row(i).transpose())));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t l = 0; l < grads[std::size_t(i)].size(); ++l)
                acc += (grads[std::size_t(i)][l].array() * grads[std::size_t(j)][l].array()).sum();
            brute(i, j) = acc / double(m);
        }

    CHECK((gram.values - brute).cwiseAbs().maxCoeff() <=
          1e-9 * brute.cwiseAbs().maxCoeff());
    CHECK((gram.values - gram.values.transpose()).cwiseAbs().maxCoeff() == 0.0);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram.values, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8 * gram.values.trace() / double(n));
}

TEST_CASE("gram_convergence_report") {
    Eigen::MatrixXd x = random_sphere_rows(4, 6, 13);

    SUBCASE("single width passes vacuously") {
        auto report = gram_convergence_report(x, 3, {64}, 2, 1);
        CHECK(report.pass);
        CHECK(report.rows.size() == 1);
    }
    SUBCASE("widths must increase") {
        CHECK_THROWS_AS(gram_convergence_report(x, 3, {128, 64}, 1, 0), ArgumentError);
    }
    SUBCASE("parallel inputs still produce a report") {
        Eigen::MatrixXd dup(2, 3);
        dup << 1, 0, 0, 1, 0, 0;
        auto report = gram_convergence_report(dup, 3, {64}, 1, 0);
        CHECK(report.rows.size() == 1);
    }
}

TEST_CASE("psd_solve") {
    SUBCASE("identity") {
        Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(4, 4);
        auto result = psd_solve(eye, Eigen::VectorXd::Ones(4));
        CHECK(result.solution.isApprox(Eigen::VectorXd::Ones(4)));
        CHECK(result.jitter == 0.0);
    }
    SUBCASE("scalar inverse") {
        Eigen::MatrixXd theta(1, 1);
        theta << 1.5;
        Eigen::VectorXd rhs(1);
        rhs << 1.0;
        auto result = psd_solve(theta, rhs);
        CHECK(result.solution(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("exactly singular matrix solves with jitter or reports the pair") {
        Eigen::MatrixXd theta(2, 2);
        theta << 1.0, 1.0, 1.0, 1.0;  // duplicated rows
        Eigen::VectorXd rhs(2);
        rhs << 1.0, 1.0;
        try {
            auto result = psd_solve(theta, rhs);
            CHECK(result.jitter > 0.0);
        } catch (const NumericError& e) {
            CHECK(std::string(e.what()).find("(0, 1)") != std::string::npos);
        }
    }
}

TEST_CASE("kernel file round trip") {
    Eigen::MatrixXd x = random_sphere_rows(6, 4, 21);
    KernelStack stack = kernel_stack(x, 3);
    std::string path = (std::filesystem::temp_directory_path() / "kernel_rt.bin").string();

    save_kernel(stack, path, true);
    KernelStack loaded = load_kernel(path);
    CHECK(loaded.depth == 3);
    CHECK(loaded.n == 6);
    CHECK(loaded.theta == stack.theta);
    REQUIRE(loaded.sigma.size() == 1);
    CHECK(loaded.sigma.back() == stack.sigma.back());
    CHECK(loaded.theta_tilde.back() == stack.theta_tilde.back());
}
