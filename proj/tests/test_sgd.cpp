#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ntkw/dataset.hpp"
#include "ntkw/errors.hpp"
#include "ntkw/sgd.hpp"

using namespace ntkw;

TEST_CASE("run_sgd with eta = 0 never moves") {
    NetParams init = init_params(64, 8, 3, 1);
    LabeledDataset data = synth_ntk_realizable(10, 8, 3, 2);

    SgdResult result = run_sgd(init, data, 0.0, 7);
    for (std::size_t l = 0; l < init.layers.size(); ++l)
        CHECK(result.final_params.layers[l] == init.layers[l]);

    REQUIRE(result.record.per_step.size() == 10);
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const SgdStepRecord& step = result.record.per_step[std::size_t(i)];
        for (double d : step.layer_dist) CHECK(d == 0.0);
        double f = forward_no_backward(init, data.inputs.row(i).transpose()).output;
        CHECK(step.loss ==
              doctest::Approx(cross_entropy(double(data.labels[std::size_t(i)]) * f))
                  .epsilon(1e-12));
        CHECK(step.zero_one == (double(data.labels[std::size_t(i)]) * f <= 0.0 ? 1 : 0));
    }
    CHECK(result.record.selected_index >= 1);
    CHECK(result.record.selected_index <= 10);
}

TEST_CASE("one SGD step applies the exact loss gradient") {
    const Eigen::Index m = 32;
    NetParams init = init_params(m, 6, 3, 3);
    LabeledDataset data = synth_ntk_realizable(2, 6, 3, 4);
    const double eta = 0.01;

    SgdResult result = run_sgd(init, data, eta, 5, 1);

    // reconstruct W^(2) = W^(1) - eta * l'(y f) * y * grad f from scratch
    int y = data.labels[0];
    LossGrad lg = loss_and_grad(init, data.inputs.row(0).transpose(), y);
    auto grad = materialize_gradient(init, lg.trace);
    NetParams expect = init;
    for (std::size_t l = 0; l < expect.layers.size(); ++l)
        expect.layers[l] -= eta * lg.scale * grad[l];

    // snapshots are the pre-update iterates: W^(1) then W^(2)
    REQUIRE(result.snapshots.size() == 2);
    for (std::size_t l = 0; l < expect.layers.size(); ++l) {
        CHECK(result.snapshots[0].layers[l] == init.layers[l]);
        double err = (result.snapshots[1].layers[l] - expect.layers[l]).cwiseAbs().maxCoeff();
        CHECK(err <= 1e-12);
    }

    // the step-2 record measures the distance actually travelled
    const SgdStepRecord& step2 = result.record.per_step[1];
    for (std::size_t l = 0; l < expect.layers.size(); ++l)
        CHECK(step2.layer_dist[l] ==
              doctest::Approx((expect.layers[l] - init.layers[l]).norm()).epsilon(1e-9));
}

TEST_CASE("travelled distance obeys the triangle inequality") {
    NetParams init = init_params(128, 8, 3, 11);
    LabeledDataset data = synth_ntk_realizable(20, 8, 3, 12);
    const double eta = 1e-3;

    SgdResult result = run_sgd(init, data, eta, 13);
    double budget = 0.0;
    for (const auto& step : result.record.per_step) {
        double travelled = 0.0;
        for (double d : step.layer_dist) travelled += d * d;
        CHECK(std::sqrt(travelled) <= budget + 1e-9);
        CHECK(step.grad_norm <= 4.0 * std::sqrt(double(128 * init.depth)));
        CHECK(double(step.zero_one) <= 4.0 * step.loss + 1e-12);
        budget += eta * step.grad_norm;
    }
}

TEST_CASE("cumulative_loss_check") {
    NetParams init = init_params(64, 8, 3, 21);
    LabeledDataset data = synth_ntk_realizable(30, 8, 3, 22);
    SgdResult result = run_sgd(init, data, 0.0, 23);

    SUBCASE("the frozen iterate competes with itself at gap zero") {
        std::vector<double> reference;
        for (const auto& step : result.record.per_step) reference.push_back(step.loss);
        CumulativeLossReport report =
            cumulative_loss_check(result.record, reference, init.depth, 1.0);
        CHECK(report.gap == 0.0);
        CHECK(report.pass);
        CHECK(report.slack ==
              doctest::Approx(3.0 * 3 * 1.0 / std::sqrt(60.0) + 0.1).epsilon(1e-12));
    }
    SUBCASE("length mismatch rejected") {
        std::vector<double> reference(5, 0.0);
        CHECK_THROWS_AS(cumulative_loss_check(result.record, reference, 3, 1.0),
                        DataError);
    }
}

TEST_CASE("zero_one_error counts ties as errors") {
    NetParams zeroed = init_params(32, 6, 2, 31);
    zeroed.layers.back().setZero();  // f = 0 everywhere
    LabeledDataset data = synth_ntk_realizable(12, 6, 2, 32);
    CHECK(zero_one_error(zeroed, data) == 1.0);
}

TEST_CASE("online_to_batch_eval") {
    NetParams init = init_params(64, 8, 3, 41);
    LabeledDataset train = synth_ntk_realizable(15, 8, 3, 42);
    LabeledDataset test = synth_ntk_realizable(15, 8, 3, 43);
    SgdResult result = run_sgd(init, train, 1e-3, 44, 3);

    double selected = online_to_batch_eval(result.snapshots, result.selected_params, test,
                                           BatchEvalMode::Selected);
    CHECK(selected == zero_one_error(result.selected_params, test));

    double average = online_to_batch_eval(result.snapshots, result.selected_params, test,
                                          BatchEvalMode::Average);
    CHECK(average >= 0.0);
    CHECK(average <= 1.0);
}

TEST_CASE("selection and snapshots replay deterministically") {
    NetParams init = init_params(48, 6, 3, 51);
    LabeledDataset data = synth_ntk_realizable(25, 6, 3, 52);
    SgdResult a = run_sgd(init, data, 1e-3, 53);
    SgdResult b = run_sgd(init, data, 1e-3, 53);
    CHECK(a.record.selected_index == b.record.selected_index);
    CHECK(a.record.snapshot_steps == b.record.snapshot_steps);
    for (std::size_t l = 0; l < init.layers.size(); ++l)
        CHECK(a.final_params.layers[l] == b.final_params.layers[l]);
    // default cadence ceil(25/20) = 2 plus the forced final snapshot
    CHECK(!a.record.snapshot_steps.empty());
    CHECK(a.record.snapshot_steps.back() <= 25);
}

TEST_CASE("run record CSV") {
    NetParams init = init_params(32, 6, 2, 61);
    LabeledDataset data = synth_ntk_realizable(8, 6, 2, 62);
    SgdResult result = run_sgd(init, data, 1e-3, 63);

    std::string path = (std::filesystem::temp_directory_path() / "run.csv").string();
    save_run_csv(result.record, path);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("step,loss,zero_one", 0) == 0);
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 8);
}
