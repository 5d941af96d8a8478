// ntkw: NTK matrices, linearized-model generalization bounds, online SGD
// training and structural-lemma verification for wide ReLU networks.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "ntkw/bounds.hpp"
#include "ntkw/dataset.hpp"
#include "ntkw/errors.hpp"
#include "ntkw/network.hpp"
#include "ntkw/ntk.hpp"
#include "ntkw/ntrf.hpp"
#include "ntkw/rng.hpp"
#include "ntkw/sgd.hpp"
#include "ntkw/verify.hpp"

using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitArgs = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::uint64_t file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::uint64_t h = 1469598103934665603ULL;
    char c;
    while (in.get(c)) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

void write_manifest(const std::string& out_path, const json& config,
                    const std::vector<std::string>& artifacts) {
    json manifest;
    manifest["config"] = config;
    json files = json::object();
    for (const auto& path : artifacts)
        files[path] = file_checksum(path);
    manifest["artifacts"] = files;
    std::ofstream out(out_path);
    out << manifest.dump(2) << "\n";
}

std::string data_dir() {
    const char* env = std::getenv("NTKW_DATA_DIR");
    return env ? env : ".";
}

// Shared dataset selection: either --synth "n=...,d=..." or --data idx paths.
struct DataFlags {
    std::string synth_spec;
    std::string data_kind;
    std::string images, labels_path;
    std::string cache;
    std::vector<int> classes{3, 8};
    Eigen::Index n = 200;
    int depth = 3;
    std::uint64_t seed = 0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--synth", synth_spec, "synthetic data spec, e.g. n=50,d=10");
        cmd->add_option("--data", data_kind, "named dataset kind (mnist)");
        cmd->add_option("--images", images, "IDX image file (defaults under NTKW_DATA_DIR)");
        cmd->add_option("--labels", labels_path, "IDX label file");
        cmd->add_option("--cache", cache, "ntkw-dataset cache file");
        cmd->add_option("--classes", classes, "positive,negative digit classes")->expected(2)->delimiter(',');
        cmd->add_option("--n", n, "max examples");
    }

    ntkw::LabeledDataset load(int kernel_depth) const {
        if (!cache.empty()) return ntkw::load_dataset(cache);
        if (!synth_spec.empty()) {
            Eigen::Index sn = 0, sd = 0;
            std::stringstream ss(synth_spec);
            std::string item;
            while (std::getline(ss, item, ',')) {
                auto eq = item.find('=');
                if (eq == std::string::npos)
                    throw ntkw::ArgumentError("bad --synth item: " + item);
                std::string key = item.substr(0, eq);
                long value = std::stol(item.substr(eq + 1));
                if (key == "n") sn = value;
                else if (key == "d") sd = value;
                else throw ntkw::ArgumentError("unknown --synth key: " + key);
            }
            return ntkw::synth_ntk_realizable(sn, sd, kernel_depth, seed);
        }
        if (data_kind == "mnist" || !images.empty()) {
            std::string img = images.empty() ? data_dir() + "/train-images-idx3-ubyte" : images;
            std::string lab =
                labels_path.empty() ? data_dir() + "/train-labels-idx1-ubyte" : labels_path;
            ntkw::RawDataset raw = ntkw::load_mnist_idx(img, lab);
            return ntkw::binarize_and_normalize(raw, classes[0], classes[1], n, seed);
        }
        throw ntkw::ArgumentError("no dataset selected; use --synth, --data, or --cache");
    }
};

int run(int argc, char** argv) {
    CLI::App app{"NTK matrices, generalization bounds and SGD experiments for wide ReLU nets"};
    app.set_config("--config", "", "flat key=value config file; flags override");
    app.require_subcommand(1);

    std::uint64_t global_seed = 0;
    int threads = 0;
    app.add_option("--seed", global_seed, "global seed; sub-streams derive from it");
    app.add_option("--threads", threads, "worker thread cap (0 = hardware default)");

    // ---- kernel ----
    auto* kernel_cmd = app.add_subcommand("kernel", "compute the NTK matrix of a dataset");
    DataFlags kernel_data;
    kernel_data.attach(kernel_cmd);
    int kernel_depth = 3;
    std::string kernel_out = "kernel.bin", kernel_summary;
    bool kernel_sections = false;
    kernel_cmd->add_option("--depth", kernel_depth, "network depth L (>= 2)");
    kernel_cmd->add_option("--out", kernel_out, "kernel output file");
    kernel_cmd->add_option("--summary", kernel_summary, "summary JSON path (default <out>.json)");
    kernel_cmd->add_flag("--with-sections", kernel_sections, "also store Sigma and ThetaTilde");

    // ---- bound ----
    auto* bound_cmd = app.add_subcommand("bound", "evaluate generalization-bound terms");
    auto* bound_ntrf = bound_cmd->add_subcommand("ntrf", "linearized-model bound first term");
    auto* bound_kernel = bound_cmd->add_subcommand("kernel", "kernel-form bound");
    auto* bound_flip = bound_cmd->add_subcommand("flip-sweep", "kernel bound vs label-flip ratio");
    bound_cmd->require_subcommand(1);

    DataFlags ntrf_data;
    ntrf_data.attach(bound_ntrf);
    Eigen::Index ntrf_m = 2048;
    int ntrf_depth = 5, ntrf_epochs = 50, ntrf_batch = 32;
    double ntrf_R = 10.0, ntrf_lr = 0.0;
    std::string ntrf_out = "ntrf_bound.csv";
    bound_ntrf->add_option("--m", ntrf_m, "network width");
    bound_ntrf->add_option("--depth", ntrf_depth, "network depth");
    bound_ntrf->add_option("--R", ntrf_R, "NTRF ball radius");
    bound_ntrf->add_option("--epochs", ntrf_epochs, "projected-SGD epochs");
    bound_ntrf->add_option("--batch", ntrf_batch, "mini-batch size");
    bound_ntrf->add_option("--lr", ntrf_lr, "step size (0 = 0.5 R / (m sqrt n))");
    bound_ntrf->add_option("--out", ntrf_out, "CSV output");

    DataFlags bk_data;
    bk_data.attach(bound_kernel);
    std::string bk_kernel_file, bk_out = "kernel_bound.csv";
    int bk_depth = 5;
    bound_kernel->add_option("--kernel", bk_kernel_file, "precomputed ntkw-kernel file");
    bound_kernel->add_option("--depth", bk_depth, "depth when computing the kernel here");
    bound_kernel->add_option("--out", bk_out, "CSV output");

    DataFlags flip_data;
    flip_data.attach(bound_flip);
    std::vector<double> flip_ratios{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
    int flip_depth = 5, flip_seeds = 5;
    std::string flip_out = "flip_sweep.csv";
    bound_flip->add_option("--ratios", flip_ratios, "flip ratios")->delimiter(',');
    bound_flip->add_option("--depth", flip_depth, "network depth");
    bound_flip->add_option("--seeds", flip_seeds, "seeds per ratio");
    bound_flip->add_option("--out", flip_out, "CSV output");

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "one-pass online SGD (random-iterate output)");
    DataFlags train_data;
    train_data.attach(train_cmd);
    Eigen::Index train_m = 2048;
    int train_depth = 3;
    double train_kappa = 0.1, train_R = 10.0, train_eta = 0.0;
    std::string train_out = "train_run.csv", train_snapshot_prefix;
    train_cmd->add_option("--m", train_m, "network width");
    train_cmd->add_option("--depth", train_depth, "network depth");
    train_cmd->add_option("--kappa", train_kappa, "step-size constant in eta = kappa R/(m sqrt n)");
    train_cmd->add_option("--R", train_R, "radius scale in the step size");
    train_cmd->add_option("--eta", train_eta, "explicit step size (overrides kappa)");
    train_cmd->add_option("--out", train_out, "per-step CSV output");
    train_cmd->add_option("--snapshot-prefix", train_snapshot_prefix,
                          "write parameter snapshots with this path prefix");

    // ---- verify ----
    auto* verify_cmd = app.add_subcommand("verify", "empirical structural-lemma checks");
    std::string lemma;
    ntkw::VerifyConfig vcfg;
    verify_cmd->add_option("--lemma", lemma,
                           "linearization|convexity|norms|gradients|patterns|gram")->required();
    verify_cmd->add_option("--m", vcfg.m, "network width");
    verify_cmd->add_option("--depth", vcfg.depth, "network depth");
    verify_cmd->add_option("--n", vcfg.n, "inputs per trial");
    verify_cmd->add_option("--seeds", vcfg.seeds, "independent trials");

    // ---- data ----
    auto* data_cmd = app.add_subcommand("data", "dataset import and inspection");
    auto* data_fetch = data_cmd->add_subcommand("fetch", "import IDX files into the cache format");
    auto* data_inspect = data_cmd->add_subcommand("inspect", "print dataset statistics");
    data_cmd->require_subcommand(1);

    DataFlags fetch_data;
    fetch_data.attach(data_fetch);
    std::string fetch_out = "dataset.bin";
    data_fetch->add_option("--out", fetch_out, "cache output path");

    std::string inspect_path;
    data_inspect->add_option("path", inspect_path, "ntkw-dataset cache file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitArgs;
    }

    if (threads > 0) Eigen::setNbThreads(threads);

    auto resolved_config = [&](const std::string& subcommand) {
        json cfg;
        cfg["subcommand"] = subcommand;
        cfg["seed"] = global_seed;
        return cfg;
    };

    if (*kernel_cmd) {
        kernel_data.seed = ntkw::mix_seed(global_seed, "data");
        if (kernel_depth < 2) throw ntkw::ArgumentError("--depth must be >= 2");
        ntkw::LabeledDataset data = kernel_data.load(kernel_depth);
        data.validate(1e-9);
        ntkw::KernelStack stack = ntkw::kernel_stack(data.inputs, kernel_depth);
        ntkw::save_kernel(stack, kernel_out, kernel_sections);

        // cheap min-eigenvalue estimate plus the diagonal identities
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(stack.theta,
                                                          Eigen::EigenvaluesOnly);
        double expect_diag = (double(kernel_depth) + 1.0) / 2.0;
        json summary;
        summary["n"] = stack.n;
        summary["depth"] = stack.depth;
        summary["diag_max_abs_error"] =
            (stack.theta.diagonal().array() - expect_diag).abs().maxCoeff();
        summary["min_eigenvalue"] = es.eigenvalues().minCoeff();
        summary["max_input_correlation"] = ntkw::max_abs_row_correlation(data.inputs);
        std::string summary_path = kernel_summary.empty() ? kernel_out + ".json" : kernel_summary;
        std::ofstream(summary_path) << summary.dump(2) << "\n";

        json cfg = resolved_config("kernel");
        cfg["depth"] = kernel_depth;
        cfg["data_seed"] = kernel_data.seed;
        write_manifest(kernel_out + ".manifest.json", cfg, {kernel_out, summary_path});
        return kExitOk;
    }

    if (*bound_ntrf) {
        ntrf_data.seed = ntkw::mix_seed(global_seed, "data");
        ntkw::LabeledDataset data = ntrf_data.load(ntrf_depth);
        data.validate(1e-9);
        auto anchor = std::make_shared<const ntkw::NetParams>(
            ntkw::init_params(ntrf_m, data.dim(), ntrf_depth,
                              ntkw::mix_seed(global_seed, "init")));
        ntkw::NtrfFitOptions opts;
        opts.epochs = ntrf_epochs;
        opts.batch = ntrf_batch;
        opts.lr = ntrf_lr;
        opts.seed = ntkw::mix_seed(global_seed, "ntrf");
        ntkw::BoundReport report = ntkw::ntrf_bound_first_term(anchor, data, ntrf_R, opts);

        std::ofstream out(ntrf_out);
        out << "m,R,seed,first_term,term_LR_sqrt_n,term_conf,lr,epochs\n"
            << ntrf_m << "," << ntrf_R << "," << global_seed << "," << report.first_term << ","
            << report.term_LR_sqrt_n << "," << report.term_conf << ","
            << (ntrf_lr > 0 ? ntrf_lr : 0.5 * ntrf_R / (double(ntrf_m) * std::sqrt(double(data.n()))))
            << "," << ntrf_epochs << "\n";
        out.close();
        std::cout << "first_term " << report.first_term << "\n";
        write_manifest(ntrf_out + ".manifest.json", resolved_config("bound ntrf"), {ntrf_out});
        return kExitOk;
    }

    if (*bound_kernel) {
        bk_data.seed = ntkw::mix_seed(global_seed, "data");
        ntkw::LabeledDataset data = bk_data.load(bk_depth);
        data.validate(1e-9);
        ntkw::KernelStack stack;
        if (!bk_kernel_file.empty()) {
            stack = ntkw::load_kernel(bk_kernel_file);
            if (stack.n != data.n())
                throw ntkw::DataError("kernel size does not match the dataset");
        } else {
            stack = ntkw::kernel_stack(data.inputs, bk_depth);
        }
        ntkw::BoundReport report = ntkw::kernel_bound(stack, data.labels);
        std::ofstream out(bk_out);
        out << "n,depth,first_term,kernel_quantity,jitter\n"
            << report.hyper.n << "," << report.hyper.depth << "," << report.first_term << ","
            << report.kernel_quantity << "," << report.jitter_used << "\n";
        out.close();
        std::cout << "first_term " << report.first_term << " kernel_quantity "
                  << report.kernel_quantity << "\n";
        write_manifest(bk_out + ".manifest.json", resolved_config("bound kernel"), {bk_out});
        return kExitOk;
    }

    if (*bound_flip) {
        flip_data.seed = ntkw::mix_seed(global_seed, "data");
        ntkw::LabeledDataset data = flip_data.load(flip_depth);
        data.validate(1e-9);
        ntkw::FlipSweepTable table = ntkw::flip_sweep(data, flip_depth, flip_ratios, flip_seeds,
                                                      ntkw::mix_seed(global_seed, "flips"));
        ntkw::save_flip_sweep_csv(table, flip_out);
        for (std::size_t k = 0; k < table.ratios.size(); ++k)
            std::cout << "ratio " << table.ratios[k] << " median " << table.medians[k] << "\n";
        write_manifest(flip_out + ".manifest.json", resolved_config("bound flip-sweep"),
                       {flip_out});
        return kExitOk;
    }

    if (*train_cmd) {
        train_data.seed = ntkw::mix_seed(global_seed, "data");
        ntkw::LabeledDataset data = train_data.load(train_depth);
        data.validate(1e-9);
        ntkw::NetParams init = ntkw::init_params(train_m, data.dim(), train_depth,
                                                 ntkw::mix_seed(global_seed, "init"));
        double eta = train_eta > 0.0
                         ? train_eta
                         : train_kappa * train_R / (double(train_m) * std::sqrt(double(data.n())));
        ntkw::SgdResult result =
            ntkw::run_sgd(init, data, eta, ntkw::mix_seed(global_seed, "sgd"));
        ntkw::save_run_csv(result.record, train_out);

        std::vector<std::string> artifacts{train_out};
        if (!train_snapshot_prefix.empty()) {
            for (std::size_t k = 0; k < result.snapshots.size(); ++k) {
                std::string path = train_snapshot_prefix + "_step" +
                                   std::to_string(result.record.snapshot_steps[k]) + ".bin";
                ntkw::save_params(result.snapshots[k], path);
                artifacts.push_back(path);
            }
            std::string sel = train_snapshot_prefix + "_selected.bin";
            ntkw::save_params(result.selected_params, sel);
            artifacts.push_back(sel);
        }
        double train_err = ntkw::zero_one_error(result.selected_params, data);
        double avg_err = ntkw::online_to_batch_eval(result.snapshots, result.selected_params,
                                                    data, ntkw::BatchEvalMode::Average);
        std::cout << "eta " << eta << " selected_iterate " << result.record.selected_index
                  << " selected_train01 " << train_err << " average_train01 " << avg_err << "\n";
        json cfg = resolved_config("train");
        cfg["eta"] = eta;
        cfg["selected_index"] = result.record.selected_index;
        write_manifest(train_out + ".manifest.json", cfg, artifacts);
        return kExitOk;
    }

    if (*verify_cmd) {
        vcfg.base_seed = ntkw::mix_seed(global_seed, "verify");
        ntkw::LemmaCheckResult result;
        if (lemma == "linearization") result = ntkw::check_linearization(vcfg);
        else if (lemma == "convexity") result = ntkw::check_almost_convexity(vcfg);
        else if (lemma == "norms") result = ntkw::check_hidden_norms(vcfg);
        else if (lemma == "gradients") result = ntkw::check_gradient_norms(vcfg);
        else if (lemma == "patterns") result = ntkw::check_pattern_stability(vcfg);
        else if (lemma == "gram") result = ntkw::check_gram_convergence(vcfg);
        else throw ntkw::ArgumentError("unknown lemma id: " + lemma);
        std::cout << ntkw::to_ndjson(result) << "\n";
        return result.verdict == ntkw::Verdict::Fail ? kExitVerifyFail : kExitOk;
    }

    if (*data_fetch) {
        fetch_data.seed = ntkw::mix_seed(global_seed, "data");
        ntkw::LabeledDataset data = fetch_data.load(fetch_data.depth);
        ntkw::save_dataset(data, fetch_out);
        std::cout << "wrote " << fetch_out << " (n=" << data.n() << ", d=" << data.dim() << ")\n";
        write_manifest(fetch_out + ".manifest.json", resolved_config("data fetch"), {fetch_out});
        return kExitOk;
    }

    if (*data_inspect) {
        ntkw::LabeledDataset data = ntkw::load_dataset(inspect_path);
        int pos = 0;
        for (int l : data.labels) pos += l > 0;
        std::cout << "n " << data.n() << " d " << data.dim() << " positives " << pos
                  << " max_correlation " << ntkw::max_abs_row_correlation(data.inputs) << "\n";
        return kExitOk;
    }

    return kExitArgs;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ntkw::ArgumentError& e) {
        std::cerr << "argument error: " << e.what() << "\n";
        return kExitArgs;
    } catch (const ntkw::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const ntkw::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}
