#include "ntkw/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include "ntkw/errors.hpp"
#include "ntkw/io.hpp"
#include "ntkw/ntk.hpp"
#include "ntkw/rng.hpp"

namespace ntkw {

namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Whole-file read, transparently gunzipping *.gz.
std::vector<std::uint8_t> read_all_bytes(const std::string& path) {
    if (ends_with(path, ".gz")) {
        gzFile gz = gzopen(path.c_str(), "rb");
        if (!gz) throw DataError("cannot open: " + path);
        std::vector<std::uint8_t> data;
        std::uint8_t buf[1 << 16];
        int got;
        while ((got = gzread(gz, buf, sizeof(buf))) > 0)
            data.insert(data.end(), buf, buf + got);
        bool bad = got < 0;
        gzclose(gz);
        if (bad) throw DataError("gzip decode failed: " + path);
        return data;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off,
                        const std::string& path) {
    if (off + 4 > b.size()) throw DataError(path + ": truncated IDX header");
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    std::uint8_t b[4] = {std::uint8_t(v >> 24), std::uint8_t(v >> 16),
                         std::uint8_t(v >> 8), std::uint8_t(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

RawDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    auto img = read_all_bytes(images_path);
    auto lab = read_all_bytes(labels_path);

    std::uint32_t img_magic = read_be32(img, 0, images_path);
    if (img_magic != kImageMagic)
        throw DataError(images_path + ": bad IDX image magic " + std::to_string(img_magic));
    std::uint32_t lab_magic = read_be32(lab, 0, labels_path);
    if (lab_magic != kLabelMagic)
        throw DataError(labels_path + ": bad IDX label magic " + std::to_string(lab_magic));

    std::uint32_t n_img = read_be32(img, 4, images_path);
    std::uint32_t rows = read_be32(img, 8, images_path);
    std::uint32_t cols = read_be32(img, 12, images_path);
    std::uint32_t n_lab = read_be32(lab, 4, labels_path);
    if (n_img != n_lab)
        throw DataError("image/label count mismatch: " + std::to_string(n_img) + " vs " +
                        std::to_string(n_lab));

    std::size_t pix = std::size_t(rows) * cols;
    if (img.size() < 16 + std::size_t(n_img) * pix)
        throw DataError(images_path + ": truncated image data");
    if (lab.size() < 8 + n_lab)
        throw DataError(labels_path + ": truncated label data");

    RawDataset raw;
    raw.rows = int(rows);
    raw.cols = int(cols);
    raw.pixels.resize(n_img, Eigen::Index(pix));
    raw.labels.resize(n_img);
    for (std::uint32_t i = 0; i < n_img; ++i) {
        const std::uint8_t* p = img.data() + 16 + std::size_t(i) * pix;
        for (std::size_t j = 0; j < pix; ++j)
            raw.pixels(i, Eigen::Index(j)) = double(p[j]) / 255.0;
        raw.labels[i] = lab[8 + i];
    }
    return raw;
}

void save_idx_images(const RawDataset& raw, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    write_be32(out, kImageMagic);
    write_be32(out, std::uint32_t(raw.pixels.rows()));
    write_be32(out, std::uint32_t(raw.rows));
    write_be32(out, std::uint32_t(raw.cols));
    for (Eigen::Index i = 0; i < raw.pixels.rows(); ++i)
        for (Eigen::Index j = 0; j < raw.pixels.cols(); ++j) {
            auto byte = std::uint8_t(std::llround(raw.pixels(i, j) * 255.0));
            out.put(char(byte));
        }
}

void save_idx_labels(const RawDataset& raw, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    write_be32(out, kLabelMagic);
    write_be32(out, std::uint32_t(raw.labels.size()));
    for (std::uint8_t l : raw.labels) out.put(char(l));
}

void LabeledDataset::validate(double tol) const {
    if (n() < 1 || dim() < 2) throw ArgumentError("dataset needs n >= 1, d >= 2");
    if (Eigen::Index(labels.size()) != n()) throw ArgumentError("label count mismatch");
    for (Eigen::Index i = 0; i < n(); ++i) {
        if (std::abs(inputs.row(i).norm() - 1.0) > tol)
            throw ArgumentError("row " + std::to_string(i) + " is not unit-norm");
        if (labels[i] != 1 && labels[i] != -1)
            throw ArgumentError("label " + std::to_string(i) + " is not +/-1");
    }
}

LabeledDataset binarize_and_normalize(const RawDataset& raw, int class_pos, int class_neg,
                                      Eigen::Index n_max, std::uint64_t seed) {
    if (class_pos == class_neg) throw ArgumentError("class_pos must differ from class_neg");

    std::vector<Eigen::Index> pos_idx, neg_idx;
    for (Eigen::Index i = 0; i < raw.pixels.rows(); ++i) {
        int l = raw.labels[std::size_t(i)];
        if (l != class_pos && l != class_neg) continue;
        if (raw.pixels.row(i).norm() == 0.0) {
            std::cerr << "warning: dropping zero-norm input at index " << i << "\n";
            continue;
        }
        (l == class_pos ? pos_idx : neg_idx).push_back(i);
    }
    if (pos_idx.empty() || neg_idx.empty())
        throw DataError("requested digit classes not both present");

    // Class-stratified subsample without replacement.
    auto rng = make_rng(seed, "subsample");
    std::shuffle(pos_idx.begin(), pos_idx.end(), rng);
    std::shuffle(neg_idx.begin(), neg_idx.end(), rng);
    Eigen::Index total = Eigen::Index(pos_idx.size() + neg_idx.size());
    Eigen::Index keep = std::min(n_max, total);
    if (keep < 2) throw DataError("fewer than 2 surviving examples");
    Eigen::Index keep_pos = std::min<Eigen::Index>(
        Eigen::Index(pos_idx.size()),
        Eigen::Index(std::llround(double(keep) * double(pos_idx.size()) / double(total))));
    keep_pos = std::max<Eigen::Index>(1, std::min(keep_pos, keep - 1));
    Eigen::Index keep_neg = std::min<Eigen::Index>(Eigen::Index(neg_idx.size()), keep - keep_pos);

    std::vector<std::pair<Eigen::Index, int>> chosen;
    for (Eigen::Index k = 0; k < keep_pos; ++k) chosen.emplace_back(pos_idx[std::size_t(k)], +1);
    for (Eigen::Index k = 0; k < keep_neg; ++k) chosen.emplace_back(neg_idx[std::size_t(k)], -1);
    std::sort(chosen.begin(), chosen.end());  // stable order independent of class split

    LabeledDataset data;
    data.inputs.resize(Eigen::Index(chosen.size()), raw.pixels.cols());
    data.labels.reserve(chosen.size());
    for (std::size_t k = 0; k < chosen.size(); ++k) {
        Eigen::RowVectorXd row = raw.pixels.row(chosen[k].first);
        data.inputs.row(Eigen::Index(k)) = row / row.norm();
        data.labels.push_back(chosen[k].second);
    }
    data.meta.source = "idx:" + std::to_string(class_pos) + "v" + std::to_string(class_neg);
    data.meta.seed = seed;
    return data;
}

std::vector<Eigen::Index> flip_index_set(Eigen::Index n, double ratio, std::uint64_t seed) {
    if (ratio < 0.0 || ratio > 0.5) throw ArgumentError("flip ratio must be in [0, 0.5]");
    auto count = Eigen::Index(std::floor(ratio * double(n)));
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index(0));
    auto rng = make_rng(seed, "flips");
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::size_t(count));
    std::sort(idx.begin(), idx.end());
    return idx;
}

LabeledDataset flip_labels(const LabeledDataset& data, double ratio, std::uint64_t seed) {
    LabeledDataset out = data;
    for (Eigen::Index i : flip_index_set(data.n(), ratio, seed))
        out.labels[std::size_t(i)] = -out.labels[std::size_t(i)];
    out.meta.flip_ratio = ratio;
    out.meta.seed = seed;
    return out;
}

LabeledDataset synth_ntk_realizable(Eigen::Index n, Eigen::Index d, int depth,
                                    std::uint64_t seed) {
    if (n < 2 || d < 2) throw ArgumentError("synth needs n >= 2, d >= 2");

    auto rng = make_rng(seed, "synth");
    std::normal_distribution<double> gauss(0.0, 1.0);

    Eigen::MatrixXd inputs(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (;;) {
            Eigen::RowVectorXd v(d);
            for (Eigen::Index j = 0; j < d; ++j) v(j) = gauss(rng);
            double norm = v.norm();
            if (norm < 1e-12) continue;
            v /= norm;
            // Parallel rows make Theta singular; resample.
            bool parallel = false;
            for (Eigen::Index k = 0; k < i; ++k)
                if (std::abs(v.dot(inputs.row(k))) > 1.0 - 1e-9) { parallel = true; break; }
            if (parallel) continue;
            inputs.row(i) = v;
            break;
        }
    }

    KernelStack stack = kernel_stack(inputs, depth);
    Eigen::VectorXd margins(n);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        Eigen::VectorXd alpha(n);
        for (Eigen::Index j = 0; j < n; ++j) alpha(j) = gauss(rng);
        margins = stack.theta * alpha;
        if (margins.cwiseAbs().minCoeff() >= 1e-6) break;
    }

    LabeledDataset data;
    data.inputs = std::move(inputs);
    data.labels.reserve(std::size_t(n));
    for (Eigen::Index i = 0; i < n; ++i) data.labels.push_back(margins(i) > 0 ? 1 : -1);
    data.meta.source = "synth-ntk-L" + std::to_string(depth);
    data.meta.seed = seed;
    return data;
}

void save_dataset(const LabeledDataset& data, const std::string& path) {
    auto out = io::open_out(path);
    io::write_header(out, "dataset");
    io::write_u64(out, std::uint64_t(data.n()));
    io::write_u64(out, std::uint64_t(data.dim()));
    io::write_matrix(out, data.inputs);
    for (int l : data.labels) out.put(char(std::int8_t(l)));
}

LabeledDataset load_dataset(const std::string& path) {
    auto in = io::open_in(path);
    io::expect_header(in, "dataset", path);
    auto n = Eigen::Index(io::read_u64(in, path));
    auto d = Eigen::Index(io::read_u64(in, path));
    LabeledDataset data;
    io::read_matrix(in, data.inputs, n, d, path);
    data.labels.resize(std::size_t(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        char c;
        if (!in.get(c)) throw DataError(path + ": truncated labels");
        data.labels[std::size_t(i)] = int(std::int8_t(c));
    }
    data.meta.source = "cache:" + path;
    return data;
}

double max_abs_row_correlation(const Eigen::MatrixXd& inputs) {
    double best = 0.0;
    for (Eigen::Index i = 0; i < inputs.rows(); ++i)
        for (Eigen::Index j = i + 1; j < inputs.rows(); ++j)
            best = std::max(best, std::abs(inputs.row(i).dot(inputs.row(j))));
    return best;
}

}  // namespace ntkw
