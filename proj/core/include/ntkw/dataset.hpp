#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace ntkw {

// Raw digit data as loaded from IDX files: pixels scaled to [0,1],
// labels 0-9. Row i of `pixels` is one flattened image.
struct RawDataset {
    Eigen::MatrixXd pixels;
    std::vector<std::uint8_t> labels;
    int rows = 0;
    int cols = 0;
};

struct DatasetMeta {
    std::string source;
    std::uint64_t seed = 0;
    double flip_ratio = 0.0;
};

// Binary-classification dataset on the unit sphere. Every row of `inputs`
// has unit Euclidean norm; labels are exactly +1 or -1.
struct LabeledDataset {
    Eigen::MatrixXd inputs;            // n x d
    std::vector<int> labels;           // +1 / -1
    DatasetMeta meta;

    Eigen::Index n() const { return inputs.rows(); }
    Eigen::Index dim() const { return inputs.cols(); }

    // Throws ArgumentError if a row deviates from unit norm by more than tol
    // or a label is not +/-1.
    void validate(double tol = 1e-12) const;
};

// IDX (big-endian) loader; transparently gunzips when the path ends in ".gz".
RawDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

// Writes pixels/labels back out in IDX format (uncompressed). Loading and
// re-serializing an IDX pair reproduces the original bytes.
void save_idx_images(const RawDataset& raw, const std::string& path);
void save_idx_labels(const RawDataset& raw, const std::string& path);

// Keeps the two requested digit classes, maps class_pos -> +1 and
// class_neg -> -1, subsamples (class-stratified, without replacement) to at
// most n_max examples, and projects every surviving input to the unit sphere.
// Zero-norm inputs are dropped with a warning on stderr.
LabeledDataset binarize_and_normalize(const RawDataset& raw, int class_pos, int class_neg,
                                      Eigen::Index n_max, std::uint64_t seed);

// Negates floor(ratio * n) labels chosen uniformly without replacement.
LabeledDataset flip_labels(const LabeledDataset& data, double ratio, std::uint64_t seed);

// Seeded index set used by flip_labels; exposed for replay in tests.
std::vector<Eigen::Index> flip_index_set(Eigen::Index n, double ratio, std::uint64_t seed);

// Synthetic separable data: n unit-norm inputs uniform on the sphere, labels
// from the sign of a random function in the depth-L NTK RKHS on those points.
// Near-parallel input pairs are resampled; coefficient draws with any margin
// below 1e-6 are redrawn.
LabeledDataset synth_ntk_realizable(Eigen::Index n, Eigen::Index d, int depth,
                                    std::uint64_t seed);

// Internal cache format ("ntkw-dataset v1").
void save_dataset(const LabeledDataset& data, const std::string& path);
LabeledDataset load_dataset(const std::string& path);

// Largest |<x_i, x_j>| over distinct rows; kernel workflows warn when this
// exceeds 1 - 1e-9.
double max_abs_row_correlation(const Eigen::MatrixXd& inputs);

}  // namespace ntkw
