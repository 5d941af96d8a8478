#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "ntkw/dataset.hpp"
#include "ntkw/errors.hpp"

using namespace ntkw;
namespace fs = std::filesystem;

namespace {

const std::string kImages = std::string(NTKW_TESTDATA_DIR) + "/digits-images-idx3-ubyte";
const std::string kLabels = std::string(NTKW_TESTDATA_DIR) + "/digits-labels-idx1-ubyte";

std::string tmp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              std::streamsize(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("IDX loader accepts the digits pair and validates headers") {
    RawDataset raw = load_mnist_idx(kImages, kLabels);
    CHECK(raw.pixels.rows() == 1797);
    CHECK(raw.pixels.cols() == 784);
    CHECK(raw.pixels.minCoeff() >= 0.0);
    CHECK(raw.pixels.maxCoeff() <= 1.0);

    SUBCASE("gz variant decodes to the same data") {
        RawDataset gz = load_mnist_idx(kImages + ".gz", kLabels);
        CHECK(gz.pixels.isApprox(raw.pixels));
    }

    SUBCASE("load then re-serialize reproduces the original bytes") {
        std::string img_out = tmp_path("idx_rt_images");
        std::string lab_out = tmp_path("idx_rt_labels");
        save_idx_images(raw, img_out);
        save_idx_labels(raw, lab_out);
        CHECK(read_bytes(img_out) == read_bytes(kImages));
        CHECK(read_bytes(lab_out) == read_bytes(kLabels));
    }
}

TEST_CASE("IDX loader rejects malformed files") {
    // image magic [0,0,8,3] is required; [0,0,8,1] is a label file
    std::string img = tmp_path("idx_bad_images");
    std::string lab = tmp_path("idx_bad_labels");

    SUBCASE("wrong image magic") {
        write_bytes(img, {0, 0, 8, 1, 0, 0, 0, 0});
        write_bytes(lab, {0, 0, 8, 1, 0, 0, 0, 0});
        CHECK_THROWS_AS(load_mnist_idx(img, lab), DataError);
    }
    SUBCASE("count mismatch: 2 images, 1 label") {
        write_bytes(img, {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 1, 7, 9});
        write_bytes(lab, {0, 0, 8, 1, 0, 0, 0, 1, 3});
        CHECK_THROWS_AS(load_mnist_idx(img, lab), DataError);
    }
    SUBCASE("truncated image data") {
        write_bytes(img, {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 1});
        write_bytes(lab, {0, 0, 8, 1, 0, 0, 0, 2, 3, 8});
        CHECK_THROWS_AS(load_mnist_idx(img, lab), DataError);
    }
}

TEST_CASE("binarize_and_normalize maps 3v8 onto the unit sphere") {
    RawDataset raw = load_mnist_idx(kImages, kLabels);
    LabeledDataset data = binarize_and_normalize(raw, 3, 8, 200, 42);

    CHECK(data.n() <= 200);
    CHECK(data.n() >= 100);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < data.n(); ++i)
        worst = std::max(worst, std::abs(data.inputs.row(i).norm() - 1.0));
    CHECK(worst <= 1e-12);
    CHECK_NOTHROW(data.validate());

    SUBCASE("same seed reproduces the subsample") {
        LabeledDataset again = binarize_and_normalize(raw, 3, 8, 200, 42);
        CHECK(again.inputs.isApprox(data.inputs));
        CHECK(again.labels == data.labels);
    }
    SUBCASE("identical classes rejected") {
        CHECK_THROWS_AS(binarize_and_normalize(raw, 3, 3, 200, 0), ArgumentError);
    }
}

TEST_CASE("normalization keeps the direction") {
    RawDataset raw;
    raw.rows = 1;
    raw.cols = 3;
    raw.pixels.resize(2, 3);
    raw.pixels << 0.8, 0.0, 0.6,   // norm 1 already
                  1.0, 0.0, 0.75;  // class_neg example
    raw.pixels.row(0) *= 2.0;      // norm 2
    raw.labels = {3, 8};
    LabeledDataset data = binarize_and_normalize(raw, 3, 8, 10, 0);
    REQUIRE(data.n() == 2);
    for (Eigen::Index i = 0; i < 2; ++i) {
        Eigen::RowVectorXd orig = raw.pixels.row(i) / raw.pixels.row(i).norm();
        bool found = false;
        for (Eigen::Index j = 0; j < 2; ++j)
            if (data.inputs.row(j).isApprox(orig, 1e-12)) found = true;
        CHECK(found);
    }
}

TEST_CASE("flip_labels") {
    LabeledDataset data = synth_ntk_realizable(100, 5, 2, 7);

    SUBCASE("ratio 0 is the identity") {
        LabeledDataset same = flip_labels(data, 0.0, 3);
        CHECK(same.labels == data.labels);
    }
    SUBCASE("ratio 0.5 on n=100 flips exactly 50") {
        LabeledDataset flipped = flip_labels(data, 0.5, 3);
        int changed = 0;
        for (std::size_t i = 0; i < data.labels.size(); ++i)
            changed += flipped.labels[i] != data.labels[i];
        CHECK(changed == 50);
    }
    SUBCASE("seeded index set replays identically") {
        auto a = flip_index_set(200, 0.1, 99);
        auto b = flip_index_set(200, 0.1, 99);
        CHECK(a.size() == 20);
        CHECK(a == b);
        std::set<Eigen::Index> unique(a.begin(), a.end());
        CHECK(unique.size() == a.size());
    }
    SUBCASE("flipping the same indices twice restores the labels") {
        LabeledDataset once = flip_labels(data, 0.3, 11);
        LabeledDataset twice = flip_labels(once, 0.3, 11);
        CHECK(twice.labels == data.labels);
    }
    SUBCASE("ratio out of range rejected") {
        CHECK_THROWS_AS(flip_labels(data, 0.6, 0), ArgumentError);
        CHECK_THROWS_AS(flip_labels(data, -0.1, 0), ArgumentError);
    }
}

TEST_CASE("synth_ntk_realizable") {
    LabeledDataset data = synth_ntk_realizable(40, 8, 3, 123);
    CHECK(data.n() == 40);
    for (int l : data.labels) CHECK((l == 1 || l == -1));
    for (Eigen::Index i = 0; i < data.n(); ++i)
        CHECK(std::abs(data.inputs.row(i).norm() - 1.0) <= 1e-12);
    CHECK(max_abs_row_correlation(data.inputs) < 1.0 - 1e-9);

    LabeledDataset again = synth_ntk_realizable(40, 8, 3, 123);
    CHECK(again.inputs.isApprox(data.inputs));
    CHECK(again.labels == data.labels);

    CHECK_THROWS_AS(synth_ntk_realizable(1, 8, 3, 0), ArgumentError);
}

TEST_CASE("dataset cache round trip") {
    LabeledDataset data = synth_ntk_realizable(25, 6, 2, 5);
    std::string path = tmp_path("dataset_cache.bin");
    save_dataset(data, path);
    LabeledDataset loaded = load_dataset(path);
    CHECK(loaded.inputs.isApprox(data.inputs, 0.0));
    CHECK(loaded.labels == data.labels);
}
