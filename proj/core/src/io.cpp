#include "ntkw/io.hpp"

#include <bit>
#include <vector>

#include "ntkw/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

namespace ntkw::io {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    return in;
}

void write_header(std::ofstream& out, const std::string& kind) {
    out << "ntkw-" << kind << " v1\n";
}

void expect_header(std::ifstream& in, const std::string& kind, const std::string& path) {
    std::string line;
    if (!std::getline(in, line) || line != "ntkw-" + kind + " v1")
        throw DataError(path + ": not a ntkw-" + kind + " v1 file");
}

void write_u64(std::ofstream& out, std::uint64_t v) { out << v << "\n"; }

std::uint64_t read_u64(std::ifstream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": truncated header");
    try {
        return std::stoull(line);
    } catch (const std::exception&) {
        throw DataError(path + ": bad integer field '" + line + "'");
    }
}

void write_matrix(std::ofstream& out, const Eigen::MatrixXd& mat) {
    // row-major on disk
    for (Eigen::Index i = 0; i < mat.rows(); ++i) {
        std::vector<double> row(mat.cols());
        for (Eigen::Index j = 0; j < mat.cols(); ++j) row[j] = mat(i, j);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
}

void read_matrix(std::ifstream& in, Eigen::MatrixXd& mat, Eigen::Index rows,
                 Eigen::Index cols, const std::string& path) {
    mat.resize(rows, cols);
    std::vector<double> row(static_cast<std::size_t>(cols));
    for (Eigen::Index i = 0; i < rows; ++i) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(double)));
        if (!in) throw DataError(path + ": truncated matrix data");
        for (Eigen::Index j = 0; j < cols; ++j) mat(i, j) = row[j];
    }
}

}  // namespace ntkw::io
