#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <string>

namespace ntkw::io {

// All binary formats in this project share the same conventions: an ASCII
// header line "ntkw-<kind> v1\n", decimal integer fields each on their own
// line, then raw row-major 64-bit little-endian floats.

void write_header(std::ofstream& out, const std::string& kind);
void expect_header(std::ifstream& in, const std::string& kind, const std::string& path);

void write_u64(std::ofstream& out, std::uint64_t v);
std::uint64_t read_u64(std::ifstream& in, const std::string& path);

void write_matrix(std::ofstream& out, const Eigen::MatrixXd& mat);
void read_matrix(std::ifstream& in, Eigen::MatrixXd& mat, Eigen::Index rows,
                 Eigen::Index cols, const std::string& path);

std::ofstream open_out(const std::string& path);
std::ifstream open_in(const std::string& path);

}  // namespace ntkw::io
