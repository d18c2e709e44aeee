#pragma once

#include <complex>
#include <span>

#include <Eigen/Dense>

namespace mvh::fft {

using cplx = std::complex<double>;
using CMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// In-place 1-D DFT. Radix-2 when the length is a power of two, direct
/// summation otherwise. The inverse carries the 1/n factor.
void transform(std::span<cplx> data, bool inverse);

/// 2-D DFT over a side x side grid, independently for every column of m.
/// Row index k of m is grid position (k / side, k % side).
void transform2d(CMat& m, int side, bool inverse);

}  // namespace mvh::fft
