#ifndef S2QN_DATAIO_HPP
#define S2QN_DATAIO_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "s2qn/linalg.hpp"

namespace s2qn::dataio {

using s2qn::Matrix;
using s2qn::Vector;

// Binary-classification dataset. Rows are samples; labels live in {-1,+1}.
// Storage is either one dense matrix or per-row sparse entry lists, never both.
struct Dataset {
  Eigen::Index n_features = 0;
  Matrix dense;  // size() x n_features when dense
  std::vector<std::vector<std::pair<int, double>>> sparse_rows;
  Vector labels;

  bool dense_storage() const { return sparse_rows.empty(); }
  Eigen::Index size() const {
    return dense_storage() ? dense.rows()
                           : static_cast<Eigen::Index>(sparse_rows.size());
  }
  double row_dot(Eigen::Index i, const Vector& theta) const;
  // out += coef * x_i
  void row_axpy(Eigen::Index i, double coef, Vector& out) const;
  Vector row(Eigen::Index i) const;
};

struct LibsvmOptions {
  // Feature indices must be strictly increasing; with this set, out-of-order
  // rows are sorted instead of rejected (duplicates still raise).
  bool tolerate_unsorted = false;
};

// LIBSVM text format: "<label> <index>:<value> ...", indices 1-based on disk,
// 0-based in memory. Labels {0,1} or {-1,+1} are both accepted and mapped to
// {-1,+1}. Parse failures carry the 1-based line number.
Dataset read_libsvm(const std::string& path, const LibsvmOptions& opts = {});
Dataset read_libsvm(std::istream& in, const LibsvmOptions& opts = {});

// Shortest round-tripping float representation, so write-then-read is exact.
void write_libsvm(const Dataset& data, const std::string& path);
void write_libsvm(const Dataset& data, std::ostream& out);

// Per-feature max-abs scaling, recorded so it can be undone exactly.
struct Normalization {
  Vector scale;  // original max-abs per feature; 1 where the column was zero
};
Normalization normalize_maxabs(Dataset& data);
void denormalize(Dataset& data, const Normalization& norm);

// Planted-parameter logistic data. Columns are scaled geometrically from 1
// down to 1/kappa; the "orthonormal" profile orthonormalizes the columns
// first so the second-moment matrix is scale^2/size * I exactly.
struct SynthLogisticSpec {
  Eigen::Index n = 100;
  Eigen::Index count = 2000;
  std::uint64_t seed = 1;
  std::string profile = "gaussian";  // gaussian | orthonormal
  double kappa = 1.0;
  double scale = 1.0;
  double theta_scale = 1.0;
};

struct SynthLogistic {
  Dataset data;
  Vector theta_gen;
};

SynthLogistic synth_logistic(const SynthLogisticSpec& spec);

// Tiny parametric-stroke images, 16x16 pixels in [0,1], one image per row.
// Autoencoder-style corpus: targets are the inputs themselves.
Matrix synth_curves_toy(Eigen::Index count, std::uint64_t seed);

// Dense one-hot encoding, rows aligned with the input labels.
Matrix one_hot(const std::vector<int>& labels, int classes);

}  // namespace s2qn::dataio

#endif  // S2QN_DATAIO_HPP
