#include "s2qn/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "s2qn/rng.hpp"

namespace s2qn::dataio {

double Dataset::row_dot(Eigen::Index i, const Vector& theta) const {
  if (theta.size() != n_features) {
    throw DimensionMismatch("Dataset::row_dot: theta length mismatch");
  }
  if (dense_storage()) {
    return dense.row(i).dot(theta);
  }
  double acc = 0.0;
  for (const auto& [j, v] : sparse_rows[static_cast<std::size_t>(i)]) {
    acc += v * theta(j);
  }
  return acc;
}

void Dataset::row_axpy(Eigen::Index i, double coef, Vector& out) const {
  if (out.size() != n_features) {
    throw DimensionMismatch("Dataset::row_axpy: output length mismatch");
  }
  if (dense_storage()) {
    out.noalias() += coef * dense.row(i).transpose();
    return;
  }
  for (const auto& [j, v] : sparse_rows[static_cast<std::size_t>(i)]) {
    out(j) += coef * v;
  }
}

Vector Dataset::row(Eigen::Index i) const {
  if (dense_storage()) {
    return dense.row(i).transpose();
  }
  Vector x = Vector::Zero(n_features);
  for (const auto& [j, v] : sparse_rows[static_cast<std::size_t>(i)]) {
    x(j) = v;
  }
  return x;
}

namespace {

double parse_double(const std::string_view token, long line) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  // from_chars rejects an explicit leading plus, but "+1" labels are standard
  // in libsvm-format distributions.
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ParseError("bad numeric token '" + std::string(token) + "'", line);
  }
  return value;
}

long parse_index(const std::string_view token, long line) {
  long value = 0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ParseError("bad index token '" + std::string(token) + "'", line);
  }
  return value;
}

// Shortest representation that round-trips exactly.
std::string format_double(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

Dataset read_libsvm(std::istream& in, const LibsvmOptions& opts) {
  Dataset data;
  std::vector<double> raw_labels;
  long line_no = 0;
  int max_index = -1;
  std::string line;

  while (std::getline(in, line)) {
    ++line_no;
    // Strip comments and blank lines.
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    std::istringstream fields(line);
    std::string tok;
    if (!(fields >> tok)) continue;

    raw_labels.push_back(parse_double(tok, line_no));
    std::vector<std::pair<int, double>> row;
    while (fields >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) {
        throw ParseError("expected index:value, got '" + tok + "'", line_no);
      }
      const long idx1 = parse_index(std::string_view(tok).substr(0, colon), line_no);
      const double val = parse_double(std::string_view(tok).substr(colon + 1), line_no);
      if (idx1 < 1) {
        throw ParseError("feature index must be >= 1", line_no);
      }
      row.emplace_back(static_cast<int>(idx1 - 1), val);
    }
    const bool sorted = std::is_sorted(
        row.begin(), row.end(),
        [](const auto& a, const auto& b) { return a.first < b.first; });
    if (!sorted) {
      if (!opts.tolerate_unsorted) {
        throw IndexOrderError("feature indices not increasing at line " +
                              std::to_string(line_no));
      }
      std::stable_sort(row.begin(), row.end(), [](const auto& a, const auto& b) {
        return a.first < b.first;
      });
    }
    for (std::size_t t = 1; t < row.size(); ++t) {
      if (row[t].first == row[t - 1].first) {
        throw IndexOrderError("duplicate feature index " +
                              std::to_string(row[t].first + 1) + " at line " +
                              std::to_string(line_no));
      }
    }
    if (!row.empty()) {
      max_index = std::max(max_index, row.back().first);
    }
    data.sparse_rows.push_back(std::move(row));
  }

  data.n_features = max_index + 1;
  data.labels.resize(static_cast<Eigen::Index>(raw_labels.size()));

  // Accept {0,1} or {-1,+1}, map to {-1,+1}.
  std::set<double> distinct(raw_labels.begin(), raw_labels.end());
  for (double v : distinct) {
    if (v != 0.0 && v != 1.0 && v != -1.0) {
      throw ParseError("label " + format_double(v) + " is not in {0,1} or {-1,+1}", 0);
    }
  }
  const bool zero_one = distinct.count(0.0) > 0;
  if (zero_one && distinct.count(-1.0) > 0) {
    throw ParseError("labels mix {0,1} and {-1,+1} conventions", 0);
  }
  for (std::size_t i = 0; i < raw_labels.size(); ++i) {
    const double v = raw_labels[i];
    data.labels(static_cast<Eigen::Index>(i)) = zero_one ? (v == 0.0 ? -1.0 : 1.0) : v;
  }
  return data;
}

Dataset read_libsvm(const std::string& path, const LibsvmOptions& opts) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open " + path);
  }
  return read_libsvm(in, opts);
}

void write_libsvm(const Dataset& data, std::ostream& out) {
  const Eigen::Index count = data.size();
  for (Eigen::Index i = 0; i < count; ++i) {
    out << (data.labels(i) > 0 ? "+1" : "-1");
    if (data.dense_storage()) {
      for (Eigen::Index j = 0; j < data.n_features; ++j) {
        const double v = data.dense(i, j);
        if (v != 0.0) {
          out << ' ' << (j + 1) << ':' << format_double(v);
        }
      }
    } else {
      for (const auto& [j, v] : data.sparse_rows[static_cast<std::size_t>(i)]) {
        out << ' ' << (j + 1) << ':' << format_double(v);
      }
    }
    out << '\n';
  }
}

void write_libsvm(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot open " + path + " for writing");
  }
  write_libsvm(data, out);
}

Normalization normalize_maxabs(Dataset& data) {
  Normalization norm;
  norm.scale = Vector::Ones(data.n_features);
  for (Eigen::Index j = 0; j < data.n_features; ++j) {
    double maxabs = 0.0;
    if (data.dense_storage()) {
      maxabs = data.dense.col(j).cwiseAbs().maxCoeff();
    } else {
      for (const auto& row : data.sparse_rows) {
        for (const auto& [idx, v] : row) {
          if (idx == j) maxabs = std::max(maxabs, std::abs(v));
        }
      }
    }
    if (maxabs > 0.0) norm.scale(j) = maxabs;
  }
  if (data.dense_storage()) {
    for (Eigen::Index j = 0; j < data.n_features; ++j) {
      data.dense.col(j) /= norm.scale(j);
    }
  } else {
    for (auto& row : data.sparse_rows) {
      for (auto& [idx, v] : row) {
        v /= norm.scale(idx);
      }
    }
  }
  return norm;
}

void denormalize(Dataset& data, const Normalization& norm) {
  if (norm.scale.size() != data.n_features) {
    throw DimensionMismatch("denormalize: scale length mismatch");
  }
  if (data.dense_storage()) {
    for (Eigen::Index j = 0; j < data.n_features; ++j) {
      data.dense.col(j) *= norm.scale(j);
    }
  } else {
    for (auto& row : data.sparse_rows) {
      for (auto& [idx, v] : row) {
        v *= norm.scale(idx);
      }
    }
  }
}

SynthLogistic synth_logistic(const SynthLogisticSpec& spec) {
  if (spec.n < 1 || spec.count < 1) {
    throw ConfigError("synth_logistic: dimensions must be positive");
  }
  if (spec.kappa < 1.0) {
    throw ConfigError("synth_logistic: kappa must be >= 1");
  }
  rng::Stream stream(rng::derive_seed(spec.seed, 0,
                                      static_cast<std::uint64_t>(rng::Purpose::data_synth)));

  Matrix x(spec.count, spec.n);
  for (Eigen::Index i = 0; i < spec.count; ++i) {
    for (Eigen::Index j = 0; j < spec.n; ++j) {
      x(i, j) = stream.next_gaussian();
    }
  }

  if (spec.profile == "orthonormal") {
    // Columns become exactly orthonormal * sqrt(count), so X^T X / count = I
    // before the per-column scaling below.
    Eigen::HouseholderQR<Matrix> qr(x);
    Matrix q = qr.householderQ() * Matrix::Identity(spec.count, spec.n);
    x = q * std::sqrt(static_cast<double>(spec.count));
  } else if (spec.profile != "gaussian") {
    throw ConfigError("synth_logistic: unknown profile " + spec.profile);
  }

  for (Eigen::Index j = 0; j < spec.n; ++j) {
    const double t = spec.n > 1 ? static_cast<double>(j) / static_cast<double>(spec.n - 1) : 0.0;
    const double col_scale = spec.scale * std::pow(spec.kappa, -t);
    x.col(j) *= col_scale;
  }

  Vector theta_gen = Vector::Zero(spec.n);
  if (spec.theta_scale != 0.0) {
    for (Eigen::Index j = 0; j < spec.n; ++j) theta_gen(j) = stream.next_gaussian();
    theta_gen *= spec.theta_scale / theta_gen.norm();
  }

  SynthLogistic out;
  out.data.n_features = spec.n;
  out.data.dense = std::move(x);
  out.data.labels.resize(spec.count);
  for (Eigen::Index i = 0; i < spec.count; ++i) {
    const double z = out.data.dense.row(i).dot(theta_gen);
    const double p = 1.0 / (1.0 + std::exp(-z));
    out.data.labels(i) = stream.next_double() < p ? 1.0 : -1.0;
  }
  out.theta_gen = std::move(theta_gen);
  return out;
}

Matrix synth_curves_toy(Eigen::Index count, std::uint64_t seed) {
  constexpr int kSide = 16;
  constexpr int kPixels = kSide * kSide;
  if (count < 1 || count > 2000) {
    throw ConfigError("synth_curves_toy: count must be in [1, 2000]");
  }
  rng::Stream stream(rng::derive_seed(seed, 1,
                                      static_cast<std::uint64_t>(rng::Purpose::data_synth)));
  Matrix images = Matrix::Zero(count, kPixels);

  for (Eigen::Index img = 0; img < count; ++img) {
    const int strokes = 1 + static_cast<int>(stream.next_below(3));
    for (int s = 0; s < strokes; ++s) {
      // Quadratic Bezier stroke with control points inside the frame.
      double px[3], py[3];
      for (int c = 0; c < 3; ++c) {
        px[c] = 2.0 + 11.0 * stream.next_double();
        py[c] = 2.0 + 11.0 * stream.next_double();
      }
      const double width = 0.55 + 0.35 * stream.next_double();
      for (int step = 0; step <= 40; ++step) {
        const double t = step / 40.0;
        const double mt = 1.0 - t;
        const double cx = mt * mt * px[0] + 2 * mt * t * px[1] + t * t * px[2];
        const double cy = mt * mt * py[0] + 2 * mt * t * py[1] + t * t * py[2];
        // Gaussian splat around the curve point.
        const int x0 = std::max(0, static_cast<int>(cx) - 2);
        const int x1 = std::min(kSide - 1, static_cast<int>(cx) + 2);
        const int y0 = std::max(0, static_cast<int>(cy) - 2);
        const int y1 = std::min(kSide - 1, static_cast<int>(cy) + 2);
        for (int yy = y0; yy <= y1; ++yy) {
          for (int xx = x0; xx <= x1; ++xx) {
            const double d2 = (xx - cx) * (xx - cx) + (yy - cy) * (yy - cy);
            const double val = std::exp(-d2 / (2.0 * width * width));
            double& px_ref = images(img, yy * kSide + xx);
            px_ref = std::min(1.0, px_ref + 0.5 * val);
          }
        }
      }
    }
  }
  return images;
}

Matrix one_hot(const std::vector<int>& labels, int classes) {
  if (classes < 1) {
    throw ConfigError("one_hot: classes must be positive");
  }
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i];
    if (c < 0 || c >= classes) {
      throw DimensionMismatch("one_hot: label out of range");
    }
    out(static_cast<Eigen::Index>(i), c) = 1.0;
  }
  return out;
}

}  // namespace s2qn::dataio
