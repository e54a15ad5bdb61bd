#include <cmath>
#include <sstream>

#include "doctest.h"
#include "s2qn/dataio.hpp"
#include "test_helpers.hpp"

using namespace s2qn;

TEST_CASE("libsvm text round-trips exactly") {
  dataio::Dataset data;
  data.n_features = 4;
  data.dense = Matrix(3, 4);
  data.dense << 0.5, 0.0, -1.25, 3.0,
                0.0, 0.0, 0.0, 0.1,
                1e-17, 2.0, 0.0, 0.0;
  data.labels = Vector(3);
  data.labels << 1.0, -1.0, 1.0;

  std::ostringstream out;
  dataio::write_libsvm(data, out);
  std::istringstream in(out.str());
  const auto back = dataio::read_libsvm(in);

  REQUIRE(back.size() == 3);
  REQUIRE(back.n_features == 4);
  CHECK((back.labels - data.labels).norm() == 0.0);
  for (Eigen::Index i = 0; i < 3; ++i)
    CHECK((back.row(i) - data.dense.row(i).transpose()).norm() == 0.0);
}

TEST_CASE("libsvm parser maps 0/1 labels to -1/+1") {
  std::istringstream in("0 1:2.0\n1 2:3.0\n");
  const auto data = dataio::read_libsvm(in);
  CHECK(data.labels(0) == -1.0);
  CHECK(data.labels(1) == 1.0);
  // 1-based on disk, 0-based in memory.
  CHECK(data.row(0)(0) == 2.0);
  CHECK(data.row(1)(1) == 3.0);
}

TEST_CASE("libsvm parse failures carry line numbers") {
  std::istringstream bad_label("purple 1:2.0\n");
  CHECK_THROWS_AS(dataio::read_libsvm(bad_label), ParseError);

  std::istringstream bad_value("1 1:abc\n");
  CHECK_THROWS_AS(dataio::read_libsvm(bad_value), ParseError);

  try {
    std::istringstream second_line("1 1:1.0\n+1 oops\n");
    dataio::read_libsvm(second_line);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("libsvm index ordering is enforced unless tolerated") {
  std::istringstream unsorted("1 3:1.0 1:2.0\n");
  CHECK_THROWS_AS(dataio::read_libsvm(unsorted), IndexOrderError);

  std::istringstream again("1 3:1.0 1:2.0\n");
  dataio::LibsvmOptions opts;
  opts.tolerate_unsorted = true;
  const auto data = dataio::read_libsvm(again, opts);
  CHECK(data.row(0)(0) == 2.0);
  CHECK(data.row(0)(2) == 1.0);

  // Duplicates stay fatal either way.
  std::istringstream dup("1 1:1.0 1:2.0\n");
  CHECK_THROWS_AS(dataio::read_libsvm(dup, opts), IndexOrderError);
}

TEST_CASE("max-abs normalization undoes exactly") {
  dataio::Dataset data;
  data.n_features = 3;
  data.dense = Matrix(2, 3);
  data.dense << 2.0, 0.0, -8.0,
                -4.0, 0.0, 2.0;
  data.labels = Vector::Ones(2);
  const Matrix original = data.dense;

  const auto norm = dataio::normalize_maxabs(data);
  CHECK(data.dense.col(0).cwiseAbs().maxCoeff() == 1.0);
  CHECK(norm.scale(1) == 1.0);  // zero column keeps scale 1
  CHECK((data.dense.col(1) - original.col(1)).norm() == 0.0);

  dataio::denormalize(data, norm);
  CHECK((data.dense - original).norm() == 0.0);
}

TEST_CASE("synthetic logistic data replays and plants its parameter") {
  dataio::SynthLogisticSpec spec;
  spec.n = 8;
  spec.count = 50;
  spec.seed = 5;
  const auto a = dataio::synth_logistic(spec);
  const auto b = dataio::synth_logistic(spec);
  CHECK((a.data.dense - b.data.dense).norm() == 0.0);
  CHECK((a.data.labels - b.data.labels).norm() == 0.0);
  CHECK((a.theta_gen - b.theta_gen).norm() == 0.0);
  REQUIRE(a.theta_gen.size() == 8);
  REQUIRE(a.data.size() == 50);
  for (Eigen::Index i = 0; i < 50; ++i)
    CHECK(std::abs(a.data.labels(i)) == 1.0);
}

TEST_CASE("orthonormal profile has an exactly scaled second moment") {
  dataio::SynthLogisticSpec spec;
  spec.n = 6;
  spec.count = 40;
  spec.seed = 9;
  spec.profile = "orthonormal";
  spec.scale = 2.0;
  const auto synth = dataio::synth_logistic(spec);
  const Matrix& x = synth.data.dense;
  const Matrix moment = (x.transpose() * x) / static_cast<double>(x.rows());
  const Matrix want = spec.scale * spec.scale * Matrix::Identity(6, 6);
  CHECK(testutil::rel_err(moment, want) < 1e-12);
}

TEST_CASE("gaussian profile spans condition numbers via kappa") {
  dataio::SynthLogisticSpec spec;
  spec.n = 4;
  spec.count = 4000;
  spec.seed = 12;
  spec.kappa = 100.0;
  const auto synth = dataio::synth_logistic(spec);
  const Matrix& x = synth.data.dense;
  const double first = x.col(0).squaredNorm();
  const double last = x.col(3).squaredNorm();
  // Columns shrink geometrically from 1 toward 1/kappa; with this many
  // samples the empirical ratio is never off by more than 2x.
  CHECK(first / last > 100.0 * 100.0 / 2.0);
}

TEST_CASE("toy curve images are deterministic and in range") {
  const Matrix a = dataio::synth_curves_toy(12, 3);
  const Matrix b = dataio::synth_curves_toy(12, 3);
  CHECK((a - b).norm() == 0.0);
  REQUIRE(a.rows() == 12);
  REQUIRE(a.cols() == 256);
  CHECK(a.minCoeff() >= 0.0);
  CHECK(a.maxCoeff() <= 1.0);
  CHECK(a.maxCoeff() > 0.0);  // not blank

  const Matrix c = dataio::synth_curves_toy(12, 4);
  CHECK((a - c).norm() > 0.0);
}

TEST_CASE("one-hot encoding") {
  const Matrix m = dataio::one_hot({2, 0, 1}, 3);
  Matrix want(3, 3);
  want << 0, 0, 1,
          1, 0, 0,
          0, 1, 0;
  CHECK((m - want).norm() == 0.0);
}
