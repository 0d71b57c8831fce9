#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <set>

#include "geomshot/checkpoint.hpp"
#include "geomshot/error.hpp"
#include "geomshot/gradcheck.hpp"
#include "geomshot/nnet.hpp"
#include "geomshot/optim.hpp"

using namespace geomshot;
using namespace geomshot::nnet;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

ParamTensor tensor(const std::string& name, const Matrix& value) {
  ParamTensor t(name, {static_cast<std::size_t>(value.rows()), static_cast<std::size_t>(value.cols())}, true);
  t.value = value;
  t.grad = Matrix::Zero(value.rows(), value.cols());
  return t;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode{};
}

EncoderConfig small_config() {
  EncoderConfig c;
  c.input_dim = 5;
  c.hidden_dim = 6;
  c.num_hidden = 2;
  c.embed_dim = 4;
  c.dropout = 0.3;
  return c;
}

}  // namespace

TEST_CASE("parameter counts") {
  for (auto [dim, expect] : {std::pair{20, 105088}, {63, 116096}, {83, 121216}}) {
    EncoderConfig c;
    c.input_dim = dim;
    const Encoder e(c, 1);
    CHECK(e.parameter_count() == static_cast<std::size_t>(expect));
    CHECK(expected_parameter_count(c) == static_cast<std::size_t>(expect));
    CHECK(e.buffer_count() == 1024u);
  }
}

TEST_CASE("linear layer") {
  const Matrix x = random_matrix(4, 3, 1);
  ParamTensor w = tensor("w", random_matrix(2, 3, 2));
  ParamTensor b = tensor("b", random_matrix(2, 1, 3));
  const Matrix r = random_matrix(4, 2, 4);
  const Matrix y = linear_forward(x, w.value, b.value);
  REQUIRE(y.rows() == 4);
  for (int i = 0; i < 4; ++i)
    for (int o = 0; o < 2; ++o) {
      double s = b.value(o, 0);
      for (int k = 0; k < 3; ++k) s += x(i, k) * w.value(o, k);
      CHECK(std::abs(y(i, o) - s) < 1e-14);
    }
  const Matrix dx = linear_backward(x, w.value, r, w.grad, b.grad);
  // Weight gradient is upstream^T input.
  CHECK((w.grad - r.transpose() * x).cwiseAbs().maxCoeff() < 1e-14);

  Matrix xin = x;
  auto loss = [&] { return (linear_forward(xin, w.value, b.value).array() * r.array()).sum(); };
  ParamTensor* ps[] = {&w, &b};
  const auto report = finite_difference_check(ps, loss, 1e-5, 1e-4);
  CHECK(report.passed);
  CHECK(finite_difference_input(xin, dx, loss, 1e-5).max_rel_error <= 1e-4);
}

TEST_CASE("quadratic loss gradient is exact") {
  const Matrix x = random_matrix(3, 1, 5);
  ParamTensor w = tensor("w", random_matrix(4, 3, 6));
  w.grad = 2.0 * (w.value * x) * x.transpose();
  auto loss = [&] { return (w.value * x).squaredNorm(); };
  ParamTensor* ps[] = {&w};
  const auto report = finite_difference_check(ps, loss, 1e-5, 1e-8);
  CHECK(report.max_rel_error <= 1e-8);
  CHECK(report.passed);
}

TEST_CASE("batchnorm train-mode backward") {
  Matrix x = random_matrix(6, 3, 7, 2.0);
  ParamTensor gamma = tensor("g", random_matrix(3, 1, 8));
  ParamTensor beta = tensor("b", random_matrix(3, 1, 9));
  Matrix rm = Matrix::Zero(3, 1), rv = Matrix::Ones(3, 1);
  const Matrix r = random_matrix(6, 3, 10);
  BatchNormCache cache;
  batchnorm_forward_train(x, gamma.value, beta.value, rm, rv, &cache);
  const Matrix dx = batchnorm_backward(cache, gamma.value, r, gamma.grad, beta.grad);
  auto loss = [&] {
    Matrix m = Matrix::Zero(3, 1), v = Matrix::Ones(3, 1);
    return (batchnorm_forward_train(x, gamma.value, beta.value, m, v, nullptr).array() * r.array()).sum();
  };
  ParamTensor* ps[] = {&gamma, &beta};
  CHECK(finite_difference_check(ps, loss, 1e-5, 1e-4).passed);
  CHECK(finite_difference_input(x, dx, loss, 1e-5).max_rel_error <= 1e-4);

  SUBCASE("running statistics") {
    Matrix m = Matrix::Zero(3, 1), v = Matrix::Ones(3, 1);
    batchnorm_forward_train(x, gamma.value, beta.value, m, v, nullptr);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    for (int j = 0; j < 3; ++j) {
      const double unbiased = (x.col(j).array() - mean(j)).square().sum() / 5.0;
      CHECK(m(j, 0) == doctest::Approx(0.1 * mean(j)).epsilon(1e-14));
      CHECK(v(j, 0) == doctest::Approx(0.9 + 0.1 * unbiased).epsilon(1e-14));
    }
  }
}

TEST_CASE("relu and dropout backward") {
  Matrix x = random_matrix(4, 5, 11);
  const Matrix r = random_matrix(4, 5, 12);
  const Matrix dx = relu_backward(x, r);
  auto relu_loss = [&] { return (relu_forward(x).array() * r.array()).sum(); };
  CHECK(finite_difference_input(x, dx, relu_loss, 1e-6).max_rel_error <= 1e-4);

  Rng rng(13);
  const Matrix mask = dropout_mask(4, 5, 0.3, rng);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const double m = mask.data()[i];
    CHECK((m == 0.0 || m == doctest::Approx(1.0 / 0.7)));
  }
  const Matrix ddrop = r.cwiseProduct(mask);
  auto drop_loss = [&] { return (x.cwiseProduct(mask).array() * r.array()).sum(); };
  CHECK(finite_difference_input(x, ddrop, drop_loss, 1e-6).max_rel_error <= 1e-4);

  Rng big(14);
  const Matrix many = dropout_mask(200, 100, 0.3, big);
  const double kept = (many.array() > 0).cast<double>().mean();
  CHECK(kept == doctest::Approx(0.7).epsilon(0.03));
}

TEST_CASE("encoder forward contracts") {
  Encoder e(small_config(), 3);
  const Matrix x = random_matrix(5, 5, 15);

  const Matrix a = e.forward_eval(x);
  const Matrix b = e.forward_eval(x);
  CHECK(a == b);
  CHECK(a.rows() == 5);
  CHECK(a.cols() == 4);

  // Eval never touches state; train updates the running statistics.
  std::vector<Matrix> before;
  for (const ParamTensor* t : std::as_const(e).tensors()) before.push_back(t->value);
  e.forward_eval(x);
  std::size_t i = 0;
  for (const ParamTensor* t : std::as_const(e).tensors()) CHECK(t->value == before[i++]);
  Rng rng(1);
  e.forward_train(x, rng, nullptr);
  bool moved = false;
  i = 0;
  for (const ParamTensor* t : std::as_const(e).tensors()) {
    if (t->name.find("running") != std::string::npos && t->value != before[i]) moved = true;
    ++i;
  }
  CHECK(moved);

  // Train mode with a fixed seed is deterministic.
  Encoder e2(small_config(), 3), e3(small_config(), 3);
  Rng r2(5), r3(5);
  CHECK(e2.forward_train(x, r2, nullptr) == e3.forward_train(x, r3, nullptr));

  for (ParamTensor* t : e.trainable_parameters()) t->value.setZero();
  CHECK(e.forward_eval(x).isZero(0.0));

  CHECK(code_of([&] { e.forward_train(x.topRows(1), rng, nullptr); }) == ErrorCode::BatchTooSmall);
}

TEST_CASE("encoder tensor names") {
  const Encoder e(EncoderConfig{}, 1);
  std::vector<std::string> names;
  for (const ParamTensor* t : e.tensors()) names.push_back(t->name);
  const std::vector<std::string> expect = {
      "fc1.weight", "fc1.bias", "bn1.weight", "bn1.bias", "bn1.running_mean", "bn1.running_var",
      "fc2.weight", "fc2.bias", "bn2.weight", "bn2.bias", "bn2.running_mean", "bn2.running_var",
      "proj.weight", "proj.bias"};
  CHECK(names == expect);
}

TEST_CASE("encoder backward") {
  Encoder e(small_config(), 21);
  const Matrix x0 = random_matrix(6, 5, 22);
  const Matrix r = random_matrix(6, 4, 23);

  Rng rng(99);
  ForwardCache cache;
  e.zero_grad();
  e.forward_train(x0, rng, &cache);
  const Matrix dx = e.backward(cache, r);

  Matrix x = x0;
  auto loss = [&] {
    Rng replay(99);
    return (e.forward_train(x, replay, nullptr).array() * r.array()).sum();
  };
  const auto params = e.trainable_parameters();
  const auto report = finite_difference_check(params, loss, 1e-5, 1e-4);
  for (const auto& entry : report.entries) CHECK_MESSAGE(entry.max_rel_error <= 1e-4, entry.name);
  CHECK(report.passed);
  CHECK(report.max_rel_error <= 1e-4);
  CHECK(finite_difference_input(x, dx, loss, 1e-5).max_rel_error <= 1e-4);

  SUBCASE("stale caches are rejected") {
    ForwardCache empty;
    CHECK(code_of([&] { e.backward(empty, r); }) == ErrorCode::Cache);
    ForwardCache c2;
    Rng rr(1);
    e.forward_train(x0, rr, &c2);
    AdamW opt;
    e.zero_grad();
    e.backward(c2, r);
    opt.step(e.trainable_parameters());
    CHECK(code_of([&] { e.backward(c2, r); }) == ErrorCode::Cache);
  }
}

TEST_CASE("full-size encoder backward on a sample of entries") {
  Encoder e(EncoderConfig{}, 5);
  const Matrix x = random_matrix(8, 20, 31);
  // Upstream of the size a mean-reduced loss produces.
  const Matrix r = random_matrix(8, 128, 32, 1.0 / 128.0);
  Rng rng(7);
  ForwardCache cache;
  e.zero_grad();
  e.forward_train(x, rng, &cache);
  e.backward(cache, r);
  auto loss = [&] {
    Rng replay(7);
    return (e.forward_train(x, replay, nullptr).array() * r.array()).sum();
  };
  const auto report = finite_difference_check(e.trainable_parameters(), loss, 1e-5, 1e-4, 40, 3);
  for (const auto& entry : report.entries) CHECK_MESSAGE(entry.max_rel_error <= 1e-4, entry.name);
  CHECK(report.passed);
}

TEST_CASE("adamw") {
  SUBCASE("zero gradient without decay leaves parameters unchanged") {
    OptimizerConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    ParamTensor p = tensor("p", random_matrix(3, 2, 40));
    const Matrix before = p.value;
    ParamTensor* ps[] = {&p};
    for (int i = 0; i < 3; ++i) opt.step(ps);
    CHECK(p.value == before);
  }

  SUBCASE("one step on a scalar matches the hand recurrence") {
    AdamW opt;
    ParamTensor p = tensor("p", Matrix::Constant(1, 1, 0.5));
    p.grad(0, 0) = 1.0;
    ParamTensor* ps[] = {&p};
    opt.step(ps);
    // decay: 0.5 (1 - lr wd); m_hat = 1, v_hat = 1; step lr / (1 + eps)
    const double expect = 0.5 * (1.0 - 1e-4 * 1e-4) - 1e-4 * 1.0 / (1.0 + 1e-8);
    CHECK(std::abs(p.value(0, 0) - expect) < 1e-17);
    CHECK(opt.step_count() == 1);
  }

  SUBCASE("clipping by global norm") {
    ParamTensor a = tensor("a", Matrix::Zero(1, 2));
    ParamTensor b = tensor("b", Matrix::Zero(1, 1));
    a.grad << 6.0, 0.0;
    b.grad << 8.0;
    ParamTensor* ps[] = {&a, &b};
    CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(10.0));
    CHECK(a.grad(0, 0) == doctest::Approx(0.6));
    CHECK(b.grad(0, 0) == doctest::Approx(0.8));
    CHECK(global_grad_norm(ps) == doctest::Approx(1.0));
  }

  SUBCASE("non-finite gradients abort the update") {
    AdamW opt;
    ParamTensor a = tensor("a", random_matrix(2, 2, 41));
    ParamTensor b = tensor("b", random_matrix(2, 2, 42));
    a.grad.setOnes();
    b.grad(1, 1) = std::numeric_limits<double>::infinity();
    const Matrix av = a.value, bv = b.value;
    ParamTensor* ps[] = {&a, &b};
    CHECK(code_of([&] { opt.step(ps); }) == ErrorCode::NonFiniteGradient);
    CHECK(a.value == av);
    CHECK(b.value == bv);
    CHECK(opt.step_count() == 0);
  }
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(1e-4, 0, 100) == 1e-4);
  CHECK(cosine_lr(1e-4, 100, 100) == doctest::Approx(0.0));
  CHECK(cosine_lr(1e-4, 100, 100) >= 0.0);
  CHECK(cosine_lr(1e-4, 50, 100) == doctest::Approx(5e-5).epsilon(1e-12));
}

TEST_CASE("checkpoint container") {
  Encoder e(EncoderConfig{}, 8);
  Rng rng(3);
  e.forward_train(random_matrix(10, 20, 50), rng, nullptr);
  const Checkpoint ck = make_checkpoint(e, {{"representation", "angle"}, {"source", "toy"}});
  const std::string bytes = serialize_checkpoint(ck);
  CHECK(bytes.substr(0, 8) == "GSCKPT01");

  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(back.encoder == ck.encoder);
  CHECK(back.metadata == ck.metadata);
  REQUIRE(back.tensors.size() == ck.tensors.size());
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    CHECK(back.tensors[i].name == ck.tensors[i].name);
    CHECK(back.tensors[i].shape == ck.tensors[i].shape);
    CHECK(std::memcmp(back.tensors[i].value.data(), ck.tensors[i].value.data(),
                      sizeof(double) * ck.tensors[i].size()) == 0);
  }
  CHECK(serialize_checkpoint(back) == bytes);

  // Header names cover every tensor the encoder enumerates, buffers included.
  std::set<std::string> header, enumerated;
  for (const auto& t : back.tensors) header.insert(t.name);
  for (const ParamTensor* t : e.tensors()) enumerated.insert(t->name);
  CHECK(header == enumerated);

  const Encoder restored = encoder_from_checkpoint(back);
  const Matrix x = random_matrix(4, 20, 51);
  CHECK(restored.forward_eval(x) == e.forward_eval(x));

  CHECK(code_of([&] { deserialize_checkpoint(bytes.substr(0, bytes.size() - 8)); }) ==
        ErrorCode::CorruptCheckpoint);
  CHECK(code_of([&] { deserialize_checkpoint(bytes + "x"); }) == ErrorCode::CorruptCheckpoint);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(code_of([&] { deserialize_checkpoint(bad_magic); }) == ErrorCode::CorruptCheckpoint);
  std::string bad_len = bytes;
  bad_len[8] = static_cast<char>(0xff);
  CHECK(code_of([&] { deserialize_checkpoint(bad_len); }) == ErrorCode::CorruptCheckpoint);
  CHECK(code_of([&] { deserialize_checkpoint("GSCK"); }) == ErrorCode::CorruptCheckpoint);
}
