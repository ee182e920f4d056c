#include "nullwave/errors.hpp"
#include "nullwave/nullform.hpp"

#include <doctest.h>

#include <random>

using namespace nullwave;

namespace {

Matrix4 random_null_matrix(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Matrix4 anti = Matrix4::Zero();
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b) {
      anti(a, b) = n(rng);
      anti(b, a) = -anti(a, b);
    }
  return n(rng) * minkowski() + anti;
}

Gradients random_grads(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Gradients g(n, 4);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < 4; ++a) g(i, a) = d(rng);
  return g;
}

}  // namespace

TEST_CASE("standard form and wedges are null") {
  CHECK(is_null_form(NullForm::standard()).is_null);
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b) CHECK(is_null_form(NullForm::wedge(a, b)).is_null);
  Matrix4 tt = Matrix4::Zero();
  tt(0, 0) = 1.0;
  const auto c = is_null_form(NullForm(tt));
  CHECK_FALSE(c.is_null);
  CHECK(c.witness_agrees);
}

TEST_CASE("standard form pairs null vectors to zero") {
  const Covector4 v(1.0, 0.6, 0.8, 0.0);
  CHECK(eval_form(NullForm::standard(), v, v) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(eval_form(NullForm::standard(), covector::dt(), covector::dt()) == 1.0);
}

TEST_CASE("symmetric-part test agrees with the null-vector test") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n;
  for (int k = 0; k < 200; ++k) {
    Matrix4 m;
    if (k % 2 == 0) {
      m = random_null_matrix(rng);
    } else {
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) m(a, b) = n(rng);
    }
    const NullForm f(m);
    const bool exact = is_null_form(f).is_null;
    CHECK(exact == (k % 2 == 0));
    CHECK(null_vector_test(f, 2000, 100 + k) == exact);
  }
}

TEST_CASE("is_null_form rejects a non-positive tolerance") {
  CHECK_THROWS_AS(is_null_form(NullForm::standard(), 0.0), ValidationError);
}

TEST_CASE("symmetrized storage keeps the quadratic term") {
  std::mt19937_64 rng(3);
  const int n = 3;
  NullFormTensor t(n);
  std::vector<std::tuple<int, int, int, Matrix4>> raw;
  for (int k = 0; k < 6; ++k) {
    const int i = k % n, j = (k * 2) % n, l = (k + 1) % n;
    const Matrix4 m = random_null_matrix(rng);
    t.add(i, j, l, NullForm(m));
    raw.emplace_back(i, j, l, m);
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l)
        CHECK((t(i, j, l).matrix() - t(i, l, j).matrix().transpose()).norm() < 1e-15);

  SemilinearSystem sys{t, "random"};
  const Gradients g = random_grads(n, rng);
  Eigen::VectorXd direct = Eigen::VectorXd::Zero(n);
  for (const auto& [i, j, l, m] : raw) direct(i) += g.row(j) * m * g.row(l).transpose();
  CHECK((quadratic_rhs(sys, g) - direct).norm() < 1e-12);
}

TEST_CASE("contracted coupling equals the polarized quadratic form") {
  // Q(df + dpsi) - Q(df) - Q(dpsi) is the bilinear cross term, df = f' (1, -1, 0, 0).
  std::mt19937_64 rng(5);
  for (const auto& name : fixture_names()) {
    const SemilinearSystem sys = fixture_system(name);
    const int n = sys.size();
    const CouplingTensors ct = coupling_tensors(sys);
    for (int trial = 0; trial < 20; ++trial) {
      std::normal_distribution<double> d;
      Eigen::VectorXd fp(n);
      for (int j = 0; j < n; ++j) fp(j) = d(rng);
      Gradients df(n, 4);
      for (int j = 0; j < n; ++j) df.row(j) = fp(j) * covector::du_prime().transpose();
      const Gradients dpsi = random_grads(n, rng);
      const Eigen::VectorXd cross = quadratic_rhs(sys, df + dpsi) - quadratic_rhs(sys, df) -
                                    quadratic_rhs(sys, dpsi);
      const Eigen::VectorXd lin = ct.contract_a(fp) * (dpsi.col(0) + dpsi.col(1)) +
                                  ct.contract_b(fp) * dpsi.col(2) + ct.contract_c(fp) * dpsi.col(3);
      CHECK((cross - lin).norm() < 1e-12);
    }
  }
}

TEST_CASE("fixture linearizations") {
  const CouplingTensors e1 = coupling_tensors(fixture_system("example1"));
  const CouplingTensors e2 = coupling_tensors(fixture_system("example2"));
  const Eigen::Vector2d fp(0.0, 1.0);
  CHECK(e1.contract_a(Eigen::Vector2d(1.0, 0.0))(1, 0) == doctest::Approx(2.0));
  CHECK(e1.contract_b(fp).norm() == 0.0);
  CHECK(e1.contract_c(fp).norm() == 0.0);
  Eigen::Matrix2d by;
  by << -2.0, 0.0, 0.0, 0.0;
  CHECK((e2.contract_b(fp) - by).norm() < 1e-15);
  CHECK(e2.contract_a(fp).norm() == 0.0);
}

TEST_CASE("condition one on the fixtures") {
  const auto e1 = fixture_system("example1");
  const auto e2 = fixture_system("example2");
  CHECK(check_condition_one(e1, {0, 1}).satisfied);
  const auto r = check_condition_one(e2, {1});
  CHECK_FALSE(r.satisfied);
  REQUIRE_FALSE(r.violations.empty());
  CHECK(check_condition_one(e2, {}).satisfied);
  CHECK_THROWS_AS(check_condition_one(e2, {5}), ValidationError);
}

TEST_CASE("system JSON round trip") {
  for (const auto& name : fixture_names()) {
    const auto sys = fixture_system(name);
    const auto back = system_from_json(system_to_json(sys));
    REQUIRE(back.size() == sys.size());
    for (int i = 0; i < sys.size(); ++i)
      for (int j = 0; j < sys.size(); ++j)
        for (int l = 0; l < sys.size(); ++l)
          CHECK((back.tensor(i, j, l).matrix() - sys.tensor(i, j, l).matrix()).norm() < 1e-15);
  }
  CHECK_THROWS_AS(fixture_system("nope"), ValidationError);
  CHECK_THROWS_AS(system_from_json(nlohmann::json{{"N", 0}}), ValidationError);
  CHECK_THROWS_AS(system_from_json(nlohmann::json::parse(
                      R"({"N":1,"forms":[{"i":2,"j":1,"l":1,"matrix":[1,0,0,0,0,-1,0,0,0,0,-1,0,0,0,0,-1]}]})")),
                  ValidationError);
}
