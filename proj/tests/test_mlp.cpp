#include <cmath>
#include <doctest.h>

#include "merl/mlp.hpp"

using namespace merl;

namespace {

double loss_of(const Mlp& net, const Eigen::VectorXd& x, const Eigen::VectorXd& w) {
  MlpWorkspace ws;
  mlp_forward(net, x, ws);
  return w.dot(ws.y);  // linear readout keeps d(loss)/dy == w exact
}

}  // namespace

TEST_SUITE("mlp") {

TEST_CASE("orthogonal init scales as gain^2 and zeroes biases") {
  RngStream rng(1);
  const Mlp net = Mlp::init(3, 16, 2, 0.1, rng);
  CHECK(net.b1.isZero());
  CHECK(net.b2.isZero());
  CHECK(net.b_out.isZero());
  // tall matrices have orthogonal columns: W^T W = gain^2 I
  const Eigen::MatrixXd g1 = net.W1.transpose() * net.W1;
  CHECK((g1 - 2.0 * Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-12);
  const Eigen::MatrixXd g2 = net.W2.transpose() * net.W2;
  CHECK((g2 - 2.0 * Eigen::MatrixXd::Identity(16, 16)).norm() < 1e-12);
  // wide head has orthogonal rows: W W^T = gain^2 I
  const Eigen::MatrixXd gh = net.W_out * net.W_out.transpose();
  CHECK((gh - 0.01 * Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-12);
}

TEST_CASE("forward matches a hand computation") {
  // 1-2-2-1 net small enough to evaluate by hand
  Mlp net;
  net.W1.resize(2, 1);
  net.W1 << 1.0, -2.0;
  net.b1.resize(2);
  net.b1 << 0.5, 0.0;
  net.W2.resize(2, 2);
  net.W2 << 1.0, 1.0, 0.5, -0.5;
  net.b2 = Eigen::VectorXd::Zero(2);
  net.W_out.resize(1, 2);
  net.W_out << 2.0, 1.0;
  net.b_out.resize(1);
  net.b_out << -0.25;

  Eigen::VectorXd x(1);
  x << 0.3;
  MlpWorkspace ws;
  mlp_forward(net, x, ws);

  const double h11 = std::tanh(1.0 * 0.3 + 0.5);
  const double h12 = std::tanh(-2.0 * 0.3);
  const double h21 = std::tanh(h11 + h12);
  const double h22 = std::tanh(0.5 * h11 - 0.5 * h12);
  CHECK(ws.y[0] == doctest::Approx(2.0 * h21 + h22 - 0.25).epsilon(1e-15));
}

TEST_CASE("backward matches central finite differences") {
  RngStream rng(2);
  Mlp net = Mlp::init(4, 8, 3, 0.7, rng);
  // random biases so their gradients are nontrivial
  net.b1 = 0.3 * rng.normal_vec(8);
  net.b2 = 0.3 * rng.normal_vec(8);
  net.b_out = 0.3 * rng.normal_vec(3);

  const Eigen::VectorXd x = rng.normal_vec(4);
  const Eigen::VectorXd w = rng.normal_vec(3);

  MlpWorkspace ws;
  mlp_forward(net, x, ws);
  MlpGrad g = MlpGrad::zeros_like(net);
  mlp_backward(net, x, ws, w, g);

  const int n = net.param_count();
  Eigen::VectorXd analytic(n);
  g.to_flat(analytic.data());

  Eigen::VectorXd theta(n);
  net.to_flat(theta.data());
  const double h = 1e-6;
  double max_rel = 0.0;
  Mlp bumped = net;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    bumped.from_flat(tp.data());
    const double fp = loss_of(bumped, x, w);
    bumped.from_flat(tm.data());
    const double fm = loss_of(bumped, x, w);
    const double fd = (fp - fm) / (2.0 * h);
    const double denom = std::max(1.0, std::abs(fd));
    max_rel = std::max(max_rel, std::abs(analytic[i] - fd) / denom);
  }
  CHECK(max_rel < 1e-6);
}

TEST_CASE("backward accumulates across calls") {
  RngStream rng(3);
  const Mlp net = Mlp::init(2, 4, 1, 1.0, rng);
  const Eigen::VectorXd x1 = rng.normal_vec(2), x2 = rng.normal_vec(2);
  Eigen::VectorXd dy(1);
  dy << 1.0;

  MlpWorkspace ws;
  MlpGrad a = MlpGrad::zeros_like(net), b = MlpGrad::zeros_like(net);
  mlp_forward(net, x1, ws);
  mlp_backward(net, x1, ws, dy, a);
  mlp_forward(net, x2, ws);
  mlp_backward(net, x2, ws, dy, b);

  MlpGrad acc = MlpGrad::zeros_like(net);
  mlp_forward(net, x1, ws);
  mlp_backward(net, x1, ws, dy, acc);
  mlp_forward(net, x2, ws);
  mlp_backward(net, x2, ws, dy, acc);

  Eigen::VectorXd fa(net.param_count()), fb(net.param_count()), facc(net.param_count());
  a.to_flat(fa.data());
  b.to_flat(fb.data());
  acc.to_flat(facc.data());
  CHECK((facc - fa - fb).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("flat layout round trips") {
  RngStream rng(4);
  const Mlp net = Mlp::init(3, 5, 2, 0.5, rng);
  Eigen::VectorXd flat(net.param_count());
  net.to_flat(flat.data());
  Mlp other = Mlp::init(3, 5, 2, 0.5, rng);  // different draw, same shapes
  other.from_flat(flat.data());
  CHECK(other.W1 == net.W1);
  CHECK(other.W2 == net.W2);
  CHECK(other.W_out == net.W_out);
  CHECK(other.b1 == net.b1);

  // flat order is W1 row-major first
  CHECK(flat[0] == net.W1(0, 0));
  CHECK(flat[1] == net.W1(0, 1));
}

TEST_CASE("json checkpoint round trips bit-exactly") {
  RngStream rng(5);
  Mlp net = Mlp::init(3, 4, 2, 1.0, rng);
  net.b2 = rng.normal_vec(4);
  const Mlp back = Mlp::from_json(net.to_json());
  CHECK(back.W1 == net.W1);
  CHECK(back.b1 == net.b1);
  CHECK(back.W2 == net.W2);
  CHECK(back.b2 == net.b2);
  CHECK(back.W_out == net.W_out);
  CHECK(back.b_out == net.b_out);
}

TEST_CASE("json checkpoint rejects inconsistent shapes") {
  RngStream rng(6);
  const Mlp net = Mlp::init(3, 4, 2, 1.0, rng);
  json j = net.to_json();
  j["b1"] = json::array({0.0, 0.0});  // wrong length for W1's 4 rows
  CHECK_THROWS_AS(Mlp::from_json(j), ConfigError);
  json j2 = net.to_json();
  j2.erase("W2");
  CHECK_THROWS(Mlp::from_json(j2));
}

}  // TEST_SUITE
