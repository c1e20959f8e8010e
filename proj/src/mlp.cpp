#include "merl/mlp.hpp"

#include <Eigen/Dense>

namespace merl {

namespace {

void flat_put(const Eigen::MatrixXd& m, double*& p) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) *p++ = m(r, c);
}

void flat_put(const Eigen::VectorXd& v, double*& p) {
  for (Eigen::Index i = 0; i < v.size(); ++i) *p++ = v[i];
}

void flat_get(Eigen::MatrixXd& m, const double*& p) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = *p++;
}

void flat_get(Eigen::VectorXd& v, const double*& p) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = *p++;
}

// Orthogonal rows/columns from the QR of a Gaussian draw, sign-fixed by the
// diagonal of R so the result does not depend on QR pivoting conventions.
Eigen::MatrixXd orthogonal(int rows, int cols, double gain, RngStream& rng) {
  const bool tall = rows >= cols;
  const int n = tall ? rows : cols;
  const int m = tall ? cols : rows;
  Eigen::MatrixXd a(n, m);
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, m);
  Eigen::MatrixXd r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  for (int c = 0; c < m; ++c) {
    if (r(c, c) < 0) q.col(c) *= -1.0;
  }
  Eigen::MatrixXd w = tall ? q : Eigen::MatrixXd(q.transpose());
  return gain * w;
}

}  // namespace

int Mlp::param_count() const {
  return static_cast<int>(W1.size() + b1.size() + W2.size() + b2.size() + W_out.size() +
                          b_out.size());
}

void Mlp::to_flat(double* dst) const {
  double* p = dst;
  flat_put(W1, p);
  flat_put(b1, p);
  flat_put(W2, p);
  flat_put(b2, p);
  flat_put(W_out, p);
  flat_put(b_out, p);
}

void Mlp::from_flat(const double* src) {
  const double* p = src;
  flat_get(W1, p);
  flat_get(b1, p);
  flat_get(W2, p);
  flat_get(b2, p);
  flat_get(W_out, p);
  flat_get(b_out, p);
}

json Mlp::to_json() const {
  json j;
  j["W1"] = merl::to_json(W1);
  j["b1"] = merl::to_json(b1);
  j["W2"] = merl::to_json(W2);
  j["b2"] = merl::to_json(b2);
  j["W_out"] = merl::to_json(W_out);
  j["b_out"] = merl::to_json(b_out);
  return j;
}

Mlp Mlp::from_json(const json& j) {
  Mlp net;
  net.W1 = matrix_from_json(j.at("W1"));
  net.b1 = vector_from_json(j.at("b1"));
  net.W2 = matrix_from_json(j.at("W2"));
  net.b2 = vector_from_json(j.at("b2"));
  net.W_out = matrix_from_json(j.at("W_out"));
  net.b_out = vector_from_json(j.at("b_out"));
  if (net.W1.rows() != net.b1.size() || net.W2.rows() != net.b2.size() ||
      net.W_out.rows() != net.b_out.size() || net.W2.cols() != net.W1.rows() ||
      net.W_out.cols() != net.W2.rows()) {
    throw ConfigError("inconsistent layer shapes in checkpoint");
  }
  return net;
}

Mlp Mlp::init(int in, int hidden, int out, double out_gain, RngStream& rng) {
  Mlp net;
  const double g = std::sqrt(2.0);
  net.W1 = orthogonal(hidden, in, g, rng);
  net.b1 = Eigen::VectorXd::Zero(hidden);
  net.W2 = orthogonal(hidden, hidden, g, rng);
  net.b2 = Eigen::VectorXd::Zero(hidden);
  net.W_out = orthogonal(out, hidden, out_gain, rng);
  net.b_out = Eigen::VectorXd::Zero(out);
  return net;
}

void mlp_forward(const Mlp& net, const Eigen::VectorXd& x, MlpWorkspace& ws) {
  ws.h1 = (net.W1 * x + net.b1).array().tanh();
  ws.h2 = (net.W2 * ws.h1 + net.b2).array().tanh();
  ws.y = net.W_out * ws.h2 + net.b_out;
}

MlpGrad MlpGrad::zeros_like(const Mlp& net) {
  MlpGrad g;
  g.W1 = Eigen::MatrixXd::Zero(net.W1.rows(), net.W1.cols());
  g.b1 = Eigen::VectorXd::Zero(net.b1.size());
  g.W2 = Eigen::MatrixXd::Zero(net.W2.rows(), net.W2.cols());
  g.b2 = Eigen::VectorXd::Zero(net.b2.size());
  g.W_out = Eigen::MatrixXd::Zero(net.W_out.rows(), net.W_out.cols());
  g.b_out = Eigen::VectorXd::Zero(net.b_out.size());
  return g;
}

void MlpGrad::set_zero() {
  W1.setZero();
  b1.setZero();
  W2.setZero();
  b2.setZero();
  W_out.setZero();
  b_out.setZero();
}

int MlpGrad::param_count() const {
  return static_cast<int>(W1.size() + b1.size() + W2.size() + b2.size() + W_out.size() +
                          b_out.size());
}

void MlpGrad::to_flat(double* dst) const {
  double* p = dst;
  flat_put(W1, p);
  flat_put(b1, p);
  flat_put(W2, p);
  flat_put(b2, p);
  flat_put(W_out, p);
  flat_put(b_out, p);
}

void mlp_backward(const Mlp& net, const Eigen::VectorXd& x, const MlpWorkspace& ws,
                  const Eigen::VectorXd& dy, MlpGrad& g) {
  g.W_out.noalias() += dy * ws.h2.transpose();
  g.b_out += dy;
  Eigen::VectorXd dz2 =
      (net.W_out.transpose() * dy).cwiseProduct((1.0 - ws.h2.array().square()).matrix());
  g.W2.noalias() += dz2 * ws.h1.transpose();
  g.b2 += dz2;
  Eigen::VectorXd dz1 =
      (net.W2.transpose() * dz2).cwiseProduct((1.0 - ws.h1.array().square()).matrix());
  g.W1.noalias() += dz1 * x.transpose();
  g.b1 += dz1;
}

}  // namespace merl
