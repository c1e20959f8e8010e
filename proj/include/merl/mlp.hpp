// Fixed-depth perceptron: two tanh hidden layers and a linear output head.
// Forward and reverse passes are written out by hand; the reverse pass
// accumulates into caller-owned gradient buffers so per-sample gradients can
// be averaged without allocation.
#pragma once

#include <Eigen/Core>

#include "merl/io.hpp"
#include "merl/rng.hpp"

namespace merl {

struct Mlp {
  Eigen::MatrixXd W1, W2, W_out;
  Eigen::VectorXd b1, b2, b_out;

  int in_dim() const { return static_cast<int>(W1.cols()); }
  int hidden_dim() const { return static_cast<int>(W1.rows()); }
  int out_dim() const { return static_cast<int>(W_out.rows()); }
  int param_count() const;

  // flat layout: W1 row-major, b1, W2 row-major, b2, W_out row-major, b_out
  void to_flat(double* dst) const;
  void from_flat(const double* src);

  json to_json() const;
  static Mlp from_json(const json& j);

  // orthogonal weight init (gain sqrt(2) on hidden layers, out_gain on the
  // head), zero biases
  static Mlp init(int in, int hidden, int out, double out_gain, RngStream& rng);
};

struct MlpWorkspace {
  Eigen::VectorXd h1, h2, y;
};

void mlp_forward(const Mlp& net, const Eigen::VectorXd& x, MlpWorkspace& ws);

struct MlpGrad {
  Eigen::MatrixXd W1, W2, W_out;
  Eigen::VectorXd b1, b2, b_out;

  static MlpGrad zeros_like(const Mlp& net);
  void set_zero();
  int param_count() const;
  void to_flat(double* dst) const;
};

// Accumulates d(loss)/d(params) into g given upstream d(loss)/d(y) = dy.
// Requires the workspace of a forward pass on the same (net, x).
void mlp_backward(const Mlp& net, const Eigen::VectorXd& x, const MlpWorkspace& ws,
                  const Eigen::VectorXd& dy, MlpGrad& g);

}  // namespace merl
