#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

namespace lemsim {

// Dense layer stack with tanh hidden activations and a linear output.
// Reverse-mode gradients are hand-rolled; finite-difference agreement is
// part of the test suite, so treat any change here as numerics-critical.
struct Mlp {
  std::vector<Eigen::MatrixXd> w;  // out x in
  std::vector<Eigen::VectorXd> b;

  int n_layers() const { return static_cast<int>(w.size()); }
  int input_size() const { return static_cast<int>(w.front().cols()); }
  int output_size() const { return static_cast<int>(w.back().rows()); }
};

// Orthogonal initialization (QR of a Gaussian draw, sign-fixed), biases
// zero. `gain` scales the output layer only; hidden layers use sqrt(2).
Mlp make_mlp(int in, const std::vector<int>& hidden, int out,
             double output_gain, std::mt19937_64& rng);

struct MlpCache {
  Eigen::VectorXd input;
  std::vector<Eigen::VectorXd> act;  // post-activation per hidden layer
};

Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& x,
                            MlpCache* cache = nullptr);

struct MlpGrads {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;

  static MlpGrads zeros_like(const Mlp& net);
  void add_scaled(const MlpGrads& other, double s);
  double squared_norm() const;
};

// Accumulates into `g`; `d_out` is dLoss/d(output).
void mlp_backward(const Mlp& net, const MlpCache& cache,
                  const Eigen::VectorXd& d_out, MlpGrads& g);

// Adaptive-moment optimizer state for one Mlp (beta1 0.9, beta2 0.999,
// eps 1e-8). Deterministic; step count shared across the net's tensors.
struct Adam {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  long t = 0;

  static Adam zeros_like(const Mlp& net);
  void update(Mlp& net, const MlpGrads& g, double lr);
};

}  // namespace lemsim
