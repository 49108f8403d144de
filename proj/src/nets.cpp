#include "lemsim/nets.hpp"

#include <cmath>
#include <stdexcept>

#include "lemsim/rng.hpp"

namespace lemsim {

namespace {

Eigen::MatrixXd orthogonal(int rows, int cols, double gain,
                           std::mt19937_64& rng) {
  // QR of a square-or-tall Gaussian matrix; transpose back for wide shapes.
  int n = std::max(rows, cols), m = std::min(rows, cols);
  Eigen::MatrixXd a(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) a(i, j) = rand_normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, m);
  Eigen::MatrixXd r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  for (int j = 0; j < m; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  if (rows < cols) return gain * q.transpose();
  return gain * q;
}

}  // namespace

Mlp make_mlp(int in, const std::vector<int>& hidden, int out,
             double output_gain, std::mt19937_64& rng) {
  if (in <= 0 || out <= 0) throw std::invalid_argument("bad mlp shape");
  Mlp net;
  int prev = in;
  for (int h : hidden) {
    if (h <= 0) throw std::invalid_argument("bad hidden size");
    net.w.push_back(orthogonal(h, prev, std::sqrt(2.0), rng));
    net.b.push_back(Eigen::VectorXd::Zero(h));
    prev = h;
  }
  net.w.push_back(orthogonal(out, prev, output_gain, rng));
  net.b.push_back(Eigen::VectorXd::Zero(out));
  return net;
}

Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& x,
                            MlpCache* cache) {
  if (cache) {
    cache->input = x;
    cache->act.clear();
  }
  Eigen::VectorXd h = x;
  int last = net.n_layers() - 1;
  for (int l = 0; l < last; ++l) {
    h = (net.w[l] * h + net.b[l]).array().tanh().matrix();
    if (cache) cache->act.push_back(h);
  }
  return net.w[last] * h + net.b[last];
}

MlpGrads MlpGrads::zeros_like(const Mlp& net) {
  MlpGrads g;
  for (int l = 0; l < net.n_layers(); ++l) {
    g.w.push_back(Eigen::MatrixXd::Zero(net.w[l].rows(), net.w[l].cols()));
    g.b.push_back(Eigen::VectorXd::Zero(net.b[l].size()));
  }
  return g;
}

void MlpGrads::add_scaled(const MlpGrads& other, double s) {
  for (std::size_t l = 0; l < w.size(); ++l) {
    w[l] += s * other.w[l];
    b[l] += s * other.b[l];
  }
}

double MlpGrads::squared_norm() const {
  double s = 0.0;
  for (std::size_t l = 0; l < w.size(); ++l)
    s += w[l].squaredNorm() + b[l].squaredNorm();
  return s;
}

void mlp_backward(const Mlp& net, const MlpCache& cache,
                  const Eigen::VectorXd& d_out, MlpGrads& g) {
  int last = net.n_layers() - 1;
  Eigen::VectorXd d = d_out;  // dLoss/d(pre-activation of layer l)
  for (int l = last; l >= 0; --l) {
    const Eigen::VectorXd& in = l == 0 ? cache.input : cache.act[l - 1];
    g.w[l].noalias() += d * in.transpose();
    g.b[l] += d;
    if (l > 0) {
      Eigen::VectorXd dh = net.w[l].transpose() * d;
      // through tanh: 1 - act^2
      d = (dh.array() * (1.0 - cache.act[l - 1].array().square())).matrix();
    }
  }
}

Adam Adam::zeros_like(const Mlp& net) {
  Adam a;
  for (int l = 0; l < net.n_layers(); ++l) {
    a.mw.push_back(Eigen::MatrixXd::Zero(net.w[l].rows(), net.w[l].cols()));
    a.vw.push_back(Eigen::MatrixXd::Zero(net.w[l].rows(), net.w[l].cols()));
    a.mb.push_back(Eigen::VectorXd::Zero(net.b[l].size()));
    a.vb.push_back(Eigen::VectorXd::Zero(net.b[l].size()));
  }
  return a;
}

void Adam::update(Mlp& net, const MlpGrads& g, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++t;
  double c1 = 1.0 - std::pow(b1, double(t));
  double c2 = 1.0 - std::pow(b2, double(t));
  for (int l = 0; l < net.n_layers(); ++l) {
    mw[l] = b1 * mw[l] + (1.0 - b1) * g.w[l];
    vw[l] = b2 * vw[l].array().matrix() +
            (1.0 - b2) * g.w[l].array().square().matrix();
    net.w[l].array() -=
        lr * (mw[l].array() / c1) / ((vw[l].array() / c2).sqrt() + eps);
    mb[l] = b1 * mb[l] + (1.0 - b1) * g.b[l];
    vb[l] = b2 * vb[l].array().matrix() +
            (1.0 - b2) * g.b[l].array().square().matrix();
    net.b[l].array() -=
        lr * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + eps);
  }
}

}  // namespace lemsim
