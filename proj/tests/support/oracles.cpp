#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "deal/maskgen.hpp"
#include "deal/synthetic.hpp"

namespace oracle {

namespace {

int wrap(int i, int n) { return ((i % n) + n) % n; }

}  // namespace

Tensor random_tensor(const Shape& shape, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Tensor t(shape);
  for (double& v : t.data()) v = normal(rng);
  return t;
}

Eigen::MatrixXd dense(const std::function<Tensor(const Tensor&)>& fn, const Shape& in) {
  const auto n = static_cast<Eigen::Index>(in.size());
  Eigen::MatrixXd a;
  for (Eigen::Index j = 0; j < n; ++j) {
    Tensor e(in);
    e[j] = 1.0;
    const Tensor col = fn(e);
    if (j == 0) a.resize(static_cast<Eigen::Index>(col.size()), n);
    for (std::size_t i = 0; i < col.size(); ++i) a(static_cast<Eigen::Index>(i), j) = col[i];
  }
  return a;
}

Eigen::VectorXd to_eigen(const Tensor& t) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) v(static_cast<Eigen::Index>(i)) = t[i];
  return v;
}

Tensor from_eigen(const Eigen::VectorXd& v, const Shape& shape) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = v(static_cast<Eigen::Index>(i));
  return t;
}

Tensor conv_downsample(const Tensor& x, const std::vector<std::vector<double>>& k, int stride) {
  const int h = x.height();
  const int w = x.width();
  const int kh = static_cast<int>(k.size());
  const int kw = static_cast<int>(k.front().size());
  Tensor full(x.shape());
  for (int c = 0; c < x.channels(); ++c)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double s = 0.0;
        for (int u = 0; u < kh; ++u)
          for (int v = 0; v < kw; ++v)
            s += k[u][v] * x.at(c, wrap(i - (u - kh / 2), h), wrap(j - (v - kw / 2), w));
        full.at(c, i, j) = s;
      }
  Tensor out(Shape{x.channels(), h / stride, w / stride});
  for (int c = 0; c < x.channels(); ++c)
    for (int i = 0; i < h / stride; ++i)
      for (int j = 0; j < w / stride; ++j) out.at(c, i, j) = full.at(c, i * stride, j * stride);
  return out;
}

Tensor correlate(const deal::ConvStack& k, const Tensor& x) {
  const int h = x.height();
  const int w = x.width();
  const int c0 = k.size / 2;
  Tensor y(Shape{k.out_channels, h, w});
  for (int o = 0; o < k.out_channels; ++o)
    for (int i = 0; i < k.in_channels; ++i)
      for (int u = 0; u < k.size; ++u)
        for (int v = 0; v < k.size; ++v) {
          const double wt = k.weights[((o * k.in_channels + i) * k.size + u) * k.size + v];
          for (int p = 0; p < h; ++p)
            for (int q = 0; q < w; ++q)
              y.at(o, p, q) += wt * x.at(i, wrap(p + u - c0, h), wrap(q + v - c0, w));
        }
  return y;
}

Tensor multiconv(const deal::MultiConv& w, const Tensor& x) {
  Tensor y = correlate(w.layers[2], correlate(w.layers[1], correlate(w.layers[0], x)));
  for (double& v : y.data()) v *= w.scale;
  return y;
}

std::vector<std::complex<double>> dft2(const std::vector<std::complex<double>>& x, int h, int w) {
  std::vector<std::complex<double>> out(x.size());
  const double tau = 2.0 * std::numbers::pi;
  for (int k = 0; k < h; ++k)
    for (int l = 0; l < w; ++l) {
      std::complex<double> s{};
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          s += x[i * w + j] * std::polar(1.0, -tau * (static_cast<double>(k * i) / h +
                                                      static_cast<double>(l * j) / w));
      out[k * w + l] = s;
    }
  return out;
}

std::vector<double> monotone_envelope(const std::vector<double>& v, bool nondecreasing) {
  const std::size_t n = v.size();
  std::vector<double> levels = v;
  std::vector<std::size_t> idx(n, 0);
  std::vector<double> best;
  // Enumerate every vector with entries drawn from v (n^n candidates).
  while (true) {
    std::vector<double> cand(n);
    for (std::size_t i = 0; i < n; ++i) cand[i] = levels[idx[i]];
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      if (nondecreasing ? cand[i] < v[i] : cand[i] > v[i]) ok = false;
      if (i > 0 && (nondecreasing ? cand[i] < cand[i - 1] : cand[i] > cand[i - 1])) ok = false;
    }
    if (ok) {
      if (best.empty()) {
        best = cand;
      } else {
        for (std::size_t i = 0; i < n; ++i)
          best[i] = nondecreasing ? std::min(best[i], cand[i]) : std::max(best[i], cand[i]);
      }
    }
    std::size_t d = 0;
    while (d < n && ++idx[d] == n) idx[d++] = 0;
    if (d == n) break;
  }
  return best;
}

double tv2(const deal::LinearSpline& s) {
  std::vector<double> v(s.values().begin(), s.values().end());
  if (s.symmetric() && s.knot_min() == 0.0) v.insert(v.begin(), v[1]);
  double total = 0.0;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) total += std::abs(v[i - 1] - 2.0 * v[i] + v[i + 1]);
  return total / s.spacing();
}

double loss(const Tensor& x_k, const Tensor& clean, const Tensor& m_k, const Tensor& m_prev,
            const deal::DealModel& model, double gamma) {
  double t1 = 0.0;
  for (std::size_t i = 0; i < x_k.size(); ++i) t1 += (x_k[i] - clean[i]) * (x_k[i] - clean[i]);
  double t2 = 0.0;
  for (std::size_t i = 0; i < m_k.size(); ++i) t2 += (m_k[i] - m_prev[i]) * (m_k[i] - m_prev[i]);
  double t3 = tv2(model.mask.phi1) + tv2(model.mask.phi2) + tv2(model.mask.phi3) + tv2(model.kappa);
  for (const auto& s : model.mask.scale_splines) t3 += tv2(s);
  return t1 + gamma * t2 / m_k.channels() + gamma * t3;
}

deal::DealModel small_model(int num_filters, int kernel_size, std::uint64_t seed) {
  deal::ModelConfig c;
  c.num_filters = num_filters;
  c.kernel_size = kernel_size;
  c.seed = seed;
  return deal::DealModel::initialize(c);
}

GradientToy gradient_toy(int num_filters, int kernel_size, std::uint64_t seed) {
  GradientToy toy{small_model(num_filters, kernel_size, seed), {}};
  deal::DealModel& m = toy.model;
  std::mt19937_64 rng(seed + 17);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (auto* s : {&m.mask.phi1, &m.mask.phi2})
    for (double& v : s->values()) v += 0.01 * noise(rng);
  for (double& v : m.mask.phi3.values()) v = 0.95 * v + 0.003 * noise(rng);
  for (double& v : m.kappa.values()) v = std::max(v, 0.5) + 0.05 * noise(rng);
  m.project_constraints();

  auto& inst = toy.instance;
  inst.clean = deal::piecewise_constant(1, 8, 8, seed + 3);
  inst.y = deal::add_noise(inst.clean, inst.sigma, seed + 4);
  inst.z = inst.y + random_tensor(inst.y.shape(), seed + 5, 0.02);

  deal::MaskTrace trace;
  deal::mask_compute(m.mask, inst.z, inst.sigma, nullptr, &trace);
  const int plane = static_cast<int>(trace.t.plane(0).size());
  for (int c = 0; c < m.num_filters(); ++c) {
    double peak = 1e-12;
    for (int p = 0; p < plane; ++p) peak = std::max(peak, std::abs(trace.t.plane(c)[p]));
    const double target = std::log(2.0 / peak * (inst.sigma / 255.0 + 1e-5));
    for (double& v : m.mask.scale_splines[c].values()) v = target + 0.01 * noise(rng);
  }
  return toy;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("deal_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

double rel_diff(const Tensor& a, const Tensor& b) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace oracle
