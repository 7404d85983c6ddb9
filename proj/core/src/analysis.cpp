#include "perco/analysis.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>

#include "perco/error.hpp"
#include "perco/rng.hpp"

namespace perco {

double osc(std::span<const double> values) {
  if (values.empty()) throw PreconditionError("oscillation of an empty set");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return *hi - *lo;
}

double lq_centered(std::span<const double> values, double q, LqNormalization norm, double radius, int dim) {
  if (values.empty()) throw PreconditionError("centred norm of an empty set");
  if (!(q >= 1.0)) throw PreconditionError("exponent q must be >= 1");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double s = 0.0;
  for (double v : values) s += std::pow(std::abs(v - mean), q);
  const double denom = norm == LqNormalization::average ? static_cast<double>(values.size()) : std::pow(radius, dim);
  return std::pow(s / denom, 1.0 / q);
}

std::vector<double> restrict_to_ball(const ClusterGraph& g, std::span<const double> u, const Point& center,
                                     double radius) {
  if (u.size() != static_cast<std::size_t>(g.num_vertices())) throw DataError("function length does not match the cluster");
  std::vector<double> out;
  for (std::int32_t i = 0; i < g.num_vertices(); ++i) {
    if (linf_norm(sub(g.point(i), center), g.dim()) <= radius) out.push_back(u[static_cast<std::size_t>(i)]);
  }
  return out;
}

double heat_kernel(double r, std::span<const double> x) {
  double n2 = 0.0;
  for (double v : x) n2 += v * v;
  return std::pow(r, -static_cast<double>(x.size())) * std::exp(-n2 / (r * r));
}

std::vector<double> gaussian_average(const GridField& f, double r, std::span<const double> x0) {
  const GridSpec& g = f.grid;
  const int d = g.dim;
  if (static_cast<int>(x0.size()) != d) throw PreconditionError("centre has the wrong dimension");
  if (r < g.spacing * (1.0 - 1e-12)) throw PreconditionError("kernel radius below the grid spacing");
  const double reach = 6.0 * r;
  std::array<int, kMaxDim> lo{};
  std::array<int, kMaxDim> hi{};
  for (int i = 0; i < d; ++i) {
    const double a = (x0[static_cast<std::size_t>(i)] - reach - g.origin[i]) / g.spacing;
    const double b = (x0[static_cast<std::size_t>(i)] + reach - g.origin[i]) / g.spacing;
    if (a < -1e-9 || b > g.count[i] - 1 + 1e-9) throw BoundsError("truncation ball of the heat kernel leaves the grid");
    lo[i] = static_cast<int>(std::ceil(a - 1e-9));
    hi[i] = static_cast<int>(std::floor(b + 1e-9));
  }
  std::vector<double> out(static_cast<std::size_t>(f.components), 0.0);
  const double hd = std::pow(g.spacing, d);
  std::array<int, kMaxDim> k = lo;
  std::array<double, kMaxDim> z{};
  while (true) {
    double n2 = 0.0;
    for (int i = 0; i < d; ++i) {
      z[i] = g.origin[i] + g.spacing * k[i] - x0[static_cast<std::size_t>(i)];
      n2 += z[i] * z[i];
    }
    if (n2 <= reach * reach) {
      const double w = heat_kernel(r, std::span<const double>(z.data(), static_cast<std::size_t>(d))) * hd;
      const std::int64_t idx = g.index(k);
      for (int c = 0; c < f.components; ++c) out[static_cast<std::size_t>(c)] += w * f.at(idx, c);
    }
    int i = d - 1;
    while (i >= 0 && ++k[i] > hi[i]) {
      k[i] = lo[i];
      --i;
    }
    if (i < 0) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Separable smoothed coarse gradient

std::vector<double> smoothed_coarse_gradient(const Partition& p, const CoarseFunction& f, const Mollifier& eta,
                                             double R, const Point& x0, double truncation) {
  const int d = p.dim();
  if (f.values.size() != p.lookup().size() || f.source != p.fingerprint()) throw DataError("coarse function does not match the partition");
  if (!(R > 0.0)) throw PreconditionError("radius must be positive");
  const int T = static_cast<int>(std::floor(truncation));
  const Box window = Box::ball(d, x0, T + 1);
  if (!p.box().contains(window)) throw BoundsError("smoothing window leaves the box");

  // Quadrature nodes on s in (-1, 1), the support of the window of eta.
  static constexpr std::array<double, 5> nodes = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                                  0.9061798459386640};
  static constexpr std::array<double, 5> weights = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                                    0.4786286704993665, 0.2369268850561891};
  const double h = eta.spec().resolution;
  const int panels = static_cast<int>(std::ceil(2.0 / h));
  const double ph = 2.0 / panels;
  std::vector<double> s_nodes;
  std::vector<double> w_val;
  std::vector<double> w_der;
  for (int k = 0; k < panels; ++k) {
    const double mid = -1.0 + (k + 0.5) * ph;
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      const double s = mid + 0.5 * ph * nodes[j];
      const double w = 0.5 * ph * weights[j];
      s_nodes.push_back(s);
      w_val.push_back(w * eta.window(s));
      w_der.push_back(w * eta.window_derivative(s));
    }
  }
  // A(c) = int g(x0 - c - s) W(s) ds, B(c) likewise with W', g(z) = exp(-z^2/R^2)/R.
  const int span = 2 * T + 3;
  std::vector<std::vector<double>> A(static_cast<std::size_t>(d), std::vector<double>(static_cast<std::size_t>(span)));
  std::vector<std::vector<double>> B = A;
  for (int i = 0; i < d; ++i) {
    for (int o = -T - 1; o <= T + 1; ++o) {
      double a = 0.0;
      double b = 0.0;
      for (std::size_t k = 0; k < s_nodes.size(); ++k) {
        const double z = static_cast<double>(-o) - s_nodes[k];
        const double g = std::exp(-z * z / (R * R)) / R;
        a += w_val[k] * g;
        b += w_der[k] * g;
      }
      A[static_cast<std::size_t>(i)][static_cast<std::size_t>(o + T + 1)] = a;
      B[static_cast<std::size_t>(i)][static_cast<std::size_t>(o + T + 1)] = b;
    }
  }
  const BoxIndexer idx(p.box());
  const BoxIndexer wi(window);
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  for (std::int64_t li = 0; li < wi.size(); ++li) {
    const Point x = wi.point(li);
    const double fx = f.values[static_cast<std::size_t>(idx.index(x))];
    if (fx == 0.0) continue;
    std::array<double, kMaxDim> a{};
    std::array<double, kMaxDim> b{};
    for (int i = 0; i < d; ++i) {
      const auto o = static_cast<std::size_t>(x[i] - x0[i] + T + 1);
      a[i] = A[static_cast<std::size_t>(i)][o];
      b[i] = B[static_cast<std::size_t>(i)][o];
    }
    for (int j = 0; j < d; ++j) {
      double term = b[j];
      for (int i = 0; i < d; ++i) {
        if (i != j) term *= a[i];
      }
      out[static_cast<std::size_t>(j)] += fx * term;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multiscale Poincare functional

namespace {

std::array<double, kMaxDim> grid_center(const GridSpec& g) {
  std::array<double, kMaxDim> c{};
  for (int i = 0; i < g.dim; ++i) c[i] = g.origin[i] + 0.5 * g.spacing * (g.count[i] - 1);
  return c;
}

int fft_size(int n) {
  for (int m = n;; ++m) {
    int r = m;
    for (int p : {2, 3, 5, 7}) {
      while (r % p == 0) r /= p;
    }
    if (r == 1) return m;
  }
}

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

double multiscale_lhs(const GridField& u, double R, double q) {
  if (u.components != 1) throw PreconditionError("multiscale functional needs a scalar field");
  const GridSpec& g = u.grid;
  const auto c = grid_center(g);
  std::vector<double> vals;
  for (std::int64_t k = 0; k < g.size(); ++k) {
    const auto y = g.position(k);
    double n2 = 0.0;
    for (int i = 0; i < g.dim; ++i) n2 += (y[i] - c[i]) * (y[i] - c[i]);
    if (n2 <= R * R) vals.push_back(u.at(k));
  }
  if (vals.empty()) throw PreconditionError("ball B_R holds no grid point");
  return lq_centered(vals, q);
}

double multiscale_rhs(const GridField& u, double R, double q, const MultiscaleOptions& opts) {
  if (u.components != 1) throw PreconditionError("multiscale functional needs a scalar field");
  const GridSpec& g = u.grid;
  const int d = g.dim;
  const double h = g.spacing;
  if (!(R >= h)) throw PreconditionError("radius below the grid spacing");
  const double need = 2.0 * opts.weight_cutoff * R;
  for (int i = 0; i < d; ++i) {
    if (0.5 * h * (g.count[i] - 1) < need - 1e-9) throw BoundsError("grid too small for the spatial weight truncation");
  }
  const auto center = grid_center(g);

  // Central-difference gradient, one-sided at the grid edge.
  std::array<int, kMaxDim> N{1, 1, 1};
  std::int64_t total = 1;
  for (int i = 0; i < d; ++i) {
    N[i] = fft_size(g.count[i]);
    total *= N[i];
  }
  const int last_half = N[d - 1] / 2 + 1;
  std::int64_t ctotal = total / N[d - 1] * last_half;
  std::vector<fftw_complex*> grad_hat(static_cast<std::size_t>(d));
  double* work = fftw_alloc_real(static_cast<std::size_t>(total));
  fftw_complex* work_hat = fftw_alloc_complex(static_cast<std::size_t>(ctotal));
  fftw_plan fwd;
  fftw_plan inv;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fwd = fftw_plan_dft_r2c(d, N.data(), work, work_hat, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r(d, N.data(), work_hat, work, FFTW_ESTIMATE);
  }
  auto padded_index = [&](const std::array<int, kMaxDim>& k) {
    std::int64_t idx = 0;
    for (int i = 0; i < d; ++i) idx = idx * N[i] + k[i];
    return idx;
  };
  for (int a = 0; a < d; ++a) {
    std::fill(work, work + total, 0.0);
    for (std::int64_t k = 0; k < g.size(); ++k) {
      auto m = g.multi_index(k);
      auto mp = m;
      auto mm = m;
      double scale = 2.0 * h;
      if (m[a] + 1 < g.count[a]) {
        ++mp[a];
      } else {
        scale = h;
      }
      if (m[a] > 0) {
        --mm[a];
      } else {
        scale = h;
      }
      work[padded_index(m)] = (u.at(g.index(mp)) - u.at(g.index(mm))) / scale;
    }
    fftw_execute(fwd);
    grad_hat[static_cast<std::size_t>(a)] = fftw_alloc_complex(static_cast<std::size_t>(ctotal));
    std::memcpy(grad_hat[static_cast<std::size_t>(a)], work_hat, sizeof(fftw_complex) * static_cast<std::size_t>(ctotal));
  }

  // Evaluation points: |x - centre| <= cutoff * R.
  const double wcut = opts.weight_cutoff * R;
  std::vector<std::int64_t> eval_padded;
  std::vector<double> eval_weight;
  for (std::int64_t k = 0; k < g.size(); ++k) {
    const auto y = g.position(k);
    double n2 = 0.0;
    for (int i = 0; i < d; ++i) n2 += (y[i] - center[i]) * (y[i] - center[i]);
    if (n2 > wcut * wcut) continue;
    eval_padded.push_back(padded_index(g.multi_index(k)));
    eval_weight.push_back(std::pow(h, d) * std::pow(R, -d) * std::exp(-std::sqrt(n2) / (2.0 * R)));
  }
  std::vector<double> integral(eval_padded.size(), 0.0);

  // Log-spaced r nodes on [h, 2R], trapezoid in log r of r^2 |Phi_r * grad u|^2.
  const int nr = std::max(2, opts.r_nodes);
  const double lr0 = std::log(h);
  const double lr1 = std::log(2.0 * R);
  const double dl = (lr1 - lr0) / (nr - 1);
  std::vector<double> sq(eval_padded.size());
  for (int t = 0; t < nr; ++t) {
    const double r = std::exp(lr0 + t * dl);
    // DFT of the per-axis truncated kernel (h/r) exp(-(jh)^2/r^2), |jh| <= 6r.
    std::vector<std::vector<double>> khat(static_cast<std::size_t>(d));
    const int J = static_cast<int>(std::floor(6.0 * r / h + 1e-9));
    for (int i = 0; i < d; ++i) {
      const int len = i == d - 1 ? last_half : N[i];
      auto& kh = khat[static_cast<std::size_t>(i)];
      kh.assign(static_cast<std::size_t>(len), 0.0);
      for (int m = 0; m < len; ++m) {
        double s = 0.0;
        for (int j = -J; j <= J; ++j) {
          s += (h / r) * std::exp(-(j * h) * (j * h) / (r * r)) * std::cos(2.0 * std::numbers::pi * m * j / N[i]);
        }
        kh[static_cast<std::size_t>(m)] = s;
      }
    }
    std::fill(sq.begin(), sq.end(), 0.0);
    for (int a = 0; a < d; ++a) {
      const fftw_complex* src = grad_hat[static_cast<std::size_t>(a)];
      for (std::int64_t c = 0; c < ctotal; ++c) {
        std::int64_t rest = c;
        double factor = 1.0;
        for (int i = d - 1; i >= 0; --i) {
          const int len = i == d - 1 ? last_half : N[i];
          factor *= khat[static_cast<std::size_t>(i)][static_cast<std::size_t>(rest % len)];
          rest /= len;
        }
        work_hat[c][0] = src[c][0] * factor;
        work_hat[c][1] = src[c][1] * factor;
      }
      fftw_execute(inv);
      const double norm = 1.0 / static_cast<double>(total);
      for (std::size_t e = 0; e < eval_padded.size(); ++e) {
        const double v = work[eval_padded[e]] * norm;
        sq[e] += v * v;
      }
    }
    const double tw = (t == 0 || t == nr - 1) ? 0.5 * dl : dl;
    for (std::size_t e = 0; e < sq.size(); ++e) {
      integral[e] += tw * r * r * sq[e];
      if (t == 0) integral[e] += sq[e] * h * h / 2.0;
    }
  }
  for (auto* p : grad_hat) fftw_free(p);
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  fftw_free(work);
  fftw_free(work_hat);

  double total_sum = 0.0;
  for (std::size_t e = 0; e < integral.size(); ++e) total_sum += eval_weight[e] * std::pow(integral[e], q / 2.0);
  return std::pow(total_sum, 1.0 / q);
}

// ---------------------------------------------------------------------------
// Meyers and Caccioppoli

std::vector<double> meyers_ratio(const ClusterGraph& g, std::span<const double> v, const VectorField& xi,
                                 const TriadicCube& cube, std::span<const double> eps) {
  if (g.empty()) throw EmptyClusterError("empty cluster");
  const auto gv = vertex_magnitude(g, gradient(g, v));
  const auto gx = vertex_magnitude(g, xi);
  const Box inner = cube.box();
  const Box outer = cube.dilated(4.0 / 3.0);
  const double vin = static_cast<double>(inner.volume());
  const double vout = static_cast<double>(outer.volume());
  std::vector<double> out;
  for (double e : eps) {
    const double p = 2.0 + e;
    double lhs = 0.0;
    double rhs2 = 0.0;
    double rhsx = 0.0;
    for (std::int32_t i = 0; i < g.num_vertices(); ++i) {
      const Point& x = g.point(i);
      const auto k = static_cast<std::size_t>(i);
      if (inner.contains(x)) lhs += std::pow(gv[k], p);
      if (outer.contains(x)) {
        rhs2 += gv[k] * gv[k];
        rhsx += std::pow(gx[k], p);
      }
    }
    const double num = std::pow(lhs / vin, 1.0 / p);
    const double den = std::sqrt(rhs2 / vout) + std::pow(rhsx / vout, 1.0 / p);
    out.push_back(den == 0.0 ? (num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity()) : num / den);
  }
  return out;
}

double caccioppoli_ratio(const ClusterGraph& g, std::span<const double> u, const VectorField& xi, const Box& outer,
                         const Box& inner, double r) {
  const auto gu = vertex_magnitude(g, gradient(g, u));
  const auto gx = vertex_magnitude(g, xi);
  double lhs = 0.0;
  double shell = 0.0;
  double forcing = 0.0;
  for (std::int32_t i = 0; i < g.num_vertices(); ++i) {
    const Point& x = g.point(i);
    const auto k = static_cast<std::size_t>(i);
    if (inner.contains(x)) lhs += gu[k] * gu[k];
    if (outer.contains(x)) {
      forcing += gx[k] * gx[k];
      if (!inner.contains(x)) shell += u[k] * u[k];
    }
  }
  const double rhs = shell / (r * r) + forcing;
  if (rhs == 0.0) return lhs == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return lhs / rhs;
}

// ---------------------------------------------------------------------------
// Moment calibration

MomentEstimate estimate_Os(std::span<const double> samples, double s) {
  if (!(s > 0.0)) throw PreconditionError("exponent s must be positive");
  if (samples.size() < 30) throw EstimationError("estimate_Os needs at least 30 samples");
  double mx = 0.0;
  for (double x : samples) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw DataError("samples must be finite and nonnegative");
    mx = std::max(mx, x);
  }
  MomentEstimate est;
  est.s = s;
  est.count = static_cast<std::int64_t>(samples.size());
  if (mx == 0.0) {
    est.degenerate = true;
    est.achieved = 1.0;
    return est;
  }
  auto mean_exp = [&](double theta) {
    double acc = 0.0;
    for (double x : samples) acc += std::exp(std::pow(x / theta, s));
    return acc / static_cast<double>(samples.size());
  };
  double lo = mx / 50.0;
  double hi = mx * 50.0;
  if (mean_exp(hi) > 2.0) throw EstimationError("theta bracket does not contain the root");
  if (mean_exp(lo) <= 2.0) {
    est.theta = lo;
    est.achieved = mean_exp(lo);
    return est;
  }
  while ((hi - lo) > 1e-6 * hi) {
    const double mid = std::sqrt(lo * hi);
    if (mean_exp(mid) <= 2.0) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  est.theta = hi;
  est.achieved = mean_exp(hi);
  return est;
}

double tail_exponent(std::span<const double> samples) {
  if (samples.size() < 100) throw EstimationError("tail exponent needs at least 100 samples");
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const auto n = static_cast<double>(x.size());
  const std::size_t start = static_cast<std::size_t>(std::floor(0.75 * (n - 1)));
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = start; i < x.size(); ++i) {
    if (i + 1 < x.size() && x[i + 1] == x[i]) continue;  // last copy of each value
    const double t = x[i];
    const double p = static_cast<double>(x.size() - 1 - i) / n;  // fraction strictly above t
    if (!(t > 0.0) || p <= 0.0) continue;
    const double mlog = -std::log(p);
    if (!(mlog > 0.0)) continue;
    lx.push_back(std::log(t));
    ly.push_back(std::log(mlog));
  }
  if (lx.size() < 3) throw EstimationError("degenerate tail: too few distinct upper-quartile values");
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(lx.size());
  double var = 0.0;
  for (double v : lx) var += (v - mx) * (v - mx);
  if (var < 1e-14) throw EstimationError("degenerate tail: upper quartile has no spread");
  return fit_line(lx, ly).slope;
}

// ---------------------------------------------------------------------------
// Resampling sensitivity

std::vector<SensitivityResult> resampling_sensitivity(const Environment& env, const EnvVectorFunctional& functional,
                                                      std::span<const EdgeRef> edges, int resamples,
                                                      std::uint64_t aux_seed, bool strict) {
  if (resamples < 1) throw PreconditionError("need at least one resample");
  std::vector<std::string> warnings;
  if (resamples < 8) {
    const std::string msg = "only " + std::to_string(resamples) + " resamples per edge; conditional means are imprecise";
    if (strict) throw EstimationError(msg);
    warnings.push_back(msg);
  }
  const std::vector<double> base = functional(env);
  std::vector<SensitivityResult> res(base.size());
  for (std::size_t c = 0; c < base.size(); ++c) {
    res[c].base = base[c];
    res[c].warnings = warnings;
  }
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const float old_value = env.conductance(edges[k]);
    std::vector<double> mean(base.size(), 0.0);
    for (int j = 0; j < resamples; ++j) {
      const std::uint64_t seed = sample_seed(aux_seed, k * 1000003ULL + static_cast<std::uint64_t>(j));
      const Environment other = resample_edge(env, edges[k], seed);
      const std::vector<double> v = other.conductance(edges[k]) == old_value ? base : functional(other);
      if (v.size() != base.size()) throw DataError("functional changed its output length");
      for (std::size_t c = 0; c < base.size(); ++c) mean[c] += v[c];
    }
    for (std::size_t c = 0; c < base.size(); ++c) {
      const double diff = base[c] - mean[c] / resamples;
      res[c].per_edge.push_back(diff * diff);
      res[c].value += diff * diff;
    }
  }
  return res;
}

SensitivityResult resampling_sensitivity(const Environment& env, const EnvFunctional& functional,
                                         std::span<const EdgeRef> edges, int resamples, std::uint64_t aux_seed,
                                         bool strict) {
  auto wrapped = [&](const Environment& e) { return std::vector<double>{functional(e)}; };
  return resampling_sensitivity(env, EnvVectorFunctional(wrapped), edges, resamples, aux_seed, strict).front();
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw PreconditionError("line fit needs two or more paired points");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw PreconditionError("line fit needs two distinct abscissae");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  if (x.size() > 2) {
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = y[i] - (f.intercept + f.slope * x[i]);
      sse += e * e;
    }
    f.slope_stderr = std::sqrt(sse / (n - 2.0) / sxx);
  }
  return f;
}

}  // namespace perco
