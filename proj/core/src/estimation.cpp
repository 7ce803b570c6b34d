#include "lgcps/estimation.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace lgcps {

namespace {

constexpr double kHalfPi = 1.57079632679489661923;

double angle_from_coord(double x) { return kHalfPi - std::atan(x); }
double coord_from_angle(double theta) { return std::tan(kHalfPi - theta); }

}  // namespace

Eigen::MatrixXd correlation_from_angles(const Eigen::VectorXd& x, int p) {
  if (x.size() != p * (p - 1) / 2)
    throw std::invalid_argument("correlation_from_angles: wrong angle count");
  Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(p, p);
  lower(0, 0) = 1.0;
  int idx = 0;
  for (int i = 1; i < p; ++i) {
    double sin_prod = 1.0;
    for (int j = 0; j < i; ++j) {
      const double theta = angle_from_coord(x(idx++));
      lower(i, j) = std::cos(theta) * sin_prod;
      sin_prod *= std::sin(theta);
    }
    lower(i, i) = sin_prod;
  }
  Eigen::MatrixXd rho = lower * lower.transpose();
  rho = 0.5 * (rho + rho.transpose().eval());
  rho.diagonal().setOnes();
  return rho;
}

Eigen::VectorXd angles_from_correlation(const Eigen::MatrixXd& rho) {
  const int p = static_cast<int>(rho.rows());
  if (rho.cols() != p) throw std::invalid_argument("angles_from_correlation: not square");
  Eigen::VectorXd x(p * (p - 1) / 2);
  if (x.size() == 0) return x;

  Eigen::MatrixXd lower;
  Eigen::MatrixXd attempt = rho;
  for (double jitter : {0.0, 1e-14, 1e-12, 1e-10, 1e-8}) {
    if (jitter > 0.0) attempt.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(attempt);
    if (llt.info() == Eigen::Success) {
      lower = llt.matrixL();
      break;
    }
  }
  if (lower.size() == 0)
    throw std::runtime_error("angles_from_correlation: matrix is not positive semidefinite");
  // unit rows so the implied correlation keeps an exact unit diagonal
  for (int i = 0; i < p; ++i) lower.row(i) /= lower.row(i).norm();

  constexpr double kCosClamp = 1.0 - 1e-15;
  int idx = 0;
  for (int i = 1; i < p; ++i) {
    double sin_prod = 1.0;
    for (int j = 0; j < i; ++j) {
      double c = sin_prod > 1e-150 ? lower(i, j) / sin_prod : 0.0;
      c = std::clamp(c, -kCosClamp, kCosClamp);
      const double theta = std::acos(c);
      x(idx++) = coord_from_angle(theta);
      sin_prod *= std::sin(theta);
    }
  }
  return x;
}

Eigen::VectorXd pack(const ModelParams& params) {
  const PackLayout lay{params.p(), params.q()};
  if (params.eta.rows() != lay.p)
    throw std::invalid_argument("pack: eta must have one row per type");
  Eigen::VectorXd v(lay.size());
  for (int t = 0; t < lay.p; ++t)
    for (int c = 0; c <= lay.q; ++c) v(lay.eta_index(t, c)) = params.eta(t, c);
  for (int t = 0; t < lay.p; ++t) {
    if (!(params.cov.sigma2(t) > 0.0)) throw std::invalid_argument("pack: sigma2 must be > 0");
    v(lay.sigma2_index(t)) = std::log(params.cov.sigma2(t));
  }
  if (!(params.cov.beta_km > 0.0)) throw std::invalid_argument("pack: beta must be > 0");
  v(lay.beta_index()) = std::log(params.cov.beta_km);
  const Eigen::VectorXd angles = angles_from_correlation(params.cov.rho);
  for (int i = 0; i < angles.size(); ++i) v(lay.eta_count() + lay.p + 1 + i) = angles(i);
  return v;
}

ModelParams unpack(const Eigen::VectorXd& packed, int p, int q) {
  const PackLayout lay{p, q};
  if (packed.size() != lay.size())
    throw std::invalid_argument("unpack: expected length " + std::to_string(lay.size()) +
                                ", got " + std::to_string(packed.size()));
  ModelParams params;
  params.eta.resize(p, q + 1);
  for (int t = 0; t < p; ++t)
    for (int c = 0; c <= q; ++c) params.eta(t, c) = packed(lay.eta_index(t, c));
  params.cov.p = p;
  params.cov.sigma2.resize(p);
  for (int t = 0; t < p; ++t) params.cov.sigma2(t) = std::exp(packed(lay.sigma2_index(t)));
  params.cov.beta_km = std::exp(packed(lay.beta_index()));
  params.cov.rho = correlation_from_angles(packed.tail(lay.angle_count()), p);
  params.cov.nu = 0.5;
  return params;
}

NelderMeadResult nelder_mead_maximize(const std::function<double(const Eigen::VectorXd&)>& fn,
                                      const Eigen::VectorXd& x0,
                                      const NelderMeadOptions& options) {
  const int d = static_cast<int>(x0.size());
  NelderMeadResult result;
  int evals = 0;
  auto g = [&](const Eigen::VectorXd& x) {  // minimized
    ++evals;
    const double v = fn(x);
    return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
  };

  if (d == 0) {
    result.x = x0;
    result.value = fn(x0);
    result.evaluations = 1;
    result.converged = true;
    result.trace.push_back({0, result.value, x0});
    return result;
  }

  std::vector<Eigen::VectorXd> verts(static_cast<size_t>(d) + 1, x0);
  std::vector<double> vals(static_cast<size_t>(d) + 1);
  for (int i = 0; i < d; ++i) verts[static_cast<size_t>(i) + 1](i) += options.init_step;
  for (size_t i = 0; i < verts.size(); ++i) vals[i] = g(verts[i]);

  auto order = [&]() {
    std::vector<size_t> idx(verts.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return vals[a] < vals[b]; });
    std::vector<Eigen::VectorXd> v2(verts.size());
    std::vector<double> f2(vals.size());
    for (size_t k = 0; k < idx.size(); ++k) {
      v2[k] = verts[idx[k]];
      f2[k] = vals[idx[k]];
    }
    verts.swap(v2);
    vals.swap(f2);
  };

  constexpr double kReflect = 1.0, kExpand = 2.0, kContract = 0.5, kShrink = 0.5;
  int iter = 0;
  for (; iter < options.max_iters; ++iter) {
    order();
    result.trace.push_back({iter, -vals[0], verts[0]});

    double diameter = 0.0;
    for (size_t i = 1; i < verts.size(); ++i)
      diameter = std::max(diameter, (verts[i] - verts[0]).cwiseAbs().maxCoeff());
    if (diameter < options.tol) {
      result.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (size_t i = 0; i + 1 < verts.size(); ++i) centroid += verts[i];
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd reflected = centroid + kReflect * (centroid - verts.back());
    const double f_reflected = g(reflected);
    if (f_reflected < vals[0]) {
      const Eigen::VectorXd expanded = centroid + kExpand * (reflected - centroid);
      const double f_expanded = g(expanded);
      if (f_expanded < f_reflected) {
        verts.back() = expanded;
        vals.back() = f_expanded;
      } else {
        verts.back() = reflected;
        vals.back() = f_reflected;
      }
    } else if (f_reflected < vals[vals.size() - 2]) {
      verts.back() = reflected;
      vals.back() = f_reflected;
    } else {
      const bool outside = f_reflected < vals.back();
      const Eigen::VectorXd contracted =
          outside ? (centroid + kContract * (reflected - centroid)).eval()
                  : (centroid + kContract * (verts.back() - centroid)).eval();
      const double f_contracted = g(contracted);
      if (f_contracted < (outside ? f_reflected : vals.back())) {
        verts.back() = contracted;
        vals.back() = f_contracted;
      } else {
        for (size_t i = 1; i < verts.size(); ++i) {
          verts[i] = verts[0] + kShrink * (verts[i] - verts[0]);
          vals[i] = g(verts[i]);
        }
      }
    }
  }
  order();
  result.x = verts[0];
  result.value = -vals[0];
  result.iterations = iter;
  result.evaluations = evals;
  if (result.trace.empty() || result.trace.back().value < result.value)
    result.trace.push_back({iter, result.value, result.x});
  return result;
}

McObjective::McObjective(const PointPatternDataset& data, const FitSettings& settings)
    : data_(data), p_(data.p()), q_(data.q()) {
  if (p_ < 1) throw std::invalid_argument("McObjective: dataset has no patterns");
  auto locs = data.cell_centers();
  if (settings.use_fsa) {
    const auto knots = place_knots(data.grid.region, settings.m);
    sim_ = std::make_unique<FsaJointSimulator>(std::move(locs), knots, settings.block_size, p_,
                                               settings.s, settings.seed);
  } else {
    sim_ = std::make_unique<ExactJointSimulator>(std::move(locs), p_, settings.s, settings.seed);
  }
}

double McObjective::operator()(const ModelParams& params) {
  const Eigen::MatrixXd mean = mean_surface(data_.covariates, params.eta);
  return mc_loglik(mean, data_.patterns, data_.weights, params.cov, *sim_);
}

Eigen::MatrixXd poisson_initial_eta(const PointPatternDataset& data, int max_iters) {
  const Eigen::Index n = data.n_cells();
  const int q = data.q();
  const int p = data.p();

  Eigen::MatrixXd x(n, q + 1);
  x.col(0).setOnes();
  if (q > 0) x.rightCols(q) = data.covariates.values;
  const Eigen::ArrayXd log_w = data.weights.array().log();

  Eigen::MatrixXd eta(p, q + 1);
  for (int t = 0; t < p; ++t) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    for (Eigen::Index cell : data.patterns[static_cast<size_t>(t)].events) y(cell) += 1.0;
    const double total = y.sum();
    if (total <= 0.0) {
      eta.row(t).setZero();
      eta(t, 0) = -20.0;
      continue;
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(q + 1);
    beta(0) = std::log(total / data.weights.sum());
    for (int it = 0; it < max_iters; ++it) {
      const Eigen::ArrayXd lin = (x * beta).array() + log_w;
      const Eigen::ArrayXd mu = lin.min(30.0).max(-30.0).exp() * 1.0;
      const Eigen::ArrayXd z = (lin - log_w) + (y.array() - mu) / mu;
      const Eigen::MatrixXd xw = x.array().colwise() * mu;
      Eigen::MatrixXd normal = xw.transpose() * x;
      normal.diagonal().array() += 1e-10 * normal.diagonal().maxCoeff();
      const Eigen::VectorXd rhs = xw.transpose() * z.matrix();
      const Eigen::VectorXd next = normal.ldlt().solve(rhs);
      const double shift = (next - beta).cwiseAbs().maxCoeff();
      beta = next;
      if (shift < 1e-10) break;
    }
    eta.row(t) = beta.transpose();
  }
  return eta;
}

ModelParams default_init(const PointPatternDataset& data) {
  ModelParams init;
  init.eta = poisson_initial_eta(data);
  init.cov = MultiMaternParams::identity(data.p(), 1000.0);
  return init;
}

namespace {

std::vector<std::pair<int, double>> resolve_fixed(
    const std::vector<std::pair<std::string, double>>& fixed, const ModelParams& init,
    const PackLayout& lay) {
  std::vector<std::pair<int, double>> pins;
  for (const auto& [name, value] : fixed) {
    if (name == "beta" || name == "beta_km") {
      if (!(value > 0.0)) throw std::invalid_argument("fix: beta must be > 0");
      pins.emplace_back(lay.beta_index(), std::log(value));
    } else if (name == "sigma2") {
      if (!(value > 0.0)) throw std::invalid_argument("fix: sigma2 must be > 0");
      for (int t = 0; t < lay.p; ++t) pins.emplace_back(lay.sigma2_index(t), std::log(value));
    } else if (name.rfind("sigma2_", 0) == 0) {
      const int t = std::stoi(name.substr(7));
      if (t < 1 || t > lay.p) throw std::invalid_argument("fix: bad type in " + name);
      if (!(value > 0.0)) throw std::invalid_argument("fix: sigma2 must be > 0");
      pins.emplace_back(lay.sigma2_index(t - 1), std::log(value));
    } else if (name == "rho") {
      Eigen::MatrixXd rho = Eigen::MatrixXd::Constant(lay.p, lay.p, value);
      rho.diagonal().setOnes();
      MultiMaternParams check = init.cov;
      check.rho = rho;
      require_valid(check);
      const Eigen::VectorXd angles = angles_from_correlation(rho);
      for (int i = 0; i < angles.size(); ++i)
        pins.emplace_back(lay.eta_count() + lay.p + 1 + i, angles(i));
    } else if (name.rfind("rho_", 0) == 0) {
      const std::string pair = name.substr(4);
      if (pair.size() != 2 || !std::isdigit(pair[0]) || !std::isdigit(pair[1]))
        throw std::invalid_argument("fix: expected rho_<i><j>, got " + name);
      const int a = pair[0] - '0', b = pair[1] - '0';
      if (a < 1 || b <= a || b > lay.p) throw std::invalid_argument("fix: bad pair in " + name);
      Eigen::MatrixXd rho = init.cov.rho;
      rho(a - 1, b - 1) = value;
      rho(b - 1, a - 1) = value;
      MultiMaternParams check = init.cov;
      check.rho = rho;
      require_valid(check);
      // Pin the angle that carries this entry. Exact for rho_1j; for
      // deeper rows the pin is exact only while the earlier entries of
      // that row are fixed too.
      const Eigen::VectorXd angles = angles_from_correlation(rho);
      const int local = (b - 1) * (b - 2) / 2 + (a - 1);
      pins.emplace_back(lay.angle_index(b - 1, a - 1), angles(local));
    } else if (name.rfind("eta_", 0) == 0) {
      const size_t us = name.find('_', 4);
      if (us == std::string::npos)
        throw std::invalid_argument("fix: expected eta_<type>_<coeff>, got " + name);
      const int t = std::stoi(name.substr(4, us - 4));
      const int c = std::stoi(name.substr(us + 1));
      if (t < 1 || t > lay.p || c < 0 || c > lay.q)
        throw std::invalid_argument("fix: bad indices in " + name);
      pins.emplace_back(lay.eta_index(t - 1, c), value);
    } else {
      throw std::invalid_argument(
          "fix: unknown parameter '" + name +
          "' (expected beta, sigma2, sigma2_<i>, rho, rho_<i><j>, eta_<type>_<coeff>)");
    }
  }
  return pins;
}

}  // namespace

FitResult fit(const PointPatternDataset& data, const ModelParams& init,
              const FitSettings& settings) {
  require_valid(init.cov);
  if (init.cov.p != data.p())
    throw std::invalid_argument("fit: init covariance type count does not match dataset");
  if (init.eta.rows() != data.p() || init.eta.cols() != data.q() + 1)
    throw std::invalid_argument("fit: init eta must be p x (q+1)");

  const PackLayout lay{data.p(), data.q()};
  McObjective objective(data, settings);

  Eigen::VectorXd x0 = pack(init);
  const auto pins = resolve_fixed(settings.fixed, init, lay);
  std::vector<bool> is_fixed(static_cast<size_t>(lay.size()), false);
  for (const auto& [idx, value] : pins) {
    x0(idx) = value;
    is_fixed[static_cast<size_t>(idx)] = true;
  }
  std::vector<int> free_idx;
  for (int i = 0; i < lay.size(); ++i)
    if (!is_fixed[static_cast<size_t>(i)]) free_idx.push_back(i);

  Eigen::VectorXd base = x0;
  auto expand = [&](const Eigen::VectorXd& xf) {
    Eigen::VectorXd full = base;
    for (size_t i = 0; i < free_idx.size(); ++i) full(free_idx[i]) = xf(static_cast<Eigen::Index>(i));
    return full;
  };
  auto fn = [&](const Eigen::VectorXd& xf) {
    return objective(unpack(expand(xf), lay.p, lay.q));
  };

  Eigen::VectorXd xf0(static_cast<Eigen::Index>(free_idx.size()));
  for (size_t i = 0; i < free_idx.size(); ++i) xf0(static_cast<Eigen::Index>(i)) = x0(free_idx[i]);

  const double f0 = fn(xf0);
  if (!std::isfinite(f0)) {
    const Eigen::MatrixXd mean = mean_surface(data.covariates, init.eta);
    std::ostringstream msg;
    msg << "fit: objective is not finite at the initial parameters (value " << f0
        << "); mean surface range [" << mean.minCoeff() << ", " << mean.maxCoeff()
        << "], total events " << data.total_events() << ", |W| = " << data.weights.sum()
        << ", s = " << settings.s;
    throw std::runtime_error(msg.str());
  }

  const NelderMeadResult nm = nelder_mead_maximize(fn, xf0, settings.nm);

  FitResult result;
  result.params = unpack(expand(nm.x), lay.p, lay.q);
  result.final_mc_loglik = objective(result.params);
  result.iterations = nm.iterations;
  result.evaluations = nm.evaluations;
  result.converged = nm.converged;
  result.trace.reserve(nm.trace.size());
  for (const auto& tp : nm.trace) result.trace.push_back({tp.iteration, tp.value, expand(tp.x)});
  result.settings = settings;
  return result;
}

namespace {

void substitute_parameter(ModelParams& params, const std::string& which, double value) {
  if (which == "beta" || which == "beta_km") {
    params.cov.beta_km = value;
  } else if (which == "sigma2") {
    params.cov.sigma2.setConstant(value);
  } else if (which.rfind("sigma2_", 0) == 0) {
    const int t = std::stoi(which.substr(7));
    if (t < 1 || t > params.p()) throw std::invalid_argument("profile: bad type in " + which);
    params.cov.sigma2(t - 1) = value;
  } else if (which.rfind("rho_", 0) == 0) {
    const std::string pair = which.substr(4);
    if (pair.size() != 2 || !std::isdigit(pair[0]) || !std::isdigit(pair[1]))
      throw std::invalid_argument("profile: expected rho_<i><j>, got " + which);
    const int a = pair[0] - '0', b = pair[1] - '0';
    if (a < 1 || b <= a || b > params.p())
      throw std::invalid_argument("profile: bad pair in " + which);
    params.cov.rho(a - 1, b - 1) = value;
    params.cov.rho(b - 1, a - 1) = value;
  } else if (which.rfind("eta_", 0) == 0) {
    const size_t us = which.find('_', 4);
    if (us == std::string::npos)
      throw std::invalid_argument("profile: expected eta_<type>_<coeff>, got " + which);
    const int t = std::stoi(which.substr(4, us - 4));
    const int c = std::stoi(which.substr(us + 1));
    if (t < 1 || t > params.p() || c < 0 || c >= params.eta.cols())
      throw std::invalid_argument("profile: bad indices in " + which);
    params.eta(t - 1, c) = value;
  } else {
    throw std::invalid_argument("profile: unknown parameter '" + which + "'");
  }
}

}  // namespace

std::vector<ProfilePoint> profile(const PointPatternDataset& data, const ModelParams& params,
                                  const std::string& which, const std::vector<double>& values,
                                  const FitSettings& settings) {
  McObjective objective(data, settings);
  std::vector<ProfilePoint> points;
  points.reserve(values.size());
  for (double v : values) {
    ProfilePoint point;
    point.value = v;
    try {
      ModelParams trial = params;
      substitute_parameter(trial, which, v);
      require_valid(trial.cov);
      point.loglik = objective(trial);
      point.ok = true;
    } catch (const std::exception& e) {
      point.loglik = std::numeric_limits<double>::quiet_NaN();
      point.error = e.what();
    }
    points.push_back(std::move(point));
  }
  return points;
}

}  // namespace lgcps
