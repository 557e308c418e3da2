#include "deblur_forge/optim.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <deque>
#include <limits>

namespace dforge {

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::grad_tol: return "grad_tol";
    case StopReason::loss_rel_tol: return "loss_rel_tol";
    case StopReason::max_iters: return "max_iters";
    case StopReason::line_search_failed: return "line_search_failed";
  }
  return "unknown";
}

namespace {

using Vec = std::vector<double>;

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

struct Point {
  double alpha = 0.0;
  double f = 0.0;
  double df = 0.0;  // directional derivative along d
  Vec x;
  Vec g;
};

class Evaluator {
 public:
  Evaluator(const OptimProblem& problem, std::size_t iteration)
      : problem_(problem), iteration_(iteration) {}

  double operator()(std::span<const double> x, std::span<double> g) {
    ++count;
    const double f = problem_.eval(x, g);
    if (!std::isfinite(f)) {
      throw OptimError("objective returned non-finite loss at iteration " +
                       std::to_string(iteration_) + " (|x| = " + std::to_string(norm(x)) + ")");
    }
    for (double v : g) {
      if (!std::isfinite(v)) {
        throw OptimError("objective returned non-finite gradient at iteration " +
                         std::to_string(iteration_) + " (|x| = " + std::to_string(norm(x)) + ")");
      }
    }
    return f;
  }

  void set_iteration(std::size_t it) { iteration_ = it; }

  std::size_t count = 0;

 private:
  const OptimProblem& problem_;
  std::size_t iteration_;
};

// Minimiser of the cubic through (a, fa, da) and (b, fb, db), safeguarded
// into [lo + 0.1 w, hi - 0.1 w] of the interval spanned by a and b.
double cubic_step(double a, double fa, double da, double b, double fb, double db) {
  const double lo = std::min(a, b);
  const double hi = std::max(a, b);
  const double w = hi - lo;
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  double t = 0.5 * (lo + hi);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = db - da + 2.0 * d2;
    if (denom != 0.0) {
      const double cand = b - (b - a) * (db + d2 - d1) / denom;
      if (std::isfinite(cand)) t = cand;
    }
  }
  return std::clamp(t, lo + 0.1 * w, hi - 0.1 * w);
}

struct LineSearchResult {
  bool ok = false;
  Point best;  // best sufficient-decrease point seen, valid when best.f < f0
};

class StrongWolfe {
 public:
  StrongWolfe(Evaluator& eval, const LbfgsConfig& cfg, std::span<const double> x,
              std::span<const double> d, double f0, double df0)
      : eval_(eval), cfg_(cfg), x_(x), d_(d), f0_(f0), df0_(df0) {
    best_.f = f0;
  }

  LineSearchResult search(double alpha0) {
    Point prev;
    prev.alpha = 0.0;
    prev.f = f0_;
    prev.df = df0_;
    double alpha = alpha0;
    for (std::size_t i = 0; budget_left(); ++i) {
      Point cur = probe(alpha);
      if (cur.f > f0_ + cfg_.c1 * alpha * df0_ || (i > 0 && cur.f >= prev.f)) {
        return zoom(std::move(prev), std::move(cur));
      }
      if (std::abs(cur.df) <= -cfg_.c2 * df0_) return done(std::move(cur));
      if (cur.df >= 0.0) return zoom(std::move(cur), std::move(prev));
      prev = std::move(cur);
      alpha *= 2.0;
    }
    return fail();
  }

 private:
  bool budget_left() const { return evals_ < cfg_.max_line_search_evals; }

  Point probe(double alpha) {
    Point p;
    p.alpha = alpha;
    p.x.resize(x_.size());
    p.g.resize(x_.size());
    for (std::size_t k = 0; k < x_.size(); ++k) p.x[k] = x_[k] + alpha * d_[k];
    p.f = eval_(p.x, p.g);
    p.df = dot(p.g, d_);
    ++evals_;
    if (p.f < best_.f && p.f <= f0_ + cfg_.c1 * alpha * df0_) best_ = p;
    return p;
  }

  LineSearchResult zoom(Point lo, Point hi) {
    while (budget_left()) {
      const double alpha = cubic_step(lo.alpha, lo.f, lo.df, hi.alpha, hi.f, hi.df);
      if (!(std::abs(hi.alpha - lo.alpha) > 1e-16 * std::max(1.0, std::abs(lo.alpha)))) break;
      Point cur = probe(alpha);
      if (cur.f > f0_ + cfg_.c1 * alpha * df0_ || cur.f >= lo.f) {
        hi = std::move(cur);
      } else {
        if (std::abs(cur.df) <= -cfg_.c2 * df0_) return done(std::move(cur));
        if (cur.df * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = std::move(cur);
      }
    }
    return fail();
  }

  LineSearchResult done(Point p) {
    LineSearchResult r;
    r.ok = true;
    r.best = std::move(p);
    return r;
  }

  LineSearchResult fail() {
    LineSearchResult r;
    r.ok = false;
    r.best = best_;
    return r;
  }

  Evaluator& eval_;
  const LbfgsConfig& cfg_;
  std::span<const double> x_;
  std::span<const double> d_;
  double f0_;
  double df0_;
  std::size_t evals_ = 0;
  Point best_;
};

}  // namespace

OptimReport lbfgs_minimize(const OptimProblem& problem, std::span<const double> x0,
                           const LbfgsConfig& config) {
  if (x0.size() != problem.dim) {
    throw std::invalid_argument("initial point has length " + std::to_string(x0.size()) +
                                ", problem dimension is " + std::to_string(problem.dim));
  }
  if (config.memory < 1) throw std::invalid_argument("L-BFGS memory must be >= 1");

  const std::size_t n = problem.dim;
  Evaluator eval(problem, 0);
  Vec x(x0.begin(), x0.end());
  Vec g(n);
  double f = eval(x, g);

  OptimReport report;
  report.loss_history.push_back(f);

  struct Pair {
    Vec s, y;
    double rho;
  };
  std::deque<Pair> history;
  Vec d(n);
  Vec alphas;

  auto finish = [&](bool converged, StopReason reason) {
    report.final_params = x;
    report.final_loss = f;
    report.converged = converged;
    report.reason = reason;
    report.grad_norm = norm(g);
    report.evaluations = eval.count;
    return report;
  };

  if (norm(g) <= config.grad_tol) return finish(true, StopReason::grad_tol);

  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    eval.set_iteration(iter);

    // Two-loop recursion: d = -H g.
    std::copy(g.begin(), g.end(), d.begin());
    alphas.assign(history.size(), 0.0);
    for (std::size_t k = history.size(); k-- > 0;) {
      const Pair& p = history[k];
      alphas[k] = p.rho * dot(p.s, d);
      for (std::size_t i = 0; i < n; ++i) d[i] -= alphas[k] * p.y[i];
    }
    double gamma = 1.0;
    if (!history.empty()) {
      const Pair& last = history.back();
      gamma = dot(last.s, last.y) / dot(last.y, last.y);
    } else {
      gamma = std::min(1.0, 1.0 / norm(g));
    }
    for (double& v : d) v *= gamma;
    for (std::size_t k = 0; k < history.size(); ++k) {
      const Pair& p = history[k];
      const double beta = p.rho * dot(p.y, d);
      for (std::size_t i = 0; i < n; ++i) d[i] += p.s[i] * (alphas[k] - beta);
    }
    for (double& v : d) v = -v;

    double df0 = dot(g, d);
    if (!(df0 < 0.0)) {
      // Curvature information went stale; fall back to steepest descent.
      history.clear();
      const double scale = std::min(1.0, 1.0 / norm(g));
      for (std::size_t i = 0; i < n; ++i) d[i] = -scale * g[i];
      df0 = dot(g, d);
    }
    assert(df0 < 0.0);

    StrongWolfe ls(eval, config, x, d, f, df0);
    LineSearchResult res = ls.search(1.0);
    if (!res.ok) {
      if (res.best.f < f) {
        x = std::move(res.best.x);
        g = std::move(res.best.g);
        f = res.best.f;
        report.iterations = iter + 1;
        report.loss_history.push_back(f);
      }
      return finish(false, StopReason::line_search_failed);
    }

    Pair pair;
    pair.s.resize(n);
    pair.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      pair.s[i] = res.best.x[i] - x[i];
      pair.y[i] = res.best.g[i] - g[i];
    }
    const double f_prev = f;
    x = std::move(res.best.x);
    g = std::move(res.best.g);
    f = res.best.f;
    report.iterations = iter + 1;
    report.loss_history.push_back(f);

    const double sy = dot(pair.s, pair.y);
    if (sy > 1e-10 * norm(pair.s) * norm(pair.y)) {
      pair.rho = 1.0 / sy;
      history.push_back(std::move(pair));
      if (history.size() > config.memory) history.pop_front();
    }

    if (norm(g) <= config.grad_tol) return finish(true, StopReason::grad_tol);
    const double scale = std::max({std::abs(f_prev), std::abs(f), std::numeric_limits<double>::min()});
    if (std::abs(f_prev - f) <= config.loss_rel_tol * scale) {
      return finish(true, StopReason::loss_rel_tol);
    }
  }
  return finish(false, StopReason::max_iters);
}

double check_gradient(const OptimProblem& problem, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  const std::size_t n = problem.dim;
  Vec analytic(n);
  Vec probe(x.begin(), x.end());
  Vec scratch(n);
  problem.eval(probe, analytic);
  double worst = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double orig = probe[k];
    probe[k] = orig + h;
    const double fp = problem.eval(probe, scratch);
    probe[k] = orig - h;
    const double fm = problem.eval(probe, scratch);
    probe[k] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[k] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

}  // namespace dforge
