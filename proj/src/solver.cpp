#include "deepc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string_view>

#include <Eigen/Dense>

#include "deepc/sensitivity.hpp"

namespace deepc {

namespace {

// Largest singular value of A by power iteration on A'A.
double spectral_norm(const Eigen::MatrixXd & A, int iterations = 100)
{
  if (A.size() == 0) { return 0.0; }
  Eigen::VectorXd x = Eigen::VectorXd::Ones(A.cols()) / std::sqrt(static_cast<double>(A.cols()));
  double est = 0.0;
  for (int k = 0; k < iterations; ++k) {
    Eigen::VectorXd y = A.transpose() * (A * x);
    const double nrm  = y.norm();
    if (nrm == 0.0) { return 0.0; }
    const double next = std::sqrt(nrm);
    x = y / nrm;
    if (std::abs(next - est) <= 1e-10 * next) { return next; }
    est = next;
  }
  return est;
}

std::size_t hash_matrix(const Eigen::MatrixXd & A, std::size_t seed)
{
  const std::string_view bytes(
    reinterpret_cast<const char *>(A.data()), sizeof(double) * static_cast<std::size_t>(A.size()));
  return seed ^ (std::hash<std::string_view>{}(bytes) + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

// Largest step in (0, 1] keeping v + a dv > 0 on the masked entries.
double max_step(const Eigen::VectorXd & v, const Eigen::VectorXd & dv, const Mask & mask)
{
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (mask(i) && dv(i) < 0.0) { a = std::min(a, -v(i) / dv(i)); }
  }
  return a;
}

struct Iterate
{
  Eigen::VectorXd z, w;
  double fnorm = std::numeric_limits<double>::infinity();
};

// Cached LU of J, valid for one (P, H) fingerprint and one active pattern.
struct LuCache
{
  std::size_t key = 0;
  Eigen::VectorXd pattern;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
  bool valid = false;
};

class SolveRun
{
public:
  SolveRun(const CompactQp & qp, const SolverOptions & opts, std::size_t key, LuCache & cache)
      : qp_(qp), opts_(opts), key_(key), cache_(cache), n_(qp.n()), m_(qp.m())
  {}

  int iters        = 0;
  int newton_total = 0;
  Iterate cur;
  Iterate best;

  bool budget_left() const { return iters < opts_.max_iter; }

  void consider(const Eigen::VectorXd & z, const Eigen::VectorXd & w)
  {
    const double fnorm = residual(qp_, z, w).value.norm();
    if (fnorm < best.fnorm) { best = Iterate{z, w, fnorm}; }
  }

  // Semismooth Newton on F, run until the residual stops improving on a fixed
  // active pattern; the result is polished well past the stopping threshold
  // whenever the pattern is right.
  void newton()
  {
    double last_fnorm = std::numeric_limits<double>::infinity();
    Eigen::VectorXd last_pattern;
    for (int k = 0; k < opts_.newton_steps && budget_left(); ++k) {
      const Residual r   = residual(qp_, cur.z, cur.w);
      const double fnorm = r.value.norm();
      if (fnorm < best.fnorm) { best = Iterate{cur.z, cur.w, fnorm}; }
      if (fnorm == 0.0) { return; }
      const ProjectionJacobian pj = projection_jacobian(r.z_plus, qp_.box, 0.0);
      const bool same_pattern     = last_pattern.size() == n_ && pj.diagonal == last_pattern;
      if (same_pattern && fnorm > 0.5 * last_fnorm) { return; }

      if (!(cache_.valid && cache_.key == key_ && cache_.pattern == pj.diagonal)) {
        cache_.lu.compute(kkt_jacobian(qp_, pj.diagonal));
        cache_.pattern = pj.diagonal;
        cache_.key     = key_;
        cache_.valid   = true;
      }
      const Eigen::VectorXd step = cache_.lu.solve(-r.value);
      if (!step.allFinite()) { return; }
      cur.z += step.head(n_);
      cur.w += step.tail(m_);
      // clamped coordinates land exactly on proj(z+)
      const Eigen::VectorXd target = project_box(r.z_plus, qp_.box);
      for (Eigen::Index i = 0; i < n_; ++i) {
        if (pj.diagonal(i) == 0.0) { cur.z(i) = target(i); }
      }
      ++iters;
      ++newton_total;
      last_fnorm   = fnorm;
      last_pattern = pj.diagonal;
    }
    consider(cur.z, cur.w);
  }

  void pipg(int count, double alpha, double beta)
  {
    Eigen::VectorXd v = cur.w;
    Eigen::VectorXd slack(m_);
    for (int k = 0; k < count && budget_left(); ++k, ++iters) {
      Eigen::VectorXd g = qp_.gradient(cur.z);
      g.noalias() += qp_.H.transpose() * v;
      cur.z = project_box(cur.z - alpha * g, qp_.box);
      slack = qp_.H * cur.z - qp_.b;
      cur.w += beta * slack;
      v = cur.w + beta * slack;
    }
    consider(cur.z, cur.w);
  }

  // Mehrotra predictor-corrector on the bound-constrained form. Finite bounds
  // get slack/dual pairs (s = z - l, t = u - z kept implicit); degenerate
  // intervals are pinned. Leaves its last iterate in `cur`.
  void interior_point()
  {
    const Eigen::VectorXd & lo = qp_.box.lower;
    const Eigen::VectorXd & hi = qp_.box.upper;
    const Mask has_lo          = lo.array().isFinite();
    const Mask has_hi          = hi.array().isFinite();
    const Mask pinned          = has_lo && has_hi && (lo.array() == hi.array());
    const Mask free_lo         = has_lo && !pinned;
    const Mask free_hi         = has_hi && !pinned;
    const Eigen::Index nbounds = free_lo.count() + free_hi.count();

    Eigen::VectorXd z(n_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      if (pinned(i)) {
        z(i) = lo(i);
      } else if (has_lo(i) && has_hi(i)) {
        z(i) = 0.5 * (lo(i) + hi(i));
      } else if (has_lo(i)) {
        z(i) = lo(i) + 1.0;
      } else if (has_hi(i)) {
        z(i) = hi(i) - 1.0;
      } else {
        z(i) = 0.0;
      }
    }
    Eigen::VectorXd w   = Eigen::VectorXd::Zero(m_);
    Eigen::VectorXd lam = free_lo.cast<double>().matrix();
    Eigen::VectorXd nu  = free_hi.cast<double>().matrix();

    const double scale = 1.0 + qp_.q.norm();
    Eigen::MatrixXd kkt(n_ + m_, n_ + m_);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu;

    for (int k = 0; k < opts_.ipm_max_iter && budget_left(); ++k, ++iters) {
      Eigen::VectorXd s = Eigen::VectorXd::Ones(n_), t = Eigen::VectorXd::Ones(n_);
      double mu = 0.0;
      for (Eigen::Index i = 0; i < n_; ++i) {
        if (free_lo(i)) {
          s(i) = z(i) - lo(i);
          mu += s(i) * lam(i);
        }
        if (free_hi(i)) {
          t(i) = hi(i) - z(i);
          mu += t(i) * nu(i);
        }
      }
      mu = nbounds > 0 ? mu / static_cast<double>(nbounds) : 0.0;

      Eigen::VectorXd grad_l = qp_.gradient(z);  // Pz + q + H'w
      grad_l.noalias() += qp_.H.transpose() * w;
      Eigen::VectorXd rd = grad_l - lam + nu;
      for (Eigen::Index i = 0; i < n_; ++i) {
        if (pinned(i)) { rd(i) = 0.0; }
      }
      const Eigen::VectorXd rp = qp_.H * z - qp_.b;
      if (rd.norm() <= 1e-12 * scale && rp.norm() <= 1e-12 * scale && mu <= 1e-13 * scale) { break; }

      kkt.setZero();
      kkt.topLeftCorner(n_, n_) = qp_.P;
      for (Eigen::Index i = 0; i < n_; ++i) {
        double d = 0.0;
        if (free_lo(i)) { d += lam(i) / s(i); }
        if (free_hi(i)) { d += nu(i) / t(i); }
        kkt(i, i) += d;
      }
      // pinned coordinates: dz = 0
      for (Eigen::Index i = 0; i < n_; ++i) {
        if (pinned(i)) {
          kkt.row(i).setZero();
          kkt(i, i) = 1.0;
        }
      }
      kkt.topRightCorner(n_, m_) = qp_.H.transpose();
      for (Eigen::Index i = 0; i < n_; ++i) {
        if (pinned(i)) { kkt.row(i).tail(m_).setZero(); }
      }
      kkt.bottomLeftCorner(m_, n_) = qp_.H;
      lu.compute(kkt);

      // Newton direction for complementarity targets s.*lam -> c_lo, t.*nu -> c_hi
      Eigen::VectorXd dz, dw, dlam(n_), dnu(n_);
      auto direction = [&](const Eigen::VectorXd & c_lo, const Eigen::VectorXd & c_hi) {
        Eigen::VectorXd top = -grad_l;
        for (Eigen::Index i = 0; i < n_; ++i) {
          if (free_lo(i)) { top(i) += c_lo(i) / s(i); }
          if (free_hi(i)) { top(i) -= c_hi(i) / t(i); }
          if (pinned(i)) { top(i) = 0.0; }
        }
        Eigen::VectorXd rhs(n_ + m_);
        rhs << top, -rp;
        const Eigen::VectorXd sol = lu.solve(rhs);
        dz = sol.head(n_);
        dw = sol.tail(m_);
        dlam.setZero();
        dnu.setZero();
        for (Eigen::Index i = 0; i < n_; ++i) {
          if (free_lo(i)) { dlam(i) = (c_lo(i) - lam(i) * dz(i)) / s(i) - lam(i); }
          if (free_hi(i)) { dnu(i) = (c_hi(i) + nu(i) * dz(i)) / t(i) - nu(i); }
        }
      };
      auto step_length = [&]() {
        double a = std::min(max_step(s, dz, free_lo), max_step(t, -dz, free_hi));
        a        = std::min(a, max_step(lam, dlam, free_lo));
        return std::min(a, max_step(nu, dnu, free_hi));
      };

      const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n_);
      direction(zero, zero);
      if (nbounds > 0) {
        const double a_aff = step_length();
        double mu_aff      = 0.0;
        for (Eigen::Index i = 0; i < n_; ++i) {
          if (free_lo(i)) { mu_aff += (s(i) + a_aff * dz(i)) * (lam(i) + a_aff * dlam(i)); }
          if (free_hi(i)) { mu_aff += (t(i) - a_aff * dz(i)) * (nu(i) + a_aff * dnu(i)); }
        }
        mu_aff /= static_cast<double>(nbounds);
        const double centering = mu > 0.0 ? std::pow(mu_aff / mu, 3.0) : 0.0;
        Eigen::VectorXd c_lo = Eigen::VectorXd::Zero(n_), c_hi = Eigen::VectorXd::Zero(n_);
        for (Eigen::Index i = 0; i < n_; ++i) {
          if (free_lo(i)) { c_lo(i) = centering * mu - dz(i) * dlam(i); }
          if (free_hi(i)) { c_hi(i) = centering * mu + dz(i) * dnu(i); }
        }
        direction(c_lo, c_hi);
      }

      const double a = nbounds > 0 ? std::min(1.0, 0.995 * step_length()) : 1.0;
      if (!(a > 0.0) || !dz.allFinite() || !dw.allFinite()) { break; }
      z += a * dz;
      w += a * dw;
      lam += a * dlam;
      nu += a * dnu;
    }
    cur.z = project_box(z, qp_.box);
    cur.w = w;
    consider(cur.z, cur.w);
  }

private:
  const CompactQp & qp_;
  const SolverOptions & opts_;
  std::size_t key_;
  LuCache & cache_;
  Eigen::Index n_, m_;
};

}  // namespace

struct QpSolver::Workspace
{
  LuCache cache;

  // PIPG step sizes depend only on (P, H)
  std::size_t step_key = 0;
  double alpha = 0.0, beta = 0.0;
  bool has_steps = false;
};

double residual_threshold(const CompactQp & qp, const SolverOptions & opts) { return opts.tol * (1.0 + qp.q.norm()); }

QpSolver::QpSolver(SolverOptions opts) : opts_(opts), ws_(std::make_unique<Workspace>())
{
  if (!(opts_.tol > 0.0)) { throw std::invalid_argument("solver tolerance must be positive"); }
  if (opts_.max_iter < 0) { throw std::invalid_argument("iteration budget must be non-negative"); }
}

QpSolver::~QpSolver()                                = default;
QpSolver::QpSolver(QpSolver &&) noexcept             = default;
QpSolver & QpSolver::operator=(QpSolver &&) noexcept = default;

SaddlePoint QpSolver::solve(const CompactQp & qp, const SaddlePoint * warm)
{
  qp.validate();
  const Eigen::Index n  = qp.n(), m = qp.m();
  const double thresh   = residual_threshold(qp, opts_);
  const std::size_t key = hash_matrix(qp.H, hash_matrix(qp.P, static_cast<std::size_t>(n * 31 + m)));

  SolveRun run(qp, opts_, key, ws_->cache);
  const bool warm_ok = warm && warm->z.size() == n && warm->w.size() == m;
  if (warm_ok) {
    run.cur.z = warm->z;
    run.cur.w = warm->w;
  } else {
    run.cur.z = project_box(Eigen::VectorXd::Zero(n), qp.box);
    run.cur.w = Eigen::VectorXd::Zero(m);
  }
  run.consider(run.cur.z, run.cur.w);

  auto finish = [&]() {
    SaddlePoint sp;
    sp.z             = run.best.z;
    sp.w             = run.best.w;
    sp.residual_norm = run.best.fnorm;
    sp.lagrangian    = qp.lagrangian(run.best.z, run.best.w);
    sp.iterations    = run.iters;
    sp.newton_steps  = run.newton_total;
    return sp;
  };
  auto done = [&]() { return run.best.fnorm <= thresh; };

  if (opts_.newton && warm_ok) {
    run.newton();
    if (done()) { return finish(); }
  }

  if (opts_.method == SolverMethod::InteriorPoint && run.budget_left()) {
    run.interior_point();
    if (opts_.newton) { run.newton(); }
    if (done()) { return finish(); }
  }

  // PIPG, with Newton retries on a doubling schedule
  if (!(ws_->has_steps && ws_->step_key == key)) {
    const double lam   = 1.01 * spectral_norm(qp.P) + 1e-12;
    const double mu    = 1.01 * spectral_norm(qp.H) + 1e-12;
    const double omega = lam / (mu * mu);
    ws_->alpha         = 2.0 / (std::sqrt(lam * lam + 4.0 * omega * mu * mu) + lam);
    ws_->beta          = omega * ws_->alpha;
    ws_->step_key      = key;
    ws_->has_steps     = true;
  }
  run.cur   = run.best;
  int chunk = std::max(1, opts_.pipg_chunk);
  while (run.budget_left()) {
    run.pipg(chunk, ws_->alpha, ws_->beta);
    if (done()) { return finish(); }
    if (opts_.newton) {
      // Newton from the best point; PIPG resumes from its own iterate
      const Iterate resume = run.cur;
      run.cur              = run.best;
      run.newton();
      if (done()) { return finish(); }
      run.cur = resume;
      chunk   = std::min(2 * chunk, 1 << 20);
    }
  }

  std::ostringstream os;
  os << "no point with ||F|| <= " << thresh << " after " << run.iters << " iterations (best " << run.best.fnorm << ")";
  throw SolverError(SolverError::Kind::MaxIterations, os.str(), finish());
}

SaddlePoint solve_qp(const CompactQp & qp, const SolverOptions & opts, const SaddlePoint * warm)
{
  QpSolver solver(opts);
  return solver.solve(qp, warm);
}

}  // namespace deepc
