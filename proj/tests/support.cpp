#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "deepc/solver.hpp"

namespace deepc::fixtures {

ExperimentConfig masses_config() { return ExperimentConfig{}; }

Eigen::VectorXd masses_x0() { return (Eigen::VectorXd(4) << 0.3, -0.2, 0.1, 0.0).finished(); }

Instance masses_instance(const Eigen::VectorXd & x0, double rho, std::uint64_t offline_seed)
{
  ExperimentConfig cfg = masses_config();
  cfg.offline.seed     = offline_seed;
  cfg.attack.rho       = rho;
  cfg.run.x0.assign(x0.data(), x0.data() + x0.size());

  Instance inst;
  inst.setup = prepare_experiment(cfg);
  inst.prob  = inst.setup.base;
  inst.k     = cfg.dpc.sigma;

  const auto nu = inst.setup.plant.inputs();
  std::vector<Eigen::VectorXd> u(static_cast<std::size_t>(inst.k), Eigen::VectorXd::Zero(nu));
  const IoLog warm = simulate(inst.setup.plant, inst.setup.x0, u);
  set_replan_data(inst.prob, cfg, reference_input(cfg, inst.setup.plant), warm.inputs, warm.outputs, inst.k);
  inst.spec = attack_spec_at(cfg, inst.k, nu, cfg.dpc.ell);
  return inst;
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64 & rng)
{
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Eigen::MatrixXd A(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) { A(i, j) = uni(rng); }
  }
  return A;
}

DpcProblem small_instance(std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int nx = 3, nu = 1, ny = 2, sigma = 3, ell = 4, ng = 40;

  DiscreteLti sys;
  sys.Ad = random_matrix(nx, nx, rng);
  Eigen::EigenSolver<Eigen::MatrixXd> es(sys.Ad, false);
  const double radius = es.eigenvalues().cwiseAbs().maxCoeff();
  sys.Ad *= (0.6 + 0.3 * uni(rng)) / radius;
  sys.Bd = random_matrix(nx, nu, rng);
  sys.C  = random_matrix(ny, nx, rng);

  DpcProblem prob;
  prob.hankel   = build_hankel(collect_excitation(sys, sigma + ell + ng - 1, seed + 11, 1.0), sigma, ell);
  Eigen::VectorXd qd(ell * ny), rd(ell * nu);
  for (auto & v : qd) { v = 1.0 + 9.0 * uni(rng); }
  for (auto & v : rd) { v = 0.1 + 0.9 * uni(rng); }
  prob.Q        = qd.asDiagonal();
  prob.R        = rd.asDiagonal();
  prob.lambda_g = std::pow(10.0, 2.0 * uni(rng));
  prob.lambda_s = std::pow(10.0, 1.0 + 3.0 * uni(rng));
  prob.M        = compute_regularizer(prob.hankel);
  prob.y_ref    = 1.5 * random_matrix(ell * ny, 1, rng);
  prob.u_ref    = Eigen::VectorXd::Zero(ell * nu);
  prob.u_box    = Box::uniform(ell * nu, -0.5, 0.5);
  prob.y_box    = Box::uniform(ell * ny, -1.0, 1.0);

  std::vector<Eigen::VectorXd> u;
  for (int k = 0; k < sigma; ++k) { u.push_back(0.5 * random_matrix(nu, 1, rng)); }
  const IoLog win = simulate(sys, random_matrix(nx, 1, rng), u);
  prob.u_ini.resize(sigma * nu);
  prob.y_ini.resize(sigma * ny);
  for (int k = 0; k < sigma; ++k) {
    prob.u_ini.segment(k * nu, nu) = win.inputs[static_cast<std::size_t>(k)];
    prob.y_ini.segment(k * ny, ny) = win.outputs[static_cast<std::size_t>(k)];
  }
  return prob;
}

GspaceSolution gspace_ipm(const DpcProblem & prob, const Eigen::VectorXd & p)
{
  const auto & hk       = prob.hankel;
  const Eigen::MatrixXd Up = hk.Up(), Uf = hk.Uf(), Yp = hk.Yp(), Yf = hk.Yf();
  const Eigen::Index ng = hk.ng;

  // objective 1/2 g'G g + c'g (+ constant)
  Eigen::MatrixXd G = Yf.transpose() * prob.Q * Yf + Uf.transpose() * prob.R * Uf
                    + 2.0 * prob.lambda_g * prob.M.transpose() * prob.M + 2.0 * prob.lambda_s * Yp.transpose() * Yp;
  G = 0.5 * (G + G.transpose()).eval();
  const Eigen::VectorXd c = -Yf.transpose() * (prob.Q * prob.y_ref) - Uf.transpose() * (prob.R * prob.u_ref)
                          - 2.0 * prob.lambda_s * Yp.transpose() * (prob.y_ini + p);

  // A g <= h from the finite box bounds
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  auto add_bounds = [&](const Eigen::MatrixXd & F, const Box & box) {
    for (Eigen::Index i = 0; i < F.rows(); ++i) {
      if (std::isfinite(box.upper(i))) {
        rows.push_back(F.row(i).transpose());
        rhs.push_back(box.upper(i));
      }
      if (std::isfinite(box.lower(i))) {
        rows.push_back(-F.row(i).transpose());
        rhs.push_back(-box.lower(i));
      }
    }
  };
  add_bounds(Uf, prob.u_box);
  add_bounds(Yf, prob.y_box);
  const Eigen::Index mi = static_cast<Eigen::Index>(rows.size()), me = Up.rows();
  Eigen::MatrixXd A(mi, ng);
  Eigen::VectorXd h(mi);
  for (Eigen::Index i = 0; i < mi; ++i) {
    A.row(i) = rows[static_cast<std::size_t>(i)].transpose();
    h(i)     = rhs[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd & be = prob.u_ini;

  Eigen::VectorXd g = Eigen::VectorXd::Zero(ng), nu = Eigen::VectorXd::Zero(me);
  Eigen::VectorXd s = (h - A * g).cwiseMax(1.0), lam = Eigen::VectorXd::Ones(mi);

  const double scale = 1.0 + c.norm();
  GspaceSolution out;
  for (int it = 0; it < 200; ++it) {
    const Eigen::VectorXd rd = G * g + c + Up.transpose() * nu + A.transpose() * lam;
    const Eigen::VectorXd re = Up * g - be;
    const Eigen::VectorXd ri = A * g + s - h;
    const double mu          = mi ? s.dot(lam) / static_cast<double>(mi) : 0.0;
    out.iterations           = it;
    if (rd.norm() <= 1e-10 * scale && re.norm() <= 1e-10 * (1.0 + be.norm()) && ri.norm() <= 1e-10 * (1.0 + h.norm())
        && mu <= 1e-13) {
      out.converged = true;
      break;
    }

    const Eigen::VectorXd W = lam.cwiseQuotient(s);
    Eigen::MatrixXd KKT     = Eigen::MatrixXd::Zero(ng + me, ng + me);
    KKT.topLeftCorner(ng, ng)  = G + A.transpose() * W.asDiagonal() * A;
    KKT.topRightCorner(ng, me) = Up.transpose();
    KKT.bottomLeftCorner(me, ng) = Up;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(KKT);

    // comp is the target for s o lam after the step
    auto direction = [&](const Eigen::VectorXd & comp, Eigen::VectorXd & dg, Eigen::VectorXd & dn, Eigen::VectorXd & ds,
                         Eigen::VectorXd & dl) {
      Eigen::VectorXd r(ng + me);
      r.head(ng) = -rd - A.transpose() * ((comp - s.cwiseProduct(lam) + lam.cwiseProduct(ri)).cwiseQuotient(s));
      r.tail(me) = -re;
      const Eigen::VectorXd d = lu.solve(r);
      dg = d.head(ng);
      dn = d.tail(me);
      ds = -ri - A * dg;
      dl = (comp - s.cwiseProduct(lam) - lam.cwiseProduct(ds)).cwiseQuotient(s);
    };
    auto step_to_boundary = [](const Eigen::VectorXd & v, const Eigen::VectorXd & dv) {
      double a = 1.0;
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (dv(i) < 0.0) { a = std::min(a, -v(i) / dv(i)); }
      }
      return a;
    };

    Eigen::VectorXd dg, dn, ds, dl;
    direction(Eigen::VectorXd::Zero(mi), dg, dn, ds, dl);
    const double ap = step_to_boundary(s, ds), ad = step_to_boundary(lam, dl);
    const double mu_aff = mi ? (s + ap * ds).dot(lam + ad * dl) / static_cast<double>(mi) : 0.0;
    const double sig    = mu > 0.0 ? std::pow(mu_aff / mu, 3.0) : 0.0;
    const Eigen::VectorXd comp = Eigen::VectorXd::Constant(mi, sig * mu) - ds.cwiseProduct(dl);
    direction(comp, dg, dn, ds, dl);

    const double a = std::min(1.0, 0.99 * std::min(step_to_boundary(s, ds), step_to_boundary(lam, dl)));
    g += a * dg;
    nu += a * dn;
    s += a * ds;
    lam += a * dl;
  }

  out.g         = g;
  out.objective = deepc_objective(prob, Uf * g, Yf * g, g, p);
  return out;
}

FdReport fd_sensitivity_check(const DpcProblem & prob, std::uint64_t seed, double h, double eps)
{
  const CompactQp qp = assemble_compact(prob);
  QpSolver solver;
  const SaddlePoint sp           = solver.solve(qp);
  const SensitivityOperators ops = assemble_sensitivity(qp, sp);
  const Eigen::Index n = qp.n(), m = qp.m(), dim = prob.perturbation_size();

  auto pattern = [&](const CompactQp & q, const Eigen::VectorXd & z, const Eigen::VectorXd & w) {
    return projection_jacobian(residual(q, z, w).z_plus, q.box, 0.0).diagonal;
  };
  const Eigen::VectorXd center = ops.proj.diagonal;
  FdReport rep;

  // J: perturb xi = (z, w) one coordinate at a time
  Eigen::MatrixXd fd_j(n + m, n + m), an_j(n + m, n + m);
  for (Eigen::Index j = 0; j < n + m; ++j) {
    Eigen::VectorXd zp = sp.z, zm = sp.z, wp = sp.w, wm = sp.w;
    if (j < n) {
      zp(j) += h;
      zm(j) -= h;
    } else {
      wp(j - n) += h;
      wm(j - n) -= h;
    }
    if (pattern(qp, zp, wp) != center || pattern(qp, zm, wm) != center) { continue; }
    fd_j.col(rep.j_columns) = (residual(qp, zp, wp).value - residual(qp, zm, wm).value) / (2.0 * h);
    an_j.col(rep.j_columns) = ops.J.col(j);
    ++rep.j_columns;
  }
  rep.j_error = (an_j.leftCols(rep.j_columns) - fd_j.leftCols(rep.j_columns)).norm()
              / std::max(an_j.leftCols(rep.j_columns).norm(), 1e-300);

  // K: perturb p with xi fixed
  Eigen::MatrixXd fd_k(n + m, dim), an_k(n + m, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    const CompactQp qp_p = assemble_compact(prob, h * Eigen::VectorXd::Unit(dim, j));
    const CompactQp qp_m = assemble_compact(prob, -h * Eigen::VectorXd::Unit(dim, j));
    if (pattern(qp_p, sp.z, sp.w) != center || pattern(qp_m, sp.z, sp.w) != center) { continue; }
    fd_k.col(rep.k_columns) = (residual(qp_p, sp.z, sp.w).value - residual(qp_m, sp.z, sp.w).value) / (2.0 * h);
    an_k.col(rep.k_columns) = ops.K.col(j);
    ++rep.k_columns;
  }
  rep.k_error = (an_k.leftCols(rep.k_columns) - fd_k.leftCols(rep.k_columns)).norm()
              / std::max(an_k.leftCols(rep.k_columns).norm(), 1e-300);

  // solution derivative against re-solved differences
  std::mt19937_64 rng(seed);
  Eigen::VectorXd dp = random_matrix(dim, 1, rng);
  dp /= dp.norm();
  const CompactQp qp_p = assemble_compact(prob, eps * dp), qp_m = assemble_compact(prob, -eps * dp);
  const SaddlePoint sp_p = solver.solve(qp_p, &sp), sp_m = solver.solve(qp_m, &sp);
  rep.resolve_valid = pattern(qp_p, sp_p.z, sp_p.w) == center && pattern(qp_m, sp_m.z, sp_m.w) == center;
  const Eigen::VectorXd fd_z = (sp_p.z - sp_m.z) / (2.0 * eps);
  const Eigen::VectorXd an_z = directional_sensitivity(ops, dp).col(0).head(n);
  rep.resolve_error = (an_z - fd_z).norm() / std::max(fd_z.norm(), 1e-12);
  const auto & sl   = qp.slices;
  const Eigen::VectorXd fd_u = fd_z.segment(sl.u_begin, sl.u_size), an_u = an_z.segment(sl.u_begin, sl.u_size);
  rep.u_moves         = fd_u.norm() > 1e-6 * fd_z.norm();
  // with every input clamped the difference is roundoff; measure against the whole step instead
  rep.resolve_u_error = (an_u - fd_u).norm() / std::max(rep.u_moves ? fd_u.norm() : fd_z.norm(), 1e-12);
  return rep;
}

}  // namespace deepc::fixtures
