//! Frank–Wolfe descent on `f` and the linearisation lower bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

use super::conic::{InteriorPoint, LinearSdpSolver, SdpSolution, SolverStatus};
use super::objective::{objective, objective_and_gradient, zeta, EPS_PERT};
use super::problem::{KeyRateProblem, RHO};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FwConfig {
    pub max_iters: usize,
    /// Stop once the Frank–Wolfe gap falls below this (bits).
    pub tol: f64,
    pub line_tol: f64,
    pub eps_pert: f64,
    pub solver: InteriorPoint,
    /// Starting points violating the constraints by more than this are
    /// replaced by a feasible point before descending.
    pub feasibility_tol: f64,
}

impl Default for FwConfig {
    fn default() -> Self {
        Self { max_iters: 60, tol: 1e-6, line_tol: 1e-6, eps_pert: EPS_PERT, solver: InteriorPoint::default(), feasibility_tol: 1e-7 }
    }
}

#[derive(Clone, Debug)]
pub struct PrimalIterate {
    pub rho: CMat,
    pub objective: f64,
    pub gradient: CMat,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the initial point.
    pub history: Vec<f64>,
    /// Last Frank–Wolfe gap `Tr[∇f(ρ_i)(ρ_i − σ_i)]` (infinite if never computed).
    pub gap: f64,
    pub max_violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCert {
    pub primal_value: f64,
    /// Certified lower bound on `min_σ Tr[∇f(ρ*) σ]`.
    pub linearized_min: f64,
    pub perturbation_eps: f64,
    pub zeta: f64,
    pub certified_bits: f64,
    pub solver_status: SolverStatus,
}

fn check(sol: &SdpSolution) -> Result<()> {
    match sol.status {
        SolverStatus::Optimal | SolverStatus::NearOptimal => Ok(()),
        SolverStatus::Infeasible => Err(Error::Infeasible { violated: sol.violated.join("; ") }),
        SolverStatus::Failed => Err(Error::Solver {
            status: format!("{:?}", sol.status),
            detail: format!("primal residual {:.2e}, dual residual {:.2e}", sol.primal_residual, sol.dual_residual),
        }),
    }
}

fn linear_step(p: &KeyRateProblem, grad: &CMat, solver: &dyn LinearSdpSolver) -> Result<SdpSolution> {
    let sol = solver.solve(&p.linear_program(grad))?;
    check(&sol)?;
    Ok(sol)
}

/// Golden-section minimisation of `phi` on `[0, 1]`.
fn golden_section(mut phi: impl FnMut(f64) -> Result<f64>, tol: f64) -> Result<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = phi(c)?;
    let mut fd = phi(d)?;
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = phi(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = phi(d)?;
        }
    }
    // endpoints are candidates too; f is convex but the minimum may sit on them
    let mut best = if fc < fd { (c, fc) } else { (d, fd) };
    for t in [0.0, 1.0] {
        let v = phi(t)?;
        if v < best.1 {
            best = (t, v);
        }
    }
    Ok(best)
}

/// Frank–Wolfe with the default configuration.
pub fn solve_primal(p: &KeyRateProblem, max_iters: usize, tol: f64) -> Result<PrimalIterate> {
    let cfg = FwConfig { max_iters, tol, ..FwConfig::default() };
    solve_primal_with(p, &cfg, &cfg.solver)
}

pub fn solve_primal_with(p: &KeyRateProblem, cfg: &FwConfig, solver: &dyn LinearSdpSolver) -> Result<PrimalIterate> {
    let mut rho = p.initial.clone();
    let mut violation = p.max_violation(&rho)?;
    let (mut f, mut grad) = objective_and_gradient(p, &rho, cfg.eps_pert)?;
    let zero_iterations = cfg.max_iters == 0 || cfg.tol.is_infinite();
    if zero_iterations {
        return Ok(PrimalIterate { rho, objective: f, gradient: grad, iterations: 0, history: vec![f], gap: f64::INFINITY, max_violation: violation });
    }
    if violation > cfg.feasibility_tol {
        // Restart from the feasible point closest in overlap to the warm start.
        let cost = linalg::scale(&rho, -1.0 / linalg::frobenius(&rho).max(1e-300));
        let sol = linear_step(p, &cost, solver)?;
        rho = sol.x[RHO].clone();
        violation = p.max_violation(&rho)?;
        (f, grad) = objective_and_gradient(p, &rho, cfg.eps_pert)?;
    }
    let mut history = vec![f];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        let sol = linear_step(p, &grad, solver)?;
        let sigma = &sol.x[RHO];
        gap = linalg::inner(&grad, &linalg::sub(&rho, sigma));
        iterations += 1;
        if gap < cfg.tol {
            break;
        }
        let dir = linalg::sub(sigma, &rho);
        let (t, ft) = golden_section(|t| objective(p, &linalg::add_scaled(&rho, t, &dir), cfg.eps_pert), cfg.line_tol)?;
        if t == 0.0 || ft >= f {
            break;
        }
        rho = linalg::add_scaled(&rho, t, &dir);
        linalg::hermitize_in_place(&mut rho);
        (f, grad) = objective_and_gradient(p, &rho, cfg.eps_pert)?;
        history.push(f);
    }
    violation = violation.min(p.max_violation(&rho)?);
    Ok(PrimalIterate { rho, objective: f, gradient: grad, iterations, history, gap, max_violation: violation })
}

/// `f(ρ*) − Tr[∇f ρ*] + min_σ Tr[∇f σ] − ζ`, with the minimum replaced by a
/// dual bound that is valid for any multiplier.
pub fn certify_lower_bound(p: &KeyRateProblem, it: &PrimalIterate) -> Result<LowerBoundCert> {
    certify_lower_bound_with(p, it, &InteriorPoint { tol: 1e-10, max_iters: 150 }, EPS_PERT)
}

pub fn certify_lower_bound_with(p: &KeyRateProblem, it: &PrimalIterate, solver: &dyn LinearSdpSolver, eps_pert: f64) -> Result<LowerBoundCert> {
    let sol = solver.solve(&p.linear_program(&it.gradient))?;
    if !matches!(sol.status, SolverStatus::Optimal | SolverStatus::NearOptimal) {
        check(&sol)?;
    }
    if !sol.dual_bound.is_finite() {
        return Err(Error::Solver { status: format!("{:?}", sol.status), detail: "no finite dual bound".into() });
    }
    let out_dim = p.dim() * p.num_regions();
    let z = zeta(out_dim, eps_pert);
    let lin = sol.dual_bound;
    let raw = it.objective - linalg::inner(&it.gradient, &it.rho) + lin - z;
    Ok(LowerBoundCert {
        primal_value: it.objective,
        linearized_min: lin,
        perturbation_eps: eps_pert,
        zeta: z,
        certified_bits: raw.min(it.objective),
        solver_status: sol.status,
    })
}
