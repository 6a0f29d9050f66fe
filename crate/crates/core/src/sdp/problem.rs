//! Constraint set of the key-rate optimisation.

use serde::{Deserialize, Serialize};

use crate::constellation::{tau_a, Constellation};
use crate::error::{Error, Result};
use crate::fock::displacement_closed_form;
use crate::linalg::{self, CMat, C64, ONE};
use crate::region::RegionOperatorSet;

use super::conic::{Atom, LinearSdp, PsdCone, Row};

/// Expected displaced moments of one sent state with their acceptance widths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentBounds {
    pub n: f64,
    pub n2: f64,
    pub mu_n: f64,
    pub mu_n2: f64,
    pub norm_n: f64,
    pub norm_n2: f64,
}

impl MomentBounds {
    /// Same moments for every state, norms `N_c` and `N_c²`.
    pub fn uniform(n: f64, n2: f64, mu_n: f64, mu_n2: f64, cutoff: usize, count: usize) -> Vec<Self> {
        let nc = cutoff as f64;
        vec![Self { n, n2, mu_n, mu_n2, norm_n: nc, norm_n2: nc * nc }; count]
    }
}

/// Cone indices in [`KeyRateProblem::template`].
pub const RHO: usize = 0;

#[derive(Clone, Debug)]
pub struct KeyRateProblem {
    pub d_a: usize,
    pub d_b: usize,
    pub tau_a: CMat,
    pub priors: Vec<f64>,
    pub w: f64,
    pub moments: Vec<MomentBounds>,
    /// `√([R^z_k]')` in the displaced basis of state `k`, indexed `[k][z]`.
    pub kraus: Vec<Vec<CMat>>,
    /// `√(Σ_z [R^z_k]')`
    pub pass_root: Vec<CMat>,
    /// Largest negative eigenvalue clipped while taking the roots.
    pub root_clipping: f64,
    /// Constraint set with zero cost; the objective gradient is inserted per solve.
    pub template: LinearSdp,
    /// `template.mats` index of `W_{kk'}` with `(Tr_B ρ)_{kk'} = Tr(ρ_{kk'} W_{kk'})`, `k ≤ k'`.
    pub overlap_index: Vec<Vec<usize>>,
    pub initial: CMat,
}

impl KeyRateProblem {
    pub fn dim(&self) -> usize {
        self.d_a * self.d_b
    }

    pub fn num_regions(&self) -> usize {
        self.kraus.first().map(|k| k.len()).unwrap_or(0)
    }

    /// Replace the warm start, e.g. with the honest channel output.
    pub fn with_initial(mut self, rho: CMat) -> Result<Self> {
        if rho.nrows() != self.dim() || rho.ncols() != self.dim() {
            return Err(Error::Build(format!("initial state must be {0}x{0}", self.dim())));
        }
        self.initial = rho;
        Ok(self)
    }

    /// Linear SDP `min Re Tr(C ρ)` over the constraint set.
    pub fn linear_program(&self, cost: &CMat) -> LinearSdp {
        let mut p = self.template.clone();
        p.cost[RHO] = cost.clone();
        p
    }

    /// Constraint violations of `ρ` above `tol`, largest first, as
    /// `(label, amount)` pairs. The slack variables are chosen optimally.
    pub fn violations(&self, rho: &CMat, tol: f64) -> Result<Vec<(String, f64)>> {
        let mut out = Vec::new();
        let lmin = linalg::min_eigenvalue(rho)?;
        out.push(("psd".to_string(), (-lmin).max(0.0)));
        let diff = linalg::sub(&partial_trace_b(self, rho), &self.tau_a);
        if self.w > 0.0 {
            let radius = (2.0 * self.w - self.w * self.w).sqrt();
            let half_norm = 0.5 * linalg::eigvalsh(&diff)?.iter().map(|v| v.abs()).sum::<f64>();
            out.push(("trace_distance".to_string(), (half_norm - radius).max(0.0)));
            let tr = linalg::trace(rho).re;
            out.push(("trace.upper".to_string(), (tr - 1.0).max(0.0)));
            out.push(("trace.lower".to_string(), (1.0 - self.w - tr).max(0.0)));
        } else {
            out.push(("partial_trace".to_string(), linalg::max_abs(&diff)));
        }
        let d = self.d_b;
        for (k, m) in self.moments.iter().enumerate() {
            let mut v1 = 0.0;
            let mut v2 = 0.0;
            for n in 0..d {
                let p = rho[(k * d + n, k * d + n)].re / self.priors[k];
                v1 += n as f64 * p;
                v2 += (n * n) as f64 * p;
            }
            for (name, v, mean, mu, norm) in [("n", v1, m.n, m.mu_n, m.norm_n), ("n2", v2, m.n2, m.mu_n2, m.norm_n2)] {
                let ub = mean + mu;
                let lb = mean - mu - self.w * norm;
                out.push((format!("moment.{name}.{k}"), (v - ub).max(lb - v).max(0.0)));
            }
        }
        out.retain(|(_, v)| *v > tol);
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(out)
    }

    pub fn max_violation(&self, rho: &CMat) -> Result<f64> {
        Ok(self.violations(rho, 0.0)?.first().map(|v| v.1).unwrap_or(0.0))
    }
}

/// Assembles the optimisation over `ρ̄` in the displaced product basis
/// `{|k> ⊗ D(β_k)|n>}` from the region operators of `set`.
pub fn build_problem(c: &Constellation, moments: &[MomentBounds], w: f64, set: &RegionOperatorSet) -> Result<KeyRateProblem> {
    let nk = c.len();
    let d_b = set.space.dim();
    if set.num_states() != nk || moments.len() != nk || set.betas.len() != nk {
        return Err(Error::Build(format!(
            "dimension mismatch: {nk} states, {} region rows, {} moment entries",
            set.num_states(),
            moments.len()
        )));
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Build(format!("w must lie in [0, 1], got {w}")));
    }
    let tau = tau_a(c).gram;
    let priors = c.probabilities.clone();
    let nz = set.num_regions();

    let mut kraus = Vec::with_capacity(nk);
    let mut pass_root = Vec::with_capacity(nk);
    let mut clip = 0.0f64;
    for k in 0..nk {
        let mut roots = Vec::with_capacity(nz);
        for z in 0..nz {
            let (r, cl) = linalg::psd_sqrt(&set.ops[k][z])?;
            clip = clip.max(cl);
            roots.push(r);
        }
        let (s, cl) = linalg::psd_sqrt(&set.pass_operator(k))?;
        clip = clip.max(cl);
        kraus.push(roots);
        pass_root.push(s);
    }

    let radius = (2.0 * w - w * w).max(0.0).sqrt();
    let with_slack = w > 0.0;
    let mut cones = vec![PsdCone { blocks: nk, block_size: d_b, trace_bound: 1.0, label: "rho".into() }];
    if with_slack {
        for label in ["s_plus", "s_minus"] {
            cones.push(PsdCone { blocks: nk, block_size: 1, trace_bound: 2.0 * radius, label: label.into() });
        }
    }
    let nvals: Vec<f64> = (0..d_b).map(|n| n as f64).collect();
    let n2vals: Vec<f64> = nvals.iter().map(|v| v * v).collect();
    let mut mats = vec![linalg::identity(d_b), linalg::diagonal(&nvals), linalg::diagonal(&n2vals), linalg::identity(1)];
    const ID: usize = 0;
    const NUM: usize = 1;
    const NUM2: usize = 2;
    const UNIT: usize = 3;

    let mut rows = Vec::new();
    let mut lin_bounds = Vec::new();
    let mut lin_labels = Vec::new();
    let add_slack = |label: String, ub: f64, lin_bounds: &mut Vec<f64>, lin_labels: &mut Vec<String>| {
        lin_bounds.push(ub);
        lin_labels.push(label);
        lin_bounds.len() - 1
    };
    let atom = |cone: usize, i: usize, j: usize, mat: usize, coeff: C64| Atom { cone, i, j, mat, coeff };
    let minus_i = C64::new(0.0, -1.0);

    // Tr_B ρ̄ − τ_A = S⁺ − S⁻
    for k in 0..nk {
        let mut atoms = vec![atom(RHO, k, k, ID, ONE)];
        if with_slack {
            atoms.push(atom(1, k, k, UNIT, -ONE));
            atoms.push(atom(2, k, k, UNIT, ONE));
        }
        rows.push(Row { atoms, lin: vec![], rhs: tau[(k, k)].re, label: format!("ptr.re.{k},{k}") });
    }
    let betas = &set.betas;
    let mut overlap_index = vec![vec![ID; nk]; nk];
    for k in 0..nk {
        for kp in (k + 1)..nk {
            // W[n][m] = <n_{β_k'}|m_{β_k}>
            let phase = C64::from_polar(1.0, (betas[kp].conj() * betas[k]).im);
            let w_mat = linalg::scale_c(&displacement_closed_form(set.space, betas[k] - betas[kp]), phase);
            let idx = mats.len();
            mats.push(w_mat);
            overlap_index[k][kp] = idx;
            for (part, coeff, rhs) in [("re", ONE, tau[(k, kp)].re), ("im", minus_i, tau[(k, kp)].im)] {
                let mut atoms = vec![atom(RHO, k, kp, idx, coeff)];
                if with_slack {
                    atoms.push(atom(1, k, kp, UNIT, -coeff));
                    atoms.push(atom(2, k, kp, UNIT, coeff));
                }
                rows.push(Row { atoms, lin: vec![], rhs, label: format!("ptr.{part}.{k},{kp}") });
            }
        }
    }

    if with_slack {
        let trace_atoms: Vec<Atom> = (0..nk).map(|k| atom(RHO, k, k, ID, ONE)).collect();
        let s = add_slack("trace.upper".into(), w, &mut lin_bounds, &mut lin_labels);
        rows.push(Row { atoms: trace_atoms.clone(), lin: vec![(s, 1.0)], rhs: 1.0, label: "trace.upper".into() });
        let s = add_slack("trace.lower".into(), w, &mut lin_bounds, &mut lin_labels);
        rows.push(Row { atoms: trace_atoms, lin: vec![(s, -1.0)], rhs: 1.0 - w, label: "trace.lower".into() });
        let mut atoms = Vec::new();
        for cone in [1, 2] {
            for k in 0..nk {
                atoms.push(atom(cone, k, k, UNIT, C64::new(0.5, 0.0)));
            }
        }
        let s = add_slack("trace_distance".into(), radius, &mut lin_bounds, &mut lin_labels);
        rows.push(Row { atoms, lin: vec![(s, 1.0)], rhs: radius, label: "trace_distance".into() });
    }

    for (k, m) in moments.iter().enumerate() {
        let inv_p = C64::new(1.0 / priors[k], 0.0);
        for (name, mat, mean, mu, norm) in [("n", NUM, m.n, m.mu_n, m.norm_n), ("n2", NUM2, m.n2, m.mu_n2, m.norm_n2)] {
            let ub = mean + mu;
            let lb = mean - mu - w * norm;
            let atoms = vec![atom(RHO, k, k, mat, inv_p)];
            if mu == 0.0 && w == 0.0 {
                rows.push(Row { atoms, lin: vec![], rhs: mean, label: format!("moment.{name}.eq.{k}") });
                continue;
            }
            let s = add_slack(format!("moment.{name}.upper.{k}"), ub.max(0.0), &mut lin_bounds, &mut lin_labels);
            rows.push(Row { atoms: atoms.clone(), lin: vec![(s, 1.0)], rhs: ub, label: format!("moment.{name}.upper.{k}") });
            if lb > 0.0 {
                let s = add_slack(format!("moment.{name}.lower.{k}"), ub - lb, &mut lin_bounds, &mut lin_labels);
                rows.push(Row { atoms, lin: vec![(s, -1.0)], rhs: lb, label: format!("moment.{name}.lower.{k}") });
            }
        }
    }

    let dim = nk * d_b;
    let mut cost = vec![linalg::zeros(dim, dim)];
    if with_slack {
        cost.push(linalg::zeros(nk, nk));
        cost.push(linalg::zeros(nk, nk));
    }
    let nlin = lin_bounds.len();
    let template = LinearSdp { cones, mats, lin_bounds, lin_labels, lin_cost: vec![0.0; nlin], cost, rows };
    template.validate()?;

    // τ_A ⊗ |0><0| satisfies the partial-trace rows exactly.
    let mut initial = linalg::zeros(dim, dim);
    for k in 0..nk {
        for kp in 0..nk {
            initial[(k * d_b, kp * d_b)] = tau[(k, kp)];
        }
    }
    Ok(KeyRateProblem { d_a: nk, d_b, tau_a: tau, priors, w, moments: moments.to_vec(), kraus, pass_root, root_clipping: clip, template, overlap_index, initial })
}

/// `Tr_B ρ` in the displaced product basis.
pub fn partial_trace_b(p: &KeyRateProblem, rho: &CMat) -> CMat {
    let nk = p.d_a;
    let d = p.d_b;
    CMat::from_fn(nk, nk, |k, kp| {
        let (a, b, conj) = if k <= kp { (k, kp, false) } else { (kp, k, true) };
        let w = &p.template.mats[p.overlap_index[a][b]];
        let mut tr = C64::new(0.0, 0.0);
        for q in 0..d {
            for r in 0..d {
                tr += w[(r, q)] * rho[(a * d + q, b * d + r)];
            }
        }
        if conj { tr.conj() } else { tr }
    })
}
