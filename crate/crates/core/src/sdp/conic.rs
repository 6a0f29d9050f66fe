//! Linear-objective SDPs over Hermitian block variables and a primal-dual
//! interior-point backend.
//!
//! Standard form: minimise `Σ_j Re Tr(C_j X_j) + cᵀx` subject to one real
//! equality per [`Row`], `X_j ⪰ 0`, `x ≥ 0`. Each cone variable is split into a
//! `blocks × blocks` grid of `block_size` square sub-blocks; a row is a sparse sum
//! of atoms `Re(coeff · Tr(M X_j[i, j']))` plus linear terms.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64, ZERO};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdCone {
    pub blocks: usize,
    pub block_size: usize,
    /// Upper bound on `Tr X_j` over the feasible set, used for certification.
    pub trace_bound: f64,
    pub label: String,
}

impl PsdCone {
    pub fn dim(&self) -> usize {
        self.blocks * self.block_size
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub cone: usize,
    pub i: usize,
    pub j: usize,
    /// Index into [`LinearSdp::mats`].
    pub mat: usize,
    pub coeff: C64,
}

#[derive(Clone, Debug, Default)]
pub struct Row {
    pub atoms: Vec<Atom>,
    pub lin: Vec<(usize, f64)>,
    pub rhs: f64,
    pub label: String,
}

#[derive(Clone, Debug)]
pub struct LinearSdp {
    pub cones: Vec<PsdCone>,
    pub mats: Vec<CMat>,
    /// Upper bounds of the nonnegative scalars over the feasible set.
    pub lin_bounds: Vec<f64>,
    pub lin_labels: Vec<String>,
    pub lin_cost: Vec<f64>,
    pub cost: Vec<CMat>,
    pub rows: Vec<Row>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Optimal,
    /// Stopped at the iteration limit or on stagnation with residuals below the
    /// relaxed tolerance.
    NearOptimal,
    Infeasible,
    Failed,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SolverStatus,
    pub x: Vec<CMat>,
    pub x_lin: Vec<f64>,
    pub y: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Relative primal residual `‖b − A(X)‖ / (1 + ‖b‖)`.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    /// Lower bound on the optimum valid for any `y`.
    pub dual_bound: f64,
    /// Labels of the rows with the largest residuals when not optimal.
    pub violated: Vec<String>,
}

/// Anything that can solve a [`LinearSdp`].
pub trait LinearSdpSolver: Sync {
    fn solve(&self, p: &LinearSdp) -> Result<SdpSolution>;
}

impl LinearSdp {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_lin(&self) -> usize {
        self.lin_bounds.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Build(msg));
        if self.cost.len() != self.cones.len() {
            return bad("one cost matrix per cone is required".into());
        }
        for (c, k) in self.cones.iter().zip(&self.cost) {
            if k.nrows() != c.dim() || k.ncols() != c.dim() {
                return bad(format!("cost for cone `{}` has wrong shape", c.label));
            }
        }
        if self.lin_cost.len() != self.num_lin() || self.lin_labels.len() != self.num_lin() {
            return bad("linear cost/labels do not match the scalar count".into());
        }
        for r in &self.rows {
            for a in &r.atoms {
                let Some(cone) = self.cones.get(a.cone) else {
                    return bad(format!("row `{}` references a missing cone", r.label));
                };
                let Some(m) = self.mats.get(a.mat) else {
                    return bad(format!("row `{}` references a missing matrix", r.label));
                };
                if a.i >= cone.blocks || a.j >= cone.blocks || m.nrows() != cone.block_size || m.ncols() != cone.block_size {
                    return bad(format!("row `{}` has an atom of inconsistent shape", r.label));
                }
            }
            if r.lin.iter().any(|&(i, _)| i >= self.num_lin()) {
                return bad(format!("row `{}` references a missing scalar", r.label));
            }
        }
        Ok(())
    }

    /// `A(X, x)`
    pub fn apply(&self, x: &[CMat], xl: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| row_value(r, &self.mats, &self.cones, x, xl)).collect()
    }

    /// `A*(y)` as Hermitian cone matrices and a scalar vector.
    pub fn adjoint(&self, y: &[f64]) -> (Vec<CMat>, Vec<f64>) {
        let mut out: Vec<CMat> = self.cones.iter().map(|c| linalg::zeros(c.dim(), c.dim())).collect();
        let mut lin = vec![0.0; self.num_lin()];
        for (r, &yr) in self.rows.iter().zip(y) {
            if yr == 0.0 {
                continue;
            }
            for a in &r.atoms {
                let bs = self.cones[a.cone].block_size;
                let m = &self.mats[a.mat];
                let t = a.coeff * (0.5 * yr);
                let target = &mut out[a.cone];
                // block (j, i) gets t·M, block (i, j) gets conj(t)·M^H
                for q in 0..bs {
                    for p in 0..bs {
                        target[(a.j * bs + p, a.i * bs + q)] += t * m[(p, q)];
                        target[(a.i * bs + q, a.j * bs + p)] += t.conj() * m[(p, q)].conj();
                    }
                }
            }
            for &(i, v) in &r.lin {
                lin[i] += yr * v;
            }
        }
        (out, lin)
    }

    pub fn objective(&self, x: &[CMat], xl: &[f64]) -> f64 {
        let s: f64 = self.cost.iter().zip(x).map(|(c, x)| linalg::inner(c, x)).sum();
        s + self.lin_cost.iter().zip(xl).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Lower bound on the optimal value implied by an arbitrary multiplier `y`,
    /// using the trace bounds of the cones and the scalar upper bounds.
    pub fn dual_bound(&self, y: &[f64]) -> Result<f64> {
        let (aty, aty_lin) = self.adjoint(y);
        let mut bound: f64 = self.rows.iter().zip(y).map(|(r, v)| r.rhs * v).sum();
        for ((cone, c), a) in self.cones.iter().zip(&self.cost).zip(&aty) {
            let (slack, _) = linalg::hermitize(&linalg::sub(c, a));
            let lmin = linalg::min_eigenvalue(&slack)?;
            bound += lmin.min(0.0) * cone.trace_bound;
        }
        for ((c, a), ub) in self.lin_cost.iter().zip(&aty_lin).zip(&self.lin_bounds) {
            bound += (c - a).min(0.0) * ub;
        }
        Ok(bound)
    }

    /// Labels of rows whose absolute residual exceeds `tol`.
    pub fn violated_rows(&self, x: &[CMat], xl: &[f64], tol: f64) -> Vec<String> {
        let ax = self.apply(x, xl);
        let mut bad: Vec<(f64, &str)> = self
            .rows
            .iter()
            .zip(&ax)
            .map(|(r, v)| ((r.rhs - v).abs(), r.label.as_str()))
            .filter(|(d, _)| *d > tol)
            .collect();
        bad.sort_by(|a, b| b.0.total_cmp(&a.0));
        bad.into_iter().take(12).map(|(d, l)| format!("{l} (residual {d:.2e})")).collect()
    }
}

fn row_value(r: &Row, mats: &[CMat], cones: &[PsdCone], x: &[CMat], xl: &[f64]) -> f64 {
    let mut v = 0.0;
    for a in &r.atoms {
        let bs = cones[a.cone].block_size;
        let m = &mats[a.mat];
        let xc = &x[a.cone];
        let mut tr = ZERO;
        for q in 0..bs {
            for p in 0..bs {
                tr += m[(p, q)] * xc[(a.i * bs + q, a.j * bs + p)];
            }
        }
        v += (a.coeff * tr).re;
    }
    v + r.lin.iter().map(|&(i, c)| c * xl[i]).sum::<f64>()
}

/// Infeasible-start primal-dual path following with the HKM direction and a
/// Mehrotra predictor-corrector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteriorPoint {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for InteriorPoint {
    fn default() -> Self {
        Self { tol: 1e-9, max_iters: 120 }
    }
}

/// Half of an atom: contributes `coeff · M` to block `(j, i)` of the row matrix.
struct HalfAtom {
    row: usize,
    i: usize,
    j: usize,
    mat: usize,
    coeff: C64,
}

struct Scaled {
    /// Per-cone half atoms.
    halves: Vec<Vec<HalfAtom>>,
    /// Matrix pool with adjoints appended.
    mats: Vec<CMat>,
    lin_rows: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    cost: Vec<CMat>,
    lin_cost: Vec<f64>,
    row_scale: Vec<f64>,
    cost_scale: f64,
    cones: Vec<PsdCone>,
    nrows: usize,
    nlin: usize,
}

impl Scaled {
    fn new(p: &LinearSdp) -> Self {
        let mut mats = p.mats.clone();
        let herm: Vec<bool> = p.mats.iter().map(|m| linalg::hermitian_residue(m) == 0.0).collect();
        let mut adj_index = vec![usize::MAX; p.mats.len()];
        let norms: Vec<f64> = p.mats.iter().map(linalg::frobenius).collect();
        let mut halves: Vec<Vec<HalfAtom>> = p.cones.iter().map(|_| Vec::new()).collect();
        let mut lin_rows = vec![Vec::new(); p.num_lin()];
        let mut row_scale = Vec::with_capacity(p.rows.len());
        let mut b = Vec::with_capacity(p.rows.len());
        for (ri, r) in p.rows.iter().enumerate() {
            let norm2: f64 = r.atoms.iter().map(|a| a.coeff.norm_sqr() * norms[a.mat].powi(2)).sum::<f64>()
                + r.lin.iter().map(|(_, v)| v * v).sum::<f64>();
            let s = if norm2 > 0.0 { norm2.sqrt() } else { 1.0 };
            row_scale.push(s);
            b.push(r.rhs / s);
            for a in &r.atoms {
                let c = a.coeff / s;
                if a.i == a.j && herm[a.mat] && c.im == 0.0 {
                    halves[a.cone].push(HalfAtom { row: ri, i: a.i, j: a.j, mat: a.mat, coeff: c });
                    continue;
                }
                let adj = if herm[a.mat] {
                    a.mat
                } else {
                    if adj_index[a.mat] == usize::MAX {
                        adj_index[a.mat] = mats.len();
                        mats.push(linalg::adjoint(&p.mats[a.mat]));
                    }
                    adj_index[a.mat]
                };
                halves[a.cone].push(HalfAtom { row: ri, i: a.i, j: a.j, mat: a.mat, coeff: c * 0.5 });
                halves[a.cone].push(HalfAtom { row: ri, i: a.j, j: a.i, mat: adj, coeff: c.conj() * 0.5 });
            }
            for &(i, v) in &r.lin {
                lin_rows[i].push((ri, v / s));
            }
        }
        let cmax = p
            .cost
            .iter()
            .map(linalg::max_abs)
            .chain(p.lin_cost.iter().map(|v| v.abs()))
            .fold(0.0f64, f64::max);
        let cost_scale = cmax.max(1e-12);
        Scaled {
            halves,
            mats,
            lin_rows,
            b,
            cost: p.cost.iter().map(|c| linalg::scale(c, 1.0 / cost_scale)).collect(),
            lin_cost: p.lin_cost.iter().map(|c| c / cost_scale).collect(),
            row_scale,
            cost_scale,
            cones: p.cones.clone(),
            nrows: p.rows.len(),
            nlin: p.num_lin(),
        }
    }

    fn apply(&self, x: &[CMat], xl: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        for (c, hs) in self.halves.iter().enumerate() {
            let bs = self.cones[c].block_size;
            let xc = &x[c];
            for h in hs {
                let m = &self.mats[h.mat];
                let mut tr = ZERO;
                for q in 0..bs {
                    for p in 0..bs {
                        tr += m[(p, q)] * xc[(h.i * bs + q, h.j * bs + p)];
                    }
                }
                out[h.row] += (h.coeff * tr).re;
            }
        }
        for (i, rows) in self.lin_rows.iter().enumerate() {
            for &(r, v) in rows {
                out[r] += v * xl[i];
            }
        }
        out
    }

    fn adjoint(&self, y: &[f64]) -> (Vec<CMat>, Vec<f64>) {
        let mut out: Vec<CMat> = self.cones.iter().map(|c| linalg::zeros(c.dim(), c.dim())).collect();
        for (c, hs) in self.halves.iter().enumerate() {
            let bs = self.cones[c].block_size;
            let target = &mut out[c];
            for h in hs {
                let t = h.coeff * y[h.row];
                if t == ZERO {
                    continue;
                }
                let m = &self.mats[h.mat];
                for q in 0..bs {
                    for p in 0..bs {
                        target[(h.j * bs + p, h.i * bs + q)] += t * m[(p, q)];
                    }
                }
            }
        }
        let lin = self.lin_rows.iter().map(|rows| rows.iter().map(|&(r, v)| v * y[r]).sum()).collect();
        (out, lin)
    }

    /// Schur complement `M_rs = Re Tr(A_r X A_s Y) + Σ_i a_ri (x_i/z_i) a_si`.
    fn schur(&self, x: &[CMat], y_inv: &[CMat], xl: &[f64], zl: &[f64]) -> Mat<f64> {
        let n = self.nrows;
        let mut m = Mat::<f64>::zeros(n, n);
        for (c, hs) in self.halves.iter().enumerate() {
            if hs.is_empty() {
                continue;
            }
            let bs = self.cones[c].block_size;
            let nb = self.cones[c].blocks;
            let sz = bs * bs;
            // P_u[cb] = M_u X[i_u, cb], Qt_u[cb] = (M_u Y[i_u, cb])ᵀ, flat column-major.
            let mut pbuf = vec![ZERO; hs.len() * nb * sz];
            let mut qbuf = vec![ZERO; hs.len() * nb * sz];
            for (u, h) in hs.iter().enumerate() {
                let mu = &self.mats[h.mat];
                for cb in 0..nb {
                    let off = (u * nb + cb) * sz;
                    for col in 0..bs {
                        for row in 0..bs {
                            let mut sp = ZERO;
                            let mut sq = ZERO;
                            for t in 0..bs {
                                let mv = mu[(row, t)];
                                sp += mv * x[c][(h.i * bs + t, cb * bs + col)];
                                sq += mv * y_inv[c][(h.i * bs + t, cb * bs + col)];
                            }
                            pbuf[off + col * bs + row] = sp;
                            // transpose of Q: element (col, row)
                            qbuf[off + row * bs + col] = sq;
                        }
                    }
                }
            }
            for (u, hu) in hs.iter().enumerate() {
                for (v, hv) in hs.iter().enumerate() {
                    let po = (u * nb + hv.j) * sz;
                    let qo = (v * nb + hu.j) * sz;
                    let mut tr = ZERO;
                    for t in 0..sz {
                        tr += pbuf[po + t] * qbuf[qo + t];
                    }
                    m[(hu.row, hv.row)] += (hu.coeff * hv.coeff * tr).re;
                }
            }
        }
        for (i, rows) in self.lin_rows.iter().enumerate() {
            let d = xl[i] / zl[i];
            for &(r, a) in rows {
                for &(s, b) in rows {
                    m[(r, s)] += a * d * b;
                }
            }
        }
        for j in 0..n {
            for i in 0..j {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest `α` with `X + α dX ⪰ 0` (infinite if every direction is safe).
fn max_step_psd(x: &CMat, dx: &CMat) -> Result<f64> {
    let l = linalg::cholesky_lower(x)?;
    let li = linalg::invert_lower(&l);
    let mut t = linalg::sandwich(&li, dx);
    linalg::hermitize_in_place(&mut t);
    let lmin = linalg::min_eigenvalue(&t)?;
    Ok(if lmin < 0.0 { -1.0 / lmin } else { f64::INFINITY })
}

fn max_step_lin(x: &[f64], dx: &[f64]) -> f64 {
    x.iter().zip(dx).filter(|(_, d)| **d < 0.0).map(|(v, d)| -v / d).fold(f64::INFINITY, f64::min)
}

/// `(K + K^H)/2` for `K = a b c`.
fn sym_product(a: &CMat, b: &CMat, c: &CMat) -> CMat {
    let k = &(a * b) * c;
    linalg::hermitize(&k).0
}

struct Direction {
    dx: Vec<CMat>,
    dz: Vec<CMat>,
    dxl: Vec<f64>,
    dzl: Vec<f64>,
    dy: Vec<f64>,
}

struct Iterate {
    x: Vec<CMat>,
    z: Vec<CMat>,
    xl: Vec<f64>,
    zl: Vec<f64>,
    y: Vec<f64>,
}

fn solve_dense_spd(m: &Mat<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = m.nrows();
    let diag_max = (0..n).map(|i| m[(i, i)].abs()).fold(0.0f64, f64::max).max(1e-300);
    let mut reg = 0.0;
    for _ in 0..8 {
        let mut mm = m.clone();
        for i in 0..n {
            mm[(i, i)] += reg;
        }
        if let Ok(llt) = mm.llt(Side::Lower) {
            let b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
            let sol = faer::linalg::solvers::Solve::solve(&llt, &b);
            let out: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
            if out.iter().all(|v| v.is_finite()) {
                return Ok(out);
            }
        }
        reg = if reg == 0.0 { diag_max * 1e-14 } else { reg * 100.0 };
    }
    Err(Error::Solver { status: "schur".into(), detail: "Schur complement is not positive definite".into() })
}

impl InteriorPoint {
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        s: &Scaled,
        it: &Iterate,
        yinv: &[CMat],
        chol_m: &Mat<f64>,
        rp: &[f64],
        rd: &[CMat],
        rdl: &[f64],
        rc: &[CMat],
        rcl: &[f64],
    ) -> Result<Direction> {
        // rhs = rp − A(Rc) + A(X Rd Y)
        let xrdy: Vec<CMat> = (0..s.cones.len()).map(|c| &(&it.x[c] * &rd[c]) * &yinv[c]).collect();
        let xl_rd: Vec<f64> = (0..s.nlin).map(|i| it.xl[i] * rdl[i] / it.zl[i]).collect();
        let a_rc = s.apply(rc, rcl);
        let a_xrdy = s.apply(&xrdy, &xl_rd);
        let rhs: Vec<f64> = (0..s.nrows).map(|r| rp[r] - a_rc[r] + a_xrdy[r]).collect();
        let dy = solve_dense_spd(chol_m, &rhs)?;
        let (aty, atyl) = s.adjoint(&dy);
        let mut dz = Vec::with_capacity(s.cones.len());
        let mut dx = Vec::with_capacity(s.cones.len());
        for c in 0..s.cones.len() {
            let mut d = linalg::sub(&rd[c], &aty[c]);
            linalg::hermitize_in_place(&mut d);
            let corr = sym_product(&it.x[c], &d, &yinv[c]);
            dx.push(linalg::sub(&rc[c], &corr));
            dz.push(d);
        }
        let dzl: Vec<f64> = (0..s.nlin).map(|i| rdl[i] - atyl[i]).collect();
        let dxl: Vec<f64> = (0..s.nlin).map(|i| rcl[i] - it.xl[i] * dzl[i] / it.zl[i]).collect();
        Ok(Direction { dx, dz, dxl, dzl, dy })
    }

    fn steps(&self, it: &Iterate, d: &Direction) -> Result<(f64, f64)> {
        let mut ap = max_step_lin(&it.xl, &d.dxl);
        let mut ad = max_step_lin(&it.zl, &d.dzl);
        for c in 0..it.x.len() {
            ap = ap.min(max_step_psd(&it.x[c], &d.dx[c])?);
            ad = ad.min(max_step_psd(&it.z[c], &d.dz[c])?);
        }
        Ok((ap, ad))
    }
}

impl LinearSdpSolver for InteriorPoint {
    fn solve(&self, p: &LinearSdp) -> Result<SdpSolution> {
        p.validate()?;
        let s = Scaled::new(p);
        let nc = s.cones.len();
        let total_dim: f64 = s.cones.iter().map(|c| c.dim() as f64).sum::<f64>() + s.nlin as f64;
        let bnorm = norm2(&s.b);
        let cnorm = s.cost.iter().map(linalg::frobenius).map(|v| v * v).sum::<f64>().sqrt() + norm2(&s.lin_cost);

        let mut it = Iterate {
            x: s.cones.iter().map(|c| linalg::scale(&linalg::identity(c.dim()), (c.dim() as f64).sqrt().max(1.0))).collect(),
            z: s.cones.iter().map(|c| linalg::scale(&linalg::identity(c.dim()), (c.dim() as f64).sqrt().max(1.0))).collect(),
            xl: vec![1.0; s.nlin],
            zl: vec![1.0; s.nlin],
            y: vec![0.0; s.nrows],
        };
        let mut status = SolverStatus::Failed;
        let mut iterations = 0;
        let mut pres = f64::INFINITY;
        let mut dres = f64::INFINITY;
        let mut best: Option<(f64, Iterate)> = None;
        for iter in 0..self.max_iters {
            iterations = iter;
            let ax = s.apply(&it.x, &it.xl);
            let rp: Vec<f64> = (0..s.nrows).map(|r| s.b[r] - ax[r]).collect();
            let (aty, atyl) = s.adjoint(&it.y);
            let rd: Vec<CMat> = (0..nc).map(|c| {
                let mut r = linalg::sub(&linalg::sub(&s.cost[c], &it.z[c]), &aty[c]);
                linalg::hermitize_in_place(&mut r);
                r
            }).collect();
            let rdl: Vec<f64> = (0..s.nlin).map(|i| s.lin_cost[i] - it.zl[i] - atyl[i]).collect();
            let xz: f64 = (0..nc).map(|c| linalg::inner(&it.x[c], &it.z[c])).sum::<f64>()
                + it.xl.iter().zip(&it.zl).map(|(a, b)| a * b).sum::<f64>();
            let mu = xz / total_dim;
            let pobj = (0..nc).map(|c| linalg::inner(&s.cost[c], &it.x[c])).sum::<f64>()
                + s.lin_cost.iter().zip(&it.xl).map(|(a, b)| a * b).sum::<f64>();
            let dobj: f64 = s.b.iter().zip(&it.y).map(|(a, b)| a * b).sum();
            pres = norm2(&rp) / (1.0 + bnorm);
            dres = ((0..nc).map(|c| linalg::frobenius(&rd[c]).powi(2)).sum::<f64>() + norm2(&rdl).powi(2)).sqrt() / (1.0 + cnorm);
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            let gap = gap.max(xz / (1.0 + pobj.abs() + dobj.abs()));
            let merit = pres.max(dres).max(gap);
            if best.as_ref().is_none_or(|(m, _)| merit < *m) {
                best = Some((merit, Iterate { x: it.x.clone(), z: it.z.clone(), xl: it.xl.clone(), zl: it.zl.clone(), y: it.y.clone() }));
            }
            if pres < self.tol && dres < self.tol && gap < self.tol {
                status = SolverStatus::Optimal;
                break;
            }
            // A diverging dual objective with a stuck primal residual signals
            // primal infeasibility.
            if iter > 30 && pres > 1e-4 && dobj > 1e8 * (1.0 + pobj.abs()) {
                status = SolverStatus::Infeasible;
                break;
            }

            // Numerical breakdown near the boundary ends the run; the best
            // iterate so far is reported below.
            let Ok(yinv) = it.z.iter().map(linalg::hpd_inverse).collect::<Result<Vec<CMat>>>() else { break };
            let m = s.schur(&it.x, &yinv, &it.xl, &it.zl);

            // predictor
            let rc: Vec<CMat> = it.x.iter().map(|x| linalg::scale(x, -1.0)).collect();
            let rcl: Vec<f64> = it.xl.iter().map(|v| -v).collect();
            let pred = match self.direction(&s, &it, &yinv, &m, &rp, &rd, &rdl, &rc, &rcl) {
                Ok(d) => d,
                Err(_) => break,
            };
            let Ok((ap, ad)) = self.steps(&it, &pred) else { break };
            let ap1 = ap.min(1.0);
            let ad1 = ad.min(1.0);
            let mut xz_aff = 0.0;
            for c in 0..nc {
                let xa = linalg::add_scaled(&it.x[c], ap1, &pred.dx[c]);
                let za = linalg::add_scaled(&it.z[c], ad1, &pred.dz[c]);
                xz_aff += linalg::inner(&xa, &za);
            }
            for i in 0..s.nlin {
                xz_aff += (it.xl[i] + ap1 * pred.dxl[i]) * (it.zl[i] + ad1 * pred.dzl[i]);
            }
            let ratio = (xz_aff / xz).clamp(0.0, 1.0);
            let expo = if ap1.min(ad1) > 0.2 { 3.0 } else { 2.0 };
            let sigma = ratio.powf(expo).clamp(0.0, 1.0);

            // corrector
            let mut rc = Vec::with_capacity(nc);
            for c in 0..nc {
                let mut r = linalg::scale(&yinv[c], sigma * mu);
                r = linalg::sub(&r, &it.x[c]);
                let corr = sym_product(&pred.dx[c], &pred.dz[c], &yinv[c]);
                rc.push(linalg::sub(&r, &corr));
            }
            let rcl: Vec<f64> = (0..s.nlin)
                .map(|i| sigma * mu / it.zl[i] - it.xl[i] - pred.dxl[i] * pred.dzl[i] / it.zl[i])
                .collect();
            let dir = match self.direction(&s, &it, &yinv, &m, &rp, &rd, &rdl, &rc, &rcl) {
                Ok(d) => d,
                Err(_) => break,
            };
            let Ok((ap, ad)) = self.steps(&it, &dir) else { break };
            let gamma = 0.9 + 0.09 * ap1.min(ad1);
            let ap = (gamma * ap).min(1.0);
            let ad = (gamma * ad).min(1.0);
            for c in 0..nc {
                linalg::axpy(&mut it.x[c], C64::new(ap, 0.0), &dir.dx[c]);
                linalg::axpy(&mut it.z[c], C64::new(ad, 0.0), &dir.dz[c]);
                linalg::hermitize_in_place(&mut it.x[c]);
                linalg::hermitize_in_place(&mut it.z[c]);
            }
            for i in 0..s.nlin {
                it.xl[i] += ap * dir.dxl[i];
                it.zl[i] += ad * dir.dzl[i];
            }
            for r in 0..s.nrows {
                it.y[r] += ad * dir.dy[r];
            }
            if ap < 1e-10 && ad < 1e-10 {
                break;
            }
        }
        if status == SolverStatus::Failed {
            if let Some((merit, b)) = best {
                it = b;
                if merit < 1e-6 {
                    status = SolverStatus::NearOptimal;
                }
            }
            let ax = s.apply(&it.x, &it.xl);
            let rp: Vec<f64> = (0..s.nrows).map(|r| s.b[r] - ax[r]).collect();
            pres = norm2(&rp) / (1.0 + bnorm);
            if status == SolverStatus::Failed && pres > 1e-5 {
                status = SolverStatus::Infeasible;
            }
        }
        let y: Vec<f64> = (0..s.nrows).map(|r| it.y[r] * s.cost_scale / s.row_scale[r]).collect();
        let primal_objective = p.objective(&it.x, &it.xl);
        let dual_objective: f64 = p.rows.iter().zip(&y).map(|(r, v)| r.rhs * v).sum();
        let dual_bound = p.dual_bound(&y)?;
        let violated = if status == SolverStatus::Optimal { Vec::new() } else { p.violated_rows(&it.x, &it.xl, 1e-6) };
        Ok(SdpSolution {
            status,
            x: it.x,
            x_lin: it.xl,
            y,
            primal_objective,
            dual_objective,
            primal_residual: pres,
            dual_residual: dres,
            iterations,
            dual_bound,
            violated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMat {
        let a = CMat::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        linalg::hermitize(&a).0
    }

    fn trace_rows(blocks: usize, bs: usize, rhs: f64) -> (Vec<CMat>, Row) {
        let atoms = (0..blocks).map(|k| Atom { cone: 0, i: k, j: k, mat: 0, coeff: ONE }).collect();
        (vec![linalg::identity(bs)], Row { atoms, lin: vec![], rhs, label: "trace".into() })
    }

    #[test]
    fn min_eigenvalue_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_hermitian(12, &mut rng);
        let (mats, row) = trace_rows(3, 4, 1.0);
        let p = LinearSdp {
            cones: vec![PsdCone { blocks: 3, block_size: 4, trace_bound: 1.0, label: "rho".into() }],
            mats,
            lin_bounds: vec![],
            lin_labels: vec![],
            lin_cost: vec![],
            cost: vec![c.clone()],
            rows: vec![row],
        };
        let sol = InteriorPoint::default().solve(&p).unwrap();
        let lmin = linalg::min_eigenvalue(&c).unwrap();
        assert_eq!(sol.status, SolverStatus::Optimal);
        assert!((sol.primal_objective - lmin).abs() < 1e-7, "{} vs {lmin}", sol.primal_objective);
        assert!(sol.dual_bound <= lmin + 1e-12);
        assert!((sol.dual_bound - lmin).abs() < 1e-7);
    }

    #[test]
    fn inequality_through_slack() {
        // min Tr(C X) with Tr X + s = 1: optimum is min(0, λmin(C)).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = linalg::add(&random_hermitian(6, &mut rng), &linalg::scale(&linalg::identity(6), 2.0));
        let (mats, mut row) = trace_rows(1, 6, 1.0);
        row.lin.push((0, 1.0));
        let p = LinearSdp {
            cones: vec![PsdCone { blocks: 1, block_size: 6, trace_bound: 1.0, label: "rho".into() }],
            mats,
            lin_bounds: vec![1.0],
            lin_labels: vec!["s".into()],
            lin_cost: vec![0.0],
            cost: vec![c.clone()],
            rows: vec![row],
        };
        let sol = InteriorPoint::default().solve(&p).unwrap();
        let want = linalg::min_eigenvalue(&c).unwrap().min(0.0);
        assert!((sol.primal_objective - want).abs() < 1e-7);
        assert!((sol.dual_bound - want).abs() < 1e-7);
    }

    #[test]
    fn off_diagonal_atoms_fix_coherences() {
        // Two 2x2 blocks; fix Tr X = 1 and Re/Im of Tr(W X_01) to a target.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = CMat::from_fn(2, 2, |_, _| C64::new(rng.random::<f64>(), rng.random::<f64>()));
        let target = C64::new(0.1, -0.05);
        let (mut mats, trace) = trace_rows(2, 2, 1.0);
        mats.push(w.clone());
        let re = Row { atoms: vec![Atom { cone: 0, i: 0, j: 1, mat: 1, coeff: ONE }], lin: vec![], rhs: target.re, label: "re".into() };
        let im = Row { atoms: vec![Atom { cone: 0, i: 0, j: 1, mat: 1, coeff: C64::new(0.0, -1.0) }], lin: vec![], rhs: target.im, label: "im".into() };
        let c = random_hermitian(4, &mut rng);
        let p = LinearSdp {
            cones: vec![PsdCone { blocks: 2, block_size: 2, trace_bound: 1.0, label: "rho".into() }],
            mats,
            lin_bounds: vec![],
            lin_labels: vec![],
            lin_cost: vec![],
            cost: vec![c],
            rows: vec![trace, re, im],
        };
        let sol = InteriorPoint::default().solve(&p).unwrap();
        assert_eq!(sol.status, SolverStatus::Optimal);
        let x = &sol.x[0];
        let x01 = linalg::block(x, 0, 1, 2);
        let tr = linalg::trace(&linalg::matmul(&w, &x01));
        assert!((tr - target).norm() < 1e-8);
        assert!(linalg::min_eigenvalue(x).unwrap() > -1e-9);
        assert!(sol.dual_bound <= sol.primal_objective + 1e-9);
        assert!(sol.primal_objective - sol.dual_bound < 1e-6);
        // adjoint consistency: <A*(y), X> = yᵀA(X)
        let y = [0.3, -1.2, 0.7];
        let (aty, _) = p.adjoint(&y);
        let lhs = linalg::inner(&aty[0], x);
        let rhs: f64 = p.apply(&sol.x, &[]).iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn infeasible_is_reported() {
        // Tr X = 1 and Tr X = 2 simultaneously.
        let (mats, a) = trace_rows(1, 3, 1.0);
        let mut b = a.clone();
        b.rhs = 2.0;
        b.label = "trace2".into();
        let p = LinearSdp {
            cones: vec![PsdCone { blocks: 1, block_size: 3, trace_bound: 2.0, label: "rho".into() }],
            mats,
            lin_bounds: vec![1.0],
            lin_labels: vec!["s".into()],
            lin_cost: vec![0.0],
            cost: vec![linalg::identity(3)],
            rows: vec![a, Row { lin: vec![(0, -1.0)], ..b }],
        };
        // Tr X = 1 and Tr X − s = 2 with s ≥ 0 cannot hold together.
        let sol = InteriorPoint::default().solve(&p).unwrap();
        assert_eq!(sol.status, SolverStatus::Infeasible);
        assert!(!sol.violated.is_empty());
    }

    #[test]
    fn validation_catches_shapes() {
        let (mats, row) = trace_rows(2, 3, 1.0);
        let p = LinearSdp {
            cones: vec![PsdCone { blocks: 2, block_size: 2, trace_bound: 1.0, label: "rho".into() }],
            mats,
            lin_bounds: vec![],
            lin_labels: vec![],
            lin_cost: vec![],
            cost: vec![linalg::identity(4)],
            rows: vec![row],
        };
        assert!(matches!(p.validate(), Err(Error::Build(_))));
    }
}
