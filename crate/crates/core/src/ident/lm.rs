use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{inertia_from_params, inertia_params, BorderedBlockTridiag, IdentProblem, IdentVariables, N_GLOBAL};
use crate::error::{Error, Result};

/// Relative finite-difference step.
const FD_STEP: f64 = 1e-6;
/// Floor on the Marquardt scaling so variables without any residual still
/// get a well-posed (zero) update.
const DAMPING_FLOOR: f64 = 1e-12;
const DAMPING_MAX: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmStatus {
    Converged,
    /// Damping saturated without finding a decrease: a local minimum to
    /// working precision.
    Stalled,
    MaxIters,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    /// Objective after this trial (the previous value if rejected).
    pub cost: f64,
    pub damping: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerSolution {
    pub vars: IdentVariables,
    pub initial_cost: f64,
    pub cost: f64,
    pub iterations: usize,
    pub status: LmStatus,
    pub trace: Vec<TraceEntry>,
}

impl LowerSolution {
    /// Refined coefficients per step and wheel.
    pub fn s_star(&self) -> &[[[f64; 4]; 4]] {
        &self.vars.s
    }
}

/// Jacobian blocks of one step's residuals.
pub(crate) struct StepJacobian {
    pub r: DVector<f64>,
    pub own: DMatrix<f64>,
    pub next: Option<DMatrix<f64>>,
    pub global: DMatrix<f64>,
}

/// Central-difference Jacobian exploiting the step coupling: residual block
/// `i` only sees steps `i`, `i + 1` and the inertia.
pub(crate) fn structured_jacobian(p: &IdentProblem, vars: &IdentVariables) -> Result<Vec<StepJacobian>> {
    (0..p.len())
        .into_par_iter()
        .map(|i| {
            let cur = p.step_vars(vars, i);
            let next = (i + 1 < p.len()).then(|| p.step_vars(vars, i + 1));
            let eval = |c: &super::StepVars, n: Option<&super::StepVars>, inertia: &nalgebra::Matrix3<f64>| -> Result<DVector<f64>> {
                let mut out = Vec::with_capacity(p.residual_len(i));
                p.block_residuals(i, c, n, inertia, &mut out)?;
                Ok(DVector::from_vec(out))
            };
            let r = eval(&cur, next.as_ref(), &vars.inertia)?;
            let rows = r.len();

            let n_own = p.block_size(i);
            let mut own = DMatrix::zeros(rows, n_own);
            for k in 0..n_own {
                let h = FD_STEP * p.coord_scale(&cur, k);
                let (mut plus, mut minus) = (cur, cur);
                p.perturb(&mut plus, i, k, h);
                p.perturb(&mut minus, i, k, -h);
                let col = (eval(&plus, next.as_ref(), &vars.inertia)? - eval(&minus, next.as_ref(), &vars.inertia)?) / (2.0 * h);
                own.set_column(k, &col);
            }

            let next_j = match &next {
                Some(nx) => {
                    let n_next = p.block_size(i + 1);
                    let mut m = DMatrix::zeros(rows, n_next);
                    for k in 0..n_next {
                        let h = FD_STEP * p.coord_scale(nx, k);
                        let (mut plus, mut minus) = (*nx, *nx);
                        p.perturb(&mut plus, i + 1, k, h);
                        p.perturb(&mut minus, i + 1, k, -h);
                        let col = (eval(&cur, Some(&plus), &vars.inertia)? - eval(&cur, Some(&minus), &vars.inertia)?) / (2.0 * h);
                        m.set_column(k, &col);
                    }
                    Some(m)
                }
                None => None,
            };

            let base = inertia_params(&vars.inertia);
            let mut global = DMatrix::zeros(rows, N_GLOBAL);
            for k in 0..N_GLOBAL {
                let h = FD_STEP * base[k].abs().max(1.0);
                let (mut plus, mut minus) = (base, base);
                plus[k] += h;
                minus[k] -= h;
                let col = (eval(&cur, next.as_ref(), &inertia_from_params(&plus))?
                    - eval(&cur, next.as_ref(), &inertia_from_params(&minus))?)
                    / (2.0 * h);
                global.set_column(k, &col);
            }
            Ok(StepJacobian { r, own, next: next_j, global })
        })
        .collect()
}

/// Assemble the full Jacobian (rows in residual order, columns in update
/// order).
#[cfg(test)]
pub(crate) fn dense_jacobian(p: &IdentProblem, blocks: &[StepJacobian]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.r.len()).sum();
    let sizes = p.block_sizes();
    let cols = p.n_vars();
    let mut j = DMatrix::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for (i, b) in blocks.iter().enumerate() {
        let nr = b.r.len();
        j.view_mut((r0, c0), (nr, sizes[i])).copy_from(&b.own);
        if let Some(nx) = &b.next {
            j.view_mut((r0, c0 + sizes[i]), (nr, sizes[i + 1])).copy_from(nx);
        }
        j.view_mut((r0, cols - N_GLOBAL), (nr, N_GLOBAL)).copy_from(&b.global);
        r0 += nr;
        c0 += sizes[i];
    }
    j
}

/// Gauss-Newton normal equations `J^T J` and gradient `J^T r`.
fn normal_equations(p: &IdentProblem, blocks: &[StepJacobian]) -> (BorderedBlockTridiag, Vec<DVector<f64>>, DVector<f64>) {
    let sizes = p.block_sizes();
    let mut sys = BorderedBlockTridiag::zeros(&sizes, N_GLOBAL);
    let mut g: Vec<DVector<f64>> = sizes.iter().map(|&n| DVector::zeros(n)).collect();
    let mut gg = DVector::zeros(N_GLOBAL);
    for (i, b) in blocks.iter().enumerate() {
        let ot = b.own.transpose();
        sys.diag[i] += &ot * &b.own;
        sys.border[i] += &ot * &b.global;
        g[i] += &ot * &b.r;
        if let Some(nx) = &b.next {
            let nt = nx.transpose();
            sys.off[i] += &ot * nx;
            sys.diag[i + 1] += &nt * nx;
            sys.border[i + 1] += &nt * &b.global;
            g[i + 1] += &nt * &b.r;
        }
        sys.corner += b.global.transpose() * &b.global;
        gg += b.global.transpose() * &b.r;
    }
    (sys, g, gg)
}

fn damped(sys: &BorderedBlockTridiag, lambda: f64) -> BorderedBlockTridiag {
    let mut s = sys.clone();
    for d in s.diag.iter_mut().chain(std::iter::once(&mut s.corner)) {
        for k in 0..d.nrows() {
            d[(k, k)] += lambda * d[(k, k)].max(DAMPING_FLOOR);
        }
    }
    s
}

/// Cost of a candidate, infinite where the engine rejects it (non-positive
/// Stribeck speed, singular inertia and the like).
fn trial_cost(p: &IdentProblem, vars: &IdentVariables) -> f64 {
    if vars.s.iter().flatten().any(|s| !(s[2] > 1e-6)) {
        return f64::INFINITY;
    }
    match p.cost(vars) {
        Ok(c) if c.is_finite() => c,
        _ => f64::INFINITY,
    }
}

/// Levenberg-Marquardt on the lower-level objective starting from `init`.
/// Accepted steps never increase the cost; on hitting the iteration cap the
/// best iterate is returned with [`LmStatus::MaxIters`].
pub fn solve_lower(problem: &IdentProblem, init: &IdentVariables) -> Result<LowerSolution> {
    let lm = problem.params.lm;
    let mut vars = init.clone();
    let initial_cost = problem.cost(&vars)?;
    if !initial_cost.is_finite() {
        return Err(Error::domain("initial identification cost is not finite"));
    }
    let mut cost = initial_cost;
    let mut lambda = lm.damping_init;
    let mut trace = Vec::new();
    let mut status = LmStatus::MaxIters;
    let mut iterations = 0;

    'outer: while iterations < lm.max_iters {
        iterations += 1;
        let blocks = structured_jacobian(problem, &vars)?;
        let (sys, g, gg) = normal_equations(problem, &blocks);
        let neg_g: Vec<DVector<f64>> = g.iter().map(|v| -v).collect();
        loop {
            let (dx, dg) = damped(&sys, lambda).solve(&neg_g, &(-&gg))?;
            let mut delta: Vec<f64> = dx.iter().flat_map(|v| v.iter().copied()).collect();
            delta.extend(dg.iter());
            let delta = DVector::from_vec(delta);
            let step_norm = delta.norm();
            let cand = problem.apply(&vars, &delta);
            let c = trial_cost(problem, &cand);
            let accepted = c < cost;
            trace.push(TraceEntry { iter: iterations, cost: if accepted { c } else { cost }, damping: lambda, step_norm, accepted });
            if accepted {
                let decrease = cost - c;
                vars = cand;
                cost = c;
                lambda = (lambda / lm.damping_scale).max(1e-15);
                let scale = variable_scale(&vars);
                // Besides a vanishing step or decrease, stop once the residual norm
                // has shrunk by `1 / tol`: what is left is round-off, and flat
                // directions (unexcited inertia axes) would otherwise be walked
                // for many iterations at no gain.
                if step_norm <= lm.tol * (scale + lm.tol)
                    || decrease <= lm.cost_tol * cost
                    || cost <= lm.tol * lm.tol * initial_cost
                {
                    status = LmStatus::Converged;
                    break 'outer;
                }
                break;
            }
            lambda *= lm.damping_scale;
            if lambda > DAMPING_MAX {
                status = LmStatus::Stalled;
                break 'outer;
            }
        }
    }
    if status == LmStatus::MaxIters {
        log::warn!("identification hit {} iterations at cost {cost:.3e}", lm.max_iters);
    }
    Ok(LowerSolution { vars, initial_cost, cost, iterations, status, trace })
}

fn variable_scale(v: &IdentVariables) -> f64 {
    let mut s = 0.0;
    for i in 0..v.len() {
        s += v.states[i].v.norm_squared();
        s += v.rpm[i].iter().map(|x| x * x).sum::<f64>();
        s += v.s[i].iter().flatten().map(|x| x * x).sum::<f64>();
    }
    s.sqrt()
}
