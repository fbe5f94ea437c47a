//! Damped Newton iteration inside the admissible cone, the admissible
//! initial path, and the continuation ladder in the target level.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::diagnostics::{LadderReport, LadderRow};
use crate::error::{Error, Result};
use crate::geometry::{Field, Layered};
use crate::pde::{self, LinearMethod, Margins, ProblemData};

/// Tolerances and continuation parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Stop when `‖Q(u) − target‖∞` on interior nodes drops to this.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Step shrink factor of the line search.
    pub backtrack_factor: f64,
    pub max_halvings: usize,
    /// Every accepted iterate keeps `min(u_tt, B_u, Q)` above this.
    pub admissibility_floor: f64,
    /// Relative residual required of each linear solve.
    pub linear_tol: f64,
    pub linear_method: LinearMethod,
    /// First continuation level.
    pub eps0: f64,
    /// Ratio between successive levels, in `(0, 1)`.
    pub sigma: f64,
    /// Last continuation level.
    pub eps_min: f64,
    /// Height of the initial bulge; `None` uses `max(1, ‖u1 − u0‖∞)`.
    pub bulge: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            max_newton_iters: 50,
            backtrack_factor: 0.5,
            max_halvings: 30,
            admissibility_floor: 1e-12,
            linear_tol: 1e-12,
            linear_method: LinearMethod::Auto,
            eps0: 1e-1,
            sigma: 1e-1,
            eps_min: 1e-4,
            bulge: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("newton_tol", self.newton_tol),
            ("admissibility_floor", self.admissibility_floor),
            ("linear_tol", self.linear_tol),
            ("eps0", self.eps0),
            ("eps_min", self.eps_min),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {v} must be positive"
                )));
            }
        }
        for (name, v) in [
            ("sigma", self.sigma),
            ("backtrack_factor", self.backtrack_factor),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {v} must lie in (0, 1)"
                )));
            }
        }
        if self.eps_min > self.eps0 {
            return Err(Error::InvalidParameter(format!(
                "eps_min = {} exceeds eps0 = {}",
                self.eps_min, self.eps0
            )));
        }
        if let Some(l) = self.bulge {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "bulge = {l} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Continuation levels `eps0·σᵏ` down to `eps_min` (inclusive up to
    /// rounding).
    pub fn levels(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut level = self.eps0;
        let mut k = 0;
        while level >= self.eps_min * (1.0 - 1e-9) {
            out.push(level);
            k += 1;
            level = self.eps0 * crate::math::powi(self.sigma, k);
        }
        out
    }
}

/// Why a Newton solve stopped.
#[derive(Clone, Debug, PartialEq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// No step size in the line search kept the cone and reduced the residual.
    LineSearchStall,
    LinearSolverFailure(String),
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    /// Best iterate; the converged solution when `status` is `Converged`.
    pub u: Field,
    pub iterations: usize,
    /// `‖Q(u) − target‖∞` over interior nodes.
    pub residual: f64,
    pub margins: Margins,
    pub status: SolveStatus,
    /// Residual before the first step and after each accepted step.
    pub history: Vec<f64>,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// `(1 − t)u0 + t·u1 − λt(1 − t)`: `u_tt = 2λ` and, by convexity of
/// `|∇u|²`, `B_u` dominates the convex combination of the endpoint values.
pub fn initial_path(p: &ProblemData, lambda: f64) -> Result<Field> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "bulge λ = {lambda} must be positive"
        )));
    }
    let grid = *p.grid();
    let ns = grid.spatial_len();
    let mut u = Field::zeros(grid);
    for t in 0..grid.nt() {
        let tau = grid.time(t);
        let layer = u.layer_mut(t);
        for (s, v) in layer.iter_mut().enumerate() {
            *v = (1.0 - tau) * p.u0().at(s) + tau * p.u1().at(s) - lambda * tau * (1.0 - tau);
        }
        debug_assert_eq!(layer.len(), ns);
    }
    // Exact endpoint values rather than `(1 − 1)·u0 + 1·u1`.
    u.layer_mut(0).copy_from_slice(p.u0().values());
    u.layer_mut(grid.nt() - 1).copy_from_slice(p.u1().values());
    Ok(u)
}

/// `max(1, ‖u1 − u0‖∞)`.
pub fn default_bulge(p: &ProblemData) -> f64 {
    let diff = p.u1().zip_map(p.u0(), |a, b| a - b).sup_norm();
    diff.max(1.0)
}

fn evaluate(u: &Field, p: &ProblemData) -> (f64, Margins) {
    let lt = pde::LocalTerms::new(u, p);
    let grid = u.grid();
    let ns = grid.spatial_len();
    let m = p.metric();
    let mut res = 0.0_f64;
    for i in ns..ns * (grid.nt() - 1) {
        let r = (lt.q(i, m, i % ns) - p.target().value(i)).abs();
        // NaN propagates as an infinite residual.
        res = if r.is_nan() {
            f64::INFINITY
        } else {
            res.max(r)
        };
    }
    (res, pde::margins_of(&lt, grid, m))
}

/// Damped Newton from an admissible `u_init` carrying the boundary data.
///
/// A step `u + sψ` is accepted for the largest `s = factorᵏ` that keeps every
/// interior jet above the admissibility floor and strictly reduces the
/// residual. Non-convergence is reported in the result, not as an error.
pub fn newton_solve(p: &ProblemData, u_init: &Field, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    if u_init.grid() != p.grid() {
        return Err(Error::ShapeMismatch("initial field grid".into()));
    }
    if !p.matches_boundary(u_init) {
        return Err(Error::InvalidParameter(
            "initial field does not carry the boundary data".into(),
        ));
    }
    let mut u = u_init.clone();
    let (mut res, mut margins) = evaluate(&u, p);
    if !(margins.min() > cfg.admissibility_floor) {
        return Err(Error::EllipticityLoss {
            node: margins.worst,
            margin: margins.min(),
        });
    }
    let mut history = alloc::vec![res];
    let mut iterations = 0;
    let mut status = SolveStatus::MaxIterations;
    loop {
        if res <= cfg.newton_tol {
            status = SolveStatus::Converged;
            break;
        }
        if iterations == cfg.max_newton_iters {
            break;
        }
        let step = pde::assemble_dq(&u, p)
            .and_then(|sys| pde::solve_linear_with(&sys, cfg.linear_tol, cfg.linear_method));
        let psi = match step {
            Ok(psi) => psi,
            Err(e) => {
                status = SolveStatus::LinearSolverFailure(e.to_string());
                break;
            }
        };
        let mut s = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let mut trial = u.clone();
            for (v, d) in trial.interior_mut().iter_mut().zip(&psi) {
                *v += s * d;
            }
            let (r, mg) = evaluate(&trial, p);
            if mg.min() > cfg.admissibility_floor && r < res {
                accepted = Some((trial, r, mg));
                break;
            }
            s *= cfg.backtrack_factor;
        }
        let Some((next, r, mg)) = accepted else {
            status = SolveStatus::LineSearchStall;
            break;
        };
        u = next;
        res = r;
        margins = mg;
        iterations += 1;
        history.push(res);
    }
    Ok(SolveResult {
        u,
        iterations,
        residual: res,
        margins,
        status,
        history,
    })
}

/// A completed ladder: the report and the solution of every converged rung.
#[derive(Clone, Debug)]
pub struct LadderRun {
    pub report: LadderReport,
    pub solutions: Vec<(f64, Field)>,
}

/// Solves at each level of [`SolverConfig::levels`], warm-starting each rung
/// from the previous one. The first rung starts from [`initial_path`].
///
/// A failure at the first rung is a configuration error; a later failure
/// ends the ladder and is recorded as a non-converged row.
pub fn epsilon_ladder(p: &ProblemData, cfg: &SolverConfig) -> Result<LadderRun> {
    cfg.validate()?;
    let lambda = cfg.bulge.unwrap_or_else(|| default_bulge(p));
    let mut start = initial_path(p, lambda)?;
    let mut report = LadderReport::new(p);
    let mut solutions = Vec::new();
    for (k, level) in cfg.levels().into_iter().enumerate() {
        let rung = p.with_level(level)?;
        let result = match newton_solve(&rung, &start, cfg) {
            Ok(r) => r,
            Err(e) if k == 0 => {
                return Err(Error::FirstRungFailed {
                    level,
                    reason: e.to_string(),
                })
            }
            Err(e) => return Err(e),
        };
        if k == 0 && !result.converged() {
            return Err(Error::FirstRungFailed {
                level,
                reason: format!(
                    "{:?} after {} iterations, residual {:.3e}",
                    result.status, result.iterations, result.residual
                ),
            });
        }
        report
            .rows
            .push(LadderRow::from_solve(level, &result, &rung));
        if !result.converged() {
            break;
        }
        start = result.u.clone();
        solutions.push((level, result.u));
    }
    Ok(LadderRun { report, solutions })
}
