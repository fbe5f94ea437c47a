//! Regularity checks on a nonnegative right-hand side `f`: the sup bundle
//! controlling degenerate targets, the gradient bound for square roots of
//! nonnegative `C^{1,1}` functions on a closed torus, and the growth bound
//! `|∇f|² ≤ C·f^{3/2}`.
//!
//! Derivatives of `√f` are taken only at nodes where `f` exceeds a relative
//! threshold (default `1e−10·sup f`); nodes in the zero set are skipped.

use crate::error::{Error, NodeLocation, Result};
use crate::geometry::{self, Field, Grid, Layered, Metric, SpatialField};
use crate::math;

/// Default relative threshold for the positive set of `f`.
pub const DEFAULT_THRESHOLD: f64 = 1e-10;

/// `(sup f, sup|(√f)_t|, sup|∇√f|, sup|f_tt|, sup|∇²√f|)`, flat metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FRecord {
    pub sup_f: f64,
    pub sqrt_t: f64,
    pub sqrt_grad: f64,
    pub f_tt: f64,
    pub sqrt_hess: f64,
}

impl FRecord {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.sup_f,
            self.sqrt_t,
            self.sqrt_grad,
            self.f_tt,
            self.sqrt_hess,
        ]
    }

    pub fn max(&self) -> f64 {
        self.as_array().into_iter().fold(0.0, f64::max)
    }
}

fn check_nonnegative<F: Layered>(f: &F, grid: &Grid) -> Result<()> {
    match f.values().iter().position(|&v| v < 0.0) {
        Some(i) => Err(Error::Negative {
            what: "f",
            node: grid.location_of(i),
            value: f.values()[i],
        }),
        None => Ok(()),
    }
}

/// Mask of nodes where `f > threshold·sup f`.
fn positive_set<F: Layered>(f: &F, threshold: f64) -> impl Fn(usize) -> bool + '_ {
    let cut = threshold * f.max_value();
    move |i| f.values()[i] > cut
}

fn masked_sup<F: Layered>(values: &F, keep: &impl Fn(usize) -> bool) -> f64 {
    values
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .fold(0.0, |m, (_, v)| m.max(v.abs()))
}

pub fn f_admissibility(f: &Field) -> Result<FRecord> {
    f_admissibility_with(f, DEFAULT_THRESHOLD)
}

pub fn f_admissibility_with(f: &Field, threshold: f64) -> Result<FRecord> {
    let grid = *f.grid();
    check_nonnegative(f, &grid)?;
    let flat = Metric::flat(*grid.torus());
    let keep = positive_set(f, threshold);
    let root = f.map(math::sqrt);
    let grad = geometry::grad_norm_sq(&root, &flat).map(math::sqrt);
    let hess = geometry::covariant_hessian(&root, &flat).norm_g(&flat);
    Ok(FRecord {
        sup_f: f.max_value(),
        sqrt_t: masked_sup(&geometry::time_first(&root), &keep),
        sqrt_grad: masked_sup(&grad, &keep),
        f_tt: geometry::time_second(f).sup_norm(),
        sqrt_hess: masked_sup(&hess, &keep),
    })
}

/// Node-wise comparison of `|D√ψ|` with `(1 + sup λ_max(D²ψ))/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RootGradientReport {
    pub sup_lambda_max: f64,
    /// `(1 + sup λ_max(D²ψ))/2`.
    pub bound: f64,
    pub sup_grad_sqrt: f64,
    /// `bound − |D√ψ|` minimized over the positive set.
    pub min_margin: f64,
    /// Spatial index of the minimizing node.
    pub argmin: usize,
}

impl RootGradientReport {
    pub fn holds(&self) -> bool {
        self.min_margin >= 0.0
    }
}

pub fn root_gradient_check(psi: &SpatialField) -> Result<RootGradientReport> {
    root_gradient_check_with(psi, DEFAULT_THRESHOLD)
}

pub fn root_gradient_check_with(psi: &SpatialField, threshold: f64) -> Result<RootGradientReport> {
    let torus = *psi.torus();
    if let Some(s) = psi.values().iter().position(|&v| v < 0.0) {
        return Err(Error::Negative {
            what: "ψ",
            node: NodeLocation {
                spatial: torus.multi_index(s),
                layer: 0,
            },
            value: psi.at(s),
        });
    }
    let flat = Metric::flat(torus);
    let sup_lambda_max = geometry::covariant_hessian(psi, &flat)
        .lambda_max_g(&flat)
        .max_value();
    let bound = 0.5 * (1.0 + sup_lambda_max);
    let keep = positive_set(psi, threshold);
    let grad = geometry::grad_norm_sq(&psi.map(math::sqrt), &flat).map(math::sqrt);
    let mut report = RootGradientReport {
        sup_lambda_max,
        bound,
        sup_grad_sqrt: 0.0,
        min_margin: bound,
        argmin: 0,
    };
    for (s, g) in grad.values().iter().enumerate() {
        if !keep(s) {
            continue;
        }
        report.sup_grad_sqrt = report.sup_grad_sqrt.max(*g);
        if bound - g < report.min_margin {
            report.min_margin = bound - g;
            report.argmin = s;
        }
    }
    Ok(report)
}

/// Smallest `C` with `|∇f|² ≤ C·f^{3/2}` over the positive set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthReport {
    /// `f64::INFINITY` when the ratio overflows.
    pub constant: f64,
    pub argmax: Option<NodeLocation>,
}

impl GrowthReport {
    pub fn is_bounded(&self) -> bool {
        self.constant.is_finite()
    }
}

/// Ratios above this are reported as unbounded.
const GROWTH_OVERFLOW: f64 = 1e200;

/// Uses `|∇f|²/f^{3/2} = 4|∇√f|²/√f`, which resolves the ratio near the zero
/// set of `f` far better than differencing `f` itself: for `f = g²` with a
/// simple zero of `g`, the stencil of `f` overshoots the limit by a factor 4.
pub fn gradient_growth_check(f: &Field) -> Result<GrowthReport> {
    gradient_growth_check_with(f, DEFAULT_THRESHOLD)
}

pub fn gradient_growth_check_with(f: &Field, threshold: f64) -> Result<GrowthReport> {
    let grid = *f.grid();
    check_nonnegative(f, &grid)?;
    let flat = Metric::flat(*grid.torus());
    let keep = positive_set(f, threshold);
    let root = f.map(math::sqrt);
    let grad = geometry::grad_norm_sq(&root, &flat);
    let mut report = GrowthReport {
        constant: 0.0,
        argmax: None,
    };
    for (i, g) in grad.values().iter().enumerate() {
        if !keep(i) {
            continue;
        }
        let ratio = 4.0 * g / root.values()[i];
        if ratio > report.constant {
            report.constant = ratio;
            report.argmax = Some(grid.location_of(i));
        }
    }
    if !(report.constant <= GROWTH_OVERFLOW) {
        report.constant = f64::INFINITY;
    }
    Ok(report)
}
