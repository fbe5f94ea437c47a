//! Numerical checks of the calculus behind the second-order estimate: the
//! linearization, the differentiated equation, the formula for
//! `dQ(|∇u|²)`, concavity of `log Q`, flat commutation of derivatives, and the
//! pointwise bound `|∇u_t| ≤ √(u_tt·B_u)`.
//!
//! Identity checks set `f := Q(u)` on the grid and compare both sides by
//! stencil, so they hold for any smooth `u`, not only for solutions, and
//! converge at second order rather than holding exactly.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Matrix3, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, NodeLocation, Result};
use crate::geometry::{self, Field, Grid, Layered, Metric};
use crate::math;
use crate::pde::{self, LocalTerms, ProblemData};
use crate::qalgebra::{Jet, JetMatrix};

/// `t²/2 + 0.01·sin(2πx/L)·cos(πt)`, with an extra `cos(2πy/L)` factor in
/// dimension 2.
pub fn manufactured_solution(grid: Grid) -> Field {
    let l = grid.torus().length();
    let dim = grid.dim();
    Field::from_fn(grid, |x, t| {
        let mut wave = math::sin(2.0 * PI * x[0] / l);
        if dim == 2 {
            wave *= math::cos(2.0 * PI * x[1] / l);
        }
        0.5 * t * t + 0.01 * wave * math::cos(PI * t)
    })
}

/// `sin(2πx/L)·sin(πt)`, zero on the boundary layers.
pub fn linearization_direction(grid: Grid) -> Field {
    let l = grid.torus().length();
    let nt = grid.nt();
    let mut psi = Field::from_fn(grid, |x, t| {
        math::sin(2.0 * PI * x[0] / l) * math::sin(PI * t)
    });
    for t in [0, nt - 1] {
        psi.layer_mut(t).iter_mut().for_each(|v| *v = 0.0);
    }
    psi
}

/// Successive ratios `e_k / e_{k+1}`.
pub fn refinement_ratios(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| w[0] / w[1]).collect()
}

/// Central-difference test of the linearization.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizationCheck {
    /// Step sizes actually used, after any shrinking for admissibility.
    pub steps: Vec<f64>,
    /// `‖(Q(u+hψ) − Q(u−hψ))/2h − dQ(ψ)‖∞` over interior nodes.
    pub errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log h`.
    pub slope: f64,
    /// `‖dQ(ψ)‖∞`.
    pub scale: f64,
    /// Every error is within rounding of zero, so the slope carries no
    /// information. This happens when `Q` is quadratic in `u` (`b = 0`):
    /// the central difference is then exact.
    pub at_rounding_floor: bool,
}

/// Errors below `ROUNDING_FLOOR·(1 + ‖dQ(ψ)‖∞)` count as rounding.
pub const ROUNDING_FLOOR: f64 = 1e-9;

pub fn check_linearization(
    u: &Field,
    psi: &Field,
    p: &ProblemData,
    steps: &[f64],
) -> Result<LinearizationCheck> {
    let grid = *u.grid();
    if psi.grid() != &grid || p.grid() != &grid {
        return Err(Error::ShapeMismatch("linearization fields".into()));
    }
    let nt = grid.nt();
    if psi
        .layer(0)
        .iter()
        .chain(psi.layer(nt - 1))
        .any(|&v| v != 0.0)
    {
        return Err(Error::InvalidParameter(
            "direction must vanish on the boundary layers".into(),
        ));
    }
    let mg = pde::margins(u, p);
    if !(mg.min() > 0.0) {
        return Err(Error::EllipticityLoss {
            node: mg.worst,
            margin: mg.min(),
        });
    }
    let dq = pde::apply_dq(u, psi, p);
    let scale = dq.interior_sup_norm();
    let shifted = |h: f64| u.zip_map(psi, |a, b| a + h * b);
    let mut used = Vec::with_capacity(steps.len());
    let mut errors = Vec::with_capacity(steps.len());
    for &h0 in steps {
        let mut h = h0;
        // Shrink until both probes stay admissible.
        for _ in 0..20 {
            let ok = pde::margins(&shifted(h), p).min() > 0.0
                && pde::margins(&shifted(-h), p).min() > 0.0;
            if ok {
                break;
            }
            h *= 0.1;
        }
        let qp = pde::q_field(&shifted(h), p);
        let qm = pde::q_field(&shifted(-h), p);
        let err = qp
            .interior()
            .iter()
            .zip(qm.interior())
            .zip(dq.interior())
            .fold(0.0_f64, |m, ((a, b), d)| {
                m.max(((a - b) / (2.0 * h) - d).abs())
            });
        used.push(h);
        errors.push(err);
    }
    let at_rounding_floor = errors.iter().all(|&e| e <= ROUNDING_FLOOR * (1.0 + scale));
    let logs_h: Vec<f64> = used.iter().map(|h| math::ln(*h)).collect();
    let logs_e: Vec<f64> = errors
        .iter()
        .map(|e| math::ln(e.max(f64::MIN_POSITIVE)))
        .collect();
    Ok(LinearizationCheck {
        slope: math::ls_slope(&logs_h, &logs_e),
        steps: used,
        errors,
        scale,
        at_rounding_floor,
    })
}

fn interior_sup(grid: &Grid, mut f: impl FnMut(usize) -> f64) -> f64 {
    let ns = grid.spatial_len();
    (ns..ns * (grid.nt() - 1)).fold(0.0_f64, |m, i| m.max(f(i).abs()))
}

/// `Q` on every layer, boundary layers by one-sided time stencils.
fn q_everywhere(lt: &LocalTerms, u: &Field, m: &Metric) -> Field {
    let ns = u.grid().spatial_len();
    let values = (0..u.values().len()).map(|i| lt.q(i, m, i % ns)).collect();
    u.with_values(values)
}

/// `a` repeated over the time layers of `grid`.
fn a_field(p: &ProblemData, grid: Grid) -> Field {
    let ns = grid.spatial_len();
    let values = (0..grid.len()).map(|i| p.a().at(i % ns)).collect();
    Field::from_values(grid, values).expect("finite coefficient")
}

/// Sup over interior nodes of the two sides of the spatial derivative of
/// the equation, contracted with `∇u`:
///
/// ```text
/// 2(∇u,∇f) − 2u_tt(∇u,∇a)
///   = 2u_tt(∇u,∇Δu) − 2b·u_tt(∇u,∇|∇u|²) + 2B_u(∇u,∇u_tt) − 2(∇u,∇|∇u_t|²)
/// ```
pub fn check_gradient_identity(u: &Field, p: &ProblemData) -> f64 {
    let grid = *u.grid();
    let m = p.metric();
    let lt = LocalTerms::new(u, p);
    let du = &lt.du;
    let f = q_everywhere(&lt, u, m);
    let inner = |v: &Field| geometry::inner_g(du, &geometry::partials(v), m);
    let with_f = inner(&f);
    let with_a = inner(&a_field(p, grid));
    let with_lap = inner(&geometry::laplace_beltrami(u, m));
    let with_grad_sq = inner(&geometry::grad_norm_sq(u, m));
    let with_utt = inner(&lt.utt);
    let with_mixed = inner(&geometry::inner_g(&lt.dut, &lt.dut, m));
    interior_sup(&grid, |i| {
        let utt = lt.utt.values()[i];
        let lhs = 2.0 * with_f.values()[i] - 2.0 * utt * with_a.values()[i];
        let rhs = 2.0 * utt * with_lap.values()[i] - 2.0 * p.b() * utt * with_grad_sq.values()[i]
            + 2.0 * lt.b.values()[i] * with_utt.values()[i]
            - 2.0 * with_mixed.values()[i];
        lhs - rhs
    })
}

/// Sup over interior nodes of the two sides of
///
/// ```text
/// dQ(|∇u|²) = 2u_tt(Ric(∇u,∇u) − (∇u,∇a)) + 2(∇f,∇u) + 2u_tt|∇²u|²
///             + 2B_u|∇u_t|² − 4∇²u(∇u_t,∇u_t)
/// ```
///
/// with `Ric = K·g` in dimension 2 and zero in dimension 1. The left side
/// feeds the field `|∇u|²_g` through the `dQ` stencil.
pub fn check_gradient_norm_identity(u: &Field, p: &ProblemData) -> f64 {
    let grid = *u.grid();
    let m = p.metric();
    let ns = grid.spatial_len();
    let lt = LocalTerms::new(u, p);
    let w = geometry::grad_norm_sq(u, m);
    let lhs = pde::apply_dq(u, &w, p);
    let f = q_everywhere(&lt, u, m);
    let with_f = geometry::inner_g(&lt.du, &geometry::partials(&f), m);
    let with_a = geometry::inner_g(&lt.du, &geometry::partials(&a_field(p, grid)), m);
    let mixed_sq = geometry::inner_g(&lt.dut, &lt.dut, m);
    let hess = geometry::covariant_hessian(u, m);
    let hess_norm = hess.norm_g(m);
    let curvature = m.curvature();
    let dim = grid.dim();
    interior_sup(&grid, |i| {
        let s = i % ns;
        let e = m.inv_factor(s);
        let utt = lt.utt.values()[i];
        let ric = if dim == 2 {
            curvature.at(s) * w.values()[i]
        } else {
            0.0
        };
        let mut hess_mixed = 0.0;
        for a in 0..dim {
            for b in 0..dim {
                hess_mixed +=
                    lt.dut[a].values()[i] * lt.dut[b].values()[i] * hess.entry(a, b).values()[i];
            }
        }
        hess_mixed *= e * e;
        let hn = hess_norm.values()[i];
        let rhs = 2.0 * utt * (ric - with_a.values()[i])
            + 2.0 * with_f.values()[i]
            + 2.0 * utt * hn * hn
            + 2.0 * lt.b.values()[i] * mixed_sq.values()[i]
            - 4.0 * hess_mixed;
        lhs.values()[i] - rhs
    })
}

/// Randomized scan of the Hessian of `G = log Q` on the admissible cone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConcavityReport {
    pub samples: usize,
    /// Largest `λ_max(G_hess)/(1 + ‖G_hess‖)` found.
    pub max_scaled_eigenvalue: f64,
    /// Smallest `−vᵀ G_hess v/(|v|²(1 + ‖G_hess‖))` over random `v`.
    pub min_scaled_form: f64,
}

impl ConcavityReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_scaled_eigenvalue <= tol && self.min_scaled_form >= -tol
    }
}

/// Largest eigenvalue of a symmetric jet matrix of size 3 or 4.
pub fn jet_matrix_lambda_max(h: &JetMatrix) -> f64 {
    match h.len {
        3 => Matrix3::from_fn(|i, j| h.m[i][j])
            .symmetric_eigenvalues()
            .max(),
        _ => Matrix4::from_fn(|i, j| h.m[i][j])
            .symmetric_eigenvalues()
            .max(),
    }
}

/// Smallest eigenvalue of a symmetric jet matrix of size 3 or 4.
pub fn jet_matrix_lambda_min(h: &JetMatrix) -> f64 {
    match h.len {
        3 => Matrix3::from_fn(|i, j| h.m[i][j])
            .symmetric_eigenvalues()
            .min(),
        _ => Matrix4::from_fn(|i, j| h.m[i][j])
            .symmetric_eigenvalues()
            .min(),
    }
}

/// Random admissible jet for spatial dimension `dim`: `r₀, r₁` log-uniform
/// in `[1e−3, 1e3]`, mixed part uniform in direction with `|m|² < r₀r₁`.
pub fn sample_admissible_jet(rng: &mut impl Rng, dim: usize) -> Jet {
    let r0 = math::exp(rng.gen_range(-3.0..3.0) * core::f64::consts::LN_10);
    let r1 = math::exp(rng.gen_range(-3.0..3.0) * core::f64::consts::LN_10);
    let frac: f64 = rng.gen_range(0.0..1.0);
    let radius = math::sqrt(frac * r0 * r1);
    let mut mixed = [0.0; 2];
    if dim == 1 {
        mixed[0] = if rng.gen_bool(0.5) { radius } else { -radius };
    } else {
        let th = rng.gen_range(0.0..core::f64::consts::TAU);
        mixed[0] = radius * math::cos(th);
        mixed[1] = radius * math::sin(th);
    }
    Jet::from_parts(r0, r1, &mixed[..dim])
}

/// Deterministic in `seed`.
pub fn check_concavity(samples: usize, seed: u64, dim: usize) -> Result<ConcavityReport> {
    if !(1..=2).contains(&dim) {
        return Err(Error::InvalidParameter(alloc::format!(
            "dimension {dim} not in 1..=2"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ConcavityReport {
        samples,
        max_scaled_eigenvalue: f64::NEG_INFINITY,
        min_scaled_form: f64::INFINITY,
    };
    for _ in 0..samples {
        let jet = sample_admissible_jet(&mut rng, dim);
        let h = jet.g_hess()?;
        let scale = 1.0 + h.norm();
        report.max_scaled_eigenvalue = report
            .max_scaled_eigenvalue
            .max(jet_matrix_lambda_max(&h) / scale);
        let mut v = [0.0; 4];
        for x in &mut v[..h.len] {
            *x = rng.gen_range(-1.0..1.0);
        }
        let norm_sq: f64 = v.iter().map(|x| x * x).sum();
        if norm_sq > 0.0 {
            let form = -h.quadratic_form(&v) / (norm_sq * scale);
            report.min_scaled_form = report.min_scaled_form.min(form);
        }
    }
    Ok(report)
}

/// Eigenvalue range of `G_hess` along `r = (1, 1, √(1 − τ)·e₁)` as `τ → 0⁺`,
/// i.e. as `Q = τ` approaches the cone boundary. Returns `(Q, λ_min, λ_max)`.
pub fn concavity_along_ray(dim: usize, taus: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    taus.iter()
        .map(|&tau| {
            let mut mixed = [0.0; 2];
            mixed[0] = math::sqrt(1.0 - tau);
            let jet = Jet::from_parts(1.0, 1.0, &mixed[..dim]);
            let h = jet.g_hess()?;
            Ok((
                jet.q_value(),
                jet_matrix_lambda_min(&h),
                jet_matrix_lambda_max(&h),
            ))
        })
        .collect()
}

/// `sup|Δ(∂ᵢ∂ⱼu) − ∂ᵢ∂ⱼ(Δu)|` over all second-difference entries, flat only.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommutationCheck {
    pub discrepancy: f64,
    /// `sup|Δ(∂ᵢ∂ⱼu)|`, the size of the terms being compared.
    pub scale: f64,
    /// `‖u‖∞/h⁴`: each composed stencil carries rounding of order
    /// `f64::EPSILON` times this, so exact commutation shows up as a
    /// discrepancy of that size rather than zero.
    pub rounding_scale: f64,
}

impl CommutationCheck {
    /// Discrepancy within a small multiple of the rounding scale.
    pub fn exact_to_rounding(&self) -> bool {
        self.discrepancy <= 64.0 * f64::EPSILON * self.rounding_scale
    }
}

pub fn check_flat_commutation(u: &Field, m: &Metric) -> Result<CommutationCheck> {
    if !m.is_flat() {
        return Err(Error::NotFlat);
    }
    let dim = u.grid().dim();
    let lap = geometry::flat_laplacian(u);
    let mut pairs: Vec<(Field, Field)> = (0..dim)
        .map(|axis| {
            (
                geometry::flat_laplacian(&geometry::second_difference(u, axis)),
                geometry::second_difference(&lap, axis),
            )
        })
        .collect();
    if dim == 2 {
        pairs.push((
            geometry::flat_laplacian(&geometry::mixed_difference(u)),
            geometry::mixed_difference(&lap),
        ));
    }
    let h = u.grid().hx();
    let mut out = CommutationCheck {
        discrepancy: 0.0,
        scale: 0.0,
        rounding_scale: u.sup_norm() / (h * h * h * h),
    };
    for (a, b) in &pairs {
        out.scale = out.scale.max(a.sup_norm());
        out.discrepancy = out.discrepancy.max(a.zip_map(b, |x, y| x - y).sup_norm());
    }
    Ok(out)
}

/// Smallest `√(u_tt·B_u) − |∇u_t|_g` over interior nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixedBound {
    pub min_slack: f64,
    pub worst: NodeLocation,
}

pub fn check_mixed_bound(u: &Field, p: &ProblemData) -> MixedBound {
    let grid = *u.grid();
    let m = p.metric();
    let ns = grid.spatial_len();
    let lt = LocalTerms::new(u, p);
    let mut out = MixedBound {
        min_slack: f64::INFINITY,
        worst: grid.location(0, 1),
    };
    for i in ns..ns * (grid.nt() - 1) {
        let prod = lt.utt.values()[i] * lt.b.values()[i];
        let slack = math::sqrt(prod.max(0.0)) - math::sqrt(lt.mixed_sq(i, m, i % ns));
        // A negative product is a cone violation; report it as such.
        let slack = if prod < 0.0 { slack.min(prod) } else { slack };
        if !(slack >= out.min_slack) {
            out.min_slack = slack;
            out.worst = grid.location_of(i);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SpatialField;
    use crate::pde::Target;
    use core::f64::consts::PI;

    fn problem(grid: Grid, metric: Metric, a: SpatialField, b: f64) -> ProblemData {
        let torus = *grid.torus();
        ProblemData::new(
            grid,
            metric,
            a,
            b,
            Target::Constant(0.1),
            SpatialField::zeros(torus),
            SpatialField::zeros(torus),
        )
        .unwrap()
    }

    fn flat1(n: usize, b: f64, a: impl Fn(f64) -> f64) -> ProblemData {
        let grid = Grid::with_shape(1, n, n + 1, 1.0).unwrap();
        let torus = *grid.torus();
        problem(
            grid,
            Metric::flat(torus),
            SpatialField::from_fn(torus, |x| a(x[0])),
            b,
        )
    }

    fn conformal2(n: usize) -> ProblemData {
        let grid = Grid::with_shape(2, n, n + 1, 1.0).unwrap();
        let torus = *grid.torus();
        let phi = SpatialField::from_fn(torus, |x| 0.1 * (2.0 * PI * x[0]).cos());
        problem(
            grid,
            Metric::conformal(phi).unwrap(),
            SpatialField::constant(torus, 1.0),
            0.0,
        )
    }

    const STEPS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

    #[test]
    fn zero_direction_gives_zero_error() {
        let p = flat1(16, 0.5, |_| 1.0);
        let u = manufactured_solution(*p.grid());
        let psi = Field::zeros(*p.grid());
        let c = check_linearization(&u, &psi, &p, &STEPS).unwrap();
        assert!(c.errors.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn linearization_slope_with_drift_term() {
        let p = flat1(32, 0.5, |_| 1.0);
        let u = manufactured_solution(*p.grid());
        let psi = linearization_direction(*p.grid());
        let c = check_linearization(&u, &psi, &p, &STEPS).unwrap();
        assert!(!c.at_rounding_floor);
        assert!((c.slope - 2.0).abs() <= 0.2, "{c:?}");
    }

    #[test]
    fn linearization_exact_without_drift_term() {
        let p = flat1(32, 0.0, |_| 1.0);
        let g = *p.grid();
        let u = Field::from_fn(g, |_, t| 0.5 * t * t);
        let c = check_linearization(&u, &linearization_direction(g), &p, &STEPS).unwrap();
        assert!(c.at_rounding_floor, "{c:?}");
    }

    #[test]
    fn linearization_rejects_boundary_values() {
        let p = flat1(16, 0.0, |_| 1.0);
        let u = manufactured_solution(*p.grid());
        let psi = Field::constant(*p.grid(), 1.0);
        assert!(check_linearization(&u, &psi, &p, &STEPS).is_err());
    }

    #[test]
    fn identities_vanish_for_t_only_field() {
        let p = flat1(16, 0.5, |_| 1.0);
        let u = Field::from_fn(*p.grid(), |_, t| 0.5 * t * t);
        assert_eq!(check_gradient_identity(&u, &p), 0.0);
        assert_eq!(check_gradient_norm_identity(&u, &p), 0.0);
    }

    fn ratios(mut err: impl FnMut(usize) -> f64, sizes: &[usize]) -> Vec<f64> {
        let errs: Vec<f64> = sizes.iter().map(|&n| err(n)).collect();
        refinement_ratios(&errs)
    }

    #[test]
    fn identities_converge_in_dim1() {
        for (b, a) in [(0.0, 0.0), (0.5, 0.1)] {
            let r = ratios(
                |n| {
                    let p = flat1(n, b, |x| 1.0 + a * (2.0 * PI * x).cos());
                    let u = manufactured_solution(*p.grid());
                    check_gradient_identity(&u, &p)
                },
                &[16, 32, 64],
            );
            assert!(r.iter().all(|v| (3.0..=5.5).contains(v)), "b = {b}: {r:?}");
            let r = ratios(
                |n| {
                    let p = flat1(n, b, |x| 1.0 + a * (2.0 * PI * x).cos());
                    let u = manufactured_solution(*p.grid());
                    check_gradient_norm_identity(&u, &p)
                },
                &[16, 32, 64],
            );
            assert!(r.iter().all(|v| (3.0..=5.5).contains(v)), "b = {b}: {r:?}");
        }
    }

    #[test]
    fn identities_converge_in_dim2_conformal() {
        let r = ratios(
            |n| {
                let p = conformal2(n);
                check_gradient_norm_identity(&manufactured_solution(*p.grid()), &p)
            },
            &[16, 32],
        );
        assert!((3.0..=5.5).contains(&r[0]), "{r:?}");
        let r = ratios(
            |n| {
                let p = conformal2(n);
                check_gradient_identity(&manufactured_solution(*p.grid()), &p)
            },
            &[16, 32],
        );
        assert!((3.0..=5.5).contains(&r[0]), "{r:?}");
    }

    #[test]
    fn concavity_scan_is_deterministic_and_passes() {
        for dim in [1, 2] {
            let a = check_concavity(2000, 11, dim).unwrap();
            let b = check_concavity(2000, 11, dim).unwrap();
            assert_eq!(a, b);
            assert!(a.passes(1e-10), "{a:?}");
        }
        assert!(check_concavity(10, 0, 3).is_err());
    }

    #[test]
    fn concavity_at_unit_jet_and_along_ray() {
        let h = Jet::new(&[1.0, 1.0, 0.0, 0.0]).unwrap().g_hess().unwrap();
        assert!((jet_matrix_lambda_max(&h) + 1.0).abs() < 1e-14);
        assert!((jet_matrix_lambda_min(&h) + 2.0).abs() < 1e-14);
        let ray = concavity_along_ray(2, &[1e-1, 1e-3, 1e-5]).unwrap();
        for w in ray.windows(2) {
            assert!(w[1].1 < w[0].1);
        }
        for (_, lo, hi) in &ray {
            assert!(*hi <= 1e-10 * (1.0 + lo.abs()));
        }
        assert!(ray[2].1 < -1e8);
    }

    #[test]
    fn flat_commutation() {
        let g1 = Grid::with_shape(1, 32, 5, 1.0).unwrap();
        let u = Field::from_fn(g1, |x, t| (2.0 * PI * x[0]).sin() * (1.0 + t) + x[0] * x[0]);
        let c = check_flat_commutation(&u, &Metric::flat(*g1.torus())).unwrap();
        assert_eq!(c.discrepancy, 0.0);

        let g2 = Grid::with_shape(2, 32, 5, 1.0).unwrap();
        let u = Field::from_fn(g2, |x, _| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
        let c = check_flat_commutation(&u, &Metric::flat(*g2.torus())).unwrap();
        assert!(c.exact_to_rounding(), "{c:?}");
        // A truncation error would be O(h²) relative to the scale.
        assert!(c.discrepancy <= 1e-12 * c.scale);

        let phi = SpatialField::from_fn(*g2.torus(), |x| 0.1 * (2.0 * PI * x[0]).cos());
        assert!(matches!(
            check_flat_commutation(&u, &Metric::conformal(phi).unwrap()),
            Err(Error::NotFlat)
        ));
    }

    #[test]
    fn mixed_bound_on_bulge() {
        let p = flat1(16, 0.0, |_| 1.0);
        let u = Field::from_fn(*p.grid(), |_, t| -t * (1.0 - t));
        let b = check_mixed_bound(&u, &p);
        assert!((b.min_slack - 2.0_f64.sqrt()).abs() < 1e-12);
    }
}
