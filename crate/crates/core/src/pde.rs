//! The discrete operator `Q(u) = u_tt·B_u − |∇u_t|²_g`, its jets, and the
//! sparse linearization
//!
//! ```text
//! dQ(ψ) = u_tt (Δψ − 2b(∇u, ∇ψ)) + B_u ψ_tt − 2(∇u_t, ∇ψ_t)
//! ```
//!
//! assembled over the interior time layers with `ψ = 0` on layers `0` and
//! `nt − 1`. Every stencil in `dQ` is the one used for `Q`, so the matrix is
//! the exact Jacobian of the discrete residual.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, LinearSolveError, NodeLocation, Result};
use crate::geometry::{self, Field, Grid, Layered, Metric, SpatialField};
use crate::math;
use crate::qalgebra::Jet;
use crate::sparse::{self, BandedLu, CsrMatrix, GmresOptions};

/// Right-hand side of the equation.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    /// Constant level `ε > 0`.
    Constant(f64),
    /// A nonnegative field `f` lifted by `shift ≥ 0`; the solver sees `f + shift`.
    Shifted { f: Field, shift: f64 },
}

impl Target {
    /// Target value at flat grid index `i`.
    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        match self {
            Target::Constant(eps) => *eps,
            Target::Shifted { f, shift } => f.values()[i] + shift,
        }
    }

    /// The continuation variable: `ε` or the shift `δ`.
    pub fn level(&self) -> f64 {
        match self {
            Target::Constant(eps) => *eps,
            Target::Shifted { shift, .. } => *shift,
        }
    }

    pub fn with_level(&self, level: f64) -> Self {
        match self {
            Target::Constant(_) => Target::Constant(level),
            Target::Shifted { f, .. } => Target::Shifted {
                f: f.clone(),
                shift: level,
            },
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Target::Constant(_))
    }
}

/// Metric, coefficients, target and boundary data of one Dirichlet problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemData {
    grid: Grid,
    metric: Metric,
    a: SpatialField,
    b: f64,
    target: Target,
    u0: SpatialField,
    u1: SpatialField,
}

impl ProblemData {
    /// Validates `a > 0`, `b ≥ 0`, the target, and that both endpoints lie
    /// in the admissible set `{Δφ − b|∇φ|² + a > 0}`.
    pub fn new(
        grid: Grid,
        metric: Metric,
        a: SpatialField,
        b: f64,
        target: Target,
        u0: SpatialField,
        u1: SpatialField,
    ) -> Result<Self> {
        let torus = *grid.torus();
        for (name, t) in [
            ("metric", metric.torus()),
            ("a", a.torus()),
            ("u0", u0.torus()),
            ("u1", u1.torus()),
        ] {
            if *t != torus {
                return Err(Error::ShapeMismatch(format!(
                    "{name} lives on a different torus"
                )));
            }
        }
        if let Some(s) = a.values().iter().position(|&v| !(v > 0.0)) {
            return Err(Error::InadmissibleData {
                what: "coefficient a",
                node: grid.location(s, 0),
                value: a.at(s),
            });
        }
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "b = {b} must be a nonnegative constant"
            )));
        }
        match &target {
            Target::Constant(eps) => {
                if !(*eps > 0.0 && eps.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "target level ε = {eps} must be positive"
                    )));
                }
            }
            Target::Shifted { f, shift } => {
                if f.grid() != &grid {
                    return Err(Error::ShapeMismatch("target field grid".into()));
                }
                if !(*shift >= 0.0 && shift.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "shift δ = {shift} must be ≥ 0"
                    )));
                }
                if let Some(i) = f.values().iter().position(|&v| v < 0.0) {
                    return Err(Error::Negative {
                        what: "target f",
                        node: grid.location_of(i),
                        value: f.values()[i],
                    });
                }
            }
        }
        let p = Self {
            grid,
            metric,
            a,
            b,
            target,
            u0,
            u1,
        };
        for (name, layer, v) in [("u0", 0, &p.u0), ("u1", grid.nt() - 1, &p.u1)] {
            let bv = p.b_operator(v);
            if let Some(s) = bv.values().iter().position(|&x| !(x > 0.0)) {
                return Err(Error::InadmissibleData {
                    what: if name == "u0" {
                        "endpoint u0 (B ≤ 0)"
                    } else {
                        "endpoint u1 (B ≤ 0)"
                    },
                    node: grid.location(s, layer),
                    value: bv.at(s),
                });
            }
        }
        Ok(p)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn a(&self) -> &SpatialField {
        &self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn u0(&self) -> &SpatialField {
        &self.u0
    }

    pub fn u1(&self) -> &SpatialField {
        &self.u1
    }

    /// Same problem with the continuation level replaced.
    pub fn with_level(&self, level: f64) -> Result<Self> {
        self.with_target(self.target.with_level(level))
    }

    pub fn with_target(&self, target: Target) -> Result<Self> {
        Self::new(
            self.grid,
            self.metric.clone(),
            self.a.clone(),
            self.b,
            target,
            self.u0.clone(),
            self.u1.clone(),
        )
    }

    /// `B_v = Δ_g v − b|∇v|²_g + a`, layer by layer.
    pub fn b_operator<F: Layered>(&self, v: &F) -> F {
        let lap = geometry::laplace_beltrami(v, &self.metric);
        let grad = geometry::grad_norm_sq(v, &self.metric);
        let ns = self.grid.spatial_len();
        let values = lap
            .values()
            .iter()
            .zip(grad.values())
            .enumerate()
            .map(|(i, (l, g))| l - self.b * g + self.a.at(i % ns))
            .collect();
        v.with_values(values)
    }

    /// Whether `u` carries the boundary data on layers `0` and `nt − 1`
    /// bit for bit.
    pub fn matches_boundary(&self, u: &Field) -> bool {
        u.layer(0) == self.u0.values() && u.layer(self.grid.nt() - 1) == self.u1.values()
    }
}

/// `B_u` on every layer.
pub fn b_u(u: &Field, p: &ProblemData) -> Field {
    p.b_operator(u)
}

/// The pieces every interior evaluation needs.
#[derive(Clone, Debug)]
pub(crate) struct LocalTerms {
    pub utt: Field,
    pub b: Field,
    /// Coordinate partials `∂ᵢu`.
    pub du: Vec<Field>,
    /// Coordinate partials `∂ᵢu_t`.
    pub dut: Vec<Field>,
}

impl LocalTerms {
    pub fn new(u: &Field, p: &ProblemData) -> Self {
        let td = geometry::time_derivatives(u);
        Self {
            utt: td.utt,
            b: p.b_operator(u),
            du: geometry::partials(u),
            dut: td.grad_ut,
        }
    }

    /// `|∇u_t|²_g` at flat index `i`.
    #[inline]
    pub fn mixed_sq(&self, i: usize, m: &Metric, s: usize) -> f64 {
        m.inv_factor(s)
            * self
                .dut
                .iter()
                .map(|d| d.values()[i] * d.values()[i])
                .sum::<f64>()
    }

    #[inline]
    pub fn q(&self, i: usize, m: &Metric, s: usize) -> f64 {
        self.utt.values()[i] * self.b.values()[i] - self.mixed_sq(i, m, s)
    }

    pub fn jet(&self, i: usize, m: &Metric, s: usize) -> Jet {
        let scale = math::sqrt(m.inv_factor(s));
        let mut mixed = [0.0; 2];
        for (k, d) in self.dut.iter().enumerate() {
            mixed[k] = scale * d.values()[i];
        }
        Jet::from_parts(
            self.utt.values()[i],
            self.b.values()[i],
            &mixed[..self.dut.len()],
        )
    }
}

fn interior_field(grid: Grid, mut f: impl FnMut(usize, usize) -> f64) -> Field {
    let ns = grid.spatial_len();
    let mut out = Field::zeros(grid);
    for t in 1..grid.nt() - 1 {
        for s in 0..ns {
            out.set(s, t, f(t * ns + s, s));
        }
    }
    out
}

/// `Q(u) = u_tt·B_u − |∇u_t|²_g` on interior layers; boundary layers hold 0.
pub fn q_field(u: &Field, p: &ProblemData) -> Field {
    let lt = LocalTerms::new(u, p);
    interior_field(*u.grid(), |i, s| lt.q(i, &p.metric, s))
}

/// `Q(u) − target` on interior layers; boundary layers hold 0.
pub fn residual(u: &Field, p: &ProblemData) -> Field {
    let lt = LocalTerms::new(u, p);
    interior_field(*u.grid(), |i, s| lt.q(i, &p.metric, s) - p.target.value(i))
}

/// Jets `(u_tt, B_u, e^{−φ}∂ᵢu_t)` at interior nodes, in unknown ordering.
pub fn jets(u: &Field, p: &ProblemData) -> Vec<Jet> {
    let lt = LocalTerms::new(u, p);
    let grid = u.grid();
    let ns = grid.spatial_len();
    (ns..ns * (grid.nt() - 1))
        .map(|i| lt.jet(i, &p.metric, i % ns))
        .collect()
}

/// Minimum of `u_tt`, `B_u` and `Q` over the interior nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Margins {
    pub min_utt: f64,
    pub min_b: f64,
    pub min_q: f64,
    pub max_q: f64,
    /// Largest node-wise `min(u_tt, B_u, Q)`.
    pub max_margin: f64,
    /// Node achieving the smallest of the three minima.
    pub worst: NodeLocation,
}

impl Margins {
    pub fn min(&self) -> f64 {
        self.min_utt.min(self.min_b).min(self.min_q)
    }
}

pub fn margins(u: &Field, p: &ProblemData) -> Margins {
    let lt = LocalTerms::new(u, p);
    margins_of(&lt, u.grid(), &p.metric)
}

pub(crate) fn margins_of(lt: &LocalTerms, grid: &Grid, m: &Metric) -> Margins {
    let ns = grid.spatial_len();
    let mut out = Margins {
        min_utt: f64::INFINITY,
        min_b: f64::INFINITY,
        min_q: f64::INFINITY,
        max_q: f64::NEG_INFINITY,
        max_margin: f64::NEG_INFINITY,
        worst: grid.location(0, 1),
    };
    let mut worst = f64::INFINITY;
    for i in ns..ns * (grid.nt() - 1) {
        let s = i % ns;
        let utt = lt.utt.values()[i];
        let b = lt.b.values()[i];
        let q = lt.q(i, m, s);
        out.min_utt = out.min_utt.min(utt);
        out.min_b = out.min_b.min(b);
        out.min_q = out.min_q.min(q);
        out.max_q = out.max_q.max(q);
        let local = utt.min(b).min(q);
        out.max_margin = out.max_margin.max(local);
        // `!(local >= worst)` also catches NaN.
        if !(local >= worst) {
            worst = local;
            out.worst = grid.location_of(i);
        }
    }
    out
}

/// `dQ(ψ)` by stencils on the full field `ψ` (boundary values of `ψ` are
/// used as given); interior layers only, boundary layers hold 0.
pub fn apply_dq(u: &Field, psi: &Field, p: &ProblemData) -> Field {
    let lt = LocalTerms::new(u, p);
    let m = &p.metric;
    let lap = geometry::laplace_beltrami(psi, m);
    let dpsi = geometry::partials(psi);
    let td = geometry::time_derivatives(psi);
    interior_field(*u.grid(), |i, s| {
        let e = m.inv_factor(s);
        let mut drift = 0.0;
        let mut mixed = 0.0;
        for k in 0..dpsi.len() {
            drift += lt.du[k].values()[i] * dpsi[k].values()[i];
            mixed += lt.dut[k].values()[i] * td.grad_ut[k].values()[i];
        }
        lt.utt.values()[i] * (lap.values()[i] - 2.0 * p.b * e * drift)
            + lt.b.values()[i] * td.utt.values()[i]
            - 2.0 * e * mixed
    })
}

/// Assembled Newton system: `dQ` over interior unknowns and
/// `rhs = target − Q(u)`.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    grid: Grid,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

impl SparseSystem {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Time-outer ordering with each layer's spatial nodes folded
    /// (`0, n−1, 1, n−2, …` per axis) so periodic neighbours stay close.
    /// Returns `ordering[new] = old`.
    pub fn banded_ordering(&self) -> Vec<usize> {
        let torus = self.grid.torus();
        let nx = torus.nx();
        let fold = |p: usize| {
            if p.is_multiple_of(2) {
                p / 2
            } else {
                nx - 1 - p / 2
            }
        };
        let ns = torus.len();
        let layer: Vec<usize> = match torus.dim() {
            1 => (0..nx).map(fold).collect(),
            _ => (0..ns)
                .map(|p| torus.index(fold(p % nx), fold(p / nx)))
                .collect(),
        };
        (0..self.grid.nt() - 2)
            .flat_map(|t| layer.iter().map(move |&s| t * ns + s))
            .collect()
    }
}

/// Assembles `dQ` at `u`. Fails with [`Error::EllipticityLoss`] if any
/// interior jet is outside the admissible cone.
pub fn assemble_dq(u: &Field, p: &ProblemData) -> Result<SparseSystem> {
    let grid = *u.grid();
    let lt = LocalTerms::new(u, p);
    let m = &p.metric;
    let mg = margins_of(&lt, &grid, m);
    if !(mg.min() > 0.0) {
        return Err(Error::EllipticityLoss {
            node: mg.worst,
            margin: mg.min(),
        });
    }
    let torus = *grid.torus();
    let ns = torus.len();
    let nt = grid.nt();
    let n = grid.interior_len();
    let (h, k) = (grid.hx(), grid.ht());
    let col =
        |s: usize, t: usize| -> Option<usize> { (t >= 1 && t <= nt - 2).then(|| (t - 1) * ns + s) };
    let mut rhs = Vec::with_capacity(n);
    let rows = (1..nt - 1).flat_map(|t| (0..ns).map(move |s| (s, t)));
    let rows = rows.map(|(s, t)| {
        let i = t * ns + s;
        let e = m.inv_factor(s);
        let utt = lt.utt.values()[i];
        let bu = lt.b.values()[i];
        rhs.push(p.target.value(i) - lt.q(i, m, s));
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(15);
        let mut push = |s2: usize, t2: usize, v: f64| {
            if let Some(c) = col(s2, t2) {
                row.push((c, v));
            }
        };
        let lap_c = utt * e / (h * h);
        push(s, t, -2.0 * torus.dim() as f64 * lap_c - 2.0 * bu / (k * k));
        push(s, t + 1, bu / (k * k));
        push(s, t - 1, bu / (k * k));
        for axis in 0..torus.dim() {
            let sp = torus.neighbor(s, axis, 1);
            let sm = torus.neighbor(s, axis, -1);
            let drift = -2.0 * p.b * utt * e * lt.du[axis].values()[i] / (2.0 * h);
            push(sp, t, lap_c + drift);
            push(sm, t, lap_c - drift);
            let mix = -2.0 * e * lt.dut[axis].values()[i] / (4.0 * h * k);
            push(sp, t + 1, mix);
            push(sm, t + 1, -mix);
            push(sp, t - 1, -mix);
            push(sm, t - 1, mix);
        }
        row
    });
    let matrix = CsrMatrix::from_rows(n, rows.collect::<Vec<_>>());
    Ok(SparseSystem { grid, matrix, rhs })
}

/// How [`solve_linear_with`] solves the Newton system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LinearMethod {
    /// Banded LU when its cost is moderate, GMRES otherwise.
    #[default]
    Auto,
    Banded,
    Gmres,
}

/// Cost caps for [`LinearMethod::Auto`]: factorization flops and band storage.
const BANDED_FLOP_CAP: f64 = 5e9;
const BANDED_STORAGE_CAP: f64 = 2.5e7;

/// Solves `A ψ = rhs` to `‖Aψ − rhs‖₂ ≤ tol·‖rhs‖₂`.
pub fn solve_linear(sys: &SparseSystem, tol: f64) -> Result<Vec<f64>> {
    solve_linear_with(sys, tol, LinearMethod::Auto)
}

pub fn solve_linear_with(sys: &SparseSystem, tol: f64, method: LinearMethod) -> Result<Vec<f64>> {
    let n = sys.matrix.n();
    if sys.rhs.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; n]);
    }
    let method = match method {
        LinearMethod::Auto => {
            let ordering = sys.banded_ordering();
            let (kl, ku) = sys.matrix.bandwidth(&ordering);
            let flops = n as f64 * kl as f64 * (kl + ku) as f64;
            let storage = n as f64 * (2 * kl + ku + 1) as f64;
            if flops <= BANDED_FLOP_CAP && storage <= BANDED_STORAGE_CAP {
                LinearMethod::Banded
            } else {
                LinearMethod::Gmres
            }
        }
        other => other,
    };
    match method {
        LinearMethod::Gmres => Ok(sparse::gmres_ilu0(
            &sys.matrix,
            &sys.rhs,
            tol,
            GmresOptions::default(),
        )?),
        _ => banded_solve(sys, tol),
    }
}

/// Banded LU plus up to three steps of iterative refinement.
fn banded_solve(sys: &SparseSystem, tol: f64) -> Result<Vec<f64>> {
    let a = &sys.matrix;
    let lu = BandedLu::factor(a, &sys.banded_ordering())?;
    let mut x = lu.solve(&sys.rhs);
    let nb = sparse::norm2(&sys.rhs);
    let mut rel = f64::INFINITY;
    for _ in 0..4 {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = sys.rhs.iter().zip(&ax).map(|(b, y)| b - y).collect();
        let new_rel = sparse::norm2(&r) / nb;
        if new_rel <= tol {
            return Ok(x);
        }
        if !(new_rel < 0.5 * rel) {
            rel = rel.min(new_rel);
            break;
        }
        rel = new_rel;
        let dx = lu.solve(&r);
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
    }
    Err(LinearSolveError::MaxIterations {
        iterations: 4,
        relative_residual: rel,
    }
    .into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use std::vec::Vec;

    fn flat_problem(nx: usize, nt: usize, b: f64, target: Target) -> ProblemData {
        let grid = Grid::with_shape(1, nx, nt, 1.0).unwrap();
        let torus = *grid.torus();
        ProblemData::new(
            grid,
            Metric::flat(torus),
            SpatialField::constant(torus, 1.0),
            b,
            target,
            SpatialField::zeros(torus),
            SpatialField::zeros(torus),
        )
        .unwrap()
    }

    fn manufactured(x: [f64; 2], t: f64) -> f64 {
        0.5 * t * t + 0.01 * (2.0 * PI * x[0]).sin() * (PI * t).cos()
    }

    #[test]
    fn b_u_examples() {
        let p = flat_problem(32, 9, 0.0, Target::Constant(0.1));
        let g = *p.grid();
        assert!(b_u(&Field::zeros(g), &p).values().iter().all(|&v| v == 1.0));
        // Δu ≡ 0.5 for u = x²/4 away from the seam.
        let u = Field::from_fn(g, |x, _| 0.25 * x[0] * x[0]);
        assert!((b_u(&u, &p).at(16, 3) - 1.5).abs() < 1e-10);

        let p = flat_problem(128, 9, 0.0, Target::Constant(0.1));
        let c = 0.3;
        let u = Field::from_fn(*p.grid(), |x, _| c * (2.0 * PI * x[0]).sin());
        let exact = Field::from_fn(*p.grid(), |x, _| {
            1.0 - 4.0 * PI * PI * c * (2.0 * PI * x[0]).sin()
        });
        let err = b_u(&u, &p).zip_map(&exact, |a, b| a - b).sup_norm();
        assert!(err < 4.0 * PI * PI * c * (2.0 * PI / 128.0f64).powi(2) / 12.0 * 1.01);
    }

    #[test]
    fn rejects_bad_data() {
        let grid = Grid::with_shape(1, 16, 9, 1.0).unwrap();
        let torus = *grid.torus();
        let m = Metric::flat(torus);
        let one = SpatialField::constant(torus, 1.0);
        let zero = SpatialField::zeros(torus);
        let mk = |a: &SpatialField, b: f64, t: Target, u1: &SpatialField| {
            ProblemData::new(grid, m.clone(), a.clone(), b, t, zero.clone(), u1.clone())
        };
        assert!(mk(&zero, 0.0, Target::Constant(0.1), &zero).is_err());
        assert!(mk(&one, -0.5, Target::Constant(0.1), &zero).is_err());
        assert!(mk(&one, 0.0, Target::Constant(0.0), &zero).is_err());
        let neg = Field::constant(grid, -1e-3);
        assert!(matches!(
            mk(&one, 0.0, Target::Shifted { f: neg, shift: 0.1 }, &zero),
            Err(Error::Negative { .. })
        ));
        // B(u1) = 1 − 4π²·0.1·sin < 0 somewhere.
        let bad = SpatialField::from_fn(torus, |x| 0.1 * (2.0 * PI * x[0]).sin());
        let err = mk(&one, 0.0, Target::Constant(0.1), &bad).unwrap_err();
        match err {
            Error::InadmissibleData { node, .. } => assert_eq!(node.layer, 8),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn residual_of_t_only_bulge() {
        let lambda = 0.7;
        let eps = 0.3;
        let p = flat_problem(16, 9, 0.0, Target::Constant(eps));
        let u = Field::from_fn(*p.grid(), |_, t| -lambda * t * (1.0 - t));
        let r = residual(&u, &p);
        for t in 1..8 {
            for s in 0..16 {
                assert!((r.at(s, t) - (2.0 * lambda - eps)).abs() < 1e-12);
            }
        }
        assert!(r.layer(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_negative_when_utt_vanishes() {
        let eps = 0.2;
        let p = flat_problem(32, 9, 0.0, Target::Constant(eps));
        let u = Field::from_fn(*p.grid(), |x, t| 0.01 * t * (2.0 * PI * x[0]).sin());
        let r = residual(&u, &p);
        let lt = LocalTerms::new(&u, &p);
        for i in 32..32 * 8 {
            let expect = -eps - lt.mixed_sq(i, p.metric(), i % 32);
            assert!((r.values()[i] - expect).abs() < 1e-12);
            assert!(r.values()[i] < 0.0);
        }
    }

    #[test]
    fn manufactured_residual_is_second_order() {
        let mut errs = Vec::new();
        for n in [16usize, 32, 64] {
            let grid = Grid::with_shape(1, n, n + 1, 1.0).unwrap();
            let fstar = Field::from_fn(grid, |x, t| {
                let (s, c) = ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[0]).cos());
                let utt = 1.0 - 0.01 * PI * PI * s * (PI * t).cos();
                let bu = 1.0 - 0.04 * PI * PI * s * (PI * t).cos();
                let uxt = -0.02 * PI * PI * c * (PI * t).sin();
                utt * bu - uxt * uxt
            });
            assert!(fstar.min_value() > 0.5);
            let torus = *grid.torus();
            let p = ProblemData::new(
                grid,
                Metric::flat(torus),
                SpatialField::constant(torus, 1.0),
                0.0,
                Target::Shifted {
                    f: fstar,
                    shift: 0.0,
                },
                SpatialField::from_fn(torus, |x| manufactured(x, 0.0)),
                SpatialField::from_fn(torus, |x| manufactured(x, 1.0)),
            )
            .unwrap();
            let u = Field::from_fn(grid, manufactured);
            assert!(jets(&u, &p).iter().all(Jet::is_admissible));
            errs.push(residual(&u, &p).sup_norm());
        }
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!((3.4..=4.6).contains(&r), "ratio {r}");
        }
    }

    #[test]
    fn jets_of_t_squared() {
        let p = flat_problem(16, 9, 0.0, Target::Constant(0.1));
        let u = Field::from_fn(*p.grid(), |_, t| 0.5 * t * t);
        let js = jets(&u, &p);
        assert_eq!(js.len(), 16 * 7);
        for j in &js {
            assert!((j.as_slice()[0] - 1.0).abs() < 1e-12);
            assert!((j.as_slice()[1] - 1.0).abs() < 1e-12);
            assert!(j.as_slice()[2].abs() < 1e-12);
        }
        let mg = margins(&u, &p);
        let min_jet = js.iter().map(Jet::margin).fold(f64::INFINITY, f64::min);
        assert_eq!(mg.min(), min_jet);
    }

    #[test]
    fn assembled_matrix_matches_stencil_action() {
        // dim 2 conformal with b > 0 to exercise every coefficient.
        let grid = Grid::with_shape(2, 8, 7, 1.0).unwrap();
        let torus = *grid.torus();
        let phi = SpatialField::from_fn(torus, |x| 0.1 * (2.0 * PI * x[0]).cos());
        let p = ProblemData::new(
            grid,
            Metric::conformal(phi).unwrap(),
            SpatialField::from_fn(torus, |x| 1.0 + 0.1 * (2.0 * PI * x[1]).sin()),
            0.5,
            Target::Constant(0.1),
            SpatialField::zeros(torus),
            SpatialField::zeros(torus),
        )
        .unwrap();
        let u = Field::from_fn(grid, |x, t| {
            t * t + 0.002 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos() * (1.0 + t)
        });
        let mut psi = Field::from_fn(grid, |x, t| {
            ((3.0 * x[0] + 5.0 * x[1] + 7.0 * t) * 11.0).sin()
        });
        for t in [0, grid.nt() - 1] {
            psi.layer_mut(t).iter_mut().for_each(|v| *v = 0.0);
        }
        let sys = assemble_dq(&u, &p).unwrap();
        let av = sys.matrix.mul_vec(psi.interior());
        let stencil = apply_dq(&u, &psi, &p);
        let scale = stencil.sup_norm();
        for (x, y) in av.iter().zip(stencil.interior()) {
            assert!((x - y).abs() <= 1e-12 * scale);
        }
        // 1 + 4 + 2 + 8 entries per row in dimension 2.
        let max_row = (0..sys.matrix.n())
            .map(|i| sys.matrix.row(i).count())
            .max()
            .unwrap();
        assert_eq!(max_row, 15);
        assert_eq!(
            sys.matrix.mul_vec(&vec![0.0; sys.matrix.n()]),
            vec![0.0; sys.matrix.n()]
        );
    }

    #[test]
    fn dq_at_t_squared_is_space_time_laplacian() {
        let p = flat_problem(16, 9, 0.0, Target::Constant(0.1));
        let g = *p.grid();
        let u = Field::from_fn(g, |_, t| 0.5 * t * t);
        let mut psi = Field::from_fn(g, |x, t| (2.0 * PI * x[0]).sin() * (PI * t).sin());
        for t in [0, 8] {
            psi.layer_mut(t).iter_mut().for_each(|v| *v = 0.0);
        }
        let dq = apply_dq(&u, &psi, &p);
        let lap = geometry::laplace_beltrami(&psi, p.metric());
        let tt = geometry::time_second(&psi);
        for i in 16..16 * 8 {
            let expect = lap.values()[i] + tt.values()[i];
            assert!((dq.values()[i] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn assembly_rejects_inadmissible_state() {
        let p = flat_problem(16, 9, 0.0, Target::Constant(0.1));
        let u = Field::from_fn(*p.grid(), |_, t| t * (1.0 - t));
        match assemble_dq(&u, &p) {
            Err(Error::EllipticityLoss { margin, .. }) => assert!(margin < 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn one_sided_linearization_with_richardson() {
        // b > 0 makes Q cubic in u, so the Richardson-extrapolated one-sided
        // quotient has an O(h²) error with a nonzero constant.
        let grid = Grid::with_shape(1, 16, 17, 1.0).unwrap();
        let torus = *grid.torus();
        let p = ProblemData::new(
            grid,
            Metric::flat(torus),
            SpatialField::constant(torus, 1.0),
            0.5,
            Target::Constant(0.1),
            SpatialField::from_fn(torus, |x| manufactured(x, 0.0)),
            SpatialField::from_fn(torus, |x| manufactured(x, 1.0)),
        )
        .unwrap();
        let u = Field::from_fn(grid, manufactured);
        let mut psi = Field::from_fn(grid, |x, t| (2.0 * PI * x[0]).sin() * (PI * t).sin());
        for t in [0, 16] {
            psi.layer_mut(t).iter_mut().for_each(|v| *v = 0.0);
        }
        let dq = apply_dq(&u, &psi, &p);
        let q0 = q_field(&u, &p);
        let quotient = |h: f64| {
            let up = u.zip_map(&psi, |a, b| a + h * b);
            q_field(&up, &p).zip_map(&q0, |a, b| (a - b) / h)
        };
        let mut errs = Vec::new();
        for h in [1e-2, 1e-3, 1e-4] {
            let rich = quotient(h / 2.0).zip_map(&quotient(h), |a, b| 2.0 * a - b);
            errs.push(rich.zip_map(&dq, |a, b| a - b).interior_sup_norm());
        }
        let slope = (errs[0] / errs[2]).log10() / 2.0;
        assert!((slope - 2.0).abs() <= 0.2, "slope {slope}");
    }

    #[test]
    fn linear_solve_recovers_manufactured_psi() {
        // Background u = t²/2: the operator is Δψ + ψ_tt.
        let mut errs = Vec::new();
        for n in [16usize, 32, 64] {
            let p = flat_problem(n, n + 1, 0.0, Target::Constant(0.1));
            let g = *p.grid();
            let u = Field::from_fn(g, |_, t| 0.5 * t * t);
            let mut sys = assemble_dq(&u, &p).unwrap();
            let exact = Field::from_fn(g, |x, t| (2.0 * PI * x[0]).sin() * (PI * t).sin());
            let forcing = Field::from_fn(g, |x, t| {
                -5.0 * PI * PI * (2.0 * PI * x[0]).sin() * (PI * t).sin()
            });
            sys.rhs = forcing.interior().to_vec();
            let psi = solve_linear(&sys, 1e-12).unwrap();
            assert!(sparse::relative_residual(&sys.matrix, &psi, &sys.rhs) <= 1e-12);
            let err = psi
                .iter()
                .zip(exact.interior())
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            errs.push(err);
        }
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!((3.4..=4.6).contains(&r), "ratio {r}");
        }
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let p = flat_problem(16, 9, 0.0, Target::Constant(0.1));
        let u = Field::from_fn(*p.grid(), |_, t| 0.5 * t * t);
        let mut sys = assemble_dq(&u, &p).unwrap();
        sys.rhs.iter_mut().for_each(|v| *v = 0.0);
        assert!(solve_linear(&sys, 1e-12).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn banded_and_gmres_agree_in_dim2() {
        let grid = Grid::with_shape(2, 8, 9, 1.0).unwrap();
        let torus = *grid.torus();
        let phi = SpatialField::from_fn(torus, |x| 0.1 * (2.0 * PI * x[0]).cos());
        let p = ProblemData::new(
            grid,
            Metric::conformal(phi).unwrap(),
            SpatialField::constant(torus, 1.0),
            0.5,
            Target::Constant(0.1),
            SpatialField::zeros(torus),
            SpatialField::zeros(torus),
        )
        .unwrap();
        let u = Field::from_fn(grid, |x, t| {
            -t * (1.0 - t) + 0.01 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin() * t
        });
        let sys = assemble_dq(&u, &p).unwrap();
        let a = solve_linear_with(&sys, 1e-12, LinearMethod::Banded).unwrap();
        let b = solve_linear_with(&sys, 1e-12, LinearMethod::Gmres).unwrap();
        let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * scale);
        }
        let ordering = sys.banded_ordering();
        let (kl, ku) = sys.matrix.bandwidth(&ordering);
        assert!(kl <= 64 + 2 * 8 + 2 && ku <= 64 + 2 * 8 + 2, "({kl}, {ku})");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn jacobian_matches_stencil_on_random_states(
                noise in proptest::collection::vec(-1.0f64..1.0, 16 * 9),
                dir in proptest::collection::vec(-1.0f64..1.0, 16 * 9),
                b in 0.0f64..1.0,
            ) {
                let p = flat_problem(16, 9, b, Target::Constant(0.1));
                let g = *p.grid();
                let bulge = Field::from_fn(g, |_, t| t * t);
                let u = bulge.zip_map(&interior_field(g, |i, _| 1e-4 * noise[i]), |a, n| a + n);
                prop_assume!(margins(&u, &p).min() > 0.0);
                let psi = interior_field(g, |i, _| dir[i]);
                let sys = assemble_dq(&u, &p).unwrap();
                let av = sys.matrix.mul_vec(psi.interior());
                let stencil = apply_dq(&u, &psi, &p);
                let scale = 1.0 + stencil.sup_norm();
                for (x, y) in av.iter().zip(stencil.interior()) {
                    prop_assert!((x - y).abs() <= 1e-12 * scale);
                }
            }

            #[test]
            fn residual_shifts_with_target_level(
                noise in proptest::collection::vec(-1.0f64..1.0, 16 * 9),
                level in 1e-6f64..1.0,
            ) {
                let p = flat_problem(16, 9, 0.0, Target::Constant(0.1));
                let g = *p.grid();
                let u = Field::from_fn(g, |_, t| t * t)
                    .zip_map(&interior_field(g, |i, _| 1e-3 * noise[i]), |a, n| a + n);
                let r0 = residual(&u, &p);
                let r1 = residual(&u, &p.with_level(level).unwrap());
                for (a, c) in r0.interior().iter().zip(r1.interior()) {
                    prop_assert!((a - c - (level - 0.1)).abs() <= 1e-14);
                }
            }
        }
    }
}
