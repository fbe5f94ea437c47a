//! Quantities read off a solved field: sup norms of the derivatives that
//! control the second-order bound, the largest Hessian eigenvalue, the
//! maximum-principle quantity `H`, the energy/speed profile and a
//! third-derivative proxy. Also the per-rung ladder report.

use alloc::vec::Vec;

use crate::geometry::{self, Field, Layered, Metric};
use crate::math;
use crate::pde::{self, ProblemData};
use crate::solver::SolveResult;

/// Sup norms over every node of the grid (boundary layers use one-sided
/// time stencils). Norms are taken in the metric `g`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupNorms {
    pub u: f64,
    pub ut: f64,
    pub grad_u: f64,
    pub utt: f64,
    pub grad_ut: f64,
    pub lap_u: f64,
    pub hess_u: f64,
}

pub fn sup_norms(u: &Field, p: &ProblemData) -> SupNorms {
    let m = p.metric();
    let td = geometry::time_derivatives(u);
    let grad_ut = geometry::inner_g(&td.grad_ut, &td.grad_ut, m);
    SupNorms {
        u: u.sup_norm(),
        ut: td.ut.sup_norm(),
        grad_u: math::sqrt(geometry::grad_norm_sq(u, m).max_value()),
        utt: td.utt.sup_norm(),
        grad_ut: math::sqrt(grad_ut.max_value()),
        lap_u: geometry::laplace_beltrami(u, m).sup_norm(),
        hess_u: geometry::covariant_hessian(u, m).norm_g(m).max_value(),
    }
}

/// Largest eigenvalue of `g^{−1}∇²u` at every node.
pub fn lambda1(u: &Field, m: &Metric) -> Field {
    geometry::covariant_hessian(u, m).lambda_max_g(m)
}

/// `max_{|ξ|_g = 1} H(x, t, ξ)` for `H = u_ξξ + |∇u|²_g + A·t²`, which is
/// `λ₁(∇²u) + |∇u|²_g + A·t²`.
pub fn h_quantity(u: &Field, p: &ProblemData, a_coeff: f64) -> Field {
    let grid = *u.grid();
    let l1 = lambda1(u, p.metric());
    let grad = geometry::grad_norm_sq(u, p.metric());
    let ns = grid.spatial_len();
    let values = l1
        .values()
        .iter()
        .zip(grad.values())
        .enumerate()
        .map(|(i, (l, g))| {
            let t = grid.time(i / ns);
            l + g + a_coeff * t * t
        })
        .collect();
    u.with_values(values)
}

/// Speed profile `speed²(t) = ∫_M u_t² B_u dV`, energy `E = ∫₀¹ speed²`,
/// and the drift from the balance law `d/dt speed² = 2∫_M u_t f dV`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergySpeed {
    pub energy: f64,
    pub speed_sq: Vec<f64>,
    /// `max_t |speed²(t) − speed²(0) − 2∫₀ᵗ∫_M u_t f dV ds|`.
    pub drift: f64,
    /// The weight `B_u` has geometric meaning only for `b = 0`; otherwise the
    /// numbers are reported as formal.
    pub formal: bool,
}

/// Energy and speed of `u`, with `f` the problem's target.
pub fn energy_and_speed(u: &Field, p: &ProblemData) -> EnergySpeed {
    let grid = *u.grid();
    let m = p.metric();
    let ut = geometry::time_first(u);
    let bu = pde::b_u(u, p);
    let ns = grid.spatial_len();
    let nt = grid.nt();
    let mut speed_sq = Vec::with_capacity(nt);
    let mut source = Vec::with_capacity(nt);
    for t in 0..nt {
        let layer_ut = ut.layer(t);
        let w: Vec<f64> = (0..ns)
            .map(|s| layer_ut[s] * layer_ut[s] * bu.at(s, t))
            .collect();
        speed_sq.push(geometry::integrate_layer(&w, m));
        let g: Vec<f64> = (0..ns)
            .map(|s| layer_ut[s] * p.target().value(grid.index(s, t)))
            .collect();
        source.push(2.0 * geometry::integrate_layer(&g, m));
    }
    let energy = (0..nt)
        .map(|t| geometry::time_weight(&grid, t) * speed_sq[t])
        .sum();
    let mut drift = 0.0_f64;
    let mut cumulative = 0.0;
    for t in 1..nt {
        cumulative += 0.5 * grid.ht() * (source[t - 1] + source[t]);
        drift = drift.max((speed_sq[t] - speed_sq[0] - cumulative).abs());
    }
    EnergySpeed {
        energy,
        speed_sq,
        drift,
        formal: p.b() != 0.0,
    }
}

/// Sup over nodes of centered spatial differences of the spatial Hessian
/// entries. Reported only; nothing is asserted about its size.
pub fn third_derivative_proxy(u: &Field) -> f64 {
    let dim = u.grid().dim();
    let entries = if dim == 1 {
        alloc::vec![geometry::second_difference(u, 0)]
    } else {
        alloc::vec![
            geometry::second_difference(u, 0),
            geometry::mixed_difference(u),
            geometry::second_difference(u, 1),
        ]
    };
    let mut sup = 0.0_f64;
    for e in &entries {
        for axis in 0..dim {
            sup = sup.max(geometry::first_difference(e, axis).sup_norm());
        }
    }
    sup
}

/// One rung of a continuation ladder.
#[derive(Clone, Debug, PartialEq)]
pub struct LadderRow {
    /// Target level `ε`, or the shift `δ` added to `f`.
    pub level: f64,
    pub converged: bool,
    pub sup_u: f64,
    pub sup_ut: f64,
    pub sup_grad_u: f64,
    pub sup_utt: f64,
    pub sup_grad_ut: f64,
    pub sup_lap_u: f64,
    pub sup_hess_u: f64,
    pub max_lambda1: f64,
    pub min_margin: f64,
    pub max_margin: f64,
    pub newton_iterations: usize,
    pub residual: f64,
    pub energy: f64,
    pub drift: f64,
    pub third_derivative: f64,
}

impl LadderRow {
    /// Column names, in the order of [`LadderRow::values`].
    pub const COLUMNS: [&'static str; 17] = [
        "level",
        "converged",
        "sup_u",
        "sup_ut",
        "sup_grad_u",
        "sup_utt",
        "sup_grad_ut",
        "sup_lap_u",
        "sup_hess_u",
        "max_lambda1",
        "min_margin",
        "max_margin",
        "newton_iterations",
        "residual",
        "energy",
        "drift",
        "third_derivative",
    ];

    pub fn from_solve(level: f64, r: &SolveResult, p: &ProblemData) -> Self {
        let norms = sup_norms(&r.u, p);
        let es = energy_and_speed(&r.u, p);
        Self {
            level,
            converged: r.converged(),
            sup_u: norms.u,
            sup_ut: norms.ut,
            sup_grad_u: norms.grad_u,
            sup_utt: norms.utt,
            sup_grad_ut: norms.grad_ut,
            sup_lap_u: norms.lap_u,
            sup_hess_u: norms.hess_u,
            max_lambda1: lambda1(&r.u, p.metric()).max_value(),
            min_margin: r.margins.min(),
            max_margin: r.margins.max_margin,
            newton_iterations: r.iterations,
            residual: r.residual,
            energy: es.energy,
            drift: es.drift,
            third_derivative: third_derivative_proxy(&r.u),
        }
    }

    /// Row values as floats; `converged` maps to 1/0.
    pub fn values(&self) -> [f64; 17] {
        [
            self.level,
            if self.converged { 1.0 } else { 0.0 },
            self.sup_u,
            self.sup_ut,
            self.sup_grad_u,
            self.sup_utt,
            self.sup_grad_ut,
            self.sup_lap_u,
            self.sup_hess_u,
            self.max_lambda1,
            self.min_margin,
            self.max_margin,
            self.newton_iterations as f64,
            self.residual,
            self.energy,
            self.drift,
            self.third_derivative,
        ]
    }

    pub fn column(&self, name: &str) -> Option<f64> {
        Self::COLUMNS
            .iter()
            .position(|c| *c == name)
            .map(|i| self.values()[i])
    }
}

/// Rows in order of decreasing level.
#[derive(Clone, Debug, PartialEq)]
pub struct LadderReport {
    /// `true` when levels shift a given `f` rather than set a constant target.
    pub shifted: bool,
    /// Energy and drift columns are formal (`b ≠ 0`).
    pub formal_energy: bool,
    pub rows: Vec<LadderRow>,
}

impl LadderReport {
    pub fn new(p: &ProblemData) -> Self {
        Self {
            shifted: !p.target().is_constant(),
            formal_energy: p.b() != 0.0,
            rows: Vec::new(),
        }
    }

    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }

    /// Values of one column over all rows.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.column(name)).collect()
    }
}
