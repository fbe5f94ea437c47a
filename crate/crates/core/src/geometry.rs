//! Periodic space-time grids, the model metrics on them and the discrete
//! differential operators.
//!
//! Spatial nodes live on a periodic lattice of `nx` (dim 1) or `nx × nx`
//! (dim 2) points with spacing `h = L / nx`; spatial index `s = ix + nx·iy`.
//! Time layers `0..nt` discretize `[0, 1]` with spacing `1 / (nt − 1)`;
//! layers `0` and `nt − 1` carry the boundary data. Field values are stored
//! time-outer, space-inner.
//!
//! All operators are second-order centered stencils. The metric is either
//! flat or conformal, `g = e^{2φ}δ`, the latter only in dimension 2 where
//! `Δ_g = e^{−2φ}Δ₀`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, NodeLocation, Result};
use crate::math;

/// The periodic spatial lattice: a circle `S¹_L` or a square torus `T²_L`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Torus {
    dim: usize,
    nx: usize,
    length: f64,
}

impl Torus {
    pub const MIN_NODES: usize = 8;

    pub fn new(dim: usize, nx: usize, length: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension {dim} not in {{1, 2}}"
            )));
        }
        if nx < Self::MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "nx = {nx} below minimum {}",
                Self::MIN_NODES
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "length {length} must be positive"
            )));
        }
        Ok(Self { dim, nx, length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Spatial step `L / nx`.
    pub fn h(&self) -> f64 {
        self.length / self.nx as f64
    }

    /// Number of spatial nodes, `nx^dim`.
    pub fn len(&self) -> usize {
        if self.dim == 1 {
            self.nx
        } else {
            self.nx * self.nx
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn multi_index(&self, s: usize) -> [usize; 2] {
        if self.dim == 1 {
            [s, 0]
        } else {
            [s % self.nx, s / self.nx]
        }
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix + self.nx * iy
    }

    /// Coordinates of node `s`; the second entry is 0 in dimension 1.
    pub fn coords(&self, s: usize) -> [f64; 2] {
        let [ix, iy] = self.multi_index(s);
        let h = self.h();
        [ix as f64 * h, iy as f64 * h]
    }

    /// Periodic neighbour of `s` shifted by `step` along `axis`.
    pub fn neighbor(&self, s: usize, axis: usize, step: isize) -> usize {
        let n = self.nx as isize;
        let [ix, iy] = self.multi_index(s);
        if axis == 0 {
            let jx = (ix as isize + step).rem_euclid(n) as usize;
            self.index(jx, iy)
        } else {
            let jy = (iy as isize + step).rem_euclid(n) as usize;
            self.index(ix, jy)
        }
    }
}

/// `Torus × {t_0, …, t_{nt−1}}` with `t_k = k / (nt − 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    torus: Torus,
    nt: usize,
}

impl Grid {
    pub const MIN_LAYERS: usize = 5;

    pub fn new(torus: Torus, nt: usize) -> Result<Self> {
        if nt < Self::MIN_LAYERS {
            return Err(Error::InvalidGrid(format!(
                "nt = {nt} below minimum {}",
                Self::MIN_LAYERS
            )));
        }
        Ok(Self { torus, nt })
    }

    /// Shorthand for `Grid::new(Torus::new(dim, nx, length)?, nt)`.
    pub fn with_shape(dim: usize, nx: usize, nt: usize, length: f64) -> Result<Self> {
        Self::new(Torus::new(dim, nx, length)?, nt)
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn dim(&self) -> usize {
        self.torus.dim
    }

    pub fn nx(&self) -> usize {
        self.torus.nx
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn hx(&self) -> f64 {
        self.torus.h()
    }

    pub fn ht(&self) -> f64 {
        1.0 / (self.nt - 1) as f64
    }

    pub fn spatial_len(&self) -> usize {
        self.torus.len()
    }

    pub fn len(&self) -> usize {
        self.torus.len() * self.nt
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, s: usize, t: usize) -> usize {
        t * self.torus.len() + s
    }

    pub fn time(&self, t: usize) -> f64 {
        t as f64 * self.ht()
    }

    /// Number of unknowns: nodes on layers `1..nt−1`.
    pub fn interior_len(&self) -> usize {
        self.torus.len() * (self.nt - 2)
    }

    pub fn location(&self, s: usize, t: usize) -> NodeLocation {
        NodeLocation {
            spatial: self.torus.multi_index(s),
            layer: t,
        }
    }

    /// Location of flat index `i` into a full-grid value array.
    pub fn location_of(&self, i: usize) -> NodeLocation {
        let ns = self.torus.len();
        self.location(i % ns, i / ns)
    }
}

/// Values stored layer by layer over a [`Torus`]; implemented by
/// [`Field`] (many layers) and [`SpatialField`] (one layer) so the spatial
/// stencils are written once.
pub trait Layered: Sized + Clone {
    fn torus(&self) -> &Torus;
    fn values(&self) -> &[f64];
    /// A value of the same shape with new contents.
    fn with_values(&self, values: Vec<f64>) -> Self;

    fn layers(&self) -> usize {
        self.values().len() / self.torus().len()
    }

    fn sup_norm(&self) -> f64 {
        self.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn max_value(&self) -> f64 {
        self.values()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn min_value(&self) -> f64 {
        self.values().iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        self.with_values(self.values().iter().map(|&v| f(v)).collect())
    }

    fn zip_map(&self, other: &Self, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.values().len(), other.values().len());
        self.with_values(
            self.values()
                .iter()
                .zip(other.values())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }
}

/// Scalar values on the full space-time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f(x, t)` at every node; `x[1]` is 0 in dimension 1.
    pub fn from_fn(grid: Grid, mut f: impl FnMut([f64; 2], f64) -> f64) -> Self {
        let ns = grid.spatial_len();
        let mut values = Vec::with_capacity(grid.len());
        for t in 0..grid.nt() {
            let time = grid.time(t);
            for s in 0..ns {
                values.push(f(grid.torus().coords(s), time));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "field",
                node: grid.location_of(i),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, s: usize, t: usize) -> f64 {
        self.values[self.grid.index(s, t)]
    }

    pub fn set(&mut self, s: usize, t: usize, v: f64) {
        let i = self.grid.index(s, t);
        self.values[i] = v;
    }

    pub fn layer(&self, t: usize) -> &[f64] {
        let ns = self.grid.spatial_len();
        &self.values[t * ns..(t + 1) * ns]
    }

    pub fn layer_mut(&mut self, t: usize) -> &mut [f64] {
        let ns = self.grid.spatial_len();
        &mut self.values[t * ns..(t + 1) * ns]
    }

    /// Layer `t` as a spatial field.
    pub fn spatial_layer(&self, t: usize) -> SpatialField {
        SpatialField {
            torus: *self.grid.torus(),
            values: self.layer(t).to_vec(),
        }
    }

    /// Values on layers `1..nt−1`, in unknown ordering.
    pub fn interior(&self) -> &[f64] {
        let ns = self.grid.spatial_len();
        &self.values[ns..ns * (self.grid.nt() - 1)]
    }

    pub fn interior_mut(&mut self) -> &mut [f64] {
        let ns = self.grid.spatial_len();
        let nt = self.grid.nt();
        &mut self.values[ns..ns * (nt - 1)]
    }

    /// Sup norm over the interior layers only.
    pub fn interior_sup_norm(&self) -> f64 {
        self.interior().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl Layered for Field {
    fn torus(&self) -> &Torus {
        self.grid.torus()
    }

    fn values(&self) -> &[f64] {
        &self.values
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            grid: self.grid,
            values,
        }
    }
}

/// Scalar values on the spatial torus only.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialField {
    torus: Torus,
    values: Vec<f64>,
}

impl SpatialField {
    pub fn zeros(torus: Torus) -> Self {
        Self::constant(torus, 0.0)
    }

    pub fn constant(torus: Torus, c: f64) -> Self {
        Self {
            torus,
            values: vec![c; torus.len()],
        }
    }

    pub fn from_fn(torus: Torus, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let values = (0..torus.len()).map(|s| f(torus.coords(s))).collect();
        Self { torus, values }
    }

    pub fn from_values(torus: Torus, values: Vec<f64>) -> Result<Self> {
        if values.len() != torus.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                torus.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "spatial field",
                node: NodeLocation {
                    spatial: torus.multi_index(i),
                    layer: 0,
                },
            });
        }
        Ok(Self { torus, values })
    }

    pub fn at(&self, s: usize) -> f64 {
        self.values[s]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl Layered for SpatialField {
    fn torus(&self) -> &Torus {
        &self.torus
    }

    fn values(&self) -> &[f64] {
        &self.values
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            torus: self.torus,
            values,
        }
    }
}

/// Flat or conformal (`g = e^{2φ}δ`, dimension 2 only) metric on a torus,
/// with the derived quantities the operators need.
#[derive(Clone, Debug, PartialEq)]
pub struct Metric {
    phi: SpatialField,
    flat: bool,
    /// `e^{−2φ}`, the inverse metric factor.
    inv_factor: Vec<f64>,
    /// `e^{dim·φ}`, the volume density.
    volume: Vec<f64>,
    /// Centered partials of φ, one vector per axis.
    dphi: Vec<Vec<f64>>,
    /// Gauss curvature `−e^{−2φ}Δ₀φ` (zero when flat).
    curvature: Vec<f64>,
}

impl Metric {
    pub fn flat(torus: Torus) -> Self {
        let ns = torus.len();
        Self {
            phi: SpatialField::zeros(torus),
            flat: true,
            inv_factor: vec![1.0; ns],
            volume: vec![1.0; ns],
            dphi: vec![vec![0.0; ns]; torus.dim()],
            curvature: vec![0.0; ns],
        }
    }

    /// `g = e^{2φ}δ`. A non-constant φ is rejected in dimension 1 (every
    /// metric on a circle is a flat circle of some length).
    pub fn conformal(phi: SpatialField) -> Result<Self> {
        let torus = *phi.torus();
        if phi.values().iter().all(|&v| v == 0.0) {
            return Ok(Self::flat(torus));
        }
        if torus.dim() == 1 {
            return Err(Error::InvalidParameter(
                "conformal factor is only supported in dimension 2".into(),
            ));
        }
        let inv_factor: Vec<f64> = phi.values().iter().map(|&p| math::exp(-2.0 * p)).collect();
        let volume = phi
            .values()
            .iter()
            .map(|&p| math::exp(torus.dim() as f64 * p))
            .collect();
        let dphi = (0..torus.dim())
            .map(|axis| first_difference(&phi, axis).into_values())
            .collect();
        let lap0 = flat_laplacian(&phi);
        let curvature = lap0
            .values()
            .iter()
            .zip(&inv_factor)
            .map(|(l, e)| -e * l)
            .collect();
        Ok(Self {
            phi,
            flat: false,
            inv_factor,
            volume,
            dphi,
            curvature,
        })
    }

    pub fn torus(&self) -> &Torus {
        self.phi.torus()
    }

    pub fn dim(&self) -> usize {
        self.torus().dim()
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn phi(&self) -> &SpatialField {
        &self.phi
    }

    /// `e^{−2φ}` at spatial node `s`.
    pub fn inv_factor(&self, s: usize) -> f64 {
        self.inv_factor[s]
    }

    /// `e^{dim·φ}` at spatial node `s`.
    pub fn volume(&self, s: usize) -> f64 {
        self.volume[s]
    }

    pub fn dphi(&self, axis: usize, s: usize) -> f64 {
        self.dphi[axis][s]
    }

    /// Gauss curvature field (dimension 2); identically zero when flat.
    pub fn curvature(&self) -> SpatialField {
        self.phi.with_values(self.curvature.clone())
    }

    pub fn curvature_at(&self, s: usize) -> f64 {
        self.curvature[s]
    }
}

// ---------------------------------------------------------------------------
// Spatial stencils (applied layer by layer)

fn apply_layers<F: Layered>(u: &F, mut stencil: impl FnMut(&[f64], usize) -> f64) -> F {
    let ns = u.torus().len();
    let mut out = Vec::with_capacity(u.values().len());
    for layer in u.values().chunks_exact(ns) {
        for s in 0..ns {
            out.push(stencil(layer, s));
        }
    }
    u.with_values(out)
}

/// Centered first difference `(u(s+e) − u(s−e)) / 2h` along `axis`.
pub fn first_difference<F: Layered>(u: &F, axis: usize) -> F {
    let torus = *u.torus();
    let inv = 1.0 / (2.0 * torus.h());
    apply_layers(u, |l, s| {
        (l[torus.neighbor(s, axis, 1)] - l[torus.neighbor(s, axis, -1)]) * inv
    })
}

/// Centered second difference along `axis`.
pub fn second_difference<F: Layered>(u: &F, axis: usize) -> F {
    let torus = *u.torus();
    let inv = 1.0 / (torus.h() * torus.h());
    apply_layers(u, |l, s| {
        (l[torus.neighbor(s, axis, 1)] - 2.0 * l[s] + l[torus.neighbor(s, axis, -1)]) * inv
    })
}

/// Four-point centered mixed difference `∂x∂y` (dimension 2).
pub fn mixed_difference<F: Layered>(u: &F) -> F {
    let torus = *u.torus();
    assert_eq!(torus.dim(), 2, "mixed spatial difference needs dimension 2");
    let inv = 1.0 / (4.0 * torus.h() * torus.h());
    apply_layers(u, |l, s| {
        let xp = torus.neighbor(s, 0, 1);
        let xm = torus.neighbor(s, 0, -1);
        (l[torus.neighbor(xp, 1, 1)] - l[torus.neighbor(xp, 1, -1)] - l[torus.neighbor(xm, 1, 1)]
            + l[torus.neighbor(xm, 1, -1)])
            * inv
    })
}

/// Flat five-point (three-point in dim 1) Laplacian `Δ₀`.
pub fn flat_laplacian<F: Layered>(u: &F) -> F {
    let torus = *u.torus();
    let inv = 1.0 / (torus.h() * torus.h());
    apply_layers(u, |l, s| {
        let mut acc = 0.0;
        for axis in 0..torus.dim() {
            acc += l[torus.neighbor(s, axis, 1)] - 2.0 * l[s] + l[torus.neighbor(s, axis, -1)];
        }
        acc * inv
    })
}

fn scale_by_metric<F: Layered>(u: F, m: &Metric, factor: impl Fn(&Metric, usize) -> f64) -> F {
    let ns = m.torus().len();
    let values = u
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v * factor(m, i % ns))
        .collect();
    u.with_values(values)
}

/// `Δ_g u = e^{−2φ}Δ₀u`.
pub fn laplace_beltrami<F: Layered>(u: &F, m: &Metric) -> F {
    scale_by_metric(flat_laplacian(u), m, |m, s| m.inv_factor(s))
}

/// Coordinate partials `∂ᵢu`, one field per axis.
pub fn partials<F: Layered>(u: &F) -> Vec<F> {
    (0..u.torus().dim())
        .map(|axis| first_difference(u, axis))
        .collect()
}

/// Gradient with the index raised, `gⁱʲ∂ⱼu = e^{−2φ}∂ᵢu`.
pub fn gradient_g<F: Layered>(u: &F, m: &Metric) -> Vec<F> {
    partials(u)
        .into_iter()
        .map(|d| scale_by_metric(d, m, |m, s| m.inv_factor(s)))
        .collect()
}

/// `(∇u, ∇v)_g = e^{−2φ} Σ ∂ᵢu ∂ᵢv`, from coordinate partials.
pub fn inner_g<F: Layered>(du: &[F], dv: &[F], m: &Metric) -> F {
    let ns = m.torus().len();
    let len = du[0].values().len();
    let mut out = vec![0.0; len];
    for (a, b) in du.iter().zip(dv) {
        for (o, (x, y)) in out.iter_mut().zip(a.values().iter().zip(b.values())) {
            *o += x * y;
        }
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o *= m.inv_factor(i % ns);
    }
    du[0].with_values(out)
}

/// `|∇u|²_g`.
pub fn grad_norm_sq<F: Layered>(u: &F, m: &Metric) -> F {
    let d = partials(u);
    inner_g(&d, &d, m)
}

/// Covariant Hessian `(∇²u)ᵢⱼ = ∂ᵢ∂ⱼu − Γᵏᵢⱼ∂ₖu` with lower indices.
/// In dimension 1 only `xx` is meaningful and `xy`, `yy` are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Hessian<F> {
    pub xx: F,
    pub xy: F,
    pub yy: F,
}

impl<F: Layered> Hessian<F> {
    pub fn entry(&self, i: usize, j: usize) -> &F {
        match (i, j) {
            (0, 0) => &self.xx,
            (1, 1) => &self.yy,
            _ => &self.xy,
        }
    }

    fn node_map(&self, m: &Metric, f: impl Fn(f64, f64, f64, f64) -> f64) -> F {
        let ns = m.torus().len();
        let values = (0..self.xx.values().len())
            .map(|i| {
                f(
                    self.xx.values()[i],
                    self.xy.values()[i],
                    self.yy.values()[i],
                    m.inv_factor(i % ns),
                )
            })
            .collect();
        self.xx.with_values(values)
    }

    /// `gⁱʲ(∇²u)ᵢⱼ`.
    pub fn trace_g(&self, m: &Metric) -> F {
        self.node_map(m, |xx, _, yy, e| e * (xx + yy))
    }

    /// `|∇²u|_g = e^{−2φ}(Σ Hᵢⱼ²)^{1/2}`.
    pub fn norm_g(&self, m: &Metric) -> F {
        self.node_map(m, |xx, xy, yy, e| {
            e * math::sqrt(xx * xx + 2.0 * xy * xy + yy * yy)
        })
    }

    /// Largest eigenvalue of `g^{−1}∇²u`, closed form for 2×2.
    pub fn lambda_max_g(&self, m: &Metric) -> F {
        let dim = m.dim();
        self.node_map(m, |xx, xy, yy, e| {
            if dim == 1 {
                e * xx
            } else {
                e * sym2_lambda_max(xx, xy, yy)
            }
        })
    }
}

/// Largest eigenvalue of `[[a, b], [b, c]]`.
pub fn sym2_lambda_max(a: f64, b: f64, c: f64) -> f64 {
    let mean = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    mean + math::sqrt(half_diff * half_diff + b * b)
}

/// Covariant Hessian for `g = e^{2φ}δ`, with Christoffel symbols
/// `Γᵏᵢⱼ = δᵢₖφⱼ + δⱼₖφᵢ − δᵢⱼφₖ`.
pub fn covariant_hessian<F: Layered>(u: &F, m: &Metric) -> Hessian<F> {
    let dim = u.torus().dim();
    let xx = second_difference(u, 0);
    if dim == 1 {
        let zeros = u.with_values(vec![0.0; u.values().len()]);
        return Hessian {
            xx,
            xy: zeros.clone(),
            yy: zeros,
        };
    }
    let yy = second_difference(u, 1);
    let xy = mixed_difference(u);
    if m.is_flat() {
        return Hessian { xx, xy, yy };
    }
    let d = partials(u);
    let ns = m.torus().len();
    let len = u.values().len();
    let mut hxx = xx.values().to_vec();
    let mut hxy = xy.values().to_vec();
    let mut hyy = yy.values().to_vec();
    for i in 0..len {
        let s = i % ns;
        let (px, py) = (m.dphi(0, s), m.dphi(1, s));
        let (ux, uy) = (d[0].values()[i], d[1].values()[i]);
        // Γᵏᵢⱼ∂ₖu = φⱼ∂ᵢu + φᵢ∂ⱼu − δᵢⱼ(∇φ·∇u)
        let dot = px * ux + py * uy;
        hxx[i] -= 2.0 * px * ux - dot;
        hyy[i] -= 2.0 * py * uy - dot;
        hxy[i] -= py * ux + px * uy;
    }
    Hessian {
        xx: xx.with_values(hxx),
        xy: xy.with_values(hxy),
        yy: yy.with_values(hyy),
    }
}

// ---------------------------------------------------------------------------
// Time stencils

/// `u_t`, `u_tt` and the coordinate partials `∂ᵢu_t`.
///
/// Interior layers use centered stencils; the boundary layers use
/// one-sided second-order stencils (for diagnostics).
#[derive(Clone, Debug)]
pub struct TimeDerivatives {
    pub ut: Field,
    pub utt: Field,
    pub grad_ut: Vec<Field>,
}

pub fn time_first(u: &Field) -> Field {
    let grid = *u.grid();
    let ns = grid.spatial_len();
    let nt = grid.nt();
    let k = grid.ht();
    let v = u.values();
    let at = |s: usize, t: usize| v[t * ns + s];
    let mut out = vec![0.0; grid.len()];
    for t in 0..nt {
        for s in 0..ns {
            out[t * ns + s] = if t == 0 {
                (3.0 * (at(s, 1) - at(s, 0)) - (at(s, 2) - at(s, 1))) / (2.0 * k)
            } else if t == nt - 1 {
                (3.0 * (at(s, t) - at(s, t - 1)) - (at(s, t - 1) - at(s, t - 2))) / (2.0 * k)
            } else {
                (at(s, t + 1) - at(s, t - 1)) / (2.0 * k)
            };
        }
    }
    u.with_values(out)
}

pub fn time_second(u: &Field) -> Field {
    let grid = *u.grid();
    let ns = grid.spatial_len();
    let nt = grid.nt();
    let k2 = grid.ht() * grid.ht();
    let v = u.values();
    let at = |s: usize, t: usize| v[t * ns + s];
    let mut out = vec![0.0; grid.len()];
    for t in 0..nt {
        for s in 0..ns {
            out[t * ns + s] = if t == 0 {
                // (2, −5, 4, −1) written in differences so constants give 0.
                (2.0 * (at(s, 0) - at(s, 1)) - 3.0 * (at(s, 1) - at(s, 2)) + (at(s, 2) - at(s, 3)))
                    / k2
            } else if t == nt - 1 {
                (2.0 * (at(s, t) - at(s, t - 1)) - 3.0 * (at(s, t - 1) - at(s, t - 2))
                    + (at(s, t - 2) - at(s, t - 3)))
                    / k2
            } else {
                (at(s, t + 1) - 2.0 * at(s, t) + at(s, t - 1)) / k2
            };
        }
    }
    u.with_values(out)
}

pub fn time_derivatives(u: &Field) -> TimeDerivatives {
    let ut = time_first(u);
    let utt = time_second(u);
    let grad_ut = partials(&ut);
    TimeDerivatives { ut, utt, grad_ut }
}

// ---------------------------------------------------------------------------
// Integration

/// `∫_M v dV_g` for one layer of values (rectangle rule).
pub fn integrate_layer(values: &[f64], m: &Metric) -> f64 {
    let torus = m.torus();
    let cell = math::powi(torus.h(), torus.dim() as i32);
    values
        .iter()
        .enumerate()
        .map(|(s, v)| v * m.volume(s))
        .sum::<f64>()
        * cell
}

/// `∫_M v dV_g`.
pub fn integrate_spatial(v: &SpatialField, m: &Metric) -> f64 {
    integrate_layer(v.values(), m)
}

/// Trapezoid weights in time: `ht/2` on boundary layers, `ht` inside.
pub fn time_weight(grid: &Grid, t: usize) -> f64 {
    if t == 0 || t == grid.nt() - 1 {
        0.5 * grid.ht()
    } else {
        grid.ht()
    }
}

/// `∫₀¹∫_M v dV_g dt`, rectangle rule in space and trapezoid rule in time.
pub fn integrate(v: &Field, m: &Metric) -> f64 {
    let grid = v.grid();
    (0..grid.nt())
        .map(|t| time_weight(grid, t) * integrate_layer(v.layer(t), m))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use std::vec::Vec;

    fn grid1(nx: usize, nt: usize) -> Grid {
        Grid::with_shape(1, nx, nt, 1.0).unwrap()
    }

    fn grid2(nx: usize, nt: usize) -> Grid {
        Grid::with_shape(2, nx, nt, 1.0).unwrap()
    }

    fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
    }

    fn bump_phi(torus: Torus, amp: f64) -> SpatialField {
        let l = torus.length();
        SpatialField::from_fn(torus, |x| {
            amp * (2.0 * PI * x[0] / l).cos() + 0.5 * amp * (2.0 * PI * x[1] / l).sin()
        })
    }

    #[test]
    fn grid_validation() {
        assert!(Torus::new(3, 16, 1.0).is_err());
        assert!(Torus::new(1, 4, 1.0).is_err());
        assert!(Torus::new(1, 16, -1.0).is_err());
        let t = Torus::new(1, 16, 1.0).unwrap();
        assert!(Grid::new(t, 4).is_err());
        let g = Grid::new(t, 9).unwrap();
        assert_eq!(g.ht(), 0.125);
        assert_eq!(g.interior_len(), 16 * 7);
        assert_eq!(t.neighbor(0, 0, -1), 15);
        assert_eq!(t.neighbor(15, 0, 1), 0);
        let t2 = Torus::new(2, 8, 2.0).unwrap();
        let s = t2.index(7, 0);
        assert_eq!(t2.neighbor(s, 1, -1), t2.index(7, 7));
        assert_eq!(t2.neighbor(s, 0, 1), t2.index(0, 0));
    }

    #[test]
    fn conformal_rejected_in_dim1() {
        let t = Torus::new(1, 16, 1.0).unwrap();
        assert!(Metric::conformal(SpatialField::constant(t, 0.3)).is_err());
        assert!(Metric::conformal(SpatialField::zeros(t)).unwrap().is_flat());
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = grid2(16, 5);
        let m = Metric::conformal(bump_phi(*g.torus(), 0.1)).unwrap();
        let u = Field::constant(g, 3.5);
        assert_eq!(laplace_beltrami(&u, &m).sup_norm(), 0.0);
        assert_eq!(grad_norm_sq(&u, &m).sup_norm(), 0.0);
    }

    #[test]
    fn laplacian_of_sine_dim1() {
        let g = grid1(128, 5);
        let m = Metric::flat(*g.torus());
        let u = Field::from_fn(g, |x, _| (2.0 * PI * x[0]).sin());
        let exact = Field::from_fn(g, |x, _| -4.0 * PI * PI * (2.0 * PI * x[0]).sin());
        let err = sup_diff(laplace_beltrami(&u, &m).values(), exact.values());
        // 4π²·(2πh)²/12
        assert!(err < 4.0 * PI * PI * (2.0 * PI / 128.0f64).powi(2) / 12.0 * 1.01);
    }

    #[test]
    fn conformal_scaling_of_laplacian_and_gradient() {
        let g = grid2(16, 5);
        let c = 0.37;
        let m = Metric::conformal(SpatialField::constant(*g.torus(), c)).unwrap();
        let flat = Metric::flat(*g.torus());
        let u = Field::from_fn(g, |x, t| {
            (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos() + t
        });
        let lg = laplace_beltrami(&u, &m);
        let l0 = laplace_beltrami(&u, &flat);
        let scaled: Vec<f64> = l0.values().iter().map(|v| (-2.0 * c).exp() * v).collect();
        assert!(sup_diff(lg.values(), &scaled) < 1e-12);
        let ng = grad_norm_sq(&u, &m);
        let n0 = grad_norm_sq(&u, &flat);
        let scaled: Vec<f64> = n0.values().iter().map(|v| (-2.0 * c).exp() * v).collect();
        assert!(sup_diff(ng.values(), &scaled) < 1e-12);
    }

    #[test]
    fn gradient_of_sine_and_constant() {
        let g = grid1(64, 5);
        let m = Metric::flat(*g.torus());
        let c = Field::constant(g, -2.0);
        assert!(gradient_g(&c, &m).iter().all(|d| d.sup_norm() == 0.0));
        let u = Field::from_fn(g, |x, _| (2.0 * PI * x[0]).sin());
        let exact = Field::from_fn(g, |x, _| 2.0 * PI * (2.0 * PI * x[0]).cos());
        let err = sup_diff(gradient_g(&u, &m)[0].values(), exact.values());
        assert!(err < 2.0 * PI * (2.0 * PI / 64.0f64).powi(2) / 6.0 * 1.01);
    }

    #[test]
    fn hessian_flat_examples() {
        let g = grid1(32, 5);
        let m = Metric::flat(*g.torus());
        let u = Field::from_fn(g, |x, t| (2.0 * PI * x[0]).cos() * (1.0 + t));
        let h = covariant_hessian(&u, &m);
        assert_eq!(h.xx, second_difference(&u, 0));

        // u = x² near the centre of the torus (away from the seam).
        let g2 = grid2(16, 5);
        let m2 = Metric::flat(*g2.torus());
        let u2 = Field::from_fn(g2, |x, _| x[0] * x[0]);
        let h2 = covariant_hessian(&u2, &m2);
        let s = g2.torus().index(8, 8);
        assert!((h2.xx.at(s, 2) - 2.0).abs() < 1e-9);
        assert!(h2.xy.at(s, 2).abs() < 1e-12);
        assert!(h2.yy.at(s, 2).abs() < 1e-12);
        assert!((h2.lambda_max_g(&m2).at(s, 2) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn hessian_trace_matches_laplace_beltrami() {
        // In dimension 2 the Christoffel terms cancel in the trace, and the
        // discrete stencils share their second differences, so the identity
        // holds to rounding at every resolution.
        for nx in [16, 32, 64] {
            let g = grid2(nx, 5);
            let m = Metric::conformal(bump_phi(*g.torus(), 0.2)).unwrap();
            let u = Field::from_fn(g, |x, t| {
                (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).cos() * (1.0 + t * t)
            });
            let tr = covariant_hessian(&u, &m).trace_g(&m);
            let lb = laplace_beltrami(&u, &m);
            let scale = lb.sup_norm();
            assert!(sup_diff(tr.values(), lb.values()) <= 1e-13 * scale);
        }
    }

    #[test]
    fn curvature_of_conformal_bump() {
        // K = −e^{−2φ}Δ₀φ, second order against the analytic value.
        let mut errs = Vec::new();
        for nx in [16, 32, 64] {
            let torus = Torus::new(2, nx, 1.0).unwrap();
            let amp = 0.1;
            let m = Metric::conformal(SpatialField::from_fn(torus, |x| {
                amp * (2.0 * PI * x[0]).cos()
            }))
            .unwrap();
            let exact = SpatialField::from_fn(torus, |x| {
                let phi = amp * (2.0 * PI * x[0]).cos();
                (-2.0 * phi).exp() * 4.0 * PI * PI * phi
            });
            errs.push(sup_diff(m.curvature().values(), exact.values()));
        }
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!((3.4..=4.6).contains(&r), "ratio {r}");
        }
    }

    #[test]
    fn refinement_order_of_operators() {
        // u = sin(2πx)cos(2πy)·(1 + sin(πt + 0.3)) on a conformal torus, against
        // closed forms.
        let amp = 0.15;
        let w = 2.0 * PI;
        let phi_fn = |x: [f64; 2]| amp * (w * x[0]).cos();
        let tf = |t: f64| 1.0 + (PI * t + 0.3).sin();
        let u_fn = |x: [f64; 2], t: f64| (w * x[0]).sin() * (w * x[1]).cos() * tf(t);
        let mut errors: Vec<[f64; 5]> = Vec::new();
        for nx in [16usize, 32, 64] {
            let g = grid2(nx, nx + 1);
            let m = Metric::conformal(SpatialField::from_fn(*g.torus(), phi_fn)).unwrap();
            let u = Field::from_fn(g, u_fn);
            let lap = Field::from_fn(g, |x, t| {
                (-2.0 * phi_fn(x)).exp() * (-2.0 * w * w) * u_fn(x, t)
            });
            let gx = Field::from_fn(g, |x, t| w * (w * x[0]).cos() * (w * x[1]).cos() * tf(t));
            let hess_xy = Field::from_fn(g, |x, t| {
                let uy = -w * (w * x[0]).sin() * (w * x[1]).sin() * tf(t);
                let uxy = -w * w * (w * x[0]).cos() * (w * x[1]).sin() * tf(t);
                let px = -amp * w * (w * x[0]).sin();
                uxy - px * uy
            });
            let utt = Field::from_fn(g, |x, t| {
                -PI * PI * (PI * t + 0.3).sin() * (w * x[0]).sin() * (w * x[1]).cos()
            });
            let gut = Field::from_fn(g, |x, t| {
                w * (w * x[0]).cos() * (w * x[1]).cos() * PI * (PI * t + 0.3).cos()
            });
            let h = covariant_hessian(&u, &m);
            let td = time_derivatives(&u);
            errors.push([
                sup_diff(laplace_beltrami(&u, &m).values(), lap.values()),
                sup_diff(partials(&u)[0].values(), gx.values()),
                sup_diff(h.xy.values(), hess_xy.values()),
                sup_diff(td.utt.interior(), utt.interior()),
                sup_diff(td.grad_ut[0].interior(), gut.interior()),
            ]);
        }
        for k in 0..5 {
            for lvl in 0..2 {
                let r = errors[lvl][k] / errors[lvl + 1][k];
                assert!((3.4..=4.6).contains(&r), "operator {k} ratio {r}");
            }
        }
    }

    #[test]
    fn time_derivative_examples() {
        let g = grid1(16, 9);
        let u = Field::from_fn(g, |_, t| t);
        let td = time_derivatives(&u);
        assert!(td.ut.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(td.utt.sup_norm() < 1e-10);
        let u = Field::from_fn(g, |_, t| 0.5 * t * t);
        let td = time_derivatives(&u);
        assert!(td.utt.values().iter().all(|v| (v - 1.0).abs() < 1e-10));

        let g = grid1(128, 129);
        let u = Field::from_fn(g, |x, t| t * (2.0 * PI * x[0]).sin());
        let td = time_derivatives(&u);
        let exact = Field::from_fn(g, |x, _| 2.0 * PI * (2.0 * PI * x[0]).cos());
        // 2π·(2πh)²/6 from the spatial stencil; exact in t.
        let bound = 2.0 * PI * (2.0 * PI / 128.0f64).powi(2) / 6.0;
        assert!(sup_diff(td.grad_ut[0].values(), exact.values()) < 1.01 * bound);
    }

    #[test]
    fn integration_examples() {
        let g = grid1(32, 9);
        let m = Metric::flat(*g.torus());
        assert!((integrate(&Field::constant(g, 1.0), &m) - 1.0).abs() < 1e-14);
        let s = SpatialField::from_fn(*g.torus(), |x| (2.0 * PI * x[0]).sin());
        assert!(integrate_spatial(&s, &m).abs() < 1e-12);

        let torus = Torus::new(2, 16, 1.5).unwrap();
        let c = 0.4;
        let m = Metric::conformal(SpatialField::constant(torus, c)).unwrap();
        let one = SpatialField::constant(torus, 1.0);
        let expect = (2.0 * c).exp() * 1.5 * 1.5;
        assert!((integrate_spatial(&one, &m) - expect).abs() < 1e-12);
    }

    #[test]
    fn discrete_integration_by_parts() {
        let g = grid2(16, 5);
        let m = Metric::flat(*g.torus());
        let u = Field::from_fn(g, |x, t| (2.0 * PI * x[0]).sin() + x[1] * x[1] * (1.0 + t));
        let v = Field::from_fn(g, |x, _| (x[0] - 0.3).powi(2) * (4.0 * PI * x[1]).cos());
        let lhs = integrate(&u.zip_map(&laplace_beltrami(&v, &m), |a, b| a * b), &m);
        let rhs = integrate(&v.zip_map(&laplace_beltrami(&u, &m), |a, b| a * b), &m);
        assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn stencils_are_linear(
                a in -3.0f64..3.0,
                b in -3.0f64..3.0,
                seed in proptest::collection::vec(-1.0f64..1.0, 16 * 16 * 5),
            ) {
                let g = grid2(16, 5);
                let m = Metric::conformal(bump_phi(*g.torus(), 0.1)).unwrap();
                let u = Field::from_values(g, seed.clone()).unwrap();
                let v = Field::from_values(g, seed.iter().rev().copied().collect()).unwrap();
                let w = u.zip_map(&v, |x, y| a * x + b * y);
                let check = |op: &dyn Fn(&Field) -> Field| {
                    let lhs = op(&w);
                    let rhs = op(&u).zip_map(&op(&v), |x, y| a * x + b * y);
                    let scale = 1.0 + op(&u).sup_norm() + op(&v).sup_norm();
                    sup_diff(lhs.values(), rhs.values()) <= 1e-11 * scale
                };
                prop_assert!(check(&|f| laplace_beltrami(f, &m)));
                prop_assert!(check(&|f| partials(f)[1].clone()));
                prop_assert!(check(&|f| covariant_hessian(f, &m).xy));
                prop_assert!(check(&|f| time_derivatives(f).utt));
                prop_assert!(check(&|f| time_derivatives(f).grad_ut[0].clone()));
            }

            #[test]
            fn flat_stencils_commute_with_periodic_shifts(
                seed in proptest::collection::vec(-1.0f64..1.0, 16 * 16 * 5),
                axis in 0usize..2,
                step in -3isize..=3,
            ) {
                let g = grid2(16, 5);
                let torus = *g.torus();
                let m = Metric::flat(torus);
                let shift = |f: &Field| {
                    Field::from_values(
                        g,
                        (0..g.len())
                            .map(|i| {
                                let (s, t) = (i % torus.len(), i / torus.len());
                                f.at(torus.neighbor(s, axis, step), t)
                            })
                            .collect(),
                    )
                    .unwrap()
                };
                let u = Field::from_values(g, seed).unwrap();
                let ops: [&dyn Fn(&Field) -> Field; 4] = [
                    &|f| laplace_beltrami(f, &m),
                    &|f| grad_norm_sq(f, &m),
                    &|f| covariant_hessian(f, &m).norm_g(&m),
                    &|f| time_derivatives(f).utt,
                ];
                for op in ops {
                    let (lhs, rhs) = (op(&shift(&u)), shift(&op(&u)));
                    prop_assert_eq!(lhs.values(), rhs.values());
                }
            }
        }
    }
}
