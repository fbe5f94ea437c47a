//! Pointwise algebra of `Q(r) = r₀r₁ − Σ_{i≥2} rᵢ²` and `G = log Q`.
//!
//! A [`Jet`] `r = (u_tt, B_u, u_{t1}, …, u_{tn})` collects, at one node, the
//! arguments the equation depends on. `Q` is degree-2 homogeneous and `G` is
//! concave on the cone `{r₀ > 0, r₁ > 0, Q > 0}`.

use crate::error::{Error, Result};
use crate::math;

/// Longest jet: spatial dimension 2 gives `n + 2 = 4` entries.
pub const MAX_JET: usize = 4;

/// `(u_tt, B_u, u_{t1}, …, u_{tn})`, where the mixed entries are frame
/// components so that `Σ rᵢ² = |∇u_t|²_g`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    len: usize,
    r: [f64; MAX_JET],
}

/// Dense symmetric matrix of size `len × len` (at most 4×4).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JetMatrix {
    pub len: usize,
    pub m: [[f64; MAX_JET]; MAX_JET],
}

impl JetMatrix {
    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len {
            for j in 0..self.len {
                acc += self.m[i][j] * self.m[i][j];
            }
        }
        math::sqrt(acc)
    }

    /// `vᵀ M v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len {
            for j in 0..self.len {
                acc += v[i] * self.m[i][j] * v[j];
            }
        }
        acc
    }
}

impl Jet {
    /// Builds a jet from a slice of length `n + 2` with `n ∈ {1, 2}`.
    pub fn new(r: &[f64]) -> Result<Self> {
        if !(3..=MAX_JET).contains(&r.len()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "jet length {} not in 3..={MAX_JET}",
                r.len()
            )));
        }
        let mut buf = [0.0; MAX_JET];
        buf[..r.len()].copy_from_slice(r);
        Ok(Self {
            len: r.len(),
            r: buf,
        })
    }

    /// `(u_tt, B_u, u_{t1}, …)`; `mixed.len()` is the spatial dimension.
    pub fn from_parts(utt: f64, b: f64, mixed: &[f64]) -> Self {
        let mut r = [0.0; MAX_JET];
        r[0] = utt;
        r[1] = b;
        r[2..2 + mixed.len()].copy_from_slice(mixed);
        Self {
            len: 2 + mixed.len(),
            r,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.r[..self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Spatial dimension `n`.
    pub fn dim(&self) -> usize {
        self.len - 2
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        let mut out = *self;
        for v in &mut out.r[..self.len] {
            *v *= lambda;
        }
        out
    }

    pub fn q_value(&self) -> f64 {
        let mixed: f64 = self.r[2..self.len].iter().map(|v| v * v).sum();
        self.r[0] * self.r[1] - mixed
    }

    /// `Qⁱ = ∂Q/∂rᵢ = (r₁, r₀, −2r₂, …)`.
    pub fn q_grad(&self) -> [f64; MAX_JET] {
        let mut g = [0.0; MAX_JET];
        g[0] = self.r[1];
        g[1] = self.r[0];
        for i in 2..self.len {
            g[i] = -2.0 * self.r[i];
        }
        g
    }

    /// `Q^{i,j}`: constant, `1` at (0,1), `−2` on the mixed diagonal.
    pub fn q_hess(&self) -> JetMatrix {
        let mut m = [[0.0; MAX_JET]; MAX_JET];
        m[0][1] = 1.0;
        m[1][0] = 1.0;
        for (i, row) in m.iter_mut().enumerate().take(self.len).skip(2) {
            row[i] = -2.0;
        }
        JetMatrix { len: self.len, m }
    }

    fn checked_q(&self) -> Result<f64> {
        let q = self.q_value();
        if q > 0.0 {
            Ok(q)
        } else {
            Err(Error::ConeViolation { q })
        }
    }

    pub fn g_value(&self) -> Result<f64> {
        Ok(math::ln(self.checked_q()?))
    }

    /// `Gⁱ = Qⁱ / Q`.
    pub fn g_grad(&self) -> Result<[f64; MAX_JET]> {
        let q = self.checked_q()?;
        let mut g = self.q_grad();
        for v in &mut g[..self.len] {
            *v /= q;
        }
        Ok(g)
    }

    /// `G^{i,j} = Q^{i,j}/Q − QⁱQʲ/Q²`.
    pub fn g_hess(&self) -> Result<JetMatrix> {
        let q = self.checked_q()?;
        let dq = self.q_grad();
        let mut h = self.q_hess();
        for i in 0..self.len {
            for j in 0..self.len {
                h.m[i][j] = h.m[i][j] / q - dq[i] * dq[j] / (q * q);
            }
        }
        Ok(h)
    }

    /// `min(r₀, r₁, Q)`; positive exactly on the ellipticity cone.
    pub fn margin(&self) -> f64 {
        self.r[0].min(self.r[1]).min(self.q_value())
    }

    pub fn is_admissible(&self) -> bool {
        self.margin() > 0.0
    }

    /// Admissibility against an absolute floor.
    pub fn is_admissible_with(&self, floor: f64) -> bool {
        self.margin() > floor
    }
}
