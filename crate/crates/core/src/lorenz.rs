//! Lorenz vector field, Jacobian and fixed points.
//!
//! Points are momentum triples `p`; the flow `f(t, p)` is generated by
//! [`lorenz_rhs`].

use std::fmt;
use std::ops::{Add, Index, Mul, Sub};

use crate::error::{Error, Result};

pub type Matrix3 = [[f64; 3]; 3];

/// Force constants `sigma`, `tau`, `beta` of the quadratic friction force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorenzParams {
    sigma: f64,
    tau: f64,
    beta: f64,
}

impl LorenzParams {
    /// Validates `sigma > 0`, `beta > 0`; `tau` may be any finite real.
    pub fn new(sigma: f64, tau: f64, beta: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid("sigma", format!("must be positive and finite, got {sigma}")));
        }
        if !tau.is_finite() {
            return Err(Error::invalid("tau", format!("must be finite, got {tau}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid("beta", format!("must be positive and finite, got {beta}")));
        }
        Ok(Self { sigma, tau, beta })
    }

    /// The classic chaotic choice `(10, 28, 8/3)`.
    pub const fn canonical() -> Self {
        Self {
            sigma: 10.0,
            tau: 28.0,
            beta: 8.0 / 3.0,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Constant divergence of the vector field, `-(sigma + 1 + beta)`.
    pub fn divergence(&self) -> f64 {
        -(self.sigma + 1.0 + self.beta)
    }
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self::canonical()
    }
}

/// A momentum triple `(p1, p2, p3)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhasePoint(pub [f64; 3]);

impl PhasePoint {
    pub const ORIGIN: PhasePoint = PhasePoint([0.0; 3]);

    pub const fn new(p1: f64, p2: f64, p3: f64) -> Self {
        Self([p1, p2, p3])
    }

    pub fn p1(&self) -> f64 {
        self.0[0]
    }

    pub fn p2(&self) -> f64 {
        self.0[1]
    }

    pub fn p3(&self) -> f64 {
        self.0[2]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub(crate) fn ensure_finite(self, context: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite { context })
        }
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &PhasePoint) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn distance(&self, other: &PhasePoint) -> f64 {
        (*self - *other).norm()
    }

    /// The discrete symmetry `S(p1, p2, p3) = (-p1, -p2, p3)` of the flow.
    pub fn reflect(&self) -> PhasePoint {
        PhasePoint([-self.0[0], -self.0[1], self.0[2]])
    }
}

impl From<[f64; 3]> for PhasePoint {
    fn from(p: [f64; 3]) -> Self {
        Self(p)
    }
}

impl Index<usize> for PhasePoint {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for PhasePoint {
    type Output = PhasePoint;

    fn add(self, rhs: PhasePoint) -> PhasePoint {
        PhasePoint([self.0[0] + rhs.0[0], self.0[1] + rhs.0[1], self.0[2] + rhs.0[2]])
    }
}

impl Sub for PhasePoint {
    type Output = PhasePoint;

    fn sub(self, rhs: PhasePoint) -> PhasePoint {
        PhasePoint([self.0[0] - rhs.0[0], self.0[1] - rhs.0[1], self.0[2] - rhs.0[2]])
    }
}

impl Mul<f64> for PhasePoint {
    type Output = PhasePoint;

    fn mul(self, s: f64) -> PhasePoint {
        PhasePoint([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl fmt::Display for PhasePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.0[0], self.0[1], self.0[2])
    }
}

/// Jacobian of the vector field; row `i` is the gradient of component `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianMatrix(pub Matrix3);

impl JacobianMatrix {
    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn determinant(&self) -> f64 {
        mat_det(&self.0)
    }

    pub fn apply(&self, v: &[f64; 3]) -> [f64; 3] {
        mat_vec(&self.0, v)
    }
}

/// Unchecked vector field used on the integrator hot path.
#[inline]
pub(crate) fn vector_field(p: &[f64; 3], params: &LorenzParams) -> [f64; 3] {
    let [p1, p2, p3] = *p;
    [
        params.sigma * (p2 - p1),
        p1 * (params.tau - p3) - p2,
        p1 * p2 - params.beta * p3,
    ]
}

#[inline]
pub(crate) fn jacobian_rows(p: &[f64; 3], params: &LorenzParams) -> Matrix3 {
    let [p1, p2, p3] = *p;
    [
        [-params.sigma, params.sigma, 0.0],
        [params.tau - p3, -1.0, -p1],
        [p2, p1, -params.beta],
    ]
}

/// `(sigma (p2 - p1), p1 (tau - p3) - p2, p1 p2 - beta p3)`.
pub fn lorenz_rhs(p: PhasePoint, params: &LorenzParams) -> Result<PhasePoint> {
    let p = p.ensure_finite("lorenz_rhs")?;
    Ok(PhasePoint(vector_field(&p.0, params)))
}

pub fn lorenz_jacobian(p: PhasePoint, params: &LorenzParams) -> Result<JacobianMatrix> {
    let p = p.ensure_finite("lorenz_jacobian")?;
    Ok(JacobianMatrix(jacobian_rows(&p.0, params)))
}

/// Equilibria of the flow: the origin, plus the symmetric pair
/// `(±√(β(τ−1)), ±√(β(τ−1)), τ−1)` once `tau > 1`.
pub fn fixed_points(params: &LorenzParams) -> Vec<PhasePoint> {
    let mut points = vec![PhasePoint::ORIGIN];
    if params.tau > 1.0 {
        let z = params.tau - 1.0;
        let r = (params.beta * z).sqrt();
        points.push(PhasePoint::new(r, r, z));
        points.push(PhasePoint::new(-r, -r, z));
    }
    points
}

/// `I(p) = p1² − 2σ p3`. When `beta = 2 sigma` this decays along the flow
/// exactly as `I(p) exp(−2σt)`.
pub fn kus_invariant(p: PhasePoint, params: &LorenzParams) -> f64 {
    p.0[0] * p.0[0] - 2.0 * params.sigma * p.0[2]
}

#[inline]
pub(crate) fn mat_vec(m: &Matrix3, v: &[f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn mat_det(m: &Matrix3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn mat_mul(a: &Matrix3, b: &Matrix3) -> Matrix3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub const IDENTITY: Matrix3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical() -> LorenzParams {
        LorenzParams::canonical()
    }

    #[test]
    fn rejects_nonpositive_sigma_and_beta() {
        assert!(LorenzParams::new(0.0, 28.0, 1.0).is_err());
        assert!(LorenzParams::new(-1.0, 28.0, 1.0).is_err());
        assert!(LorenzParams::new(10.0, 28.0, 0.0).is_err());
        assert!(LorenzParams::new(10.0, f64::NAN, 1.0).is_err());
        assert!(LorenzParams::new(10.0, -5.0, 1.0).is_ok());
    }

    #[test]
    fn rhs_examples() {
        let params = canonical();
        assert_eq!(lorenz_rhs(PhasePoint::ORIGIN, &params).unwrap(), PhasePoint::ORIGIN);

        let r = 6.0 * 2f64.sqrt();
        let c_plus = lorenz_rhs(PhasePoint::new(r, r, 27.0), &params).unwrap();
        assert!(c_plus.norm() < 1e-12, "{c_plus}");

        let v = lorenz_rhs(PhasePoint::new(1.0, 1.0, 1.0), &params).unwrap();
        assert_eq!(v.p1(), 0.0);
        assert_eq!(v.p2(), 26.0);
        assert!((v.p3() - (1.0 - 8.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let params = canonical();
        let bad = PhasePoint::new(f64::NAN, 0.0, 0.0);
        assert!(matches!(lorenz_rhs(bad, &params), Err(Error::NonFinite { .. })));
        assert!(lorenz_jacobian(PhasePoint::new(0.0, f64::INFINITY, 0.0), &params).is_err());
    }

    #[test]
    fn jacobian_examples() {
        let params = canonical();
        let j = lorenz_jacobian(PhasePoint::ORIGIN, &params).unwrap();
        assert_eq!(j.0, [[-10.0, 10.0, 0.0], [28.0, -1.0, 0.0], [0.0, 0.0, -8.0 / 3.0]]);
        assert!((j.trace() + 41.0 / 3.0).abs() < 1e-14);

        let j = lorenz_jacobian(PhasePoint::new(1.0, 2.0, 3.0), &params).unwrap();
        assert_eq!(j.0[1], [25.0, -1.0, -1.0]);
    }

    #[test]
    fn fixed_point_branches() {
        let low = LorenzParams::new(10.0, 0.5, 8.0 / 3.0).unwrap();
        assert_eq!(fixed_points(&low), vec![PhasePoint::ORIGIN]);

        let pts = fixed_points(&canonical());
        assert_eq!(pts.len(), 3);
        let r = 6.0 * 2f64.sqrt();
        assert!((pts[1].p1() - r).abs() < 1e-14 && (pts[1].p3() - 27.0).abs() < 1e-14);
        assert_eq!(pts[2], pts[1].reflect());
    }

    #[test]
    fn kus_invariant_examples() {
        let params = canonical();
        assert_eq!(kus_invariant(PhasePoint::ORIGIN, &params), 0.0);
        assert_eq!(kus_invariant(PhasePoint::new(2.0, 0.0, 1.0), &params), -16.0);
    }

    #[test]
    fn divergence_matches_jacobian_trace() {
        let params = LorenzParams::new(3.5, -2.0, 0.25).unwrap();
        let j = lorenz_jacobian(PhasePoint::new(0.3, -4.0, 9.0), &params).unwrap();
        assert_eq!(j.trace(), params.divergence());
    }
}
