//! Kinematic motion model for spiral surfaces.
//!
//! A spiral motion is the velocity field `v(p) = r × p + c + γ p` combining a
//! rotation `r`, a translation `c` and a uniform scaling `γ`. A surface is an
//! orbit surface of the motion when every oriented point is tangent to the
//! field, `v(p) · n = 0`. Mapping each oriented point to the extended Plücker
//! feature `f(p, n) = (p × n, n, p · n)` turns tangency into the linear
//! condition `m · f = 0` on the stacked parameter vector `m = (r, c, γ)`, and
//! a first-order geometric distance divides the residual by its gradient
//! norm. This module holds those primitives plus the axis error metrics used
//! throughout the crate.

use nalgebra::Vector3;
use thiserror::Error;

use crate::linalg::{canonicalize, SymMatrix};

/// 3-vector alias used across the crate.
pub type Vec3 = Vector3<f64>;
/// Stacked 7-vector of the kinematic parameter space.
pub type Vec7 = nalgebra::SVector<f64, 7>;

/// Threshold on the (canonical-scale) scaling velocity below which a motion
/// is treated as helical/rotational rather than spiral.
pub const EPS_GAMMA: f64 = 1e-8;

/// Errors from the geometric primitives.
#[derive(Debug, Error)]
pub enum GeometryError {
    /// The first-order distance denominator vanished (motion near zero or a
    /// pathological point/normal configuration).
    #[error("degenerate distance denominator ({0:.3e})")]
    DegenerateDenominator(f64),
    /// The motion has neither a scaling nor a rotation component, so no axis
    /// (and no zero-velocity point) is defined.
    #[error("motion has no axis: |gamma| and |r| both below {0:.1e}")]
    NoAxis(f64),
    /// A direction vector required to be nonzero had near-zero norm.
    #[error("zero-length direction vector (norm {0:.3e})")]
    ZeroVector(f64),
}

/// A surface sample: position plus unit outward normal.
///
/// Invariant: `normal` has unit length (to 1e-9) and `position` is finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedPoint {
    pub position: Vec3,
    pub normal: Vec3,
}

impl OrientedPoint {
    pub fn new(position: Vec3, normal: Vec3) -> Self {
        Self { position, normal }
    }
}

/// Parameters of a spiral motion: rotation velocity, translation velocity
/// and scaling velocity.
///
/// Only the direction of the stacked 7-vector `(r, c, γ)` matters; the
/// canonical representative has unit norm and positive largest-magnitude
/// component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicMotion {
    pub rotation: Vec3,
    pub translation: Vec3,
    pub scaling: f64,
}

impl KinematicMotion {
    pub fn new(rotation: Vec3, translation: Vec3, scaling: f64) -> Self {
        Self {
            rotation,
            translation,
            scaling,
        }
    }

    /// Velocity of the motion at point `p`: `r × p + c + γ p`.
    pub fn velocity(&self, p: Vec3) -> Vec3 {
        self.rotation.cross(&p) + self.translation + self.scaling * p
    }

    /// Stacked parameter vector `(r, c, γ)`.
    pub fn to_vec7(&self) -> Vec7 {
        Vec7::from_column_slice(&[
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
            self.translation.x,
            self.translation.y,
            self.translation.z,
            self.scaling,
        ])
    }

    pub fn from_vec7(v: &Vec7) -> Self {
        Self {
            rotation: Vec3::new(v[0], v[1], v[2]),
            translation: Vec3::new(v[3], v[4], v[5]),
            scaling: v[6],
        }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), 7);
        Self {
            rotation: Vec3::new(v[0], v[1], v[2]),
            translation: Vec3::new(v[3], v[4], v[5]),
            scaling: v[6],
        }
    }

    /// Canonical representative: unit-norm 7-vector with positive
    /// largest-magnitude component.
    pub fn canonicalized(&self) -> Self {
        let mut v = [
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
            self.translation.x,
            self.translation.y,
            self.translation.z,
            self.scaling,
        ];
        canonicalize(&mut v);
        Self::from_slice(&v)
    }

    /// Norm of the stacked 7-vector.
    pub fn norm(&self) -> f64 {
        self.to_vec7().norm()
    }

    /// The rotation axis as a line: direction `r / ‖r‖`, anchored at the
    /// zero-velocity point (spiral) or the minimum-velocity axis point
    /// (helical fallback).
    pub fn axis(&self, eps_gamma: f64) -> Result<AxisLine, GeometryError> {
        let scale = self.norm();
        if self.rotation.norm() < eps_gamma * scale {
            return Err(GeometryError::NoAxis(eps_gamma));
        }
        let anchor = zero_velocity_point(self, eps_gamma)?;
        Ok(AxisLine {
            direction: self.rotation.normalize(),
            anchor,
        })
    }
}

/// Extended Plücker feature of an oriented point: `(p × n, n, p · n)`.
///
/// The block order matches [`KinematicMotion::to_vec7`], so
/// `m · f = v(p) · n` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PluckerFeature(pub Vec7);

/// Feature map of an oriented point.
pub fn plucker_feature(q: &OrientedPoint) -> PluckerFeature {
    debug_assert!((q.normal.norm() - 1.0).abs() < 1e-6, "normal must be unit");
    let pxn = q.position.cross(&q.normal);
    PluckerFeature(Vec7::from_column_slice(&[
        pxn.x,
        pxn.y,
        pxn.z,
        q.normal.x,
        q.normal.y,
        q.normal.z,
        q.position.dot(&q.normal),
    ]))
}

/// First-order (approximate maximum likelihood) point-to-orbit distance:
///
/// `d = (v(p)·n) / sqrt(‖v(p)‖² + w_p (‖n × r‖² + γ²))`
///
/// using `∇_p(v·n) = n × r + γ n`, whose squared norm is `‖n × r‖² + γ²`
/// for unit normals. Invariant under positive rescaling of the motion.
pub fn aml_distance(
    m: &KinematicMotion,
    q: &OrientedPoint,
    w_p: f64,
) -> Result<f64, GeometryError> {
    debug_assert!(w_p > 0.0);
    let v = m.velocity(q.position);
    let grad_sq = q.normal.cross(&m.rotation).norm_squared() + m.scaling * m.scaling;
    let radicand = v.norm_squared() + w_p * grad_sq;
    if radicand < 1e-300 {
        return Err(GeometryError::DegenerateDenominator(radicand));
    }
    Ok(v.dot(&q.normal) / radicand.sqrt())
}

/// Skew-symmetric matrix `S` with `S x = v × x`.
fn skew(v: Vec3) -> [[f64; 3]; 3] {
    [
        [0.0, -v.z, v.y],
        [v.z, 0.0, -v.x],
        [-v.y, v.x, 0.0],
    ]
}

/// Per-point quadratic forms `(M, N)` of the fitting problem.
///
/// `M = f fᵀ` so that `mᵀ M m = (v·n)²`, and `N` is assembled from skew
/// blocks of `p` and `n` so that `mᵀ N m = ‖v(p)‖² + w_p (‖n × r‖² + γ²)`.
pub fn quadratic_forms(q: &OrientedPoint, w_p: f64) -> (SymMatrix, SymMatrix) {
    let f = plucker_feature(q).0;
    let mut m = SymMatrix::zeros(7);
    m.add_outer(f.as_slice(), 1.0);
    (m, n_matrix(q, w_p))
}

/// The denominator quadratic form `N` alone (see [`quadratic_forms`]).
pub fn n_matrix(q: &OrientedPoint, w_p: f64) -> SymMatrix {
    let p = q.position;
    let n = q.normal;
    let sp = skew(p);
    let sn = skew(n);
    let mut out = SymMatrix::zeros(7);
    // Top-left 3×3: SpᵀSp + w_p SnᵀSn.
    for i in 0..3 {
        for j in i..3 {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += sp[k][i] * sp[k][j] + w_p * sn[k][i] * sn[k][j];
            }
            out.set(i, j, acc);
        }
    }
    // Rotation–translation coupling: +Sp, giving 2 rᵀ Sp c = 2 (r×p)·c.
    for i in 0..3 {
        for j in 0..3 {
            out.set(i, 3 + j, sp[i][j]);
        }
    }
    // Translation block: identity; translation–scaling coupling: p.
    for i in 0..3 {
        out.set(3 + i, 3 + i, 1.0);
        out.set(3 + i, 6, p[i]);
    }
    // Scaling block: p·p + w_p.
    out.set(6, 6, p.dot(&p) + w_p);
    out
}

/// Zero-velocity point of a spiral motion.
///
/// For `|γ|` at least `eps_gamma` (relative to the motion's norm) this is the
/// unique fixed point `p₀ = (γ r×c − γ² c − (r·c) r) / (γ (‖r‖² + γ²))`. For
/// vanishing `γ` with a nonzero rotation (helical motion, no fixed point) the
/// returned anchor `(r × c)/‖r‖²` is the axis point of minimum speed.
pub fn zero_velocity_point(m: &KinematicMotion, eps_gamma: f64) -> Result<Vec3, GeometryError> {
    let scale = m.norm();
    if scale == 0.0 {
        return Err(GeometryError::NoAxis(eps_gamma));
    }
    let r = m.rotation;
    let c = m.translation;
    let gamma = m.scaling;
    if gamma.abs() >= eps_gamma * scale {
        let denom = gamma * (r.norm_squared() + gamma * gamma);
        Ok((gamma * r.cross(&c) - gamma * gamma * c - r.dot(&c) * r) / denom)
    } else if r.norm() >= eps_gamma * scale {
        Ok(r.cross(&c) / r.norm_squared())
    } else {
        Err(GeometryError::NoAxis(eps_gamma))
    }
}

/// An undirected line in space: `AxisLine(d, a)` and `AxisLine(−d, a)` name
/// the same axis, so comparisons must be sign-invariant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisLine {
    /// Unit direction.
    pub direction: Vec3,
    /// A point on the line.
    pub anchor: Vec3,
}

impl AxisLine {
    pub fn new(direction: Vec3, anchor: Vec3) -> Result<Self, GeometryError> {
        let norm = direction.norm();
        if norm < 1e-12 {
            return Err(GeometryError::ZeroVector(norm));
        }
        Ok(Self {
            direction: direction / norm,
            anchor,
        })
    }
}

/// Angular deviation between two axis directions in degrees, in [0°, 90°]:
/// `arcsin(‖a × b‖ / (‖a‖ ‖b‖))`. Sign-invariant in both arguments.
pub fn angular_error_degrees(r_est: Vec3, r_ref: Vec3) -> Result<f64, GeometryError> {
    let na = r_est.norm();
    let nb = r_ref.norm();
    if na < 1e-12 {
        return Err(GeometryError::ZeroVector(na));
    }
    if nb < 1e-12 {
        return Err(GeometryError::ZeroVector(nb));
    }
    let sin = (r_ref.cross(&r_est).norm() / (na * nb)).clamp(0.0, 1.0);
    Ok(sin.asin().to_degrees())
}

/// Perpendicular distance from the reference point to the axis line.
pub fn distance_error(axis: &AxisLine, p_ref: Vec3) -> f64 {
    let d = axis.direction / axis.direction.norm();
    let offset = axis.anchor - p_ref;
    (offset - offset.dot(&d) * d).norm()
}
