//! Property tests for the algebraic invariants of the motion model.

use proptest::prelude::*;
use spiralfit::geometry::{
    aml_distance, angular_error_degrees, plucker_feature, quadratic_forms, zero_velocity_point,
    KinematicMotion, OrientedPoint, Vec3, EPS_GAMMA,
};

fn vec3_strategy(span: f64) -> impl Strategy<Value = Vec3> {
    (-span..span, -span..span, -span..span).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn unit_strategy() -> impl Strategy<Value = Vec3> {
    vec3_strategy(1.0)
        .prop_filter("nonzero", |v| v.norm() > 1e-3)
        .prop_map(|v| v.normalize())
}

fn motion_strategy() -> impl Strategy<Value = KinematicMotion> {
    (vec3_strategy(2.0), vec3_strategy(2.0), -2.0..2.0_f64)
        .prop_map(|(r, c, g)| KinematicMotion::new(r, c, g))
        .prop_filter("nonzero motion", |m| m.norm() > 1e-3)
}

fn point_strategy() -> impl Strategy<Value = OrientedPoint> {
    (vec3_strategy(3.0), unit_strategy()).prop_map(|(p, n)| OrientedPoint::new(p, n))
}

proptest! {
    /// m · f(p, n) = v(p) · n for every motion and oriented point.
    #[test]
    fn feature_pairing_identity(m in motion_strategy(), q in point_strategy()) {
        let vn = m.velocity(q.position).dot(&q.normal);
        let mf = m.to_vec7().dot(&plucker_feature(&q).0);
        prop_assert!((mf - vn).abs() <= 1e-12 * (1.0 + vn.abs()));
    }

    /// mᵀM m / mᵀN m equals the squared first-order distance.
    #[test]
    fn quadratic_ratio_is_squared_distance(m in motion_strategy(), q in point_strategy()) {
        let (mat_m, mat_n) = quadratic_forms(&q, 0.001);
        let mv = m.to_vec7();
        let num = mat_m.quadratic_form(mv.as_slice());
        let den = mat_n.quadratic_form(mv.as_slice());
        prop_assume!(den > 1e-12);
        let d = aml_distance(&m, &q, 0.001).unwrap();
        prop_assert!((num / den - d * d).abs() <= 1e-10 * (1.0 + d * d));
    }

    /// The distance is invariant under positive rescaling of the motion.
    #[test]
    fn aml_distance_homogeneous(
        m in motion_strategy(),
        q in point_strategy(),
        alpha in 0.01..100.0_f64,
    ) {
        let scaled = KinematicMotion::new(alpha * m.rotation, alpha * m.translation, alpha * m.scaling);
        let d1 = aml_distance(&m, &q, 0.001);
        let d2 = aml_distance(&scaled, &q, 0.001);
        if let (Ok(d1), Ok(d2)) = (d1, d2) {
            prop_assert!((d1 - d2).abs() <= 1e-9 * (1.0 + d1.abs()));
        }
    }

    /// The zero-velocity point really has zero velocity for spiral motions.
    #[test]
    fn zero_velocity_point_is_fixed(m in motion_strategy()) {
        let canonical = m.canonicalized();
        prop_assume!(canonical.scaling.abs() > 0.1);
        let p0 = zero_velocity_point(&canonical, EPS_GAMMA).unwrap();
        prop_assume!(p0.norm() < 1e6);
        prop_assert!(canonical.velocity(p0).norm() <= 1e-10 * (1.0 + p0.norm()));
    }

    /// Angular error is symmetric and sign-invariant, in [0°, 90°].
    #[test]
    fn angular_error_symmetries(a in vec3_strategy(5.0), b in vec3_strategy(5.0)) {
        prop_assume!(a.norm() > 1e-3 && b.norm() > 1e-3);
        let ab = angular_error_degrees(a, b).unwrap();
        let ba = angular_error_degrees(b, a).unwrap();
        let neg = angular_error_degrees(-a, b).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!((ab - neg).abs() < 1e-9);
        prop_assert!((0.0..=90.0).contains(&ab));
    }

    /// Canonicalization yields unit norm, positive leading entry, and is
    /// idempotent.
    #[test]
    fn canonical_form_idempotent(m in motion_strategy()) {
        let c1 = m.canonicalized();
        let c2 = c1.canonicalized();
        prop_assert!((c1.norm() - 1.0).abs() < 1e-12);
        let v1 = c1.to_vec7();
        let v2 = c2.to_vec7();
        prop_assert!((v1 - v2).norm() < 1e-12);
        let lead = v1.iter().cloned().fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        prop_assert!(lead > 0.0);
    }
}
