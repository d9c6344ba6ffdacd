//! Acceptance suite: one test per shipping criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them on success).
//!
//! Criteria 2 and 3 share one coverage sweep (5 coverage levels × 50 trials
//! × 3 methods over noisy scenes with the attached outlier tube), cached in
//! a `OnceLock` so the sweep runs once per process.

use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use spiralfit::bench::{
    generate_scene, generate_tube_mesh, run_experiment, ExperimentConfig, OutlierSpec, SceneSpec,
    TrialRecord,
};
use spiralfit::geometry::{
    angular_error_degrees, distance_error, quadratic_forms, zero_velocity_point, KinematicMotion,
    OrientedPoint, Vec3, EPS_GAMMA,
};
use spiralfit::linalg::{gen_eig_smallest, SymMatrix};
use spiralfit::mesh::TriangleMesh;
use spiralfit::pipeline::{detect_axis, normalize_points, Method, RoiSpec};
use spiralfit::robust::{digamma, e_step, fit_robust, m_nu_step, RobustConfig};
use spiralfit::{fit_gaussian, FitConfig};

fn check(criterion: &str, ok: bool, detail: String) {
    println!(
        "acceptance {criterion}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{criterion} failed: {detail}");
}

fn random_vec3(rng: &mut impl Rng, span: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-span..span),
        rng.random_range(-span..span),
        rng.random_range(-span..span),
    )
}

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = random_vec3(rng, 1.0);
        if v.norm() > 1e-3 {
            return v.normalize();
        }
    }
}

// ── Criterion 1: exact recovery and single-fit runtime ──────────────────────

#[test]
fn criterion_1_exact_recovery() {
    let spec = SceneSpec {
        seed: 1001,
        samples: 20_000,
        noise_sigma: 0.0,
        outlier: OutlierSpec {
            enabled: false,
            ..OutlierSpec::default()
        },
        ..SceneSpec::default()
    };
    let scene = generate_scene(&spec).unwrap();
    let (points, transform) = normalize_points(&scene.points).unwrap();

    let mut worst_theta = 0.0_f64;
    let mut worst_d = 0.0_f64;
    let gaussian = fit_gaussian(&points, &FitConfig::default()).unwrap();
    let robust = fit_robust(&points, &RobustConfig::default()).unwrap();
    for report in [&gaussian, &robust] {
        let axis = transform.invert_axis(&report.axis);
        worst_theta = worst_theta
            .max(angular_error_degrees(axis.direction, scene.truth.direction).unwrap());
        worst_d = worst_d.max(distance_error(&axis, scene.truth.anchor));
    }

    // Timing on a 50k-point scene.
    let big = generate_scene(&SceneSpec {
        seed: 1002,
        samples: 50_000,
        ..spec
    })
    .unwrap();
    let (big_points, _) = normalize_points(&big.points).unwrap();
    let start = Instant::now();
    let _ = fit_robust(&big_points, &RobustConfig::default()).unwrap();
    let elapsed = start.elapsed();

    check(
        "criterion 1 (exact recovery)",
        worst_theta <= 0.01 && worst_d <= 1e-4 && elapsed <= Duration::from_secs(3),
        format!(
            "worst delta_theta {worst_theta:.2e} deg <= 0.01, worst delta_d {worst_d:.2e} <= 1e-4, \
             50k-point fit {:.3}s <= 3s",
            elapsed.as_secs_f64()
        ),
    );
}

// ── Criteria 2 and 3: shared noisy coverage sweep ───────────────────────────

struct Sweep {
    records: Vec<TrialRecord>,
    wall: Duration,
}

fn sweep() -> &'static Sweep {
    static SWEEP: OnceLock<Sweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let cfg = ExperimentConfig {
            template: SceneSpec::default(), // noise 0.15, outlier tube on
            coverages: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            trials_per_level: 50,
            methods: Method::ALL.to_vec(),
            master_seed: 20_240_501,
            robust: RobustConfig::default(),
            workers: None,
        };
        let start = Instant::now();
        let records = run_experiment(&cfg);
        Sweep {
            records,
            wall: start.elapsed(),
        }
    })
}

fn median_of(records: &[TrialRecord], coverage: f64, method: Method, metric: &str) -> f64 {
    let mut values: Vec<f64> = records
        .iter()
        .filter(|r| r.coverage == coverage && r.method == method && r.status.is_ok())
        .map(|r| match metric {
            "theta" => r.delta_theta_deg,
            _ => r.delta_d,
        })
        .collect();
    assert!(!values.is_empty(), "no records at coverage {coverage}");
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[test]
fn criterion_2_convergence_analogue() {
    let sweep = sweep();
    let theta = median_of(&sweep.records, 0.8, Method::Robust, "theta");
    let d = median_of(&sweep.records, 0.8, Method::Robust, "d");
    check(
        "criterion 2 (convergence analogue)",
        theta <= 5.0 && d <= 0.15 && sweep.wall <= Duration::from_secs(600),
        format!(
            "robust medians at coverage 0.8: delta_theta {theta:.3} deg <= 5, delta_d {d:.4} <= 0.15; \
             sweep wall time {:.1}s <= 600s",
            sweep.wall.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_3_method_ordering() {
    let sweep = sweep();
    let mut ok = true;
    let mut notes = Vec::new();
    for &coverage in &[0.4, 0.6, 0.8, 1.0] {
        for metric in ["theta", "d"] {
            let robust = median_of(&sweep.records, coverage, Method::Robust, metric);
            let gaussian = median_of(&sweep.records, coverage, Method::Gaussian, metric);
            if robust > gaussian {
                ok = false;
            }
            notes.push(format!("c={coverage} {metric}: r {robust:.3} vs g {gaussian:.3}"));
        }
    }
    let pca_low = median_of(&sweep.records, 0.4, Method::Pca, "d");
    let pca_full = median_of(&sweep.records, 1.0, Method::Pca, "d");
    if pca_full <= pca_low {
        ok = false;
    }
    notes.push(format!("pca delta_d at 1.0 {pca_full:.3} > at 0.4 {pca_low:.3}"));
    check("criterion 3 (method ordering)", ok, notes.join("; "));
}

// ── Criterion 4: quadratic-form identities ──────────────────────────────────

#[test]
fn criterion_4_quadratic_form_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    let w_p = 0.001;
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let motion = KinematicMotion::new(
            random_vec3(&mut rng, 2.0),
            random_vec3(&mut rng, 2.0),
            rng.random_range(-2.0..2.0),
        );
        let q = OrientedPoint::new(random_vec3(&mut rng, 3.0), random_unit(&mut rng));
        let (m, n) = quadratic_forms(&q, w_p);
        let mv = motion.to_vec7();

        let v = motion.velocity(q.position);
        let vn = v.dot(&q.normal);
        let err_m = (m.quadratic_form(mv.as_slice()) - vn * vn).abs() / (1.0 + vn * vn);

        let grad_sq = q.normal.cross(&motion.rotation).norm_squared()
            + motion.scaling * motion.scaling;
        let expect_n = v.norm_squared() + w_p * grad_sq;
        let err_n =
            (n.quadratic_form(mv.as_slice()) - expect_n).abs() / (1.0 + v.norm_squared());
        worst = worst.max(err_m).max(err_n);
    }
    check(
        "criterion 4 (quadratic-form oracle)",
        worst <= 1e-12,
        format!("worst relative identity error {worst:.2e} <= 1e-12 over 1000 triples"),
    );
}

// ── Criterion 5: generalized eigen residuals ────────────────────────────────

#[test]
fn criterion_5_eigen_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(5005);
    let mut worst_ratio = 0.0_f64;
    for _ in 0..100 {
        // PSD B (possibly rank deficient), PD C.
        let rank = rng.random_range(3..=7);
        let g: Vec<f64> = (0..7 * rank).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = SymMatrix::from_fn(7, |i, j| {
            (0..rank).map(|k| g[i * rank + k] * g[j * rank + k]).sum()
        });
        let h: Vec<f64> = (0..7 * 7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut c = SymMatrix::from_fn(7, |i, j| {
            (0..7).map(|k| h[i * 7 + k] * h[j * 7 + k]).sum()
        });
        c.add_ridge(1e-3);

        let (lambda, m) = gen_eig_smallest(&b, &c).unwrap();
        let bm = b.mul_vec(&m);
        let cm = c.mul_vec(&m);
        let residual: f64 = bm
            .iter()
            .zip(cm.iter())
            .map(|(x, y)| (x - lambda * y).powi(2))
            .sum::<f64>()
            .sqrt();
        let bound = 1e-10 * (b.frobenius_norm() + lambda.abs() * c.frobenius_norm());
        worst_ratio = worst_ratio.max(residual / bound);
    }
    check(
        "criterion 5 (eigen residuals)",
        worst_ratio <= 1.0,
        format!("worst residual/bound ratio {worst_ratio:.2e} <= 1 over 100 pencils"),
    );
}

// ── Criterion 6: Student-t limits ───────────────────────────────────────────

#[test]
fn criterion_6_student_t_limits() {
    // Gaussian reduction: nu pinned at 1e9 reproduces the Gaussian fit.
    let spec = SceneSpec {
        seed: 6006,
        samples: 4000,
        noise_sigma: 0.05,
        outlier: OutlierSpec {
            enabled: false,
            ..OutlierSpec::default()
        },
        ..SceneSpec::default()
    };
    let scene = generate_scene(&spec).unwrap();
    let (points, _) = normalize_points(&scene.points).unwrap();
    let gaussian = fit_gaussian(&points, &FitConfig::default()).unwrap();
    let pinned = fit_robust(
        &points,
        &RobustConfig {
            nu_init: 1e9,
            nu_bounds: (1e9, 1e9),
            ..RobustConfig::default()
        },
    )
    .unwrap();
    let motion_diff = (gaussian.motion.to_vec7() - pinned.motion.to_vec7()).norm();

    // E-step range over random inputs.
    let mut rng = ChaCha8Rng::seed_from_u64(6007);
    let mut range_ok = true;
    for _ in 0..200 {
        let nu = rng.random_range(0.5..50.0);
        let sigma = rng.random_range(1e-8..10.0);
        let d: Vec<f64> = (0..100).map(|_| rng.random_range(-100.0..100.0)).collect();
        for z in e_step(&d, sigma, nu) {
            if !(z > 0.0 && z <= (nu + 1.0) / nu + 1e-15) {
                range_ok = false;
            }
        }
    }

    // M-nu residual (or clamping) over random confidence vectors.
    let mut nu_ok = true;
    for _ in 0..100 {
        let z: Vec<f64> = (0..300).map(|_| rng.random_range(0.02..1.3)).collect();
        let bounds = (0.5, 1e6);
        let nu = m_nu_step(&z, 10.0, bounds);
        if nu != bounds.0 && nu != bounds.1 {
            let s = z.iter().map(|zi| zi.ln() - zi).sum::<f64>() / z.len() as f64;
            let residual = -digamma(0.5 * nu).unwrap() + (0.5 * nu).ln() + 1.0
                + digamma(0.5 * (nu + 1.0)).unwrap()
                - (0.5 * (nu + 1.0)).ln()
                + s;
            if residual.abs() > 1e-9 {
                nu_ok = false;
            }
        }
    }

    // Digamma reference values.
    let euler = 0.577_215_664_901_532_9_f64;
    let err_psi1 = (digamma(1.0).unwrap() + euler).abs();
    let err_psi_half = (digamma(0.5).unwrap() - (-euler - 2.0 * 2.0_f64.ln())).abs();

    check(
        "criterion 6 (student-t limits)",
        motion_diff <= 1e-8 && range_ok && nu_ok && err_psi1 <= 1e-10 && err_psi_half <= 1e-10,
        format!(
            "pinned-nu motion diff {motion_diff:.2e} <= 1e-8; e-step range ok {range_ok}; \
             nu residual ok {nu_ok}; psi(1) err {err_psi1:.2e}, psi(1/2) err {err_psi_half:.2e}"
        ),
    );
}

// ── Criterion 7: zero-velocity point correctness ────────────────────────────

#[test]
fn criterion_7_zero_velocity_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let mut motion = KinematicMotion::new(
            random_vec3(&mut rng, 2.0),
            random_vec3(&mut rng, 2.0),
            rng.random_range(-2.0..2.0),
        )
        .canonicalized();
        while motion.scaling.abs() <= 0.1 {
            motion = KinematicMotion::new(
                motion.rotation,
                motion.translation,
                rng.random_range(-2.0..2.0),
            )
            .canonicalized();
        }
        let p0 = zero_velocity_point(&motion, EPS_GAMMA).unwrap();
        worst = worst.max(motion.velocity(p0).norm());
    }
    check(
        "criterion 7 (zero-velocity point)",
        worst <= 1e-10,
        format!("worst residual speed {worst:.2e} <= 1e-10 over 1000 motions"),
    );
}

// ── Criterion 8: pipeline rigid covariance ──────────────────────────────────

#[test]
fn criterion_8_pipeline_covariance() {
    let spec = SceneSpec {
        seed: 8008,
        ..SceneSpec::default()
    };
    let mesh = generate_tube_mesh(&spec, 140, 40).unwrap();
    let roi = RoiSpec::new(spec.landmark_apex(), spec.landmark_base());
    let cfg = RobustConfig::default();
    let base = detect_axis(&mesh, &roi, &cfg, Method::Robust).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(8009);
    let mut worst_theta = 0.0_f64;
    let mut worst_anchor = 0.0_f64;
    for _ in 0..5 {
        let axis = random_unit(&mut rng);
        let angle = rng.random_range(-3.0..3.0);
        let rot = move |v: Vec3| rodrigues(v, axis, angle);
        let t = random_vec3(&mut rng, 8.0);
        let moved = TriangleMesh {
            vertices: mesh.vertices.iter().map(|v| rot(*v) + t).collect(),
            faces: mesh.faces.clone(),
            normals: None,
        };
        let moved_roi = RoiSpec::new(rot(roi.l1) + t, rot(roi.l2) + t);
        let report = detect_axis(&moved, &moved_roi, &cfg, Method::Robust).unwrap();
        worst_theta = worst_theta.max(
            angular_error_degrees(report.axis.direction, rot(base.axis.direction)).unwrap(),
        );
        worst_anchor =
            worst_anchor.max((report.axis.anchor - (rot(base.axis.anchor) + t)).norm());
    }
    check(
        "criterion 8 (pipeline covariance)",
        worst_theta <= 1e-4 && worst_anchor <= 1e-6,
        format!(
            "worst direction change {worst_theta:.2e} deg <= 1e-4, worst anchor change \
             {worst_anchor:.2e} <= 1e-6 over 5 rigid transforms"
        ),
    );
}

/// Rotation of `v` about the unit `axis` by `angle` (Rodrigues' formula).
fn rodrigues(v: Vec3, axis: Vec3, angle: f64) -> Vec3 {
    let (sin, cos) = angle.sin_cos();
    v * cos + axis.cross(&v) * sin + axis * (axis.dot(&v)) * (1.0 - cos)
}

// ── Criterion 9: benchmark determinism across worker counts ─────────────────

#[test]
fn criterion_9_bench_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_spiralfit"))
            .args([
                "bench",
                "--coverages",
                "0.4,1.0",
                "--trials",
                "4",
                "--samples",
                "2000",
                "--seed",
                "99",
                "--workers",
                workers,
                "--out",
                name,
                "--summary",
                &format!("sum_{name}"),
            ])
            .current_dir(dir.path())
            .output()
            .expect("bench runs");
        assert!(
            out.status.success(),
            "bench failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    run("a.csv", "1");
    run("b.csv", "6");
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    let sa = std::fs::read(dir.path().join("sum_a.csv")).unwrap();
    let sb = std::fs::read(dir.path().join("sum_b.csv")).unwrap();
    check(
        "criterion 9 (bench determinism)",
        a == b && sa == sb,
        format!(
            "records CSV identical: {}; summary CSV identical: {} (1 vs 6 workers, same seed)",
            a == b,
            sa == sb
        ),
    );
}
