//! Synthetic verification harness.
//!
//! Scenes are tube surfaces swept along an exact orbit of a known spiral
//! motion. A sphere carried by the flow stays a sphere (the motion is a
//! similarity transform), so the envelope of the flowing sphere family is an
//! invariant surface: every sampled point is exactly tangent to the velocity
//! field before noise, and the ground-truth axis is exact by construction.
//! A tubular outlier structure mimicking a neighboring nerve can be attached
//! near the basal turns, and isotropic Gaussian noise perturbs positions.
//!
//! The experiment driver sweeps surface coverage levels with per-trial seeds
//! derived from the master seed, so results are identical regardless of
//! worker count or execution order.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::time::Instant;

use nalgebra::{Rotation3, Unit};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::geometry::{
    angular_error_degrees, distance_error, AxisLine, KinematicMotion, OrientedPoint, Vec3,
};
use crate::linalg::SymMatrix;
use crate::mesh::TriangleMesh;
use crate::pipeline::{normalize_points, Method};
use crate::robust::{fit_robust, RobustConfig};

/// Errors from scene generation and the experiment harness.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("degenerate point cloud (covariance rank below 3)")]
    DegenerateCloud,
    #[error("empty input")]
    EmptyInput,
}

/// The attached tubular outlier structure.
#[derive(Debug, Clone, Copy)]
pub struct OutlierSpec {
    pub enabled: bool,
    /// Tube diameter in scene units.
    pub diameter: f64,
    /// Fraction of the total samples placed on the tube.
    pub fraction: f64,
}

impl Default for OutlierSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            diameter: 1.0,
            fraction: 0.10,
        }
    }
}

/// Parameters of one synthetic scene.
///
/// The motion is specified by its axis direction, angular speed, scaling
/// velocity and fixed point (`center`); the translation component follows
/// from requiring zero velocity at the center. The surface is a tube of
/// radius `tube_radius · e^{γt}` around the orbit through
/// `center + spiral_radius·u + axial_offset·axis`, running `turns` turns.
#[derive(Debug, Clone, Copy)]
pub struct SceneSpec {
    pub seed: u64,
    /// Zero-velocity point of the true motion.
    pub center: Vec3,
    /// True axis direction (normalized internally).
    pub axis: Vec3,
    /// Angular speed `‖r‖`.
    pub omega: f64,
    /// Scaling velocity γ.
    pub gamma: f64,
    /// Number of spiral turns.
    pub turns: f64,
    /// Radial offset of the orbit curve at t = 0 (apical end).
    pub spiral_radius: f64,
    /// Axial offset of the orbit curve at t = 0.
    pub axial_offset: f64,
    /// Tube radius at t = 0; grows with `e^{γt}` to stay an orbit surface.
    pub tube_radius: f64,
    /// Standard deviation of the isotropic position noise.
    pub noise_sigma: f64,
    pub outlier: OutlierSpec,
    pub samples: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        let turns: f64 = 2.5;
        let omega = 1.0;
        let duration = std::f64::consts::TAU * turns / omega;
        Self {
            seed: 0,
            center: Vec3::zeros(),
            axis: Vec3::z(),
            omega,
            // Grow by 3x from apex to base.
            gamma: 3.0_f64.ln() / duration,
            turns,
            spiral_radius: 1.2,
            axial_offset: 1.4,
            tube_radius: 0.35,
            noise_sigma: 0.15,
            outlier: OutlierSpec::default(),
            samples: 20_000,
        }
    }
}

impl SceneSpec {
    /// Parameter length of the sweep: `turns` full revolutions.
    pub fn duration(&self) -> f64 {
        std::f64::consts::TAU * self.turns / self.omega
    }

    /// The true motion `(r, c, γ)` with zero velocity at `center`.
    pub fn motion(&self) -> KinematicMotion {
        let axis = self.axis.normalize();
        let r = self.omega * axis;
        let c = -r.cross(&self.center) - self.gamma * self.center;
        KinematicMotion::new(r, c, self.gamma)
    }

    /// Ground-truth axis line.
    pub fn truth(&self) -> AxisLine {
        AxisLine {
            direction: self.axis.normalize(),
            anchor: self.center,
        }
    }

    /// Suggested apical landmark: the axis point level with the apical end
    /// of the tube surface.
    pub fn landmark_apex(&self) -> Vec3 {
        self.center + (self.axial_offset - self.tube_radius) * self.axis.normalize()
    }

    /// Suggested basal landmark: the axis point level with the basal end of
    /// the tube surface.
    pub fn landmark_base(&self) -> Vec3 {
        let growth = (self.gamma * self.duration()).exp();
        self.center
            + (self.axial_offset + self.tube_radius) * growth * self.axis.normalize()
    }

    fn validate(&self) -> Result<(), BenchError> {
        let mut problems = Vec::new();
        if self.samples < 100 {
            problems.push("samples must be at least 100");
        }
        if !(self.noise_sigma >= 0.0) {
            problems.push("noise_sigma must be nonnegative");
        }
        if !(self.outlier.diameter > 0.0) {
            problems.push("outlier diameter must be positive");
        }
        if !(0.0..=0.9).contains(&self.outlier.fraction) {
            problems.push("outlier fraction must be in [0, 0.9]");
        }
        if !(self.omega > 0.0) || !(self.turns > 0.0) {
            problems.push("omega and turns must be positive");
        }
        if !(self.spiral_radius > 0.0) || !(self.tube_radius > 0.0) {
            problems.push("spiral_radius and tube_radius must be positive");
        }
        if self.axis.norm() < 1e-12 {
            problems.push("axis direction must be nonzero");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(BenchError::InvalidSpec(problems.join("; ")))
        }
    }
}

/// A generated scene with its exact ground truth and per-point labels.
#[derive(Debug, Clone)]
pub struct Scene {
    pub points: Vec<OrientedPoint>,
    pub truth: AxisLine,
    pub motion: KinematicMotion,
    /// `true` where the point belongs to the outlier tube.
    pub outlier_labels: Vec<bool>,
}

fn any_perpendicular(v: Vec3) -> Vec3 {
    let e = if v.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    v.cross(&e).normalize()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed derivation: fold the parts into a splitmix64 chain.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut s = 0x5851_F42D_4C95_7F2D;
    for &p in parts {
        s = splitmix64(s ^ p);
    }
    s
}

const TAG_SCENE: u64 = 0xA11CE;
const TAG_SPEC: u64 = 0x5EED5;

/// Envelope sample of the flowing-sphere family at sweep parameter `t` and
/// circle angle `phi`. Returns position and exact unit normal.
fn envelope_point(
    spec: &SceneSpec,
    motion: &KinematicMotion,
    frame: &(Vec3, Vec3),
    t: f64,
    phi: f64,
) -> Result<OrientedPoint, BenchError> {
    let axis = spec.axis.normalize();
    let (u, _w) = frame;
    let q0 = spec.spiral_radius * u + spec.axial_offset * axis;
    let growth = (spec.gamma * t).exp();
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), spec.omega * t);
    let cvec = growth * (rot * q0);
    let curve = spec.center + cvec;
    // The orbit curve's own velocity; exact because v(center) = 0.
    let tangent = motion.rotation.cross(&cvec) + spec.gamma * cvec;
    let speed = tangent.norm();
    if speed < 1e-12 {
        return Err(BenchError::InvalidSpec(
            "orbit curve has vanishing speed".into(),
        ));
    }
    let ut = tangent / speed;
    let rho = spec.tube_radius * growth;
    // Envelope condition: (x − curve)·tangent = −ρρ′ with ρ′ = γρ.
    let beta = -spec.gamma * rho * rho / speed;
    let circle_sq = rho * rho - beta * beta;
    if circle_sq <= 0.0 {
        return Err(BenchError::InvalidSpec(
            "tube radius too large for the taper; envelope degenerates".into(),
        ));
    }
    let e1_raw = ut.cross(&axis);
    let e1 = if e1_raw.norm() < 1e-9 {
        any_perpendicular(ut)
    } else {
        e1_raw.normalize()
    };
    let e2 = ut.cross(&e1);
    let radial = circle_sq.sqrt() * (phi.cos() * e1 + phi.sin() * e2);
    let pos = curve + beta * ut + radial;
    let normal = (pos - curve) / rho;
    Ok(OrientedPoint::new(pos, normal))
}

/// Inverse-CDF sample of the sweep parameter with density proportional to
/// the local surface area (`∝ e^{2γt}`).
fn sample_t(u: f64, gamma: f64, duration: f64) -> f64 {
    if gamma.abs() < 1e-12 {
        return u * duration;
    }
    let a = (2.0 * gamma * duration).exp() - 1.0;
    (1.0 + u * a).ln() / (2.0 * gamma)
}

/// Generate a synthetic scene: exact spiral-tube samples, optional attached
/// outlier tube, then isotropic position noise. Deterministic per seed.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene, BenchError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[spec.seed, TAG_SCENE]));
    let motion = spec.motion();
    let axis = spec.axis.normalize();
    let u = any_perpendicular(axis);
    let w = axis.cross(&u);
    let frame = (u, w);
    let duration = spec.duration();

    let n_outliers = if spec.outlier.enabled {
        (spec.samples as f64 * spec.outlier.fraction).round() as usize
    } else {
        0
    };
    let n_inliers = spec.samples - n_outliers;

    let mut points = Vec::with_capacity(spec.samples);
    let mut labels = Vec::with_capacity(spec.samples);
    for _ in 0..n_inliers {
        let t = sample_t(rng.random::<f64>(), spec.gamma, duration);
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        points.push(envelope_point(spec, &motion, &frame, t, phi)?);
        labels.push(false);
    }

    if n_outliers > 0 {
        // Anchor the tube touching the basal 20% of the spiral, aimed to
        // pass near the middle turns (a long neighboring structure crosses
        // the whole field of view, so partial-coverage subsets see it too).
        let t_anchor = rng.random_range(0.8 * duration..duration);
        let anchor_on_curve = {
            let growth = (spec.gamma * t_anchor).exp();
            let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), spec.omega * t_anchor);
            spec.center + growth * (rot * (spec.spiral_radius * u + spec.axial_offset * axis))
        };
        let radius_here = spec.tube_radius * (spec.gamma * t_anchor).exp();
        let tube_radius = 0.5 * spec.outlier.diameter;
        let offset_dir = random_unit(&mut rng);
        let tube_anchor = anchor_on_curve + (radius_here + tube_radius) * offset_dir;

        let t_mid = rng.random_range(0.25 * duration..0.6 * duration);
        let mid_on_curve = {
            let growth = (spec.gamma * t_mid).exp();
            let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), spec.omega * t_mid);
            spec.center + growth * (rot * (spec.spiral_radius * u + spec.axial_offset * axis))
        };
        let jitter = rng.random_range(0.0..0.5 * spec.spiral_radius) * random_unit(&mut rng);
        let target = mid_on_curve + jitter;
        let span = target - tube_anchor;
        let length = span.norm();
        let dir = span / length;
        let f1 = any_perpendicular(dir);
        let f2 = dir.cross(&f1);
        for _ in 0..n_outliers {
            let s = rng.random_range(-0.3 * length..1.5 * length);
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let radial = theta.cos() * f1 + theta.sin() * f2;
            points.push(OrientedPoint::new(
                tube_anchor + s * dir + tube_radius * radial,
                radial,
            ));
            labels.push(true);
        }
    }

    if spec.noise_sigma > 0.0 {
        for q in points.iter_mut() {
            let g = Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            q.position += spec.noise_sigma * g;
        }
    }

    Ok(Scene {
        points,
        truth: spec.truth(),
        motion,
        outlier_labels: labels,
    })
}

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Triangulated version of the exact spiral tube (no noise, no outlier),
/// for exercising the mesh pipeline.
pub fn generate_tube_mesh(
    spec: &SceneSpec,
    n_sweep: usize,
    n_circle: usize,
) -> Result<TriangleMesh, BenchError> {
    spec.validate()?;
    if n_sweep < 2 || n_circle < 3 {
        return Err(BenchError::InvalidSpec(
            "mesh resolution too small (need n_sweep >= 2, n_circle >= 3)".into(),
        ));
    }
    let motion = spec.motion();
    let axis = spec.axis.normalize();
    let u = any_perpendicular(axis);
    let w = axis.cross(&u);
    let frame = (u, w);
    let duration = spec.duration();

    let mut vertices = Vec::with_capacity(n_sweep * n_circle);
    let mut exact_normals = Vec::with_capacity(n_sweep * n_circle);
    for i in 0..n_sweep {
        let t = duration * i as f64 / (n_sweep - 1) as f64;
        for j in 0..n_circle {
            let phi = std::f64::consts::TAU * j as f64 / n_circle as f64;
            let q = envelope_point(spec, &motion, &frame, t, phi)?;
            vertices.push(q.position);
            exact_normals.push(q.normal);
        }
    }
    let idx = |i: usize, j: usize| i * n_circle + (j % n_circle);
    let mut faces = Vec::with_capacity(2 * (n_sweep - 1) * n_circle);
    for i in 0..(n_sweep - 1) {
        for j in 0..n_circle {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            for tri in [[a, b, c], [a, c, d]] {
                // Orient the winding outward using the analytic normals.
                let face_normal = (vertices[tri[1]] - vertices[tri[0]])
                    .cross(&(vertices[tri[2]] - vertices[tri[0]]));
                let outward = exact_normals[tri[0]] + exact_normals[tri[1]] + exact_normals[tri[2]];
                if face_normal.dot(&outward) >= 0.0 {
                    faces.push(tri);
                } else {
                    faces.push([tri[0], tri[2], tri[1]]);
                }
            }
        }
    }
    let mut mesh =
        TriangleMesh::new(vertices, faces).map_err(|e| BenchError::InvalidSpec(e.to_string()))?;
    mesh.drop_degenerate_faces();
    Ok(mesh)
}

/// Subset of the points inside a sphere grown around `center` until the
/// retained count is within 1% of `fraction · n` (bisection on the radius).
#[derive(Debug, Clone)]
pub struct CoverageSubset {
    /// Indices of retained points, in input order.
    pub indices: Vec<usize>,
    /// Radius actually used.
    pub radius: f64,
}

/// Coverage model: a sphere centered at the apical convergence point of the
/// spiral (the truth anchor) grows until it holds the requested fraction of
/// all points, mimicking apical-to-basal surface coverage growth.
pub fn coverage_subset(points: &[OrientedPoint], truth: &AxisLine, fraction: f64) -> CoverageSubset {
    assert!(fraction > 0.0 && fraction <= 1.0, "fraction must be in (0, 1]");
    let center = truth.anchor;
    let dists: Vec<f64> = points.iter().map(|q| (q.position - center).norm()).collect();
    let max_d = dists.iter().cloned().fold(0.0_f64, f64::max);
    if fraction >= 1.0 {
        return CoverageSubset {
            indices: (0..points.len()).collect(),
            radius: max_d,
        };
    }
    let target = fraction * points.len() as f64;
    let tol = (0.01 * target).max(1.0);
    let mut sorted = dists.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let count_within = |r: f64| sorted.partition_point(|d| *d <= r);

    let (mut lo, mut hi) = (0.0, max_d);
    let mut radius = 0.5 * max_d;
    for _ in 0..200 {
        radius = 0.5 * (lo + hi);
        let count = count_within(radius) as f64;
        if (count - target).abs() <= tol {
            break;
        }
        if count < target {
            lo = radius;
        } else {
            hi = radius;
        }
    }
    let indices = (0..points.len()).filter(|&i| dists[i] <= radius).collect();
    CoverageSubset { indices, radius }
}

/// Least-variance principal direction of the point positions, anchored at
/// the centroid — the naive baseline estimator.
pub fn pca_axis(points: &[OrientedPoint]) -> Result<AxisLine, BenchError> {
    if points.len() < 3 {
        return Err(BenchError::EmptyInput);
    }
    let n = points.len() as f64;
    let centroid = points.iter().map(|q| q.position).sum::<Vec3>() / n;
    let mut cov = SymMatrix::zeros(3);
    for q in points {
        let d = q.position - centroid;
        cov.add_outer(&[d.x, d.y, d.z], 1.0 / n);
    }
    let eig = cov.sym_eig().map_err(|_| BenchError::DegenerateCloud)?;
    // Rank check: a collinear cloud has two vanishing eigenvalues and no
    // well-defined least-variance direction.
    if eig.values[1] <= 1e-12 * eig.values[2].max(1e-300) {
        return Err(BenchError::DegenerateCloud);
    }
    let v = &eig.vectors[0];
    Ok(AxisLine {
        direction: Vec3::new(v[0], v[1], v[2]).normalize(),
        anchor: centroid,
    })
}

/// Outcome of one benchmark trial.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialStatus {
    Ok,
    Failed(String),
}

impl TrialStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, TrialStatus::Ok)
    }
}

/// One benchmark run: scene seed, coverage, method, errors, timing.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub seed: u64,
    pub coverage: f64,
    pub method: Method,
    pub delta_theta_deg: f64,
    pub delta_d: f64,
    pub runtime_s: f64,
    pub n_points: usize,
    pub status: TrialStatus,
}

/// Configuration of the coverage-sweep experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub template: SceneSpec,
    pub coverages: Vec<f64>,
    pub trials_per_level: usize,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    pub robust: RobustConfig,
    /// Worker threads; `None` uses the global default.
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            template: SceneSpec::default(),
            coverages: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            trials_per_level: 50,
            methods: Method::ALL.to_vec(),
            master_seed: 0,
            robust: RobustConfig::default(),
            workers: None,
        }
    }
}

/// Randomize the scene geometry (axis orientation, center, sizes) from the
/// template, deterministically in `trial_seed`.
pub fn randomized_spec(template: &SceneSpec, trial_seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[trial_seed, TAG_SPEC]));
    let mut spec = *template;
    spec.seed = trial_seed;
    spec.axis = random_unit(&mut rng);
    spec.center = Vec3::new(
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
    );
    spec.turns = template.turns * rng.random_range(0.9..1.1);
    spec.gamma = template.gamma * rng.random_range(0.9..1.1);
    spec.spiral_radius = template.spiral_radius * rng.random_range(0.9..1.1);
    spec.axial_offset = template.axial_offset * rng.random_range(0.9..1.1);
    spec.tube_radius = template.tube_radius * rng.random_range(0.9..1.1);
    spec
}

/// Estimate the axis of a raw (unnormalized) subset with the given method.
pub fn estimate_axis(
    points: &[OrientedPoint],
    method: Method,
    robust: &RobustConfig,
) -> Result<AxisLine, String> {
    match method {
        Method::Pca => pca_axis(points).map_err(|e| e.to_string()),
        Method::Robust => {
            let (normalized, t) = normalize_points(points).map_err(|e| e.to_string())?;
            let report = fit_robust(&normalized, robust).map_err(|e| e.to_string())?;
            Ok(t.invert_axis(&report.axis))
        }
        Method::Gaussian => {
            let (normalized, t) = normalize_points(points).map_err(|e| e.to_string())?;
            let report =
                crate::fit::fit_gaussian(&normalized, &robust.base).map_err(|e| e.to_string())?;
            Ok(t.invert_axis(&report.axis))
        }
    }
}

fn run_trial(cfg: &ExperimentConfig, coverage_idx: usize, trial_idx: usize) -> Vec<TrialRecord> {
    let coverage = cfg.coverages[coverage_idx];
    let trial_seed = derive_seed(&[cfg.master_seed, coverage_idx as u64, trial_idx as u64]);
    let spec = randomized_spec(&cfg.template, trial_seed);

    let make_failure = |msg: &str| -> Vec<TrialRecord> {
        cfg.methods
            .iter()
            .map(|&method| TrialRecord {
                seed: trial_seed,
                coverage,
                method,
                delta_theta_deg: f64::NAN,
                delta_d: f64::NAN,
                runtime_s: 0.0,
                n_points: 0,
                status: TrialStatus::Failed(msg.to_string()),
            })
            .collect()
    };

    let scene = match generate_scene(&spec) {
        Ok(s) => s,
        Err(e) => return make_failure(&e.to_string()),
    };
    let subset = coverage_subset(&scene.points, &scene.truth, coverage);
    let points: Vec<OrientedPoint> = subset.indices.iter().map(|&i| scene.points[i]).collect();

    cfg.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let outcome = estimate_axis(&points, method, &cfg.robust);
            let runtime_s = start.elapsed().as_secs_f64();
            match outcome {
                Ok(axis) => {
                    let delta_theta_deg =
                        angular_error_degrees(axis.direction, scene.truth.direction)
                            .unwrap_or(f64::NAN);
                    let delta_d = distance_error(&axis, scene.truth.anchor);
                    TrialRecord {
                        seed: trial_seed,
                        coverage,
                        method,
                        delta_theta_deg,
                        delta_d,
                        runtime_s,
                        n_points: points.len(),
                        status: TrialStatus::Ok,
                    }
                }
                Err(message) => TrialRecord {
                    seed: trial_seed,
                    coverage,
                    method,
                    delta_theta_deg: f64::NAN,
                    delta_d: f64::NAN,
                    runtime_s,
                    n_points: points.len(),
                    status: TrialStatus::Failed(message),
                },
            }
        })
        .collect()
}

/// Run the coverage sweep. Per-trial seeds derive from
/// `(master_seed, coverage index, trial index)`, so results are identical
/// for any worker count; records are ordered by (coverage, trial, method).
pub fn run_experiment(cfg: &ExperimentConfig) -> Vec<TrialRecord> {
    let tasks: Vec<(usize, usize)> = (0..cfg.coverages.len())
        .flat_map(|ci| (0..cfg.trials_per_level).map(move |ti| (ci, ti)))
        .collect();

    let run_all = || -> Vec<Vec<TrialRecord>> {
        use rayon::prelude::*;
        tasks
            .par_iter()
            .map(|&(ci, ti)| run_trial(cfg, ci, ti))
            .collect()
    };

    let nested = match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(run_all),
        None => run_all(),
    };
    nested.into_iter().flatten().collect()
}

/// Quantile with linear interpolation between order statistics (the common
/// spreadsheet/NumPy default): `h = (n−1)p`, interpolate `x[⌊h⌋]..x[⌊h⌋+1]`.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Per-(coverage, method, metric) summary over successful trials.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub coverage: f64,
    pub method: Method,
    pub metric: &'static str,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub n: usize,
}

/// Medians and interquartile ranges of both error metrics, grouped by
/// coverage and method, in deterministic order.
pub fn summarize(records: &[TrialRecord]) -> Result<Vec<SummaryRow>, BenchError> {
    if records.is_empty() {
        return Err(BenchError::EmptyInput);
    }
    let mut groups: BTreeMap<(u64, &'static str), (f64, Method, Vec<f64>, Vec<f64>)> =
        BTreeMap::new();
    for rec in records.iter().filter(|r| r.status.is_ok()) {
        let key = (rec.coverage.to_bits(), rec.method.name());
        let entry = groups
            .entry(key)
            .or_insert_with(|| (rec.coverage, rec.method, Vec::new(), Vec::new()));
        entry.2.push(rec.delta_theta_deg);
        entry.3.push(rec.delta_d);
    }
    let mut rows = Vec::new();
    for (_, (coverage, method, mut thetas, mut ds)) in groups {
        thetas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (metric, values) in [("delta_theta_deg", &thetas), ("delta_d", &ds)] {
            if values.is_empty() {
                continue;
            }
            rows.push(SummaryRow {
                coverage,
                method,
                metric,
                median: quantile(values, 0.5),
                q1: quantile(values, 0.25),
                q3: quantile(values, 0.75),
                n: values.len(),
            });
        }
    }
    Ok(rows)
}

fn sanitize_status(status: &TrialStatus) -> String {
    match status {
        TrialStatus::Ok => "ok".to_string(),
        TrialStatus::Failed(msg) => {
            let compact: String = msg
                .chars()
                .map(|c| if c == ',' || c.is_whitespace() { '_' } else { c })
                .take(80)
                .collect();
            format!("err:{compact}")
        }
    }
}

/// Write trial records as CSV.
///
/// `include_runtime` gates the wall-clock column: without it the column is
/// written as 0 so that repeated runs produce byte-identical files (the
/// reproducibility contract of the benchmark).
pub fn write_records_csv(
    out: &mut dyn Write,
    records: &[TrialRecord],
    include_runtime: bool,
) -> io::Result<()> {
    writeln!(
        out,
        "seed,coverage,method,delta_theta_deg,delta_d,runtime_s,n_points,status"
    )?;
    for r in records {
        let runtime = if include_runtime {
            format!("{:.6}", r.runtime_s)
        } else {
            "0".to_string()
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.seed,
            r.coverage,
            r.method.name(),
            r.delta_theta_deg,
            r.delta_d,
            runtime,
            r.n_points,
            sanitize_status(&r.status)
        )?;
    }
    Ok(())
}

/// Write summary rows as CSV.
pub fn write_summary_csv(out: &mut dyn Write, rows: &[SummaryRow]) -> io::Result<()> {
    writeln!(out, "coverage,method,metric,median,q1,q3,n")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.coverage,
            r.method.name(),
            r.metric,
            r.median,
            r.q1,
            r.q3,
            r.n
        )?;
    }
    Ok(())
}
