//! spiralfit — rotation-axis detection for spiral-shaped surfaces.
//!
//! The library fits a kinematic spiral motion `v(p) = r × p + c + γ p` to an
//! oriented point cloud and reports the rotation axis of the motion (for
//! cochlear surfaces, the modiolar axis). The stages are:
//!
//! 1. **geometry** – the motion model: velocity field, extended-Plücker
//!    feature map, first-order point-to-orbit distance, per-point quadratic
//!    forms, zero-velocity point, axis error metrics.
//! 2. **linalg** – dense 3×3/7×7 symmetric solvers (Cholesky, cyclic Jacobi,
//!    generalized symmetric eigenproblem).
//! 3. **fit** – the Gaussian fitter: iterated generalized eigenproblem on the
//!    accumulated quadratic forms.
//! 4. **robust** – Student-t robustification via EM over per-point confidence
//!    weights.
//! 5. **mesh** / **pipeline** – PLY ingestion, vertex normals, region-of-
//!    interest cropping, connected-component selection, normalization, and
//!    the end-to-end `detect_axis` entry point.
//! 6. **bench** – synthetic spiral-tube scenes with exact ground truth, a PCA
//!    baseline, and the seeded coverage-sweep experiment harness.

pub mod bench;
pub mod fit;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod pipeline;
pub mod robust;

pub use bench::{
    coverage_subset, generate_scene, generate_tube_mesh, pca_axis, run_experiment, summarize,
    BenchError, ExperimentConfig, OutlierSpec, Scene, SceneSpec, TrialRecord, TrialStatus,
};
pub use fit::{fit_gaussian, FitConfig, FitError, FitReport};
pub use geometry::{
    aml_distance, angular_error_degrees, distance_error, plucker_feature, quadratic_forms,
    zero_velocity_point, AxisLine, GeometryError, KinematicMotion, OrientedPoint, Vec3,
    EPS_GAMMA,
};
pub use linalg::{gen_eig_smallest, LinalgError, SymMatrix};
pub use mesh::{load_mesh, save_ply, MeshError, PlyEncoding, TriangleMesh};
pub use pipeline::{
    detect_axis, normalize_points, roi_crop, FitReportDoc, Method, NormalizationTransform,
    PipelineError, RoiSpec,
};
pub use robust::{fit_robust, RobustConfig};
