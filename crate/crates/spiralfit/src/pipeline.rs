//! Mesh-to-axis pipeline.
//!
//! Two user landmarks seed a spherical-segment region of interest; the mesh
//! is cropped to it, reduced to the connected surface nearest the segment
//! center, turned into a normalized oriented point cloud, fitted, and the
//! axis is mapped back to input coordinates with its sign oriented from the
//! second landmark toward the first.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::pca_axis;
use crate::fit::{fit_gaussian, FitReport, MIN_POINTS};
use crate::geometry::{AxisLine, KinematicMotion, OrientedPoint, Vec3};
use crate::mesh::{largest_component_near, oriented_points, MeshError, TriangleMesh};
use crate::robust::{fit_robust, RobustConfig};

/// Pipeline failures, tagged with the stage that produced them.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("roi crop: landmarks coincide (|l1 - l2| = 0)")]
    InvalidRoi,
    #[error("roi crop: only {survivors} vertices inside the region (need {needed})")]
    EmptyRoi { survivors: usize, needed: usize },
    #[error("component selection: {0}")]
    Component(MeshError),
    #[error("normal computation: {0}")]
    Normals(MeshError),
    #[error("normalization: degenerate point cloud (rms {0:.3e})")]
    DegenerateCloud(f64),
    #[error("fit ({method}): {message}")]
    FitFailed { method: &'static str, message: String },
}

/// Region of interest seeded by two landmarks: `l1` at the far (apical) end
/// of the structure, `l2` at the near (basal) end.
#[derive(Debug, Clone, Copy)]
pub struct RoiSpec {
    pub l1: Vec3,
    pub l2: Vec3,
}

impl RoiSpec {
    pub fn new(l1: Vec3, l2: Vec3) -> Self {
        Self { l1, l2 }
    }

    /// Segment center `(l1 + l2)/2`.
    pub fn center(&self) -> Vec3 {
        0.5 * (self.l1 + self.l2)
    }

    /// Segment radius `‖l1 − l2‖`.
    pub fn radius(&self) -> f64 {
        (self.l1 - self.l2).norm()
    }
}

/// Crop to the spherical segment: vertices within `‖l1 − l2‖` of the segment
/// center and between the planes through `l1` and `l2` perpendicular to the
/// landmark axis (boundaries inclusive). Faces survive when all three
/// vertices do; the result is reindexed.
pub fn roi_crop(mesh: &TriangleMesh, roi: &RoiSpec) -> Result<TriangleMesh, PipelineError> {
    let rs = roi.radius();
    if rs <= 0.0 {
        return Err(PipelineError::InvalidRoi);
    }
    let center = roi.center();
    let axis = (roi.l1 - roi.l2) / rs;

    let keep: Vec<bool> = mesh
        .vertices
        .iter()
        .map(|p| {
            let along = (p - roi.l2).dot(&axis);
            (p - center).norm() <= rs && (0.0..=rs).contains(&along)
        })
        .collect();
    let survivors = keep.iter().filter(|&&k| k).count();
    if survivors < MIN_POINTS {
        return Err(PipelineError::EmptyRoi {
            survivors,
            needed: MIN_POINTS,
        });
    }

    let mut map = vec![usize::MAX; mesh.vertices.len()];
    let mut vertices = Vec::with_capacity(survivors);
    let mut normals = mesh.normals.as_ref().map(|_| Vec::with_capacity(survivors));
    for (i, p) in mesh.vertices.iter().enumerate() {
        if keep[i] {
            map[i] = vertices.len();
            vertices.push(*p);
            if let (Some(out), Some(all)) = (&mut normals, &mesh.normals) {
                out.push(all[i]);
            }
        }
    }
    let faces = mesh
        .faces
        .iter()
        .filter(|f| f.iter().all(|&v| keep[v]))
        .map(|f| [map[f[0]], map[f[1]], map[f[2]]])
        .collect();
    Ok(TriangleMesh {
        vertices,
        faces,
        normals,
    })
}

/// Centering/scaling applied before fitting; invertible exactly.
#[derive(Debug, Clone, Copy)]
pub struct NormalizationTransform {
    pub centroid: Vec3,
    pub scale: f64,
}

impl NormalizationTransform {
    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        (p - self.centroid) / self.scale
    }

    pub fn invert_point(&self, p: Vec3) -> Vec3 {
        p * self.scale + self.centroid
    }

    /// Map an axis fitted in normalized coordinates back to input
    /// coordinates (the transform is rotation-free, so the direction is
    /// unchanged).
    pub fn invert_axis(&self, axis: &AxisLine) -> AxisLine {
        AxisLine {
            direction: axis.direction,
            anchor: self.invert_point(axis.anchor),
        }
    }
}

/// Subtract the centroid and scale the cloud to unit RMS radius. Normals are
/// untouched (the transform has no rotation part).
pub fn normalize_points(
    points: &[OrientedPoint],
) -> Result<(Vec<OrientedPoint>, NormalizationTransform), PipelineError> {
    assert!(!points.is_empty(), "normalize_points needs at least a point");
    let centroid = points.iter().map(|q| q.position).sum::<Vec3>() / points.len() as f64;
    let rms = (points
        .iter()
        .map(|q| (q.position - centroid).norm_squared())
        .sum::<f64>()
        / points.len() as f64)
        .sqrt();
    if rms < 1e-12 {
        return Err(PipelineError::DegenerateCloud(rms));
    }
    let transform = NormalizationTransform {
        centroid,
        scale: rms,
    };
    let normalized = points
        .iter()
        .map(|q| OrientedPoint::new(transform.apply_point(q.position), q.normal))
        .collect();
    Ok((normalized, transform))
}

/// Axis estimation methods exposed by the pipeline and the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Robust,
    Gaussian,
    Pca,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Robust => "robust",
            Method::Gaussian => "gaussian",
            Method::Pca => "pca",
        }
    }

    pub const ALL: [Method; 3] = [Method::Robust, Method::Gaussian, Method::Pca];
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "robust" => Ok(Method::Robust),
            "gaussian" => Ok(Method::Gaussian),
            "pca" => Ok(Method::Pca),
            other => Err(format!(
                "unknown method '{other}' (expected robust, gaussian or pca)"
            )),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fit the selected method on pre-normalized points and return a report in
/// those coordinates.
pub(crate) fn fit_with_method(
    points: &[OrientedPoint],
    config: &RobustConfig,
    method: Method,
) -> Result<FitReport, PipelineError> {
    let wrap = |message: String| PipelineError::FitFailed {
        method: method.name(),
        message,
    };
    match method {
        Method::Robust => fit_robust(points, config).map_err(|e| wrap(e.to_string())),
        Method::Gaussian => fit_gaussian(points, &config.base).map_err(|e| wrap(e.to_string())),
        Method::Pca => {
            let axis = pca_axis(points).map_err(|e| wrap(e.to_string()))?;
            // Report point-to-axis distances so the per-point arrays keep
            // their length-n contract; PCA weighs all points equally.
            let distances: Vec<f64> = points
                .iter()
                .map(|q| crate::geometry::distance_error(&axis, q.position))
                .collect();
            let sigma = distances.iter().map(|d| d * d).sum::<f64>() / points.len() as f64;
            Ok(FitReport {
                motion: KinematicMotion::new(axis.direction, Vec3::zeros(), 0.0),
                axis,
                per_point_distance: distances,
                per_point_confidence: vec![1.0; points.len()],
                sigma,
                nu: f64::INFINITY,
                iterations_run: 0,
                eigenvalue: 0.0,
                n_dropped: 0,
            })
        }
    }
}

/// Full detection pipeline: crop → component selection → normals →
/// normalization → fit → denormalize, with the axis signed so that
/// `direction · (l1 − l2) ≥ 0`.
pub fn detect_axis(
    mesh: &TriangleMesh,
    roi: &RoiSpec,
    config: &RobustConfig,
    method: Method,
) -> Result<FitReport, PipelineError> {
    let cropped = roi_crop(mesh, roi)?;
    let surface = if cropped.faces.is_empty() {
        // Point-set input (no connectivity): skip component selection.
        cropped
    } else {
        largest_component_near(&cropped, roi.center()).map_err(PipelineError::Component)?
    };
    let (points, _excluded) = oriented_points(&surface).map_err(PipelineError::Normals)?;
    if points.len() < MIN_POINTS {
        return Err(PipelineError::EmptyRoi {
            survivors: points.len(),
            needed: MIN_POINTS,
        });
    }
    let (normalized, transform) = normalize_points(&points)?;
    let mut report = fit_with_method(&normalized, config, method)?;

    report.axis = transform.invert_axis(&report.axis);
    // Orient from the basal landmark toward the apical one. The reversed
    // motion is the same orbit family, so flip the whole parameter vector to
    // keep `axis.direction = r/‖r‖` consistent.
    if report.axis.direction.dot(&(roi.l1 - roi.l2)) < 0.0 {
        report.axis.direction = -report.axis.direction;
        report.motion = KinematicMotion::new(
            -report.motion.rotation,
            -report.motion.translation,
            -report.motion.scaling,
        );
        if method != Method::Pca {
            // Signed fitter residuals flip with the motion; PCA's
            // point-to-axis distances are unsigned.
            for d in report.per_point_distance.iter_mut() {
                *d = -*d;
            }
        }
    }
    Ok(report)
}

/// JSON document for a fit result (the on-disk interface of the CLI).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReportDoc {
    pub method: String,
    pub r: [f64; 3],
    pub c: [f64; 3],
    pub gamma: f64,
    pub axis: AxisDoc,
    pub sigma: f64,
    /// Student-t degrees of freedom; `null` for Gaussian/PCA fits.
    pub nu: Option<f64>,
    pub n_points: usize,
    pub n_dropped: usize,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_point_confidence: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AxisDoc {
    pub direction: [f64; 3],
    pub anchor: [f64; 3],
}

impl FitReportDoc {
    pub fn from_report(report: &FitReport, method: Method, include_confidence: bool) -> Self {
        Self {
            method: method.name().to_string(),
            r: report.motion.rotation.into(),
            c: report.motion.translation.into(),
            gamma: report.motion.scaling,
            axis: AxisDoc {
                direction: report.axis.direction.into(),
                anchor: report.axis.anchor.into(),
            },
            sigma: report.sigma,
            nu: report.nu.is_finite().then_some(report.nu),
            n_points: report.per_point_distance.len().max(report.per_point_confidence.len()),
            n_dropped: report.n_dropped,
            iterations: report.iterations_run,
            per_point_confidence: include_confidence
                .then(|| report.per_point_confidence.clone()),
        }
    }

    pub fn axis_line(&self) -> AxisLine {
        AxisLine {
            direction: Vec3::from(self.axis.direction),
            anchor: Vec3::from(self.axis.anchor),
        }
    }
}
