//! spiralfit command line: fit spiral axes on meshes, generate synthetic
//! scenes, run coverage-sweep benchmarks and compare axis estimates.
//!
//! Exit codes: 0 success, 2 usage/argument errors, 3 runtime errors
//! (loading, fitting, I/O).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use spiralfit::bench::{
    generate_scene, generate_tube_mesh, randomized_spec, run_experiment, summarize,
    write_records_csv, write_summary_csv, ExperimentConfig, OutlierSpec, SceneSpec,
};
use spiralfit::geometry::{angular_error_degrees, distance_error, AxisLine, Vec3};
use spiralfit::mesh::{load_mesh, save_ply, PlyEncoding, TriangleMesh};
use spiralfit::pipeline::{detect_axis, FitReportDoc, Method, RoiSpec};
use spiralfit::{FitConfig, RobustConfig};

const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "spiralfit",
    version,
    about = "Rotation-axis detection for spiral-shaped surfaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Print progress diagnostics to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the rotation axis of a spiral surface from a PLY mesh or
    /// oriented point set.
    Fit(FitArgs),
    /// Generate a synthetic spiral scene with exact ground truth.
    Synth(SynthArgs),
    /// Run the seeded coverage-sweep benchmark.
    Bench(BenchArgs),
    /// Compare two axis estimates (or an estimate against a ground truth).
    Compare(CompareArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Input PLY file (ASCII or binary little-endian).
    mesh: PathBuf,
    /// Apical landmark "x,y,z" (helicotrema side).
    #[arg(long, value_name = "X,Y,Z", allow_hyphen_values = true)]
    l1: String,
    /// Basal landmark "x,y,z" (modiolus side).
    #[arg(long, value_name = "X,Y,Z", allow_hyphen_values = true)]
    l2: String,
    /// Estimation method.
    #[arg(long, default_value = "robust")]
    method: String,
    /// Distance denominator regularizer.
    #[arg(long, default_value_t = 0.001)]
    wp: f64,
    /// Eigen refinement iterations.
    #[arg(long, default_value_t = 5)]
    iters: usize,
    /// Write the fit report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include per-point confidences in the JSON report.
    #[arg(long)]
    confidence: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene seed; also randomizes the spiral geometry.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Position noise standard deviation.
    #[arg(long, default_value_t = 0.15)]
    noise: f64,
    /// Attach the tubular outlier structure (on|off).
    #[arg(long, default_value = "on")]
    outlier: String,
    /// Number of surface samples.
    #[arg(long, default_value_t = 20000)]
    samples: usize,
    /// Output PLY path.
    #[arg(long)]
    out: PathBuf,
    /// Write the ground truth (axis, motion, landmarks) as JSON here.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Emit a triangulated tube mesh instead of an oriented point set
    /// (noise-free, no outlier; exercises the mesh pipeline).
    #[arg(long)]
    mesh: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Coverage fractions in (0, 1].
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.4,0.6,0.8,1.0")]
    coverages: Vec<f64>,
    /// Trials per coverage level.
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Methods to run.
    #[arg(long, value_delimiter = ',', default_value = "robust,gaussian,pca")]
    methods: Vec<String>,
    /// Master seed; per-trial seeds derive from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-trial records CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Median/IQR summary CSV path.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Worker threads (default: all cores; SPIRALFIT_THREADS overrides).
    #[arg(long)]
    workers: Option<usize>,
    /// Samples per generated scene.
    #[arg(long, default_value_t = 20000)]
    samples: usize,
    /// Scene noise standard deviation.
    #[arg(long, default_value_t = 0.15)]
    noise: f64,
    /// Attach the outlier tube to the scenes (on|off).
    #[arg(long, default_value = "on")]
    outlier: String,
    /// Record measured wall time in the runtime_s CSV column. Off by
    /// default so repeated runs are byte-identical.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Fit report JSON.
    a: PathBuf,
    /// Second fit report JSON to compare against.
    #[arg(conflicts_with = "reference")]
    b: Option<PathBuf>,
    /// Ground-truth JSON (from `synth --truth`) to compare against.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
}

/// Ground-truth document written by `synth --truth`.
#[derive(Debug, Serialize, Deserialize)]
struct TruthDoc {
    direction: [f64; 3],
    anchor: [f64; 3],
    motion: MotionDoc,
    l1: [f64; 3],
    l2: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct MotionDoc {
    r: [f64; 3],
    c: [f64; 3],
    gamma: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Fit(args) => run_fit(args, cli.verbose),
        Command::Synth(args) => run_synth(args, cli.verbose),
        Command::Bench(args) => run_bench(args, cli.verbose),
        Command::Compare(args) => run_compare(args),
    }
}

fn usage_error(message: &str) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(EXIT_USAGE)
}

fn runtime_error(stage: &str, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {stage}: {message}");
    ExitCode::from(EXIT_RUNTIME)
}

fn parse_vec3(text: &str) -> Result<Vec3, String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(format!(
            "expected three comma-separated reals, got '{text}'"
        ));
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(parts.iter()) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| format!("bad coordinate '{part}' in '{text}'"))?;
    }
    Ok(Vec3::new(out[0], out[1], out[2]))
}

fn parse_on_off(text: &str) -> Result<bool, String> {
    match text {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected 'on' or 'off', got '{other}'")),
    }
}

fn fmt_vec3(v: Vec3) -> String {
    format!("{},{},{}", v.x, v.y, v.z)
}

fn run_fit(args: FitArgs, verbose: bool) -> ExitCode {
    let l1 = match parse_vec3(&args.l1) {
        Ok(v) => v,
        Err(e) => return usage_error(&format!("--l1: {e}")),
    };
    let l2 = match parse_vec3(&args.l2) {
        Ok(v) => v,
        Err(e) => return usage_error(&format!("--l2: {e}")),
    };
    let method: Method = match args.method.parse() {
        Ok(m) => m,
        Err(e) => return usage_error(&e),
    };
    if args.wp <= 0.0 {
        return usage_error("--wp must be positive");
    }
    if args.iters == 0 {
        return usage_error("--iters must be at least 1");
    }

    let loaded = match load_mesh(&args.mesh) {
        Ok(m) => m,
        Err(e) => return runtime_error("load", e),
    };
    if verbose {
        eprintln!(
            "loaded {} vertices, {} faces ({} degenerate faces dropped)",
            loaded.mesh.vertices.len(),
            loaded.mesh.faces.len(),
            loaded.degenerate_faces_dropped
        );
    }

    let config = RobustConfig {
        base: FitConfig {
            w_p: args.wp,
            iterations: args.iters,
            ..FitConfig::default()
        },
        ..RobustConfig::default()
    };
    let roi = RoiSpec::new(l1, l2);
    let start = Instant::now();
    let report = match detect_axis(&loaded.mesh, &roi, &config, method) {
        Ok(r) => r,
        Err(e) => return runtime_error("fit", e),
    };
    let runtime_s = start.elapsed().as_secs_f64();

    let doc = FitReportDoc::from_report(&report, method, args.confidence);
    if let Some(path) = &args.out {
        let json = serde_json::to_string_pretty(&doc).expect("report serializes");
        if let Err(e) = fs::write(path, json + "\n") {
            return runtime_error("write", e);
        }
    }

    println!("method={}", method.name());
    println!("n_points={}", doc.n_points);
    println!("n_dropped={}", doc.n_dropped);
    println!("axis_direction={}", fmt_vec3(report.axis.direction));
    println!("axis_anchor={}", fmt_vec3(report.axis.anchor));
    println!("gamma={}", report.motion.scaling);
    println!("sigma={}", report.sigma);
    println!(
        "nu={}",
        if report.nu.is_finite() {
            report.nu.to_string()
        } else {
            "inf".to_string()
        }
    );
    println!("iterations={}", report.iterations_run);
    println!("runtime_s={runtime_s:.6}");
    ExitCode::SUCCESS
}

fn run_synth(args: SynthArgs, verbose: bool) -> ExitCode {
    let outlier_enabled = match parse_on_off(&args.outlier) {
        Ok(v) => v,
        Err(e) => return usage_error(&format!("--outlier: {e}")),
    };
    let template = SceneSpec {
        noise_sigma: args.noise,
        samples: args.samples,
        outlier: OutlierSpec {
            enabled: outlier_enabled,
            ..OutlierSpec::default()
        },
        ..SceneSpec::default()
    };
    let spec = randomized_spec(&template, args.seed);

    let (mesh, n_points, n_outliers) = if args.mesh {
        let n_circle = 48usize;
        let n_sweep = (args.samples / n_circle).max(2);
        let mesh = match generate_tube_mesh(&spec, n_sweep, n_circle) {
            Ok(m) => m,
            Err(e) => return runtime_error("synth", e),
        };
        let n = mesh.vertices.len();
        (mesh, n, 0)
    } else {
        let scene = match generate_scene(&spec) {
            Ok(s) => s,
            Err(e) => return runtime_error("synth", e),
        };
        let n_outliers = scene.outlier_labels.iter().filter(|&&o| o).count();
        let n = scene.points.len();
        (
            TriangleMesh::from_points(&scene.points),
            n,
            n_outliers,
        )
    };

    if let Err(e) = save_ply(&args.out, &mesh, PlyEncoding::Ascii) {
        return runtime_error("write", e);
    }
    if verbose {
        eprintln!("scene axis {}", fmt_vec3(spec.axis.normalize()));
    }

    if let Some(path) = &args.truth {
        let motion = spec.motion();
        let doc = TruthDoc {
            direction: spec.axis.normalize().into(),
            anchor: spec.center.into(),
            motion: MotionDoc {
                r: motion.rotation.into(),
                c: motion.translation.into(),
                gamma: motion.scaling,
            },
            l1: spec.landmark_apex().into(),
            l2: spec.landmark_base().into(),
        };
        let json = serde_json::to_string_pretty(&doc).expect("truth serializes");
        if let Err(e) = fs::write(path, json + "\n") {
            return runtime_error("write", e);
        }
        println!("wrote_truth={}", path.display());
    }

    println!("wrote_ply={}", args.out.display());
    println!("n_points={n_points}");
    println!("n_outliers={n_outliers}");
    println!("seed={}", args.seed);
    ExitCode::SUCCESS
}

fn worker_count(flag: Option<usize>) -> Result<Option<usize>, String> {
    match std::env::var("SPIRALFIT_THREADS") {
        Ok(text) => {
            let n: usize = text
                .parse()
                .map_err(|_| format!("SPIRALFIT_THREADS must be a positive integer, got '{text}'"))?;
            if n == 0 {
                return Err("SPIRALFIT_THREADS must be at least 1".into());
            }
            Ok(Some(n))
        }
        Err(_) => Ok(flag),
    }
}

fn run_bench(args: BenchArgs, verbose: bool) -> ExitCode {
    for &c in &args.coverages {
        if !(c > 0.0 && c <= 1.0) {
            return usage_error(&format!("coverage {c} outside (0, 1]"));
        }
    }
    if args.trials == 0 {
        return usage_error("--trials must be at least 1");
    }
    let mut methods = Vec::new();
    for name in &args.methods {
        match name.parse::<Method>() {
            Ok(m) => methods.push(m),
            Err(e) => return usage_error(&e),
        }
    }
    let outlier_enabled = match parse_on_off(&args.outlier) {
        Ok(v) => v,
        Err(e) => return usage_error(&format!("--outlier: {e}")),
    };
    let workers = match worker_count(args.workers) {
        Ok(w) => w,
        Err(e) => return usage_error(&e),
    };

    let cfg = ExperimentConfig {
        template: SceneSpec {
            noise_sigma: args.noise,
            samples: args.samples,
            outlier: OutlierSpec {
                enabled: outlier_enabled,
                ..OutlierSpec::default()
            },
            ..SceneSpec::default()
        },
        coverages: args.coverages.clone(),
        trials_per_level: args.trials,
        methods,
        master_seed: args.seed,
        robust: RobustConfig::default(),
        workers,
    };

    let start = Instant::now();
    let records = run_experiment(&cfg);
    let wall_s = start.elapsed().as_secs_f64();
    if verbose {
        eprintln!("{} trials in {wall_s:.2}s", records.len());
    }

    let mut csv = Vec::new();
    if write_records_csv(&mut csv, &records, args.timing).is_err() {
        return runtime_error("write", "records CSV");
    }
    if let Err(e) = fs::write(&args.out, &csv) {
        return runtime_error("write", e);
    }

    match summarize(&records) {
        Ok(rows) => {
            if let Some(path) = &args.summary {
                let mut buf = Vec::new();
                if write_summary_csv(&mut buf, &rows).is_err() {
                    return runtime_error("write", "summary CSV");
                }
                if let Err(e) = fs::write(path, &buf) {
                    return runtime_error("write", e);
                }
            }
            // Compact stdout table: one line per (coverage, method).
            let mut seen: Vec<(f64, Method, f64, f64, usize)> = Vec::new();
            for row in &rows {
                match seen
                    .iter_mut()
                    .find(|(c, m, ..)| *c == row.coverage && *m == row.method)
                {
                    Some(entry) => {
                        if row.metric == "delta_d" {
                            entry.3 = row.median;
                        } else {
                            entry.2 = row.median;
                        }
                    }
                    None => {
                        let (theta, d) = if row.metric == "delta_d" {
                            (f64::NAN, row.median)
                        } else {
                            (row.median, f64::NAN)
                        };
                        seen.push((row.coverage, row.method, theta, d, row.n));
                    }
                }
            }
            for (coverage, method, theta, d, n) in seen {
                println!(
                    "coverage={coverage} method={} median_delta_theta_deg={theta} median_delta_d={d} n={n}",
                    method.name()
                );
            }
        }
        Err(e) => eprintln!("warning: no summary ({e})"),
    }

    let ok = records.iter().filter(|r| r.status.is_ok()).count();
    println!("trials_ok={ok}");
    println!("trials_total={}", records.len());
    println!("runtime_s={wall_s:.3}");
    println!("wrote={}", args.out.display());

    if ok * 10 >= records.len() * 9 {
        ExitCode::SUCCESS
    } else {
        eprintln!(
            "error: bench: only {ok}/{} trials succeeded",
            records.len()
        );
        ExitCode::from(EXIT_RUNTIME)
    }
}

/// Read an axis from either a fit report JSON or a truth JSON.
fn load_axis(path: &Path) -> Result<AxisLine, ExitCode> {
    let text = fs::read_to_string(path)
        .map_err(|e| runtime_error("read", format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
        usage_error(&format!("malformed JSON in {}: {e}", path.display()))
    })?;
    let node = if value.get("axis").is_some() {
        &value["axis"]
    } else {
        &value
    };
    let dir = node.get("direction").and_then(parse_triple);
    let anchor = node.get("anchor").and_then(parse_triple);
    match (dir, anchor) {
        (Some(direction), Some(anchor)) => AxisLine::new(direction, anchor).map_err(|e| {
            usage_error(&format!("{}: invalid axis ({e})", path.display()))
        }),
        _ => Err(usage_error(&format!(
            "{}: missing axis direction/anchor fields",
            path.display()
        ))),
    }
}

fn parse_triple(v: &serde_json::Value) -> Option<Vec3> {
    let arr = v.as_array()?;
    if arr.len() != 3 {
        return None;
    }
    let mut out = [0.0; 3];
    for (slot, item) in out.iter_mut().zip(arr.iter()) {
        *slot = item.as_f64()?;
    }
    Some(Vec3::new(out[0], out[1], out[2]))
}

fn run_compare(args: CompareArgs) -> ExitCode {
    let reference_path = match (&args.b, &args.reference) {
        (Some(b), None) => b.clone(),
        (None, Some(r)) => r.clone(),
        (None, None) => {
            return usage_error("compare needs a second fit JSON or --ref truth JSON")
        }
        (Some(_), Some(_)) => unreachable!("clap rejects conflicting arguments"),
    };
    let axis_a = match load_axis(&args.a) {
        Ok(a) => a,
        Err(code) => return code,
    };
    let axis_ref = match load_axis(&reference_path) {
        Ok(a) => a,
        Err(code) => return code,
    };
    let delta_theta = match angular_error_degrees(axis_a.direction, axis_ref.direction) {
        Ok(v) => v,
        Err(e) => return runtime_error("compare", e),
    };
    let delta_d = distance_error(&axis_a, axis_ref.anchor);
    println!("delta_theta_deg={delta_theta}");
    println!("delta_d={delta_d}");
    ExitCode::SUCCESS
}
