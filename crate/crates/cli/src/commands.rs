//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;
use tomosar_core::crlb::{crlb_single, interference_factor, snr_from_db, AccuracyQuery};
use tomosar_core::eval::{height_stats, profile_slice, scene_regions, separation_histogram, SliceAxis};
use tomosar_core::model::{build_steering_matrix, rayleigh_resolution};
use tomosar_core::nonlocal::filter_stack_tiled;
use tomosar_core::simulate::{generate_scene, simulate_stack};
use tomosar_core::slimmer::{ImageInversion, Inverter, Scatterer, ScattererSet};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::formats::{
    read_float_raster, read_stack, read_text, write_byte_raster, write_float_raster, write_pgm, write_stack, write_text,
};

#[derive(Debug, Parser)]
#[command(name = "tomosar", version, about = "Non-local compressive-sensing SAR tomography")]
pub struct Cli {
    /// Worker threads (default: all cores). Never changes any output byte.
    #[arg(long, global = true, env = "TOMOSAR_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scene and write a stack, the true height raster and a manifest.
    Simulate(SimulateArgs),
    /// Non-local filtering of a stack; writes the filtered stack and an ENL raster.
    Filter(FilterArgs),
    /// Per-pixel sparse inversion of a stack.
    Invert(InvertArgs),
    /// Height statistics, separation histogram and profiles against the truth.
    Evaluate(EvaluateArgs),
    /// Closed-form elevation accuracy bound, printed as one CSV line
    /// `sigma_s0,c0,sigma_s`.
    Crlb(CrlbArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Run configuration (JSON); defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output stack file.
    #[arg(long)]
    pub out: PathBuf,
    /// True height raster [default: <out stem>.truth.hgtf].
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Manifest [default: <out stem>.manifest.json].
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Also write 8-bit PGM previews of rasters.
    #[arg(long)]
    pub preview: bool,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Filtered stack file.
    #[arg(long)]
    pub out: PathBuf,
    /// ENL raster [default: <out stem>.enl.hgtf].
    #[arg(long)]
    pub enl: Option<PathBuf>,
    /// Run configuration; only the `nonlocal` section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub patch_radius: Option<usize>,
    #[arg(long)]
    pub search_radius: Option<usize>,
    /// Per-pair similarity bandwidth.
    #[arg(long)]
    pub h: Option<f64>,
    /// Tile size in pixels (default: whole image). Never changes the output.
    #[arg(long)]
    pub tiles: Option<usize>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub preview: bool,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Run configuration; `solver` and `pipeline` sections are used, and
    /// the scene size must match the stack.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Outputs are <prefix>.height.hgtf, .ground.hgtf, .order.kmap,
    /// .scatterers.csv and .manifest.json.
    #[arg(long)]
    pub out_prefix: PathBuf,
    #[arg(long)]
    pub preview: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Estimated height raster (NaN = not detected).
    #[arg(long)]
    pub height: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Run configuration; `scene`, `geometry` and `eval` sections are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scatterer table from `invert`, for the separation histogram.
    #[arg(long)]
    pub scatterers: Option<PathBuf>,
    /// Height statistics CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Histogram CSV [default: <out stem>.histogram.csv].
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long)]
    pub erosion: Option<usize>,
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// Profile slice, `row:INDEX` or `col:INDEX`.
    #[arg(long)]
    pub profile: Option<String>,
    /// Profile CSV [default: <out stem>.profile.csv].
    #[arg(long)]
    pub profile_out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CrlbArgs {
    /// [m]
    #[arg(long, default_value_t = 0.031)]
    pub wavelength: f64,
    /// Slant range [m].
    #[arg(long, default_value_t = 704_000.0)]
    pub range: f64,
    /// Baseline standard deviation [m].
    #[arg(long)]
    pub sigma_b: f64,
    /// Number of acquisitions.
    #[arg(long)]
    pub n: usize,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_db: f64,
    /// Scatterer separation in Rayleigh resolutions.
    #[arg(long)]
    pub kappa: f64,
    /// Phase difference of the two scatterers [rad].
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub delta_phi: f64,
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be ≥ 1".into()));
        }
        // a pool already set up by an embedding program is fine too
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Filter(a) => filter(&a),
        Command::Invert(a) => invert(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Crlb(a) => crlb(&a).map(|line| println!("{line}")),
    }
}

/// `dir/stem.suffix` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(format!(".{suffix}"));
    PathBuf::from(s)
}

#[derive(Serialize)]
struct OutputRecord {
    path: String,
    bytes: u64,
}

/// Everything needed to repeat a run. Thread and tile counts are left out
/// because they never change results.
#[derive(Serialize)]
struct Manifest<'a, S: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    settings: S,
    inputs: Vec<String>,
    outputs: Vec<OutputRecord>,
}

fn write_manifest<S: Serialize>(
    path: &Path,
    command: &'static str,
    config: &RunConfig,
    settings: S,
    inputs: &[&Path],
    outputs: &[&Path],
) -> CliResult<()> {
    let outputs = outputs
        .iter()
        .map(|p| {
            let bytes = std::fs::metadata(p).map_err(|e| CliError::write(p, e))?.len();
            Ok(OutputRecord {
                path: p.display().to_string(),
                bytes,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = Manifest {
        tool: "tomosar",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        settings,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    write_text(path, &(text + "\n"))
}

fn raster_out(path: &Path, raster: &Array2<f64>, preview: bool, written: &mut Vec<PathBuf>) -> CliResult<()> {
    write_float_raster(path, raster)?;
    written.push(path.to_path_buf());
    if preview {
        let pgm = path.with_extension("pgm");
        write_pgm(&pgm, raster)?;
        written.push(pgm);
    }
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let config = RunConfig::load(a.config.as_deref())?;
    let geom = config.geometry.build()?;
    let truth = generate_scene(&config.scene)?;
    let snr = config.noise.snr_db.unwrap_or(f64::INFINITY);
    if snr.is_nan() {
        return Err(CliError::Usage("snr_db must be a number".into()));
    }
    let stack = simulate_stack(&truth, &geom, snr, config.noise.seed)?;
    write_stack(&a.out, &stack)?;
    let mut written = vec![a.out.clone()];
    let truth_path = a.truth.clone().unwrap_or_else(|| sibling(&a.out, "truth.hgtf"));
    raster_out(&truth_path, &truth, a.preview, &mut written)?;
    let manifest = a.manifest.clone().unwrap_or_else(|| sibling(&a.out, "manifest.json"));
    let outs: Vec<&Path> = written.iter().map(|p| p.as_path()).collect();
    let inputs: Vec<&Path> = a.config.iter().map(|p| p.as_path()).collect();
    write_manifest(&manifest, "simulate", &config, serde_json::json!({}), &inputs, &outs)
}

pub fn filter(a: &FilterArgs) -> CliResult<()> {
    let mut config = RunConfig::load(a.config.as_deref())?;
    let nl = &mut config.nonlocal;
    if let Some(v) = a.patch_radius {
        nl.patch_radius = v;
    }
    if let Some(v) = a.search_radius {
        nl.search_radius = v;
    }
    if let Some(v) = a.h {
        nl.h = v;
    }
    nl.validate()?;
    let stack = read_stack(&a.input)?;
    let tile = a.tiles.unwrap_or_else(|| stack.rows().max(stack.cols()).max(1));
    let out = filter_stack_tiled(&stack, &config.nonlocal, tile, None)?;
    write_stack(&a.out, &out.filtered)?;
    let mut written = vec![a.out.clone()];
    let enl_path = a.enl.clone().unwrap_or_else(|| sibling(&a.out, "enl.hgtf"));
    raster_out(&enl_path, &out.wmle.enl, a.preview, &mut written)?;
    let manifest = a.manifest.clone().unwrap_or_else(|| sibling(&a.out, "manifest.json"));
    let outs: Vec<&Path> = written.iter().map(|p| p.as_path()).collect();
    let mut inputs = vec![a.input.as_path()];
    inputs.extend(a.config.as_deref());
    write_manifest(&manifest, "filter", &config, &config.nonlocal, &inputs, &outs)
}

/// Scatterer table, one line per scatterer; `k` counts from the lowest
/// scatterer of the pixel. Values use the shortest exact decimal form.
pub fn scatterer_csv(inv: &ImageInversion, sin_incidence: f64) -> String {
    let mut out = String::from("row,col,k,elevation_m,height_m,amp_re,amp_im\n");
    for (pix, set) in inv.pixels.iter().enumerate() {
        let (r, c) = (pix / inv.cols, pix % inv.cols);
        for (k, s) in set.scatterers.iter().enumerate() {
            let _ = writeln!(
                out,
                "{r},{c},{k},{},{},{},{}",
                s.elevation,
                s.elevation * sin_incidence,
                s.amplitude.re,
                s.amplitude.im
            );
        }
    }
    out
}

pub fn invert(a: &InvertArgs) -> CliResult<()> {
    let config = RunConfig::load(a.config.as_deref())?;
    let stack = read_stack(&a.input)?;
    if a.config.is_some() && (config.scene.height, config.scene.width) != (stack.rows(), stack.cols()) {
        return Err(CliError::Data(format!(
            "stack is {}×{} but the configured scene is {}×{}",
            stack.rows(),
            stack.cols(),
            config.scene.height,
            config.scene.width
        )));
    }
    let grid = config.grid(&stack.geometry)?;
    let inverter = Inverter::new(build_steering_matrix(&stack.geometry, &grid)?, config.pipeline_options())?;
    let inv = inverter.invert_image(&stack)?;

    let mut written = Vec::new();
    raster_out(&with_suffix(&a.out_prefix, "height.hgtf"), &inv.top_height, a.preview, &mut written)?;
    raster_out(&with_suffix(&a.out_prefix, "ground.hgtf"), &inv.ground_height, a.preview, &mut written)?;
    let order_path = with_suffix(&a.out_prefix, "order.kmap");
    write_byte_raster(&order_path, &inv.order)?;
    written.push(order_path.clone());
    if a.preview {
        let pgm = order_path.with_extension("pgm");
        write_pgm(&pgm, &inv.order.mapv(f64::from))?;
        written.push(pgm);
    }
    let csv_path = with_suffix(&a.out_prefix, "scatterers.csv");
    write_text(&csv_path, &scatterer_csv(&inv, stack.geometry.incidence_angle.sin()))?;
    written.push(csv_path);

    let outs: Vec<&Path> = written.iter().map(|p| p.as_path()).collect();
    let mut inputs = vec![a.input.as_path()];
    inputs.extend(a.config.as_deref());
    write_manifest(
        &with_suffix(&a.out_prefix, "manifest.json"),
        "invert",
        &config,
        config.pipeline_options(),
        &inputs,
        &outs,
    )
}

/// Parses a scatterer table into per-pixel sets.
pub fn parse_scatterers(text: &str, rows: usize, cols: usize, path: &Path) -> CliResult<Vec<ScattererSet>> {
    let bad = |line: usize, what: &str| CliError::Data(format!("{}:{line}: {what}", path.display()));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "row,col,k,elevation_m,height_m,amp_re,amp_im" => {}
        _ => return Err(CliError::Usage(format!("{} is not a scatterer table", path.display()))),
    }
    let mut pixels = vec![ScattererSet::default(); rows * cols];
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(bad(i + 1, "expected 7 fields"));
        }
        let int = |j: usize| fields[j].trim().parse::<usize>().map_err(|_| bad(i + 1, "bad integer"));
        let num = |j: usize| fields[j].trim().parse::<f64>().map_err(|_| bad(i + 1, "bad number"));
        let (r, c) = (int(0)?, int(1)?);
        if r >= rows || c >= cols {
            return Err(bad(i + 1, "pixel outside the raster"));
        }
        pixels[r * cols + c].scatterers.push(Scatterer {
            elevation: num(3)?,
            amplitude: Complex64::new(num(5)?, num(6)?),
            grid_index: 0,
        });
    }
    for set in &mut pixels {
        set.scatterers.sort_by(|a, b| a.elevation.total_cmp(&b.elevation));
    }
    Ok(pixels)
}

fn parse_profile(spec: &str) -> CliResult<(SliceAxis, usize)> {
    let bad = || CliError::Usage(format!("profile must be row:INDEX or col:INDEX, got {spec:?}"));
    let (axis, index) = spec.split_once(':').ok_or_else(bad)?;
    let axis = match axis {
        "row" => SliceAxis::Row,
        "col" => SliceAxis::Col,
        _ => return Err(bad()),
    };
    Ok((axis, index.parse().map_err(|_| bad())?))
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let mut config = RunConfig::load(a.config.as_deref())?;
    if let Some(e) = a.erosion {
        config.eval.erosion = e;
    }
    if let Some(w) = a.bin_width {
        config.eval.bin_width = w;
    }
    let profile = a.profile.as_deref().map(parse_profile).transpose()?;
    let height = read_float_raster(&a.height)?;
    let truth = read_float_raster(&a.truth)?;
    let scene_dim = (config.scene.height, config.scene.width);
    if height.dim() != truth.dim() || height.dim() != scene_dim {
        return Err(CliError::Data(format!(
            "shape mismatch: estimate {:?}, truth {:?}, scene {:?}",
            height.dim(),
            truth.dim(),
            scene_dim
        )));
    }
    let regions = scene_regions(&config.scene)?;
    let stats = height_stats(&height, &truth, &regions, config.eval.erosion)?;
    let mut csv = String::from("region,truth_m,mean_m,std_m,mean_error_m,count,detection_rate\n");
    for s in &stats {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            s.region, s.truth, s.mean, s.std, s.mean_error, s.count, s.detection_rate
        );
    }
    write_text(&a.out, &csv)?;
    let mut written = vec![a.out.clone()];
    let mut inputs = vec![a.height.as_path(), a.truth.as_path()];

    if let Some(path) = &a.scatterers {
        let pixels = parse_scatterers(&read_text(path)?, scene_dim.0, scene_dim.1, path)?;
        let rho = rayleigh_resolution(&config.geometry.build()?)?;
        let hist = separation_histogram(&pixels, rho, config.eval.bin_width)?;
        let mut text = String::from("kappa_start,kappa_end,count\n");
        for (i, count) in hist.counts.iter().enumerate() {
            let _ = writeln!(text, "{},{},{count}", hist.bin_start(i), hist.bin_start(i + 1));
        }
        let hist_path = a.histogram.clone().unwrap_or_else(|| sibling(&a.out, "histogram.csv"));
        write_text(&hist_path, &text)?;
        written.push(hist_path);
        inputs.push(path);
        println!(
            "double scatterers: {}, super-resolved (kappa < 1): {:.4}, resolved: {:.4}",
            hist.total, hist.sr_fraction, hist.non_sr_fraction
        );
    }
    if let Some((axis, index)) = profile {
        let points = profile_slice(&height, &truth, axis, index)?;
        let mut text = String::from("position,height_m,truth_m\n");
        for p in points {
            let _ = writeln!(text, "{},{},{}", p.position, p.height, p.truth);
        }
        let path = a.profile_out.clone().unwrap_or_else(|| sibling(&a.out, "profile.csv"));
        write_text(&path, &text)?;
        written.push(path);
    }
    inputs.extend(a.config.as_deref());
    let outs: Vec<&Path> = written.iter().map(|p| p.as_path()).collect();
    let manifest = a.manifest.clone().unwrap_or_else(|| sibling(&a.out, "manifest.json"));
    write_manifest(&manifest, "evaluate", &config, &config.eval, &inputs, &outs)
}

/// `sigma_s0,c0,sigma_s` for the given flags.
pub fn crlb(a: &CrlbArgs) -> CliResult<String> {
    let query = AccuracyQuery {
        wavelength: a.wavelength,
        range: a.range,
        sigma_b: a.sigma_b,
        n: a.n,
        snr: snr_from_db(a.snr_db),
        kappa: a.kappa,
        delta_phi: a.delta_phi,
    };
    let single = crlb_single(&query)?;
    let c0 = interference_factor(a.kappa, a.delta_phi)?;
    Ok(format!("{single},{c0},{}", c0 * single))
}
