//! Command-line front end. `pipeline` runs every stage; the other subcommands run
//! one stage each and exchange the same files, so a staged run reproduces the
//! one-shot output byte for byte.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::features::classify::{cross_validate, SoftmaxConfig, SoftmaxModel, DEFAULT_CV_SEED};
use crate::features::{read_features_csv, FeatureRow};
use crate::ingest::{self, landmarks_to_json, canonical_to_json, write_pfm, FrameMesh};
use crate::model::{Anchor, PipelineConfig, ThresholdMode, VideoSequence};
use crate::pipeline::{
    create_dir, read_fields, run_pipeline, write_bytes, write_canonical_frames, write_feature_file, write_fields,
    write_overlays, write_pipeline_output, DescriptorChoice, PipelineError, PipelineInputs, Prepared, Stage,
};
use crate::synthetic;

/// Exit status for command-line usage errors.
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "facegps", version, about = "Facial displacement fields on a canonical face mesh")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every stage and write all outputs.
    Pipeline(PipelineArgs),
    /// Warp frames onto the canonical raster.
    Warp(WarpArgs),
    /// Sparse flow on canonical frames.
    Flow(FlowArgs),
    /// Spatial, temporal and descriptor smoothing of raw fields.
    Smooth(SmoothArgs),
    /// Draw smoothed fields on the original frames.
    Overlay(OverlayArgs),
    /// Per-sequence feature vectors from smoothed fields.
    Features(FeaturesArgs),
    /// Softmax classifier over a features table.
    Classify(ClassifyArgs),
    /// Write a synthetic demo clip with landmarks and a canonical model.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct Tuning {
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    anchor: Option<Anchor>,
    #[arg(long)]
    spectral_k: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    subdivision: Option<usize>,
    #[arg(long)]
    overlay_scale: Option<f64>,
    #[arg(long, value_enum)]
    threshold: Option<ThresholdMode>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct DescriptorArgs {
    /// Descriptor set JSON.
    #[arg(long, conflicts_with = "uniform_descriptors")]
    descriptors: Option<PathBuf>,
    /// Use M unit-weight descriptors spread over the face instead of a file (default 7).
    #[arg(long, value_name = "M")]
    uniform_descriptors: Option<usize>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Frame directory or .y4m file.
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    landmarks: PathBuf,
    #[arg(long)]
    canonical: PathBuf,
    #[command(flatten)]
    descriptors: DescriptorArgs,
    #[command(flatten)]
    tuning: Tuning,
    /// Also write the warped canonical frames.
    #[arg(long)]
    emit_canonical: bool,
    /// Add a magnitude heat layer under the arrows.
    #[arg(long)]
    heat: bool,
    /// Also write the overlays as overlay.y4m.
    #[arg(long)]
    y4m: bool,
    #[arg(long, default_value = "sequence")]
    sequence_id: String,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct WarpArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    landmarks: PathBuf,
    #[arg(long)]
    canonical: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FlowArgs {
    /// Directory of canonical frames, as written by `warp`.
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    canonical: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SmoothArgs {
    /// Directory of raw_*.csv fields.
    #[arg(long)]
    fields: PathBuf,
    #[arg(long)]
    canonical: PathBuf,
    #[command(flatten)]
    descriptors: DescriptorArgs,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OverlayArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    landmarks: PathBuf,
    #[arg(long)]
    canonical: PathBuf,
    /// Directory of smoothed_*.csv fields.
    #[arg(long)]
    fields: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long)]
    heat: bool,
    #[arg(long)]
    y4m: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    /// Directories of smoothed_*.csv fields, one per sequence.
    #[arg(long, required = true, num_args = 1..)]
    fields: Vec<PathBuf>,
    #[arg(long)]
    canonical: PathBuf,
    #[command(flatten)]
    descriptors: DescriptorArgs,
    #[command(flatten)]
    tuning: Tuning,
    /// Row name when a single directory is given; otherwise the directory names are used.
    #[arg(long)]
    sequence_id: Option<String>,
    #[arg(long)]
    label: Option<String>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// Labelled features table.
    #[arg(long)]
    features: PathBuf,
    /// Rows to predict; without it, out-of-fold predictions from cross-validation.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = DEFAULT_CV_SEED)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long = "frame-count", default_value_t = 4)]
    frame_count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<(), PipelineError> {
    let threads = match &command {
        Command::Pipeline(a) => a.tuning.threads,
        Command::Warp(a) => a.tuning.threads,
        Command::Flow(a) => a.tuning.threads,
        Command::Smooth(a) => a.tuning.threads,
        Command::Overlay(a) => a.tuning.threads,
        Command::Features(a) => a.tuning.threads,
        Command::Classify(a) => a.threads,
        Command::Synth(_) => None,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(PipelineError::input(Stage::Config, "--threads must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| PipelineError::input(Stage::Config, e))?;
    pool.install(|| match command {
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Warp(a) => cmd_warp(a),
        Command::Flow(a) => cmd_flow(a),
        Command::Smooth(a) => cmd_smooth(a),
        Command::Overlay(a) => cmd_overlay(a),
        Command::Features(a) => cmd_features(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Synth(a) => cmd_synth(a),
    })
}

fn resolve_config(t: &Tuning) -> Result<PipelineConfig, PipelineError> {
    let mut c = match &t.config {
        Some(p) => ingest::load_config(p).map_err(|e| PipelineError::input(Stage::Config, e))?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = t.anchor {
        c.anchor = v;
    }
    if let Some(v) = t.spectral_k {
        c.spectral_modes = v;
    }
    if let Some(v) = t.gamma {
        c.mks_gamma = Some(v);
    }
    if let Some(v) = t.subdivision {
        c.subdivision_depth = v;
    }
    if let Some(v) = t.overlay_scale {
        c.overlay_scale = v;
    }
    if let Some(v) = t.threshold {
        c.wavelet_threshold_mode = v;
    }
    c.validate().map_err(|e| PipelineError::input(Stage::Config, e))?;
    Ok(c)
}

const DEFAULT_UNIFORM_DESCRIPTORS: usize = 7;

fn descriptor_choice(d: &DescriptorArgs) -> Result<DescriptorChoice, PipelineError> {
    match (&d.descriptors, d.uniform_descriptors) {
        (Some(p), _) => ingest::load_descriptors(p)
            .map(DescriptorChoice::File)
            .map_err(|e| PipelineError::input(Stage::Ingest, e)),
        (None, m) => Ok(DescriptorChoice::Uniform(m.unwrap_or(DEFAULT_UNIFORM_DESCRIPTORS))),
    }
}

fn prepare(tuning: &Tuning, canonical: &Path, descriptors: Option<&DescriptorArgs>) -> Result<Prepared, PipelineError> {
    let config = resolve_config(tuning)?;
    let model = crate::pipeline::load_canonical(canonical)?;
    let choice = match descriptors {
        Some(d) => descriptor_choice(d)?,
        None => DescriptorChoice::Uniform(1),
    };
    Prepared::new(config, model, choice)
}

fn load_video(path: &Path) -> Result<VideoSequence, PipelineError> {
    ingest::load_frames(path).map_err(|e| PipelineError::input(Stage::Ingest, e))
}

fn load_meshes(path: &Path) -> Result<Vec<FrameMesh>, PipelineError> {
    ingest::load_landmarks(path).map_err(|e| PipelineError::input(Stage::Ingest, e))
}

fn cmd_pipeline(a: PipelineArgs) -> Result<(), PipelineError> {
    let prepared = prepare(&a.tuning, &a.canonical, Some(&a.descriptors))?;
    let inputs = PipelineInputs {
        frames: load_video(&a.frames)?,
        meshes: load_meshes(&a.landmarks)?,
        prepared,
        sequence_id: a.sequence_id,
        label: a.label,
        emit_canonical: a.emit_canonical,
        heat: a.heat,
        y4m: a.y4m,
    };
    let output = run_pipeline(&inputs)?;
    write_pipeline_output(&a.out, &inputs, &output)
}

fn cmd_warp(a: WarpArgs) -> Result<(), PipelineError> {
    let prepared = prepare(&a.tuning, &a.canonical, None)?;
    let frames = prepared.warp(&load_video(&a.frames)?, &load_meshes(&a.landmarks)?)?;
    write_canonical_frames(&a.out, &frames)
}

fn cmd_flow(a: FlowArgs) -> Result<(), PipelineError> {
    let prepared = prepare(&a.tuning, &a.canonical, None)?;
    let frames = load_video(&a.frames)?;
    let raw = prepared.flow(frames.frames())?;
    write_fields(&a.out, "raw", &raw, &prepared.raw_comments())
}

fn cmd_smooth(a: SmoothArgs) -> Result<(), PipelineError> {
    let prepared = prepare(&a.tuning, &a.canonical, Some(&a.descriptors))?;
    let raw = read_fields(&a.fields, "raw", Stage::Ingest)?;
    let smoothed: Vec<_> = prepared.smooth(&raw)?.into_iter().map(|s| s.field).collect();
    write_fields(&a.out, "smoothed", &smoothed, &prepared.smoothed_comments())
}

fn cmd_overlay(a: OverlayArgs) -> Result<(), PipelineError> {
    let prepared = prepare(&a.tuning, &a.canonical, None)?;
    let smoothed = read_fields(&a.fields, "smoothed", Stage::Ingest)?;
    let overlays = prepared.overlay(&load_video(&a.frames)?, &load_meshes(&a.landmarks)?, &smoothed, a.heat)?;
    write_overlays(&a.out, &overlays, a.y4m)
}

fn cmd_features(a: FeaturesArgs) -> Result<(), PipelineError> {
    let prepared = prepare(&a.tuning, &a.canonical, Some(&a.descriptors))?;
    let single = a.fields.len() == 1;
    let mut rows = Vec::new();
    for dir in &a.fields {
        let smoothed = read_fields(dir, "smoothed", Stage::Ingest)?;
        let sequence = match (&a.sequence_id, single) {
            (Some(id), true) => id.clone(),
            _ if single => "sequence".to_string(),
            _ => dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned()),
        };
        rows.push(FeatureRow {
            sequence,
            values: prepared.features(&smoothed)?,
            label: a.label.clone(),
        });
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_feature_file(&a.out, &prepared, &rows)
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<FeatureRow>), PipelineError> {
    let file = fs::File::open(path).map_err(|e| PipelineError::input(Stage::Ingest, format!("{}: {e}", path.display())))?;
    read_features_csv(file).map_err(|e| PipelineError::input(Stage::Ingest, format!("{}: {e}", path.display())))
}

fn labelled(rows: &[FeatureRow], path: &Path) -> Result<Vec<String>, PipelineError> {
    rows.iter()
        .map(|r| {
            r.label.clone().ok_or_else(|| {
                PipelineError::input(
                    Stage::Classify,
                    format!("{}: sequence `{}` has no label", path.display(), r.sequence),
                )
            })
        })
        .collect()
}

fn cmd_classify(a: ClassifyArgs) -> Result<(), PipelineError> {
    let (names, train) = read_table(&a.features)?;
    let labels = labelled(&train, &a.features)?;
    let x: Vec<Vec<f64>> = train.iter().map(|r| r.values.clone()).collect();
    let cfg = SoftmaxConfig::default();
    let classify = |e| PipelineError::input(Stage::Classify, e);
    // (sequence, predicted label, per-class scores)
    type Prediction = (String, String, Vec<f64>);
    let (classes, predicted): (Vec<String>, Vec<Prediction>) = match &a.test {
        None => {
            let cv = cross_validate(&x, &labels, a.folds, a.seed, &cfg).map_err(classify)?;
            eprintln!("cross-validated accuracy: {:.4} ({} folds)", cv.accuracy, a.folds);
            let rows = train
                .iter()
                .zip(cv.predictions)
                .zip(cv.scores)
                .map(|((r, p), s)| (r.sequence.clone(), p, s))
                .collect();
            (cv.classes, rows)
        }
        Some(test_path) => {
            let (test_names, test) = read_table(test_path)?;
            if test_names != names {
                return Err(PipelineError::input(
                    Stage::Classify,
                    format!("{}: feature columns differ from the training table", test_path.display()),
                ));
            }
            let model = SoftmaxModel::train(&x, &labels, &cfg).map_err(classify)?;
            let rows = test
                .iter()
                .map(|r| (r.sequence.clone(), model.predict(&r.values).to_string(), model.scores(&r.values)))
                .collect();
            (model.classes.clone(), rows)
        }
    };
    create_dir(&a.out)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["sequence".to_string(), "predicted".to_string()];
    header.extend(classes.iter().map(|c| format!("score_{c}")));
    let path = a.out.join("predictions.csv");
    let csv_error = |e: csv::Error| PipelineError::input(Stage::Output, format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(csv_error)?;
    for (seq, pred, scores) in predicted {
        let mut rec = vec![seq, pred];
        rec.extend(scores.iter().map(|s| s.to_string()));
        w.write_record(&rec).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::input(Stage::Output, e.to_string()))?;
    write_bytes(&path, &bytes)
}

fn cmd_synth(a: SynthArgs) -> Result<(), PipelineError> {
    if a.frame_count < 2 || a.size < 32 {
        return Err(PipelineError::input(Stage::Config, "synth needs --frame-count >= 2 and --size >= 32"));
    }
    let clip = synthetic::demo_clip(a.size, a.frame_count, a.seed);
    let frames_dir = a.out.join("frames");
    create_dir(&frames_dir)?;
    for (i, f) in clip.frames.iter().enumerate() {
        let mut buf = Vec::new();
        write_pfm(&mut buf, f).map_err(|e| PipelineError::input(Stage::Output, e))?;
        write_bytes(&frames_dir.join(format!("frame_{i:06}.pfm")), &buf)?;
    }
    let meshes: Vec<FrameMesh> = clip
        .meshes
        .iter()
        .map(|m| FrameMesh {
            width: a.size,
            height: a.size,
            mesh: m.clone(),
        })
        .collect();
    write_bytes(&a.out.join("landmarks.json"), landmarks_to_json(&meshes).as_bytes())?;
    write_bytes(&a.out.join("canonical.json"), canonical_to_json(&clip.canonical).as_bytes())?;
    let _ = writeln!(std::io::stderr(), "wrote {} frames to {}", a.frame_count, a.out.display());
    Ok(())
}
