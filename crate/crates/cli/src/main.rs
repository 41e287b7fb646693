mod config;
mod overlay;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use packstruct::detections::parse_image_detections;
use packstruct::evaluation::{evaluate, load_dataset, render_table, EvalError, EvalReport};
use packstruct::pipeline::{recognize_image, ResultDocument, UnitStatus};
use packstruct::synthgen::SceneSpec;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_PARSE: u8 = 2;
const EXIT_PAIRING: u8 = 3;
const EXIT_INVARIANT: u8 = 4;
const EXIT_OTHER: u8 = 1;

#[derive(Parser)]
#[command(name = "packstruct", version, about = "Packaging structure recognition for transport units")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// JSON run configuration; flags below override its values
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "F")]
    iou_threshold: Option<f64>,
    #[arg(long, global = true, value_name = "F")]
    delta1: Option<f64>,
    #[arg(long, global = true, value_name = "F")]
    delta2: Option<f64>,
    /// Count a pallet category mismatch as a recognition error
    #[arg(long, global = true)]
    strict_pallet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Recognize packaging structures in detection documents
    Recognize {
        /// `*_det.json` detection documents
        detections: Vec<PathBuf>,
    },
    /// Generate synthetic detection and annotation documents
    Generate {
        /// Scene spec JSON
        spec: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
    /// Score result documents against annotations
    Evaluate {
        annotations: PathBuf,
        results: PathBuf,
    },
    /// Render an SVG overlay of a result document
    Visualize {
        detections: PathBuf,
        result: PathBuf,
        /// Output file; defaults to `<out>/<image id>_overlay.svg`
        svg: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait ExitCodeExt<T> {
    fn code(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitCodeExt<T> for Result<T, E> {
    fn code(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code,
            error: e.into(),
        })
    }
}

fn load_config(args: &GlobalArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let bytes = std::fs::read(path)
                .with_context(|| format!("reading config {}", path.display()))
                .code(EXIT_PARSE)?;
            serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing config {}", path.display()))
                .code(EXIT_PARSE)?
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(t) = args.iou_threshold {
        cfg.iou_threshold = t;
    }
    if let Some(d) = args.delta1 {
        cfg.delta1 = d;
    }
    if let Some(d) = args.delta2 {
        cfg.delta2 = d;
    }
    cfg.strict_pallet |= args.strict_pallet;
    cfg.validate().map_err(|m| anyhow!("invalid configuration: {m}")).code(EXIT_PARSE)?;
    Ok(cfg)
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Prints a line to stdout; a closed pipe is not an error.
fn say(line: std::fmt::Arguments) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn result_name(input: &Path) -> String {
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("result");
    format!("{}_res.json", stem.strip_suffix("_det").unwrap_or(stem))
}

fn read_detections(path: &Path) -> Result<packstruct::detections::ImageDetections, Failure> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .code(EXIT_PARSE)?;
    parse_image_detections(&bytes)
        .map_err(|e| anyhow!("{}: {e}", path.display()))
        .code(EXIT_PARSE)
}

fn cmd_recognize(cfg: &RunConfig, inputs: &[PathBuf]) -> Result<(), Failure> {
    let pipeline = cfg.pipeline();
    let mut unreadable = 0;
    for path in inputs {
        let dets = match read_detections(path) {
            Ok(d) => d,
            Err(f) => {
                eprintln!("error: {:#}", f.error);
                unreadable += 1;
                continue;
            }
        };
        let doc = ResultDocument::from_recognition(&recognize_image(&dets, &pipeline));
        let out = cfg.out.join(result_name(path));
        write_atomic(&out, doc.to_json().as_bytes()).code(EXIT_OTHER)?;
        let ok = doc.units.iter().filter(|u| u.status == UnitStatus::Ok).count();
        let packages: u64 = doc.units.iter().filter_map(|u| u.total).sum();
        say(format_args!(
            "{}: {} units, {} recognized, {} failed, {} packages",
            doc.image_id,
            doc.units.len(),
            ok,
            doc.units.len() - ok,
            packages
        ));
    }
    if unreadable > 0 {
        return Err(anyhow!("{unreadable} of {} inputs could not be read", inputs.len())).code(EXIT_PARSE);
    }
    Ok(())
}

fn cmd_generate(cfg: &RunConfig, spec_path: &Path, count: u64) -> Result<(), Failure> {
    let bytes = std::fs::read(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))
        .code(EXIT_PARSE)?;
    let spec: SceneSpec = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing scene spec {}", spec_path.display()))
        .code(EXIT_PARSE)?;
    let mut failed = 0;
    for k in 0..count {
        match spec.generate(k, cfg.seed) {
            Ok(scene) => {
                let det = cfg.out.join(format!("scene_{k}_det.json"));
                let ann = cfg.out.join(format!("scene_{k}_ann.json"));
                write_atomic(&det, scene.detections.to_json().as_bytes()).code(EXIT_OTHER)?;
                write_atomic(&ann, scene.annotation.to_json().as_bytes()).code(EXIT_OTHER)?;
                let units = scene.annotation.units.len();
                say(format_args!("scene_{k}: {units} units"));
            }
            Err(e) => {
                eprintln!("error: scene {k}: {e}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(anyhow!("{failed} of {count} scenes could not be generated")).code(EXIT_PARSE);
    }
    Ok(())
}

/// Cross-checks the report against the inputs it was built from.
fn check_report(report: &EvalReport, pairs: &[(packstruct::detections::Annotation, ResultDocument)]) -> anyhow::Result<()> {
    let annotated: usize = pairs.iter().map(|(a, _)| a.units.len()).sum();
    let (tp, _, fn_) = report.extraction_totals;
    if tp + fn_ != annotated {
        return Err(anyhow!("matched plus missed units ({}) differ from annotated units ({annotated})", tp + fn_));
    }
    let in_range = |v: f64| (0.0..=1.0).contains(&v);
    if !(in_range(report.precision) && in_range(report.recall) && in_range(report.mean_error)) {
        return Err(anyhow!("metric out of [0, 1]"));
    }
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, annotations: &Path, results: &Path) -> Result<(), Failure> {
    let pairs = load_dataset(annotations, results).map_err(|e| {
        let code = match e {
            EvalError::Read { .. } => EXIT_PARSE,
            _ => EXIT_PAIRING,
        };
        Failure {
            code,
            error: e.into(),
        }
    })?;
    if pairs.is_empty() {
        return Err(anyhow!("no annotated images in {}", annotations.display())).code(EXIT_PAIRING);
    }
    let report = evaluate(&pairs, &cfg.eval()).code(EXIT_INVARIANT)?;
    check_report(&report, &pairs).code(EXIT_INVARIANT)?;
    let table = render_table(&report);
    let json = serde_json::to_string_pretty(&report).code(EXIT_INVARIANT)?;
    write_atomic(&cfg.out.join("report.json"), json.as_bytes()).code(EXIT_OTHER)?;
    write_atomic(&cfg.out.join("report.txt"), table.as_bytes()).code(EXIT_OTHER)?;
    let _ = std::io::stdout().lock().write_all(table.as_bytes());
    Ok(())
}

fn cmd_visualize(cfg: &RunConfig, detections: &Path, result: &Path, svg: Option<&Path>) -> Result<(), Failure> {
    let dets = read_detections(detections)?;
    let bytes = std::fs::read(result)
        .with_context(|| format!("reading {}", result.display()))
        .code(EXIT_PARSE)?;
    let doc = ResultDocument::parse(&bytes)
        .with_context(|| format!("parsing {}", result.display()))
        .code(EXIT_PARSE)?;
    if doc.image_id != dets.image.id {
        return Err(anyhow!(
            "image ids differ: detections {:?}, result {:?}",
            dets.image.id,
            doc.image_id
        ))
        .code(EXIT_PAIRING);
    }
    let rec = recognize_image(&dets, &cfg.pipeline());
    let rendered = overlay::render(dets.image.width, dets.image.height, &doc, &rec).code(EXIT_INVARIANT)?;
    let path = match svg {
        Some(p) => p.to_path_buf(),
        None => cfg.out.join(format!("{}_overlay.svg", dets.image.id)),
    };
    write_atomic(&path, rendered.as_bytes()).code(EXIT_OTHER)?;
    say(format_args!("{}", path.display()));
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.global)?;
    match &cli.command {
        Command::Recognize { detections } => cmd_recognize(&cfg, detections),
        Command::Generate { spec, count } => cmd_generate(&cfg, spec, *count),
        Command::Evaluate { annotations, results } => cmd_evaluate(&cfg, annotations, results),
        Command::Visualize { detections, result, svg } => {
            cmd_visualize(&cfg, detections, result, svg.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("PACKSTRUCT_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
