//! Command-line interface. Every command except `serve` runs against the
//! configured store and prints JSON on standard output.
//!
//! Exit codes: 0 success, 2 usage or validation error, 1 runtime error.

use crate::app::App;
use crate::backend::build_pipeline;
use crate::config::{BackendKind, ConfigError, ServiceConfig};
use clap::{Args, Parser, Subcommand};
use presenzia_core::attendance::AttendanceError;
use presenzia_core::directory::{parse_employee_csv, DirectoryError, EmployeeId, EmployeeRecord, EmployeeRole, Principal, Role};
use presenzia_core::evaluation::{
    ablation_scored, emit_report, load_pairs_file, render_report, score_pairs, AblationConfig, DatasetError,
    DatasetManifest, EvalConfig, Report, ReportFormat, SubsetSize,
};
use presenzia_core::gallery::parse_gallery_jsonl;
use presenzia_core::imaging::{decode_frame, RgbImage};
use presenzia_core::metric::{calibrate_distances, parse_labeled_pairs_jsonl, MetricError};
use presenzia_core::pipeline::recognize_frame;
use presenzia_core::synthetic::{write_benchmark, SyntheticSpec};
use presenzia_core::time::Timestamp;
use presenzia_core::tracking::{archive_to_jsonl, ArchiveFilter, SessionId};
use presenzia_core::RecognitionConfig;
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Parser)]
#[command(name = "presenzia", version, about = "Face-recognition attendance service")]
pub struct Cli {
    /// Config file (TOML, or JSON by extension). Defaults to $PRESENZIA_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Store path, overriding config and $PRESENZIA_STORE.
    #[arg(long, global = true)]
    pub store: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve {
        /// Listen address, overriding config and $PRESENZIA_ADDR.
        #[arg(long)]
        addr: Option<String>,
    },
    /// Add an employee enrolled from one or more face images.
    Enroll {
        #[arg(long)]
        id: String,
        #[arg(long)]
        name: String,
        #[arg(long)]
        email: String,
        #[arg(long, default_value = "employee")]
        role: String,
        #[arg(long, num_args = 1.., required = true)]
        images: Vec<PathBuf>,
    },
    /// Detect and identify every face in an image against the stored gallery.
    Identify {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Pick the verification threshold maximizing accuracy on labeled pairs.
    ///
    /// Without --lfw-root the pairs file is JSON lines of
    /// `{"a":[..],"b":[..],"same":bool}` or `{"distance":d,"same":bool}`.
    /// With --lfw-root it is a pair list over that image directory.
    Calibrate {
        #[arg(long)]
        pairs_file: PathBuf,
        #[arg(long)]
        lfw_root: Option<PathBuf>,
        #[arg(long, default_value = "reference")]
        backend: String,
    },
    /// Pair-verification benchmark, or the subset-size ablation when
    /// --subset-size is given.
    Evaluate(EvaluateArgs),
    /// Write the archive as JSON lines (auditor view).
    ExportArchive {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        employee: Option<String>,
        #[arg(long)]
        session: Option<String>,
        /// Inclusive lower bound, epoch milliseconds.
        #[arg(long)]
        from: Option<i64>,
        /// Exclusive upper bound, epoch milliseconds.
        #[arg(long)]
        to: Option<i64>,
    },
    /// Bulk-add employees from an `id,name,email,role` CSV. Each employee is
    /// enrolled from the images in `<images-dir>/<id>/`.
    ImportEmployees {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        images_dir: PathBuf,
    },
    /// Write the gallery as JSON lines.
    ExportGallery {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replace gallery entries from a JSON-lines file.
    ImportGallery {
        #[arg(long)]
        file: PathBuf,
    },
    /// Issue an API token.
    IssueToken {
        #[arg(long)]
        role: String,
        #[arg(long)]
        principal: String,
    },
    /// Print the OpenAPI document for the REST surface.
    Openapi {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded synthetic image dataset and pair list.
    SynthDataset {
        #[arg(long)]
        out: PathBuf,
        /// Use the lookalike-family preset used by the ablation test.
        #[arg(long)]
        noisy_clusters: bool,
        #[arg(long)]
        identities: Option<usize>,
        #[arg(long)]
        images_per_identity: Option<u32>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        same: usize,
        #[arg(long, default_value_t = 50)]
        different: usize,
        #[arg(long, default_value_t = 1)]
        pair_seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Dataset root: one directory per identity, images `<Name>_<NNNN>.jpg|png`.
    #[arg(long)]
    pub lfw_root: PathBuf,
    #[arg(long)]
    pub pairs_file: PathBuf,
    #[arg(long, default_value = "reference")]
    pub backend: String,
    /// Subset sizes (counts or `full`), comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    pub subset_size: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Seed for the holdout split and subset sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub folds: usize,
    #[arg(long, default_value_t = 0.1)]
    pub holdout: f64,
    /// Minimum number of pairs for a verification run.
    #[arg(long)]
    pub min_pairs: Option<usize>,
    #[arg(long)]
    pub no_cache: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    pub format: String,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit 2.
    Validation(String),
    /// Failure while running: exit 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => runtime(e),
            _ => validation(e),
        }
    }
}

impl From<AttendanceError> for CliError {
    fn from(e: AttendanceError) -> Self {
        use presenzia_core::tracking::TrackingError as T;
        match &e {
            AttendanceError::Directory(DirectoryError::Validation(_) | DirectoryError::Csv { .. })
            | AttendanceError::Directory(DirectoryError::AlreadyExists(_) | DirectoryError::NotFound(_))
            | AttendanceError::Directory(DirectoryError::EnrollmentFailed(_))
            | AttendanceError::Tracking(T::InvalidConfig(_) | T::InvalidSpan(_))
            | AttendanceError::Gallery(presenzia_core::gallery::GalleryError::InvalidConfig(_)) => validation(e),
            _ => runtime(e),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Parse { .. }
            | DatasetError::MissingImage { .. }
            | DatasetError::TooFewPairs { .. }
            | DatasetError::InvalidConfig(_) => validation(e),
            _ => runtime(e),
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn read_image(path: &Path) -> Result<RgbImage, CliError> {
    let bytes = std::fs::read(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    decode_frame(&bytes).map_err(|e| validation(format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| runtime(format!("{}: {e}", p.display()))),
        None => out.write_all(text.as_bytes()).map_err(runtime),
    }
}

fn print_json(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<(), CliError> {
    let s = serde_json::to_string_pretty(value).map_err(runtime)?;
    writeln!(out, "{s}").map_err(runtime)
}

fn backend_config(cfg: &ServiceConfig, backend: &str) -> Result<crate::config::BackendConfig, CliError> {
    let kind: BackendKind = backend.parse()?;
    let mut b = cfg.backend.clone();
    b.detector = kind;
    b.embedder = kind;
    Ok(b)
}

fn open_app(cfg: &ServiceConfig) -> Result<App, CliError> {
    App::open(cfg.clone()).map_err(runtime)
}

/// Images in `dir`, sorted by file name.
fn images_in(dir: &Path) -> Result<Vec<RgbImage>, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| runtime(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "jpg" | "jpeg" | "png"))
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| read_image(p)).collect()
}

/// Parse `args` (including the program name) and run, writing JSON to `out`.
pub fn run_with<I, T>(args: I, env: impl Fn(&str) -> Option<String>, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                write!(out, "{e}").map_err(runtime)?;
                return Ok(());
            }
            return Err(CliError::Validation(e.render().to_string()));
        }
    };
    let mut cfg = ServiceConfig::load(cli.config.as_deref(), &env)?;
    if let Some(s) = cli.store {
        cfg.store = s;
        cfg.validate()?;
    }
    let admin = Principal::admin();

    match cli.command {
        Command::Serve { addr } => {
            if let Some(a) = addr {
                cfg.listen = a;
                cfg.validate()?;
            }
            let app = Arc::new(open_app(&cfg)?);
            if let Some(token) = app.bootstrap_admin().map_err(runtime)? {
                // Shown once; only its digest is stored.
                eprintln!("initial admin token: {token}");
            }
            let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
            rt.block_on(crate::server::run(app)).map_err(runtime)
        }
        Command::Enroll { id, name, email, role, images } => {
            let role: EmployeeRole = role.parse().map_err(validation)?;
            let imgs = images.iter().map(|p| read_image(p)).collect::<Result<Vec<_>, _>>()?;
            let app = open_app(&cfg)?;
            let rec = app.attendance.add_employee(&admin, EmployeeRecord::new(id, name, email, role), &imgs, Timestamp::now())?;
            print_json(out, &rec)
        }
        Command::Identify { image, k, tau } => {
            let img = read_image(&image)?;
            let rc = RecognitionConfig { k: k.unwrap_or(cfg.recognition.k), tau: tau.unwrap_or(cfg.recognition.tau) };
            rc.validate().map_err(validation)?;
            let app = open_app(&cfg)?;
            let faces = app
                .attendance
                .with_state(|s| recognize_frame(&img, app.attendance.pipeline(), &s.gallery, &rc))
                .map_err(runtime)?;
            print_json(out, &json!({ "faces": faces, "k": rc.k, "tau": rc.tau }))
        }
        Command::Calibrate { pairs_file, lfw_root, backend } => {
            let samples: Vec<(f64, bool)> = match lfw_root {
                None => parse_labeled_pairs_jsonl(&read_text(&pairs_file)?)
                    .map_err(validation)?
                    .iter()
                    .map(|s| s.scored())
                    .collect(),
                Some(root) => {
                    let manifest = DatasetManifest::scan(&root)?;
                    let pairs = load_pairs_file(&manifest, &pairs_file)?;
                    let pipeline = build_pipeline(&backend_config(&cfg, &backend)?, cfg.detection).map_err(runtime)?;
                    score_pairs(&pairs, &pipeline, true)?.samples
                }
            };
            let result = match calibrate_distances(&samples) {
                Ok(r) => r,
                Err(MetricError::DegenerateCalibration { trivial, .. }) => {
                    eprintln!("warning: all pairs carry one label; reporting the trivial threshold");
                    trivial
                }
                Err(e) => return Err(validation(e)),
            };
            print_json(out, &result)
        }
        Command::Evaluate(a) => evaluate(&cfg, a, out),
        Command::ExportArchive { out: path, employee, session, from, to } => {
            let app = open_app(&cfg)?;
            let filter = ArchiveFilter {
                employee_id: employee.map(EmployeeId::new),
                session_id: session.map(SessionId),
                from: from.map(Timestamp),
                to: to.map(Timestamp),
            };
            let records = app.attendance.query_archive(&Principal::auditor(), &filter)?;
            write_out(path.as_deref(), &archive_to_jsonl(&records), out)?;
            if path.is_some() {
                print_json(out, &json!({ "records": records.len() }))?;
            }
            Ok(())
        }
        Command::ImportEmployees { csv, images_dir } => {
            let records = parse_employee_csv(&read_text(&csv)?).map_err(validation)?;
            let mut rows = Vec::with_capacity(records.len());
            for r in records {
                let imgs = images_in(&images_dir.join(r.employee_id.as_str()))?;
                rows.push((r, imgs));
            }
            let app = open_app(&cfg)?;
            let now = Timestamp::now();
            let mut imported = Vec::new();
            let mut failed = Vec::new();
            for (r, imgs) in rows {
                let id = r.employee_id.clone();
                match app.attendance.add_employee(&admin, r, &imgs, now) {
                    Ok(rec) => imported.push(rec.employee_id),
                    Err(e) => failed.push(json!({ "employee_id": id, "error": e.to_string() })),
                }
            }
            print_json(out, &json!({ "imported": imported, "failed": failed }))?;
            if failed.is_empty() {
                Ok(())
            } else {
                Err(validation(format!("{} employee(s) could not be imported", failed.len())))
            }
        }
        Command::ExportGallery { out: path } => {
            let app = open_app(&cfg)?;
            let text = app.attendance.export_gallery(&admin)?;
            write_out(path.as_deref(), &text, out)
        }
        Command::ImportGallery { file } => {
            let entries = parse_gallery_jsonl(&read_text(&file)?).map_err(validation)?;
            let app = open_app(&cfg)?;
            let n = app.attendance.import_gallery(&admin, entries)?;
            print_json(out, &json!({ "imported": n }))
        }
        Command::IssueToken { role, principal } => {
            let role: Role = role.parse().map_err(validation)?;
            let app = open_app(&cfg)?;
            if role == Role::Employee {
                app.attendance.get_employee(&admin, &EmployeeId::new(principal.clone()))?;
            }
            let token = app.issue_token(&Principal::new(principal.clone(), role)).map_err(runtime)?;
            print_json(out, &json!({ "token": token, "principal_id": principal, "role": role }))
        }
        Command::Openapi { out: path } => write_out(path.as_deref(), &crate::openapi::render(), out),
        Command::SynthDataset { out: dir, noisy_clusters, identities, images_per_identity, seed, same, different, pair_seed } => {
            let mut spec = if noisy_clusters { SyntheticSpec::noisy_clusters(seed) } else { SyntheticSpec { seed, ..Default::default() } };
            if let Some(n) = identities {
                spec.identities = n;
            }
            if let Some(n) = images_per_identity {
                spec.images_per_identity = n;
            }
            if spec.identities < 2 || spec.images_per_identity < 2 {
                return Err(validation("need at least two identities with two images each"));
            }
            let (manifest, pairs) = write_benchmark(&spec, &dir, same, different, pair_seed)?;
            print_json(
                out,
                &json!({
                    "images_root": manifest.root,
                    "pairs_file": pairs,
                    "identities": manifest.identity_count,
                    "images": manifest.image_count,
                    "pairs": same + different,
                }),
            )
        }
    }
}

fn evaluate(cfg: &ServiceConfig, a: EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let format: ReportFormat = a.format.parse()?;
    let sizes = a.subset_size.iter().map(|s| s.parse::<SubsetSize>()).collect::<Result<Vec<_>, _>>()?;
    let mut eval = EvalConfig {
        holdout_fraction: a.holdout,
        folds: a.folds,
        split_seed: a.seed,
        cache_embeddings: !a.no_cache,
        ..EvalConfig::default()
    };
    if !sizes.is_empty() {
        eval.min_pairs = AblationConfig::default().eval.min_pairs;
    }
    if let Some(m) = a.min_pairs {
        eval.min_pairs = m;
    }
    eval.validate()?;
    if !sizes.is_empty() && a.repeats == 0 {
        return Err(validation("--repeats must be at least 1"));
    }
    let pipeline = build_pipeline(&backend_config(cfg, &a.backend)?, cfg.detection).map_err(runtime)?;
    let manifest = DatasetManifest::scan(&a.lfw_root)?;
    let pairs = load_pairs_file(&manifest, &a.pairs_file)?;
    let report = if sizes.is_empty() {
        Report::Verification(presenzia_core::evaluation::evaluate_verification(&pairs, &pipeline, &eval)?)
    } else {
        let scored = score_pairs(&pairs, &pipeline, eval.cache_embeddings)?;
        let config = AblationConfig { sizes, repeats: a.repeats, seed: a.seed, eval };
        Report::Ablation(ablation_scored(&scored, &config)?)
    };
    if let Some(p) = &a.out {
        emit_report(&report, format, p)?;
    }
    out.write_all(render_report(&report, format).as_bytes()).map_err(runtime)
}

/// Entry point used by the binary: returns the process exit code.
pub fn main_exit_code() -> i32 {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run_with(std::env::args_os(), |k| std::env::var(k).ok(), &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("{}", e.message().trim_end());
            e.exit_code()
        }
    }
}
