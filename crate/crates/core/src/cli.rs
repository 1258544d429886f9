//! Command-line entry points. Exit codes: 0 success, 1 data errors,
//! 2 backend connectivity, 64 usage.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::backends::{spawn_mock_backend, MockBehavior, MockConfig, Role};
use crate::cues::{extract_cues, RedCueParams};
use crate::eval::{
    evaluate_results, load_canonical, load_results, render_report, validate_thresholds,
    ReportEntry, ReportFormat, ResultRecord, TaskRecord,
};
use crate::geometry::{iou, BBox};
use crate::imaging::{preprocess, EnhanceParams, ImageBuffer};
use crate::pipeline::{
    ground_batch, render_overlay, GroundingResult, GroundingTask, InitialSegmentation, Pipeline,
    PipelineConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_CONNECTIVITY: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn data(message: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, message: message.into() }
    }

    fn connectivity(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONNECTIVITY, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Debug, Parser)]
#[command(name = "groundcue", version, about = "Text-guided object grounding for overhead imagery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance images (CLAHE on CIELAB luminance, then unsharp masking).
    Preprocess(PreprocessArgs),
    /// Ground every task in a JSONL file against the configured backends.
    Ground(GroundArgs),
    /// Score a results file against its tasks.
    Eval(EvalArgs),
    /// Serve deterministic mock backends for all four roles.
    MockServe(MockServeArgs),
    /// Decode red highlight boxes from an edited image.
    Cues(CuesArgs),
}

fn parse_tile(s: &str) -> Result<(u32, u32), String> {
    let (c, r) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected COLSxROWS, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<u32>().ok().filter(|n| *n > 0);
    match (parse(c), parse(r)) {
        (Some(c), Some(r)) => Ok((c, r)),
        _ => Err(format!("expected two positive integers in `{s}`")),
    }
}

fn parse_endpoint(s: &str) -> Result<(Role, String), String> {
    let (role, url) = s
        .split_once('=')
        .ok_or_else(|| format!("expected ROLE=URL, got `{s}`"))?;
    Ok((role.parse()?, url.to_string()))
}

fn parse_initial(s: &str) -> Result<InitialSegmentation, String> {
    match s {
        "cue_boxes" => Ok(InitialSegmentation::CueBoxes),
        "edited_image_boxes" => Ok(InitialSegmentation::EditedImageBoxes),
        "edited_image_text" => Ok(InitialSegmentation::EditedImageText),
        _ => Err(format!("unknown initial segmentation `{s}`")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct EnhanceFlags {
    #[arg(long)]
    pub clahe_clip: Option<f64>,
    /// CLAHE tile grid as COLSxROWS.
    #[arg(long, value_parser = parse_tile)]
    pub tile: Option<(u32, u32)>,
    #[arg(long)]
    pub unsharp_sigma: Option<f64>,
    #[arg(long)]
    pub unsharp_amount: Option<f64>,
}

impl EnhanceFlags {
    pub fn apply(&self, mut p: EnhanceParams) -> EnhanceParams {
        if let Some(v) = self.clahe_clip {
            p.clahe_clip_limit = v;
        }
        if let Some(v) = self.tile {
            p.clahe_tile_grid = v;
        }
        if let Some(v) = self.unsharp_sigma {
            p.unsharp_sigma = v;
        }
        if let Some(v) = self.unsharp_amount {
            p.unsharp_amount = v;
        }
        p
    }
}

#[derive(Debug, Clone, Args)]
pub struct CueFlags {
    #[arg(long)]
    pub red_min: Option<u8>,
    #[arg(long)]
    pub green_max: Option<u8>,
    #[arg(long)]
    pub blue_max: Option<u8>,
    #[arg(long)]
    pub min_component_area: Option<usize>,
    #[arg(long)]
    pub nesting_containment: Option<f64>,
}

impl CueFlags {
    pub fn apply(&self, mut p: RedCueParams) -> RedCueParams {
        if let Some(v) = self.red_min {
            p.r_min = v;
        }
        if let Some(v) = self.green_max {
            p.g_max = v;
        }
        if let Some(v) = self.blue_max {
            p.b_max = v;
        }
        if let Some(v) = self.min_component_area {
            p.min_component_area = v;
        }
        if let Some(v) = self.nesting_containment {
            p.nesting_containment = v;
        }
        p
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Image files or directories of images.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub enhance: EnhanceFlags,
}

#[derive(Debug, Args)]
pub struct GroundArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    /// TOML pipeline configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Result JSONL path.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Run manifest path (default: `<out>.manifest.json`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub parallelism: u32,
    /// Directory for red/green/blue overlay PNGs.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    /// Directory for per-task trace JSON.
    #[arg(long)]
    pub trace_dir: Option<PathBuf>,
    /// Endpoint override as ROLE=URL (editor, segmenter_small, segmenter_large, rewriter).
    #[arg(long = "endpoint", value_parser = parse_endpoint)]
    pub endpoints: Vec<(Role, String)>,
    #[arg(long)]
    pub p_threshold: Option<f64>,
    #[arg(long)]
    pub crop_margin: Option<f64>,
    #[arg(long)]
    pub min_mask_pixels: Option<usize>,
    #[arg(long)]
    pub min_mask_score: Option<f64>,
    #[arg(long, value_parser = parse_initial)]
    pub initial_segmentation: Option<InitialSegmentation>,
    #[command(flatten)]
    pub enhance: EnhanceFlags,
    #[command(flatten)]
    pub cue: CueFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.7")]
    pub thresholds: Vec<f64>,
    /// summary, table, csv or json.
    #[arg(long, default_value = "summary")]
    pub format: String,
    /// Model name for the report row.
    #[arg(long, default_value = "groundcue")]
    pub model: String,
    /// Write the report here instead of standard out.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MockServeArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "oracle", value_parser = |s: &str| s.parse::<MockBehavior>())]
    pub behavior: MockBehavior,
    /// Canonical tasks JSONL whose boxes the editor treats as truth.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 0)]
    pub jitter_px: u32,
    #[arg(long, default_value_t = 1.0)]
    pub shrink: f64,
    #[arg(long, default_value_t = 0.0)]
    pub fail_rate: f64,
    /// Trailing phrase the rewriter strips; repeatable.
    #[arg(long = "rewrite-suffix")]
    pub rewrite_suffixes: Vec<String>,
    /// Roles to serve (default: all four).
    #[arg(long = "role", value_parser = |s: &str| s.parse::<Role>())]
    pub roles: Vec<Role>,
}

#[derive(Debug, Args)]
pub struct CuesArgs {
    /// Image the overlay is drawn on.
    pub image: PathBuf,
    /// Edited image to decode (default: `image` itself).
    #[arg(long)]
    pub edited: Option<PathBuf>,
    /// Overlay PNG path (default: `<image stem>.cues.png` next to the image).
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    #[command(flatten)]
    pub cue: CueFlags,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let out = match cli.command {
        Command::Preprocess(a) => cmd_preprocess(&a),
        Command::Ground(a) => cmd_ground(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::MockServe(a) => cmd_mock_serve(&a),
        Command::Cues(a) => cmd_cues(&a),
    };
    match out {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn is_image_file(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Failure::data(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && is_image_file(f))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn cmd_preprocess(args: &PreprocessArgs) -> CmdResult {
    let params = args.enhance.apply(EnhanceParams::default());
    params.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let files = expand_inputs(&args.inputs)?;
    fs::create_dir_all(&args.out).map_err(|e| Failure::data(format!("{}: {e}", args.out.display())))?;
    let mut failed = 0;
    for f in &files {
        let t0 = Instant::now();
        let result = ImageBuffer::load(f)
            .and_then(|img| preprocess(&img, &params))
            .and_then(|out| {
                let name = f.file_stem().unwrap_or_default().to_string_lossy().into_owned() + ".png";
                let dest = args.out.join(name);
                out.save_png(&dest).map(|_| dest)
            });
        match result {
            Ok(dest) => println!(
                "{} -> {} {:.1} ms",
                f.display(),
                dest.display(),
                t0.elapsed().as_secs_f64() * 1e3
            ),
            Err(e) => {
                eprintln!("{}: {e}", f.display());
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(Failure::data(format!("{failed} of {} inputs failed", files.len())));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointHealth {
    pub base_url: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub advertised_roles: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Written once at the end of `ground`; the config snapshot is enough to
/// rerun against the same backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
    pub tasks_file: PathBuf,
    pub results_file: PathBuf,
    pub parallelism: u32,
    pub n_tasks: usize,
    pub n_errors: usize,
    pub provenance_counts: BTreeMap<String, usize>,
    pub endpoint_health: BTreeMap<Role, EndpointHealth>,
    pub config: PipelineConfig,
}

/// Writes via a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn safe_name(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn ground_config(args: &GroundArgs) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| Failure::usage(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    for (role, url) in &args.endpoints {
        match cfg.endpoints.get_mut(role) {
            Some(s) => s.base_url = url.clone(),
            None => cfg.set_endpoint(*role, url),
        }
    }
    if let Some(v) = args.p_threshold {
        cfg.p_threshold = v;
    }
    if let Some(v) = args.crop_margin {
        cfg.crop_margin = v;
    }
    if let Some(v) = args.min_mask_pixels {
        cfg.min_mask_pixels = v;
    }
    if let Some(v) = args.min_mask_score {
        cfg.min_mask_score = v;
    }
    if let Some(v) = args.initial_segmentation {
        cfg.initial_segmentation = v;
    }
    cfg.enhance = args.enhance.apply(cfg.enhance);
    cfg.cue = args.cue.apply(cfg.cue);
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(cfg)
}

fn result_record(task: &TaskRecord, outcome: &Result<GroundingResult, String>) -> ResultRecord {
    match outcome {
        Ok(r) => ResultRecord {
            task_id: task.task_id.clone(),
            bbox: r.final_box,
            provenance: r.provenance.as_str().to_string(),
            iou: Some(r.final_box.map_or(0.0, |b| iou(&b, &task.truth_box))),
            trace_digest: r.trace.digest(),
            error: None,
        },
        Err(message) => ResultRecord {
            task_id: task.task_id.clone(),
            bbox: None,
            provenance: "error".into(),
            iou: None,
            trace_digest: String::new(),
            error: Some(message.clone()),
        },
    }
}

pub fn cmd_ground(args: &GroundArgs) -> CmdResult {
    let started_at = chrono::Utc::now().to_rfc3339();
    let cfg = ground_config(args)?;
    let records = load_canonical(&args.tasks).map_err(|e| Failure::data(e.to_string()))?;
    let pipeline = Pipeline::new(cfg.clone()).map_err(|e| Failure::usage(e.to_string()))?;

    let mut endpoint_health = BTreeMap::new();
    let mut unhealthy = Vec::new();
    for (role, health) in pipeline.health() {
        let base_url = pipeline.client(role).endpoint().base_url().to_string();
        let entry = match health {
            Ok(roles) if roles.iter().any(|r| r == role.as_str()) => EndpointHealth {
                base_url,
                ok: true,
                advertised_roles: roles,
                error: None,
            },
            Ok(roles) => EndpointHealth {
                base_url,
                ok: false,
                error: Some(format!("server does not advertise {role}")),
                advertised_roles: roles,
            },
            Err(e) => EndpointHealth {
                base_url,
                ok: false,
                advertised_roles: Vec::new(),
                error: Some(e.to_string()),
            },
        };
        if !entry.ok {
            unhealthy.push(format!("{role}: {}", entry.error.as_deref().unwrap_or("")));
        }
        endpoint_health.insert(role, entry);
    }
    if !unhealthy.is_empty() {
        return Err(Failure::connectivity(format!(
            "endpoint health check failed: {}",
            unhealthy.join("; ")
        )));
    }

    let base = args.tasks.parent().unwrap_or(Path::new("."));
    let loaded: Vec<Result<GroundingTask, String>> = records
        .iter()
        .map(|r| {
            let path = r.resolve_image(base);
            ImageBuffer::load(&path)
                .map(|img| GroundingTask {
                    task_id: r.task_id.clone(),
                    image: Arc::new(img),
                    query: r.query.clone(),
                    ground_truth: Some(r.truth_box),
                })
                .map_err(|e| format!("image: {e}"))
        })
        .collect();
    let runnable: Vec<GroundingTask> = loaded.iter().filter_map(|t| t.as_ref().ok().cloned()).collect();
    let mut grounded = ground_batch(&runnable, &pipeline, args.parallelism as usize).into_iter();
    let outcomes: Vec<Result<GroundingResult, String>> = loaded
        .iter()
        .map(|t| match t {
            Ok(_) => grounded
                .next()
                .expect("one result per runnable task")
                .map_err(|e| e.to_string()),
            Err(e) => Err(e.clone()),
        })
        .collect();

    let mut lines = String::new();
    let mut provenance_counts: BTreeMap<String, usize> = BTreeMap::new();
    for (task, outcome) in records.iter().zip(&outcomes) {
        let rec = result_record(task, outcome);
        *provenance_counts.entry(rec.provenance.clone()).or_default() += 1;
        lines.push_str(&serde_json::to_string(&rec).expect("result serializes"));
        lines.push('\n');
        if let Err(e) = outcome {
            eprintln!("task {}: {e}", task.task_id);
        }
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::data(format!("{}: {e}", parent.display())))?;
    }
    write_atomic(&args.out, lines.as_bytes()).map_err(|e| Failure::data(format!("{}: {e}", args.out.display())))?;

    if let Some(dir) = &args.overlay {
        fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
        for ((task, rec), outcome) in loaded.iter().zip(&records).zip(&outcomes) {
            if let (Ok(t), Ok(r)) = (task, outcome) {
                let img = render_overlay(&t.image, &r.cue_boxes, r.final_box.as_ref(), Some(&rec.truth_box));
                let dest = dir.join(safe_name(&rec.task_id) + ".png");
                img.save_png(&dest).map_err(|e| Failure::data(e.to_string()))?;
            }
        }
    }
    if let Some(dir) = &args.trace_dir {
        fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
        for (rec, outcome) in records.iter().zip(&outcomes) {
            if let Ok(r) = outcome {
                let dest = dir.join(safe_name(&rec.task_id) + ".trace.json");
                let body = serde_json::to_vec_pretty(&r.trace).expect("trace serializes");
                fs::write(&dest, body).map_err(|e| Failure::data(format!("{}: {e}", dest.display())))?;
            }
        }
    }

    let n_errors = outcomes.iter().filter(|o| o.is_err()).count();
    let manifest = RunManifest {
        tool: "groundcue".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        tasks_file: args.tasks.clone(),
        results_file: args.out.clone(),
        parallelism: args.parallelism,
        n_tasks: records.len(),
        n_errors,
        provenance_counts,
        endpoint_health,
        config: cfg,
    };
    let manifest_path = args.manifest.clone().unwrap_or_else(|| {
        let mut p = args.out.as_os_str().to_owned();
        p.push(".manifest.json");
        PathBuf::from(p)
    });
    write_atomic(
        &manifest_path,
        &serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|e| Failure::data(format!("{}: {e}", manifest_path.display())))?;

    println!("{} tasks, {} errors, results in {}", records.len(), n_errors, args.out.display());
    if n_errors > 0 {
        return Err(Failure::data(format!("{n_errors} task(s) failed")));
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> CmdResult {
    validate_thresholds(&args.thresholds).map_err(|e| Failure::usage(e.to_string()))?;
    let format = match args.format.as_str() {
        "summary" => None,
        f => Some(f.parse::<ReportFormat>().map_err(Failure::usage)?),
    };
    let tasks = load_canonical(&args.tasks).map_err(|e| Failure::data(e.to_string()))?;
    let results = load_results(&args.results).map_err(|e| Failure::data(e.to_string()))?;
    let overall = evaluate_results(&results, &tasks, &args.thresholds).map_err(|e| Failure::data(e.to_string()))?;

    let text = match format {
        None => overall.summary_line() + "\n",
        Some(f) => {
            let mut datasets: Vec<&str> = Vec::new();
            for t in &tasks {
                if !datasets.contains(&t.dataset_tag.as_str()) {
                    datasets.push(&t.dataset_tag);
                }
            }
            let mut entries = Vec::new();
            for d in datasets {
                let subset: Vec<TaskRecord> = tasks.iter().filter(|t| t.dataset_tag == d).cloned().collect();
                let ids: std::collections::HashSet<&str> = subset.iter().map(|t| t.task_id.as_str()).collect();
                let rs: Vec<ResultRecord> = results.iter().filter(|r| ids.contains(r.task_id.as_str())).cloned().collect();
                let report = evaluate_results(&rs, &subset, &args.thresholds).map_err(|e| Failure::data(e.to_string()))?;
                entries.push(ReportEntry {
                    model: args.model.clone(),
                    dataset: d.to_string(),
                    report,
                });
            }
            render_report(&entries, f)
        }
    };
    match &args.out {
        Some(p) => fs::write(p, &text).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn cmd_mock_serve(args: &MockServeArgs) -> CmdResult {
    let mut truth_table = BTreeMap::new();
    if let Some(p) = &args.truth {
        for r in load_canonical(p).map_err(|e| Failure::data(e.to_string()))? {
            truth_table.insert(r.task_id, r.truth_box);
        }
    }
    let cfg = MockConfig {
        behavior: args.behavior,
        jitter_px: args.jitter_px,
        shrink: args.shrink,
        fail_rate: args.fail_rate,
        seed: args.seed,
        truth_table,
        rewrite_suffixes: args.rewrite_suffixes.clone(),
        ..MockConfig::default()
    };
    cfg.validate().map_err(Failure::usage)?;
    let roles = if args.roles.is_empty() { Role::ALL.to_vec() } else { args.roles.clone() };
    let server = spawn_mock_backend(cfg, &roles, &format!("{}:{}", args.host, args.port))
        .map_err(|e| Failure::data(format!("cannot bind {}:{}: {e}", args.host, args.port)))?;
    println!("listening on {}", server.base_url());
    let _ = std::io::stdout().flush();
    log::info!("serving roles {:?}", roles.iter().map(Role::as_str).collect::<Vec<_>>());
    server.wait();
    Ok(())
}

pub fn cmd_cues(args: &CuesArgs) -> CmdResult {
    let params = args.cue.apply(RedCueParams::default());
    params.validate().map_err(Failure::usage)?;
    let base = ImageBuffer::load(&args.image).map_err(|e| Failure::data(e.to_string()))?;
    let edited = match &args.edited {
        Some(p) => ImageBuffer::load(p).map_err(|e| Failure::data(e.to_string()))?,
        None => base.clone(),
    };
    let cues = extract_cues(&edited, &params);
    println!("{}", serde_json::to_string(&cues.boxes).expect("boxes serialize"));
    let dest = args.overlay.clone().unwrap_or_else(|| {
        let stem = args.image.file_stem().unwrap_or_default().to_string_lossy();
        args.image.with_file_name(format!("{stem}.cues.png"))
    });
    render_overlay(&base, &cues.boxes, None, None::<&BBox>)
        .save_png(&dest)
        .map_err(|e| Failure::data(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_parsers() {
        assert_eq!(parse_tile("8x8").unwrap(), (8, 8));
        assert_eq!(parse_tile("4X2").unwrap(), (4, 2));
        assert!(parse_tile("0x8").is_err());
        assert!(parse_tile("8").is_err());
        assert_eq!(parse_endpoint("editor=http://h:1").unwrap(), (Role::Editor, "http://h:1".into()));
        assert!(parse_endpoint("painter=http://h:1").is_err());
    }

    #[test]
    fn default_flags_reproduce_library_defaults() {
        let cli = Cli::try_parse_from([
            "groundcue", "preprocess", "a.png", "--out", "o", "--clahe-clip", "2.0", "--tile", "8x8",
            "--unsharp-sigma", "1.5", "--unsharp-amount", "0.5",
        ])
        .unwrap();
        let Command::Preprocess(a) = cli.command else { panic!() };
        assert_eq!(a.enhance.apply(EnhanceParams::default()), EnhanceParams::default());
    }

    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(run(["groundcue", "cues", "x.png", "--red-min", "300"]), EXIT_USAGE);
        assert_eq!(run(["groundcue", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["groundcue", "ground", "--tasks", "t", "--out", "o", "--parallelism", "0"]), EXIT_USAGE);
        assert_eq!(run(["groundcue", "--help"]), EXIT_OK);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        assert_eq!(safe_name("a/b c"), "a_b_c");
    }
}
