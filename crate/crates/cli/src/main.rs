//! `gravgrasp`: command-line client of the planning service. Without
//! `--server`, an in-process service is started on a loopback port.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use gravgrasp_client::{Client, ClientError};
use gravgrasp_core::api::{
    BenchRequest, ErrorKind, PlanRequest, ReportRequest, SimulateRequest,
};
use gravgrasp_core::cog_locator::ChooserConfig;
use gravgrasp_core::executor::Stage;
use gravgrasp_core::geometry::Point2;
use gravgrasp_core::pipeline::PlanConfig;
use gravgrasp_core::stability_sim::{BenchConfig, GripperParams, Policy, RigidObjectModel, ToolFamily};

#[derive(Parser)]
#[command(name = "gravgrasp", version, about = "Center-of-gravity aware grasp planning")]
struct Cli {
    /// Service URL; an in-process service is started when absent.
    #[arg(long, global = true, env = "GRAVGRASP_SERVER")]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Intersect suspension lines from a CSV (image_id,x1,y1,x2,y2).
    Annotate {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check dataset files and per-category counts.
    ValidateDataset {
        #[arg(long)]
        manifest: PathBuf,
        /// JSON {category: count}; the reference table by default.
        #[arg(long)]
        expected: Option<PathBuf>,
        /// Exit with status 3 when the report finds problems.
        #[arg(long)]
        strict: bool,
    },
    /// Turn an annotated dataset into a memory manifest.
    BuildMemory {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan a grasp for the instructed object.
    Plan(PlanArgs),
    /// Plan, verify against the tracked object and replan as needed.
    VerifyExecute {
        #[command(flatten)]
        plan: PlanArgs,
        /// Write the state-machine trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Adjudicate one grasp on a rigid-object model.
    Simulate {
        /// JSON {parts: [{shape: {center, half_extents, angle}, mass, role}]}.
        #[arg(long)]
        model: PathBuf,
        /// Grasp point "x,y" in meters; the true CoG by default.
        #[arg(long, value_parser = parse_point)]
        grasp: Option<Point2>,
        #[command(flatten)]
        gripper: GripperArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare grasp policies on synthetic tools.
    Bench {
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Benchmark config JSON; flags win over the file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Tool family JSON; the built-in ten categories by default.
        #[arg(long)]
        family: Option<PathBuf>,
        /// Comma-separated policy names.
        #[arg(long, value_delimiter = ',')]
        policies: Vec<String>,
        #[command(flatten)]
        gripper: GripperArgs,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render benchmark results (JSON or CSV) as a table and CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check FVEC/FMAP files and print their headers.
    CheckFeatures { files: Vec<PathBuf> },
    /// Write the golden two-object fixture (scene and memory).
    Fixture {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the service in the foreground.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    instruction: String,
    /// Memory manifest JSON.
    #[arg(long)]
    memory: PathBuf,
    /// Plan config JSON; flags win over the file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    radius_px: Option<f64>,
    #[arg(long)]
    patch_half_width: Option<usize>,
    #[arg(long)]
    anisotropy_threshold: Option<f64>,
    #[arg(long)]
    epsilon_px: Option<f64>,
    #[arg(long)]
    max_replans: Option<u32>,
    /// External CoG chooser reachable over HTTP.
    #[arg(long, conflicts_with = "chooser_cmd")]
    chooser_url: Option<String>,
    /// External CoG chooser run as a subprocess (JSON on stdin/stdout).
    #[arg(long)]
    chooser_cmd: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GripperArgs {
    /// Maximum normal force, N.
    #[arg(long)]
    force: Option<f64>,
    #[arg(long)]
    friction: Option<f64>,
    /// Torque capacity, N·m.
    #[arg(long)]
    torque: Option<f64>,
}

impl GripperArgs {
    fn apply(&self, mut g: GripperParams) -> GripperParams {
        if let Some(f) = self.force {
            g.max_normal_force = f;
        }
        if let Some(m) = self.friction {
            g.friction = m;
        }
        if let Some(t) = self.torque {
            g.torque_capacity = t;
        }
        g
    }
}

fn parse_point(s: &str) -> Result<Point2, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok(Point2::new(parse(x)?, parse(y)?))
}

/// Failure of a command, with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Self { code: 3, message: message.to_string() }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Self { code: e.exit_code() as u8, message: e.to_string() }
    }
}

type CmdResult = Result<(), Failure>;

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn emit_text(text: &str, out: Option<&Path>) -> CmdResult {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> CmdResult {
    let text = serde_json::to_string_pretty(value).expect("response serializes") + "\n";
    emit_text(&text, out)
}

impl PlanArgs {
    fn request(&self) -> Result<PlanRequest, Failure> {
        let mut config: PlanConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => PlanConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { config.$field = v; })* };
        }
        set!(seed, top_k, radius_px, patch_half_width, anisotropy_threshold, epsilon_px, max_replans);
        if let Some(url) = &self.chooser_url {
            config.chooser = ChooserConfig::Http { url: url.clone(), timeout_ms: 5_000 };
        }
        if let Some(cmd) = &self.chooser_cmd {
            config.chooser = ChooserConfig::Subprocess {
                command: "sh".into(),
                args: vec!["-c".into(), cmd.clone()],
                timeout_ms: 5_000,
            };
        }
        Ok(PlanRequest {
            scene: absolute(&self.scene),
            instruction: self.instruction.clone(),
            memory: absolute(&self.memory),
            config,
        })
    }
}

async fn run(client: &Client, command: Command) -> CmdResult {
    match command {
        Command::Annotate { csv, out } => {
            let text = fs::read_to_string(&csv).map_err(|e| Failure::input(format!("{}: {e}", csv.display())))?;
            emit_json(&client.annotate(text).await?, out.as_deref())
        }
        Command::ValidateDataset { manifest, expected, strict } => {
            let report = client.validate_dataset(absolute(&manifest), expected.as_deref().map(absolute)).await?;
            emit_json(&report, None)?;
            let clean = report.all_match && report.missing_files.is_empty() && report.flagged.is_empty();
            if strict && !clean {
                return Err(Failure::input("dataset validation found problems"));
            }
            Ok(())
        }
        Command::BuildMemory { dataset, out } => {
            emit_json(&client.build_memory(absolute(&dataset), absolute(&out)).await?, None)
        }
        Command::Plan(args) => {
            let plan = client.plan(&args.request()?).await?;
            emit_json(&plan, args.out.as_deref())
        }
        Command::VerifyExecute { plan, trace } => {
            let resp = client.verify_execute(&plan.request()?).await?;
            if let Some(path) = &trace {
                emit_text(&resp.outcome.trace_jsonl(), Some(path))?;
            }
            emit_json(&resp, plan.out.as_deref())?;
            match (resp.outcome.final_stage, resp.error) {
                (Stage::Execute, _) => Ok(()),
                (_, Some(e)) => Err(Failure { code: e.kind.exit_code() as u8, message: e.to_string() }),
                (stage, None) => Err(Failure {
                    code: ErrorKind::Planning.exit_code() as u8,
                    message: format!(
                        "loop ended in {stage:?} after {} replans: {}",
                        resp.outcome.replan_count,
                        resp.outcome.failure.unwrap_or_else(|| "verification did not pass".into())
                    ),
                }),
            }
        }
        Command::Simulate { model, grasp, gripper, out } => {
            let model: RigidObjectModel = read_json(&model)?;
            let req = SimulateRequest {
                model,
                grasp_point: grasp,
                gripper: gripper.apply(GripperParams::default()),
            };
            emit_json(&client.simulate(&req).await?, out.as_deref())
        }
        Command::Bench { trials, seed, config, family, policies, gripper, format, out } => {
            let mut config: BenchConfig = match &config {
                Some(p) => read_json(p)?,
                None => BenchConfig::default(),
            };
            if let Some(t) = trials {
                config.trials = t;
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            config.gripper = gripper.apply(config.gripper);
            let family: Option<ToolFamily> = family.as_deref().map(read_json).transpose()?;
            let policies = policies
                .iter()
                .map(|p| Policy::parse(p.trim()).ok_or_else(|| Failure::input(format!("unknown policy {p:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let results = client.bench(&BenchRequest { family, policies, config }).await?;
            if let Format::Json = format {
                return emit_json(&results, out.as_deref());
            }
            let report = client.report(&ReportRequest::Results(Box::new(results))).await?;
            emit_text(if let Format::Csv = format { &report.csv } else { &report.table }, out.as_deref())
        }
        Command::Report { input, format, out } => {
            let text = fs::read_to_string(&input).map_err(|e| Failure::input(format!("{}: {e}", input.display())))?;
            let req = match serde_json::from_str(&text) {
                Ok(results) => ReportRequest::Results(Box::new(results)),
                Err(_) => ReportRequest::Csv(text),
            };
            let report = client.report(&req).await?;
            match format {
                Format::Table => emit_text(&report.table, out.as_deref()),
                Format::Csv => emit_text(&report.csv, out.as_deref()),
                Format::Json => emit_json(&report, out.as_deref()),
            }
        }
        Command::CheckFeatures { files } => {
            let mut failed = false;
            for f in &files {
                match client.check_features(&absolute(f)).await {
                    Ok(info) => println!("{}: {}", f.display(), serde_json::to_string(&info).expect("serializes")),
                    Err(e) => {
                        eprintln!("{}: {e}", f.display());
                        failed = true;
                    }
                }
            }
            if failed {
                Err(Failure::input("some files failed validation"))
            } else {
                Ok(())
            }
        }
        Command::Fixture { out } => {
            fs::create_dir_all(&out).map_err(|e| Failure::input(format!("{}: {e}", out.display())))?;
            emit_json(&client.golden_fixture(&absolute(&out)).await?, None)
        }
        Command::Serve { .. } => unreachable!("handled before connecting"),
    }
}

async fn main_async(cli: Cli) -> CmdResult {
    if let Command::Serve { addr } = cli.command {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::input(format!("bind {addr}: {e}")))?;
        eprintln!("listening on http://{}", listener.local_addr().map_err(Failure::input)?);
        return gravgrasp_server::serve(listener)
            .await
            .map_err(|e| Failure { code: 1, message: e.to_string() });
    }
    let (client, local) = match cli.server {
        Some(url) => (Client::new(url), None),
        None => {
            let (addr, handle) = gravgrasp_server::spawn(([127, 0, 0, 1], 0).into())
                .await
                .map_err(|e| Failure { code: 1, message: format!("starting local service: {e}") })?;
            (Client::new(format!("http://{addr}")), Some(handle))
        }
    };
    let result = run(&client, cli.command).await;
    if let Some(handle) = local {
        handle.abort();
    }
    result
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    match runtime.block_on(main_async(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
