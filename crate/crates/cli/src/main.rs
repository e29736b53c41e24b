use std::fs::File;
use std::io::{self, BufRead, BufReader, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use rc_api::ServiceConfig;
use rc_core::analytics::{
    analyze_survey, length_response_correlation, read_survey_csv, usage_stats, usage_table,
    write_usage_csv, PairingSpec, QuestionAnalysis, UsageStats,
};
use rc_core::password::hash_password;
use rc_core::store::{ExportOptions, ImportError, StoreOptions};
use rc_core::{RecordKind, ResponseType, Role, Store, UserAccount, Video, VideoId};

mod simulate;
mod table;

use table::Table;

#[derive(Parser)]
#[command(
    name = "rc",
    version,
    about = "Operate a response collector data directory"
)]
struct Cli {
    /// Data directory holding the JSONL logs.
    #[arg(long, global = true, env = "RC_DATA_DIR", default_value = rc_api::config::DEFAULT_DATA_DIR)]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        /// Listen address; overrides RC_BIND_ADDR.
        #[arg(long)]
        bind: Option<std::net::SocketAddr>,
    },
    /// Manage accounts.
    #[command(subcommand)]
    User(UserCommand),
    /// Manage the video catalog.
    #[command(subcommand)]
    Video(VideoCommand),
    /// Per-video usage statistics.
    Stats(StatsArgs),
    /// Survey analysis.
    #[command(subcommand)]
    Survey(SurveyCommand),
    /// Generate a synthetic class into a fresh data directory.
    Simulate(SimulateArgs),
    /// Write one record log as JSONL to stdout.
    Export {
        kind: RecordKind,
        #[arg(long)]
        include_password_hashes: bool,
    },
    /// Append the records of a JSONL file. Nothing is written if any line is invalid.
    Import {
        kind: RecordKind,
        /// Input file; `-` reads stdin.
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Subcommand)]
enum UserCommand {
    /// Add an account. The password is prompted for on a terminal and read
    /// as one line from stdin otherwise.
    Add {
        login_id: String,
        #[arg(long, default_value = "student")]
        role: Role,
        /// Defaults to the login id.
        #[arg(long)]
        name: Option<String>,
    },
    List,
}

#[derive(Subcommand)]
enum VideoCommand {
    Add {
        #[arg(long)]
        title: String,
        /// Length in seconds.
        #[arg(long, allow_hyphen_values = true)]
        duration: f64,
        #[arg(long)]
        uri: String,
        #[arg(long)]
        ordinal: u32,
        #[arg(long, default_value = "")]
        lecture: String,
        /// Defaults to `v` followed by the two-digit ordinal.
        #[arg(long)]
        id: Option<String>,
    },
    List,
}

#[derive(Args)]
struct StatsArgs {
    /// Only this video.
    #[arg(long)]
    video: Option<String>,
    /// Emit CSV instead of a table.
    #[arg(long, conflicts_with = "json")]
    csv: bool,
    #[arg(long)]
    json: bool,
    /// Also regress responses per player on video length over these videos.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    correlate: Vec<String>,
}

#[derive(Subcommand)]
enum SurveyCommand {
    /// Sign-test each analysis of a pairing spec over a survey CSV.
    Analyze {
        #[arg(long)]
        file: PathBuf,
        /// Pairing spec JSON. Without it every question is tested on its own.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    students: usize,
    #[arg(long)]
    videos: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Expected responses per student per 10 minutes of video.
    #[arg(long, value_parser = non_negative)]
    rate: f64,
    #[arg(long, default_value_t = 600.0, value_parser = positive)]
    duration_s: f64,
    #[arg(long, default_value_t = 3)]
    hotspots: usize,
    /// Output data directory; must not already hold records. Defaults to --data-dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("expected a finite number >= 0, got {s:?}")),
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("expected a finite number > 0, got {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}

/// The error chain joined with `: `, skipping causes the previous message
/// already spells out.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let data_dir = cli.data_dir;
    match cli.command {
        Command::Serve { bind } => serve(data_dir, bind),
        Command::User(cmd) => user(&open(&data_dir)?, cmd),
        Command::Video(cmd) => video(&open(&data_dir)?, cmd),
        Command::Stats(args) => stats(&open(&data_dir)?, args),
        Command::Survey(SurveyCommand::Analyze { file, spec, json }) => {
            survey(&file, spec.as_deref(), json)
        }
        Command::Simulate(args) => simulate(&data_dir, args),
        Command::Export {
            kind,
            include_password_hashes,
        } => {
            let store = open(&data_dir)?;
            let mut out = io::stdout().lock();
            store.export_jsonl(
                kind,
                ExportOptions {
                    include_password_hashes,
                },
                &mut out,
            )?;
            out.flush()?;
            Ok(())
        }
        Command::Import { kind, file } => import(&open(&data_dir)?, kind, &file),
    }
}

fn open(dir: &Path) -> anyhow::Result<Store> {
    Store::open(dir).with_context(|| format!("opening data directory {}", dir.display()))
}

fn serve(data_dir: PathBuf, bind: Option<std::net::SocketAddr>) -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(io::stderr)
        .init();
    let mut config = ServiceConfig::from_env()?;
    config.data_dir = data_dir;
    if let Some(addr) = bind {
        config.bind_addr = addr;
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(rc_api::serve(config))?;
    Ok(())
}

fn read_password() -> anyhow::Result<String> {
    let password = if io::stdin().is_terminal() {
        let first = rpassword::prompt_password("password: ")?;
        let again = rpassword::prompt_password("repeat password: ")?;
        if first != again {
            bail!("passwords do not match");
        }
        first
    } else {
        let mut line = String::new();
        io::stdin().lock().read_line(&mut line)?;
        line.trim_end_matches(['\r', '\n']).to_owned()
    };
    if password.is_empty() {
        bail!("password must not be empty");
    }
    Ok(password)
}

fn user(store: &Store, cmd: UserCommand) -> anyhow::Result<()> {
    match cmd {
        UserCommand::Add {
            login_id,
            role,
            name,
        } => {
            if store
                .snapshot()
                .account(&login_id.as_str().into())
                .is_some()
            {
                bail!("account {login_id} already exists");
            }
            let password = read_password()?;
            let hash = hash_password(&password).map_err(|e| anyhow!("{e}"))?;
            store.add_account(UserAccount {
                display_name: name.unwrap_or_else(|| login_id.clone()),
                login_id: login_id.clone().into(),
                password_hash: Some(hash),
                role,
            })?;
            println!("added {role} {login_id}");
        }
        UserCommand::List => {
            let mut t = Table::new(["login_id", "role", "display_name", "can_login"]);
            for a in store.snapshot().accounts() {
                t.row([
                    a.login_id.to_string(),
                    a.role.to_string(),
                    a.display_name.clone(),
                    if a.password_hash.is_some() {
                        "yes"
                    } else {
                        "no"
                    }
                    .to_owned(),
                ]);
            }
            print!("{t}");
        }
    }
    Ok(())
}

fn video(store: &Store, cmd: VideoCommand) -> anyhow::Result<()> {
    match cmd {
        VideoCommand::Add {
            title,
            duration,
            uri,
            ordinal,
            lecture,
            id,
        } => {
            let video_id = VideoId::new(id.unwrap_or_else(|| format!("v{ordinal:02}")));
            store.add_video(Video {
                video_id: video_id.clone(),
                title,
                duration_s: duration,
                source_uri: uri,
                lecture_label: lecture,
                ordinal,
            })?;
            println!("added video {video_id}");
        }
        VideoCommand::List => {
            let mut t = Table::new([
                "ordinal",
                "video_id",
                "duration_s",
                "lecture",
                "title",
                "source_uri",
            ]);
            for v in store.snapshot().videos() {
                t.row([
                    v.ordinal.to_string(),
                    v.video_id.to_string(),
                    format!("{}", v.duration_s),
                    v.lecture_label.clone(),
                    v.title.clone(),
                    v.source_uri.clone(),
                ]);
            }
            print!("{t}");
        }
    }
    Ok(())
}

fn mmss(seconds: f64) -> String {
    let s = seconds.round() as u64;
    format!("{}:{:02}", s / 60, s % 60)
}

fn opt2(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |x| format!("{x:.2}"))
}

fn stats(store: &Store, args: StatsArgs) -> anyhow::Result<()> {
    let snapshot = store.snapshot();
    let rows: Vec<UsageStats> = match &args.video {
        Some(id) => vec![usage_stats(&snapshot, &VideoId::new(id.as_str()))?],
        None => usage_table(&snapshot)?,
    };
    let correlation = if args.correlate.is_empty() {
        None
    } else {
        let ids: Vec<VideoId> = args
            .correlate
            .iter()
            .map(|s| VideoId::new(s.as_str()))
            .collect();
        Some(length_response_correlation(&snapshot, &ids)?)
    };
    let mut out = io::stdout().lock();
    if args.json {
        let body = serde_json::json!({ "videos": rows, "correlation": correlation });
        writeln!(out, "{}", serde_json::to_string_pretty(&body)?)?;
        return Ok(());
    }
    if args.csv {
        write_usage_csv(&rows, &mut out)?;
    } else {
        let mut header = vec!["video", "length", "played", "responded"];
        header.extend(ResponseType::ALL.iter().map(|t| t.as_str()));
        header.extend(["sum", "avg", "std", "per_10min", "title"]);
        let mut t = Table::new(header);
        for r in &rows {
            let mut cells = vec![
                r.video_id.to_string(),
                mmss(r.length_s),
                r.played.to_string(),
                r.responded.to_string(),
            ];
            cells.extend(ResponseType::ALL.iter().map(|&ty| r.count(ty).to_string()));
            cells.extend([
                r.sum.to_string(),
                opt2(r.avg),
                opt2(r.std),
                opt2(r.normalized_per_10min),
                r.title.clone(),
            ]);
            t.row(cells);
        }
        write!(out, "{t}")?;
    }
    if let Some(c) = correlation {
        // Keep CSV output machine-readable.
        let mut sink: Box<dyn Write> = if args.csv {
            Box::new(io::stderr())
        } else {
            Box::new(out)
        };
        writeln!(
            sink,
            "length correlation over {} videos: r2={:.4} slope={:.4}/min intercept={:.4}",
            c.n, c.r_squared, c.slope, c.intercept
        )?;
    }
    Ok(())
}

fn survey(file: &Path, spec: Option<&Path>, json: bool) -> anyhow::Result<()> {
    let input = File::open(file).with_context(|| format!("opening {}", file.display()))?;
    let data = read_survey_csv(BufReader::new(input))
        .with_context(|| format!("reading {}", file.display()))?;
    let spec = match spec {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("opening {}", p.display()))?;
            PairingSpec::from_json(&text).with_context(|| format!("reading {}", p.display()))?
        }
        None => PairingSpec::default_for(&data),
    };
    let results = analyze_survey(&data, &spec)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&results)?);
    } else {
        print!("{}", survey_table(&results));
    }
    Ok(())
}

fn survey_table(results: &[QuestionAnalysis]) -> Table {
    let mut t = Table::new([
        "analysis",
        "method",
        "positive",
        "negative",
        "ties",
        "p_value",
        "distribution",
    ]);
    for r in results {
        let dist: Vec<String> = r
            .distribution
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        t.row([
            r.name.clone(),
            r.method.to_owned(),
            r.test.n_pos.to_string(),
            r.test.n_neg.to_string(),
            r.test.n_tie.to_string(),
            format!("{:.4}", r.test.p_value),
            dist.join(" "),
        ]);
    }
    t
}

fn simulate(data_dir: &Path, args: SimulateArgs) -> anyhow::Result<()> {
    let dir = args.out.unwrap_or_else(|| data_dir.to_owned());
    let epoch = simulate::epoch();
    let store = Store::open_with(
        &dir,
        StoreOptions {
            clock: Arc::new(move || epoch),
        },
    )
    .with_context(|| format!("opening {}", dir.display()))?;
    let snapshot = store.snapshot();
    if RecordKind::ALL.into_iter().any(|k| snapshot.seq(k) > 0) {
        bail!(
            "{} already holds records; simulate needs an empty directory",
            dir.display()
        );
    }
    let summary = simulate::generate(
        &store,
        &simulate::SimConfig {
            students: args.students,
            videos: args.videos,
            seed: args.seed,
            rate: args.rate,
            duration_s: args.duration_s,
            hotspots: args.hotspots,
        },
    )?;
    println!(
        "simulated {} students, {} videos, {} play segments, {} responses into {}",
        summary.students,
        summary.videos,
        summary.segments,
        summary.responses,
        dir.display()
    );
    Ok(())
}

fn import(store: &Store, kind: RecordKind, file: &Path) -> anyhow::Result<()> {
    let result = if file == Path::new("-") {
        store.import_jsonl(kind, io::stdin().lock())
    } else {
        let f = File::open(file).with_context(|| format!("opening {}", file.display()))?;
        store.import_jsonl(kind, BufReader::new(f))
    };
    match result {
        Ok(n) => {
            println!("imported {n} {kind} records");
            Ok(())
        }
        Err(ImportError::Lines(errors)) => {
            for e in &errors {
                eprintln!("{}: {e}", file.display());
            }
            bail!("{} invalid line(s); nothing imported", errors.len())
        }
        Err(e) => Err(e.into()),
    }
}
