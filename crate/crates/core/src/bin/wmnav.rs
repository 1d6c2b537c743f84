use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use wmnav::config::NavConfig;
use wmnav::harness::{
    compute_spl, compute_sr, generate_suite, read_results, run_benchmark, snapshot_from_log, summarize, write_ppm,
    BackendChoice, RunOptions,
};
use wmnav::vlm::{HttpConfig, PromptTemplates, DEFAULT_API_KEY_ENV};

#[derive(Parser)]
#[command(name = "wmnav", version, about = "World-model object-goal navigation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Oracle,
    Http,
    Replay,
}

#[derive(Subcommand)]
enum Command {
    /// Run a suite and write results, logs and snapshots.
    Run {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, value_enum, default_value = "oracle")]
        backend: Backend,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Cap on steps per episode.
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON config; missing fields keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory of prompt template overrides.
        #[arg(long)]
        prompts: Option<PathBuf>,
        /// Recorded calls to answer from (replay backend).
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Also log raw HTTP exchanges to out/http_log.jsonl.
        #[arg(long)]
        log_vlm: bool,
        #[arg(long, default_value = "http://localhost:8000/v1")]
        base_url: String,
        #[arg(long, default_value = "gpt-4o")]
        model: String,
        /// Seconds to wait between HTTP requests.
        #[arg(long, default_value_t = 0.0)]
        min_interval: f64,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Recompute SR and SPL from a results file.
    Spl {
        #[arg(long)]
        results: PathBuf,
    },
    /// Render the top-down snapshot of a finished episode.
    Snapshot {
        /// Path to an episode's trajectory.jsonl.
        #[arg(long)]
        episode: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a procedural suite of solvable episodes.
    GenSuite {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            suite,
            backend,
            out,
            max_steps,
            seed,
            config,
            prompts,
            replay,
            log_vlm,
            base_url,
            model,
            min_interval,
            threads,
        } => {
            let mut cfg = match config {
                Some(p) => NavConfig::load(&p)?,
                None => NavConfig::default(),
            };
            if let Some(n) = max_steps {
                cfg.max_steps = n;
            }
            let templates = match prompts {
                Some(dir) => PromptTemplates::load_dir(&dir)?,
                None => PromptTemplates::default(),
            };
            let choice = match backend {
                Backend::Oracle => BackendChoice::Oracle,
                Backend::Replay => {
                    BackendChoice::Replay(replay.ok_or("--replay <vlm_calls.jsonl> is required for the replay backend")?)
                }
                Backend::Http => {
                    let mut http = HttpConfig::new(base_url, model).with_key_from_env(DEFAULT_API_KEY_ENV);
                    http.min_interval = Duration::from_secs_f64(min_interval.max(0.0));
                    if log_vlm {
                        std::fs::create_dir_all(&out)?;
                        http.log_path = Some(out.join("http_log.jsonl"));
                    }
                    BackendChoice::Http(http)
                }
            };
            let opts = RunOptions {
                config: cfg,
                templates,
                seed,
                threads,
            };
            let run = run_benchmark(&suite, &choice, &out, &opts)?;
            for r in &run.results {
                log::info!(
                    "{} {}: {} in {} steps",
                    r.episode_id,
                    r.goal_category,
                    if r.success { "success" } else { r.failure_reason.map_or("failure", |f| f.as_str()) },
                    r.steps
                );
            }
            println!("{}", serde_json::to_string_pretty(&run.summary)?);
        }
        Command::Spl { results } => {
            let rs = read_results(&results)?;
            let s = summarize(&rs, "", "", 0)?;
            println!(
                "{}",
                serde_json::json!({
                    "episodes": rs.len(),
                    "sr": compute_sr(&rs)?,
                    "spl": compute_spl(&rs)?,
                    "per_category": s.per_category,
                })
            );
        }
        Command::Snapshot { episode, out } => {
            let img = snapshot_from_log(&episode)?;
            let path = out.unwrap_or_else(|| episode.with_file_name("snapshot.ppm"));
            write_ppm(&img, &path)?;
            println!("{}", path.display());
        }
        Command::GenSuite { dir, count, seed } => {
            let cfg = NavConfig::default();
            let path = generate_suite(&dir, count, seed, cfg.map_size as f64 * cfg.resolution)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}
