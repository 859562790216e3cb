use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use freshrec::batch::{run_batch, POPULARITY_FILE, SIMILARITY_FILE, SNAPSHOTS_FILE};
use freshrec::config::{BatchConfig, ExperimentConfig, ServingConfig};
use freshrec::event_log::{append_events, read_all, Catalog, RELEASE_WINDOW_DAYS};
use freshrec::injection::Assignment;
use freshrec::manifest::RunManifest;
use freshrec::ranking::{read_training_impressions, train_ranker, write_training_impressions, TrainConfig};
use freshrec::realtime::RealtimeStore;
use freshrec::serving::{http, load_artifacts, RecRequest, Recommender, CATALOG_FILE, RANKER_FILE};
use freshrec::simulation::{
    run_experiment, LiftReport, World, CONFIG_FILE, EVENTS_FILE, IMPRESSIONS_FILE, REPORT_FILE, REPORT_KV_FILE,
    TRAINING_FILE,
};
use freshrec::{UserId, DAY_S};

const REPLAY_FILE: &str = "replay.txt";
const DUMP_FILE: &str = "store_dump.txt";

/// Fresh-feature recommender: offline pipeline, real-time store, serving and A/B simulation.
#[derive(Parser)]
#[command(name = "freshrec", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a catalog, warm-up and bootstrap traffic, and ranker training rows.
    GenData {
        /// Experiment config (key=value); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate an event log into snapshots, item similarity and popularity.
    RunBatch {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        /// Only events strictly before this timestamp are used.
        #[arg(long)]
        cutoff: i64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the logistic ranker on logged training rows.
    TrainRanker {
        /// Training rows written by gen-data.
        #[arg(long, alias = "data")]
        impressions: PathBuf,
        /// Timestamp recorded in the model file; defaults to the newest row.
        #[arg(long)]
        trained_at: Option<i64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve recommendations over HTTP from an artifact directory.
    Serve {
        /// Directory holding catalog, batch artifacts and ranker.
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Users 0..N are assigned to arms.
        #[arg(long, default_value_t = 10_000)]
        users: u32,
        #[arg(long, default_value = "freshrec")]
        salt: String,
        /// Share of users in the treatment arm.
        #[arg(long, default_value_t = 0.5)]
        split: f64,
        /// Impression log path; defaults to <artifacts>/impressions.log.
        #[arg(long)]
        impressions: Option<PathBuf>,
    },
    /// Stream an event log into a fresh real-time store.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Events per second; 0 replays as fast as possible.
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
        /// Also serve one request per event from this artifact directory and report latency.
        #[arg(long)]
        artifacts: Option<PathBuf>,
        /// Clock for the final store dump; defaults to the newest event.
        #[arg(long)]
        now: Option<i64>,
        /// Write the store contents at --now.
        #[arg(long)]
        dump: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full A/B experiment.
    SimulateAb {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the report of a finished simulate-ab run.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData { config, seed, out } => gen_data(config.as_deref(), seed, &out),
        Command::RunBatch {
            log,
            catalog,
            cutoff,
            out,
        } => batch(&log, &catalog, cutoff, &out),
        Command::TrainRanker {
            impressions,
            trained_at,
            out,
        } => train(&impressions, trained_at, &out),
        Command::Serve {
            artifacts,
            addr,
            users,
            salt,
            split,
            impressions,
        } => serve(&artifacts, addr, users, &salt, split, impressions),
        Command::Replay {
            log,
            rate,
            artifacts,
            now,
            dump,
            out,
        } => replay(&log, rate, artifacts.as_deref(), now, dump, &out),
        Command::SimulateAb { config, seed, out } => simulate(config.as_deref(), seed, &out),
        Command::Report { input } => report(&input),
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn manifest(command: &str, config: Option<&Path>, seed: Option<u64>) -> RunManifest {
    let mut m = RunManifest::new(command);
    m.config_path = config.map(|p| p.display().to_string());
    m.seed = seed;
    m
}

fn gen_data(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = load_config(config, seed)?;
    create_dir(out)?;
    let mut world = World::generate(cfg.clone())?;
    world.catalog().write(&out.join(CATALOG_FILE))?;
    let log = out.join(EVENTS_FILE);
    std::fs::write(&log, "").with_context(|| format!("creating {}", log.display()))?;
    append_events(&log, &world.events)?;
    world.log_path = Some(log);
    let first = RELEASE_WINDOW_DAYS + cfg.warmup_days as i64;
    let training = world.bootstrap(first, cfg.bootstrap_days)?;
    let day = first + cfg.bootstrap_days as i64;
    write_training_impressions(&out.join(TRAINING_FILE), &training)?;
    std::fs::write(out.join(CONFIG_FILE), cfg.to_kv_string())?;
    let end = World::day_start(day);
    manifest("gen-data", config, Some(cfg.seed))
        .parameter("end_ts", end)
        .with_artifacts(out, &[CONFIG_FILE, CATALOG_FILE, EVENTS_FILE, TRAINING_FILE])?
        .write(out)?;
    println!(
        "wrote {} items, {} events and {} training rows to {}; log ends at {end}",
        world.catalog().len(),
        world.events.len(),
        training.len(),
        out.display()
    );
    Ok(())
}

fn batch(log: &Path, catalog_path: &Path, cutoff: i64, out: &Path) -> Result<()> {
    let catalog = Catalog::load(catalog_path)?;
    let artifacts = run_batch(log, &catalog, cutoff, &BatchConfig::default())?;
    create_dir(out)?;
    artifacts.write(out)?;
    catalog.write(&out.join(CATALOG_FILE))?;
    manifest("run-batch", None, None)
        .parameter("log", log.display())
        .parameter("catalog", catalog_path.display())
        .parameter("cutoff", cutoff)
        .with_artifacts(out, &[CATALOG_FILE, SNAPSHOTS_FILE, SIMILARITY_FILE, POPULARITY_FILE])?
        .write(out)?;
    println!(
        "batch at cutoff {cutoff}: {} snapshots, {} items with popularity",
        artifacts.snapshots.len(),
        artifacts.popularity.ranked().len()
    );
    Ok(())
}

fn train(data: &Path, trained_at: Option<i64>, out: &Path) -> Result<()> {
    let rows = read_training_impressions(data)?;
    let at = trained_at.unwrap_or_else(|| rows.iter().map(|r| r.served_at).max().unwrap_or(0));
    let (model, report) = train_ranker(&rows, &TrainConfig::default(), at)?;
    create_dir(out)?;
    model.write(&out.join(RANKER_FILE))?;
    manifest("train-ranker", None, None)
        .parameter("impressions", data.display())
        .parameter("trained_at", at)
        .with_artifacts(out, &[RANKER_FILE])?
        .write(out)?;
    println!(
        "trained on {} rows, log-loss {:.6}",
        report.impressions, report.final_log_loss
    );
    Ok(())
}

fn serve(dir: &Path, addr: SocketAddr, users: u32, salt: &str, split: f64, impressions: Option<PathBuf>) -> Result<()> {
    if !(split > 0.0 && split < 1.0) {
        bail!("--split must lie in (0,1)");
    }
    let (catalog, batch, model) = load_artifacts(dir)?;
    let config = ServingConfig::default();
    let assignment = Assignment::hash_split((0..users).map(UserId), salt, split);
    let log = impressions.unwrap_or_else(|| dir.join(IMPRESSIONS_FILE));
    manifest("serve", None, None)
        .parameter("addr", addr)
        .parameter("users", users)
        .parameter("salt", salt)
        .parameter("split", split)
        .parameter("impressions", log.display())
        .with_artifacts(
            dir,
            &[
                CATALOG_FILE,
                SNAPSHOTS_FILE,
                SIMILARITY_FILE,
                POPULARITY_FILE,
                RANKER_FILE,
            ],
        )?
        .write(dir)?;
    let rec = Recommender::new(
        Arc::new(catalog),
        Arc::new(batch),
        Arc::new(model),
        Arc::new(RealtimeStore::new(config.store.clone())),
        Arc::new(assignment),
        config,
    )
    .with_impression_log(&log)?;
    http::run_blocking(addr, Arc::new(rec))?;
    Ok(())
}

fn percentile(sorted: &[Duration], q: f64) -> Duration {
    if sorted.is_empty() {
        return Duration::ZERO;
    }
    let idx = ((sorted.len() as f64 * q).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

fn replay(log: &Path, rate: f64, artifacts: Option<&Path>, now: Option<i64>, dump: bool, out: &Path) -> Result<()> {
    if !(rate >= 0.0 && rate.is_finite()) {
        bail!("--rate must be a non-negative number");
    }
    let events = read_all(log)?;
    let config = ServingConfig::default();
    let store = Arc::new(RealtimeStore::new(config.store.clone()));
    let rec = match artifacts {
        Some(dir) => {
            let (catalog, batch, model) = load_artifacts(dir)?;
            let users: Vec<UserId> = batch.snapshots.sorted().iter().map(|s| s.user_id).collect();
            Some(Recommender::new(
                Arc::new(catalog),
                Arc::new(batch),
                Arc::new(model),
                store.clone(),
                Arc::new(Assignment::hash_split(users, "freshrec", 0.5)),
                config.clone(),
            ))
        }
        None => None,
    };
    let start = Instant::now();
    let mut ingest_time = Duration::ZERO;
    let mut latencies = Vec::new();
    for (i, e) in events.iter().enumerate() {
        if rate > 0.0 {
            let due = Duration::from_secs_f64(i as f64 / rate);
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        let t = Instant::now();
        store.ingest(e)?;
        ingest_time += t.elapsed();
        if let Some(rec) = &rec {
            let t = Instant::now();
            match rec.recommend(&RecRequest {
                user_id: e.user_id,
                now: e.timestamp,
                requested_count: config.list_length,
            }) {
                Ok(_) => latencies.push(t.elapsed()),
                Err(freshrec::serving::ServeError::Assignment(_)) => {}
                Err(err) => return Err(err.into()),
            }
        }
    }
    let wall = start.elapsed();
    latencies.sort_unstable();
    let clock = now.or_else(|| events.last().map(|e| e.timestamp)).unwrap_or(0);
    create_dir(out)?;
    let mut summary = format!(
        "events={}\nwall_s={:.6}\nthroughput_eps={:.1}\ningest_only_eps={:.1}\n",
        events.len(),
        wall.as_secs_f64(),
        events.len() as f64 / wall.as_secs_f64().max(1e-9),
        events.len() as f64 / ingest_time.as_secs_f64().max(1e-9),
    );
    if !latencies.is_empty() {
        summary.push_str(&format!(
            "requests={}\nlatency_p50_us={}\nlatency_p99_us={}\n",
            latencies.len(),
            percentile(&latencies, 0.50).as_micros(),
            percentile(&latencies, 0.99).as_micros()
        ));
    }
    std::fs::write(out.join(REPLAY_FILE), &summary)?;
    let mut files = vec![REPLAY_FILE];
    if dump {
        std::fs::write(out.join(DUMP_FILE), store.dump(clock))?;
        files.push(DUMP_FILE);
    }
    let mut m = manifest("replay", None, None)
        .parameter("log", log.display())
        .parameter("rate", rate)
        .parameter("now", clock);
    if let Some(dir) = artifacts {
        m = m.parameter("artifacts", dir.display());
    }
    m.with_artifacts(out, &files)?.write(out)?;
    print!("{summary}");
    Ok(())
}

fn simulate(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = load_config(config, seed)?;
    let outcome = run_experiment(&cfg, out)?;
    if outcome.model_checksum_before != outcome.model_checksum_after {
        bail!("ranker file changed during the experiment");
    }
    manifest("simulate-ab", config, Some(cfg.seed))
        .parameter("days", cfg.days)
        .parameter("span_s", (cfg.days + cfg.bootstrap_days) as i64 * DAY_S)
        .with_artifacts(
            out,
            &[
                CONFIG_FILE,
                CATALOG_FILE,
                EVENTS_FILE,
                TRAINING_FILE,
                RANKER_FILE,
                IMPRESSIONS_FILE,
                SNAPSHOTS_FILE,
                SIMILARITY_FILE,
                POPULARITY_FILE,
                REPORT_FILE,
                REPORT_KV_FILE,
            ],
        )?
        .write(out)?;
    print!("{}", outcome.text());
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    let path = dir.join(REPORT_KV_FILE);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let report = LiftReport::from_kv(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    print!("{}", report.summary());
    Ok(())
}
