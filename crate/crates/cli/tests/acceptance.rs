//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use freshrec::batch::{run_batch_events, HistorySnapshot};
use freshrec::config::{BatchConfig, ExperimentConfig, ServingConfig, StoreConfig};
use freshrec::event_log::{read_all, Catalog, Item, WatchEvent};
use freshrec::injection::{merge_history, Arm, Assignment, MergedHistory, Source};
use freshrec::manifest::{manifest_file, sha256_file};
use freshrec::ranking::{loss_and_gradient, FeatureVector, RankerModel, TrainingImpression, BIAS, FEATURE_DIM};
use freshrec::realtime::{RealtimeStore, RecentWindow};
use freshrec::serving::{format_response, load_artifacts, RecRequest, Recommender, RANKER_FILE};
use freshrec::simulation::{run_experiment, two_proportion_ztest, LiftReport, REPORT_FILE, REPORT_KV_FILE};
use freshrec::{HistoryEntry, ItemId, UserId, DAY_S};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type ReaderLog = Vec<(u32, Vec<(ItemId, i64)>)>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_freshrec"))
        .args(args)
        .output()
        .map_err(|e| format!("spawning cli: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "cli {:?} exited {}: {}",
            args,
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn simulate_cli(dir: &Path) -> Result<LiftReport, String> {
    cli(&["simulate-ab", "--out", dir.to_str().unwrap()])?;
    let text = std::fs::read_to_string(dir.join(REPORT_KV_FILE)).map_err(|e| e.to_string())?;
    LiftReport::from_kv(&text)
}

fn run_seeded(config: ExperimentConfig) -> Result<LiftReport, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_experiment(&config, dir.path())
        .map(|o| o.report)
        .map_err(|e| e.to_string())
}

fn lift_line(seed: u64, r: &LiftReport) -> String {
    format!("seed {seed}: lift {:+.3}% p={:.2e}", r.relative_lift * 100.0, r.p_value)
}

fn directional_lift(default_run: &LiftReport) -> Outcome {
    let mut ok = default_run.relative_lift > 0.0 && default_run.p_value < 0.05;
    let mut parts = vec![lift_line(ExperimentConfig::default().seed, default_run)];
    for seed in 1..=5 {
        let r = run_seeded(ExperimentConfig {
            seed,
            ..ExperimentConfig::default()
        })?;
        ok &= r.relative_lift > 0.0 && r.p_value < 0.05;
        parts.push(lift_line(seed, &r));
    }
    check(ok, parts.join("; "))
}

fn null_safety() -> Outcome {
    let mut null_quiet = 0;
    let mut aa_positives = 0;
    for seed in 1..=20 {
        let null = run_seeded(ExperimentConfig {
            seed,
            drift_probability: 0.0,
            ..ExperimentConfig::default()
        })?;
        if null.p_value > 0.05 {
            null_quiet += 1;
        }
        let aa = run_seeded(ExperimentConfig {
            seed,
            injection_enabled: false,
            ..ExperimentConfig::default()
        })?;
        if aa.p_value < 0.05 {
            aa_positives += 1;
        }
    }
    check(
        null_quiet >= 18 && aa_positives <= 2,
        format!("drift=0: {null_quiet}/20 with p>0.05; A/A false positives {aa_positives}/20"),
    )
}

fn recommender_from_run(dir: &Path, config: &ExperimentConfig) -> Result<(Recommender, i64), String> {
    let (catalog, batch, model) = load_artifacts(dir).map_err(|e| e.to_string())?;
    let serving = config.serving();
    let store = Arc::new(RealtimeStore::new(serving.store.clone()));
    let events = read_all(&dir.join(freshrec::simulation::EVENTS_FILE)).map_err(|e| e.to_string())?;
    let now = events
        .last()
        .map(|e| e.timestamp.div_euclid(DAY_S) * DAY_S + DAY_S)
        .unwrap_or(0);
    let assignment = Assignment::hash_split(
        (0..config.user_count as u32).map(UserId),
        &config.salt,
        config.split_ratio,
    );
    let rec = Recommender::new(
        Arc::new(catalog),
        Arc::new(batch),
        Arc::new(model),
        store,
        Arc::new(assignment),
        serving,
    );
    for e in events.iter().filter(|e| now - e.timestamp <= DAY_S) {
        rec.ingest(e).map_err(|e| e.to_string())?;
    }
    Ok((rec, now))
}

fn staleness(dir: &Path) -> Outcome {
    let config = ExperimentConfig::default();
    let (rec, now) = recommender_from_run(dir, &config)?;
    let log_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let log_path = log_dir.path().join("control.log");
    let rec = rec.with_impression_log(&log_path).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut responses = Vec::new();
    while responses.len() < 100 {
        let user = UserId(rng.gen_range(0..config.user_count as u32));
        if rec.arm_of(user).map_err(|e| e.to_string())? != Arm::Control {
            continue;
        }
        let imp = rec
            .recommend(&RecRequest {
                user_id: user,
                now: now - rng.gen_range(0..3_600),
                requested_count: config.list_length,
            })
            .map_err(|e| e.to_string())?;
        responses.push(format_response(&imp.list, imp.arm));
    }
    rec.flush_impressions().map_err(|e| e.to_string())?;
    let logged: Vec<String> = std::fs::read_to_string(&log_path)
        .map_err(|e| e.to_string())?
        .lines()
        .map(str::to_string)
        .collect();

    let items = rec.catalog().len() as u32;
    let requested: Vec<UserId> = logged
        .iter()
        .map(|l| UserId(l.split(',').next().unwrap().parse().unwrap()))
        .collect();
    for k in 0..10_000 {
        let user = if k % 2 == 0 {
            requested[rng.gen_range(0..requested.len())]
        } else {
            UserId(rng.gen_range(0..config.user_count as u32))
        };
        let e = WatchEvent {
            user_id: user,
            item_id: ItemId(rng.gen_range(0..items)),
            timestamp: now - rng.gen_range(0..DAY_S),
            watch_duration_s: 600,
            completion_fraction: 0.5,
        };
        rec.ingest(&e).map_err(|e| e.to_string())?;
    }

    let mut same = 0;
    for (line, original) in logged.iter().zip(&responses) {
        let fields: Vec<&str> = line.splitn(5, ',').collect();
        let request = RecRequest {
            user_id: UserId(fields[0].parse().unwrap()),
            now: fields[1].parse().unwrap(),
            requested_count: fields[2].parse().unwrap(),
        };
        let served = rec.serve_arm(request.user_id, Arm::Control, request.now, request.requested_count);
        let served = served.map_err(|e| e.to_string())?;
        let replayed = freshrec::serving::Impression {
            request,
            arm: Arm::Control,
            list: served.list.clone(),
            served_at: request.now,
        };
        if replayed.to_line() == *line && format_response(&served.list, Arm::Control) == *original {
            same += 1;
        }
    }
    check(
        same == 100 && logged.len() == 100,
        format!(
            "{same}/{} control responses identical after 10000 ingests",
            logged.len()
        ),
    )
}

fn responsiveness() -> Outcome {
    // items 0..10 genre 0, 10..20 genre 1, 20..30 genre 2
    let items: Vec<Item> = (0..30u32)
        .map(|i| {
            let mut v = vec![0.0; 3];
            v[(i / 10) as usize] = 1.0;
            Item {
                item_id: ItemId(i),
                genre_vector: v,
                release_day: 0,
            }
        })
        .collect();
    let catalog = Catalog::new(items, 3).map_err(|e| e.to_string())?;
    let ev = |u: u32, i: u32, ts: i64| WatchEvent {
        user_id: UserId(u),
        item_id: ItemId(i),
        timestamp: ts,
        watch_duration_s: 1_200,
        completion_fraction: 0.8,
    };
    let mut events = Vec::new();
    for k in 0..6u32 {
        events.push(ev(0, 10 + k, DAY_S + k as i64));
    }
    for u in 1..=30u32 {
        let genre = u % 3;
        for k in 0..6u32 {
            events.push(ev(u, genre * 10 + (u + k) % 10, DAY_S + 100 + (u * 10 + k) as i64));
        }
    }
    events.sort_by_key(|e| e.timestamp);
    let batch = run_batch_events(&events, &catalog, 2 * DAY_S, &BatchConfig::default()).map_err(|e| e.to_string())?;
    let rec = Recommender::new(
        Arc::new(catalog),
        Arc::new(batch),
        Arc::new(RankerModel::heuristic()),
        Arc::new(RealtimeStore::new(StoreConfig::default())),
        Arc::new(Assignment::hash_split((0..=30).map(UserId), "scenario", 0.5)),
        ServingConfig::default(),
    );
    let watched = [20u32, 21, 22];
    for (k, i) in watched.iter().enumerate() {
        rec.ingest(&ev(0, *i, 2 * DAY_S + 3_600 * (k as i64 + 1)))
            .map_err(|e| e.to_string())?;
    }
    let now = 2 * DAY_S + 4 * 3_600;
    let mass = |arm| -> Result<(f64, Vec<ItemId>), String> {
        let list = rec.serve_arm(UserId(0), arm, now, 10).map_err(|e| e.to_string())?.list;
        let m = list
            .items()
            .map(|i| rec.catalog().get(i).unwrap().genre_vector[2])
            .sum::<f64>();
        Ok((m, list.items().collect()))
    };
    let (control, _) = mass(Arm::Control)?;
    let (treatment, shown) = mass(Arm::Treatment)?;
    let repeats = shown.iter().filter(|i| watched.contains(&i.0)).count();
    check(
        treatment > control && repeats == 0,
        format!(
            "genre-2 mass in top-10: treatment {treatment:.1} vs control {control:.1}; watched items shown {repeats}"
        ),
    )
}

fn reference_merge(batch: &[HistoryEntry], recent: &[HistoryEntry], k: usize) -> Vec<(HistoryEntry, Source)> {
    let mut best: HashMap<ItemId, (HistoryEntry, Source)> = HashMap::new();
    for e in batch {
        best.insert(e.item_id, (*e, Source::Batch));
    }
    for e in recent {
        if best.get(&e.item_id).is_none_or(|(b, _)| b.timestamp <= e.timestamp) {
            best.insert(e.item_id, (*e, Source::Recent));
        }
    }
    let mut all: Vec<_> = best.into_values().collect();
    all.sort_by(|a, b| b.0.timestamp.cmp(&a.0.timestamp).then(a.0.item_id.cmp(&b.0.item_id)));
    all.truncate(k);
    all
}

fn random_entries(rng: &mut ChaCha8Rng, max_len: usize, lo: i64, hi: i64) -> Vec<HistoryEntry> {
    let n = rng.gen_range(0..=max_len);
    let mut v: Vec<HistoryEntry> = (0..n)
        .map(|_| {
            HistoryEntry::new(
                ItemId(rng.gen_range(0..40)),
                rng.gen_range(lo..hi),
                rng.gen_range(0.0..1.0),
            )
        })
        .collect();
    v.sort_by(|a, b| b.timestamp.cmp(&a.timestamp).then(a.item_id.cmp(&b.item_id)));
    let mut seen = HashSet::new();
    v.retain(|e| seen.insert(e.item_id));
    v
}

fn merged_invariants(m: &MergedHistory, k: usize, batch: &[HistoryEntry], recent: &[HistoryEntry]) -> bool {
    let mut seen = HashSet::new();
    m.len() <= k
        && m.entries.windows(2).all(|w| {
            let (a, b) = (&w[0].entry, &w[1].entry);
            a.timestamp > b.timestamp || (a.timestamp == b.timestamp && a.item_id < b.item_id)
        })
        && m.entries.iter().all(|e| {
            let source = if e.source == Source::Batch { batch } else { recent };
            seen.insert(e.entry.item_id) && source.contains(&e.entry)
        })
}

fn merge_oracle() -> Outcome {
    let (now, ttl) = (1_000_000i64, 86_400i64);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = 0;
    for _ in 0..10_000 {
        let batch = random_entries(&mut rng, 60, 0, now);
        let recent = random_entries(&mut rng, 25, now - ttl, now + 1);
        let k = rng.gen_range(1..60);
        let snapshot = HistorySnapshot {
            user_id: UserId(1),
            entries: batch.clone(),
            cutoff_ts: now - ttl,
        };
        let window = RecentWindow {
            user_id: UserId(1),
            entries: recent.clone(),
            ttl_s: ttl,
        };
        let merged = merge_history(Some(&snapshot), &window, now, k);
        let got: Vec<_> = merged.entries.iter().map(|e| (e.entry, e.source)).collect();
        if !merged_invariants(&merged, k, &batch, &recent) || got != reference_merge(&batch, &recent, k) {
            failures += 1;
        }
    }
    check(failures == 0, format!("{failures} mismatches in 10000 random pairs"))
}

const CAP: usize = 20;
const TTL: i64 = 86_400;

fn ev(user: u32, item: u32, ts: i64) -> WatchEvent {
    WatchEvent {
        user_id: UserId(user),
        item_id: ItemId(item),
        timestamp: ts,
        watch_duration_s: 60,
        completion_fraction: 0.5,
    }
}

/// Sequential reference: latest timestamp per item, newest `CAP`, then the
/// visibility filter at `now`.
fn model_read(latest: &HashMap<ItemId, i64>, now: i64) -> Vec<(ItemId, i64)> {
    let mut all: Vec<(ItemId, i64)> = latest.iter().map(|(i, t)| (*i, *t)).collect();
    all.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(CAP);
    all.retain(|(_, t)| *t <= now && now - *t <= TTL);
    all
}

fn shape(w: &RecentWindow) -> Vec<(ItemId, i64)> {
    w.entries.iter().map(|e| (e.item_id, e.timestamp)).collect()
}

fn store_config() -> StoreConfig {
    StoreConfig { r_cap: CAP, ttl_s: TTL }
}

fn linearizability() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let users = 3u32;
    let now = 1_000;
    let mut bad_schedules = 0;
    for schedule in 0..500u64 {
        let per_user: Vec<Vec<WatchEvent>> = (0..users)
            .map(|u| {
                (0..rng.gen_range(1..40))
                    .map(|_| ev(u, rng.gen_range(0..25), rng.gen_range(0..1_000)))
                    .collect()
            })
            .collect();
        let prefixes: Vec<Vec<Vec<(ItemId, i64)>>> = per_user
            .iter()
            .map(|evs| {
                let mut latest = HashMap::new();
                let mut states = vec![model_read(&latest, now)];
                for e in evs {
                    let t = latest.entry(e.item_id).or_insert(e.timestamp);
                    *t = (*t).max(e.timestamp);
                    states.push(model_read(&latest, now));
                }
                states
            })
            .collect();
        let store = Arc::new(RealtimeStore::new(store_config()));
        let reads: Vec<ReaderLog> = std::thread::scope(|s| {
            for evs in &per_user {
                let store = store.clone();
                s.spawn(move || evs.iter().for_each(|e| drop(store.ingest(e))));
            }
            let readers: Vec<_> = (0..2u64)
                .map(|r| {
                    let store = store.clone();
                    s.spawn(move || {
                        let mut rng = ChaCha8Rng::seed_from_u64(schedule * 2 + r);
                        (0..60)
                            .map(|_| {
                                let u = rng.gen_range(0..users);
                                (u, shape(&store.get_recent(UserId(u), now)))
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            readers.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut ok = true;
        for reader in reads {
            let mut floor = vec![0usize; users as usize];
            for (u, seen) in reader {
                let states = &prefixes[u as usize];
                match (floor[u as usize]..states.len()).find(|&k| states[k] == seen) {
                    Some(k) => floor[u as usize] = k,
                    None => ok = false,
                }
            }
        }
        for u in 0..users {
            ok &= shape(&store.get_recent(UserId(u), now)) == *prefixes[u as usize].last().unwrap();
        }
        if !ok {
            bad_schedules += 1;
        }
    }

    let mut eviction_mismatches = 0;
    for _ in 0..1_000 {
        let lazy = RealtimeStore::new(store_config());
        let eager = RealtimeStore::new(store_config());
        for _ in 0..rng.gen_range(0..150) {
            let e = ev(rng.gen_range(0..4), rng.gen_range(0..40), rng.gen_range(0..400_000));
            lazy.ingest(&e).map_err(|e| e.to_string())?;
            eager.ingest(&e).map_err(|e| e.to_string())?;
        }
        let now = rng.gen_range(0..500_000);
        eager.evict_expired(now);
        let same = (0..4).all(|u| lazy.get_recent(UserId(u), now) == eager.get_recent(UserId(u), now))
            && lazy.dump(now) == eager.dump(now);
        if !same {
            eviction_mismatches += 1;
        }
    }
    check(
        bad_schedules == 0 && eviction_mismatches == 0,
        format!("{bad_schedules}/500 schedules off-model; {eviction_mismatches}/1000 lazy vs eager mismatches"),
    )
}

fn ranker_numerics(dir: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let rows: Vec<TrainingImpression> = (0..50u32)
            .map(|i| {
                let mut values = [0.0; FEATURE_DIM];
                values.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
                values[BIAS] = 1.0;
                TrainingImpression::new(UserId(0), ItemId(i), 0, rng.gen_bool(0.3), FeatureVector { values })
            })
            .collect();
        let mut w = [0.0; FEATURE_DIM];
        w.iter_mut().for_each(|x| *x = rng.gen_range(-2.0..2.0));
        let l2 = 1e-4;
        let (_, grad) = loss_and_gradient(&w, &rows, l2);
        for j in 0..FEATURE_DIM {
            let (mut up, mut down) = (w, w);
            up[j] += eps;
            down[j] -= eps;
            let fd = (loss_and_gradient(&up, &rows, l2).0 - loss_and_gradient(&down, &rows, l2).0) / (2.0 * eps);
            worst = worst.max((fd - grad[j]).abs());
        }
    }
    let report = std::fs::read_to_string(dir.join(REPORT_FILE)).map_err(|e| e.to_string())?;
    let line = report
        .lines()
        .find(|l| l.trim_start().starts_with("model sha256"))
        .ok_or("report has no model checksum line")?;
    let tokens: Vec<&str> = line.split_whitespace().collect();
    let (before, after) = (tokens[3], tokens[5]);
    let on_disk = sha256_file(&dir.join(RANKER_FILE)).map_err(|e| e.to_string())?;
    check(
        worst < 1e-6 && before == after && after == on_disk,
        format!(
            "max |fd - grad| {worst:.2e}; ranker sha256 {} before/after/on-disk equal: {}",
            &before[..12],
            before == after && after == on_disk
        ),
    )
}

fn stats_oracle() -> Outcome {
    let cases = [
        ((500, 10_000, 500, 10_000), (0.0, 1.0)),
        (
            (5_200, 100_000, 5_000, 100_000),
            (2.0328100706668577, 0.04207171530471452),
        ),
        (
            (5_000, 100_000, 5_200, 100_000),
            (-2.0328100706668577, 0.04207171530471452),
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for ((ca, na, cb, nb), (z_want, p_want)) in cases {
        let (z, p) = two_proportion_ztest(ca, na, cb, nb);
        ok &= (z - z_want).abs() < 5e-4 && (p - p_want).abs() < 5e-4;
        parts.push(format!("{ca}/{na} vs {cb}/{nb}: z={z:.3} p={p:.3}"));
    }
    check(ok, parts.join("; "))
}

fn determinism(first: &Path, second: &Path) -> Outcome {
    let mut differing = Vec::new();
    let manifest = manifest_file("simulate-ab");
    for name in [REPORT_KV_FILE, REPORT_FILE, manifest.as_str()] {
        let a = std::fs::read(first.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let b = std::fs::read(second.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if a != b {
            differing.push(name);
        }
    }
    check(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{REPORT_KV_FILE}, {REPORT_FILE} and {manifest} byte-identical across two runs")
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn percentile(sorted: &[Duration], q: f64) -> Duration {
    let idx = ((sorted.len() as f64 * q).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

fn performance(dir: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let events: Vec<WatchEvent> = (0..1_000_000)
        .map(|k| ev(rng.gen_range(0..10_000), rng.gen_range(0..2_000), k / 10))
        .collect();
    let store = RealtimeStore::new(StoreConfig::default());
    let start = Instant::now();
    for e in &events {
        store.ingest(e).map_err(|e| e.to_string())?;
    }
    let rate = events.len() as f64 / start.elapsed().as_secs_f64();

    let config = ExperimentConfig::default();
    let (rec, now) = recommender_from_run(dir, &config)?;
    let mut latencies = Vec::with_capacity(5_000);
    for _ in 0..5_000 {
        let request = RecRequest {
            user_id: UserId(rng.gen_range(0..config.user_count as u32)),
            now,
            requested_count: config.list_length,
        };
        let t = Instant::now();
        let imp = rec.recommend(&request).map_err(|e| e.to_string())?;
        let _ = format_response(&imp.list, imp.arm);
        latencies.push(t.elapsed());
    }
    latencies.sort_unstable();
    let (p50, p99) = (percentile(&latencies, 0.5), percentile(&latencies, 0.99));
    check(
        rate >= 100_000.0,
        format!(
            "store ingest {rate:.0}/s (asserted >= 100000); serving p50 {}us p99 {}us over 5000 requests, {} items (soft target p99 <= 5ms: {})",
            p50.as_micros(),
            p99.as_micros(),
            rec.catalog().len(),
            if p99 <= Duration::from_millis(5) { "met" } else { "missed" }
        ),
    )
}

fn report(n: usize, name: &str, outcome: Outcome) -> bool {
    match outcome {
        Ok(detail) => {
            println!("criterion {n} {name}: PASS ({detail})");
            true
        }
        Err(detail) => {
            println!("criterion {n} {name}: FAIL ({detail})");
            false
        }
    }
}

fn main() {
    let first = tempfile::tempdir().expect("temp dir");
    let second = tempfile::tempdir().expect("temp dir");
    let default_run = simulate_cli(first.path());

    let mut all = true;
    all &= report(
        1,
        "directional lift",
        default_run.clone().and_then(|r| directional_lift(&r)),
    );
    all &= report(2, "null safety", null_safety());
    all &= report(
        3,
        "staleness invariant",
        default_run.clone().and_then(|_| staleness(first.path())),
    );
    all &= report(4, "responsiveness scenario", responsiveness());
    all &= report(5, "merge oracle", merge_oracle());
    all &= report(6, "store linearizability", linearizability());
    all &= report(
        7,
        "ranker numerics",
        default_run.clone().and_then(|_| ranker_numerics(first.path())),
    );
    all &= report(8, "statistics oracle", stats_oracle());
    all &= report(
        9,
        "determinism",
        default_run
            .clone()
            .and_then(|_| simulate_cli(second.path()))
            .and_then(|_| determinism(first.path(), second.path())),
    );
    all &= report(
        10,
        "desk-scale performance",
        default_run.and_then(|_| performance(first.path())),
    );
    if !all {
        std::process::exit(1);
    }
}
