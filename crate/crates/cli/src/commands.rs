//! Subcommand implementations.

use std::io::Write;
use std::path::Path;

use log::{info, warn};
use pcgat::apg::{apg_solve, ApgOptions};
use pcgat::config::sha256_hex;
use pcgat::dataset::{
    check_compatible, load_checkpoint, read_dataset, save_checkpoint, write_dataset, write_power_archive, Dataset,
    DatasetHeader,
};
use pcgat::evalbench::{
    artifact_stem, evaluate_methods, monte_carlo_channel_stats, property_suite, runtime_bench, spread_instance,
    Method,
};
use pcgat::gat::{init_params, GatParams, PilotMode};
use pcgat::training::{generate_dataset, train, KSampling, Precision, TrainConfig};
use pcgat::{Error, RadioConfig, SystemConfig, SystemStats};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::manifest::{OutDir, RunManifest, MANIFEST_NAME};
use crate::{CliError, Command, Common};

type Result<T> = std::result::Result<T, CliError>;

/// Relative tolerance on the estimate mean square in `validate`.
pub const MEAN_SQUARE_TOL: f64 = 0.02;
/// Relative tolerance on the channel/estimate cross-statistic in `validate`.
pub const CROSS_TOL: f64 = 0.03;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate { common, count } => generate(&common, count),
        Command::Train {
            common,
            dataset,
            checkpoint,
            lambda,
            sigma,
            ablation,
            precision,
            epochs,
            batch_size,
            learning_rate,
        } => {
            let tc = TrainConfig {
                lambda,
                batch_size,
                learning_rate,
                epochs,
                precision: precision.parse::<Precision>()?,
                mode: mode(ablation),
                sigma_db: sigma,
                seed: common.seed,
                ..Default::default()
            };
            train_cmd(&common, &dataset, checkpoint.as_deref(), &tc)
        }
        Command::Eval {
            common,
            dataset,
            checkpoint,
            lambda,
            sigma,
            ablation,
        } => eval(&common, &dataset, &checkpoint, lambda, sigma, ablation),
        Command::Apg { common, dataset, lambda } => apg(&common, &dataset, lambda),
        Command::Bench {
            common,
            dataset,
            checkpoint,
            lambda,
            count,
            repeats,
        } => bench(&common, &dataset, &checkpoint, lambda, count, repeats),
        Command::Validate { common, trials, count } => validate(&common, trials, count),
    }
}

fn mode(ablation: bool) -> PilotMode {
    if ablation {
        PilotMode::Ablated
    } else {
        PilotMode::Aware
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    Error::Config(msg.into()).into()
}

/// Effective configuration: file or preset (or the manifest next to the
/// dataset), then `--set` overrides.
pub fn resolve_config(c: &Common, dataset: Option<&Path>) -> Result<SystemConfig> {
    let base = if let Some(path) = &c.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str::<SystemConfig>(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
    } else if let Some(id) = c.scenario {
        SystemConfig::scenario(id)?
    } else if let Some(m) = dataset
        .and_then(Path::parent)
        .map(|dir| dir.join(MANIFEST_NAME))
        .filter(|p| p.exists())
    {
        info!("using the configuration recorded in {}", m.display());
        RunManifest::read(&m)?.effective_config
    } else {
        SystemConfig::default()
    };
    let cfg = apply_overrides(base, &c.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_overrides(base: SystemConfig, overrides: &[String]) -> Result<SystemConfig> {
    if overrides.is_empty() {
        return Ok(base);
    }
    let mut doc = toml::Table::try_from(&base).map_err(|e| config_err(e.to_string()))?;
    let mut scenario_set = false;
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| config_err(format!("override {o:?} is not KEY=VALUE")))?;
        let path: Vec<&str> = key.trim().split('.').collect();
        scenario_set |= path == ["scenario"];
        let (last, parents) = path.split_last().expect("split yields one part");
        let mut table = &mut doc;
        for p in parents {
            table = table
                .get_mut(*p)
                .and_then(toml::Value::as_table_mut)
                .ok_or_else(|| config_err(format!("unknown config section {p:?} in {key:?}")))?;
        }
        let old = table.get(*last);
        if old.is_none() && path != ["scenario"] {
            return Err(config_err(format!("unknown config field {key:?}")));
        }
        let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.trim().into()));
        // `--set area_km2=1` should not be rejected for lacking a decimal point
        let value = match (old, parsed) {
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        table.insert((*last).into(), value);
    }
    let mut cfg: SystemConfig = doc.try_into().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
    if !scenario_set {
        cfg.scenario = base.scenario;
    }
    Ok(cfg)
}

fn setup_threads(c: &Common) -> Result<usize> {
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(config_err("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_err(e.to_string()))?;
    }
    Ok(rayon::current_num_threads())
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn input_record(path: &Path) -> Result<Value> {
    Ok(json!({ "path": path.display().to_string(), "sha256": file_digest(path)? }))
}

/// Read a dataset and check it against the effective configuration.
fn load_dataset(path: &Path, sys: &SystemConfig, cfg: &RadioConfig) -> Result<Dataset> {
    let d = read_dataset(path)?;
    let h = &d.header;
    if (h.m, h.k_max, h.t_p) != (cfg.m, cfg.k_max, cfg.t_p) {
        return Err(Error::shape(
            "dataset (M, K_max, T_p) against the configuration",
            format!("({}, {}, {})", cfg.m, cfg.k_max, cfg.t_p),
            format!("({}, {}, {})", h.m, h.k_max, h.t_p),
        )
        .into());
    }
    if h.config_hash != sys.hash() {
        warn!("dataset {} was generated under a different configuration hash", path.display());
    }
    Ok(d)
}

fn load_params(path: &Path, sys: &SystemConfig, cfg: &RadioConfig) -> Result<GatParams> {
    let (params, header) = load_checkpoint(path)?;
    check_compatible(&header, cfg.m, cfg.k_max, &sys.hash())?;
    Ok(params)
}

fn write_text(path: &Path, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let file = std::fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn generate(c: &Common, count: usize) -> Result<()> {
    let sys = resolve_config(c, None)?;
    let cfg = sys.radio()?;
    if count == 0 {
        return Err(config_err("--count must be at least 1"));
    }
    let threads = setup_threads(c)?;
    let manifest = RunManifest::new("generate", c.seed, threads, &sys, json!({ "count": count }));
    let mut out = OutDir::create(&c.out, manifest)?;
    let samples = generate_dataset(&cfg, count, c.seed, KSampling::from_config(&cfg))?;
    let header = DatasetHeader {
        m: cfg.m,
        k_max: cfg.k_max,
        t_p: cfg.t_p,
        count,
        config_hash: sys.hash(),
    };
    let path = out.artifact("dataset.bin")?;
    write_dataset(&path, &header, &samples)?;
    info!("wrote {count} samples to {} (sha256 {})", path.display(), file_digest(&path)?);
    out.finish()?;
    Ok(())
}

fn train_cmd(c: &Common, dataset: &Path, warm: Option<&Path>, tc: &TrainConfig) -> Result<()> {
    tc.validate()?;
    let sys = resolve_config(c, Some(dataset))?;
    let cfg = sys.radio()?;
    let threads = setup_threads(c)?;
    let data = load_dataset(dataset, &sys, &cfg)?;
    let params0 = match warm {
        Some(p) => load_params(p, &sys, &cfg)?,
        None => init_params(c.seed, cfg.m),
    };
    let settings = json!({
        "dataset": input_record(dataset)?,
        "warm_start": warm.map(input_record).transpose()?,
        "lambda": tc.lambda,
        "sigma_db": tc.sigma_db,
        "ablation": tc.mode == PilotMode::Ablated,
        "precision": "f64",
        "epochs": tc.epochs,
        "batch_size": tc.batch_size,
        "learning_rate": tc.learning_rate,
        "beta1": tc.beta1,
        "beta2": tc.beta2,
        "adam_eps": tc.adam_eps,
        "shard_size": tc.shard_size,
        "holdout_fraction": tc.holdout_fraction,
    });
    let mut out = OutDir::create(&c.out, RunManifest::new("train", c.seed, threads, &sys, settings))?;
    let (params, log) = train(&data.samples, &params0, &cfg, tc)?;
    let ckpt = out.artifact("checkpoint.bin")?;
    save_checkpoint(&ckpt, &params, cfg.k_max, sys.hash())?;
    let log_path = out.artifact("train_log.csv")?;
    write_text(&log_path, |w| log.write_csv(w))?;
    let best = &log.epochs[log.best_epoch];
    println!(
        "best epoch {} with held-out mean min-SE {:.6}; checkpoint {}",
        log.best_epoch,
        best.holdout_min_se,
        ckpt.display()
    );
    out.finish()?;
    Ok(())
}

fn eval(c: &Common, dataset: &Path, checkpoint: &Path, lambda: f64, sigma: f64, ablation: bool) -> Result<()> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(config_err(format!("--sigma must be non-negative, got {sigma}")));
    }
    let sys = resolve_config(c, Some(dataset))?;
    let cfg = sys.radio()?;
    let threads = setup_threads(c)?;
    let data = load_dataset(dataset, &sys, &cfg)?;
    let params = load_params(checkpoint, &sys, &cfg)?;
    let opts = ApgOptions {
        lambda,
        ..Default::default()
    };
    opts.validate()?;
    let settings = json!({
        "dataset": input_record(dataset)?,
        "checkpoint": input_record(checkpoint)?,
        "lambda": lambda,
        "sigma_db": sigma,
        "ablation": ablation,
    });
    let mut out = OutDir::create(&c.out, RunManifest::new("eval", c.seed, threads, &sys, settings))?;
    let net = if ablation {
        Method::gat_ablation(&params)
    } else {
        Method::gat(&params)
    };
    let report = evaluate_methods(&data.samples, &cfg, &[Method::apg(opts), net], sigma, c.seed)?;
    let stem = format!("{}_sigma{sigma}", artifact_stem(&sys));
    for path in report.save(&out.root.clone(), &stem)? {
        out.record(&path);
    }
    for m in &report.methods {
        let q = m.quantiles()?;
        println!(
            "{:<14} mean min-SE {:.5}  SE quantiles 5% {:.4} 50% {:.4} 95% {:.4}",
            m.name,
            m.mean_min_se(),
            q[0],
            q[1],
            q[2]
        );
    }
    out.finish()?;
    Ok(())
}

fn apg(c: &Common, dataset: &Path, lambda: f64) -> Result<()> {
    let sys = resolve_config(c, Some(dataset))?;
    let cfg = sys.radio()?;
    let threads = setup_threads(c)?;
    let data = load_dataset(dataset, &sys, &cfg)?;
    let opts = ApgOptions {
        lambda,
        ..Default::default()
    };
    opts.validate()?;
    let settings = json!({ "dataset": input_record(dataset)?, "lambda": lambda });
    let mut out = OutDir::create(&c.out, RunManifest::new("apg", c.seed, threads, &sys, settings))?;
    let solved = data
        .samples
        .par_iter()
        .map(|s| {
            let st = SystemStats::for_sample(s, &cfg);
            apg_solve(s, &st, &cfg, &opts)
        })
        .collect::<pcgat::Result<Vec<_>>>()?;
    let powers: Vec<_> = solved.iter().map(|(p, _)| p.clone()).collect();
    write_power_archive(&out.artifact("powers.bin")?, &powers)?;
    write_text(&out.artifact("traces.csv")?, |w| {
        writeln!(w, "sample,iteration,utility,min_se,step,restart")?;
        for (i, (_, t)) in solved.iter().enumerate() {
            for it in 0..t.utility.len() {
                writeln!(
                    w,
                    "{i},{it},{},{},{},{}",
                    t.utility[it], t.min_se[it], t.step[it], t.restart[it] as u8
                )?;
            }
        }
        Ok(())
    })?;
    write_text(&out.artifact("summary.csv")?, |w| {
        writeln!(w, "sample,k_act,iterations,utility,min_se,wall_s")?;
        for (i, ((_, t), s)) in solved.iter().zip(&data.samples).enumerate() {
            writeln!(
                w,
                "{i},{},{},{},{},{}",
                s.k_act,
                t.iterations(),
                t.utility.last().copied().unwrap_or(f64::NAN),
                t.min_se.last().copied().unwrap_or(f64::NAN),
                t.wall_time.as_secs_f64()
            )?;
        }
        Ok(())
    })?;
    let mean = solved.iter().filter_map(|(_, t)| t.min_se.last()).sum::<f64>() / solved.len().max(1) as f64;
    println!("solved {} instances; mean min-SE {mean:.5}", solved.len());
    out.finish()?;
    Ok(())
}

fn bench(c: &Common, dataset: &Path, checkpoint: &Path, lambda: f64, count: usize, repeats: usize) -> Result<()> {
    let sys = resolve_config(c, Some(dataset))?;
    let cfg = sys.radio()?;
    let threads = setup_threads(c)?;
    let data = load_dataset(dataset, &sys, &cfg)?;
    let params = load_params(checkpoint, &sys, &cfg)?;
    let opts = ApgOptions {
        lambda,
        ..Default::default()
    };
    opts.validate()?;
    let settings = json!({
        "dataset": input_record(dataset)?,
        "checkpoint": input_record(checkpoint)?,
        "lambda": lambda,
        "count": count,
        "repeats": repeats,
    });
    let mut out = OutDir::create(&c.out, RunManifest::new("bench", c.seed, threads, &sys, settings))?;
    let subset = &data.samples[..count.min(data.samples.len())];
    let report = runtime_bench(&[Method::apg(opts), Method::gat(&params)], subset, &cfg, repeats)?;
    report.save(&out.artifact(&format!("{}_bench.csv", artifact_stem(&sys)))?)?;
    for r in &report.rows {
        println!("{:<6} median {:.6} s/sample over {} samples", r.method, r.median_s(), r.samples);
    }
    if let (Some(a), Some(g)) = (report.row("apg"), report.row("gat")) {
        println!("speed-up of the network over APG: {:.2}x", a.median_s() / g.median_s());
    }
    out.finish()?;
    Ok(())
}

/// Small contaminated system used by the Monte-Carlo check.
pub fn validation_system(sys: &SystemConfig) -> SystemConfig {
    let mut small = sys.clone();
    small.scenario = None;
    small.aps = 4;
    small.antennas = 2;
    small.k_max = 6;
    small.k_min = 6;
    small.pilot_len = 4;
    small
}

fn validate(c: &Common, trials: usize, count: usize) -> Result<()> {
    let sys = resolve_config(c, None)?;
    let cfg = sys.radio()?;
    let threads = setup_threads(c)?;
    let small = validation_system(&sys).radio()?;
    let settings = json!({
        "trials": trials,
        "property_instances": count,
        "mean_square_tol": MEAN_SQUARE_TOL,
        "cross_tol": CROSS_TOL,
    });
    let mut out = OutDir::create(&c.out, RunManifest::new("validate", c.seed, threads, &sys, settings))?;
    let instance = spread_instance(&small, 10.0, c.seed)?;
    let mc = monte_carlo_channel_stats(&instance, &small, trials, &mut ChaCha8Rng::seed_from_u64(c.seed))?;
    write_text(&out.artifact("channel_stats.csv")?, |w| mc.write_csv(w))?;
    let checks = property_suite(&cfg, count, c.seed)?;
    write_text(&out.artifact("properties.csv")?, |w| {
        writeln!(w, "property,cases,worst,tolerance,passed")?;
        for p in &checks {
            writeln!(w, "{},{},{},{},{}", p.name, p.cases, p.worst, p.tolerance, p.passed)?;
        }
        Ok(())
    })?;
    out.finish()?;

    let mut failures = Vec::new();
    let (ms, cross) = (mc.max_mean_square_dev(), mc.max_cross_dev());
    println!("estimate mean square: max relative deviation {ms:.4} (tolerance {MEAN_SQUARE_TOL})");
    println!("cross-statistic:      max relative deviation {cross:.4} (tolerance {CROSS_TOL})");
    if ms >= MEAN_SQUARE_TOL {
        failures.push(format!("mean square deviation {ms:.4}"));
    }
    if cross >= CROSS_TOL {
        failures.push(format!("cross-statistic deviation {cross:.4}"));
    }
    for p in &checks {
        println!(
            "{:<30} {} (worst {:.3e}, tolerance {:.1e}, {} cases)",
            p.name,
            if p.passed { "ok" } else { "FAILED" },
            p.worst,
            p.tolerance,
            p.cases
        );
        if !p.passed {
            failures.push(p.name.clone());
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failures.join(", ")))
    }
}
