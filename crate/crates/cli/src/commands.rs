use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::info;
use msl_core::filter::{rbpf_run, FilterConfig, Resampling};
use msl_core::forecast::{run_backtest, BacktestConfig};
use msl_core::io::{self, InitMode, ReturnsSeries, RunConfig};
use msl_core::model::{simulate as simulate_model, MslParams, PreparedModel};
use msl_core::parallel::{worker_count, Execution};
use msl_core::pmmh::{
    pmmh_run, prior_draw_start, summarize_chain, write_summary, AdaptSchedule, MslTarget, ParamLayout, ParamTransform, PmmhConfig,
};
use msl_core::rng::splitmix;
use msl_core::{Error, Result, SelectorSpace};

use crate::RunArgs;

const WORKERS_VAR: &str = "MSL_WORKERS";

/// Size the worker pool from `MSL_WORKERS` when set.
pub fn configure_workers() -> Result<()> {
    let Ok(raw) = std::env::var(WORKERS_VAR) else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{WORKERS_VAR}='{raw}' is not a positive integer")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    if n != 1 {
        log::warn!("{WORKERS_VAR}={n} ignored: built without the parallel feature");
    }
    Ok(())
}

fn entropy() -> impl FnMut() -> u64 {
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_nanos() as u64);
    let mut state = nanos ^ u64::from(std::process::id()).rotate_left(32);
    move || {
        state = splitmix(state);
        state
    }
}

/// Load the config, resolve seeds, create the output directory and write the echo.
fn prepare(args: &RunArgs) -> Result<RunConfig> {
    let mut config = RunConfig::load(&args.config)?;
    config.resolve_seeds(entropy());
    fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    write_text(&args.out.join("config.toml"), &config.to_toml()?)?;
    Ok(config)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("{what} is not set")))
}

fn seed(s: Option<u64>) -> u64 {
    s.expect("seeds are resolved in prepare")
}

fn load_returns(config: &RunConfig) -> Result<ReturnsSeries> {
    let series = ReturnsSeries::read(required(&config.data.returns, "[data] returns")?)?;
    if series.is_empty() {
        return Err(Error::data(0, None, "return series is empty"));
    }
    Ok(series)
}

fn space_for(config: &RunConfig, d_y: usize) -> Result<SelectorSpace> {
    SelectorSpace::enumerate(d_y, config.model.max_panic)
}

fn check_dims(theta: &MslParams, series: &ReturnsSeries) -> Result<()> {
    if theta.d_y() != series.d_y() {
        return Err(Error::Config(format!(
            "parameters describe {} assets but the data has {}",
            theta.d_y(),
            series.d_y()
        )));
    }
    Ok(())
}

pub fn simulate(args: &RunArgs) -> Result<()> {
    let config = prepare(args)?;
    let theta = io::read_theta(required(&config.model.theta, "[model] theta")?)?;
    let space = space_for(&config, theta.d_y())?;
    let s = &config.simulate;
    let sim = simulate_model(&theta, &space, s.periods, seed(s.seed))?;
    let dates: Vec<_> = (0..s.periods)
        .map(|k| s.start_date + chrono_days(u64::from(s.step_days) * k as u64))
        .collect();
    let series = ReturnsSeries {
        units: s.units,
        assets: (1..=theta.d_y()).map(|a| format!("asset{a}")).collect(),
        dates: dates.clone(),
        values: sim.returns,
    };
    series.write(&args.out.join("returns.csv"))?;
    io::write_truth(&sim.truth, &space, &dates, &args.out.join("truth.csv"))?;
    info!("simulated {} periods of {} assets", s.periods, theta.d_y());
    Ok(())
}

fn chrono_days(days: u64) -> chrono::Days {
    chrono::Days::new(days)
}

fn training(config: &RunConfig, series: &ReturnsSeries) -> ReturnsSeries {
    series.slice(config.data.train_start, config.data.train_end)
}

pub fn estimate(args: &RunArgs) -> Result<()> {
    let config = prepare(args)?;
    let series = load_returns(&config)?;
    let train = training(&config, &series);
    if train.len() < 2 {
        return Err(Error::data(0, None, "training period has fewer than two observations"));
    }
    let p = &config.pmmh;
    let chain_seed = seed(p.seed);
    let d_f = config.model.factors;
    let base = match p.init {
        InitMode::Theta => {
            let t = io::read_theta(required(&config.model.theta, "[model] theta")?)?;
            check_dims(&t, &train)?;
            t
        }
        InitMode::Moment | InitMode::PriorDraw => MslParams::moment_start(&train.values, d_f, &config.prior)?,
    };
    if !MslParams::has_parsimonious_factor_count(base.d_y(), base.d_f()) {
        log::warn!(
            "d_f={} factors for {} assets has no fewer free parameters than an unrestricted covariance",
            base.d_f(),
            base.d_y()
        );
    }
    let full = ParamLayout::full(base.d_y(), base.d_f());
    let layout = if p.free.is_empty() {
        full.clone()
    } else {
        full.restrict(&p.free)?
    };
    let transform = ParamTransform::new(layout, base.clone(), &config.prior);
    let space = space_for(&config, base.d_y())?;
    let target = MslTarget::new(train.values.clone(), space, config.prior.clone(), transform, p.particles);
    let init_z = match p.init {
        InitMode::PriorDraw => prior_draw_start(&target, chain_seed, 1000)?,
        _ => target.transform.from_natural(&base)?,
    };
    let mut schedule = AdaptSchedule::isotropic(target.transform.dim(), p.sigma0_scale);
    schedule.start = p.adapt_start;
    schedule.stop = p.adapt_stop;
    schedule.ridge = p.ridge;
    let replicas = p.replicas.unwrap_or_else(worker_count);
    let pmmh = PmmhConfig {
        n_iters: p.iterations,
        n_replicas: replicas,
        schedule,
        seed: chain_seed,
        execution: Execution::Parallel,
    };
    let log_path = args.out.join("progress.log");
    let mut progress_log = fs::File::create(&log_path).map_err(|e| Error::Io {
        path: log_path.clone(),
        source: e,
    })?;
    let window = 100;
    let mut recent = std::collections::VecDeque::with_capacity(window);
    let mut accepted_total = 0usize;
    let mut log_err = None;
    info!(
        "PMMH: {} iterations, {} replicas x {} particles, {} parameters",
        p.iterations,
        replicas,
        p.particles,
        target.transform.dim()
    );
    let chain = pmmh_run(&target, &init_z, &pmmh, |state, i| {
        if i > 1 {
            if recent.len() == window {
                recent.pop_front();
            }
            recent.push_back(state.accepted);
            accepted_total += usize::from(state.accepted);
        }
        if i % window == 0 || i == p.iterations {
            let rolling = recent.iter().filter(|&&a| a).count() as f64 / recent.len().max(1) as f64;
            let overall = accepted_total as f64 / (i - 1).max(1) as f64;
            let line = format!(
                "iter {i} avg_loglik {:.4} rolling_acceptance {rolling:.3} overall_acceptance {overall:.3}",
                state.avg_loglik
            );
            info!("{line}");
            if let Err(e) = writeln!(progress_log, "{line}") {
                log_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(Error::Io {
            path: log_path,
            source: e,
        });
    }
    io::write_chain(&chain, &full, &args.out.join("chain.csv"))?;
    Ok(())
}

pub fn filter(args: &RunArgs) -> Result<()> {
    let config = prepare(args)?;
    let series = load_returns(&config)?;
    let theta = io::read_theta(required(&config.model.theta, "[model] theta")?)?;
    check_dims(&theta, &series)?;
    let model = PreparedModel::new(&theta, &space_for(&config, theta.d_y())?)?;
    let f = &config.filter;
    let fc = FilterConfig {
        n_particles: f.particles,
        seed: seed(f.seed),
        resampling: f.ess_threshold.map_or(Resampling::EveryStep, Resampling::EssBelow),
    };
    let out = rbpf_run(&model, &series.values, fc)?;
    let path = args.out.join("filter.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["date", "loglik_increment", "panic_probability", "ess"])?;
    for (k, date) in series.dates.iter().enumerate() {
        w.write_record([
            date.format("%Y-%m-%d").to_string(),
            out.increments[k].to_string(),
            out.panic_probabilities[k].to_string(),
            out.ess[k].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Io { path, source: e })?;
    write_text(
        &args.out.join("filter_summary.txt"),
        &format!("steps: {}\nlog_likelihood: {}\n", series.len(), out.log_likelihood),
    )?;
    info!("log-likelihood estimate {:.4}", out.log_likelihood);
    Ok(())
}

pub fn backtest(args: &RunArgs) -> Result<()> {
    let config = prepare(args)?;
    let series = load_returns(&config)?;
    let b = &config.backtest;
    let theta_path = b.theta.as_ref().or(config.model.theta.as_ref());
    let theta = io::read_theta(required(&theta_path.cloned(), "[backtest] theta or [model] theta")?)?;
    check_dims(&theta, &series)?;
    let model = PreparedModel::new(&theta, &space_for(&config, theta.d_y())?)?;
    let d = &config.data;
    let train = training(&config, &series);
    let test_start = d.test_start.or_else(|| d.train_end.and_then(|e| e.succ_opt()));
    let oos = series.slice(test_start, d.test_end);
    let mut bc = BacktestConfig::new(b.particles, b.alpha, seed(b.seed), series.units.scale());
    bc.start = b.start;
    bc.var_mode = b.var_mode;
    let report = run_backtest(&model, &train.values, &oos.values, &bc)?;
    io::write_backtest(&report, &oos.dates, &series.assets, &args.out.join("backtest.csv"))?;
    write_text(&args.out.join("summary.txt"), &report.summary_text())?;
    info!(
        "{} weeks, {} exceedances, terminal wealth {:.4}",
        report.weeks.len(),
        report.exceedances(),
        report.terminal_wealth()
    );
    Ok(())
}

pub fn summarize(args: &RunArgs) -> Result<()> {
    let config = prepare(args)?;
    let table = io::read_chain(required(&config.summarize.chain, "[summarize] chain")?)?;
    let rows = summarize_chain(&table.names, &table.draws, config.summarize.burn_in)?;
    let path = args.out.join("summary.csv");
    let file = fs::File::create(&path).map_err(|e| Error::Io { path, source: e })?;
    write_summary(&rows, file)?;
    let means: Vec<(String, f64)> = rows.iter().map(|r| (r.name.clone(), r.mean)).collect();
    match io::theta_from_pairs(&means) {
        Ok(theta) => io::write_theta(&theta, &args.out.join("theta_mean.csv"))?,
        Err(e) => log::warn!("posterior mean is not a valid parameter set: {e}"),
    }
    let kept = table.accepted.len() - config.summarize.burn_in;
    let rate = table.accepted[config.summarize.burn_in..].iter().filter(|&&a| a).count() as f64 / kept as f64;
    info!("{kept} draws after burn-in, acceptance {rate:.3}");
    Ok(())
}
