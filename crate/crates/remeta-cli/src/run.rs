//! Command implementations shared by direct invocation and manifest replay.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

use remeta::diagnostics::{rank_histogram, summarize};
use remeta::study::{
    beta_coverage_curve, coverage_study, empirical_analysis, rhat_study, EmpiricalOptions,
    SimScenario,
};
use remeta::ModelSpec;

use crate::config_file;
use crate::io;
use crate::manifest::Manifest;
use crate::options::{
    input_error, resolve_common, CommonFlags, DiagnoseOptions, FitOptions, Resolver, SimKind,
    SimOptions,
};
use crate::{CommonFitArgs, DiagnoseArgs, FitArgs, SimArgs};

/// Size the chain pool from the environment, defaulting to the chain count.
fn init_thread_pool(n_chains: usize) {
    let threads = std::env::var("REMETA_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or(n_chains);
    // ignore the error if a pool already exists (tests, repeat calls)
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
}

fn common_flags(args: &CommonFitArgs) -> CommonFlags {
    CommonFlags {
        family: args.family.clone(),
        dof: args.dof,
        prior: args.prior.clone(),
        chains: args.chains,
        length: args.length,
        burnin: args.burnin,
        seed: args.seed,
        thin: args.thin,
        mode: args.mode.clone(),
        alpha: args.alpha,
    }
}

fn empty_common_flags() -> CommonFlags {
    CommonFlags {
        family: None,
        dof: None,
        prior: None,
        chains: None,
        length: None,
        burnin: None,
        seed: None,
        thin: None,
        mode: None,
        alpha: None,
    }
}

// ---------------------------------------------------------------- fit

fn resolve_fit(
    mut r: Resolver,
    flags: &CommonFlags,
    beta: Option<f64>,
    kde_thin: Option<usize>,
    kde_points: Option<usize>,
    bins: Option<usize>,
    data: PathBuf,
) -> Result<FitOptions> {
    let common = resolve_common(&mut r, flags, 20_000, 10_000)?;
    let beta = r.get(beta, "beta", 1e-4)?;
    if !(0.0..=common.alpha).contains(&beta) {
        return input_error(format!(
            "beta must lie in [0, alpha={}], got {beta}",
            common.alpha
        ));
    }
    let kde_thin = r.get(kde_thin, "kde-thin", 50)?;
    let kde_points = r.get(kde_points, "kde-points", 512)?;
    let bins = r.get(bins, "bins", 20)?;
    if kde_points < 2 || bins < 2 {
        return input_error("kde-points and bins must be at least 2".to_string());
    }
    r.record("data", data.display());
    Ok(FitOptions {
        data,
        spec: common.spec,
        config: common.config,
        alpha: common.alpha,
        beta_psi: beta,
        kde_thin,
        kde_points,
        bins,
        resolved: r.take_resolved(),
    })
}

pub fn fit_from_args(args: &FitArgs) -> Result<()> {
    let r = Resolver::new(config_file::load(args.config.as_deref())?);
    let opts = resolve_fit(
        r,
        &common_flags(&args.common),
        args.beta,
        args.kde_thin,
        args.kde_points,
        args.bins,
        args.data.clone(),
    )?;
    run_fit(&opts, &args.out)
}

fn run_fit(opts: &FitOptions, out: &Path) -> Result<()> {
    let t0 = Instant::now();
    init_thread_pool(opts.config.n_chains);
    let dataset = io::read_dataset(&opts.data)?;
    let emp_opts = EmpiricalOptions {
        alpha: opts.alpha,
        beta_psi: opts.beta_psi,
        kde_thin: opts.kde_thin,
        kde_points: opts.kde_points,
        hist_bins: opts.bins,
    };
    let (set, report) = empirical_analysis(dataset, opts.spec, &opts.config, &emp_opts)
        .map_err(|e| anyhow::anyhow!("model fit failed: {e}"))?;

    std::fs::create_dir_all(out).with_context(|| format!("create {}", out.display()))?;
    io::write_summary_csv(&out.join("summary.csv"), &report.parameters, &report.summary)?;
    io::write_summary_json(
        &out.join("summary.json"),
        opts.alpha,
        opts.beta_psi,
        &report.parameters,
        &report.summary,
        Some(&report.acceptance_rates),
    )?;
    io::write_traces(&out.join("traces.csv"), &set)?;
    io::write_rank_hist(&out.join("rank_hist.csv"), &report.rank_histograms)?;
    io::write_kde(&out.join("kde.csv"), &report)?;

    let mut manifest = Manifest::new("fit", opts.config.seed, opts.resolved.clone());
    manifest
        .inputs
        .insert("data".into(), vec![opts.data.display().to_string()]);
    manifest.outputs = vec![
        "summary.csv".into(),
        "summary.json".into(),
        "traces.csv".into(),
        "rank_hist.csv".into(),
        "kde.csv".into(),
    ];
    manifest.elapsed_seconds = t0.elapsed().as_secs_f64();
    manifest.write(out)
}

// ----------------------------------------------------------- simulate

fn resolve_simulate(
    mut r: Resolver,
    flags: &CommonFlags,
    kind: SimKind,
    p: Option<usize>,
    n: Option<usize>,
    tau2: Option<&str>,
    reps: Option<usize>,
    betas: Option<&str>,
    redraw: Option<bool>,
) -> Result<SimOptions> {
    let common = resolve_common(&mut r, flags, 2000, 1000)?;
    let p = r.get(p, "p", 2)?;
    let n = r.get(n, "n", 10)?;
    let tau2 = r.get_list(tau2, "tau2", &[0.25, 0.5, 0.75, 1.0, 2.0])?;
    if tau2.iter().any(|&t| !(t > 0.0)) {
        return input_error("tau2 grid values must be positive".to_string());
    }
    let reps = r.get(reps, "reps", 500)?;
    let betas = r.get_list(betas, "betas", &[0.0001, 0.025, 0.05])?;
    let redraw = r.get(redraw, "redraw", true)?;
    Ok(SimOptions {
        kind,
        p,
        n,
        tau2,
        betas,
        reps,
        redraw,
        spec: common.spec,
        config: common.config,
        alpha: common.alpha,
        resolved: r.take_resolved(),
    })
}

pub fn simulate_from_args(args: &SimArgs, kind: SimKind) -> Result<()> {
    let r = Resolver::new(config_file::load(args.config.as_deref())?);
    let opts = resolve_simulate(
        r,
        &common_flags(&args.common),
        kind,
        args.p,
        args.n,
        args.tau2.as_deref(),
        args.reps,
        args.betas.as_deref(),
        args.redraw,
    )?;
    run_simulate(&opts, &args.out)
}

fn run_simulate(opts: &SimOptions, out: &Path) -> Result<()> {
    let t0 = Instant::now();
    init_thread_pool(opts.config.n_chains.max(2));
    let scenarios: Vec<SimScenario> = opts
        .tau2
        .iter()
        .map(|&tau2| SimScenario {
            p: opts.p,
            n: opts.n,
            tau2,
            spec: ModelSpec {
                family: opts.spec.family,
                prior: opts.spec.prior,
            },
            reps: opts.reps,
            config: opts.config,
            redraw_per_rep: opts.redraw,
        })
        .collect();

    std::fs::create_dir_all(out).with_context(|| format!("create {}", out.display()))?;
    let results = out.join("results.csv");
    match opts.kind {
        SimKind::Coverage => {
            let report = coverage_study(&scenarios, opts.alpha)
                .map_err(|e| anyhow::anyhow!("coverage study failed: {e}"))?;
            io::write_coverage_results(&results, &report)?;
        }
        SimKind::Rhat => {
            let rows = rhat_study(&scenarios)
                .map_err(|e| anyhow::anyhow!("rhat study failed: {e}"))?;
            io::write_rhat_results(&results, &rows)?;
        }
        SimKind::BetaCurve => {
            let mut all = None;
            for sc in &scenarios {
                let report = beta_coverage_curve(sc, opts.alpha, &opts.betas)
                    .map_err(|e| anyhow::anyhow!("beta-curve study failed: {e}"))?;
                match &mut all {
                    None => all = Some(report),
                    Some(acc) => acc.rows.extend(report.rows),
                }
            }
            io::write_coverage_results(&results, &all.expect("nonempty tau2 grid"))?;
        }
    }

    let mut manifest = Manifest::new(
        opts.kind.command_name(),
        opts.config.seed,
        opts.resolved.clone(),
    );
    manifest.outputs = vec!["results.csv".into()];
    manifest.elapsed_seconds = t0.elapsed().as_secs_f64();
    manifest.write(out)
}

// ----------------------------------------------------------- diagnose

fn resolve_diagnose(
    mut r: Resolver,
    alpha: Option<f64>,
    beta: Option<f64>,
    bins: Option<usize>,
    traces: Vec<PathBuf>,
) -> Result<DiagnoseOptions> {
    let alpha = r.get(alpha, "alpha", 0.05)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return input_error(format!("alpha must lie in (0,1), got {alpha}"));
    }
    let beta = r.get(beta, "beta", 1e-4)?;
    if !(0.0..=alpha).contains(&beta) {
        return input_error(format!("beta must lie in [0, alpha={alpha}], got {beta}"));
    }
    let bins = r.get(bins, "bins", 20)?;
    if bins < 2 {
        return input_error("bins must be at least 2".to_string());
    }
    r.record(
        "traces",
        traces
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    Ok(DiagnoseOptions {
        traces,
        alpha,
        beta_psi: beta,
        bins,
        resolved: r.take_resolved(),
    })
}

pub fn diagnose_from_args(args: &DiagnoseArgs) -> Result<()> {
    let r = Resolver::new(config_file::load(args.config.as_deref())?);
    let opts = resolve_diagnose(r, args.alpha, args.beta, args.bins, args.traces.clone())?;
    run_diagnose(&opts, &args.out)
}

fn run_diagnose(opts: &DiagnoseOptions, out: &Path) -> Result<()> {
    let t0 = Instant::now();
    let (names, traces) = io::read_traces(&opts.traces)?;
    let mut rows = Vec::with_capacity(names.len());
    let mut hists = Vec::with_capacity(names.len());
    for (name, trace) in names.iter().zip(&traces) {
        let beta = if name.starts_with("mu") {
            opts.alpha / 2.0
        } else {
            opts.beta_psi
        };
        let row = summarize(trace, opts.alpha, beta)
            .map_err(|e| anyhow::anyhow!("summarizing {name}: {e}"))?;
        rows.push(row);
        let hist = rank_histogram(trace, opts.bins)
            .map_err(|e| anyhow::anyhow!("rank histogram for {name}: {e}"))?;
        hists.push((name.clone(), hist));
    }

    std::fs::create_dir_all(out).with_context(|| format!("create {}", out.display()))?;
    io::write_summary_csv(&out.join("summary.csv"), &names, &rows)?;
    io::write_summary_json(
        &out.join("summary.json"),
        opts.alpha,
        opts.beta_psi,
        &names,
        &rows,
        None,
    )?;
    io::write_rank_hist(&out.join("rank_hist.csv"), &hists)?;

    let mut manifest = Manifest::new("diagnose", 0, opts.resolved.clone());
    manifest.inputs.insert(
        "traces".into(),
        opts.traces.iter().map(|p| p.display().to_string()).collect(),
    );
    manifest.outputs = vec![
        "summary.csv".into(),
        "summary.json".into(),
        "rank_hist.csv".into(),
    ];
    manifest.elapsed_seconds = t0.elapsed().as_secs_f64();
    manifest.write(out)
}

// ------------------------------------------------------------- replay

/// Re-run the command recorded in a manifest; identical outputs modulo the
/// manifest's own timing fields.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<()> {
    let m = Manifest::load(manifest_path)?;
    let flags = empty_common_flags();
    match m.command.as_str() {
        "fit" => {
            let data = match m.options.get("data") {
                Some(d) => PathBuf::from(d),
                None => return input_error("fit manifest lacks a data path".to_string()),
            };
            let r = Resolver::new(m.options.clone());
            let opts = resolve_fit(r, &flags, None, None, None, None, data)?;
            run_fit(&opts, out)
        }
        "diagnose" => {
            let traces: Vec<PathBuf> = match m.inputs.get("traces") {
                Some(t) if !t.is_empty() => t.iter().map(PathBuf::from).collect(),
                _ => return input_error("diagnose manifest lacks trace paths".to_string()),
            };
            let r = Resolver::new(m.options.clone());
            let opts = resolve_diagnose(r, None, None, None, traces)?;
            run_diagnose(&opts, out)
        }
        other => {
            let kind = SimKind::from_command_name(other)?;
            let r = Resolver::new(m.options.clone());
            let opts = resolve_simulate(r, &flags, kind, None, None, None, None, None, None)?;
            run_simulate(&opts, out)
        }
    }
}
