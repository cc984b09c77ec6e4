//! Resolved run options: flag > config file > default, serialized into the
//! manifest as a flat map so any run can be replayed from its manifest.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{Context, Result};
use remeta::{Family, ModelSpec, MuRejectionMode, PriorKind, SamplerConfig};

/// Marker for problems that should exit with code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct InputError(pub String);

pub fn input_error<T>(msg: impl Into<String>) -> Result<T> {
    Err(InputError(msg.into()).into())
}

/// Key/value source merged under explicit flags.
pub struct Resolver {
    file: BTreeMap<String, String>,
    /// Every resolved value, recorded for the manifest.
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(file: BTreeMap<String, String>) -> Self {
        Resolver {
            file,
            resolved: BTreeMap::new(),
        }
    }

    pub fn take_resolved(self) -> BTreeMap<String, String> {
        self.resolved
    }

    pub fn get<T>(&mut self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr + Display,
        <T as FromStr>::Err: Display,
    {
        let value = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(raw) => match raw.parse::<T>() {
                    Ok(v) => v,
                    Err(e) => {
                        return input_error(format!("config key `{key}`: bad value `{raw}`: {e}"))
                    }
                },
                None => default,
            },
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    pub fn get_list(&mut self, flag: Option<&str>, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        let raw = match flag {
            Some(v) => v.to_string(),
            None => match self.file.get(key) {
                Some(raw) => raw.clone(),
                None => default
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            },
        };
        let vals: Result<Vec<f64>> = raw
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .with_context(|| format!("bad number `{s}` in `{key}`"))
            })
            .collect();
        let vals = vals.map_err(|e| InputError(format!("{e:#}")))?;
        if vals.is_empty() {
            return input_error(format!("`{key}` must not be empty"));
        }
        self.resolved.insert(key.to_string(), raw);
        Ok(vals)
    }

    pub fn record(&mut self, key: &str, value: impl Display) {
        self.resolved.insert(key.to_string(), value.to_string());
    }
}

pub fn parse_family(family: &str, dof: f64) -> Result<Family> {
    match family {
        "normal" => Ok(Family::Normal),
        "t" | "student-t" | "student_t" => Ok(Family::StudentT { dof }),
        other => input_error(format!("unknown family `{other}` (use normal|t)")),
    }
}

pub fn parse_prior(prior: &str) -> Result<PriorKind> {
    match prior {
        "jeffreys" => Ok(PriorKind::Jeffreys),
        "reference" | "berger-bernardo" => Ok(PriorKind::Reference),
        other => input_error(format!("unknown prior `{other}` (use reference|jeffreys)")),
    }
}

pub fn parse_mode(mode: &str) -> Result<MuRejectionMode> {
    match mode {
        "standard" => Ok(MuRejectionMode::StandardMwG),
        "paper-literal" | "paper_literal" => Ok(MuRejectionMode::PaperLiteral),
        other => input_error(format!(
            "unknown rejection mode `{other}` (use standard|paper-literal)"
        )),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimKind {
    Coverage,
    Rhat,
    BetaCurve,
}

impl SimKind {
    pub fn command_name(&self) -> &'static str {
        match self {
            SimKind::Coverage => "simulate-coverage",
            SimKind::Rhat => "simulate-rhat",
            SimKind::BetaCurve => "simulate-beta-curve",
        }
    }

    pub fn from_command_name(name: &str) -> Result<Self> {
        match name {
            "simulate-coverage" => Ok(SimKind::Coverage),
            "simulate-rhat" => Ok(SimKind::Rhat),
            "simulate-beta-curve" => Ok(SimKind::BetaCurve),
            other => input_error(format!("manifest command `{other}` is not a simulation")),
        }
    }
}

/// Fully resolved options of a `fit` run.
pub struct FitOptions {
    pub data: PathBuf,
    pub spec: ModelSpec,
    pub config: SamplerConfig,
    pub alpha: f64,
    pub beta_psi: f64,
    pub kde_thin: usize,
    pub kde_points: usize,
    pub bins: usize,
    pub resolved: BTreeMap<String, String>,
}

/// Fully resolved options of a simulation run.
pub struct SimOptions {
    pub kind: SimKind,
    pub p: usize,
    pub n: usize,
    pub tau2: Vec<f64>,
    pub betas: Vec<f64>,
    pub reps: usize,
    pub redraw: bool,
    pub spec: ModelSpec,
    pub config: SamplerConfig,
    pub alpha: f64,
    pub resolved: BTreeMap<String, String>,
}

/// Fully resolved options of a diagnose run.
pub struct DiagnoseOptions {
    pub traces: Vec<PathBuf>,
    pub alpha: f64,
    pub beta_psi: f64,
    pub bins: usize,
    pub resolved: BTreeMap<String, String>,
}

pub struct CommonResolved {
    pub spec: ModelSpec,
    pub config: SamplerConfig,
    pub alpha: f64,
}

pub struct CommonFlags {
    pub family: Option<String>,
    pub dof: Option<f64>,
    pub prior: Option<String>,
    pub chains: Option<usize>,
    pub length: Option<usize>,
    pub burnin: Option<usize>,
    pub seed: Option<u64>,
    pub thin: Option<usize>,
    pub mode: Option<String>,
    pub alpha: Option<f64>,
}

pub fn resolve_common(
    r: &mut Resolver,
    flags: &CommonFlags,
    default_length: usize,
    default_burnin: usize,
) -> Result<CommonResolved> {
    let family_name = r.get(flags.family.clone(), "family", "normal".to_string())?;
    let dof = r.get(flags.dof, "dof", 4.0)?;
    let prior_name = r.get(flags.prior.clone(), "prior", "jeffreys".to_string())?;
    let chains = r.get(flags.chains, "chains", 4)?;
    let length = r.get(flags.length, "length", default_length)?;
    let burnin = r.get(flags.burnin, "burnin", default_burnin)?;
    let seed = r.get(flags.seed, "seed", 0)?;
    let thin = r.get(flags.thin, "thin", 1)?;
    let mode_name = r.get(flags.mode.clone(), "mode", "standard".to_string())?;
    let alpha = r.get(flags.alpha, "alpha", 0.05)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return input_error(format!("alpha must lie in (0,1), got {alpha}"));
    }

    let family = parse_family(&family_name, dof)?;
    let prior = parse_prior(&prior_name)?;
    let spec = match ModelSpec::new(family, prior) {
        Ok(s) => s,
        Err(e) => return input_error(format!("bad model options: {e}")),
    };
    let config = SamplerConfig {
        n_chains: chains,
        length,
        burn_in: burnin,
        seed,
        thin,
        mu_rejection_mode: parse_mode(&mode_name)?,
    };
    if let Err(e) = config.validate() {
        return input_error(format!("bad sampler options: {e}"));
    }
    Ok(CommonResolved {
        spec,
        config,
        alpha,
    })
}

