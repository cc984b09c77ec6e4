//! Model specification, sampler configuration and chain containers.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::spd::SpdMatrix;

/// Error-distribution family of the random-effects model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    Normal,
    /// Multivariate t with `dof` degrees of freedom (any positive real).
    StudentT { dof: f64 },
}

impl Family {
    pub fn validate(&self) -> Result<()> {
        if let Family::StudentT { dof } = self {
            if !(*dof > 0.0) || !dof.is_finite() {
                return Err(Error::InvalidDof(*dof));
            }
        }
        Ok(())
    }
}

/// Objective prior assigned to the between-study covariance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorKind {
    Reference,
    Jeffreys,
}

/// Family and prior together determine the posterior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub prior: PriorKind,
}

impl ModelSpec {
    pub fn new(family: Family, prior: PriorKind) -> Result<Self> {
        family.validate()?;
        Ok(ModelSpec { family, prior })
    }
}

/// What to do with the freshly drawn `mu` when the `Psi` proposal is
/// rejected.
///
/// `StandardMwG` keeps it: the `mu` update is an exact conditional draw, so
/// standard Metropolis-within-Gibbs accepts it unconditionally and the
/// accept/reject step concerns `Psi` alone. `PaperLiteral` reverts both
/// components to the previous state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MuRejectionMode {
    #[default]
    StandardMwG,
    PaperLiteral,
}

/// Multi-chain sampler settings.
#[derive(Clone, Copy, Debug)]
pub struct SamplerConfig {
    pub n_chains: usize,
    /// Total iterations per chain, including burn-in.
    pub length: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Keep every `thin`-th post-burn-in draw.
    pub thin: usize,
    pub mu_rejection_mode: MuRejectionMode,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::InvalidParameter("n_chains must be >= 1".into()));
        }
        if self.length < self.burn_in {
            return Err(Error::InvalidParameter(format!(
                "length {} must be >= burn_in {}",
                self.length, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidParameter("thin must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of retained draws per chain.
    pub fn retained(&self) -> usize {
        (self.length - self.burn_in) / self.thin
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 4,
            length: 20_000,
            burn_in: 10_000,
            seed: 0,
            thin: 1,
            mu_rejection_mode: MuRejectionMode::StandardMwG,
        }
    }
}

/// One retained posterior state.
#[derive(Clone, Debug)]
pub struct Draw {
    pub mu: DVector<f64>,
    pub psi: SpdMatrix,
    /// Whether the `Psi` step that produced this state accepted its proposal.
    pub accepted: bool,
}

/// One chain: retained draws plus reproducibility and acceptance metadata.
#[derive(Clone, Debug)]
pub struct Chain {
    pub draws: Vec<Draw>,
    pub seed: u64,
    pub stream: u64,
    /// Fraction of accepted `Psi` proposals over post-burn-in steps.
    pub acceptance_rate: f64,
}

/// All chains of one run.
#[derive(Clone, Debug)]
pub struct ChainSet {
    pub chains: Vec<Chain>,
    pub spec: ModelSpec,
    pub config: SamplerConfig,
}

impl ChainSet {
    pub fn p(&self) -> usize {
        self.chains
            .first()
            .and_then(|c| c.draws.first())
            .map(|d| d.mu.len())
            .unwrap_or(0)
    }
}

/// A scalar coordinate of the posterior state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Param {
    /// Component of the mean, 0-based.
    Mu(usize),
    /// Entry `(i, j)` of the between-study covariance, 0-based, `i >= j`.
    Psi(usize, usize),
}

impl Param {
    /// All parameters for dimension `p`: mean components first, then the
    /// lower triangle of `Psi` column by column.
    pub fn all(p: usize) -> Vec<Param> {
        let mut out: Vec<Param> = (0..p).map(Param::Mu).collect();
        for j in 0..p {
            for i in j..p {
                out.push(Param::Psi(i, j));
            }
        }
        out
    }

    /// 1-based display name, e.g. `mu_1` or `psi_21`.
    pub fn name(&self) -> String {
        match self {
            Param::Mu(i) => format!("mu_{}", i + 1),
            Param::Psi(i, j) => format!("psi_{}{}", i + 1, j + 1),
        }
    }

    pub fn extract(&self, draw: &Draw) -> f64 {
        match *self {
            Param::Mu(i) => draw.mu[i],
            Param::Psi(i, j) => draw.psi.matrix()[(i, j)],
        }
    }
}
