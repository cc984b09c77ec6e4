//! The hybrid Gibbs sampler and multi-chain orchestration.
//!
//! Each step draws the mean exactly from its conditional law given the
//! current between-study covariance, then proposes a new covariance from the
//! generalized inverse-Wishart distribution at the scatter of the fresh
//! residuals and accepts or rejects it by a Metropolis-Hastings ratio. The
//! conditional posterior of the covariance is proportional to the joint
//! posterior at fixed mean, so the ratio is evaluated on the joint.
//!
//! `run_chain` drives the family-generic step; `run_chain_specialized` is
//! the same algorithm with the family-specific sampling formulas inlined
//! (plain normal/inverse-Wishart updates for the normal model, t and
//! chi-square-scaled updates for the t model). Both consume randomness
//! identically and produce bit-identical chains from the same stream.

use nalgebra::{DMatrix, DVector};

use crate::config::{Chain, ChainSet, Draw, Family, MuRejectionMode, SamplerConfig};
use crate::error::{Error, Result};
use crate::model::{PosteriorContext, PsiEval};
use crate::parallel;
use crate::randgen::{
    sample_chi_square, sample_giw, sample_inverse_wishart, sample_mvn, sample_mvt, RngStream,
};
use crate::spd::SpdMatrix;

/// One sampler state with its cached joint log-density.
#[derive(Clone, Debug)]
pub struct GibbsState {
    pub mu: DVector<f64>,
    pub psi: SpdMatrix,
    pub log_joint: f64,
}

/// Overdispersed deterministic starting points.
///
/// Chain `k` starts at `Psi = c_k * Sigma_hat` with `c_k` cycling through
/// `{0.5, 1, 2, 4}`, where `Sigma_hat` is the sample covariance of the
/// observations with eigenvalues floored away from zero, and the mean starts
/// at the pooled mean under that covariance.
pub fn initial_states(ctx: &PosteriorContext, n_chains: usize) -> Result<Vec<GibbsState>> {
    if n_chains == 0 {
        return Err(Error::InvalidParameter("need at least one chain".into()));
    }
    let p = ctx.p();
    let n = ctx.n();
    let xbar = ctx.dataset().sample_mean();
    let mut s = DMatrix::zeros(p, p);
    for st in ctx.dataset().studies() {
        let r = &st.x - &xbar;
        s += &r * r.transpose();
    }
    s /= (n - 1) as f64;
    let mut floor = 1e-6 * s.trace() / p as f64;
    if !(floor > 0.0) {
        // all observations identical; fall back to an absolute floor
        floor = 1e-6;
    }
    let eig = s.symmetric_eigen();
    let vals = DVector::from_fn(p, |i, _| eig.eigenvalues[i].max(floor));
    let sigma_hat = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();

    const SPREAD: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
    let mut out = Vec::with_capacity(n_chains);
    for k in 0..n_chains {
        let psi = SpdMatrix::from_matrix(&sigma_hat * SPREAD[k % SPREAD.len()])?;
        let ev = ctx.eval(psi)?;
        let mu = ev.xtilde.clone();
        let log_joint = ev.log_joint(ctx, &mu);
        out.push(GibbsState {
            mu,
            psi: ev.psi.clone(),
            log_joint,
        });
    }
    Ok(out)
}

/// Working state of one chain: the current point plus every per-`Psi`
/// quantity the densities need, re-used across rejected steps.
struct ChainState {
    eval: PsiEval,
    mu: DVector<f64>,
    log_joint: f64,
}

impl ChainState {
    fn from_state(ctx: &PosteriorContext, state: &GibbsState) -> Result<Self> {
        let eval = ctx.eval(state.psi.clone())?;
        let log_joint = eval.log_joint(ctx, &state.mu);
        Ok(ChainState {
            eval,
            mu: state.mu.clone(),
            log_joint,
        })
    }

    fn snapshot(&self) -> GibbsState {
        GibbsState {
            mu: self.mu.clone(),
            psi: self.eval.psi.clone(),
            log_joint: self.log_joint,
        }
    }
}

/// Metropolis-Hastings log-ratio for a covariance proposal at fixed mean,
/// with the joint posterior standing in for the conditional.
pub(crate) fn mh_log_ratio(
    ctx: &PosteriorContext,
    cur: &PsiEval,
    prop: &PsiEval,
    mu: &DVector<f64>,
) -> Result<f64> {
    let joint_new = prop.log_joint(ctx, mu);
    let joint_old = cur.log_joint(ctx, mu);
    let q_old = ctx.log_giw_proposal_density(&cur.psi, mu)?;
    let q_new = ctx.log_giw_proposal_density(&prop.psi, mu)?;
    Ok((joint_new + q_old) - (joint_old + q_new))
}

/// Shared accept/reject tail of a step, after `mu_new` and `psi_w` have been
/// sampled. A proposal whose evaluation fails positive-definiteness scores
/// `-inf` and is rejected, keeping the chain total.
fn finish_step(
    ctx: &PosteriorContext,
    state: &mut ChainState,
    mu_new: DVector<f64>,
    psi_w: SpdMatrix,
    rng: &mut RngStream,
    mode: MuRejectionMode,
) -> Result<bool> {
    let prop = match ctx.eval(psi_w) {
        Ok(ev) => Some(ev),
        Err(Error::NonPositiveDefinite { .. }) => None,
        Err(e) => return Err(e),
    };
    let log_mh = match &prop {
        Some(ev) => mh_log_ratio(ctx, &state.eval, ev, &mu_new)?,
        None => f64::NEG_INFINITY,
    };
    let accepted = rng.uniform().ln() < log_mh;
    if accepted {
        let ev = prop.expect("accepted proposals are evaluable");
        state.log_joint = ev.log_joint(ctx, &mu_new);
        state.eval = ev;
        state.mu = mu_new;
    } else if mode == MuRejectionMode::StandardMwG {
        state.log_joint = state.eval.log_joint(ctx, &mu_new);
        state.mu = mu_new;
    }
    Ok(accepted)
}

/// Family-generic step: exact conditional draw of the mean, then the
/// generalized inverse-Wishart proposal for the covariance.
fn step_general(
    ctx: &PosteriorContext,
    state: &mut ChainState,
    rng: &mut RngStream,
    mode: MuRejectionMode,
) -> Result<bool> {
    let law = state.eval.conditional_mu_law(ctx)?;
    let mu_new = law.sample(rng)?;
    let s = ctx.scatter(&mu_new)?;
    let psi_w = sample_giw(rng, ctx.giw_kernel_dof(), &s, ctx.generator())?;
    finish_step(ctx, state, mu_new, psi_w, rng, mode)
}

/// Normal-model step with the update formulas written out.
fn step_normal(
    ctx: &PosteriorContext,
    state: &mut ChainState,
    rng: &mut RngStream,
    mode: MuRejectionMode,
) -> Result<bool> {
    let location = state.eval.xtilde.clone();
    let dispersion = state.eval.w_sum.inverse();
    let mu_new = sample_mvn(rng, &location, &dispersion);
    let s = ctx.scatter(&mu_new)?;
    let psi_w = sample_inverse_wishart(rng, ctx.giw_kernel_dof(), &s)?;
    finish_step(ctx, state, mu_new, psi_w, rng, mode)
}

/// t-model step: t conditional for the mean, chi-square-scaled
/// inverse-Wishart proposal for the covariance.
fn step_t(
    ctx: &PosteriorContext,
    state: &mut ChainState,
    rng: &mut RngStream,
    mode: MuRejectionMode,
    d: f64,
) -> Result<bool> {
    let pn = (ctx.p() * ctx.n()) as f64;
    let dof = pn + d - ctx.p() as f64;
    let location = state.eval.xtilde.clone();
    let dispersion = state
        .eval
        .w_sum
        .inverse()
        .scale((d + state.eval.q0) / dof)?;
    let mu_new = sample_mvt(rng, dof, &location, &dispersion)?;
    let s = ctx.scatter(&mu_new)?;
    let omega = sample_inverse_wishart(rng, ctx.giw_kernel_dof(), &s)?;
    let xi = sample_chi_square(rng, d)?;
    let psi_w = omega.scale(xi / d)?;
    finish_step(ctx, state, mu_new, psi_w, rng, mode)
}

/// One step of the family-generic sampler from an explicit state.
pub fn gibbs_step(
    ctx: &PosteriorContext,
    state: &GibbsState,
    rng: &mut RngStream,
    mode: MuRejectionMode,
) -> Result<(GibbsState, bool)> {
    let mut cs = ChainState::from_state(ctx, state)?;
    let accepted = step_general(ctx, &mut cs, rng, mode)?;
    Ok((cs.snapshot(), accepted))
}

fn drive_chain(
    ctx: &PosteriorContext,
    config: &SamplerConfig,
    init: &GibbsState,
    mut rng: RngStream,
    mut step: impl FnMut(&PosteriorContext, &mut ChainState, &mut RngStream, MuRejectionMode) -> Result<bool>,
) -> Result<Chain> {
    config.validate()?;
    let mut state = ChainState::from_state(ctx, init)?;
    let mut draws = Vec::with_capacity(config.retained());
    let mut post_steps = 0usize;
    let mut post_accepts = 0usize;
    for b in 1..=config.length {
        let accepted = step(ctx, &mut state, &mut rng, config.mu_rejection_mode)?;
        if b > config.burn_in {
            post_steps += 1;
            if accepted {
                post_accepts += 1;
            }
            if (b - config.burn_in) % config.thin == 0 {
                draws.push(Draw {
                    mu: state.mu.clone(),
                    psi: state.eval.psi.clone(),
                    accepted,
                });
            }
        }
    }
    let acceptance_rate = if post_steps > 0 {
        post_accepts as f64 / post_steps as f64
    } else {
        0.0
    };
    Ok(Chain {
        draws,
        seed: rng.seed(),
        stream: rng.stream(),
        acceptance_rate,
    })
}

/// Run one chain with the family-generic step.
pub fn run_chain(
    ctx: &PosteriorContext,
    config: &SamplerConfig,
    init: &GibbsState,
    rng: RngStream,
) -> Result<Chain> {
    drive_chain(ctx, config, init, rng, step_general)
}

/// Run one chain with the family-specialized step; bit-identical to
/// `run_chain` on the same stream.
pub fn run_chain_specialized(
    ctx: &PosteriorContext,
    config: &SamplerConfig,
    init: &GibbsState,
    rng: RngStream,
) -> Result<Chain> {
    match ctx.spec().family {
        Family::Normal => drive_chain(ctx, config, init, rng, step_normal),
        Family::StudentT { dof } => drive_chain(
            ctx,
            config,
            init,
            rng,
            move |ctx, state, rng, mode| step_t(ctx, state, rng, mode, dof),
        ),
    }
}

/// Run all configured chains from `initial_states`, each on its own stream
/// derived from the master seed. Chains execute concurrently when the
/// `parallel` feature is on; ordering and content are fixed by chain index
/// either way.
pub fn run_chains(ctx: &PosteriorContext, config: &SamplerConfig) -> Result<ChainSet> {
    config.validate()?;
    let inits = initial_states(ctx, config.n_chains)?;
    let chains = parallel::try_map_indexed(config.n_chains, |k| {
        run_chain(ctx, config, &inits[k], RngStream::new(config.seed, k as u64))
    })?;
    Ok(ChainSet {
        chains,
        spec: *ctx.spec(),
        config: *config,
    })
}
