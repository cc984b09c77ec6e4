//! Density generators for the supported elliptical families.
//!
//! An elliptical likelihood evaluates the data only through a scalar
//! quadratic form `u`, weighted by a generator `f(u)`. The generator carries
//! the model dimensions `(p, n)` because its normalizing constant and tail
//! exponent depend on the total dimension `p*n`. All evaluation is in the
//! log domain: quadratic forms on real datasets reach the hundreds, where
//! linear-domain generators underflow.

use statrs::function::gamma::ln_gamma;

use crate::config::{Family, ModelSpec};
use crate::error::{Error, Result};

/// Hard cap on integrand evaluations in the radial quadrature.
const QUAD_BUDGET: usize = 10_000;
const QUAD_RTOL: f64 = 1e-8;

/// A density generator bound to model dimensions.
#[derive(Clone, Copy, Debug)]
pub struct Generator {
    family: Family,
    p: usize,
    n: usize,
}

impl Generator {
    pub fn new(family: Family, p: usize, n: usize) -> Result<Self> {
        family.validate()?;
        if p == 0 || n == 0 {
            return Err(Error::InvalidParameter(format!(
                "generator dimensions must be positive, got p={p}, n={n}"
            )));
        }
        Ok(Generator { family, p, n })
    }

    pub fn from_spec(spec: &ModelSpec, p: usize, n: usize) -> Result<Self> {
        Generator::new(spec.family, p, n)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn pn(&self) -> f64 {
        (self.p * self.n) as f64
    }

    /// Log of the generator's normalizing constant.
    pub fn log_k(&self) -> f64 {
        let pn = self.pn();
        match self.family {
            Family::Normal => -0.5 * pn * (2.0 * std::f64::consts::PI).ln(),
            Family::StudentT { dof: d } => {
                -0.5 * pn * (std::f64::consts::PI * d).ln() + ln_gamma((d + pn) / 2.0)
                    - ln_gamma(d / 2.0)
            }
        }
    }

    /// `log f(u)` including the normalizing constant.
    pub fn log_f(&self, u: f64) -> Result<f64> {
        if u < 0.0 {
            return Err(Error::NegativeArgument(u));
        }
        Ok(self.log_f_raw(u))
    }

    #[inline]
    pub(crate) fn log_f_raw(&self, u: f64) -> f64 {
        match self.family {
            Family::Normal => self.log_k() - 0.5 * u,
            Family::StudentT { dof: d } => {
                self.log_k() - 0.5 * (self.pn() + d) * (u / d).ln_1p()
            }
        }
    }

    /// `log f(q_base + u)`: the generator of the conditional law of the mean,
    /// shifted by the residual quadratic form at the pooled mean.
    pub fn log_f_conditional(&self, q_base: f64, u: f64) -> Result<f64> {
        if q_base < 0.0 {
            return Err(Error::NegativeArgument(q_base));
        }
        self.log_f(q_base + u)
    }

    /// Second radial moment functional of the standardized family.
    pub fn j2(&self) -> f64 {
        let pn = self.pn();
        match self.family {
            Family::Normal => pn * (pn + 2.0) / 4.0,
            Family::StudentT { dof: d } => pn * (pn + 2.0) * (pn + d) / (4.0 * (pn + 2.0 + d)),
        }
    }

    /// Coefficients `(a, b)` of the reference-prior information matrix:
    /// `a = 2 J2 / (2pn + p^2 n^2)` and `b = J2 / (2pn + p^2 n^2) - 1/4`.
    ///
    /// The sampler's proposal bound requires `b <= 0`; a generator violating
    /// that is refused.
    pub fn j2_coefficients(&self) -> Result<(f64, f64)> {
        let pn = self.pn();
        let denom = 2.0 * pn + pn * pn;
        let ratio = self.j2() / denom;
        let a = 2.0 * ratio;
        let b = ratio - 0.25;
        if b > 0.0 {
            return Err(Error::UnsupportedGenerator(format!(
                "J2 ratio {ratio} exceeds 1/4; the inverse-Wishart proposal bound fails"
            )));
        }
        Ok((a, b))
    }

    /// Closed form of `log integral_0^inf u^(p-1) f(u^2 + q0) du`.
    ///
    /// Normal: a Gaussian radial moment, `log K - q0/2 + (p/2-1) log 2
    /// + log Gamma(p/2)`. Student t: a Beta-function moment with tail
    /// exponent `(pn + d - p)/2` on `(1 + q0/d)`.
    pub fn log_radial_integral(&self, q0: f64) -> Result<f64> {
        if q0 < 0.0 {
            return Err(Error::NegativeArgument(q0));
        }
        let p = self.p as f64;
        Ok(match self.family {
            Family::Normal => {
                self.log_k() - 0.5 * q0 + (0.5 * p - 1.0) * std::f64::consts::LN_2
                    + ln_gamma(0.5 * p)
            }
            Family::StudentT { dof: d } => {
                let pn = self.pn();
                let half_tail = 0.5 * (pn + d - p);
                let ln_beta = ln_gamma(0.5 * p) + ln_gamma(half_tail) - ln_gamma(0.5 * p + half_tail);
                self.log_k() + 0.5 * p * d.ln() - std::f64::consts::LN_2 + ln_beta
                    - half_tail * (q0 / d).ln_1p()
            }
        })
    }

    /// Adaptive quadrature of `log integral_0^inf u^(p-1) f(u^2 + q0) du`,
    /// usable with any generator. Integrates the integrand normalized by
    /// `f(q0)` over geometrically growing segments until the tail is
    /// negligible; errors with `QuadratureNonConvergence` past the node
    /// budget.
    pub fn log_radial_integral_quadrature(&self, q0: f64) -> Result<f64> {
        if q0 < 0.0 {
            return Err(Error::NegativeArgument(q0));
        }
        let log_fmax = self.log_f_raw(q0);
        let pm1 = self.p as f64 - 1.0;
        let g = |u: f64| -> f64 {
            if u <= 0.0 {
                return if self.p == 1 { 1.0 } else { 0.0 };
            }
            (pm1 * u.ln() + self.log_f_raw(u * u + q0) - log_fmax).exp()
        };

        let mut evals = 0usize;
        let mut total: f64 = 0.0;
        let mut lo = 0.0;
        let mut width = 1.0;
        loop {
            let hi = lo + width;
            // tolerance anchored to the running total with an absolute floor,
            // so the first segment and dead tail segments both terminate
            let eps = QUAD_RTOL * total.max(1e-2);
            let seg = adaptive_simpson(&g, lo, hi, eps, &mut evals)?;
            total += seg;
            if evals > QUAD_BUDGET {
                return Err(Error::QuadratureNonConvergence);
            }
            // stop once a whole segment contributes nothing and the
            // integrand has died off at its right edge
            if seg.abs() <= 1e-10 * total && g(hi) <= 1e-14 {
                break;
            }
            lo = hi;
            width *= 2.0;
            if width > 1e12 {
                return Err(Error::QuadratureNonConvergence);
            }
        }
        Ok(log_fmax + total.ln())
    }
}

fn adaptive_simpson(
    g: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    eps: f64,
    evals: &mut usize,
) -> Result<f64> {
    let fa = g(a);
    let fm = g(0.5 * (a + b));
    let fb = g(b);
    *evals += 3;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(g, a, b, fa, fm, fb, whole, eps, 30, evals)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    g: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
    evals: &mut usize,
) -> Result<f64> {
    if *evals > QUAD_BUDGET {
        return Err(Error::QuadratureNonConvergence);
    }
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = g(lm);
    let frm = g(rm);
    *evals += 2;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * eps || depth == 0 {
        return Ok(left + right + delta / 15.0);
    }
    let l = simpson_rec(g, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1, evals)?;
    let r = simpson_rec(g, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1, evals)?;
    Ok(l + r)
}
