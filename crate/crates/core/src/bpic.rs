//! Bayesian parallel interference cancellation over the real-valued model.
//!
//! One detection is a short loop of three stages, seeded by any initial
//! estimate (classical MMSE or the untrained-network denoiser):
//!
//! * **BSO** - matched-filter interference cancellation produces a soft mean
//!   and variance per symbol,
//! * **BSE** - per-symbol posterior moments over the real alphabet,
//! * **DSC** - a convex combination of the current and previous estimates,
//!   weighted by their instantaneous residual errors.
//!
//! The DSC stage is skipped on the first iteration, where no previous
//! statistics exist.

use crate::channel::RealLinearModel;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, RealMatrix};

/// Sorted per-dimension alphabet (e.g. `{-c, +c}` for 4-QAM).
#[derive(Debug, Clone, PartialEq)]
pub struct RealAlphabet {
    points: Vec<f64>,
}

impl RealAlphabet {
    pub fn new(mut points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("alphabet cannot be empty".into()));
        }
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("alphabet points must be distinct".into()));
        }
        Ok(Self { points })
    }

    /// The per-dimension level set of a square QAM constellation.
    pub fn from_constellation(cons: &crate::dd_frame::Constellation) -> Self {
        let mut points: Vec<f64> = cons.points().iter().map(|p| p.re).collect();
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        points.dedup();
        Self { points }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

/// Loop state for one BPIC iteration, exposed for stepwise testing.
#[derive(Debug, Clone)]
pub struct BpicState {
    /// Current symbol estimates: the BSE output entering DSC, the combined
    /// estimate after it.
    pub x_hat: Vec<f64>,
    pub v: Vec<f64>,
    /// BSO soft means and variances for this iteration.
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Combined estimates from iteration `t-1`.
    pub x_prev: Vec<f64>,
    pub v_prev: Vec<f64>,
    /// Instantaneous square errors from iterations `t-1` and `t`.
    pub e_prev: Vec<f64>,
    pub e_curr: Vec<f64>,
    pub t: usize,
}

/// Per-iteration diagnostics from [`run_bpic`].
#[derive(Debug, Clone, Copy)]
pub struct BpicIterStats {
    /// `||y - H x||` at the BSE output of this iteration.
    pub residual_norm: f64,
    /// Mean BSO variance across symbols.
    pub mean_sigma: f64,
}

/// Result of a full BPIC run.
#[derive(Debug, Clone)]
pub struct BpicRun {
    pub x_hat: Vec<f64>,
    pub v: Vec<f64>,
    pub trace: Vec<BpicIterStats>,
}

/// Regularized linear estimate `(H^T H + sigma^2 I)^{-1} H^T y`.
pub fn mmse_denoise(model: &RealLinearModel) -> Result<Vec<f64>> {
    let n = model.dim();
    let mut a = model.h.gram();
    for i in 0..n {
        a.set(i, i, a.get(i, i) + model.sigma2);
    }
    let rhs = model.h.matvec_t(&model.y);
    cholesky_solve(&a, &rhs)
}

/// Precomputed quantities shared across the iteration loop.
struct Workspace {
    /// Entrywise square of the Gram matrix, `(h_i^T h_j)^2`.
    gram_sq: RealMatrix,
    /// Column norms `||h_q||^2`.
    norms2: Vec<f64>,
}

impl Workspace {
    fn new(model: &RealLinearModel) -> Result<Self> {
        let gram = model.h.gram();
        let n = gram.rows();
        let norms2: Vec<f64> = (0..n).map(|q| gram.get(q, q)).collect();
        if let Some(q) = norms2.iter().position(|&d| d <= 0.0) {
            return Err(Error::DegenerateModel(format!(
                "column {q} of the channel matrix is zero"
            )));
        }
        Ok(Self {
            gram_sq: gram.entrywise_square(),
            norms2,
        })
    }

    /// BSO: `mu_q = x_q + h_q^T (y - H x) / ||h_q||^2` and the PIC variance
    /// `Sigma_q = (sum_{j != q} (h_q^T h_j)^2 v_j + ||h_q||^2 sigma^2) / ||h_q||^4`.
    #[allow(clippy::too_many_arguments)]
    fn bso(
        &self,
        model: &RealLinearModel,
        x: &[f64],
        v: &[f64],
        mu: &mut Vec<f64>,
        sigma: &mut Vec<f64>,
        resid: &mut Vec<f64>,
        corr: &mut Vec<f64>,
    ) {
        let n = model.dim();
        resid.resize(n, 0.0);
        corr.resize(n, 0.0);
        model.h.matvec_into(x, resid);
        for (r, &yi) in resid.iter_mut().zip(&model.y) {
            *r = yi - *r;
        }
        model.h.matvec_t_into(resid, corr);

        mu.resize(n, 0.0);
        for q in 0..n {
            mu[q] = x[q] + corr[q] / self.norms2[q];
        }

        // corr is reused to hold (G o G) v.
        self.gram_sq.matvec_into(v, corr);
        sigma.resize(n, 0.0);
        for q in 0..n {
            let d = self.norms2[q];
            let cross = corr[q] - self.gram_sq.get(q, q) * v[q];
            sigma[q] = (cross + d * model.sigma2) / (d * d);
        }
    }

    /// DSC instantaneous square errors `e_q = (h_q^T (y - H x))^2 / ||h_q||^4`
    /// plus the residual norm for diagnostics.
    fn dsc_errors(
        &self,
        model: &RealLinearModel,
        x: &[f64],
        e: &mut Vec<f64>,
        resid: &mut Vec<f64>,
        corr: &mut Vec<f64>,
    ) -> f64 {
        let n = model.dim();
        resid.resize(n, 0.0);
        corr.resize(n, 0.0);
        model.h.matvec_into(x, resid);
        for (r, &yi) in resid.iter_mut().zip(&model.y) {
            *r = yi - *r;
        }
        let resid_norm = crate::linalg::dot(resid, resid).sqrt();
        model.h.matvec_t_into(resid, corr);
        e.resize(n, 0.0);
        for q in 0..n {
            let s = corr[q] / self.norms2[q];
            e[q] = s * s;
        }
        resid_norm
    }
}

/// DSC weight: `rho = e_prev / (e_curr + e_prev)`, with the `0/0` tie
/// resolved toward the newest estimate.
#[inline]
pub fn dsc_weight(e_prev: f64, e_curr: f64) -> f64 {
    let denom = e_curr + e_prev;
    if denom == 0.0 {
        1.0
    } else {
        e_prev / denom
    }
}

/// Matched-filter PIC soft statistics for one iteration.
pub fn bso_step(
    model: &RealLinearModel,
    x_prev: &[f64],
    v_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let ws = Workspace::new(model)?;
    let (mut mu, mut sigma) = (Vec::new(), Vec::new());
    let (mut resid, mut corr) = (Vec::new(), Vec::new());
    ws.bso(model, x_prev, v_prev, &mut mu, &mut sigma, &mut resid, &mut corr);
    Ok((mu, sigma))
}

/// Normalized posterior over the alphabet for a single symbol, computed in
/// the log domain with max subtraction. A non-positive variance is treated
/// as the hard-decision limit.
pub fn bse_posterior(mu: f64, sigma: f64, alphabet: &RealAlphabet) -> Vec<f64> {
    let pts = alphabet.points();
    if sigma <= 0.0 {
        let mut best = f64::INFINITY;
        for &a in pts {
            let d = (mu - a) * (mu - a);
            if d < best {
                best = d;
            }
        }
        let ties = pts.iter().filter(|&&a| (mu - a) * (mu - a) == best).count();
        return pts
            .iter()
            .map(|&a| {
                if (mu - a) * (mu - a) == best {
                    1.0 / ties as f64
                } else {
                    0.0
                }
            })
            .collect();
    }
    let mut logp: Vec<f64> = pts.iter().map(|&a| -(mu - a) * (mu - a) / (2.0 * sigma)).collect();
    let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for lp in logp.iter_mut() {
        *lp = (*lp - max).exp();
        total += *lp;
    }
    for lp in logp.iter_mut() {
        *lp /= total;
    }
    logp
}

/// Posterior mean and variance per symbol over the alphabet.
pub fn bse_step(mu: &[f64], sigma: &[f64], alphabet: &RealAlphabet) -> (Vec<f64>, Vec<f64>) {
    let n = mu.len();
    let mut x_hat = vec![0.0; n];
    let mut v = vec![0.0; n];
    for q in 0..n {
        let p = bse_posterior(mu[q], sigma[q], alphabet);
        let mean: f64 = alphabet
            .points()
            .iter()
            .zip(&p)
            .map(|(&a, &pa)| a * pa)
            .sum();
        let var: f64 = alphabet
            .points()
            .iter()
            .zip(&p)
            .map(|(&a, &pa)| (a - mean) * (a - mean) * pa)
            .sum();
        x_hat[q] = mean;
        v[q] = var;
    }
    (x_hat, v)
}

/// One DSC application: fills `e_curr` from the BSE output in `state.x_hat`,
/// then replaces `x_hat`/`v` with the error-weighted combination against the
/// previous iteration.
pub fn dsc_step(state: &BpicState, model: &RealLinearModel) -> Result<BpicState> {
    let ws = Workspace::new(model)?;
    let mut out = state.clone();
    let (mut resid, mut corr) = (Vec::new(), Vec::new());
    ws.dsc_errors(model, &state.x_hat, &mut out.e_curr, &mut resid, &mut corr);
    for q in 0..model.dim() {
        let rho = dsc_weight(state.e_prev[q], out.e_curr[q]);
        out.x_hat[q] = (1.0 - rho) * state.x_prev[q] + rho * state.x_hat[q];
        out.v[q] = (1.0 - rho) * state.v_prev[q] + rho * state.v[q];
    }
    Ok(out)
}

/// A BPIC detector bound to one model, with the Gram-matrix quantities
/// computed once and shared across runs from different initial estimates.
pub struct BpicDetector<'a> {
    model: &'a RealLinearModel,
    alphabet: &'a RealAlphabet,
    ws: Workspace,
}

impl<'a> BpicDetector<'a> {
    pub fn new(model: &'a RealLinearModel, alphabet: &'a RealAlphabet) -> Result<Self> {
        Ok(Self {
            model,
            alphabet,
            ws: Workspace::new(model)?,
        })
    }

    /// Run `iters` BSO/BSE/DSC iterations from the given initial estimate.
    pub fn run(&self, x_init: &[f64], iters: usize) -> Result<BpicRun> {
        if iters == 0 {
            return Err(Error::InvalidParameter("BPIC needs at least one iteration".into()));
        }
        let n = self.model.dim();
        if x_init.len() != n {
            return Err(Error::InvalidInput(format!(
                "initial estimate has length {}, expected {n}",
                x_init.len()
            )));
        }

        let mut x = x_init.to_vec();
        let mut v = vec![0.0; n];
        let mut e_prev: Option<Vec<f64>> = None;
        let (mut mu, mut sigma) = (Vec::new(), Vec::new());
        let (mut resid, mut corr) = (Vec::new(), Vec::new());
        let mut e_curr = Vec::new();
        let mut trace = Vec::with_capacity(iters);

        for _t in 1..=iters {
            self.ws
                .bso(self.model, &x, &v, &mut mu, &mut sigma, &mut resid, &mut corr);
            let (x_bse, v_bse) = bse_step(&mu, &sigma, self.alphabet);
            let residual_norm =
                self.ws
                    .dsc_errors(self.model, &x_bse, &mut e_curr, &mut resid, &mut corr);
            trace.push(BpicIterStats {
                residual_norm,
                mean_sigma: sigma.iter().sum::<f64>() / n as f64,
            });

            match e_prev.as_ref() {
                None => {
                    x = x_bse;
                    v = v_bse;
                }
                Some(ep) => {
                    for q in 0..n {
                        let rho = dsc_weight(ep[q], e_curr[q]);
                        x[q] = (1.0 - rho) * x[q] + rho * x_bse[q];
                        v[q] = (1.0 - rho) * v[q] + rho * v_bse[q];
                    }
                }
            }
            e_prev = Some(std::mem::take(&mut e_curr));
        }

        Ok(BpicRun { x_hat: x, v, trace })
    }
}

/// Run `iters` BPIC iterations from the given initial estimate.
pub fn run_bpic(
    model: &RealLinearModel,
    x_init: &[f64],
    iters: usize,
    alphabet: &RealAlphabet,
) -> Result<BpicRun> {
    BpicDetector::new(model, alphabet)?.run(x_init, iters)
}
