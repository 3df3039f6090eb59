//! Misalignment probability of a repetition plan.
//!
//! A beam is misaligned either because the optimal codeword was never probed
//! (miss-selection) or because noise made another probed codeword look
//! stronger (miss-determination). The second term is bounded by a union of
//! pairwise error probabilities, each available in closed form for averaged
//! complex Gaussian observations.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::averaged_noise;
use crate::error::{Error, Result};
use crate::prior::PriorVector;
use crate::rng::trial_rng;

/// Exponents below this are flushed to zero instead of producing subnormals.
const EXP_FLOOR: f64 = -700.0;

pub(crate) fn safe_exp(x: f64) -> f64 {
    if x < EXP_FLOOR {
        0.0
    } else {
        x.exp()
    }
}

/// Candidate codewords with their repetition counts and the overhead budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamPlan {
    pub candidates: Vec<usize>,
    pub repetitions: Vec<u32>,
    pub budget: u32,
}

impl BeamPlan {
    pub fn new(candidates: Vec<usize>, repetitions: Vec<u32>, budget: u32) -> Result<Self> {
        if candidates.len() != repetitions.len() {
            return Err(Error::InvalidArgument(format!(
                "{} candidates but {} repetition counts",
                candidates.len(),
                repetitions.len()
            )));
        }
        if candidates.is_empty() {
            return Err(Error::InvalidArgument("plan has no candidates".into()));
        }
        let distinct: BTreeSet<_> = candidates.iter().collect();
        if distinct.len() != candidates.len() {
            return Err(Error::InvalidArgument("duplicate candidate beams".into()));
        }
        if repetitions.contains(&0) {
            return Err(Error::InvalidArgument("every candidate needs at least one repetition".into()));
        }
        let spent: u64 = repetitions.iter().map(|&r| r as u64).sum();
        if spent > budget as u64 {
            return Err(Error::Infeasible(format!("plan spends {spent} of a {budget} budget")));
        }
        Ok(BeamPlan {
            candidates,
            repetitions,
            budget,
        })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn spent(&self) -> u32 {
        self.repetitions.iter().sum()
    }

    fn check_against(&self, prior: &PriorVector) -> Result<()> {
        match self.candidates.iter().find(|&&c| c >= prior.len()) {
            Some(c) => Err(Error::InvalidArgument(format!(
                "candidate {c} outside a {}-beam prior",
                prior.len()
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisalignmentEstimate {
    pub p_miss_sel: f64,
    pub p_miss_det_bound: f64,
    /// `p_miss_sel + p_miss_det_bound`; may exceed one at very low SNR.
    pub p_miss_bound: f64,
    /// `p_miss_bound` clipped to `[0, 1]` for reporting.
    pub p_miss_bound_clamped: f64,
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && rho >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("SNR must be finite and nonnegative, got {rho}")))
    }
}

fn pairwise(rc: f64, rj: f64, rho: f64) -> f64 {
    let kappa = rc / (rc + rj);
    kappa * safe_exp(-kappa * rj * rho)
}

/// Probability that beam `j`, probed `r_j` times, outshines the optimal
/// beam `c`, probed `r_c` times, at linear SNR `rho`.
pub fn pairwise_missdet(r_c: u32, r_j: u32, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    if r_c == 0 || r_j == 0 {
        return Err(Error::InvalidArgument("repetition counts must be positive".into()));
    }
    Ok(pairwise(r_c as f64, r_j as f64, rho))
}

/// Prior mass outside the candidate set.
pub fn miss_selection(candidates: &[usize], prior: &PriorVector) -> Result<f64> {
    if let Some(c) = candidates.iter().find(|&&c| c >= prior.len()) {
        return Err(Error::InvalidArgument(format!("candidate {c} outside a {}-beam prior", prior.len())));
    }
    Ok(mass_outside(candidates, prior))
}

/// Sums whichever side has fewer terms, so an empty set gives exactly one
/// and a full set exactly zero.
fn mass_outside(candidates: &[usize], prior: &PriorVector) -> f64 {
    if 2 * candidates.len() <= prior.len() {
        let inside: f64 = candidates.iter().map(|&c| prior.get(c)).sum();
        return (1.0 - inside).clamp(0.0, 1.0);
    }
    let mut probed = vec![false; prior.len()];
    for &c in candidates {
        probed[c] = true;
    }
    let outside: f64 = prior
        .probs()
        .iter()
        .zip(&probed)
        .filter(|(_, &p)| !p)
        .map(|(g, _)| g)
        .fold(0.0, |a, b| a + b);
    outside.clamp(0.0, 1.0)
}

/// Union bound on the miss-determination probability.
pub fn missdet_bound(plan: &BeamPlan, prior: &PriorVector, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    plan.check_against(prior)?;
    Ok(missdet_bound_unchecked(&plan.candidates, &plan.repetitions, prior, rho))
}

pub(crate) fn missdet_bound_unchecked(candidates: &[usize], reps: &[u32], prior: &PriorVector, rho: f64) -> f64 {
    let mut total = 0.0;
    for (ci, &c) in candidates.iter().enumerate() {
        let g = prior.get(c);
        if g == 0.0 {
            continue;
        }
        let rc = reps[ci] as f64;
        let inner: f64 = reps
            .iter()
            .enumerate()
            .filter(|(ji, _)| *ji != ci)
            .map(|(_, &rj)| pairwise(rc, rj as f64, rho))
            .sum();
        total += g * inner;
    }
    total
}

pub(crate) fn estimate_unchecked(
    candidates: &[usize],
    reps: &[u32],
    prior: &PriorVector,
    rho: f64,
) -> MisalignmentEstimate {
    let p_miss_sel = mass_outside(candidates, prior);
    let p_miss_det_bound = missdet_bound_unchecked(candidates, reps, prior, rho);
    let p_miss_bound = p_miss_sel + p_miss_det_bound;
    MisalignmentEstimate {
        p_miss_sel,
        p_miss_det_bound,
        p_miss_bound,
        p_miss_bound_clamped: p_miss_bound.clamp(0.0, 1.0),
    }
}

/// Upper bound on the overall misalignment probability of `plan`.
pub fn misalignment_bound(plan: &BeamPlan, prior: &PriorVector, rho: f64) -> Result<MisalignmentEstimate> {
    check_rho(rho)?;
    plan.check_against(prior)?;
    Ok(estimate_unchecked(&plan.candidates, &plan.repetitions, prior, rho))
}

/// Monte Carlo estimate of a probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub p: f64,
    pub sigma: f64,
    pub trials: u64,
}

impl McEstimate {
    pub fn from_count(hits: u64, trials: u64) -> Self {
        let p = hits as f64 / trials as f64;
        McEstimate {
            p,
            sigma: (p * (1.0 - p) / trials as f64).sqrt(),
            trials,
        }
    }
}

/// Detected beam for one planted-channel trial.
///
/// With a DFT codebook the planted channel correlates with its own codeword
/// only, so the probe of beam `j` returns `conj(alpha)` when `j == truth` and
/// pure averaged noise otherwise. Unit noise variance is used, which makes
/// `|alpha|^2 = rho`.
pub(crate) fn planted_detect<R: Rng + ?Sized>(
    candidates: &[usize],
    reps: &[u32],
    truth: usize,
    rho: f64,
    rng: &mut R,
) -> usize {
    let phase: f64 = rng.random::<f64>() * TAU;
    let alpha = Complex64::from_polar(rho.sqrt(), phase);
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (&c, &r) in candidates.iter().zip(reps) {
        let signal = if c == truth { alpha.conj() } else { Complex64::new(0.0, 0.0) };
        let power = (signal + averaged_noise(1.0, r, rng)).norm_sqr();
        if power > best.1 || (power == best.1 && c < best.0) {
            best = (c, power);
        }
    }
    best.0
}

/// Simulated misalignment probability of `plan` under planted channels:
/// the optimal beam is drawn from `prior`, and a trial fails when it is not
/// probed or when detection picks another candidate.
pub fn missdet_montecarlo(
    plan: &BeamPlan,
    prior: &PriorVector,
    rho: f64,
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    check_rho(rho)?;
    plan.check_against(prior)?;
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let misses: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, 0, t);
            let truth = prior.sample(&mut rng);
            if !plan.candidates.contains(&truth) {
                return 1;
            }
            u64::from(planted_detect(&plan.candidates, &plan.repetitions, truth, rho, &mut rng) != truth)
        })
        .sum();
    Ok(McEstimate::from_count(misses, trials))
}
