//! Compact feedback of a repetition vector as a fitted line.
//!
//! The receiver sends the intercept and slope of a least-squares line through
//! `(j, r_j)` plus the set size; both ends rebuild the schedule with
//! [`reconstruct`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackCode {
    pub beta0: f64,
    pub beta1: f64,
    pub s: u32,
}

/// Least-squares line through `(j, repetitions[j - 1])` for `j = 1..=S`.
pub fn fit_regression(repetitions: &[u32]) -> Result<FeedbackCode> {
    let s = repetitions.len();
    if s == 0 {
        return Err(Error::InvalidArgument("cannot encode an empty repetition vector".into()));
    }
    if s == 1 {
        return Ok(FeedbackCode {
            beta0: repetitions[0] as f64,
            beta1: 0.0,
            s: 1,
        });
    }
    let n = s as f64;
    let j_mean = (n + 1.0) / 2.0;
    let r_mean = repetitions.iter().map(|&r| r as f64).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &r) in repetitions.iter().enumerate() {
        let dj = (i + 1) as f64 - j_mean;
        sxy += dj * (r as f64 - r_mean);
        sxx += dj * dj;
    }
    let beta1 = sxy / sxx;
    Ok(FeedbackCode {
        beta0: r_mean - beta1 * j_mean,
        beta1,
        s: s as u32,
    })
}

/// Values this close to an integer count as that integer, so exactly affine
/// inputs survive the floor despite rounding in the fit.
const SNAP: f64 = 1e-9;

/// `max(1, floor(beta0 + beta1 * j))` for `j = 1..=S`.
pub fn reconstruct(code: &FeedbackCode) -> Vec<u32> {
    (1..=code.s)
        .map(|j| {
            let v = code.beta0 + code.beta1 * j as f64;
            let nearest = v.round();
            let floored = if (v - nearest).abs() <= SNAP * nearest.abs().max(1.0) {
                nearest
            } else {
                v.floor()
            };
            floored.clamp(1.0, u32::MAX as f64) as u32
        })
        .collect()
}

/// Changes made to a reconstructed schedule to respect the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BudgetAdjustment {
    /// Units removed because the reconstruction overspent.
    pub trimmed: u32,
    /// Budget left unused.
    pub unspent: u32,
}

/// Trims the largest entries one unit at a time until the schedule fits in
/// `budget`; never drops an entry below one. A shortfall is left unspent.
pub fn fit_to_budget(reps: &mut [u32], budget: u32) -> Result<BudgetAdjustment> {
    if reps.len() as u64 > budget as u64 {
        return Err(Error::Infeasible(format!("{} beams cannot fit a budget of {budget}", reps.len())));
    }
    let mut total: u64 = reps.iter().map(|&r| r as u64).sum();
    let mut trimmed = 0;
    while total > budget as u64 {
        let i = (0..reps.len())
            .max_by(|&a, &b| reps[a].cmp(&reps[b]).then(a.cmp(&b)))
            .expect("non-empty");
        reps[i] -= 1;
        total -= 1;
        trimmed += 1;
    }
    Ok(BudgetAdjustment {
        trimmed,
        unspent: budget - total as u32,
    })
}
