//! Self-checks of the closed forms against slow, direct computations.
//!
//! * Pairwise miss-determination against a simulation that averages the
//!   individual noisy probes one by one.
//! * The two-candidate split against an exhaustive scan of integer splits.
//! * Water-filling against enumeration of every repetition vector.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloc::{alloc_two, two_candidate_objective, waterfill_alloc, WaterfillProblem};
use crate::error::Result;
use crate::misalign::{pairwise_missdet, McEstimate};
use crate::prior::PriorVector;
use crate::rng::trial_rng;

fn unit_noise<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Complex64::new(rng.sample::<f64, _>(StandardNormal) * s, rng.sample::<f64, _>(StandardNormal) * s)
}

/// Fraction of trials in which the mean of `r_j` pure-noise probes is
/// stronger than the mean of `r_c` probes of a unit-noise channel with
/// `|alpha|^2 = rho`.
pub fn pairwise_montecarlo(r_c: u32, r_j: u32, rho: f64, trials: u64, seed: u64) -> McEstimate {
    let key = ((r_c as u64) << 40) ^ ((r_j as u64) << 20) ^ rho.to_bits().rotate_left(7);
    let hits: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, key, t);
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            let alpha = Complex64::from_polar(rho.sqrt(), phase);
            let mut yc = Complex64::new(0.0, 0.0);
            for _ in 0..r_c {
                yc += alpha + unit_noise(&mut rng);
            }
            let mut yj = Complex64::new(0.0, 0.0);
            for _ in 0..r_j {
                yj += unit_noise(&mut rng);
            }
            let pc = (yc / r_c as f64).norm_sqr();
            let pj = (yj / r_j as f64).norm_sqr();
            u64::from(pj > pc)
        })
        .sum();
    McEstimate::from_count(hits, trials)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub checked: usize,
    pub agreed: usize,
    /// Largest deviation seen, in the unit of the check.
    pub max_deviation: f64,
    pub detail: String,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checked == self.agreed
    }
}

/// Closed-form pairwise probability against simulation at each grid point,
/// accepting deviations up to `z` binomial standard errors.
pub fn check_pairwise(points: &[(u32, u32, f64)], trials: u64, z: f64, seed: u64) -> Result<OracleReport> {
    let mut agreed = 0;
    let mut worst: f64 = 0.0;
    for &(rc, rj, rho) in points {
        let exact = pairwise_missdet(rc, rj, rho)?;
        let mc = pairwise_montecarlo(rc, rj, rho, trials, seed);
        let sigma = (exact * (1.0 - exact) / trials as f64).sqrt().max(f64::MIN_POSITIVE);
        let dev = (mc.p - exact).abs() / sigma;
        worst = worst.max(dev);
        if dev <= z {
            agreed += 1;
        }
    }
    Ok(OracleReport {
        name: "pairwise miss-determination".into(),
        checked: points.len(),
        agreed,
        max_deviation: worst,
        detail: format!("{trials} trials per point, tolerance {z} sigma; deviation in sigma"),
    })
}

/// Fifty points spread evenly over `{1..8}^2 x {0, 0.1, 0.5, 1, 3}`,
/// starting at `(1, 1, 0)`.
pub fn pairwise_grid() -> Vec<(u32, u32, f64)> {
    let rhos = [0.0, 0.1, 0.5, 1.0, 3.0];
    let mut all = Vec::new();
    for rc in 1..=8 {
        for rj in 1..=8 {
            for &rho in &rhos {
                all.push((rc, rj, rho));
            }
        }
    }
    (0..50).map(|i| all[i * all.len() / 50]).collect()
}

/// Smallest two-candidate objective over every integer split.
pub fn best_two_split(g1: f64, g2: f64, rho: f64, budget: u32) -> (u32, f64) {
    (1..budget)
        .map(|r1| (r1, two_candidate_objective(g1, g2, rho, r1, budget - r1)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// Random two-candidate instances: relative gap of [`alloc_two`] to the
/// exhaustive optimum, plus the `r1 <= r2` ordering.
pub fn check_two_candidate(instances: usize, rel_tol: f64, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agreed = 0;
    let mut worst: f64 = 0.0;
    let mut misordered = 0;
    for _ in 0..instances {
        let (g1, g2) = loop {
            let a: f64 = rng.random();
            let b: f64 = rng.random::<f64>() * (1.0 - a);
            if a > b && b > 0.0 {
                break (a, b);
            }
        };
        let rho = 10f64.powf(rng.random_range(-3.0..=0.0));
        let budget = rng.random_range(4..=512u32);
        let (r1, r2) = alloc_two(g1, g2, rho, budget)?;
        let got = two_candidate_objective(g1, g2, rho, r1, r2);
        let (_, best) = best_two_split(g1, g2, rho, budget);
        let rel = if best > 0.0 { (got - best) / best } else { 0.0 };
        worst = worst.max(rel);
        if r1 > r2 {
            misordered += 1;
        }
        if rel <= rel_tol && r1 <= r2 {
            agreed += 1;
        }
    }
    Ok(OracleReport {
        name: "two-candidate split".into(),
        checked: instances,
        agreed,
        max_deviation: worst,
        detail: format!("tolerance {rel_tol} relative; {misordered} splits with r1 > r2"),
    })
}

/// Best `min_c(offset_c + r_c)` over every vector with `r_c >= 1` summing to
/// `budget`.
pub fn enumerate_maxmin(offsets: &[f64], budget: u32) -> f64 {
    fn go(offsets: &[f64], left: u32, floor: f64) -> f64 {
        match offsets {
            [] => floor,
            [last] => floor.min(last + left as f64),
            [first, rest @ ..] => {
                let mut best = f64::NEG_INFINITY;
                for r in 1..=left - rest.len() as u32 {
                    best = best.max(go(rest, left - r, floor.min(first + r as f64)));
                }
                best
            }
        }
    }
    go(offsets, budget, f64::INFINITY)
}

/// Water-filling against enumeration for every set size 2..=4 and budget up
/// to 30 on random priors.
pub fn check_waterfill(priors: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let mut agreed = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..priors {
        let n = rng.random_range(4..=8usize);
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let prior = PriorVector::normalized(raw)?;
        let rho = 10f64.powf(rng.random_range(-2.5..=0.5));
        let ranked = prior.ranked();
        for s in 2..=4 {
            let candidates = &ranked[..s];
            for budget in s as u32..=30 {
                let reps = waterfill_alloc(candidates, &prior, rho, budget)?;
                let problem = WaterfillProblem::new(candidates, &prior, rho, budget)?;
                let got = problem.objective(&reps);
                let best = enumerate_maxmin(&problem.offsets, budget);
                let gap = best - got;
                worst = worst.max(gap);
                checked += 1;
                if gap <= 1e-9 * best.abs().max(1.0) && reps.iter().sum::<u32>() == budget {
                    agreed += 1;
                }
            }
        }
    }
    Ok(OracleReport {
        name: "water-filling".into(),
        checked,
        agreed,
        max_deviation: worst,
        detail: "max-min objective gap to enumeration".into(),
    })
}
