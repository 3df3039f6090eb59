//! Reference computations written independently of the library, used to
//! check its results. Everything here works on plain slices and its own
//! random streams.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const TABLE1: [[f64; 4]; 4] = [
    [0.7, 0.1, 0.1, 0.1],
    [0.6, 0.2, 0.1, 0.1],
    [0.5, 0.2, 0.2, 0.1],
    [0.4, 0.3, 0.2, 0.1],
];

pub fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

/// Misalignment bound computed term by term from its definition.
pub fn bound(prior: &[f64], candidates: &[usize], reps: &[u32], rho: f64) -> f64 {
    let covered: f64 = candidates.iter().map(|&c| prior[c]).sum();
    let mut det = 0.0;
    for a in 0..candidates.len() {
        for b in 0..candidates.len() {
            if a == b {
                continue;
            }
            let rc = reps[a] as f64;
            let rj = reps[b] as f64;
            let k = rc / (rc + rj);
            det += prior[candidates[a]] * k * (-k * rj * rho).exp();
        }
    }
    (1.0 - covered).max(0.0) + det
}

/// Two-candidate miss-determination for split `(r1, r2)`.
pub fn split_objective(g1: f64, g2: f64, rho: f64, r1: u32, r2: u32) -> f64 {
    let (a, b) = (r1 as f64, r2 as f64);
    (g1 * a + g2 * b) / (a + b) * (-(a * b) / (a + b) * rho).exp()
}

pub fn best_split(g1: f64, g2: f64, rho: f64, budget: u32) -> f64 {
    let mut best = f64::INFINITY;
    for r1 in 1..budget {
        best = best.min(split_objective(g1, g2, rho, r1, budget - r1));
    }
    best
}

fn complex_normal(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    (re * s, im * s)
}

/// Probability that the average of `rj` unit-variance complex noise samples
/// has more power than the average of `rc` samples of `sqrt(rho) + noise`,
/// estimated by drawing and averaging every sample.
pub fn pairwise_literal(rc: u32, rj: u32, rho: f64, trials: u64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = rho.sqrt();
    let mut hits = 0u64;
    for _ in 0..trials {
        let (mut cr, mut ci) = (0.0, 0.0);
        for _ in 0..rc {
            let (a, b) = complex_normal(&mut rng);
            cr += amp + a;
            ci += b;
        }
        let (mut jr, mut ji) = (0.0, 0.0);
        for _ in 0..rj {
            let (a, b) = complex_normal(&mut rng);
            jr += a;
            ji += b;
        }
        let pc = (cr * cr + ci * ci) / (rc as f64 * rc as f64);
        let pj = (jr * jr + ji * ji) / (rj as f64 * rj as f64);
        if pj > pc {
            hits += 1;
        }
    }
    hits as f64 / trials as f64
}

/// Water-filling offsets `-ln(sum(g) - g_c) / rho` for candidate priors `g`.
pub fn offsets(g: &[f64], rho: f64) -> Vec<f64> {
    let total: f64 = g.iter().sum();
    g.iter().map(|x| -(total - x).ln() / rho).collect()
}

/// Calls `visit` with every vector of `parts` positive integers summing to
/// `total`, in lexicographic order.
pub fn compositions(parts: usize, total: u32, mut visit: impl FnMut(&[u32])) {
    if parts == 0 || (total as usize) < parts {
        return;
    }
    let mut v = vec![1u32; parts];
    v[parts - 1] = total - (parts as u32 - 1);
    loop {
        visit(&v);
        // find the rightmost position before the last that can grow
        let mut i = parts - 1;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            let tail: u32 = v[i + 1..].iter().sum();
            if tail > (parts - 1 - i) as u32 {
                v[i] += 1;
                let rest = tail - 1;
                for x in v[i + 1..].iter_mut() {
                    *x = 1;
                }
                v[parts - 1] = rest - (parts - 2 - i) as u32;
                break;
            }
        }
    }
}

/// Exhaustive optimum of `min_c(offset_c + r_c)`.
pub fn maxmin_enumeration(offsets: &[f64], budget: u32) -> f64 {
    let mut best = f64::NEG_INFINITY;
    compositions(offsets.len(), budget, |r| {
        let v = offsets
            .iter()
            .zip(r)
            .map(|(n, &x)| n + x as f64)
            .fold(f64::INFINITY, f64::min);
        best = best.max(v);
    });
    best
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Mean over the four reference locations of the prior mass outside the two most
/// probable beams.
pub fn top2_floor() -> f64 {
    TABLE1
        .iter()
        .map(|p| {
            let mut s = p.to_vec();
            s.sort_by(|a, b| b.partial_cmp(a).unwrap());
            1.0 - s[0] - s[1]
        })
        .sum::<f64>()
        / TABLE1.len() as f64
}

/// Outcome line of one acceptance criterion.
pub struct Verdict {
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Verdict {
            passed,
            detail: detail.into(),
        }
    }
}
