//! Splitting a beam-training budget among candidate codewords.
//!
//! [`plan`] grows the candidate set one beam at a time in prior order,
//! water-fills the repetitions for each size, and keeps the last set before
//! the misalignment bound starts rising. [`alloc_two`] is the closed-form
//! allocation for two candidates. [`brute_force_plan`] enumerates small
//! instances exhaustively.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::misalign::{estimate_unchecked, safe_exp, BeamPlan, MisalignmentEstimate};
use crate::prior::PriorVector;

/// The `S` most probable beams, most probable first.
pub fn candidate_set(prior: &PriorVector, s: usize) -> Result<Vec<usize>> {
    if s == 0 || s > prior.len() {
        return Err(Error::InvalidArgument(format!(
            "candidate set size {s} outside 1..={}",
            prior.len()
        )));
    }
    let mut ranked = prior.ranked();
    ranked.truncate(s);
    Ok(ranked)
}

/// Which branch of the two-candidate ratio solution applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioCase {
    /// `beta > k - 1`: the positive root of the stationarity quadratic.
    PositiveRoot,
    /// `beta = k - 1 > 2`: the quadratic degenerates to a linear equation.
    Linear,
    /// `2 < beta < k - 1` with two real roots: the smaller one.
    SmallerRoot,
    /// The objective keeps decreasing; push everything to the weaker beam.
    Unbounded,
}

/// Optimal ratio `x = r2 / r1` of the relaxed two-candidate problem together
/// with the quadratic it was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioSolution {
    /// `f64::INFINITY` in the unbounded case.
    pub x_star: f64,
    pub case: RatioCase,
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
    pub d: f64,
}

/// Real roots of `a2 x^2 + a1 x + a0` (with `a2 != 0` and `d >= 0`), computed
/// without cancellation. Returned in ascending order.
fn stable_roots(a2: f64, a1: f64, a0: f64, d: f64) -> (f64, f64) {
    let q = -0.5 * (a1 + a1.signum() * d.sqrt());
    let (u, v) = if q == 0.0 {
        // a1 = 0 and d = 0: double root at zero
        (0.0, 0.0)
    } else {
        (q / a2, a0 / q)
    };
    (u.min(v), u.max(v))
}

const LINEAR_TOL: f64 = 1e-12;

/// Minimizer of the relaxed two-candidate miss-determination objective
/// `(k + x) / (1 + x) * exp(-beta x / (1 + x)^2)` with `k = g1 / g2`
/// and `beta = R rho`.
pub fn optimal_ratio(k: f64, beta: f64) -> Result<RatioSolution> {
    if !(k.is_finite() && k > 1.0) {
        return Err(Error::InvalidArgument(format!("prior ratio must exceed 1, got {k}")));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidArgument(format!("budget-SNR product must be positive, got {beta}")));
    }
    let a2 = beta - k + 1.0;
    let a1 = (beta - 2.0) * (k - 1.0);
    let a0 = -(beta + 1.0) * k + 1.0;
    let d = a1 * a1 - 4.0 * a2 * a0;
    let solution = |x_star, case| RatioSolution {
        x_star,
        case,
        a2,
        a1,
        a0,
        d,
    };
    let on_boundary = (beta - (k - 1.0)).abs() <= LINEAR_TOL * beta.max(1.0);
    Ok(if on_boundary && beta > 2.0 {
        solution(-a0 / a1, RatioCase::Linear)
    } else if a2 > 0.0 && !on_boundary {
        // a0 < 0 < a2, so exactly one root is positive
        let (_, hi) = stable_roots(a2, a1, a0, d);
        solution(hi, RatioCase::PositiveRoot)
    } else if beta > 2.0 && a2 < 0.0 && d > 0.0 {
        let (lo, _) = stable_roots(a2, a1, a0, d);
        solution(lo, RatioCase::SmallerRoot)
    } else {
        solution(f64::INFINITY, RatioCase::Unbounded)
    })
}

/// Miss-determination probability of a two-candidate split; exact for two
/// candidates, not only a bound.
pub fn two_candidate_objective(g1: f64, g2: f64, rho: f64, r1: u32, r2: u32) -> f64 {
    let (a, b) = (r1 as f64, r2 as f64);
    let r = a + b;
    (g1 * a + g2 * b) / r * safe_exp(-a * b * rho / r)
}

/// Integer split `(r1, r2)` of `budget` between the stronger (`g1`) and the
/// weaker (`g2`) candidate. Always `1 <= r1 <= r2` and `r1 + r2 = budget`.
pub fn alloc_two(g1: f64, g2: f64, rho: f64, budget: u32) -> Result<(u32, u32)> {
    if !(g2 > 0.0 && g1 >= g2 && g1 + g2 <= 1.0 + 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "need g1 >= g2 > 0 with g1 + g2 <= 1, got ({g1}, {g2})"
        )));
    }
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::InvalidArgument(format!("SNR must be finite and nonnegative, got {rho}")));
    }
    if budget < 2 {
        return Err(Error::Infeasible(format!("two candidates need a budget of at least 2, got {budget}")));
    }
    if g1 == g2 {
        return Ok((budget / 2, budget - budget / 2));
    }
    let edge = (1, budget - 1);
    if rho == 0.0 {
        return Ok(edge);
    }
    let r = budget as f64;
    let sol = optimal_ratio(g1 / g2, r * rho)?;
    let x = sol.x_star;
    if !x.is_finite() || r / (x + 1.0) <= 1.0 {
        return Ok(edge);
    }
    let mut r1 = (r / (x + 1.0)).floor() as u32;
    let mut r2 = (r * x / (x + 1.0)).floor() as u32;
    if r1 + r2 < budget {
        // one leftover unit; it goes to the weaker beam unless the stronger
        // one gains strictly more from it and stays at or below r2
        let to_r1 = two_candidate_objective(g1, g2, rho, r1 + 1, r2);
        let to_r2 = two_candidate_objective(g1, g2, rho, r1, r2 + 1);
        if to_r1 < to_r2 && r1 < r2 {
            r1 += 1;
        } else {
            r2 += 1;
        }
    }
    debug_assert_eq!(r1 + r2, budget);
    if sol.case == RatioCase::SmallerRoot {
        // the interior stationary point can lose to the boundary split
        let interior = two_candidate_objective(g1, g2, rho, r1, r2);
        if two_candidate_objective(g1, g2, rho, edge.0, edge.1) < interior {
            return Ok(edge);
        }
    }
    Ok((r1, r2))
}

/// Inputs of the integer water-filling problem for a fixed candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfillProblem {
    /// Prior mass of the other candidates, `sum(g) - g_c`.
    pub weights: Vec<f64>,
    /// Water-level offsets `-ln(weight) / rho`.
    pub offsets: Vec<f64>,
    pub budget: u32,
}

impl WaterfillProblem {
    /// Builds the problem for `candidates` (most probable first).
    pub fn new(candidates: &[usize], prior: &PriorVector, rho: f64, budget: u32) -> Result<Self> {
        if candidates.len() < 2 {
            return Err(Error::InvalidArgument("water-filling needs at least two candidates".into()));
        }
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidArgument(format!("water-filling needs a positive SNR, got {rho}")));
        }
        if (budget as usize) < candidates.len() {
            return Err(Error::Infeasible(format!(
                "budget {budget} cannot cover {} candidates",
                candidates.len()
            )));
        }
        if let Some(&c) = candidates.iter().find(|&&c| c >= prior.len()) {
            return Err(Error::InvalidArgument(format!("candidate {c} outside a {}-beam prior", prior.len())));
        }
        let total: f64 = candidates.iter().map(|&c| prior.get(c)).sum();
        let weights: Vec<f64> = candidates.iter().map(|&c| total - prior.get(c)).collect();
        if weights.iter().any(|w| *w <= 0.0) {
            return Err(Error::InvalidArgument(
                "each candidate needs another candidate with positive prior".into(),
            ));
        }
        let offsets = weights.iter().map(|w| -w.ln() / rho).collect();
        Ok(WaterfillProblem {
            weights,
            offsets,
            budget,
        })
    }

    /// Continuous water level `nu` with `sum(max(nu - offset, 0)) = budget - S`.
    pub fn water_level(&self) -> f64 {
        let extra = (self.budget as usize - self.offsets.len()) as f64;
        let mut sorted = self.offsets.clone();
        sorted.sort_by(f64::total_cmp);
        let mut acc = 0.0;
        for k in 0..sorted.len() {
            acc += sorted[k];
            let nu = (extra + acc) / (k + 1) as f64;
            if k + 1 == sorted.len() || nu <= sorted[k + 1] {
                return nu;
            }
        }
        unreachable!("loop returns at the last index")
    }

    /// Same level found by bisection, for cross-checking.
    pub fn water_level_bisection(&self) -> f64 {
        let extra = (self.budget as usize - self.offsets.len()) as f64;
        let filled = |nu: f64| self.offsets.iter().map(|n| (nu - n).max(0.0)).sum::<f64>();
        let mut lo = self.offsets.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = lo + extra + 1.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if filled(mid) < extra {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `min_c(offset_c + r_c)`, the quantity the allocation maximizes.
    pub fn objective(&self, reps: &[u32]) -> f64 {
        self.offsets
            .iter()
            .zip(reps)
            .map(|(n, &r)| n + r as f64)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Repetitions maximizing `min_c(offset_c + r_c)` subject to `r_c >= 1` and
/// `sum(r_c) = budget`. Candidates come most probable first; in the returned
/// vector ties go to the less probable candidate.
pub fn waterfill_alloc(candidates: &[usize], prior: &PriorVector, rho: f64, budget: u32) -> Result<Vec<u32>> {
    let problem = WaterfillProblem::new(candidates, prior, rho, budget)?;
    Ok(waterfill_solve(&problem, false))
}

pub(crate) fn waterfill_solve(problem: &WaterfillProblem, bisection: bool) -> Vec<u32> {
    let nu = if bisection {
        problem.water_level_bisection()
    } else {
        problem.water_level()
    };
    let offsets = &problem.offsets;
    let mut reps: Vec<u32> = offsets
        .iter()
        .map(|n| (nu - n).max(0.0).floor() as u32 + 1)
        .collect();
    let level = |reps: &[u32], i: usize| offsets[i] + reps[i] as f64;

    let mut spent: u32 = reps.iter().sum();
    // rounding in nu can overshoot by a unit; take it back from the highest level
    while spent > problem.budget {
        let i = (0..reps.len())
            .filter(|&i| reps[i] > 1)
            .max_by(|&a, &b| level(&reps, a).total_cmp(&level(&reps, b)).then(a.cmp(&b)))
            .expect("budget covers one repetition each");
        reps[i] -= 1;
        spent -= 1;
    }
    // leftover units go to the lowest level; the later (less probable) one wins ties
    while spent < problem.budget {
        let i = (0..reps.len())
            .min_by(|&a, &b| level(&reps, a).total_cmp(&level(&reps, b)).then(b.cmp(&a)))
            .expect("non-empty");
        reps[i] += 1;
        spent += 1;
    }
    reps
}

/// How a plan was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Greedy set growth with water-filled repetitions.
    Algorithm1,
    /// Best of the single-beam plan and the closed-form two-beam split.
    Theorem1,
    /// Exhaustive search over small instances.
    Brute,
}

/// A chosen plan with its bound and the bound of every set size evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub plan: BeamPlan,
    pub estimate: MisalignmentEstimate,
    /// Raw bound for set sizes 1, 2, ... in the order they were evaluated.
    pub trace: Vec<f64>,
}

fn check_plan_inputs(rho: f64, budget: u32) -> Result<()> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::InvalidArgument(format!("SNR must be finite and nonnegative, got {rho}")));
    }
    if budget == 0 {
        return Err(Error::Infeasible("budget must be at least 1".into()));
    }
    Ok(())
}

fn single_beam(prior: &PriorVector, rho: f64, budget: u32) -> PlanOutcome {
    let best = prior.argmax();
    let estimate = estimate_unchecked(&[best], &[budget], prior, rho);
    PlanOutcome {
        plan: BeamPlan {
            candidates: vec![best],
            repetitions: vec![budget],
            budget,
        },
        estimate,
        trace: vec![estimate.p_miss_bound],
    }
}

/// Largest candidate-set size worth evaluating.
fn max_set_size(prior: &PriorVector, rho: f64, budget: u32) -> usize {
    if rho == 0.0 {
        return 1;
    }
    prior.len().min(budget as usize).min(prior.nonzero_count()).max(1)
}

/// Greedy candidate-set growth: add the next most probable beam, water-fill
/// the budget, and stop as soon as the bound increases.
pub fn plan(prior: &PriorVector, rho: f64, budget: u32) -> Result<PlanOutcome> {
    check_plan_inputs(rho, budget)?;
    let mut best = single_beam(prior, rho, budget);
    let ranked = prior.ranked();
    for s in 2..=max_set_size(prior, rho, budget) {
        let candidates = ranked[..s].to_vec();
        let repetitions = waterfill_alloc(&candidates, prior, rho, budget)?;
        let estimate = estimate_unchecked(&candidates, &repetitions, prior, rho);
        best.trace.push(estimate.p_miss_bound);
        if best.estimate.p_miss_bound < estimate.p_miss_bound {
            break;
        }
        best.plan = BeamPlan {
            candidates,
            repetitions,
            budget,
        };
        best.estimate = estimate;
    }
    Ok(best)
}

/// Plan restricted to at most two candidates, the pair split in closed form.
pub fn plan_two(prior: &PriorVector, rho: f64, budget: u32) -> Result<PlanOutcome> {
    check_plan_inputs(rho, budget)?;
    let mut best = single_beam(prior, rho, budget);
    if max_set_size(prior, rho, budget) < 2 {
        return Ok(best);
    }
    let candidates = candidate_set(prior, 2)?;
    let (r1, r2) = alloc_two(prior.get(candidates[0]), prior.get(candidates[1]), rho, budget)?;
    let estimate = estimate_unchecked(&candidates, &[r1, r2], prior, rho);
    best.trace.push(estimate.p_miss_bound);
    if estimate.p_miss_bound <= best.estimate.p_miss_bound {
        best.plan = BeamPlan {
            candidates,
            repetitions: vec![r1, r2],
            budget,
        };
        best.estimate = estimate;
    }
    Ok(best)
}

pub const BRUTE_MAX_SET: usize = 5;
pub const BRUTE_MAX_BUDGET: u32 = 30;

/// Minimizes the misalignment bound over every subset of the `s_max` most
/// probable beams and every positive repetition vector spending at most
/// `budget`. Guarded to `s_max <= 5` and `budget <= r_max <= 30`.
pub fn brute_force_plan(prior: &PriorVector, rho: f64, budget: u32, s_max: usize, r_max: u32) -> Result<BeamPlan> {
    check_plan_inputs(rho, budget)?;
    if s_max == 0 || s_max > BRUTE_MAX_SET || r_max > BRUTE_MAX_BUDGET {
        return Err(Error::Guard(format!(
            "brute force allows at most {BRUTE_MAX_SET} beams and a budget of {BRUTE_MAX_BUDGET}"
        )));
    }
    if budget > r_max {
        return Err(Error::Guard(format!("budget {budget} above the limit {r_max}")));
    }
    let pool = candidate_set(prior, s_max.min(prior.len()))?;
    let mut best: Option<(f64, Vec<usize>, Vec<u32>)> = None;
    for mask in 1u32..(1 << pool.len()) {
        let subset: Vec<usize> = (0..pool.len()).filter(|i| mask >> i & 1 == 1).map(|i| pool[i]).collect();
        if subset.len() > budget as usize {
            continue;
        }
        let mut reps = vec![1u32; subset.len()];
        for_each_allocation(&mut reps, 0, budget - subset.len() as u32, &mut |reps| {
            let v = estimate_unchecked(&subset, reps, prior, rho).p_miss_bound;
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, subset.clone(), reps.to_vec()));
            }
        });
    }
    let (_, candidates, repetitions) = best.expect("at least one subset");
    BeamPlan::new(candidates, repetitions, budget)
}

/// Visits every way of adding at most `extra` units on top of `reps[from..]`.
fn for_each_allocation(reps: &mut [u32], from: usize, extra: u32, visit: &mut impl FnMut(&[u32])) {
    if from == reps.len() {
        visit(reps);
        return;
    }
    for add in 0..=extra {
        reps[from] += add;
        for_each_allocation(reps, from + 1, extra - add, visit);
        reps[from] -= add;
    }
}

/// Chooses a plan with the requested method.
pub fn optimize(prior: &PriorVector, rho: f64, budget: u32, method: Method) -> Result<PlanOutcome> {
    match method {
        Method::Algorithm1 => plan(prior, rho, budget),
        Method::Theorem1 => plan_two(prior, rho, budget),
        Method::Brute => {
            let p = brute_force_plan(prior, rho, budget, BRUTE_MAX_SET.min(prior.len()), BRUTE_MAX_BUDGET)?;
            let estimate = estimate_unchecked(&p.candidates, &p.repetitions, prior, rho);
            Ok(PlanOutcome {
                plan: p,
                estimate,
                trace: vec![estimate.p_miss_bound],
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::misalign::misalignment_bound;

    fn loc1() -> PriorVector {
        PriorVector::new(vec![0.7, 0.1, 0.1, 0.1]).unwrap()
    }

    fn db(x: f64) -> f64 {
        10f64.powf(x / 10.0)
    }

    fn relaxed(k: f64, beta: f64, x: f64) -> f64 {
        (k + x) / (1.0 + x) * (-beta * x / (1.0 + x).powi(2)).exp()
    }

    #[test]
    fn candidate_sets() {
        let loc4 = PriorVector::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        assert_eq!(candidate_set(&loc4, 2).unwrap(), vec![0, 1]);
        assert_eq!(candidate_set(&PriorVector::uniform(5).unwrap(), 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(candidate_set(&loc4, 4).unwrap().len(), 4);
        assert!(candidate_set(&loc4, 0).is_err());
        assert!(candidate_set(&loc4, 5).is_err());
    }

    #[test]
    fn ratio_positive_root() {
        let s = optimal_ratio(3.0, 10.0).unwrap();
        assert_eq!(s.case, RatioCase::PositiveRoot);
        let expect = (-16.0 + 1280f64.sqrt()) / 16.0;
        assert!((s.x_star - expect).abs() < 1e-12);
        assert!((s.x_star - 1.2361).abs() < 1e-4);
        let v = relaxed(3.0, 10.0, s.x_star);
        for i in 1..=100_000 {
            let x = i as f64 * 1e-3;
            assert!(v <= relaxed(3.0, 10.0, x) + 1e-12);
        }
    }

    #[test]
    fn ratio_negative_discriminant() {
        let s = optimal_ratio(7.0, 2.56).unwrap();
        assert!(s.d < 0.0);
        assert_eq!(s.case, RatioCase::Unbounded);
        assert!(s.x_star.is_infinite());
        let mut prev = f64::INFINITY;
        for i in 1..=10_000 {
            let v = relaxed(7.0, 2.56, i as f64 * 0.01);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn ratio_linear_case_is_stationary() {
        let s = optimal_ratio(5.0, 4.0).unwrap();
        assert_eq!(s.case, RatioCase::Linear);
        assert!((s.x_star - (-s.a0 / s.a1)).abs() < 1e-15);
        let h = 1e-6;
        let slope = (relaxed(5.0, 4.0, s.x_star + h) - relaxed(5.0, 4.0, s.x_star - h)) / (2.0 * h);
        assert!(slope.abs() < 1e-8, "{slope}");
    }

    #[test]
    fn ratio_smaller_root_is_local_minimum() {
        let (k, beta) = (20.0, 8.0);
        let s = optimal_ratio(k, beta).unwrap();
        assert_eq!(s.case, RatioCase::SmallerRoot);
        assert!(s.x_star > 1.0);
        let v = relaxed(k, beta, s.x_star);
        assert!(v <= relaxed(k, beta, s.x_star * 1.01));
        assert!(v <= relaxed(k, beta, s.x_star * 0.99));
    }

    #[test]
    fn ratio_rejects_bad_input() {
        assert!(optimal_ratio(1.0, 3.0).is_err());
        assert!(optimal_ratio(2.0, 0.0).is_err());
    }

    fn best_split(g1: f64, g2: f64, rho: f64, budget: u32) -> f64 {
        (1..budget)
            .map(|r1| two_candidate_objective(g1, g2, rho, r1, budget - r1))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn alloc_two_examples() {
        assert_eq!(alloc_two(0.3, 0.3, 0.1, 9).unwrap(), (4, 5));
        assert_eq!(alloc_two(0.7, 0.1, 1e-2, 256).unwrap(), (1, 255));
        let opt = best_split(0.7, 0.1, 1e-2, 256);
        assert!((two_candidate_objective(0.7, 0.1, 1e-2, 1, 255) - opt).abs() < 1e-15);

        let (g1, g2, budget) = (0.6, 0.2, 10);
        let rho = 10.0 / budget as f64;
        let (r1, r2) = alloc_two(g1, g2, rho, budget).unwrap();
        assert_eq!(r1 + r2, budget);
        let v = two_candidate_objective(g1, g2, rho, r1, r2);
        assert!((v - best_split(g1, g2, rho, budget)).abs() < 1e-15);

        assert!(alloc_two(0.1, 0.2, 1.0, 10).is_err());
        assert!(alloc_two(0.5, 0.2, 1.0, 1).is_err());
    }

    #[test]
    fn waterfill_two_beam_example() {
        let p = loc1();
        let rho = db(-16.0);
        let problem = WaterfillProblem::new(&[0, 1], &p, rho, 256).unwrap();
        assert!((problem.offsets[0] - 91.66).abs() < 0.01);
        assert!((problem.offsets[1] - 14.20).abs() < 0.01);
        assert_eq!(waterfill_alloc(&[0, 1], &p, rho, 256).unwrap(), vec![89, 167]);
        assert!((problem.water_level() - problem.water_level_bisection()).abs() < 1e-9);
    }

    #[test]
    fn waterfill_equal_priors_balance() {
        let p = PriorVector::uniform(5).unwrap();
        for budget in 5..40 {
            let r = waterfill_alloc(&[0, 1, 2, 3, 4], &p, 0.3, budget).unwrap();
            assert_eq!(r.iter().sum::<u32>(), budget);
            assert!(r.iter().max().unwrap() - r.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn waterfill_handles_inactive_candidates() {
        // a dominant beam has a huge offset and stays at one repetition
        let p = PriorVector::new(vec![0.98, 0.01, 0.01]).unwrap();
        let r = waterfill_alloc(&[0, 1, 2], &p, 0.01, 10).unwrap();
        assert_eq!(r, vec![1, 4, 5]);
    }

    #[test]
    fn waterfill_errors() {
        let p = PriorVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(waterfill_alloc(&[0, 1], &p, 0.1, 10).is_err());
        assert!(waterfill_alloc(&[0], &loc1(), 0.1, 10).is_err());
        assert!(waterfill_alloc(&[0, 1], &loc1(), 0.0, 10).is_err());
        assert!(waterfill_alloc(&[0, 1, 2], &loc1(), 0.1, 2).is_err());
    }

    #[test]
    fn plan_examples() {
        let one_hot = PriorVector::one_hot(8, 5).unwrap();
        let out = plan(&one_hot, 0.1, 64).unwrap();
        assert_eq!(out.plan.candidates, vec![5]);
        assert_eq!(out.plan.repetitions, vec![64]);
        assert_eq!(out.estimate.p_miss_bound, 0.0);

        let p = loc1();
        let out = plan(&p, db(-18.0), 256).unwrap();
        assert_eq!(out.plan.candidates, vec![0]);
        assert!((out.estimate.p_miss_bound - 0.3).abs() < 1e-12);

        let out = plan(&p, db(-8.0), 256).unwrap();
        assert_eq!(out.plan.len(), 4);
        assert!((out.estimate.p_miss_bound - 0.010).abs() < 0.002);
        assert_eq!(out.plan.spent(), 256);

        assert_eq!(plan(&p, 0.0, 256).unwrap().plan.len(), 1);
        assert!(plan(&p, -1.0, 256).is_err());
        assert!(plan(&p, 0.1, 0).is_err());
    }

    #[test]
    fn plan_stops_at_first_increase() {
        let p = loc1();
        for snr in [-20.0, -16.0, -12.0, -8.0] {
            let out = plan(&p, db(snr), 256).unwrap();
            let s = out.plan.len();
            let t = &out.trace;
            for w in t[..s].windows(2) {
                assert!(w[1] <= w[0]);
            }
            if t.len() > s {
                assert!(t[s] > t[s - 1]);
                assert_eq!(t.len(), s + 1);
            }
            assert_eq!(out.estimate.p_miss_bound, t[s - 1]);
        }
    }

    #[test]
    fn plan_caps_set_size() {
        let p = PriorVector::new(vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        assert!(plan(&p, 10.0, 256).unwrap().plan.len() <= 2);
        let u = PriorVector::uniform(16).unwrap();
        assert!(plan(&u, 100.0, 3).unwrap().plan.len() <= 3);
    }

    #[test]
    fn brute_force_examples() {
        let one_hot = PriorVector::one_hot(4, 2).unwrap();
        let b = brute_force_plan(&one_hot, 0.2, 10, 4, 30).unwrap();
        assert_eq!(b.candidates, vec![2]);
        assert_eq!(plan(&one_hot, 0.2, 10).unwrap().plan.candidates, b.candidates);
        assert!(brute_force_plan(&loc1(), 0.2, 31, 4, 31).is_err());
        assert!(brute_force_plan(&loc1(), 0.2, 20, 6, 30).is_err());
        assert!(brute_force_plan(&loc1(), 0.2, 20, 4, 10).is_err());
    }

    #[test]
    fn theorem_method_never_worse_than_single_beam() {
        let p = loc1();
        for snr in [-20.0, -14.0, -8.0] {
            let out = optimize(&p, db(snr), 256, Method::Theorem1).unwrap();
            assert!(out.plan.len() <= 2);
            assert!(out.estimate.p_miss_bound <= 0.3 + 1e-12);
            let check = misalignment_bound(&out.plan, &p, db(snr)).unwrap();
            assert_eq!(check, out.estimate);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn alloc_two_ordered_and_conserving(
                g2 in 0.01f64..0.5, frac in 0.0f64..1.0, rho in 1e-3f64..1.0, budget in 2u32..600,
            ) {
                let g1 = g2 + frac * (1.0 - 2.0 * g2);
                let (r1, r2) = alloc_two(g1, g2, rho, budget).unwrap();
                prop_assert_eq!(r1 + r2, budget);
                prop_assert!(r1 >= 1 && r1 <= r2);
            }

            #[test]
            fn plan_spends_whole_budget(
                raw in proptest::collection::vec(0.0f64..1.0, 2..10),
                snr in -25.0f64..5.0,
                budget in 1u32..400,
            ) {
                prop_assume!(raw.iter().sum::<f64>() > 1e-3);
                let prior = PriorVector::normalized(raw).unwrap();
                let out = plan(&prior, db(snr), budget).unwrap();
                prop_assert_eq!(out.plan.spent(), budget);
                prop_assert!(out.plan.repetitions.iter().all(|&r| r >= 1));
            }

            #[test]
            fn closed_form_level_matches_bisection(
                raw in proptest::collection::vec(0.01f64..1.0, 2..8),
                rho in 0.001f64..3.0,
                extra in 0u32..500,
            ) {
                let prior = PriorVector::normalized(raw.clone()).unwrap();
                let cands: Vec<usize> = (0..raw.len()).collect();
                let problem = WaterfillProblem::new(&cands, &prior, rho, raw.len() as u32 + extra).unwrap();
                let a = problem.water_level();
                let b = problem.water_level_bisection();
                prop_assert!((a - b).abs() <= 1e-7 * a.abs().max(1.0));
                let fast = waterfill_solve(&problem, false);
                let slow = waterfill_solve(&problem, true);
                prop_assert!((problem.objective(&fast) - problem.objective(&slow)).abs() < 1e-9);
            }
        }
    }
}
