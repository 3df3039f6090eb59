//! Monte Carlo sweeps over SNR, budget and beam-search strategy.
//!
//! Each trial picks a location, optionally perturbs the reported position,
//! obtains the location's beam prior, builds the strategy's probing plan,
//! draws a channel, probes the planned beams and records whether the detected
//! beam is the optimal one together with the normalized beamforming gain.
//!
//! Trials are independent and each owns a counter-based random stream keyed
//! by `(seed, sweep point, trial)`. All strategies at one SNR and budget see
//! the same locations and channels. Per-trial outcomes are collected in
//! trial order and reduced sequentially, so results do not depend on the
//! number of worker threads.

mod dataset;
mod scenario;

use std::f64::consts::TAU;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dataset::{load_channel_dataset, ChannelDataset, ChannelRecord, Split, TRAIN_FRACTION};
pub use scenario::{Budgets, ChannelMode, LocationSpec, PriorSource, ScenarioConfig, StrategySpec};

use crate::alloc::{candidate_set, plan, waterfill_alloc};
use crate::channel::{averaged_noise, dft_codebook, Codebook};
use crate::error::{Error, Result};
use crate::feedback::{fit_regression, fit_to_budget, reconstruct, BudgetAdjustment};
use crate::misalign::{planted_detect, BeamPlan};
use crate::prior::{
    empirical_prior, gps_perturb, predict_prior, read_training_csv, LocationKey, PriorModel, PriorVector,
};
use crate::rng::trial_rng;

/// Probes the whole codebook with `floor(budget / N)` repetitions per beam.
pub fn strategy_exhaustive(n_beams: usize, budget: u32) -> Result<BeamPlan> {
    if n_beams == 0 {
        return Err(Error::InvalidArgument("empty codebook".into()));
    }
    if (budget as usize) < n_beams {
        return Err(Error::Infeasible(format!(
            "budget {budget} cannot probe all {n_beams} beams once"
        )));
    }
    let r = budget / n_beams as u32;
    BeamPlan::new((0..n_beams).collect(), vec![r; n_beams], budget)
}

/// Probes the `k` most probable beams with `floor(budget / k)` repetitions each.
pub fn strategy_topk(prior: &PriorVector, k: usize, budget: u32) -> Result<BeamPlan> {
    if k as u64 > budget as u64 {
        return Err(Error::Infeasible(format!("top-{k} search needs a budget of at least {k}, got {budget}")));
    }
    let candidates = candidate_set(prior, k)?;
    let r = budget / k as u32;
    BeamPlan::new(candidates, vec![r; k], budget)
}

/// The `s` most probable beams with water-filled repetitions.
pub fn strategy_fixed_size(prior: &PriorVector, s: usize, rho: f64, budget: u32) -> Result<BeamPlan> {
    let candidates = candidate_set(prior, s)?;
    if s == 1 {
        return BeamPlan::new(candidates, vec![budget], budget);
    }
    let reps = waterfill_alloc(&candidates, prior, rho, budget)?;
    BeamPlan::new(candidates, reps, budget)
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Outcome of one simulated beam alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub strategy: String,
    pub snr_db: f64,
    pub location_id: u32,
    pub true_index: usize,
    pub detected_index: usize,
    pub misaligned: bool,
    /// Achieved over optimal beamforming power.
    pub normalized_gain: f64,
    pub set_size: usize,
    pub spent: u32,
    /// Budget repair applied after feedback compression.
    pub adjustment: BudgetAdjustment,
}

/// A replayed channel reduced to what a trial needs.
#[derive(Debug, Clone)]
struct StoredChannel {
    /// `h^H f_c` for every codeword.
    correlations: Vec<Complex64>,
    energy: f64,
    optimal: usize,
}

impl StoredChannel {
    fn gain_of(&self, beam: usize) -> f64 {
        let best = self.correlations[self.optimal].norm_sqr();
        if best == 0.0 {
            1.0
        } else {
            self.correlations[beam].norm_sqr() / best
        }
    }
}

struct LocationState {
    id: u32,
    x: f64,
    y: f64,
    /// Prior used for planning when it does not change between trials.
    planning_prior: Option<PriorVector>,
    /// Distribution of the optimal beam for planted channels.
    true_prior: Option<PriorVector>,
    channels: Vec<StoredChannel>,
}

/// A loaded scenario ready to run.
pub struct Simulator {
    config: ScenarioConfig,
    codebook: Codebook,
    cumulative_weights: Vec<f64>,
    locations: Vec<LocationState>,
    model: Option<PriorModel>,
}

#[derive(Debug, Clone)]
struct PlannedProbe {
    plan: BeamPlan,
    adjustment: BudgetAdjustment,
}

impl Simulator {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let codebook = dft_codebook(&config.geometry)?;
        let n = codebook.len();

        let history = match &config.prior_source {
            PriorSource::Empirical { path } => Some(read_training_csv(path)?),
            _ => None,
        };
        let model = match &config.prior_source {
            PriorSource::Model { path } => {
                let m = PriorModel::load(path)?;
                if m.n_beams() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        actual: m.n_beams(),
                    });
                }
                Some(m)
            }
            _ => None,
        };
        let eval_channels = match &config.channel_mode {
            ChannelMode::Planted => None,
            ChannelMode::Dataset { path } => {
                let ds = load_channel_dataset(path, &config.geometry)?;
                Some(ds.by_location(Split::Eval).into_iter().map(|(k, v)| {
                    let stored: Vec<StoredChannel> = v
                        .iter()
                        .map(|r| {
                            let correlations = codebook.correlations(&r.h);
                            let optimal = crate::channel::argmax_first(correlations.iter().map(|c| c.norm_sqr()));
                            StoredChannel {
                                correlations,
                                energy: r.h.energy(),
                                optimal,
                            }
                        })
                        .collect();
                    (k, stored)
                }).collect::<std::collections::BTreeMap<_, _>>())
            }
        };

        let mut locations = Vec::with_capacity(config.locations.len());
        for spec in &config.locations {
            let table = spec.prior.as_ref().map(|p| PriorVector::padded(p, n)).transpose()?;
            let key = LocationKey::of(spec.x, spec.y);
            let planning_prior = match &config.prior_source {
                PriorSource::Table => table.clone(),
                PriorSource::Empirical { .. } => {
                    Some(empirical_prior(history.as_deref().unwrap_or_default(), key, n)?)
                }
                PriorSource::Model { .. } if config.gps_sigma_m == 0.0 => {
                    Some(predict_prior(model.as_ref().expect("model loaded"), spec.x, spec.y)?)
                }
                PriorSource::Model { .. } => None,
            };
            let true_prior = table.or_else(|| planning_prior.clone());
            let channels = match &eval_channels {
                None => Vec::new(),
                Some(map) => match map.get(&key) {
                    Some(v) if !v.is_empty() => v.clone(),
                    _ => {
                        return Err(Error::Dataset(format!(
                            "no evaluation channels for location {} at {key}",
                            spec.id
                        )))
                    }
                },
            };
            locations.push(LocationState {
                id: spec.id,
                x: spec.x,
                y: spec.y,
                planning_prior,
                true_prior,
                channels,
            });
        }

        let mut acc = 0.0;
        let cumulative_weights = config
            .location_weights()
            .into_iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Simulator {
            config,
            codebook,
            cumulative_weights,
            locations,
            model,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Simulator::new(ScenarioConfig::load(path)?)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    fn pick_location<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative_weights
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.locations.len() - 1)
    }

    fn build_plan(&self, strategy: &StrategySpec, prior: &PriorVector, rho: f64, budget: u32) -> Result<PlannedProbe> {
        let n = self.codebook.len();
        let (mut plan, compressible) = match *strategy {
            StrategySpec::Proposed => (plan(prior, rho, budget)?.plan, true),
            StrategySpec::TopK { k } => (strategy_topk(prior, k, budget)?, false),
            StrategySpec::Exhaustive => (strategy_exhaustive(n, budget)?, false),
            StrategySpec::FixedS { s } => (strategy_fixed_size(prior, s, rho, budget)?, true),
        };
        let mut adjustment = BudgetAdjustment::default();
        if self.config.compression && compressible {
            let mut reps = reconstruct(&fit_regression(&plan.repetitions)?);
            adjustment = fit_to_budget(&mut reps, budget)?;
            plan = BeamPlan::new(plan.candidates, reps, budget)?;
        }
        Ok(PlannedProbe { plan, adjustment })
    }

    /// Plans per location when the planning prior is fixed, `None` otherwise.
    fn static_plans(&self, strategy: &StrategySpec, rho: f64, budget: u32) -> Result<Option<Vec<PlannedProbe>>> {
        self.locations
            .iter()
            .map(|l| match &l.planning_prior {
                Some(p) => self.build_plan(strategy, p, rho, budget).map(Some),
                None => Ok(None),
            })
            .collect::<Result<Option<Vec<_>>>>()
    }

    /// Runs one trial, planning from scratch.
    pub fn run_trial<R: Rng + ?Sized>(
        &self,
        strategy: &StrategySpec,
        snr_db: f64,
        budget: u32,
        rng: &mut R,
    ) -> Result<TrialResult> {
        self.trial(strategy, snr_db, budget, None, rng)
    }

    fn trial<R: Rng + ?Sized>(
        &self,
        strategy: &StrategySpec,
        snr_db: f64,
        budget: u32,
        cached: Option<&[PlannedProbe]>,
        rng: &mut R,
    ) -> Result<TrialResult> {
        let rho = db_to_linear(snr_db);
        let li = self.pick_location(rng);
        let loc = &self.locations[li];
        let (gx, gy) = gps_perturb(loc.x, loc.y, self.config.gps_sigma_m, rng)?;

        let fresh;
        let probe = match cached {
            Some(plans) => &plans[li],
            None => {
                let prior = match &loc.planning_prior {
                    Some(p) => p.clone(),
                    None => predict_prior(self.model.as_ref().expect("model source"), gx, gy)?,
                };
                fresh = self.build_plan(strategy, &prior, rho, budget)?;
                &fresh
            }
        };
        let plan = &probe.plan;

        let (true_index, detected_index, normalized_gain) = if loc.channels.is_empty() {
            let truth = loc.true_prior.as_ref().expect("planted mode has a true prior").sample(rng);
            let detected = match self.config.wideband_k {
                None => planted_detect(&plan.candidates, &plan.repetitions, truth, rho, rng),
                Some(k) => planted_detect_wideband(&plan.candidates, &plan.repetitions, truth, rho, k, rng),
            };
            (truth, detected, if detected == truth { 1.0 } else { 0.0 })
        } else {
            let ch = &loc.channels[rng.random_range(0..loc.channels.len())];
            let noise_var = ch.energy / rho;
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for (&c, &r) in plan.candidates.iter().zip(&plan.repetitions) {
                let p = (ch.correlations[c] + averaged_noise(noise_var, r, rng)).norm_sqr();
                if p > best.1 || (p == best.1 && c < best.0) {
                    best = (c, p);
                }
            }
            (ch.optimal, best.0, ch.gain_of(best.0))
        };
        Ok(TrialResult {
            strategy: strategy.label(),
            snr_db,
            location_id: loc.id,
            true_index,
            detected_index,
            misaligned: detected_index != true_index,
            normalized_gain,
            set_size: plan.len(),
            spent: plan.spent(),
            adjustment: probe.adjustment,
        })
    }

    fn run_point(&self, strategy: &StrategySpec, snr_idx: usize, budget_idx: usize) -> Result<SweepRow> {
        let snr_db = self.config.snr_db_list[snr_idx];
        let budgets = self.config.budgets();
        let budget = budgets[budget_idx];
        let rho = db_to_linear(snr_db);
        let cached = self.static_plans(strategy, rho, budget)?;
        let point = (snr_idx * budgets.len() + budget_idx) as u64;
        let seed = self.config.seed;
        let trials = self.config.trials;
        let outcomes: Vec<TrialResult> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = trial_rng(seed, point, t);
                self.trial(strategy, snr_db, budget, cached.as_deref(), &mut rng)
            })
            .collect::<Result<_>>()?;
        Ok(SweepRow::aggregate(strategy.label(), snr_db, budget, &outcomes))
    }

    /// Every (strategy, budget, SNR) point, in that nesting order.
    pub fn run_sweep(&self) -> Result<SweepResult> {
        let mut rows = Vec::new();
        for strategy in &self.config.strategies {
            for bi in 0..self.config.budgets().len() {
                for si in 0..self.config.snr_db_list.len() {
                    rows.push(self.run_point(strategy, si, bi)?);
                }
            }
        }
        Ok(SweepResult {
            seed: self.config.seed,
            config_hash: self.config.config_hash(),
            rows,
        })
    }
}

/// Wideband variant of planted detection: every subcarrier sees the planted
/// codeword with its own phase and noise, and the beam with the largest
/// summed power wins.
fn planted_detect_wideband<R: Rng + ?Sized>(
    candidates: &[usize],
    reps: &[u32],
    truth: usize,
    rho: f64,
    subcarriers: u32,
    rng: &mut R,
) -> usize {
    let mut power = vec![0.0; candidates.len()];
    for _ in 0..subcarriers {
        let alpha = Complex64::from_polar(rho.sqrt(), rng.random::<f64>() * TAU);
        for (i, (&c, &r)) in candidates.iter().zip(reps).enumerate() {
            let signal = if c == truth { alpha.conj() } else { Complex64::new(0.0, 0.0) };
            power[i] += (signal + averaged_noise(1.0, r, rng)).norm_sqr();
        }
    }
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (&c, &p) in candidates.iter().zip(&power) {
        if p > best.1 || (p == best.1 && c < best.0) {
            best = (c, p);
        }
    }
    best.0
}

/// Runs a scenario sweep.
pub fn run_sweep(config: &ScenarioConfig) -> Result<SweepResult> {
    Simulator::new(config.clone())?.run_sweep()
}

/// Aggregated metrics of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: String,
    pub snr_db: f64,
    pub budget: u32,
    pub trials: u64,
    pub misaligned: u64,
    pub p_miss: f64,
    pub p_miss_sigma: f64,
    pub mean_gain: f64,
    /// Standard error of `mean_gain`.
    pub gain_sigma: f64,
    pub mean_s: f64,
    pub mean_spent: f64,
    /// Units trimmed by budget repair after compression, summed over trials.
    pub compression_trimmed: u64,
    /// Budget left unspent after compression, summed over trials.
    pub compression_unspent: u64,
}

impl SweepRow {
    fn aggregate(strategy: String, snr_db: f64, budget: u32, outcomes: &[TrialResult]) -> Self {
        let n = outcomes.len() as f64;
        let misaligned = outcomes.iter().filter(|o| o.misaligned).count() as u64;
        let p = misaligned as f64 / n;
        let mean_gain = outcomes.iter().map(|o| o.normalized_gain).sum::<f64>() / n;
        let var = if outcomes.len() > 1 {
            outcomes.iter().map(|o| (o.normalized_gain - mean_gain).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        SweepRow {
            strategy,
            snr_db,
            budget,
            trials: outcomes.len() as u64,
            misaligned,
            p_miss: p,
            p_miss_sigma: (p * (1.0 - p) / n).sqrt(),
            mean_gain,
            gain_sigma: (var / n).sqrt(),
            mean_s: outcomes.iter().map(|o| o.set_size as f64).sum::<f64>() / n,
            mean_spent: outcomes.iter().map(|o| o.spent as f64).sum::<f64>() / n,
            compression_trimmed: outcomes.iter().map(|o| o.adjustment.trimmed as u64).sum(),
            compression_unspent: outcomes.iter().map(|o| o.adjustment.unspent as u64).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<SweepRow>,
}

pub const CSV_HEADER: &str = "strategy,snr_db,budget,p_miss,p_miss_sigma,mean_gain,gain_sigma,mean_S,mean_spent";

impl SweepResult {
    /// Rounded table preceded by a `# seed=... config_hash=...` comment line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# seed={} config_hash={}\n{CSV_HEADER}\n", self.seed, self.config_hash);
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.3},{:.5},{:.3},{:.5},{:.3},{:.2}\n",
                r.strategy, r.snr_db, r.budget, r.p_miss, r.p_miss_sigma, r.mean_gain, r.gain_sigma, r.mean_s, r.mean_spent
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn row(&self, strategy: &str, snr_db: f64, budget: u32) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.snr_db == snr_db && r.budget == budget)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ArrayGeometry;

    fn scenario(strategies: Vec<StrategySpec>, snrs: Vec<f64>, trials: u64) -> ScenarioConfig {
        ScenarioConfig {
            geometry: ArrayGeometry::ula(16).unwrap(),
            snr_db_list: snrs,
            budget: Budgets::One(32),
            trials,
            prior_source: PriorSource::Table,
            locations: vec![
                LocationSpec { id: 1, weight: None, x: 0.0, y: 0.0, prior: Some(vec![0.7, 0.1, 0.1, 0.1]) },
                LocationSpec { id: 2, weight: None, x: 1.0, y: 0.0, prior: Some(vec![0.4, 0.3, 0.2, 0.1]) },
            ],
            gps_sigma_m: 0.0,
            channel_mode: ChannelMode::Planted,
            strategies,
            seed: 11,
            wideband_k: None,
            compression: false,
        }
    }

    #[test]
    fn baseline_plans() {
        let p = strategy_exhaustive(256, 256).unwrap();
        assert!(p.repetitions.iter().all(|&r| r == 1));
        let p = strategy_exhaustive(64, 256).unwrap();
        assert!(p.repetitions.iter().all(|&r| r == 4));
        assert!(strategy_exhaustive(256, 255).is_err());

        let prior = PriorVector::padded(&[0.7, 0.1, 0.1, 0.1], 8).unwrap();
        assert_eq!(strategy_topk(&prior, 2, 256).unwrap().repetitions, vec![128, 128]);
        let one = strategy_topk(&prior, 1, 256).unwrap();
        assert_eq!((one.candidates.clone(), one.repetitions.clone()), (vec![0], vec![256]));
        let four = strategy_topk(&prior, 4, 10).unwrap();
        assert_eq!(four.repetitions, vec![2, 2, 2, 2]);
        assert_eq!(four.spent(), 8);
        assert!(strategy_topk(&prior, 5, 4).is_err());
    }

    #[test]
    fn noiseless_limit_always_aligns() {
        let sim = Simulator::new(scenario(
            vec![StrategySpec::TopK { k: 4 }, StrategySpec::Exhaustive],
            vec![200.0],
            2000,
        ))
        .unwrap();
        let res = sim.run_sweep().unwrap();
        for r in &res.rows {
            assert_eq!(r.misaligned, 0, "{}", r.strategy);
            assert_eq!(r.mean_gain, 1.0);
        }
    }

    #[test]
    fn planted_gain_is_binary() {
        let sim = Simulator::new(scenario(vec![StrategySpec::Proposed], vec![-14.0], 1)).unwrap();
        let mut misses = 0;
        let n = 5000;
        let mut gain = 0.0;
        for t in 0..n {
            let mut rng = trial_rng(3, 0, t);
            let r = sim.run_trial(&StrategySpec::Proposed, -14.0, 32, &mut rng).unwrap();
            assert!(r.normalized_gain == 0.0 || r.normalized_gain == 1.0);
            assert_eq!(r.misaligned, r.normalized_gain == 0.0);
            misses += r.misaligned as u32;
            gain += r.normalized_gain;
        }
        assert!((misses as f64 / n as f64 - (1.0 - gain / n as f64)).abs() < 1e-12);
    }

    #[test]
    fn cached_and_fresh_plans_agree() {
        let sim = Simulator::new(scenario(vec![StrategySpec::Proposed], vec![-10.0], 1)).unwrap();
        let rho = db_to_linear(-10.0);
        let cached = sim.static_plans(&StrategySpec::Proposed, rho, 32).unwrap().unwrap();
        for t in 0..200 {
            let a = sim.trial(&StrategySpec::Proposed, -10.0, 32, Some(&cached), &mut trial_rng(1, 0, t)).unwrap();
            let b = sim.run_trial(&StrategySpec::Proposed, -10.0, 32, &mut trial_rng(1, 0, t)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn sweep_is_reproducible_across_thread_counts() {
        let cfg = scenario(
            vec![StrategySpec::Proposed, StrategySpec::TopK { k: 2 }],
            vec![-16.0, -8.0],
            3000,
        );
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_sweep(&cfg).unwrap().to_csv())
        };
        let a = run(1);
        assert_eq!(a, run(3));
        assert!(a.starts_with("# seed=11 config_hash="));
        assert_eq!(a.lines().nth(1).unwrap(), CSV_HEADER);
        assert_eq!(a.lines().count(), 2 + 4);
    }

    #[test]
    fn compression_reports_adjustments() {
        let mut cfg = scenario(vec![StrategySpec::FixedS { s: 3 }], vec![-10.0], 500);
        cfg.compression = true;
        let res = run_sweep(&cfg).unwrap();
        let row = &res.rows[0];
        assert!(row.mean_spent <= 32.0);
        assert_eq!(row.mean_s, 3.0);
    }

    #[test]
    fn wideband_with_one_subcarrier_matches_narrowband_rates() {
        let mut cfg = scenario(vec![StrategySpec::TopK { k: 2 }], vec![-12.0], 20_000);
        let narrow = run_sweep(&cfg).unwrap().rows[0].clone();
        cfg.wideband_k = Some(1);
        let wide = run_sweep(&cfg).unwrap().rows[0].clone();
        assert_eq!(narrow.misaligned, wide.misaligned);
        cfg.wideband_k = Some(8);
        let many = run_sweep(&cfg).unwrap().rows[0].clone();
        assert!(many.p_miss < narrow.p_miss);
    }

    #[test]
    fn infeasible_strategy_is_an_error() {
        let cfg = scenario(vec![StrategySpec::Exhaustive], vec![-10.0], 10);
        let mut cfg = cfg;
        cfg.budget = Budgets::One(8);
        assert!(run_sweep(&cfg).is_err());
    }
}
