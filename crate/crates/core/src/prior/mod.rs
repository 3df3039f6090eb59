//! Per-location beam priors: the probability that each codeword is the
//! optimal one at a given user location.
//!
//! Two estimators are provided. [`empirical_prior`] counts optimal-beam
//! frequencies at an exact location key and serves as the reference.
//! [`train_prior_model`] fits a dense classifier mapping a 2-D location to
//! a softmax over codewords, and [`predict_prior`] queries it with output
//! thresholding.

mod mlp;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
pub use mlp::AdamConfig;
use mlp::{Adam, Dense, Mlp};

const SIMPLEX_TOL: f64 = 1e-9;

/// Probability vector over the codebook.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PriorVector(Vec<f64>);

impl<'de> Deserialize<'de> for PriorVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let probs = Vec::<f64>::deserialize(d)?;
        PriorVector::new(probs).map_err(serde::de::Error::custom)
    }
}

impl PriorVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Prior("empty probability vector".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0) {
            return Err(Error::Prior(format!("entry {p} outside [0, 1]")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Prior(format!("entries sum to {total}, not 1")));
        }
        Ok(PriorVector(probs))
    }

    /// Rescales nonnegative weights to sum to one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Prior("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Prior("all weights are zero".into()));
        }
        PriorVector::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn one_hot(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::Prior(format!("index {index} out of range for {n} beams")));
        }
        let mut p = vec![0.0; n];
        p[index] = 1.0;
        PriorVector::new(p)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        PriorVector::new(vec![1.0 / n as f64; n])
    }

    /// `head` followed by zeros up to length `n`.
    pub fn padded(head: &[f64], n: usize) -> Result<Self> {
        if head.len() > n {
            return Err(Error::Dimension {
                expected: n,
                actual: head.len(),
            });
        }
        let mut p = head.to_vec();
        p.resize(n, 0.0);
        PriorVector::new(p)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, c: usize) -> f64 {
        self.0[c]
    }

    pub fn nonzero_count(&self) -> usize {
        self.0.iter().filter(|p| **p > 0.0).count()
    }

    /// Lowest index among the most probable beams.
    pub fn argmax(&self) -> usize {
        crate::channel::argmax_first(self.0.iter().copied())
    }

    /// Beam indices ordered by descending probability, lowest index first on ties.
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.0.len()).collect();
        idx.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]).then(a.cmp(&b)));
        idx
    }

    pub fn total_variation(&self, other: &PriorVector) -> f64 {
        0.5 * self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, p) in self.0.iter().enumerate() {
            if *p > 0.0 {
                acc += p;
                last_positive = i;
                if u < acc {
                    return i;
                }
            }
        }
        last_positive
    }
}

/// Zeroes entries below `threshold` and renormalizes. Falls back to the
/// untruncated vector when every entry would be removed.
pub fn truncate_and_renormalize(probs: &[f64], threshold: f64) -> Result<PriorVector> {
    let kept: Vec<f64> = probs
        .iter()
        .map(|&p| if p < threshold { 0.0 } else { p })
        .collect();
    if kept.iter().all(|p| *p == 0.0) {
        return PriorVector::normalized(probs.to_vec());
    }
    PriorVector::normalized(kept)
}

/// One beam-training record: where the user was and which beam was optimal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub scene_id: u64,
    pub x: f64,
    pub y: f64,
    /// Zero-based optimal codeword.
    pub optimal_index: usize,
}

/// Exact location identity used to group history records (micrometre grid).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocationKey(i64, i64);

impl LocationKey {
    pub fn of(x: f64, y: f64) -> Self {
        LocationKey((x * 1e6).round() as i64, (y * 1e6).round() as i64)
    }
}

impl std::fmt::Display for LocationKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.0 as f64 * 1e-6, self.1 as f64 * 1e-6)
    }
}

/// Optimal-beam frequencies among the history samples recorded at `key`.
pub fn empirical_prior(
    history: &[TrainingSample],
    key: LocationKey,
    n_beams: usize,
) -> Result<PriorVector> {
    let mut counts = vec![0u64; n_beams];
    let mut total = 0u64;
    for s in history.iter().filter(|s| LocationKey::of(s.x, s.y) == key) {
        if s.optimal_index >= n_beams {
            return Err(Error::Prior(format!(
                "optimal index {} out of range for {n_beams} beams",
                s.optimal_index
            )));
        }
        counts[s.optimal_index] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::EmptyHistory(key.to_string()));
    }
    PriorVector::normalized(counts.into_iter().map(|c| c as f64 / total as f64).collect())
}

/// Reads `scene_id,x,y,optimal_index` (one-based index) records.
pub fn read_training_csv(path: &Path) -> Result<Vec<TrainingSample>> {
    #[derive(Deserialize)]
    struct Row {
        scene_id: u64,
        x: f64,
        y: f64,
        optimal_index: usize,
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row = row?;
        if row.optimal_index == 0 {
            return Err(Error::Record {
                path: path.to_path_buf(),
                line: i + 2,
                reason: "optimal_index is one-based".into(),
            });
        }
        out.push(TrainingSample {
            scene_id: row.scene_id,
            x: row.x,
            y: row.y,
            optimal_index: row.optimal_index - 1,
        });
    }
    Ok(out)
}

pub fn write_training_csv(path: &Path, samples: &[TrainingSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scene_id", "x", "y", "optimal_index"])?;
    for s in samples {
        w.write_record(&[
            s.scene_id.to_string(),
            s.x.to_string(),
            s.y.to_string(),
            (s.optimal_index + 1).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Min-max scaling of raw coordinates to the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationNormalizer {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl LocationNormalizer {
    pub fn fit(samples: &[TrainingSample]) -> Self {
        let mut n = LocationNormalizer {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for s in samples {
            n.x_min = n.x_min.min(s.x);
            n.x_max = n.x_max.max(s.x);
            n.y_min = n.y_min.min(s.y);
            n.y_max = n.y_max.max(s.y);
        }
        n
    }

    pub fn apply(&self, x: f64, y: f64) -> [f64; 2] {
        fn scale(v: f64, lo: f64, hi: f64) -> f64 {
            // a degenerate axis maps to the centre
            if hi > lo {
                (v - lo) / (hi - lo)
            } else {
                0.5
            }
        }
        [scale(x, self.x_min, self.x_max), scale(y, self.y_min, self.y_max)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// One over the number of distinct training scenes.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_beams: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub threshold: Threshold,
}

impl TrainConfig {
    pub fn new(n_beams: usize) -> Self {
        TrainConfig {
            n_beams,
            hidden: vec![256, 256, 256],
            learning_rate: 0.01,
            epochs: 100,
            seed: 0,
            batch_size: None,
            threshold: Threshold::Auto,
        }
    }
}

/// Trained location-to-prior classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorModel {
    net: Mlp,
    pub normalizer: LocationNormalizer,
    pub threshold: f64,
    pub config: TrainConfig,
    /// Mean training loss of each epoch, in order.
    pub loss_history: Vec<f64>,
    /// Full-dataset loss after the last update.
    pub final_loss: f64,
}

impl PriorModel {
    pub fn n_beams(&self) -> usize {
        self.net.output_dim()
    }

    /// Raw softmax output at a raw (un-normalized) location.
    pub fn softmax(&self, x: f64, y: f64) -> Vec<f64> {
        let input = Array2::from_shape_vec((1, 2), self.normalizer.apply(x, y).to_vec())
            .expect("shape 1x2");
        let logits = self.net.logits(&input);
        mlp::softmax(logits.as_slice().expect("standard layout"))
    }
}

/// Training batch: distinct rows plus per-class target weights summing to one.
struct Batch {
    x: Array2<f64>,
    targets: Array2<f64>,
}

impl Batch {
    /// Aggregates duplicate inputs into label histograms. The loss and its
    /// gradient are identical to the per-sample mean cross-entropy.
    fn grouped(inputs: &[[f64; 2]], labels: &[usize], n_beams: usize) -> Batch {
        let mut rows: BTreeMap<(u64, u64), Vec<f64>> = BTreeMap::new();
        let w = 1.0 / inputs.len() as f64;
        for (inp, &label) in inputs.iter().zip(labels) {
            let key = (inp[0].to_bits(), inp[1].to_bits());
            rows.entry(key).or_insert_with(|| vec![0.0; n_beams])[label] += w;
        }
        let mut x = Array2::zeros((rows.len(), 2));
        let mut targets = Array2::zeros((rows.len(), n_beams));
        for (r, ((bx, by), t)) in rows.into_iter().enumerate() {
            x[[r, 0]] = f64::from_bits(bx);
            x[[r, 1]] = f64::from_bits(by);
            for (c, v) in t.into_iter().enumerate() {
                targets[[r, c]] = v;
            }
        }
        Batch { x, targets }
    }
}

/// Trains the classifier on `dataset` with Adam and cross-entropy loss.
/// Deterministic for a fixed `config.seed`.
pub fn train_prior_model(dataset: &[TrainingSample], config: &TrainConfig) -> Result<PriorModel> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if config.n_beams < 2 {
        return Err(Error::InvalidArgument("need at least 2 output beams".into()));
    }
    if let Some(bad) = dataset.iter().find(|s| s.optimal_index >= config.n_beams) {
        return Err(Error::Prior(format!(
            "optimal index {} out of range for {} beams",
            bad.optimal_index, config.n_beams
        )));
    }
    if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    if config.batch_size == Some(0) {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }

    let normalizer = LocationNormalizer::fit(dataset);
    let inputs: Vec<[f64; 2]> = dataset.iter().map(|s| normalizer.apply(s.x, s.y)).collect();
    let labels: Vec<usize> = dataset.iter().map(|s| s.optimal_index).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sizes = vec![2];
    sizes.extend(&config.hidden);
    sizes.push(config.n_beams);
    let mut net = Mlp::new(&sizes, &mut rng);
    let mut opt = Adam::new(AdamConfig::with_learning_rate(config.learning_rate), &net);

    let full = Batch::grouped(&inputs, &labels, config.n_beams);
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for _ in 0..config.epochs {
        let epoch_loss = match config.batch_size {
            None => net.train_step(&full.x, &full.targets, &mut opt),
            Some(bs) => {
                order.shuffle(&mut rng);
                let mut weighted = 0.0;
                for chunk in order.chunks(bs) {
                    let ci: Vec<[f64; 2]> = chunk.iter().map(|&i| inputs[i]).collect();
                    let cl: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                    let b = Batch::grouped(&ci, &cl, config.n_beams);
                    weighted += net.train_step(&b.x, &b.targets, &mut opt) * chunk.len() as f64;
                }
                weighted / dataset.len() as f64
            }
        };
        loss_history.push(epoch_loss);
    }
    let final_loss = -(&full.targets * &mlp::log_softmax_rows(&net.logits(&full.x))).sum();

    let threshold = match config.threshold {
        Threshold::Fixed(t) => t,
        Threshold::Auto => {
            let scenes: BTreeSet<u64> = dataset.iter().map(|s| s.scene_id).collect();
            1.0 / scenes.len() as f64
        }
    };
    Ok(PriorModel {
        net,
        normalizer,
        threshold,
        config: config.clone(),
        loss_history,
        final_loss,
    })
}

/// Softmax prior at a raw location, with entries under the model threshold
/// zeroed and the rest renormalized.
pub fn predict_prior(model: &PriorModel, x: f64, y: f64) -> Result<PriorVector> {
    truncate_and_renormalize(&model.softmax(x, y), model.threshold)
}

/// Adds independent zero-mean Gaussian errors (metres) to both coordinates.
pub fn gps_perturb<R: Rng + ?Sized>(x: f64, y: f64, sigma_m: f64, rng: &mut R) -> Result<(f64, f64)> {
    if !(sigma_m.is_finite() && sigma_m >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "GPS error deviation must be nonnegative, got {sigma_m}"
        )));
    }
    if sigma_m == 0.0 {
        return Ok((x, y));
    }
    let n = Normal::new(0.0, sigma_m).expect("validated sigma");
    Ok((x + n.sample(rng), y + n.sample(rng)))
}

// Model file layout (JSON):
// { "format": "beamrep-prior-mlp", "version": 1,
//   "layers": [{ "inputs": I, "outputs": O, "weights": [I*O row-major], "bias": [O] }, ...],
//   "normalizer": {...}, "threshold": t, "config": {...}, "config_hash": "<sha256 hex>",
//   "loss_history": [...], "final_loss": l }
const MODEL_FORMAT: &str = "beamrep-prior-mlp";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerFile {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    layers: Vec<LayerFile>,
    normalizer: LocationNormalizer,
    threshold: f64,
    config: TrainConfig,
    /// Written for provenance, ignored when loading.
    #[serde(default)]
    config_hash: String,
    loss_history: Vec<f64>,
    final_loss: f64,
}

impl TrainConfig {
    /// SHA-256 of the JSON encoding, as lowercase hex.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl PriorModel {
    pub fn to_json(&self) -> Result<String> {
        let layers = self
            .net
            .layers
            .iter()
            .map(|l| LayerFile {
                inputs: l.weights.nrows(),
                outputs: l.weights.ncols(),
                weights: l.weights.iter().copied().collect(),
                bias: l.bias.to_vec(),
            })
            .collect();
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            layers,
            normalizer: self.normalizer,
            threshold: self.threshold,
            config: self.config.clone(),
            config_hash: self.config.config_hash(),
            loss_history: self.loss_history.clone(),
            final_loss: self.final_loss,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Prior(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        let mut layers = Vec::with_capacity(file.layers.len());
        let mut prev = 2;
        for l in file.layers {
            if l.inputs != prev || l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Prior("inconsistent layer shapes in model file".into()));
            }
            prev = l.outputs;
            layers.push(Dense {
                weights: Array2::from_shape_vec((l.inputs, l.outputs), l.weights)
                    .map_err(|e| Error::Prior(e.to_string()))?,
                bias: l.bias.into(),
            });
        }
        if layers.is_empty() {
            return Err(Error::Prior("model has no layers".into()));
        }
        Ok(PriorModel {
            net: Mlp { layers },
            normalizer: file.normalizer,
            threshold: file.threshold,
            config: file.config,
            loss_history: file.loss_history,
            final_loss: file.final_loss,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PriorModel::from_json(&text)
    }
}
