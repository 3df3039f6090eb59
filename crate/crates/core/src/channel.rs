//! Array geometry, DFT codebooks, geometric channels and beam measurement.
//!
//! Codeword and beam indices are zero-based throughout the library. The
//! command-line front end and the JSON outputs convert to the one-based
//! numbering used in reports.
//!
//! Angles are given in degrees; broadside is 0°.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::PriorVector;

/// Element layout of the base-station array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Ula,
    /// Planar array with `nx` horizontal and `ny` vertical elements.
    Upa { nx: usize, ny: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_elements: usize,
    #[serde(default = "default_spacing")]
    pub spacing_over_wavelength: f64,
    #[serde(default = "default_layout")]
    pub layout: Layout,
}

fn default_spacing() -> f64 {
    0.5
}

fn default_layout() -> Layout {
    Layout::Ula
}

impl ArrayGeometry {
    /// Half-wavelength uniform linear array.
    pub fn ula(n_elements: usize) -> Result<Self> {
        let g = ArrayGeometry {
            n_elements,
            spacing_over_wavelength: 0.5,
            layout: Layout::Ula,
        };
        g.validate()?;
        Ok(g)
    }

    /// Half-wavelength uniform planar array with `nx * ny` elements.
    pub fn upa(nx: usize, ny: usize) -> Result<Self> {
        let g = ArrayGeometry {
            n_elements: nx * ny,
            spacing_over_wavelength: 0.5,
            layout: Layout::Upa { nx, ny },
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_spacing(mut self, spacing_over_wavelength: f64) -> Result<Self> {
        self.spacing_over_wavelength = spacing_over_wavelength;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_elements < 2 {
            return Err(Error::Geometry(format!(
                "need at least 2 elements, got {}",
                self.n_elements
            )));
        }
        if !(self.spacing_over_wavelength.is_finite() && self.spacing_over_wavelength > 0.0) {
            return Err(Error::Geometry(format!(
                "element spacing must be positive, got {}",
                self.spacing_over_wavelength
            )));
        }
        if let Layout::Upa { nx, ny } = self.layout {
            if nx == 0 || ny == 0 || nx * ny != self.n_elements {
                return Err(Error::Geometry(format!(
                    "planar dims {nx}x{ny} do not multiply to {}",
                    self.n_elements
                )));
            }
        }
        Ok(())
    }
}

/// One propagation path of a geometric channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub gain: Complex64,
    pub azimuth_deg: f64,
    #[serde(default)]
    pub elevation_deg: Option<f64>,
}

/// Channel between the base-station array and a single-antenna user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelVector(Vec<Complex64>);

impl ChannelVector {
    pub fn new(coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidArgument(
                "channel coefficients must be finite".into(),
            ));
        }
        Ok(ChannelVector(coefficients))
    }

    pub fn zeros(n: usize) -> Self {
        ChannelVector(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    /// `h^H f`.
    pub fn correlate(&self, f: &[Complex64]) -> Complex64 {
        self.0.iter().zip(f).map(|(h, f)| h.conj() * f).sum()
    }

    /// `h^H h`.
    pub fn energy(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }
}

/// A set of unit-norm beamforming vectors, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    n: usize,
    data: Vec<Complex64>,
}

impl Codebook {
    /// Number of codewords.
    pub fn len(&self) -> usize {
        self.data.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Length of each codeword (number of antenna elements).
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn codeword(&self, c: usize) -> &[Complex64] {
        &self.data[c * self.n..(c + 1) * self.n]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks_exact(self.n)
    }

    /// `F^H F`, row-major.
    pub fn gram(&self) -> Vec<Complex64> {
        let m = self.len();
        let mut out = vec![Complex64::new(0.0, 0.0); m * m];
        for a in 0..m {
            let fa = self.codeword(a);
            for b in 0..m {
                let fb = self.codeword(b);
                out[a * m + b] = fa.iter().zip(fb).map(|(x, y)| x.conj() * y).sum();
            }
        }
        out
    }

    /// `h^H f_c` for every codeword.
    pub fn correlations(&self, h: &ChannelVector) -> Vec<Complex64> {
        self.iter().map(|f| h.correlate(f)).collect()
    }
}

/// Averaged received signal for one probed beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedMeasurement {
    pub beam_index: usize,
    pub mean_signal: Complex64,
    pub repetitions: u32,
}

impl AveragedMeasurement {
    pub fn power(&self) -> f64 {
        self.mean_signal.norm_sqr()
    }
}

fn steering(n: usize, phase_step: f64) -> impl Iterator<Item = Complex64> {
    (0..n).map(move |m| Complex64::from_polar(1.0, phase_step * m as f64))
}

/// Unit-norm array response toward the given direction.
///
/// For a planar array the element index is `iy * nx + ix`, i.e. the vertical
/// steering vector Kronecker the horizontal one.
pub fn array_response(
    geometry: &ArrayGeometry,
    azimuth_deg: f64,
    elevation_deg: Option<f64>,
) -> Result<Vec<Complex64>> {
    geometry.validate()?;
    if !azimuth_deg.is_finite() {
        return Err(Error::Angle(format!("azimuth {azimuth_deg} is not finite")));
    }
    let d = geometry.spacing_over_wavelength;
    let n = geometry.n_elements;
    let scale = 1.0 / (n as f64).sqrt();
    match geometry.layout {
        Layout::Ula => {
            if elevation_deg.is_some() {
                return Err(Error::Angle(
                    "elevation is only meaningful for planar arrays".into(),
                ));
            }
            if !(-90.0..=90.0).contains(&azimuth_deg) {
                return Err(Error::Angle(format!(
                    "azimuth {azimuth_deg} outside [-90, 90]"
                )));
            }
            let step = 2.0 * PI * d * azimuth_deg.to_radians().sin();
            Ok(steering(n, step).map(|v| v * scale).collect())
        }
        Layout::Upa { nx, ny } => {
            let elevation = elevation_deg
                .ok_or_else(|| Error::Angle("planar array needs an elevation angle".into()))?;
            if !elevation.is_finite() || !(-180.0..=180.0).contains(&elevation) {
                return Err(Error::Angle(format!("elevation {elevation} out of range")));
            }
            if !(-180.0..=180.0).contains(&azimuth_deg) {
                return Err(Error::Angle(format!(
                    "azimuth {azimuth_deg} outside [-180, 180]"
                )));
            }
            let (theta, phi) = (elevation.to_radians(), azimuth_deg.to_radians());
            let omega_y = 2.0 * PI * d * theta.sin() * phi.sin();
            let omega_x = 2.0 * PI * d * theta.sin() * phi.cos();
            let ay: Vec<_> = steering(ny, omega_y).collect();
            let ax: Vec<_> = steering(nx, omega_x).collect();
            Ok(kron(&ay, &ax).into_iter().map(|v| v * scale).collect())
        }
    }
}

fn kron(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

/// Per-axis DFT codeword `c` (zero-based) of length `n`. Codeword `c` is the
/// one-based column `c + 1` of the DFT matrix; the last column is broadside.
fn dft_column(n: usize, c: usize) -> Vec<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    let k = (c + 1) as f64;
    (0..n)
        .map(|m| Complex64::from_polar(scale, -2.0 * PI * (m as f64) * k / n as f64))
        .collect()
}

/// DFT codebook for the geometry.
///
/// Planar codebooks enumerate columns as `cx * ny + cy` and lay each codeword
/// out in the same element order as [`array_response`].
pub fn dft_codebook(geometry: &ArrayGeometry) -> Result<Codebook> {
    geometry.validate()?;
    let n = geometry.n_elements;
    let mut data = Vec::with_capacity(n * n);
    match geometry.layout {
        Layout::Ula => {
            for c in 0..n {
                data.extend(dft_column(n, c));
            }
        }
        Layout::Upa { nx, ny } => {
            let fx: Vec<_> = (0..nx).map(|c| dft_column(nx, c)).collect();
            let fy: Vec<_> = (0..ny).map(|c| dft_column(ny, c)).collect();
            for cx in &fx {
                for cy in &fy {
                    data.extend(kron(cy, cx));
                }
            }
        }
    }
    Ok(Codebook { n, data })
}

/// Sum of path gains times their array responses.
pub fn sv_channel(geometry: &ArrayGeometry, paths: &[PathSpec]) -> Result<ChannelVector> {
    if paths.is_empty() {
        return Err(Error::NoPaths);
    }
    let mut h = vec![Complex64::new(0.0, 0.0); geometry.n_elements];
    for p in paths {
        let a = array_response(geometry, p.azimuth_deg, p.elevation_deg)?;
        for (acc, v) in h.iter_mut().zip(a) {
            *acc += p.gain * v;
        }
    }
    ChannelVector::new(h)
}

/// Draws a beam index from `prior` and returns `alpha * f_c` together with it.
pub fn synth_channel<R: Rng + ?Sized>(
    prior: &PriorVector,
    alpha: Complex64,
    codebook: &Codebook,
    rng: &mut R,
) -> Result<(ChannelVector, usize)> {
    if prior.len() != codebook.len() {
        return Err(Error::Dimension {
            expected: codebook.len(),
            actual: prior.len(),
        });
    }
    let c = prior.sample(rng);
    let h = codebook.codeword(c).iter().map(|v| alpha * v).collect();
    Ok((ChannelVector::new(h)?, c))
}

/// Averaged noise of `repetitions` i.i.d. `CN(0, noise_var)` samples, drawn
/// directly as a single `CN(0, noise_var / repetitions)` sample.
pub fn averaged_noise<R: Rng + ?Sized>(noise_var: f64, repetitions: u32, rng: &mut R) -> Complex64 {
    let sd = (noise_var / (2.0 * repetitions as f64)).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * sd, im * sd)
}

/// Probes codeword `f` `repetitions` times and returns the averaged signal.
pub fn measure_beam<R: Rng + ?Sized>(
    h: &ChannelVector,
    beam_index: usize,
    f: &[Complex64],
    repetitions: u32,
    noise_var: f64,
    rng: &mut R,
) -> Result<AveragedMeasurement> {
    if h.len() != f.len() {
        return Err(Error::Dimension {
            expected: h.len(),
            actual: f.len(),
        });
    }
    if repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
    }
    if !(noise_var.is_finite() && noise_var > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    Ok(AveragedMeasurement {
        beam_index,
        mean_signal: h.correlate(f) + averaged_noise(noise_var, repetitions, rng),
        repetitions,
    })
}

/// Index of the strongest codeword; lowest index wins ties.
pub fn optimal_beam(h: &ChannelVector, codebook: &Codebook) -> Result<usize> {
    if h.len() != codebook.dim() {
        return Err(Error::Dimension {
            expected: codebook.dim(),
            actual: h.len(),
        });
    }
    Ok(argmax_first(codebook.iter().map(|f| h.correlate(f).norm_sqr())))
}

pub(crate) fn argmax_first(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

fn check_distinct(measurements: &[AveragedMeasurement]) -> Result<BTreeSet<usize>> {
    let mut seen = BTreeSet::new();
    for m in measurements {
        if !seen.insert(m.beam_index) {
            return Err(Error::Measurement(format!(
                "beam {} measured twice",
                m.beam_index
            )));
        }
    }
    Ok(seen)
}

/// Beam with the largest averaged power; lowest beam index wins ties.
pub fn detect_beam(measurements: &[AveragedMeasurement]) -> Result<usize> {
    if measurements.is_empty() {
        return Err(Error::Measurement("no measurements".into()));
    }
    check_distinct(measurements)?;
    Ok(best_of(
        measurements.iter().map(|m| (m.beam_index, m.power())),
    ))
}

fn best_of(scored: impl Iterator<Item = (usize, f64)>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (beam, p) in scored {
        best = match best {
            Some((b, bp)) if bp > p || (bp == p && b < beam) => Some((b, bp)),
            _ => Some((beam, p)),
        };
    }
    best.map(|(b, _)| b).unwrap_or(0)
}

/// Wideband detection: maximizes the power averaged over subcarriers.
pub fn detect_beam_wideband(per_subcarrier: &[Vec<AveragedMeasurement>]) -> Result<usize> {
    let first = per_subcarrier
        .first()
        .ok_or_else(|| Error::Measurement("no subcarriers".into()))?;
    if first.is_empty() {
        return Err(Error::Measurement("no measurements".into()));
    }
    let beams = check_distinct(first)?;
    for sub in &per_subcarrier[1..] {
        if check_distinct(sub)? != beams {
            return Err(Error::Measurement(
                "subcarriers probe different beam sets".into(),
            ));
        }
    }
    let k = per_subcarrier.len() as f64;
    let mut totals: Vec<(usize, f64)> = beams.iter().map(|&b| (b, 0.0)).collect();
    for sub in per_subcarrier {
        for m in sub {
            let slot = totals
                .binary_search_by_key(&m.beam_index, |(b, _)| *b)
                .expect("beam sets checked above");
            totals[slot].1 += m.power();
        }
    }
    Ok(best_of(totals.into_iter().map(|(b, p)| (b, p / k))))
}
