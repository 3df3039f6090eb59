//! Published reference values for the four-location toy scenario.
//!
//! Four locations share a 256-beam codebook; only the first four codewords
//! carry prior mass. The misalignment tables below are for location 1 with a
//! budget of 256 probes. [`verify_table2`] recomputes every cell.

use serde::{Deserialize, Serialize};

use crate::channel::ArrayGeometry;
use crate::error::Result;
use crate::misalign::misalignment_bound;
use crate::prior::PriorVector;
use crate::sim::{run_sweep, strategy_fixed_size, Budgets, ChannelMode, LocationSpec, PriorSource, ScenarioConfig, StrategySpec};

/// Beam priors of locations 1 to 4 over codewords 1 to 4.
pub const TABLE1_PRIORS: [[f64; 4]; 4] = [
    [0.7, 0.1, 0.1, 0.1],
    [0.6, 0.2, 0.1, 0.1],
    [0.5, 0.2, 0.2, 0.1],
    [0.4, 0.3, 0.2, 0.1],
];

pub const TABLE1_CODEBOOK_SIZE: usize = 256;
pub const TABLE2_BUDGET: u32 = 256;

/// SNR columns of the misalignment tables, in dB.
pub const TABLE2_SNR_DB: [f64; 6] = [-18.0, -16.0, -14.0, -12.0, -10.0, -8.0];

/// Misalignment bound at location 1; row `s - 1` is candidate-set size `s`.
pub const TABLE2_ESTIMATED: [[f64; 6]; 4] = [
    [0.300, 0.300, 0.300, 0.300, 0.300, 0.300],
    [0.317, 0.272, 0.229, 0.207, 0.201, 0.200],
    [0.444, 0.381, 0.263, 0.163, 0.113, 0.101],
    [0.608, 0.593, 0.410, 0.204, 0.064, 0.010],
];

/// Simulated misalignment probability at location 1 (100 000 trials).
pub const TABLE2_SIMULATED: [[f64; 6]; 4] = [
    [0.300, 0.300, 0.300, 0.300, 0.300, 0.300],
    [0.317, 0.272, 0.229, 0.205, 0.199, 0.198],
    [0.364, 0.317, 0.230, 0.153, 0.112, 0.101],
    [0.370, 0.360, 0.261, 0.145, 0.051, 0.008],
];

pub const TABLE2_ESTIMATED_TOL: f64 = 0.003;
pub const TABLE2_SIMULATED_TOL: f64 = 0.01;
pub const TABLE2_TRIALS: u64 = 100_000;

/// Seed used when a caller does not pick one.
pub const TABLE2_DEFAULT_SEED: u64 = 2024;

fn location1() -> Result<PriorVector> {
    PriorVector::padded(&TABLE1_PRIORS[0], TABLE1_CODEBOOK_SIZE)
}

/// Bound of the water-filled plan over the `s` most probable beams of
/// location 1.
pub fn table2_estimated_cell(s: usize, snr_db: f64) -> Result<f64> {
    let prior = location1()?;
    let rho = 10f64.powf(snr_db / 10.0);
    let plan = strategy_fixed_size(&prior, s, rho, TABLE2_BUDGET)?;
    Ok(misalignment_bound(&plan, &prior, rho)?.p_miss_bound)
}

/// Location 1 alone under planted channels, one fixed-size strategy per row.
pub fn table2_scenario(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        geometry: ArrayGeometry::ula(TABLE1_CODEBOOK_SIZE).expect("valid array"),
        snr_db_list: TABLE2_SNR_DB.to_vec(),
        budget: Budgets::One(TABLE2_BUDGET),
        trials: TABLE2_TRIALS,
        prior_source: PriorSource::Table,
        locations: vec![LocationSpec {
            id: 1,
            weight: Some(1.0),
            x: 0.0,
            y: 0.0,
            prior: Some(TABLE1_PRIORS[0].to_vec()),
        }],
        gps_sigma_m: 0.0,
        channel_mode: ChannelMode::Planted,
        strategies: (1..=4).map(|s| StrategySpec::FixedS { s }).collect(),
        seed,
        wideband_k: None,
        compression: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table2Block {
    Estimated,
    Simulated,
}

/// One recomputed table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Cell {
    pub block: Table2Block,
    pub s: usize,
    pub snr_db: f64,
    pub expected: f64,
    pub got: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Recomputes the 24 bound cells analytically and the 24 simulated cells by
/// Monte Carlo with `seed`.
pub fn verify_table2(seed: u64) -> Result<Vec<Table2Cell>> {
    let mut cells = Vec::with_capacity(48);
    let cell = |block, s, snr_db, expected: f64, got: f64, tolerance: f64| Table2Cell {
        block,
        s,
        snr_db,
        expected,
        got,
        tolerance,
        passed: (got - expected).abs() <= tolerance,
    };
    for (i, row) in TABLE2_ESTIMATED.iter().enumerate() {
        for (&snr, &expected) in TABLE2_SNR_DB.iter().zip(row) {
            let got = table2_estimated_cell(i + 1, snr)?;
            cells.push(cell(Table2Block::Estimated, i + 1, snr, expected, got, TABLE2_ESTIMATED_TOL));
        }
    }
    let sweep = run_sweep(&table2_scenario(seed))?;
    for (i, row) in TABLE2_SIMULATED.iter().enumerate() {
        let label = StrategySpec::FixedS { s: i + 1 }.label();
        for (&snr, &expected) in TABLE2_SNR_DB.iter().zip(row) {
            let got = sweep.row(&label, snr, TABLE2_BUDGET).expect("swept cell").p_miss;
            cells.push(cell(Table2Block::Simulated, i + 1, snr, expected, got, TABLE2_SIMULATED_TOL));
        }
    }
    Ok(cells)
}
