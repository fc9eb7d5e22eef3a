//! Scenario generation from percentile forecasts.
//!
//! System-level percentile forecasts (99 percentile multipliers per
//! timestep) become discrete PDFs per timestep, the CDF is cut into
//! equal-probability strata, and stratum averages form temporally
//! coupled scenario paths (scenario i takes stratum i at every
//! timestep, so rank is preserved through time). Bus-level scenarios
//! add seeded Gaussian noise per (scenario, timestep, entity); every
//! draw is derived independently from those indices, so parallel
//! evaluation order cannot change results.

use crate::grid::GridCase;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const N_PERCENTILES: usize = 99;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read forecast {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse forecast: {0}")]
    Parse(String),
    #[error("percentiles are not nondecreasing at timestep {0}")]
    NonMonotonePercentiles(f64),
    #[error("forecast horizons differ: load has {0} steps, wind has {1}")]
    HorizonMismatch(usize, usize),
    #[error("invalid discrete pdf: {0}")]
    InvalidPdf(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Load,
    Wind,
}

/// Wind-load cross-series coupling for scenario construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum Coupling {
    /// Load stratum i pairs with wind stratum i (comonotone).
    Rank,
    /// Load stratum i pairs with wind stratum σ(i) for a seeded
    /// permutation σ.
    IndependentPair { seed: u64 },
}

/// Normalized percentile forecast: per timestep, 99 nondecreasing
/// dimensionless multipliers; the p50 path has mean 1.0 over the
/// horizon.
#[derive(Debug, Clone)]
pub struct PercentileForecast {
    pub kind: SeriesKind,
    pub timesteps: Vec<f64>,
    /// rows[t][i] is percentile p(i+1) at timestep t.
    pub rows: Vec<Vec<f64>>,
}

impl PercentileForecast {
    pub fn horizon(&self) -> usize {
        self.timesteps.len()
    }

    pub fn p50_path(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[49]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct DiscretePdf {
    /// Strictly increasing support values.
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
}

impl DiscretePdf {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self, ScenarioError> {
        if support.len() != probs.len() || support.is_empty() {
            return Err(ScenarioError::InvalidPdf(
                "support/probability lengths differ or are empty".into(),
            ));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ScenarioError::InvalidPdf(
                "support must be strictly increasing".into(),
            ));
        }
        if probs.iter().any(|&p| p < 0.0) {
            return Err(ScenarioError::InvalidPdf("negative probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(ScenarioError::InvalidPdf(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { support, probs })
    }

    pub fn mean(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(v, p)| v * p)
            .sum()
    }
}

/// System-level scenario paths before spatial disaggregation.
#[derive(Debug, Clone)]
pub struct SystemScenarioSet {
    pub probs: Vec<f64>,
    /// load_path[s][t], dimensionless multipliers.
    pub load_path: Vec<Vec<f64>>,
    pub wind_path: Vec<Vec<f64>>,
    /// p50 (median) multiplier paths carried along for the forecast
    /// fields of the bus-level set.
    pub load_p50: Vec<f64>,
    pub wind_p50: Vec<f64>,
}

impl SystemScenarioSet {
    pub fn n_scenarios(&self) -> usize {
        self.probs.len()
    }

    pub fn horizon(&self) -> usize {
        self.load_p50.len()
    }
}

/// Bus-level scenario set in MW, aligned with a [`GridCase`]'s bus and
/// wind-plant ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub probs: Vec<f64>,
    /// load[s][t][bus position] MW
    pub load: Vec<Vec<Vec<f64>>>,
    /// wind[s][t][plant position] MW
    pub wind: Vec<Vec<Vec<f64>>>,
    /// forecast_load[t][bus position] MW (no noise, p50 path)
    pub forecast_load: Vec<Vec<f64>>,
    pub forecast_wind: Vec<Vec<f64>>,
    pub seed: u64,
}

impl ScenarioSet {
    pub fn n_scenarios(&self) -> usize {
        self.probs.len()
    }

    pub fn horizon(&self) -> usize {
        self.forecast_load.len()
    }
}

/// Read a percentile forecast CSV (`timestamp,p1,...,p99`) and
/// normalize it so the p50 path has mean 1.0 over the horizon.
pub fn load_percentile_forecasts(
    path: impl AsRef<Path>,
    kind: SeriesKind,
) -> Result<PercentileForecast, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_percentile_csv(&text, kind)
}

pub fn parse_percentile_csv(
    text: &str,
    kind: SeriesKind,
) -> Result<PercentileForecast, ScenarioError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| ScenarioError::Parse("empty forecast file".into()))?;
    let mut expected = String::from("timestamp");
    for i in 1..=N_PERCENTILES {
        expected.push_str(&format!(",p{i}"));
    }
    if header.trim() != expected {
        return Err(ScenarioError::Parse(format!(
            "bad header, expected `timestamp,p1,...,p{N_PERCENTILES}`, got `{}`",
            header.trim()
        )));
    }

    let mut timesteps = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != N_PERCENTILES + 1 {
            return Err(ScenarioError::Parse(format!(
                "row {} has {} fields, expected {}",
                lineno + 2,
                fields.len(),
                N_PERCENTILES + 1
            )));
        }
        let ts: f64 = fields[0].trim().parse().map_err(|_| {
            ScenarioError::Parse(format!("row {}: bad timestamp {}", lineno + 2, fields[0]))
        })?;
        if let Some(&prev) = timesteps.last() {
            if ts <= prev {
                return Err(ScenarioError::Parse(format!(
                    "timesteps not strictly increasing at {ts}"
                )));
            }
        }
        let mut row = Vec::with_capacity(N_PERCENTILES);
        for f in &fields[1..] {
            let v: f64 = f.trim().parse().map_err(|_| {
                ScenarioError::Parse(format!("row {}: bad value {}", lineno + 2, f))
            })?;
            if v < 0.0 {
                return Err(ScenarioError::Parse(format!(
                    "row {}: negative percentile value {v}",
                    lineno + 2
                )));
            }
            row.push(v);
        }
        if row.windows(2).any(|w| w[0] > w[1]) {
            return Err(ScenarioError::NonMonotonePercentiles(ts));
        }
        timesteps.push(ts);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ScenarioError::Parse("forecast has no data rows".into()));
    }

    let p50_mean: f64 = rows.iter().map(|r| r[49]).sum::<f64>() / rows.len() as f64;
    if p50_mean <= 0.0 {
        return Err(ScenarioError::Parse(format!(
            "p50 path mean {p50_mean} is not positive; cannot normalize"
        )));
    }
    for row in &mut rows {
        for v in row.iter_mut() {
            *v /= p50_mean;
        }
    }

    Ok(PercentileForecast {
        kind,
        timesteps,
        rows,
    })
}

/// Collapse 99 nondecreasing percentile values into a discrete PDF:
/// every percentile point carries mass 1/99 and equal values merge.
pub fn build_discrete_pdf(percentiles: &[f64]) -> Result<DiscretePdf, ScenarioError> {
    if percentiles.len() != N_PERCENTILES {
        return Err(ScenarioError::InvalidPdf(format!(
            "expected {N_PERCENTILES} percentile values, got {}",
            percentiles.len()
        )));
    }
    if percentiles.windows(2).any(|w| w[0] > w[1]) {
        return Err(ScenarioError::InvalidPdf(
            "percentiles must be nondecreasing".into(),
        ));
    }
    let mut support = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for &v in percentiles {
        match support.last() {
            Some(&last) if last == v => *counts.last_mut().unwrap() += 1,
            _ => {
                support.push(v);
                counts.push(1);
            }
        }
    }
    let probs = counts
        .iter()
        .map(|&c| c as f64 / N_PERCENTILES as f64)
        .collect();
    DiscretePdf::new(support, probs)
}

/// Partition the CDF into `k` contiguous equal-probability segments
/// (mass at a boundary splits proportionally) and average within each:
/// the representatives, each with probability 1/k.
pub fn stratify(pdf: &DiscretePdf, k: usize) -> Vec<(f64, f64)> {
    assert!(k >= 1, "stratify requires k >= 1");
    let total: f64 = pdf.probs.iter().sum();
    let share = total / k as f64;
    let prob_out = 1.0 / k as f64;

    let mut out = Vec::with_capacity(k);
    let mut idx = 0usize;
    let mut remaining = pdf.probs.first().copied().unwrap_or(0.0);
    for stratum in 0..k {
        let mut need = share;
        let mut weighted = 0.0;
        while need > 1e-15 && idx < pdf.support.len() {
            // last stratum absorbs all residual mass
            let take = if stratum + 1 == k {
                remaining
            } else {
                remaining.min(need)
            };
            weighted += take * pdf.support[idx];
            remaining -= take;
            need -= take;
            if remaining <= 1e-15 {
                idx += 1;
                remaining = pdf.probs.get(idx).copied().unwrap_or(0.0);
            }
        }
        let taken = share - need.max(0.0);
        let rep = if taken > 0.0 {
            weighted / taken
        } else {
            // degenerate: no mass left, repeat the last support value
            *pdf.support.last().unwrap()
        };
        out.push((rep, prob_out));
    }
    out
}

/// Build temporally coupled scenario paths: scenario i takes stratum i
/// of every per-timestep PDF (rank coupling through time), with the
/// wind series paired by `coupling`.
pub fn build_scenario_paths(
    load_fc: &PercentileForecast,
    wind_fc: &PercentileForecast,
    k: usize,
    coupling: Coupling,
) -> Result<SystemScenarioSet, ScenarioError> {
    if load_fc.horizon() != wind_fc.horizon() {
        return Err(ScenarioError::HorizonMismatch(
            load_fc.horizon(),
            wind_fc.horizon(),
        ));
    }
    let horizon = load_fc.horizon();
    let mut load_path = vec![vec![0.0; horizon]; k];
    let mut wind_path = vec![vec![0.0; horizon]; k];

    let wind_of_load: Vec<usize> = match coupling {
        Coupling::Rank => (0..k).collect(),
        Coupling::IndependentPair { seed } => seeded_permutation(k, seed),
    };

    for t in 0..horizon {
        let load_reps = stratify(&build_discrete_pdf(&load_fc.rows[t])?, k);
        let wind_reps = stratify(&build_discrete_pdf(&wind_fc.rows[t])?, k);
        for s in 0..k {
            load_path[s][t] = load_reps[s].0;
            wind_path[s][t] = wind_reps[wind_of_load[s]].0;
        }
    }

    Ok(SystemScenarioSet {
        probs: vec![1.0 / k as f64; k],
        load_path,
        wind_path,
        load_p50: load_fc.p50_path(),
        wind_p50: wind_fc.p50_path(),
    })
}

/// Fisher-Yates permutation of 0..k from a ChaCha8 stream.
fn seeded_permutation(k: usize, seed: u64) -> Vec<usize> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, &[0x7065726d]));
    let mut idx: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

pub const ENTITY_LOAD: u64 = 0;
pub const ENTITY_WIND: u64 = 1;

/// splitmix64-style mixing of index tuples into one RNG seed; this is
/// the documented derivation that makes every noise draw a pure
/// function of (seed, scenario, timestep, entity kind, entity index).
fn mix(seed: u64, parts: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let mut h = splitmix(seed);
    for &p in parts {
        h = splitmix(h ^ p);
    }
    h
}

/// One standard-normal draw for the indexed entity (ChaCha8 keyed by
/// the mixed indices, first ziggurat sample).
pub fn noise_draw(seed: u64, scenario: u64, timestep: u64, entity_kind: u64, entity: u64) -> f64 {
    let key = mix(seed, &[scenario, timestep, entity_kind, entity]);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    StandardNormal.sample(&mut rng)
}

#[derive(Debug, Clone, Copy)]
pub struct DisaggregateOptions {
    pub noise_sigma: f64,
    pub seed: u64,
    /// Scale each (scenario, timestep) slice so bus-level totals match
    /// the system-level target again after noise.
    pub renormalize: bool,
}

/// Spatially disaggregate system multipliers to bus-level MW values
/// with seeded Gaussian noise. Loads stay nonnegative (noise factor
/// truncated at -1); wind clips to [0, capacity]. Deterministic for a
/// fixed seed.
pub fn disaggregate_to_buses(
    sys: &SystemScenarioSet,
    case: &GridCase,
    opts: &DisaggregateOptions,
) -> ScenarioSet {
    assert!(opts.noise_sigma >= 0.0, "noise sigma must be nonnegative");
    let k = sys.n_scenarios();
    let horizon = sys.horizon();
    let nb = case.buses.len();
    let nw = case.wind_plants.len();

    let eps = |s: usize, t: usize, kind: u64, e: usize| -> f64 {
        if opts.noise_sigma == 0.0 {
            0.0
        } else {
            let z = noise_draw(opts.seed, s as u64, t as u64, kind, e as u64);
            (opts.noise_sigma * z).max(-1.0)
        }
    };

    let mut load = vec![vec![vec![0.0; nb]; horizon]; k];
    let mut wind = vec![vec![vec![0.0; nw]; horizon]; k];
    for s in 0..k {
        for t in 0..horizon {
            let lmult = sys.load_path[s][t];
            let target_load: f64 = case.buses.iter().map(|b| b.demand_mw * lmult).sum();
            for (i, bus) in case.buses.iter().enumerate() {
                load[s][t][i] = bus.demand_mw * lmult * (1.0 + eps(s, t, ENTITY_LOAD, i));
            }
            if opts.renormalize {
                let got: f64 = load[s][t].iter().sum();
                if got > 0.0 {
                    let scale = target_load / got;
                    for v in load[s][t].iter_mut() {
                        *v *= scale;
                    }
                }
            }

            let wmult = sys.wind_path[s][t];
            let target_wind: f64 = case.wind_plants.iter().map(|w| w.capacity_mw * wmult).sum();
            for (i, plant) in case.wind_plants.iter().enumerate() {
                wind[s][t][i] =
                    (plant.capacity_mw * wmult * (1.0 + eps(s, t, ENTITY_WIND, i))).max(0.0);
            }
            if opts.renormalize {
                let got: f64 = wind[s][t].iter().sum();
                if got > 0.0 {
                    let scale = target_wind / got;
                    for v in wind[s][t].iter_mut() {
                        *v *= scale;
                    }
                }
            }
            for (i, plant) in case.wind_plants.iter().enumerate() {
                wind[s][t][i] = wind[s][t][i].clamp(0.0, plant.capacity_mw);
            }
        }
    }

    let forecast_load: Vec<Vec<f64>> = (0..horizon)
        .map(|t| {
            case.buses
                .iter()
                .map(|b| b.demand_mw * sys.load_p50[t])
                .collect()
        })
        .collect();
    let forecast_wind: Vec<Vec<f64>> = (0..horizon)
        .map(|t| {
            case.wind_plants
                .iter()
                .map(|w| (w.capacity_mw * sys.wind_p50[t]).min(w.capacity_mw))
                .collect()
        })
        .collect();

    ScenarioSet {
        probs: sys.probs.clone(),
        load,
        wind,
        forecast_load,
        forecast_wind,
        seed: opts.seed,
    }
}

/// Scenario CSV export: `scenario,prob,t,entity_kind,entity_id,value_mw`.
/// Forecast rows use scenario -1 with prob 0.
pub fn scenario_csv(set: &ScenarioSet, case: &GridCase) -> String {
    let mut out = String::from("scenario,prob,t,entity_kind,entity_id,value_mw\n");
    for t in 0..set.horizon() {
        for (i, bus) in case.buses.iter().enumerate() {
            out.push_str(&format!(
                "-1,0,{t},forecast_load,{},{}\n",
                bus.id, set.forecast_load[t][i]
            ));
        }
        for (i, plant) in case.wind_plants.iter().enumerate() {
            out.push_str(&format!(
                "-1,0,{t},forecast_wind,{},{}\n",
                plant.id, set.forecast_wind[t][i]
            ));
        }
    }
    for s in 0..set.n_scenarios() {
        for t in 0..set.horizon() {
            for (i, bus) in case.buses.iter().enumerate() {
                out.push_str(&format!(
                    "{s},{},{t},load,{},{}\n",
                    set.probs[s], bus.id, set.load[s][t][i]
                ));
            }
            for (i, plant) in case.wind_plants.iter().enumerate() {
                out.push_str(&format!(
                    "{s},{},{t},wind,{},{}\n",
                    set.probs[s], plant.id, set.wind[s][t][i]
                ));
            }
        }
    }
    out
}
