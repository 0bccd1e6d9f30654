//! End-to-end simulated interference experiments.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certifier::{certifier_value, sample_pattern, InterferencePattern, PovmElement, DEFAULT_POINTS};
use crate::error::{Error, Result};
use crate::fixtures::TableFixture;
use crate::hilbert::{JointDensity, Qubit};
use crate::ideal::apply_sequence_density;
use crate::nonideal::NonidealModel;
use crate::params::PhysicalParams;
use crate::pulse::{PulseSequence, Transition};
use crate::rng::{stream_id, stream_rng};
use crate::stats::{unbiased_c, CertifierResult, ShotRecord};
use crate::synthesis::{build_mapping_spec, find_mapping, synthesize_creation_with, MappingOptions, TargetState};

/// Stream index reserved for the per-raster phase ordering.
const ORDER_STREAM: u64 = 0xF_FFFF;

pub const DEFAULT_THERMAL_NBAR: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum NoiseMode {
    Off,
    /// Thermal initial motional state, ideal pulses.
    Thermal { nbar: f64 },
    /// Off-resonant carrier during sideband pulses with light-shift compensation.
    Carrier,
    /// Sideband lasers miscalibrated by `hz`.
    Detuning { hz: f64 },
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let num = |a: &str| {
            a.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad number in noise mode: {a}")))
        };
        match (head.trim().to_ascii_lowercase().as_str(), arg) {
            ("off" | "ideal", None) => Ok(NoiseMode::Off),
            ("thermal", None) => Ok(NoiseMode::Thermal { nbar: DEFAULT_THERMAL_NBAR }),
            ("thermal", Some(a)) => Ok(NoiseMode::Thermal { nbar: num(a)? }),
            ("carrier", None) => Ok(NoiseMode::Carrier),
            ("detuning", Some(a)) => Ok(NoiseMode::Detuning { hz: num(a)? }),
            _ => Err(Error::InvalidParameter(format!(
                "unknown noise mode {s:?} (expected off, thermal[:nbar], carrier or detuning:<Hz>)"
            ))),
        }
    }
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseMode::Off => write!(f, "off"),
            NoiseMode::Thermal { nbar } => write!(f, "thermal:{nbar}"),
            NoiseMode::Carrier => write!(f, "carrier"),
            NoiseMode::Detuning { hz } => write!(f, "detuning:{hz}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub target: TargetState,
    pub params: PhysicalParams,
    pub noise: NoiseMode,
    pub n_points: usize,
    pub shots_per_point: u64,
    pub rasters: u64,
    pub seed: u64,
    pub truncation: usize,
    pub creation: PulseSequence,
    pub mapping: PulseSequence,
    pub measured: Qubit,
}

impl ExperimentConfig {
    /// Ideal experiment with 31 phases, four rasters of 100 shots and the
    /// experimental trap parameters.
    pub fn new(target: TargetState, creation: PulseSequence, mapping: PulseSequence) -> Self {
        let truncation = target.default_truncation();
        ExperimentConfig {
            target,
            params: PhysicalParams::experimental(),
            noise: NoiseMode::Off,
            n_points: DEFAULT_POINTS,
            shots_per_point: 400,
            rasters: 4,
            seed: 0,
            truncation,
            creation,
            mapping,
            measured: Qubit::Excited,
        }
    }

    /// Red-sideband creation sequence and the shortest mapping found.
    pub fn synthesized(target: TargetState) -> Result<Self> {
        let creation = synthesize_creation_with(&target, 4, &[Transition::RedSideband])?;
        let mapping = find_mapping(&build_mapping_spec(&target), &MappingOptions::default())?;
        Ok(Self::new(target, creation, mapping))
    }

    pub fn from_fixture(f: &TableFixture) -> Result<Self> {
        let mut cfg = Self::new(f.target_state()?, f.creation.clone(), f.mapping.clone());
        cfg.truncation = cfg.truncation.max(f.truncation);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_points < 2 {
            return Err(Error::InvalidParameter("need at least 2 phase points".into()));
        }
        if self.rasters == 0 || self.rasters > self.shots_per_point {
            return Err(Error::InvalidParameter(format!(
                "rasters must lie in 1..={}, got {}",
                self.shots_per_point, self.rasters
            )));
        }
        if self.truncation < self.target.n_max() + 2 {
            return Err(Error::InvalidParameter("truncation too small for target".into()));
        }
        match self.noise {
            NoiseMode::Thermal { nbar } if !(nbar >= 0.0 && nbar.is_finite()) => {
                Err(Error::InvalidParameter(format!("thermal nbar must be >= 0, got {nbar}")))
            }
            NoiseMode::Detuning { hz } if !hz.is_finite() => {
                Err(Error::InvalidParameter("detuning must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// Shots taken in each raster; the remainder goes to the first rasters.
    pub fn raster_shots(&self) -> Vec<u64> {
        let base = self.shots_per_point / self.rasters;
        let extra = self.shots_per_point % self.rasters;
        (0..self.rasters).map(|r| base + u64::from(r < extra)).collect()
    }

    fn povm(&self) -> PovmElement {
        PovmElement::qubit(self.measured, self.truncation)
    }

    fn nonideal_model(&self) -> Option<NonidealModel> {
        match self.noise {
            NoiseMode::Off | NoiseMode::Thermal { .. } => None,
            NoiseMode::Carrier => Some(NonidealModel::new(self.params.clone())),
            NoiseMode::Detuning { hz } => Some(NonidealModel::resonant_only(PhysicalParams {
                sideband_detuning: hz,
                ..self.params.clone()
            })),
        }
    }

    fn initial_state(&self) -> Result<JointDensity> {
        let nbar = match self.noise {
            NoiseMode::Off => 0.0,
            NoiseMode::Thermal { nbar } => nbar,
            _ => self.params.thermal_nbar,
        };
        JointDensity::thermal(nbar, self.truncation)
    }
}

/// Noise-free excitation probabilities at the configured phase grid.
pub fn expected_pattern(cfg: &ExperimentConfig) -> Result<InterferencePattern> {
    cfg.validate()?;
    let rho0 = cfg.initial_state()?;
    let a = cfg.povm();
    match cfg.nonideal_model() {
        None => {
            let rho = apply_sequence_density(&rho0, &cfg.creation)?;
            sample_pattern(&rho, &cfg.mapping, &a, cfg.n_points)
        }
        Some(model) => {
            let (rho, t_created) = model.run_density(&rho0, &cfg.creation, 0.0)?;
            let phases = crate::certifier::phase_grid(cfg.n_points);
            // Shifting the mapping by -φ is free evolution by φ before it.
            let probabilities = phases
                .par_iter()
                .map(|&phi| {
                    let (out, _) = model.run_density(&rho, &cfg.mapping.shift_phases(-phi), t_created)?;
                    Ok(out.expectation(a.matrix()).clamp(0.0, 1.0))
                })
                .collect::<Result<Vec<f64>>>()?;
            InterferencePattern::new(phases, probabilities, crate::certifier::trapezium_weights(cfg.n_points))
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub pattern: InterferencePattern,
    pub record: ShotRecord,
    pub result: CertifierResult,
    /// Order in which the phase points were visited in each raster.
    pub raster_orders: Vec<Vec<usize>>,
}

/// Samples the expected pattern raster by raster.
pub fn sample_rasters(cfg: &ExperimentConfig, pattern: &InterferencePattern) -> Result<(ShotRecord, Vec<Vec<usize>>)> {
    let mut successes = vec![0u64; pattern.len()];
    let mut orders = Vec::with_capacity(cfg.rasters as usize);
    for (r, &shots) in cfg.raster_shots().iter().enumerate() {
        let mut rng = stream_rng(cfg.seed, stream_id(r as u64, ORDER_STREAM));
        let mut order: Vec<usize> = (0..pattern.len()).collect();
        order.shuffle(&mut rng);
        for &j in &order {
            let p = pattern.probabilities[j].clamp(0.0, 1.0);
            let dist = Binomial::new(shots, p).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            successes[j] += dist.sample(&mut rng);
        }
        orders.push(order);
    }
    let record = ShotRecord::new(pattern.phases.clone(), successes, cfg.shots_per_point)?;
    Ok((record, orders))
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let pattern = expected_pattern(cfg)?;
    let (record, raster_orders) = sample_rasters(cfg, &pattern)?;
    let result = unbiased_c(&record, &pattern.weights)?;
    Ok(ExperimentOutcome {
        pattern,
        record,
        result,
        raster_orders,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ShotRecord, CertifierResult)> {
    let out = simulate(cfg)?;
    Ok((out.record, out.result))
}

pub fn write_record_csv<W: Write>(outcome: &ExperimentOutcome, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["phase_rad", "successes", "shots", "proportion", "expected"])?;
    let props = outcome.record.proportions();
    for j in 0..outcome.record.phases.len() {
        wtr.write_record([
            format!("{:.12}", outcome.record.phases[j]),
            outcome.record.successes[j].to_string(),
            outcome.record.shots_per_point.to_string(),
            format!("{:.12}", props[j]),
            format!("{:.12}", outcome.pattern.probabilities[j]),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub detuning_hz: f64,
    pub certifier: f64,
}

/// Noise-free certifier value against sideband miscalibration.
pub fn detuning_sweep(cfg: &ExperimentConfig, deltas: &[f64]) -> Result<Vec<SweepPoint>> {
    deltas
        .par_iter()
        .map(|&hz| {
            let mut c = cfg.clone();
            c.noise = NoiseMode::Detuning { hz };
            Ok(SweepPoint {
                detuning_hz: hz,
                certifier: certifier_value(&expected_pattern(&c)?)?,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["detuning_hz", "certifier"])?;
    for p in points {
        wtr.write_record([format!("{}", p.detuning_hz), format!("{:.12}", p.certifier)])?;
    }
    wtr.flush()?;
    Ok(())
}
