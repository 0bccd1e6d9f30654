//! Interference patterns, their moments and the moment-ratio certifier.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{dimension, hermitian_eigenvalues, JointDensity, Qubit, C64};
use crate::ideal::{free_evolution_operator, sequence_unitary};
use crate::pulse::{PulseSequence, Transition};
use crate::synthesis::{synthesize_creation_with, TargetState};

/// Default number of phase points.
pub const DEFAULT_POINTS: usize = 31;

/// Hermitian operator with spectrum in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct PovmElement {
    matrix: DMatrix<C64>,
}

impl PovmElement {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let herm = (&matrix - matrix.adjoint()).camax();
        if herm > 1e-12 {
            return Err(Error::InvalidParameter(format!("POVM element not Hermitian ({herm:.2e})")));
        }
        let eig = hermitian_eigenvalues(&matrix);
        if eig.iter().any(|&l| !(-1e-10..=1.0 + 1e-10).contains(&l)) {
            return Err(Error::InvalidParameter("POVM element spectrum outside [0, 1]".into()));
        }
        Ok(PovmElement { matrix })
    }

    /// Projector on a qubit state, identity on the motion.
    pub fn qubit(qubit: Qubit, truncation: usize) -> Self {
        let dim = dimension(truncation);
        let half = truncation + 1;
        let range = match qubit {
            Qubit::Ground => 0..half,
            Qubit::Excited => half..dim,
        };
        let mut m = DMatrix::zeros(dim, dim);
        for i in range {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        PovmElement { matrix: m }
    }

    pub fn excited(truncation: usize) -> Self {
        Self::qubit(Qubit::Excited, truncation)
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `αA` for α in [0, 1].
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("scale {alpha} outside [0, 1]")));
        }
        Ok(PovmElement {
            matrix: &self.matrix * C64::new(alpha, 0.0),
        })
    }
}

/// Phases `2πj/(J−1)` for `j = 0..J`.
pub fn phase_grid(points: usize) -> Vec<f64> {
    (0..points)
        .map(|j| 2.0 * PI * j as f64 / (points - 1) as f64)
        .collect()
}

/// Trapezium weights on [`phase_grid`]: half weight at both endpoints.
pub fn trapezium_weights(points: usize) -> Vec<f64> {
    let h = 1.0 / (points - 1) as f64;
    (0..points)
        .map(|j| if j == 0 || j + 1 == points { 0.5 * h } else { h })
        .collect()
}

/// Smallest point count that integrates the cube of a degree-`degree`
/// trigonometric polynomial exactly.
pub fn exact_points(degree: usize) -> usize {
    (3 * degree + 2).max(3)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterferencePattern {
    pub phases: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub weights: Vec<f64>,
}

impl InterferencePattern {
    pub fn new(phases: Vec<f64>, probabilities: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if phases.len() != probabilities.len() || phases.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: phases.len(),
                found: probabilities.len().min(weights.len()),
            });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}")));
        }
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter("probability outside [0, 1]".into()));
        }
        Ok(InterferencePattern {
            phases,
            probabilities,
            weights,
        })
    }

    /// Samples `f` on the standard grid with trapezium weights.
    pub fn from_fn(points: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidParameter("need at least 2 phase points".into()));
        }
        let phases = phase_grid(points);
        let probabilities = phases.iter().map(|&p| f(p).clamp(0.0, 1.0)).collect();
        Self::new(phases, probabilities, trapezium_weights(points))
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// Peak-to-peak spread of the sampled probabilities.
    pub fn visibility(&self) -> f64 {
        let max = self.probabilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.probabilities.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["phase_rad", "probability", "weight"])?;
        for j in 0..self.len() {
            out.write_record(&[
                format!("{:.12}", self.phases[j]),
                format!("{:.15}", self.probabilities[j]),
                format!("{:.15}", self.weights[j]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Unitary of the mapping after free evolution by `phi`.
fn mapped_unitary(mapping_unitary: &DMatrix<C64>, truncation: usize, phi: f64) -> DMatrix<C64> {
    mapping_unitary * free_evolution_operator(truncation, phi)
}

fn probability_with(rho: &JointDensity, u: &DMatrix<C64>, a: &PovmElement) -> f64 {
    let evolved = u * rho.matrix() * u.adjoint();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..evolved.nrows() {
        for j in 0..evolved.ncols() {
            acc += a.matrix[(i, j)] * evolved[(j, i)];
        }
    }
    acc.re.clamp(0.0, 1.0)
}

fn check_dims(rho: &JointDensity, a: &PovmElement) -> Result<()> {
    if a.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: a.dim(),
        });
    }
    Ok(())
}

/// `Tr[A U_m U_f(φ) ρ U_f(φ)† U_m†]`.
pub fn pattern_probability(rho: &JointDensity, mapping: &PulseSequence, a: &PovmElement, phi: f64) -> Result<f64> {
    check_dims(rho, a)?;
    let um = sequence_unitary(mapping, rho.truncation());
    Ok(probability_with(rho, &mapped_unitary(&um, rho.truncation(), phi), a))
}

pub fn sample_pattern(rho: &JointDensity, mapping: &PulseSequence, a: &PovmElement, n_points: usize) -> Result<InterferencePattern> {
    check_dims(rho, a)?;
    let um = sequence_unitary(mapping, rho.truncation());
    InterferencePattern::from_fn(n_points, |phi| {
        probability_with(rho, &mapped_unitary(&um, rho.truncation(), phi), a)
    })
}

/// `Σ_j w_j p_jⁿ`.
pub fn moment(pattern: &InterferencePattern, order: u32) -> f64 {
    pattern
        .weights
        .iter()
        .zip(&pattern.probabilities)
        .map(|(w, p)| w * p.powi(order as i32))
        .sum()
}

/// `C = M₃/M₁²`.
pub fn certifier_value(pattern: &InterferencePattern) -> Result<f64> {
    let m1 = moment(pattern, 1);
    if m1 <= 0.0 {
        return Err(Error::ZeroFirstMoment);
    }
    Ok(moment(pattern, 3) / (m1 * m1))
}

/// Suprema of the certifier over k-coherent states, as exact fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    /// `(k, numerator, denominator)`, strictly increasing in value.
    pub entries: Vec<(usize, u64, u64)>,
}

impl Default for ThresholdTable {
    fn default() -> Self {
        ThresholdTable {
            entries: vec![(1, 1, 1), (2, 5, 4), (3, 179, 96)],
        }
    }
}

impl ThresholdTable {
    pub fn threshold(&self, k: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.0 == k)
            .map(|&(_, n, d)| n as f64 / d as f64)
    }

    /// Highest coherence level certified: the largest `k+1` with
    /// `c_hat − z·σ` above the k-coherent supremum, or 1 if none.
    pub fn certify(&self, c_hat: f64, sigma: f64, z: f64) -> usize {
        let lower = c_hat - z * sigma.max(0.0);
        self.entries
            .iter()
            .filter(|&&(_, n, d)| lower > n as f64 / d as f64 + 1e-12)
            .map(|e| e.0 + 1)
            .max()
            .unwrap_or(1)
    }
}

pub fn certify(c_hat: f64, sigma: f64, z: f64) -> usize {
    ThresholdTable::default().certify(c_hat, sigma, z)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifierReport {
    pub m1: f64,
    pub m3: f64,
    pub c: f64,
    pub sigma: f64,
    pub certified_level: usize,
    pub thresholds: Vec<(usize, f64)>,
}

impl CertifierReport {
    pub fn from_pattern(pattern: &InterferencePattern, sigma: f64, z: f64) -> Result<Self> {
        let c = certifier_value(pattern)?;
        let table = ThresholdTable::default();
        Ok(CertifierReport {
            m1: moment(pattern, 1),
            m3: moment(pattern, 3),
            c,
            sigma,
            certified_level: table.certify(c, sigma, z),
            thresholds: table.entries.iter().map(|&(k, n, d)| (k, n as f64 / d as f64)).collect(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Certifier and visibility obtained when the mapping is the adjoint of the
/// red-sideband creation sequence, measuring `|g⟩`.
pub fn naive_mapping_benchmark(target: &TargetState) -> Result<(f64, f64)> {
    let creation = synthesize_creation_with(target, 4, &[Transition::RedSideband])?;
    let truncation = target.default_truncation();
    let rho = JointDensity::from_pure(&target.joint(truncation)?);
    let a = PovmElement::qubit(Qubit::Ground, truncation);
    let mapping = creation.adjoint();
    let c = certifier_value(&sample_pattern(&rho, &mapping, &a, exact_points(target.n_max()).max(DEFAULT_POINTS))?)?;
    let visibility = sample_pattern(&rho, &mapping, &a, 2001)?.visibility();
    Ok((c, visibility))
}
