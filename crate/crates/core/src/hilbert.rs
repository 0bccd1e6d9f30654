//! State types on the truncated qubit ⊗ Fock space.
//!
//! Basis ordering is `(qubit, n)` with the ground manifold first:
//! index `n` is `|g,n⟩` and index `N + 1 + n` is `|e,n⟩`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const NORM_TOLERANCE: f64 = 1e-12;
/// Summed population allowed in phonon levels `{N-1, N}`.
pub const LEAKAGE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Qubit {
    #[serde(alias = "g")]
    Ground,
    #[serde(alias = "e")]
    Excited,
}

impl Qubit {
    pub fn offset(self, truncation: usize) -> usize {
        match self {
            Qubit::Ground => 0,
            Qubit::Excited => truncation + 1,
        }
    }
}

#[inline]
pub fn basis_index(truncation: usize, qubit: Qubit, n: usize) -> usize {
    debug_assert!(n <= truncation);
    qubit.offset(truncation) + n
}

#[inline]
pub fn dimension(truncation: usize) -> usize {
    2 * (truncation + 1)
}

/// Phonon number of every basis index.
pub fn phonon_numbers(truncation: usize) -> impl Iterator<Item = usize> {
    (0..dimension(truncation)).map(move |i| i % (truncation + 1))
}

/// Pure state of qubit and motion.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    amplitudes: Vec<C64>,
    truncation: usize,
}

impl JointState {
    pub fn from_amplitudes(truncation: usize, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != dimension(truncation) {
            return Err(Error::DimensionMismatch {
                expected: dimension(truncation),
                found: amplitudes.len(),
            });
        }
        let state = JointState {
            amplitudes,
            truncation,
        };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized(norm));
        }
        Ok(state)
    }

    /// Builds a state without the normalization check. Used internally by
    /// propagators whose output is normalized up to integrator error.
    pub(crate) fn from_raw(truncation: usize, amplitudes: Vec<C64>) -> Self {
        JointState {
            amplitudes,
            truncation,
        }
    }

    pub fn basis(truncation: usize, qubit: Qubit, n: usize) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); dimension(truncation)];
        amplitudes[basis_index(truncation, qubit, n)] = C64::new(1.0, 0.0);
        JointState {
            amplitudes,
            truncation,
        }
    }

    /// `|g,0⟩`.
    pub fn ground(truncation: usize) -> Self {
        Self::basis(truncation, Qubit::Ground, 0)
    }

    /// Embeds motional amplitudes with the qubit in `|g⟩`. Normalizes the input.
    pub fn from_motional(truncation: usize, motional: &[C64]) -> Result<Self> {
        if motional.len() > truncation + 1 {
            return Err(Error::DimensionMismatch {
                expected: truncation + 1,
                found: motional.len(),
            });
        }
        let norm = motional.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::NotNormalized(0.0));
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); dimension(truncation)];
        for (n, a) in motional.iter().enumerate() {
            amplitudes[n] = a / norm;
        }
        Ok(JointState {
            amplitudes,
            truncation,
        })
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn amplitude(&self, qubit: Qubit, n: usize) -> C64 {
        self.amplitudes[basis_index(self.truncation, qubit, n)]
    }

    pub fn population(&self, qubit: Qubit, n: usize) -> f64 {
        self.amplitude(qubit, n).norm_sqr()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn qubit_population(&self, qubit: Qubit) -> f64 {
        (0..=self.truncation).map(|n| self.population(qubit, n)).sum()
    }

    pub fn excited_population(&self) -> f64 {
        self.qubit_population(Qubit::Excited)
    }

    /// Population in phonon levels `N-1` and `N`.
    pub fn guard_population(&self) -> f64 {
        let lo = self.truncation.saturating_sub(1);
        (lo..=self.truncation)
            .map(|n| self.population(Qubit::Ground, n) + self.population(Qubit::Excited, n))
            .sum()
    }

    pub fn check_leakage(&self) -> Result<()> {
        let population = self.guard_population();
        if population > LEAKAGE_TOLERANCE {
            return Err(Error::Leakage {
                population,
                tolerance: LEAKAGE_TOLERANCE,
            });
        }
        Ok(())
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &JointState) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn fidelity(&self, other: &JointState) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn to_vector(&self) -> DVector<C64> {
        DVector::from_column_slice(&self.amplitudes)
    }
}

/// Mixed state of qubit and motion.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDensity {
    matrix: DMatrix<C64>,
    truncation: usize,
}

impl JointDensity {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn from_matrix(truncation: usize, matrix: DMatrix<C64>) -> Result<Self> {
        let dim = dimension(truncation);
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: matrix.nrows(),
            });
        }
        let herm_err = (&matrix - matrix.adjoint()).camax();
        if herm_err > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "density matrix not Hermitian (deviation {herm_err:.2e})"
            )));
        }
        let trace = matrix.trace().re;
        if (trace - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(trace));
        }
        let min_eig = matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 {
            return Err(Error::InvalidParameter(format!(
                "density matrix has negative eigenvalue {min_eig:.2e}"
            )));
        }
        Ok(JointDensity { matrix, truncation })
    }

    pub(crate) fn from_raw(truncation: usize, matrix: DMatrix<C64>) -> Self {
        JointDensity { matrix, truncation }
    }

    pub fn from_pure(state: &JointState) -> Self {
        let v = state.to_vector();
        JointDensity {
            matrix: &v * v.adjoint(),
            truncation: state.truncation(),
        }
    }

    /// Convex mixture; weights are renormalized.
    pub fn mixture(components: &[(f64, JointState)]) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty mixture".into()))?;
        let truncation = first.1.truncation();
        let dim = dimension(truncation);
        let total: f64 = components.iter().map(|(w, _)| *w).sum();
        if total <= 0.0 || components.iter().any(|(w, _)| *w < 0.0) {
            return Err(Error::InvalidParameter("mixture weights must be nonnegative".into()));
        }
        let mut matrix = DMatrix::zeros(dim, dim);
        for (w, s) in components {
            if s.truncation() != truncation {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.dim(),
                });
            }
            let v = s.to_vector();
            matrix += (&v * v.adjoint()) * C64::new(w / total, 0.0);
        }
        Ok(JointDensity { matrix, truncation })
    }

    /// Thermal motional state with the qubit in `|g⟩`, renormalized over the
    /// truncated space.
    pub fn thermal(nbar: f64, truncation: usize) -> Result<Self> {
        if !(nbar >= 0.0) {
            return Err(Error::InvalidParameter(format!("nbar must be >= 0, got {nbar}")));
        }
        let dim = dimension(truncation);
        let mut matrix = DMatrix::zeros(dim, dim);
        if nbar == 0.0 {
            matrix[(0, 0)] = C64::new(1.0, 0.0);
        } else {
            let ratio = nbar / (1.0 + nbar);
            let weights: Vec<f64> = (0..=truncation)
                .map(|n| ratio.powi(n as i32) / (1.0 + nbar))
                .collect();
            let total: f64 = weights.iter().sum();
            for (n, w) in weights.iter().enumerate() {
                matrix[(n, n)] = C64::new(w / total, 0.0);
            }
        }
        Ok(JointDensity { matrix, truncation })
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn population(&self, qubit: Qubit, n: usize) -> f64 {
        let i = basis_index(self.truncation, qubit, n);
        self.matrix[(i, i)].re
    }

    pub fn qubit_population(&self, qubit: Qubit) -> f64 {
        (0..=self.truncation).map(|n| self.population(qubit, n)).sum()
    }

    pub fn excited_population(&self) -> f64 {
        self.qubit_population(Qubit::Excited)
    }

    pub fn guard_population(&self) -> f64 {
        let lo = self.truncation.saturating_sub(1);
        (lo..=self.truncation)
            .map(|n| self.population(Qubit::Ground, n) + self.population(Qubit::Excited, n))
            .sum()
    }

    pub fn check_leakage(&self) -> Result<()> {
        let population = self.guard_population();
        if population > LEAKAGE_TOLERANCE {
            return Err(Error::Leakage {
                population,
                tolerance: LEAKAGE_TOLERANCE,
            });
        }
        Ok(())
    }

    /// `Tr[A ρ]`, real part.
    pub fn expectation(&self, operator: &DMatrix<C64>) -> f64 {
        // Tr[Aρ] = Σ_ij A_ij ρ_ji
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += operator[(i, j)] * self.matrix[(j, i)];
            }
        }
        acc.re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).camax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.matrix)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Half the trace norm of the difference.
    pub fn trace_distance(&self, other: &JointDensity) -> f64 {
        let diff = &self.matrix - &other.matrix;
        0.5 * hermitian_eigenvalues(&diff).iter().map(|l| l.abs()).sum::<f64>()
    }

    /// Spectral decomposition into weighted pure states, dropping weights
    /// below `cutoff`.
    pub fn ensemble(&self, cutoff: f64) -> Vec<(f64, JointState)> {
        let eig = self.matrix.clone().symmetric_eigen();
        let mut out = Vec::new();
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda > cutoff {
                let col: Vec<C64> = eig.eigenvectors.column(k).iter().cloned().collect();
                out.push((lambda, JointState::from_raw(self.truncation, col)));
            }
        }
        out
    }
}

/// Eigenvalues of a Hermitian matrix (symmetrized before decomposition).
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    sym.symmetric_eigenvalues().iter().cloned().collect()
}
