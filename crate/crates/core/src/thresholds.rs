//! Numerical suprema of the certifier over k-coherent states and general
//! measurements.
//!
//! States are mixtures of components supported on basis-aligned
//! k-dimensional subspaces, each written through a Cholesky factor.
//! Measurements are `Σ a_j |ψ_j⟩⟨ψ_j|` with the `ψ_j` built one at a time
//! inside the orthogonal complement of the previous ones. Patterns are
//! evaluated exactly from their Fourier coefficients.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::C64;
use crate::optim::Bfgs;
use crate::rng::stream_rng;

/// All k-element subsets of `0..n` in lexicographic order.
const LOGIT_LO: f64 = -4.0;
const LOGIT_HI: f64 = 0.0;

pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mixtures of k-coherent components on a `dim`-level space.
#[derive(Clone, Debug)]
pub struct KCoherentParametrization {
    pub dim: usize,
    pub k: usize,
    pub subspace_list: Vec<Vec<usize>>,
    /// Off-diagonal Cholesky entries are real when set.
    pub real: bool,
}

impl KCoherentParametrization {
    pub fn new(dim: usize, k: usize, real: bool) -> Result<Self> {
        if k == 0 || k > dim {
            return Err(Error::InvalidParameter(format!("need 1 <= k <= dim, got k={k}, dim={dim}")));
        }
        Ok(KCoherentParametrization {
            dim,
            k,
            subspace_list: subsets(dim, k),
            real,
        })
    }

    fn per_component(&self) -> usize {
        let k = self.k;
        let off = k * (k - 1) / 2;
        k + off + if self.real { 0 } else { off }
    }

    pub fn len(&self) -> usize {
        let s = self.subspace_list.len();
        s * self.per_component() + s - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Density matrix `Σ_s w_s L_s L_s† / Tr(L_s L_s†)`.
    pub fn decode(&self, params: &[f64]) -> DMatrix<C64> {
        let k = self.k;
        let s = self.subspace_list.len();
        let per = self.per_component();
        let mut logits = vec![0.0];
        logits.extend_from_slice(&params[s * per..s * per + s - 1]);
        let weights = softmax(&logits);
        let mut rho = DMatrix::zeros(self.dim, self.dim);
        for (c, subset) in self.subspace_list.iter().enumerate() {
            let p = &params[c * per..(c + 1) * per];
            let mut l = DMatrix::<C64>::zeros(k, k);
            let mut idx = k;
            let off = k * (k - 1) / 2;
            for i in 0..k {
                l[(i, i)] = C64::new(p[i], 0.0);
                for j in 0..i {
                    let mag = p[idx];
                    let phase = if self.real { 0.0 } else { p[idx + off] };
                    l[(i, j)] = C64::from_polar(mag, phase);
                    idx += 1;
                }
            }
            let block = &l * l.adjoint();
            let tr = block.trace().re;
            let scale = if tr > 1e-300 { weights[c] / tr } else { 0.0 };
            for (a, &ia) in subset.iter().enumerate() {
                for (b, &ib) in subset.iter().enumerate() {
                    rho[(ia, ib)] += block[(a, b)] * scale;
                }
            }
            if tr <= 1e-300 {
                for &ia in subset {
                    rho[(ia, ia)] += C64::new(weights[c] / k as f64, 0.0);
                }
            }
        }
        rho
    }
}

/// Measurement operators `Σ_j a_j |ψ_j⟩⟨ψ_j|` with orthonormal `ψ_j`.
#[derive(Clone, Debug)]
pub struct PovmParametrization {
    pub dim: usize,
    pub m: usize,
    /// Fix every `a_j = 1`, giving a rank-m projector.
    pub unit_weights: bool,
    pub real: bool,
}

impl PovmParametrization {
    pub fn new(dim: usize, m: usize, unit_weights: bool, real: bool) -> Result<Self> {
        if m == 0 || m > dim {
            return Err(Error::InvalidParameter(format!("need 1 <= m <= dim, got m={m}, dim={dim}")));
        }
        Ok(PovmParametrization {
            dim,
            m,
            unit_weights,
            real,
        })
    }

    fn component_len(&self, j: usize) -> usize {
        let free = self.dim - j - 1;
        free * if self.real { 1 } else { 2 } + usize::from(!self.unit_weights)
    }

    pub fn len(&self) -> usize {
        (0..self.m).map(|j| self.component_len(j)).sum()
    }

    /// Positions of the weight logits in the parameter vector.
    pub fn weight_indices(&self) -> Vec<usize> {
        if self.unit_weights {
            return Vec::new();
        }
        let mut end = 0;
        (0..self.m)
            .map(|j| {
                end += self.component_len(j);
                end - 1
            })
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Components and their weights.
    pub fn components(&self, params: &[f64]) -> Vec<(f64, Vec<C64>)> {
        let dim = self.dim;
        let mut basis: Vec<Vec<C64>> = (0..dim)
            .map(|i| {
                let mut v = vec![C64::new(0.0, 0.0); dim];
                v[i] = C64::new(1.0, 0.0);
                v
            })
            .collect();
        let mut out = Vec::with_capacity(self.m);
        let mut offset = 0;
        for j in 0..self.m {
            let free = dim - j - 1;
            let p = &params[offset..offset + self.component_len(j)];
            offset += self.component_len(j);
            let mut coeffs = vec![C64::new(1.0, 0.0)];
            for i in 0..free {
                let phase = if self.real { 0.0 } else { p[free + i] };
                coeffs.push(C64::from_polar(p[i], phase));
            }
            let norm = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let mut psi = vec![C64::new(0.0, 0.0); dim];
            for (c, b) in coeffs.iter().zip(&basis) {
                for (x, y) in psi.iter_mut().zip(b) {
                    *x += c / norm * y;
                }
            }
            let weight = if self.unit_weights { 1.0 } else { logistic(p[p.len() - 1]) };
            out.push((weight, psi.clone()));
            basis = complement(&basis, &psi);
        }
        out
    }

    pub fn decode(&self, params: &[f64]) -> DMatrix<C64> {
        let mut a = DMatrix::zeros(self.dim, self.dim);
        for (w, psi) in self.components(params) {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    a[(i, j)] += psi[i] * psi[j].conj() * w;
                }
            }
        }
        a
    }
}

/// Orthonormal basis of `span(basis) ⊖ psi`, one vector shorter.
fn complement(basis: &[Vec<C64>], psi: &[C64]) -> Vec<Vec<C64>> {
    let mut candidates: Vec<(f64, Vec<C64>)> = basis
        .iter()
        .map(|b| {
            let c: C64 = psi.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
            let v: Vec<C64> = b.iter().zip(psi).map(|(y, x)| y - c * x).collect();
            (v.iter().map(|x| x.norm_sqr()).sum::<f64>(), v)
        })
        .collect();
    // Drop the direction most aligned with psi.
    let drop = candidates
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .map(|(i, _)| i)
        .unwrap();
    candidates.remove(drop);
    let mut out: Vec<Vec<C64>> = Vec::new();
    for (_, mut v) in candidates {
        for _ in 0..2 {
            for u in out.iter().chain(std::iter::once(&psi.to_vec())) {
                let c: C64 = u.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= c * ui;
                }
            }
        }
        let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        out.push(v.into_iter().map(|x| x / n).collect());
    }
    out
}

/// First and third moments of `p(φ) = Tr[A F(φ) ρ F(φ)†]` with
/// `F(φ) = diag(e^{-inφ})`, computed exactly from Fourier coefficients.
pub fn exact_moments(rho: &DMatrix<C64>, a: &DMatrix<C64>) -> (f64, f64) {
    let d = rho.nrows();
    let shift = d - 1;
    let mut coeff = vec![C64::new(0.0, 0.0); 2 * d - 1];
    for n in 0..d {
        for m in 0..d {
            coeff[n + shift - m] += a[(m, n)] * rho[(n, m)];
        }
    }
    let m1 = coeff[shift].re;
    let mut m3 = C64::new(0.0, 0.0);
    let lo = -(shift as isize);
    let hi = shift as isize;
    for x in lo..=hi {
        for y in lo..=hi {
            let z = -x - y;
            if z < lo || z > hi {
                continue;
            }
            m3 += coeff[(x - lo) as usize] * coeff[(y - lo) as usize] * coeff[(z - lo) as usize];
        }
    }
    (m1, m3.re)
}

/// Certifier of the exact pattern, `None` when the first moment vanishes.
pub fn certifier_of(rho: &DMatrix<C64>, a: &DMatrix<C64>) -> Option<f64> {
    let (m1, m3) = exact_moments(rho, a);
    (m1 > 1e-14).then(|| m3 / (m1 * m1))
}

pub fn decode_state(p: &KCoherentParametrization, params: &[f64]) -> DMatrix<C64> {
    p.decode(params)
}

pub fn decode_povm(p: &PovmParametrization, params: &[f64]) -> DMatrix<C64> {
    p.decode(params)
}

pub fn certifier_objective(
    state: &KCoherentParametrization,
    state_params: &[f64],
    povm: &PovmParametrization,
    povm_params: &[f64],
) -> Result<f64> {
    certifier_of(&state.decode(state_params), &povm.decode(povm_params)).ok_or(Error::ZeroFirstMoment)
}

#[derive(Clone, Debug)]
pub struct ThresholdOptions {
    pub restarts: usize,
    pub seed: u64,
    pub real: bool,
    pub unit_weights: bool,
    /// Top results must agree within this for the optimum to be accepted.
    pub agreement: f64,
    pub agreement_count: usize,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions {
            restarts: 200,
            seed: 0,
            real: false,
            unit_weights: false,
            agreement: 1e-8,
            agreement_count: 5,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdResult {
    pub dim: usize,
    pub k: usize,
    pub m: usize,
    pub value: f64,
    #[serde(skip)]
    pub state: DMatrix<C64>,
    #[serde(skip)]
    pub povm: DMatrix<C64>,
    /// Best values of all restarts in decreasing order.
    pub values: Vec<f64>,
    /// Whether the leading results agree within tolerance.
    pub agreed: bool,
    /// Fraction of restarts reaching the optimum whose measurement,
    /// compressed to the support of the state, is a rank-1 projector.
    pub collapse_fraction: f64,
}

/// Whether the state is pure and the measurement, restricted to the levels
/// the state occupies, is a rank-1 projector onto that state up to a
/// free-evolution phase.
pub fn collapses_to_rank_one(rho: &DMatrix<C64>, a: &DMatrix<C64>, tol: f64) -> bool {
    let d = rho.nrows();
    let levels: Vec<usize> = (0..d).filter(|&n| rho[(n, n)].re > tol * tol).collect();
    let restrict = |m: &DMatrix<C64>| DMatrix::from_fn(levels.len(), levels.len(), |i, j| m[(levels[i], levels[j])]);
    let (rho_s, a_s) = (restrict(rho), restrict(a));
    let top = |m: DMatrix<C64>| {
        let eig = m.symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        (values, eig.eigenvectors.column(order[0]).clone_owned())
    };
    let (rho_spec, psi) = top(rho_s);
    let (a_spec, chi) = top(a_s);
    if (rho_spec[0] - 1.0).abs() > tol || (a_spec[0] - 1.0).abs() > tol || a_spec[1..].iter().any(|l| l.abs() > tol) {
        return false;
    }
    let best = (0..3600)
        .map(|s| {
            let alpha = 2.0 * PI * s as f64 / 3600.0;
            levels
                .iter()
                .enumerate()
                .map(|(i, &n)| chi[i].conj() * psi[i] * C64::from_polar(1.0, -(n as f64) * alpha))
                .sum::<C64>()
                .norm_sqr()
        })
        .fold(0.0, f64::max);
    best > 1.0 - tol
}

/// Multi-start quasi-Newton maximization of the certifier over k-coherent
/// states on `dim` levels and measurements with `m` components.
pub fn maximize_threshold_with(dim: usize, k: usize, m: usize, opts: &ThresholdOptions) -> Result<ThresholdResult> {
    let sp = KCoherentParametrization::new(dim, k, opts.real)?;
    let pp = PovmParametrization::new(dim, m, opts.unit_weights, opts.real)?;
    let (ns, np) = (sp.len(), pp.len());
    let objective = |x: &[f64]| -> f64 {
        match certifier_of(&sp.decode(&x[..ns]), &pp.decode(&x[ns..])) {
            Some(c) if c.is_finite() => -c,
            _ => 0.0,
        }
    };
    let runs: Vec<(f64, Vec<f64>)> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(opts.seed, r as u64);
            let mut x0: Vec<f64> = (0..ns + np)
                .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * PI)
                .collect();
            // Start measurements away from the identity, where C is flat at 1.
            for i in pp.weight_indices() {
                x0[ns + i] = LOGIT_LO + rng.random::<f64>() * (LOGIT_HI - LOGIT_LO);
            }
            let best = Bfgs {
                max_iter: 1000,
                ..Bfgs::default()
            }
            .minimize(objective, &x0);
            (-best.value, best.x)
        })
        .collect();
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by(|&a, &b| runs[b].0.total_cmp(&runs[a].0));
    let values: Vec<f64> = order.iter().map(|&i| runs[i].0).collect();
    let (value, x) = runs
        .get(order[0])
        .cloned()
        .ok_or_else(|| Error::Optimization("no restarts".into()))?;
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::Optimization("all restarts diverged".into()));
    }
    let top = opts.agreement_count.min(values.len());
    let agreed = values[top - 1] >= value - opts.agreement;
    let reached: Vec<usize> = order.iter().copied().filter(|&i| runs[i].0 >= value - 1e-6).collect();
    let collapsed = reached
        .iter()
        .filter(|&&i| {
            let x = &runs[i].1;
            collapses_to_rank_one(&sp.decode(&x[..ns]), &pp.decode(&x[ns..]), 1e-3)
        })
        .count();
    Ok(ThresholdResult {
        dim,
        k,
        m,
        value,
        state: sp.decode(&x[..ns]),
        povm: pp.decode(&x[ns..]),
        values,
        agreed,
        collapse_fraction: collapsed as f64 / reached.len() as f64,
    })
}

pub fn maximize_threshold(dim: usize, k: usize, m: usize, restarts: usize) -> Result<ThresholdResult> {
    maximize_threshold_with(
        dim,
        k,
        m,
        &ThresholdOptions {
            restarts,
            ..ThresholdOptions::default()
        },
    )
}
