//! Blue-sideband population probe and likelihood fits to measured data.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{basis_index, JointDensity, Qubit, C64};
use crate::ideal::{free_evolution_operator, sequence_unitary};
use crate::optim::Bfgs;
use crate::params::PhysicalParams;
use crate::pulse::{PulseSequence, Transition};
use crate::rng::{stream_id, stream_rng};
use crate::stats::ShotRecord;
use crate::thresholds::{softmax, subsets};

const P_FLOOR: f64 = 1e-12;
/// Log-likelihood difference below which two probe fits count as aliases.
const ALIAS_TOLERANCE: f64 = 0.5;

/// Excitation probability after a blue-sideband flop on pair `(g,n), (e,n+1)`
/// started in `|g,n⟩`.
fn flop(rabi: f64, detuning: f64, dephasing: f64, n: usize, t: f64) -> f64 {
    let coupling = rabi * ((n + 1) as f64).sqrt();
    let generalized = coupling.hypot(detuning);
    if generalized == 0.0 {
        return 0.0;
    }
    let amplitude = (coupling / generalized).powi(2);
    let decay = (-(dephasing * (n + 1) as f64 * t).powi(2)).exp();
    amplitude * 0.5 * (1.0 - decay * (2.0 * PI * generalized * t).cos())
}

/// Population model of the blue-sideband probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    /// Populations of `|g,n⟩`.
    pub populations: Vec<f64>,
    /// Populations of `|e,n⟩`.
    #[serde(default)]
    pub excited_populations: Vec<f64>,
    /// Sideband Rabi frequency ηΩ in Hz.
    pub sideband_rabi: f64,
    pub detuning: f64,
    /// Motional dephasing rate γ in Hz; level `n` decays at γ(n+1).
    pub dephasing: f64,
}

impl ProbeModel {
    pub fn excitation(&self, t: f64) -> f64 {
        let (r, d, g) = (self.sideband_rabi, self.detuning, self.dephasing);
        let mut p = 0.0;
        for (n, &pop) in self.populations.iter().enumerate() {
            p += pop * flop(r, d, g, n, t);
        }
        for (n, &pop) in self.excited_populations.iter().enumerate() {
            p += if n == 0 { pop } else { pop * (1.0 - flop(r, d, g, n - 1, t)) };
        }
        p.clamp(0.0, 1.0)
    }

    pub fn excitations(&self, times: &[f64]) -> Vec<f64> {
        times.iter().map(|&t| self.excitation(t)).collect()
    }
}

/// Excitation probability of a blue-sideband pulse of each length in `times`
/// (seconds), ignoring coherences between motional levels.
pub fn blue_sideband_probe(rho: &JointDensity, params: &PhysicalParams, times: &[f64]) -> Vec<f64> {
    let n = rho.truncation();
    let model = ProbeModel {
        populations: (0..=n).map(|k| rho.population(Qubit::Ground, k)).collect(),
        excited_populations: (0..=n).map(|k| rho.population(Qubit::Excited, k)).collect(),
        sideband_rabi: params.pair_rabi(Transition::BlueSideband),
        detuning: params.transition_detuning(Transition::BlueSideband),
        dephasing: params.motional_dephasing_rate,
    };
    model.excitations(times)
}

/// `Σ_j k_j ln p_j + (n - k_j) ln(1 - p_j)`, without the binomial coefficients.
pub fn binomial_log_likelihood(record: &ShotRecord, probabilities: &[f64]) -> f64 {
    let n = record.shots_per_point as f64;
    record
        .successes
        .iter()
        .zip(probabilities)
        .map(|(&k, &p)| {
            let p = p.clamp(P_FLOOR, 1.0 - P_FLOOR);
            let k = k as f64;
            k * p.ln() + (n - k) * (1.0 - p).ln()
        })
        .sum()
}

#[derive(Clone, Debug)]
pub struct ProbeFitConfig {
    /// Number of motional levels fitted.
    pub levels: usize,
    pub bootstrap: usize,
    pub seed: u64,
    /// Starting sideband Rabi frequency; estimated from the data when absent.
    pub rabi_guess: Option<f64>,
    pub starts: usize,
}

impl Default for ProbeFitConfig {
    fn default() -> Self {
        ProbeFitConfig {
            levels: 3,
            bootstrap: 1000,
            seed: 0,
            rabi_guess: None,
            starts: 8,
        }
    }
}

/// One-sigma bootstrap interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeBounds {
    pub populations: Vec<Interval>,
    pub sideband_rabi: Interval,
    pub detuning: Interval,
    pub dephasing: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeFit {
    pub populations: Vec<f64>,
    pub sideband_rabi: f64,
    pub detuning: f64,
    pub dephasing: f64,
    pub log_likelihood: f64,
    pub bounds: Option<ProbeBounds>,
}

impl ProbeFit {
    pub fn model(&self) -> ProbeModel {
        ProbeModel {
            populations: self.populations.clone(),
            excited_populations: Vec::new(),
            sideband_rabi: self.sideband_rabi,
            detuning: self.detuning,
            dephasing: self.dephasing,
        }
    }
}

struct ProbeProblem<'a> {
    times: &'a [f64],
    levels: usize,
    scale: f64,
}

impl ProbeProblem<'_> {
    // x = [population logits (levels - 1), ln rabi, detuning / scale, sqrt(dephasing / scale)]
    fn decode(&self, x: &[f64]) -> ProbeModel {
        let l = self.levels;
        let mut logits = vec![0.0];
        logits.extend_from_slice(&x[..l - 1]);
        ProbeModel {
            populations: softmax(&logits),
            excited_populations: Vec::new(),
            sideband_rabi: x[l - 1].exp(),
            detuning: self.scale * x[l],
            dephasing: self.scale * x[l + 1] * x[l + 1],
        }
    }

    fn nll(&self, record: &ShotRecord, x: &[f64]) -> f64 {
        if x.iter().any(|v| !v.is_finite()) || x[self.levels - 1].abs() > 50.0 {
            return f64::INFINITY;
        }
        -binomial_log_likelihood(record, &self.decode(x).excitations(self.times))
    }

    fn nll_gradient(&self, record: &ShotRecord, x: &[f64]) -> Vec<f64> {
        let l = self.levels;
        let m = self.decode(x);
        let (r, delta, gamma) = (m.sideband_rabi, m.detuning, m.dephasing);
        let shots = record.shots_per_point as f64;
        let mut grad = vec![0.0; x.len()];
        let mut df_dpop = vec![0.0; l];
        for (&t, &k) in self.times.iter().zip(&record.successes) {
            let (mut p, mut dr, mut dd, mut dg) = (0.0, 0.0, 0.0, 0.0);
            for (n, &pop) in m.populations.iter().enumerate() {
                let root = ((n + 1) as f64).sqrt();
                let c = r * root;
                let w = c.hypot(delta);
                let (a, ang) = ((c / w).powi(2), 2.0 * PI * w * t);
                let decay = (-(gamma * (n + 1) as f64 * t).powi(2)).exp();
                let (sin, cos) = ang.sin_cos();
                let base = 0.5 * (1.0 - decay * cos);
                let osc = 0.5 * a * decay * sin * 2.0 * PI * t / w;
                let w4 = w.powi(4);
                let f = a * base;
                df_dpop[n] = f;
                p += pop * f;
                dr += pop * root * (2.0 * c * delta * delta / w4 * base + osc * c);
                dd += pop * (-2.0 * c * c * delta / w4 * base + osc * delta);
                dg += pop * 0.5 * a * cos * decay * 2.0 * gamma * ((n + 1) as f64 * t).powi(2);
            }
            if p <= P_FLOOR || p >= 1.0 - P_FLOOR {
                continue;
            }
            let k = k as f64;
            let dnll_dp = -(k / p - (shots - k) / (1.0 - p));
            let mean_f: f64 = m.populations.iter().zip(&df_dpop).map(|(q, f)| q * f).sum();
            for j in 1..l {
                grad[j - 1] += dnll_dp * m.populations[j] * (df_dpop[j] - mean_f);
            }
            grad[l - 1] += dnll_dp * dr * r;
            grad[l] += dnll_dp * dd * self.scale;
            grad[l + 1] += dnll_dp * dg * 2.0 * self.scale * x[l + 1];
        }
        grad
    }

    fn fit_from(&self, record: &ShotRecord, x0: &[f64]) -> (Vec<f64>, f64) {
        let m = Bfgs {
            max_iter: 300,
            max_step: 0.1,
            grad_tol: 1e-4,
            ..Bfgs::default()
        }
        .minimize_with_gradient(|x| self.nll(record, x), |x| self.nll_gradient(record, x), x0);
        (m.x, m.value)
    }
}

/// Rabi frequency maximizing the likelihood of a single-level flop, on a
/// logarithmic grid spanning the sampled time window.
fn estimate_rabi(record: &ShotRecord) -> f64 {
    let times = &record.phases;
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let dt = times
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let lo = 0.25 / t_max;
    let hi = (0.5 / dt).max(2.0 * lo);
    let steps = 400;
    (0..steps)
        .map(|i| lo * (hi / lo).powf(i as f64 / (steps - 1) as f64))
        .map(|r| {
            let probs: Vec<f64> = times.iter().map(|&t| flop(r, 0.0, 0.0, 0, t)).collect();
            (r, binomial_log_likelihood(record, &probs))
        })
        .fold((lo, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
        .0
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

fn interval(mut values: Vec<f64>) -> Interval {
    values.sort_by(f64::total_cmp);
    Interval {
        lower: percentile(&values, 0.158_655_253_931_457),
        upper: percentile(&values, 0.841_344_746_068_543),
    }
}

/// Maximum-likelihood fit of the population model, with bootstrap intervals
/// when `cfg.bootstrap > 0`. The record's `phases` hold the pulse lengths in
/// seconds.
pub fn fit_probe(record: &ShotRecord, cfg: &ProbeFitConfig) -> Result<ProbeFit> {
    let levels = cfg.levels;
    if levels == 0 {
        return Err(Error::InvalidParameter("need at least one level".into()));
    }
    if record.phases.len() < 4 * (levels + 3) {
        return Err(Error::InvalidParameter(format!(
            "{} time points is too few for {} parameters",
            record.phases.len(),
            levels + 3
        )));
    }
    if record.phases.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidParameter("times must be finite and non-negative".into()));
    }
    let rabi0 = cfg.rabi_guess.unwrap_or_else(|| estimate_rabi(record));
    let problem = ProbeProblem {
        times: &record.phases,
        levels,
        scale: rabi0,
    };
    let mut rng = stream_rng(cfg.seed, stream_id(0, 0xF_FFFF));
    // A single level n at rate r/√(n+1) is indistinguishable from level 0 at
    // rate r, so starts cover the first few aliases of the guess.
    let factors = [1.0, 2f64.sqrt(), 3f64.sqrt(), 0.5f64.sqrt(), (1.0f64 / 3.0).sqrt()];
    let mut fits = Vec::new();
    for s in 0..cfg.starts.max(factors.len()) {
        let jitter = s >= factors.len();
        let mut x0: Vec<f64> = (0..levels - 1)
            .map(|_| if jitter { rng.random_range(-3.0..1.0) } else { -1.0 })
            .collect();
        let f = factors[s % factors.len()];
        x0.push((rabi0 * f).ln() + if jitter { rng.random_range(-0.05..0.05) } else { 0.0 });
        x0.push(if jitter { rng.random_range(-0.1..0.1) } else { 0.01 });
        x0.push(if jitter { rng.random_range(0.0..0.3) } else { 0.1 });
        fits.push(problem.fit_from(record, &x0));
    }
    let best_nll = fits.iter().map(|f| f.1).fold(f64::INFINITY, f64::min);
    let (x, nll) = fits
        .into_iter()
        .filter(|f| f.1 <= best_nll + ALIAS_TOLERANCE)
        .max_by(|a, b| a.0[levels - 1].total_cmp(&b.0[levels - 1]))
        .expect("at least one start");

    let total: u64 = record.successes.iter().sum();
    let mean = total as f64 / (record.shots_per_point as f64 * record.successes.len() as f64);
    let nll_flat = -binomial_log_likelihood(record, &vec![mean; record.successes.len()]);
    let df = (levels + 2) as f64;
    let statistic = 2.0 * (nll_flat - nll);
    if !(statistic > df + 4.0 * (2.0 * df).sqrt()) {
        return Err(Error::NonConvergent(format!(
            "no oscillation resolved: likelihood-ratio statistic {statistic:.3} against a flat model"
        )));
    }

    let model = problem.decode(&x);
    let bounds = if cfg.bootstrap > 0 {
        Some(bootstrap(record, &problem, &x, cfg)?)
    } else {
        None
    };
    Ok(ProbeFit {
        populations: model.populations,
        sideband_rabi: model.sideband_rabi,
        detuning: model.detuning.abs(),
        dephasing: model.dephasing,
        log_likelihood: -nll,
        bounds,
    })
}

fn bootstrap(record: &ShotRecord, problem: &ProbeProblem, x: &[f64], cfg: &ProbeFitConfig) -> Result<ProbeBounds> {
    let n = record.shots_per_point;
    let props = record.proportions();
    let fits = (0..cfg.bootstrap)
        .into_par_iter()
        .map(|b| {
            let successes = props
                .iter()
                .enumerate()
                .map(|(j, &p)| {
                    let dist = Binomial::new(n, p).map_err(|e| Error::InvalidParameter(e.to_string()))?;
                    Ok(dist.sample(&mut stream_rng(cfg.seed, stream_id(b as u64 + 1, j as u64))))
                })
                .collect::<Result<Vec<u64>>>()?;
            let resampled = ShotRecord::new(record.phases.clone(), successes, n)?;
            Ok(problem.decode(&problem.fit_from(&resampled, x).0))
        })
        .collect::<Result<Vec<ProbeModel>>>()?;
    Ok(ProbeBounds {
        populations: (0..problem.levels)
            .map(|l| interval(fits.iter().map(|m| m.populations[l]).collect()))
            .collect(),
        sideband_rabi: interval(fits.iter().map(|m| m.sideband_rabi).collect()),
        detuning: interval(fits.iter().map(|m| m.detuning.abs()).collect()),
        dephasing: interval(fits.iter().map(|m| m.dephasing).collect()),
    })
}

/// Ideal interference measurement: motional density matrix in, excitation
/// probability at each phase out.
#[derive(Clone, Debug)]
pub struct PatternOperators {
    /// `G_j = V_j† A V_j` restricted to `|g,n⟩`, `n < levels`.
    pub operators: Vec<DMatrix<C64>>,
}

impl PatternOperators {
    pub fn new(mapping: &PulseSequence, truncation: usize, measured: Qubit, phases: &[f64], levels: usize) -> Self {
        let um = sequence_unitary(mapping, truncation);
        let rows: Vec<usize> = (0..=truncation).map(|n| basis_index(truncation, measured, n)).collect();
        let operators = phases
            .iter()
            .map(|&phi| {
                let v = &um * free_evolution_operator(truncation, phi);
                DMatrix::from_fn(levels, levels, |m, n| {
                    rows.iter().map(|&r| v[(r, m)].conj() * v[(r, n)]).sum::<C64>()
                })
            })
            .collect();
        PatternOperators { operators }
    }

    pub fn probabilities(&self, rho: &DMatrix<C64>) -> Vec<f64> {
        self.operators
            .iter()
            .map(|g| (rho * g).trace().re.clamp(0.0, 1.0))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct FloorFit {
    pub k: usize,
    pub probabilities: Vec<f64>,
    pub log_likelihood: f64,
    /// Best motional density matrix over levels `0..populations.len()`.
    pub state: DMatrix<C64>,
}

/// Every level's population is split among the k-subsets containing it; each
/// subset carries one pure component with free relative phases.
struct FloorModel<'a> {
    populations: &'a [f64],
    subsets: Vec<Vec<usize>>,
    memberships: Vec<Vec<usize>>,
}

impl<'a> FloorModel<'a> {
    fn new(populations: &'a [f64], k: usize) -> Self {
        let occupied: Vec<usize> = (0..populations.len()).filter(|&n| populations[n] > 0.0).collect();
        let k = k.clamp(1, occupied.len().max(1));
        let subsets: Vec<Vec<usize>> = subsets(occupied.len(), k)
            .into_iter()
            .map(|s| s.into_iter().map(|i| occupied[i]).collect())
            .collect();
        let memberships = (0..populations.len())
            .map(|n| (0..subsets.len()).filter(|&s| subsets[s].contains(&n)).collect())
            .collect();
        FloorModel {
            populations,
            subsets,
            memberships,
        }
    }

    fn len(&self) -> usize {
        let splits: usize = self.memberships.iter().map(|m| m.len().saturating_sub(1)).sum();
        let phases: usize = self.subsets.iter().map(|s| s.len() - 1).sum();
        splits + phases
    }

    fn decode(&self, x: &[f64]) -> DMatrix<C64> {
        let d = self.populations.len();
        let mut share = vec![vec![0.0; d]; self.subsets.len()];
        let mut i = 0;
        for (n, members) in self.memberships.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let mut logits = vec![0.0];
            logits.extend_from_slice(&x[i..i + members.len() - 1]);
            i += members.len() - 1;
            for (&s, w) in members.iter().zip(softmax(&logits)) {
                share[s][n] = w * self.populations[n];
            }
        }
        let mut rho = DMatrix::zeros(d, d);
        for (s, levels) in self.subsets.iter().enumerate() {
            let mut psi = vec![C64::new(0.0, 0.0); d];
            for (j, &n) in levels.iter().enumerate() {
                let phase = if j == 0 {
                    0.0
                } else {
                    i += 1;
                    x[i - 1]
                };
                psi[n] = C64::from_polar(share[s][n].sqrt(), phase);
            }
            for a in 0..d {
                for b in 0..d {
                    rho[(a, b)] += psi[a] * psi[b].conj();
                }
            }
        }
        rho
    }
}

/// Most likely k-coherent pattern given known motional populations and a
/// fixed ideal mapping.
pub fn likelihood_floor_fit(
    record: &ShotRecord,
    k: usize,
    known_populations: &[f64],
    mapping: &PulseSequence,
    truncation: usize,
    measured: Qubit,
) -> Result<FloorFit> {
    if known_populations.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidParameter("populations must be non-negative".into()));
    }
    let sum: f64 = known_populations.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized(sum));
    }
    if known_populations.len() > truncation + 1 {
        return Err(Error::DimensionMismatch {
            expected: truncation + 1,
            found: known_populations.len(),
        });
    }
    let ops = PatternOperators::new(mapping, truncation, measured, &record.phases, known_populations.len());
    let model = FloorModel::new(known_populations, k);
    let nll = |x: &[f64]| -binomial_log_likelihood(record, &ops.probabilities(&model.decode(x)));
    let dim = model.len();
    let mut best = (vec![0.0; dim], nll(&vec![0.0; dim]));
    if dim > 0 {
        let mut rng = stream_rng(0, stream_id(k as u64, 0xF_FFFE));
        for _ in 0..16 {
            let x0: Vec<f64> = (0..dim).map(|_| rng.random_range(-PI..PI)).collect();
            let m = Bfgs::default().minimize(nll, &x0);
            if m.value < best.1 {
                best = (m.x, m.value);
            }
        }
    }
    let state = model.decode(&best.0);
    Ok(FloorFit {
        k,
        probabilities: ops.probabilities(&state),
        log_likelihood: -best.1,
        state,
    })
}
