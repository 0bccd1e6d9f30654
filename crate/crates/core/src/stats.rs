//! Finite-shot estimation of the certifier: naive ratio estimator, its
//! second- and third-order bias correction and delta-method uncertainty.

use std::io::{Read, Write};

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certifier::{certify, InterferencePattern};
use crate::error::{Error, Result};
use crate::rng::{stream_id, stream_rng};

/// Binomial counts at each phase point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub phases: Vec<f64>,
    pub successes: Vec<u64>,
    pub shots_per_point: u64,
}

impl ShotRecord {
    pub fn new(phases: Vec<f64>, successes: Vec<u64>, shots_per_point: u64) -> Result<Self> {
        if phases.len() != successes.len() {
            return Err(Error::DimensionMismatch {
                expected: phases.len(),
                found: successes.len(),
            });
        }
        if shots_per_point < 3 {
            return Err(Error::InvalidParameter("need at least 3 shots per point".into()));
        }
        if successes.iter().any(|&s| s > shots_per_point) {
            return Err(Error::InvalidParameter("more successes than shots".into()));
        }
        Ok(ShotRecord {
            phases,
            successes,
            shots_per_point,
        })
    }

    pub fn proportions(&self) -> Vec<f64> {
        let n = self.shots_per_point as f64;
        self.successes.iter().map(|&s| s as f64 / n).collect()
    }

    /// Draws `shots` Bernoulli trials at each probability of `pattern`.
    pub fn sample(pattern: &InterferencePattern, shots: u64, seed: u64, run: u64) -> Result<Self> {
        let successes = pattern
            .probabilities
            .iter()
            .enumerate()
            .map(|(j, &p)| draw_binomial(shots, p, seed, stream_id(run, j as u64)))
            .collect::<Result<Vec<u64>>>()?;
        Self::new(pattern.phases.clone(), successes, shots)
    }

    /// Three columns: the abscissa (named `x_label`), successes and shots.
    pub fn write_csv<W: Write>(&self, w: W, x_label: &str) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([x_label, "successes", "shots"])?;
        for (x, k) in self.phases.iter().zip(&self.successes) {
            wtr.write_record([format!("{x:.12e}"), k.to_string(), self.shots_per_point.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the format of [`ShotRecord::write_csv`]; extra columns are ignored.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let (mut xs, mut ks, mut shots) = (Vec::new(), Vec::new(), None);
        for row in rdr.records() {
            let row = row?;
            let field = |i: usize| {
                row.get(i)
                    .ok_or_else(|| Error::InvalidParameter(format!("row has no column {i}")))
                    .map(str::trim)
            };
            let bad = |what: &str, v: &str| Error::InvalidParameter(format!("bad {what} value {v:?}"));
            xs.push(field(0)?.parse::<f64>().map_err(|_| bad("abscissa", field(0).unwrap_or("")))?);
            ks.push(field(1)?.parse::<u64>().map_err(|_| bad("successes", field(1).unwrap_or("")))?);
            let n = field(2)?.parse::<u64>().map_err(|_| bad("shots", field(2).unwrap_or("")))?;
            match shots {
                None => shots = Some(n),
                Some(m) if m != n => {
                    return Err(Error::InvalidParameter("shots must be equal at every point".into()));
                }
                _ => {}
            }
        }
        let shots = shots.ok_or_else(|| Error::InvalidParameter("empty record".into()))?;
        Self::new(xs, ks, shots)
    }
}

pub(crate) fn draw_binomial(n: u64, p: f64, seed: u64, stream: u64) -> Result<u64> {
    let dist = Binomial::new(n, p.clamp(0.0, 1.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(dist.sample(&mut stream_rng(seed, stream)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifierResult {
    pub c_naive: f64,
    pub c_unbiased: f64,
    pub sigma: f64,
    pub certified_level: usize,
}

/// Unbiased estimates of the variance and third central moment of a
/// binomial proportion `p` measured with `n` shots.
pub fn central_moment_estimators(p: f64, n: u64) -> Result<(f64, f64)> {
    if n < 3 {
        return Err(Error::InvalidParameter("need at least 3 shots".into()));
    }
    let n = n as f64;
    let q = p * (1.0 - p);
    Ok((q / (n - 1.0), q * (1.0 - 2.0 * p) / ((n - 1.0) * (n - 2.0))))
}

fn check_weights(record: &ShotRecord, weights: &[f64]) -> Result<()> {
    if weights.len() != record.successes.len() {
        return Err(Error::DimensionMismatch {
            expected: record.successes.len(),
            found: weights.len(),
        });
    }
    Ok(())
}

fn raw_moments(p: &[f64], w: &[f64]) -> Result<(f64, f64)> {
    let m1: f64 = w.iter().zip(p).map(|(w, p)| w * p).sum();
    let m3: f64 = w.iter().zip(p).map(|(w, p)| w * p * p * p).sum();
    if m1 <= 0.0 {
        return Err(Error::ZeroFirstMoment);
    }
    Ok((m1, m3))
}

/// `Σ w p³ / (Σ w p)²` of the observed proportions.
pub fn naive_c(record: &ShotRecord, weights: &[f64]) -> Result<f64> {
    check_weights(record, weights)?;
    let (m1, m3) = raw_moments(&record.proportions(), weights)?;
    Ok(m3 / (m1 * m1))
}

/// Second- and third-order coefficients of the Taylor expansion of the
/// ratio estimator at one point, with their partial derivatives with
/// respect to the point's proportion and the two moments.
#[derive(Clone, Copy, Debug)]
struct Coefficient {
    value: f64,
    d_p: f64,
    d_m1: f64,
    d_m3: f64,
}

fn second_order(w: f64, p: f64, m1: f64, m3: f64) -> Coefficient {
    let (m1_2, m1_3, m1_4, m1_5) = (m1 * m1, m1.powi(3), m1.powi(4), m1.powi(5));
    Coefficient {
        value: 3.0 * w * p / m1_2 - 6.0 * w * w * p * p / m1_3 + 3.0 * w * w * m3 / m1_4,
        d_p: 3.0 * w / m1_2 - 12.0 * w * w * p / m1_3,
        d_m1: -6.0 * w * p / m1_3 + 18.0 * w * w * p * p / m1_4 - 12.0 * w * w * m3 / m1_5,
        d_m3: 3.0 * w * w / m1_4,
    }
}

fn third_order(w: f64, p: f64, m1: f64, m3: f64) -> Coefficient {
    let (w2, w3) = (w * w, w * w * w);
    Coefficient {
        value: w / m1.powi(2) - 6.0 * w2 * p / m1.powi(3) + 9.0 * w3 * p * p / m1.powi(4)
            - 4.0 * w3 * m3 / m1.powi(5),
        d_p: -6.0 * w2 / m1.powi(3) + 18.0 * w3 * p / m1.powi(4),
        d_m1: -2.0 * w / m1.powi(3) + 18.0 * w2 * p / m1.powi(4) - 36.0 * w3 * p * p / m1.powi(5)
            + 20.0 * w3 * m3 / m1.powi(6),
        d_m3: -4.0 * w3 / m1.powi(5),
    }
}

/// Per-point bias terms `(z2, z3)`: the second- and third-order Taylor
/// terms of the ratio estimator, weighted by the estimated variance and
/// third central moment of each proportion.
pub fn bias_terms(record: &ShotRecord, weights: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_weights(record, weights)?;
    let p = record.proportions();
    let (m1, m3) = raw_moments(&p, weights)?;
    let mut z2 = Vec::with_capacity(p.len());
    let mut z3 = Vec::with_capacity(p.len());
    for (&pk, &wk) in p.iter().zip(weights) {
        let (s, k) = central_moment_estimators(pk, record.shots_per_point)?;
        z2.push(second_order(wk, pk, m1, m3).value * s);
        z3.push(third_order(wk, pk, m1, m3).value * k);
    }
    Ok((z2, z3))
}

/// Bias-corrected estimate as a function of the proportions.
pub fn corrected_estimate(p: &[f64], weights: &[f64], n: u64) -> Result<f64> {
    let (m1, m3) = raw_moments(p, weights)?;
    let mut c = m3 / (m1 * m1);
    for (&pk, &wk) in p.iter().zip(weights) {
        let (s, k) = central_moment_estimators(pk, n)?;
        c -= second_order(wk, pk, m1, m3).value * s + third_order(wk, pk, m1, m3).value * k;
    }
    Ok(c)
}

/// Gradient of [`corrected_estimate`] with respect to the proportions.
pub fn corrected_gradient(p: &[f64], weights: &[f64], n: u64) -> Result<Vec<f64>> {
    let (m1, m3) = raw_moments(p, weights)?;
    let nf = n as f64;
    let mut a1 = 0.0;
    let mut a3 = 0.0;
    let mut local = Vec::with_capacity(p.len());
    for (&pk, &wk) in p.iter().zip(weights) {
        let (s, k) = central_moment_estimators(pk, n)?;
        let ds = (1.0 - 2.0 * pk) / (nf - 1.0);
        let dk = (1.0 - 6.0 * pk + 6.0 * pk * pk) / ((nf - 1.0) * (nf - 2.0));
        let g2 = second_order(wk, pk, m1, m3);
        let g3 = third_order(wk, pk, m1, m3);
        a1 += g2.d_m1 * s + g3.d_m1 * k;
        a3 += g2.d_m3 * s + g3.d_m3 * k;
        local.push(g2.d_p * s + g2.value * ds + g3.d_p * k + g3.value * dk);
    }
    Ok(p
        .iter()
        .zip(weights)
        .zip(local)
        .map(|((&pj, &wj), lj)| {
            let naive = 3.0 * wj * pj * pj / (m1 * m1) - 2.0 * m3 * wj / m1.powi(3);
            naive - (wj * a1 + 3.0 * wj * pj * pj * a3 + lj)
        })
        .collect())
}

/// Delta-method variance of the bias-corrected estimator.
pub fn variance_c(record: &ShotRecord, weights: &[f64]) -> Result<f64> {
    check_weights(record, weights)?;
    let p = record.proportions();
    let grad = corrected_gradient(&p, weights, record.shots_per_point)?;
    let mut var = 0.0;
    for (g, &pj) in grad.iter().zip(&p) {
        var += g * g * central_moment_estimators(pj, record.shots_per_point)?.0;
    }
    Ok(var.max(0.0))
}

/// Naive and corrected estimates with the standard error, certified at one
/// standard deviation.
pub fn unbiased_c(record: &ShotRecord, weights: &[f64]) -> Result<CertifierResult> {
    unbiased_c_with_z(record, weights, 1.0)
}

pub fn unbiased_c_with_z(record: &ShotRecord, weights: &[f64], z: f64) -> Result<CertifierResult> {
    let c_naive = naive_c(record, weights)?;
    let (z2, z3) = bias_terms(record, weights)?;
    let c_unbiased = c_naive - z2.iter().sum::<f64>() - z3.iter().sum::<f64>();
    let sigma = variance_c(record, weights)?.sqrt();
    Ok(CertifierResult {
        c_naive,
        c_unbiased,
        sigma,
        certified_level: certify(c_unbiased, sigma, z),
    })
}

/// Estimates from repeated simulated experiments.
#[derive(Clone, Debug, Default)]
pub struct MonteCarloSamples {
    pub naive: Vec<f64>,
    pub unbiased: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Runs whose counts were all zero.
    pub failed: usize,
}

/// Mean, standard deviation, standard error of the mean and sample skewness.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub standard_error: f64,
    pub skewness: f64,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let third = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let std = var.sqrt();
    Summary {
        mean,
        std,
        standard_error: std / n.sqrt(),
        skewness: third / std.powi(3),
    }
}

/// Simulates `runs` experiments of `shots` shots per point at the true
/// probabilities of `pattern`. Each `(run, point)` pair has its own
/// random stream.
pub fn monte_carlo(pattern: &InterferencePattern, shots: u64, runs: usize, seed: u64) -> Result<MonteCarloSamples> {
    let results: Vec<Option<CertifierResult>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let record = ShotRecord::sample(pattern, shots, seed, r as u64)?;
            match unbiased_c(&record, &pattern.weights) {
                Ok(res) => Ok(Some(res)),
                Err(Error::ZeroFirstMoment) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut out = MonteCarloSamples::default();
    for r in results {
        match r {
            Some(r) => {
                out.naive.push(r.c_naive);
                out.unbiased.push(r.c_unbiased);
                out.sigma.push(r.sigma);
            }
            None => out.failed += 1,
        }
    }
    Ok(out)
}

/// Binned densities of both estimators.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_centers: Vec<f64>,
    pub density_naive: Vec<f64>,
    pub density_unbiased: Vec<f64>,
}

impl Histogram {
    pub fn new(naive: &[f64], unbiased: &[f64], bins: usize) -> Self {
        let lo = naive.iter().chain(unbiased).cloned().fold(f64::INFINITY, f64::min);
        let hi = naive.iter().chain(unbiased).cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
        let density = |values: &[f64]| {
            let mut counts = vec![0.0; bins];
            for v in values {
                let b = (((v - lo) / width) as usize).min(bins - 1);
                counts[b] += 1.0;
            }
            counts.iter().map(|c| c / (values.len() as f64 * width)).collect()
        };
        Histogram {
            bin_centers: (0..bins).map(|b| lo + (b as f64 + 0.5) * width).collect(),
            density_naive: density(naive),
            density_unbiased: density(unbiased),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["bin_center", "density_naive", "density_unbiased"])?;
        for i in 0..self.bin_centers.len() {
            out.write_record(&[
                format!("{:.10}", self.bin_centers[i]),
                format!("{:.10}", self.density_naive[i]),
                format!("{:.10}", self.density_unbiased[i]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn monte_carlo_pdf(
    pattern: &InterferencePattern,
    shots: u64,
    runs: usize,
    seed: u64,
    bins: usize,
) -> Result<(Histogram, MonteCarloSamples)> {
    if runs < 10_000 {
        return Err(Error::InvalidParameter("need at least 10^4 runs".into()));
    }
    let samples = monte_carlo(pattern, shots, runs, seed)?;
    Ok((Histogram::new(&samples.naive, &samples.unbiased, bins), samples))
}

#[cfg(test)]
mod tests {
    #[test]
    fn record_csv_round_trips() {
        let rec = ShotRecord::new(vec![0.0, 1.5, 3.25], vec![1, 7, 9], 10).unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf, "phase_rad").unwrap();
        assert_eq!(ShotRecord::read_csv(buf.as_slice()).unwrap(), rec);
        let mixed = "x,successes,shots\n0,1,10\n1,2,11\n";
        assert!(ShotRecord::read_csv(mixed.as_bytes()).is_err());
    }

    use super::*;
    use crate::certifier::{certifier_value, trapezium_weights};

    fn three_state_pattern(points: usize) -> InterferencePattern {
        InterferencePattern::from_fn(points, |x| (3.0 + 4.0 * x.cos() + 2.0 * (2.0 * x).cos()) / 9.0).unwrap()
    }

    fn record_from(p: &[f64], n: u64) -> ShotRecord {
        let successes = p.iter().map(|v| (v * n as f64).round() as u64).collect();
        ShotRecord::new(vec![0.0; p.len()], successes, n).unwrap()
    }

    #[test]
    fn estimator_edge_cases() {
        assert_eq!(central_moment_estimators(0.0, 10).unwrap(), (0.0, 0.0));
        assert_eq!(central_moment_estimators(1.0, 10).unwrap(), (0.0, 0.0));
        let (v, k) = central_moment_estimators(0.5, 101).unwrap();
        assert!((v - 1.0 / 400.0).abs() < 1e-15 && k == 0.0);
        assert!(central_moment_estimators(0.5, 2).is_err());
    }

    #[test]
    fn estimators_are_unbiased_for_binomial_moments() {
        let (p, n, runs) = (0.3, 100u64, 40_000usize);
        let mut vs = Vec::new();
        let mut ks = Vec::new();
        for r in 0..runs {
            let x = draw_binomial(n, p, 11, r as u64).unwrap() as f64 / n as f64;
            let (v, k) = central_moment_estimators(x, n).unwrap();
            vs.push(v);
            ks.push(k);
        }
        let nf = n as f64;
        let (true_v, true_k) = (p * (1.0 - p) / nf, p * (1.0 - p) * (1.0 - 2.0 * p) / (nf * nf));
        let (sv, sk) = (summarize(&vs), summarize(&ks));
        assert!((sv.mean - true_v).abs() < 3.0 * sv.standard_error);
        assert!((sk.mean - true_k).abs() < 3.0 * sk.standard_error);
    }

    #[test]
    fn naive_matches_certifier_for_exact_counts() {
        let pat = InterferencePattern::from_fn(5, |x| 0.5 * (1.0 + x.cos())).unwrap();
        let record = record_from(&pat.probabilities, 1 << 20);
        let c = naive_c(&record, &pat.weights).unwrap();
        assert!((c - certifier_value(&pat).unwrap()).abs() < 1e-5);
        let flat = record_from(&[0.4; 7], 1000);
        assert!((naive_c(&flat, &trapezium_weights(7)).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn zero_counts_are_rejected() {
        let r = ShotRecord::new(vec![0.0; 3], vec![0; 3], 10).unwrap();
        assert!(matches!(naive_c(&r, &trapezium_weights(3)), Err(Error::ZeroFirstMoment)));
    }

    /// Central finite-difference derivatives of the ratio estimator.
    fn ratio(p: &[f64], w: &[f64]) -> f64 {
        let m1: f64 = p.iter().zip(w).map(|(a, b)| a * b).sum();
        let m3: f64 = p.iter().zip(w).map(|(a, b)| a * a * a * b).sum();
        m3 / (m1 * m1)
    }

    fn fd_derivatives(p: &[f64], w: &[f64], k: usize) -> (f64, f64) {
        let h = 1e-3;
        let at = |d: f64| {
            let mut q = p.to_vec();
            q[k] += d;
            ratio(&q, w)
        };
        let second = (at(h) - 2.0 * at(0.0) + at(-h)) / (h * h);
        let third = (at(2.0 * h) - 2.0 * at(h) + 2.0 * at(-h) - at(-2.0 * h)) / (2.0 * h.powi(3));
        (second, third)
    }

    #[test]
    fn bias_terms_match_numerical_expansion() {
        let w = [0.25, 0.5, 0.25];
        let record = ShotRecord::new(vec![0.0; 3], vec![23, 61, 88], 100).unwrap();
        let p = record.proportions();
        let (z2, z3) = bias_terms(&record, &w).unwrap();
        for k in 0..3 {
            let (f2, f3) = fd_derivatives(&p, &w, k);
            let (s, kappa) = central_moment_estimators(p[k], 100).unwrap();
            assert!((z2[k] - 0.5 * f2 * s).abs() < 1e-8, "z2[{k}]");
            assert!((z3[k] - f3 * kappa / 6.0).abs() < 1e-8, "z3[{k}]");
        }
    }

    #[test]
    fn symmetric_points_have_no_third_order_term() {
        let record = ShotRecord::new(vec![0.0; 3], vec![50, 50, 80], 100).unwrap();
        let (_, z3) = bias_terms(&record, &[0.25, 0.5, 0.25]).unwrap();
        assert_eq!(z3[0], 0.0);
        assert_eq!(z3[1], 0.0);
        assert!(z3[2] != 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let w = trapezium_weights(7);
        let p = [0.9, 0.62, 0.31, 0.12, 0.27, 0.55, 0.88];
        let n = 100;
        let g = corrected_gradient(&p, &w, n).unwrap();
        for j in 0..p.len() {
            let h = 1e-6;
            let mut up = p.to_vec();
            up[j] += h;
            let mut down = p.to_vec();
            down[j] -= h;
            let fd = (corrected_estimate(&up, &w, n).unwrap() - corrected_estimate(&down, &w, n).unwrap()) / (2.0 * h);
            assert!((g[j] - fd).abs() < 1e-7 * (1.0 + fd.abs()), "j={j}: {} vs {fd}", g[j]);
        }
    }

    #[test]
    fn single_point_reduces_to_binomial_proportion() {
        let record = ShotRecord::new(vec![0.0], vec![37], 80).unwrap();
        let res = unbiased_c(&record, &[1.0]).unwrap();
        let p = 37.0 / 80.0;
        assert!((res.c_unbiased - p).abs() < 1e-12);
        assert!((res.sigma.powi(2) - p * (1.0 - p) / 79.0).abs() < 1e-12);
    }

    #[test]
    fn equal_points_match_hand_derivation() {
        let j = 9usize;
        let w = 1.0 / j as f64;
        let weights = vec![w; j];
        let (p, n) = (0.35, 50u64);
        let record = record_from(&vec![p; j], n);
        let p = record.proportions()[0];
        let nf = n as f64;
        let s = p * (1.0 - p) / (nf - 1.0);
        let k = p * (1.0 - p) * (1.0 - 2.0 * p) / ((nf - 1.0) * (nf - 2.0));
        let ds = (1.0 - 2.0 * p) / (nf - 1.0);
        let dk = (1.0 - 6.0 * p + 6.0 * p * p) / ((nf - 1.0) * (nf - 2.0));
        let g2 = 3.0 * w * (1.0 - w) / p;
        let g3 = w * (1.0 - w) * (1.0 - 5.0 * w) / (p * p);
        let a1 = -6.0 * (1.0 - w) * s / (p * p) - 2.0 * (1.0 - w) * (1.0 - 8.0 * w) * k / p.powi(3);
        let a3 = 3.0 * w * s / p.powi(4) - 4.0 * w * w * k / p.powi(5);
        let d = w
            - (w * a1 + 3.0 * w * p * p * a3 + 3.0 * w * (1.0 - 4.0 * w) * s / (p * p) + g2 * ds
                - 6.0 * w * w * (1.0 - 3.0 * w) * k / p.powi(3)
                + g3 * dk);
        let res = unbiased_c(&record, &weights).unwrap();
        assert!((res.sigma.powi(2) - d * d * s / w).abs() < 1e-14);
        assert!((res.c_unbiased - (p - j as f64 * (g2 * s + g3 * k))).abs() < 1e-13);
    }

    #[test]
    fn zero_variance_record_is_unchanged() {
        let record = ShotRecord::new(vec![0.0; 3], vec![0, 20, 20], 20).unwrap();
        let res = unbiased_c(&record, &[0.25, 0.5, 0.25]).unwrap();
        assert_eq!(res.c_naive, res.c_unbiased);
        assert_eq!(res.sigma, 0.0);
    }

    #[test]
    fn sigma_vanishes_with_many_shots() {
        let pat = three_state_pattern(31);
        let sigmas: Vec<f64> = [100u64, 10_000, 1_000_000]
            .iter()
            .map(|&n| unbiased_c(&record_from(&pat.probabilities, n), &pat.weights).unwrap().sigma)
            .collect();
        assert!(sigmas[1] < sigmas[0] / 5.0 && sigmas[2] < sigmas[1] / 5.0);
    }

    #[test]
    fn bias_vanishes_with_many_shots() {
        let pat = three_state_pattern(31);
        let (z2, z3) = bias_terms(&record_from(&pat.probabilities, 100_000_000), &pat.weights).unwrap();
        assert!(z2.iter().chain(&z3).all(|z| z.abs() < 1e-8));
    }

    #[test]
    fn monte_carlo_is_seed_repeatable() {
        let pat = three_state_pattern(31);
        let a = monte_carlo_pdf(&pat, 100, 10_000, 5, 40).unwrap().0;
        let b = monte_carlo_pdf(&pat, 100, 10_000, 5, 40).unwrap().0;
        assert_eq!(a, b);
        assert!(monte_carlo_pdf(&pat, 100, 100, 5, 40).is_err());
    }

    #[test]
    fn sigma_scales_inversely_with_shots() {
        let pat = three_state_pattern(31);
        let v100 = variance_c(&record_from(&pat.probabilities, 100), &pat.weights).unwrap();
        let v400 = variance_c(&record_from(&pat.probabilities, 400), &pat.weights).unwrap();
        let ratio = v100 / v400;
        assert!((ratio / 4.0 - 1.0).abs() < 0.15, "{ratio}");
    }

    #[test]
    fn estimators_are_permutation_equivariant() {
        let w = [0.1, 0.3, 0.4, 0.2];
        let r = ShotRecord::new(vec![0.0; 4], vec![10, 40, 70, 90], 100).unwrap();
        let perm = [2usize, 0, 3, 1];
        let rp = ShotRecord::new(vec![0.0; 4], perm.iter().map(|&i| r.successes[i]).collect(), 100).unwrap();
        let wp: Vec<f64> = perm.iter().map(|&i| w[i]).collect();
        let (a, b) = (unbiased_c(&r, &w).unwrap(), unbiased_c(&rp, &wp).unwrap());
        assert!((a.c_unbiased - b.c_unbiased).abs() < 1e-14);
        assert!((a.sigma - b.sigma).abs() < 1e-14);
        let (z2, _) = bias_terms(&r, &w).unwrap();
        let (z2p, _) = bias_terms(&rp, &wp).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert!((z2p[k] - z2[i]).abs() < 1e-15);
        }
    }
}
