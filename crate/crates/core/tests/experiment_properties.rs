use coherence_core::certifier::{phase_grid, sample_pattern, PovmElement};
use coherence_core::experiment::{detuning_sweep, expected_pattern, sample_rasters, simulate, write_record_csv, ExperimentConfig};
use coherence_core::fixtures::TableFixture;
use coherence_core::hilbert::{JointDensity, Qubit};
use coherence_core::probe::{binomial_log_likelihood, fit_probe, likelihood_floor_fit, ProbeFitConfig, ProbeModel};
use coherence_core::rng::stream_rng;
use coherence_core::stats::ShotRecord;
use rand_distr::{Binomial, Distribution};

fn table1() -> ExperimentConfig {
    ExperimentConfig::from_fixture(&TableFixture::builtin("table1").unwrap()).unwrap()
}

fn csv_bytes(cfg: &ExperimentConfig) -> Vec<u8> {
    let mut out = Vec::new();
    write_record_csv(&simulate(cfg).unwrap(), &mut out).unwrap();
    out
}

#[test]
fn pipeline_is_byte_reproducible() {
    let mut cfg = table1();
    cfg.seed = 1234;
    let a = csv_bytes(&cfg);
    assert_eq!(a, csv_bytes(&cfg));
    cfg.noise = "carrier".parse().unwrap();
    cfg.n_points = 9;
    assert_eq!(csv_bytes(&cfg), csv_bytes(&cfg));
}

#[test]
fn raster_order_leaves_expected_pattern_unchanged() {
    let mut cfg = table1();
    cfg.shots_per_point = 402;
    let pattern = expected_pattern(&cfg).unwrap();
    let seeds = 1000;
    let mut sums = vec![0.0; pattern.len()];
    for seed in 0..seeds {
        cfg.seed = seed;
        let (record, _) = sample_rasters(&cfg, &pattern).unwrap();
        for (s, p) in sums.iter_mut().zip(record.proportions()) {
            *s += p;
        }
    }
    let total = (seeds * cfg.shots_per_point) as f64;
    for (j, (s, p)) in sums.iter().zip(&pattern.probabilities).enumerate() {
        let mean = s / seeds as f64;
        let se = (p * (1.0 - p) / total).sqrt().max(1e-12);
        assert!((mean - p).abs() <= 3.0 * se, "point {j}: {mean} vs {p}");
    }
}

#[test]
fn ideal_experiment_certifies_three_coherence() {
    let cfg = table1();
    let out = simulate(&cfg).unwrap();
    let exact = coherence_core::certifier::certifier_value(&out.pattern).unwrap();
    assert!((out.result.c_unbiased - exact).abs() <= 3.0 * out.result.sigma);
}

#[test]
fn detuning_lowers_certifier_near_resonance() {
    let sweep = detuning_sweep(&table1(), &[0.0, 100.0, 200.0, 400.0]).unwrap();
    for w in sweep.windows(2) {
        assert!(w[1].certifier < w[0].certifier, "{sweep:?}");
    }
}

fn probe_record(truth: &ProbeModel, times: &[f64], shots: u64, seed: u64) -> ShotRecord {
    let successes = truth
        .excitations(times)
        .iter()
        .enumerate()
        .map(|(j, &p)| Binomial::new(shots, p).unwrap().sample(&mut stream_rng(seed, j as u64)))
        .collect();
    ShotRecord::new(times.to_vec(), successes, shots).unwrap()
}

#[test]
fn probe_bootstrap_intervals_have_nominal_coverage() {
    let truth = ProbeModel {
        populations: vec![0.6, 0.4],
        excited_populations: Vec::new(),
        sideband_rabi: 8100.0,
        detuning: 0.0,
        dephasing: 300.0,
    };
    let times: Vec<f64> = (0..40).map(|i| 4e-4 * i as f64 / 39.0).collect();
    let trials = 200;
    let mut covered = 0;
    for seed in 0..trials {
        let record = probe_record(&truth, &times, 100, 1000 + seed);
        let cfg = ProbeFitConfig {
            levels: 2,
            bootstrap: 100,
            seed,
            starts: 5,
            rabi_guess: Some(8000.0),
        };
        let fit = fit_probe(&record, &cfg).unwrap();
        if fit.bounds.unwrap().populations[0].contains(0.6) {
            covered += 1;
        }
    }
    let rate = covered as f64 / trials as f64;
    assert!((0.60..=0.75).contains(&rate), "coverage {rate}");
}

fn floor_setup(fixture: &str, shots: u64, seed: u64) -> (ShotRecord, Vec<f64>, TableFixture, Vec<f64>) {
    let f = TableFixture::builtin(fixture).unwrap();
    let target = f.target_state().unwrap();
    let rho = JointDensity::from_pure(&target.joint(f.truncation).unwrap());
    let pattern = sample_pattern(&rho, &f.mapping, &PovmElement::excited(f.truncation), 31).unwrap();
    let successes = pattern
        .probabilities
        .iter()
        .enumerate()
        .map(|(j, &p)| Binomial::new(shots, p).unwrap().sample(&mut stream_rng(seed, j as u64)))
        .collect();
    let record = ShotRecord::new(phase_grid(31), successes, shots).unwrap();
    let pops = target.amplitudes().iter().map(|a| a.norm_sqr()).collect();
    (record, pops, f, pattern.probabilities)
}

#[test]
fn floor_fit_reaches_generator_likelihood() {
    let (record, pops, f, truth) = floor_setup("table1", 400, 5);
    let fit = likelihood_floor_fit(&record, 3, &pops, &f.mapping, f.truncation, Qubit::Excited).unwrap();
    let generator = binomial_log_likelihood(&record, &truth);
    assert!(fit.log_likelihood >= generator - 1e-6, "{} < {generator}", fit.log_likelihood);
    assert!(fit.log_likelihood - generator < 5.0, "{} vs {generator}", fit.log_likelihood);
}

#[test]
fn four_coherent_data_prefers_four_coherent_fit() {
    let (record, pops, f, _) = floor_setup("table3", 400, 6);
    let four = likelihood_floor_fit(&record, 4, &pops, &f.mapping, f.truncation, Qubit::Excited).unwrap();
    let three = likelihood_floor_fit(&record, 3, &pops, &f.mapping, f.truncation, Qubit::Excited).unwrap();
    assert!(four.log_likelihood - three.log_likelihood > 0.0);
    let one = likelihood_floor_fit(&record, 1, &pops, &f.mapping, f.truncation, Qubit::Excited).unwrap();
    assert!(three.log_likelihood > one.log_likelihood);
}
