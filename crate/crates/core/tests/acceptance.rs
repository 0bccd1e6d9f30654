//! Acceptance suite. Run with `cargo test -p coherence-core --test acceptance`.
//! Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use coherence_core::certifier::{
    certifier_value, exact_points, moment, naive_mapping_benchmark, phase_grid, sample_pattern, InterferencePattern,
    PovmElement,
};
use coherence_core::experiment::{detuning_sweep, expected_pattern, ExperimentConfig, NoiseMode};
use coherence_core::hilbert::{JointDensity, JointState, C64};
use coherence_core::ideal::{apply_sequence, free_evolution, sequence_unitary};
use coherence_core::probe::{fit_probe, ProbeFitConfig, ProbeModel};
use coherence_core::pulse::{Pulse, PulseSequence, Transition};
use coherence_core::rng::stream_rng;
use coherence_core::stats::{monte_carlo, summarize, ShotRecord};
use coherence_core::synthesis::{
    build_mapping_spec, find_mapping, mapping_error, synthesize_creation, MappingOptions, TargetState,
};
use coherence_core::thresholds::{
    certifier_of, decode_povm, decode_state, maximize_threshold_with, KCoherentParametrization, PovmParametrization,
    ThresholdOptions,
};
use rand::Rng;
use rand_distr::{Binomial, Distribution};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn all(parts: Vec<Outcome>) -> Outcome {
    let pass = parts.iter().all(|p| p.pass);
    let detail = parts
        .iter()
        .map(|p| format!("[{}] {}", if p.pass { "ok" } else { "FAIL" }, p.detail))
        .collect::<Vec<_>>()
        .join("; ");
    check(pass, detail)
}

fn within_time(elapsed: Duration, limit: Duration) -> Outcome {
    check(elapsed < limit, format!("runtime {:.2?} (limit {:.0?})", elapsed, limit))
}

fn ideal_pattern(target: &TargetState, mapping: &PulseSequence, points: usize) -> InterferencePattern {
    let t = target.default_truncation();
    let rho = JointDensity::from_pure(&target.joint(t).unwrap());
    sample_pattern(&rho, mapping, &PovmElement::excited(t), points).unwrap()
}

fn quick_mapping(target: &TargetState) -> PulseSequence {
    let opts = MappingOptions {
        restarts: 8,
        ..Default::default()
    };
    find_mapping(&build_mapping_spec(target), &opts).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for (levels, expected, label) in [(vec![0, 1], 1.25, "5/4"), (vec![0, 1, 2], 47.0 / 27.0, "47/27")] {
        let target = TargetState::equal(&levels);
        let mapping = quick_mapping(&target);
        let c = certifier_value(&ideal_pattern(&target, &mapping, exact_points(target.n_max()))).unwrap();
        parts.push(check((c - expected).abs() < 1e-9, format!("d={} C={c:.12} vs {label}", levels.len())));
    }
    parts.push(within_time(start.elapsed(), Duration::from_secs(1)));
    all(parts)
}

fn threshold_opts() -> ThresholdOptions {
    ThresholdOptions {
        restarts: 200,
        ..Default::default()
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for (k, expected, label) in [(1, 1.0, "1"), (2, 1.25, "5/4"), (3, 179.0 / 96.0, "179/96")] {
        let r = maximize_threshold_with(4, k, 4, &threshold_opts()).unwrap();
        parts.push(check(
            (r.value - expected).abs() < 1e-6,
            format!("k={k} max={:.10} vs {label}", r.value),
        ));
        parts.push(check(
            r.collapse_fraction > 0.0,
            format!("k={k} rank-1 collapse fraction {:.2}", r.collapse_fraction),
        ));
    }
    parts.push(within_time(start.elapsed(), Duration::from_secs(600)));
    all(parts)
}

fn criterion_3() -> Outcome {
    let opts = ThresholdOptions {
        unit_weights: true,
        ..threshold_opts()
    };
    let r = maximize_threshold_with(4, 4, 2, &opts).unwrap();
    let bound = 179.0 / 96.0;
    check(
        r.value < bound - 1e-6,
        format!("dim 4, two unit projective components: max={:.10} < 179/96={bound:.10}", r.value),
    )
}

fn criterion_4() -> Outcome {
    let (_, vis12) = naive_mapping_benchmark(&TargetState::equal(&[1, 2])).unwrap();
    let (c3, vis3) = naive_mapping_benchmark(&TargetState::equal(&[0, 1, 2])).unwrap();
    all(vec![
        check((vis12 - 0.88).abs() <= 0.02, format!("(|1>+|2>) visibility {vis12:.4} vs 0.88")),
        check((c3 - 0.92).abs() <= 0.02, format!("3-state C {c3:.4} vs 0.92")),
        check((vis3 - 0.68).abs() <= 0.02, format!("3-state visibility {vis3:.4} vs 0.68")),
    ])
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let base = ExperimentConfig::synthesized(TargetState::equal(&[0, 1, 2])).unwrap();
    let value = |noise: NoiseMode| {
        let mut cfg = base.clone();
        cfg.noise = noise;
        certifier_value(&expected_pattern(&cfg).unwrap()).unwrap()
    };
    let thermal = value(NoiseMode::Thermal { nbar: 0.02 });
    let carrier = value(NoiseMode::Carrier);
    let detuned = detuning_sweep(&base, &[1000.0]).unwrap()[0].certifier;
    all(vec![
        check((thermal - 1.65).abs() <= 0.02, format!("thermal nbar=0.02 C={thermal:.4} vs 1.65")),
        check((carrier - 1.69).abs() <= 0.05, format!("off-resonant carrier C={carrier:.4} vs 1.69")),
        check(detuned < 1.25, format!("detuning 1 kHz C={detuned:.4} < 1.25")),
        within_time(start.elapsed(), Duration::from_secs(600)),
    ])
}

fn three_state_pattern() -> InterferencePattern {
    let target = TargetState::equal(&[0, 1, 2]);
    ideal_pattern(&target, &quick_mapping(&target), 31)
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let truth = 47.0 / 27.0;
    let mc = monte_carlo(&three_state_pattern(), 100, 100_000, 6).unwrap();
    let unbiased = summarize(&mc.unbiased);
    let naive = summarize(&mc.naive);
    let sigma = mc.sigma.iter().sum::<f64>() / mc.sigma.len() as f64;
    all(vec![
        check(
            (unbiased.mean - truth).abs() <= 3.0 * unbiased.standard_error,
            format!(
                "unbiased mean {:.5} off by {:.2} SE",
                unbiased.mean,
                (unbiased.mean - truth) / unbiased.standard_error
            ),
        ),
        check(
            naive.mean - truth >= 5.0 * naive.standard_error,
            format!(
                "naive mean {:.5} above by {:.1} SE",
                naive.mean,
                (naive.mean - truth) / naive.standard_error
            ),
        ),
        check(
            (sigma / unbiased.std - 1.0).abs() <= 0.1,
            format!("mean sigma {sigma:.5} vs empirical std {:.5}", unbiased.std),
        ),
        check(mc.failed == 0, format!("{} degenerate runs", mc.failed)),
        within_time(start.elapsed(), Duration::from_secs(300)),
    ])
}

fn criterion_7() -> Outcome {
    let truth = 47.0 / 27.0;
    let mc = monte_carlo(&three_state_pattern(), 400, 100_000, 7).unwrap();
    let unbiased = summarize(&mc.unbiased);
    let sigma = mc.sigma.iter().sum::<f64>() / mc.sigma.len() as f64;
    let bias = unbiased.mean - truth;
    check(
        10.0 * (bias.abs() + unbiased.standard_error) <= sigma,
        format!(
            "n=400 residual bias {bias:.2e} (+/- {:.1e}) vs sigma {sigma:.4}",
            unbiased.standard_error
        ),
    )
}

fn random_sequence(rng: &mut impl Rng, len: usize) -> PulseSequence {
    let pulses = (0..len)
        .map(|_| {
            let t = [Transition::Carrier, Transition::RedSideband, Transition::BlueSideband][rng.random_range(0..3)];
            Pulse::new(t, rng.random_range(0.0..2.0), rng.random_range(-PI..PI)).unwrap()
        })
        .collect();
    PulseSequence::new("random", pulses)
}

fn property_suites() -> Vec<Outcome> {
    let mut rng = stream_rng(8, 0);
    let truncation = 10;

    let mut worst_unitarity: f64 = 0.0;
    for _ in 0..100 {
        let seq = random_sequence(&mut rng, 6);
        let u = sequence_unitary(&seq, truncation);
        let id = nalgebra::DMatrix::<C64>::identity(u.nrows(), u.ncols());
        worst_unitarity = worst_unitarity.max((u.adjoint() * &u - id).norm());
    }

    let mut worst_shift: f64 = 0.0;
    for _ in 0..100 {
        let seq = random_sequence(&mut rng, 4);
        let phi = rng.random_range(-PI..PI);
        let psi = apply_sequence(&JointState::ground(truncation), &random_sequence(&mut rng, 2)).unwrap();
        let lhs = apply_sequence(&psi, &seq.shift_phases(phi)).unwrap();
        let rhs = free_evolution(&apply_sequence(&free_evolution(&psi, -phi), &seq).unwrap(), phi);
        worst_shift = worst_shift.max(1.0 - lhs.fidelity(&rhs));
    }

    let mut worst_quadrature: f64 = 0.0;
    for _ in 0..50 {
        let deg = rng.random_range(1..5usize);
        let coeffs: Vec<(f64, f64)> = (0..=deg)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let f = |x: f64| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, (a, b))| a * (k as f64 * x).cos() + b * (k as f64 * x).sin())
                .sum::<f64>()
        };
        let points = exact_points(deg);
        let grid = phase_grid(points);
        let w = coherence_core::certifier::trapezium_weights(points);
        let quad: f64 = grid.iter().zip(&w).map(|(x, w)| w * f(*x)).sum();
        worst_quadrature = worst_quadrature.max((quad - coeffs[0].0).abs());
    }
    let pattern = three_state_pattern();
    let cubic = moment(&pattern, 3);
    let dense = moment(&ideal_pattern(&TargetState::equal(&[0, 1, 2]), &quick_mapping(&TargetState::equal(&[0, 1, 2])), 301), 3);
    worst_quadrature = worst_quadrature.max((cubic - dense).abs());

    let dim = 5;
    let states = KCoherentParametrization::new(dim, 2, false).unwrap();
    let povms = PovmParametrization::new(dim, dim, false, false).unwrap();
    let mut worst_two_coherent = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let sx: Vec<f64> = (0..states.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let ax: Vec<f64> = (0..povms.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
        if let Some(c) = certifier_of(&decode_state(&states, &sx), &decode_povm(&povms, &ax)) {
            worst_two_coherent = worst_two_coherent.max(c);
        }
    }

    for _ in 0..10_000 {
        let a = rng.random_range(0..dim);
        let b = (a + rng.random_range(1..dim)) % dim;
        let pair_state = |rng: &mut rand_chacha::ChaCha8Rng| {
            let theta: f64 = rng.random_range(0.0..PI / 2.0);
            let mut v = nalgebra::DVector::<C64>::zeros(dim);
            v[a] = C64::new(theta.cos(), 0.0);
            v[b] = C64::from_polar(theta.sin(), rng.random_range(-PI..PI));
            &v * v.adjoint()
        };
        let rho = pair_state(&mut rng);
        let proj = pair_state(&mut rng);
        if let Some(c) = certifier_of(&rho, &proj) {
            worst_two_coherent = worst_two_coherent.max(c);
        }
    }

    let mut worst_mapping: f64 = 0.0;
    for levels in [vec![0, 1], vec![0, 1, 2], vec![1, 2], vec![0, 2]] {
        let target = TargetState::equal(&levels);
        let spec = build_mapping_spec(&target);
        let creation = synthesize_creation(&target, 4).unwrap();
        let out = apply_sequence(&JointState::ground(target.default_truncation()), &creation).unwrap();
        worst_mapping = worst_mapping.max(1.0 - out.fidelity(&target.joint(target.default_truncation()).unwrap()));
        worst_mapping = worst_mapping.max(mapping_error(&find_mapping(&spec, &MappingOptions::default()).unwrap(), &spec));
    }

    let truth = ProbeModel {
        populations: vec![1.0 / 3.0; 3],
        excited_populations: Vec::new(),
        sideband_rabi: 8100.0,
        detuning: 0.0,
        dephasing: 300.0,
    };
    let times: Vec<f64> = (0..150).map(|i| 6e-4 * i as f64 / 149.0).collect();
    let successes = truth
        .excitations(&times)
        .iter()
        .enumerate()
        .map(|(j, &p)| Binomial::new(400, p).unwrap().sample(&mut stream_rng(88, j as u64)))
        .collect();
    let record = ShotRecord::new(times, successes, 400).unwrap();
    let fit = fit_probe(
        &record,
        &ProbeFitConfig {
            bootstrap: 0,
            ..Default::default()
        },
    )
    .unwrap();
    let probe_error = fit
        .populations
        .iter()
        .map(|p| (p - 1.0 / 3.0).abs())
        .fold(0.0, f64::max);

    vec![
        check(worst_unitarity < 1e-10, format!("unitarity: worst ||U'U - 1|| {worst_unitarity:.1e}")),
        check(worst_shift < 1e-12, format!("phase-shift equivalence: worst infidelity {worst_shift:.1e}")),
        check(worst_quadrature < 1e-12, format!("quadrature exactness: worst error {worst_quadrature:.1e}")),
        check(
            worst_two_coherent <= 1.25 + 1e-12,
            format!("soundness: max C over 2e4 random 2-coherent states and measurements {worst_two_coherent:.6} <= 5/4"),
        ),
        check(worst_mapping <= 1e-10, format!("synthesis: worst creation infidelity / mapping error {worst_mapping:.1e}")),
        check(probe_error <= 0.01, format!("probe round trip: worst population error {probe_error:.4}")),
    ]
}

fn criterion_8() -> Outcome {
    all(property_suites())
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 analytic certifier values", criterion_1),
        ("2 thresholds by optimization", criterion_2),
        ("3 rank penalty", criterion_3),
        ("4 naive-mapping benchmarks", criterion_4),
        ("5 noise reproductions", criterion_5),
        ("6 estimator statistics", criterion_6),
        ("7 residual bias at n=400", criterion_7),
        ("8 property suites", criterion_8),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "{} criterion {name} ({:.1?}): {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            start.elapsed(),
            outcome.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
