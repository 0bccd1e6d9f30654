use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use coherence_core::certifier::{certifier_value, trapezium_weights, CertifierReport, InterferencePattern};
use coherence_core::experiment::{
    detuning_sweep, expected_pattern, simulate, write_record_csv, write_sweep_csv, ExperimentConfig, NoiseMode,
};
use coherence_core::fixtures::TableFixture;
use coherence_core::hilbert::JointDensity;
use coherence_core::probe::{blue_sideband_probe, fit_probe, ProbeFitConfig};
use coherence_core::stats::{monte_carlo_pdf, summarize, unbiased_c_with_z, ShotRecord};
use coherence_core::synthesis::{
    build_mapping_spec, find_mapping, mapping_error_for, synthesize_creation, synthesize_creation_with, MappingOptions,
    TargetState,
};
use coherence_core::thresholds::{maximize_threshold_with, ThresholdOptions};
use coherence_core::{PhysicalParams, PulseSequence, Qubit, Transition, C64};
use serde_json::json;

#[derive(Parser)]
#[command(name = "coherence", version, about = "Certify multilevel motional coherence of a trapped ion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a creation sequence for a target state.
    Synthesize {
        #[command(flatten)]
        target: TargetArgs,
        /// Restrict the search to red sidebands.
        #[arg(long)]
        red_only: bool,
        #[arg(long, default_value_t = 4)]
        branches: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Optimize a measurement mapping for a target state.
    Map {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long, default_value_t = 64)]
        restarts: usize,
        /// Qubit state the target is mapped to (e or g).
        #[arg(long, default_value = "e")]
        measure: String,
        #[command(flatten)]
        common: Common,
    },
    /// Expected interference pattern and its certifier value.
    Pattern {
        #[command(flatten)]
        experiment: ExperimentArgs,
    },
    /// Simulate a shot-sampled experiment, or certify a recorded one.
    Certify {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Shot record CSV (phase_rad, successes, shots) to certify instead of simulating.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        rasters: u64,
        /// Write the simulated shot record to this CSV.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Standard deviations required above a threshold.
        #[arg(long, default_value_t = 1.0)]
        z: f64,
    },
    /// Maximize the certifier over k-coherent states and measurements.
    Thresholds {
        #[arg(long, default_value_t = 4)]
        dim: usize,
        #[arg(long)]
        k: usize,
        /// Number of projective components of the measurement (defaults to dim).
        #[arg(long)]
        components: Option<usize>,
        #[arg(long, default_value_t = 200)]
        restarts: usize,
        #[arg(long)]
        unit_weights: bool,
        #[arg(long)]
        real: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate the blue-sideband population probe.
    Probe {
        #[command(flatten)]
        target: TargetArgs,
        /// Longest pulse in microseconds.
        #[arg(long, default_value_t = 400.0)]
        max_time_us: f64,
        #[arg(long, default_value_t = 0.0)]
        dephasing: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Maximum-likelihood fit of probe data (time_s, successes, shots).
    Fit {
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
        /// Starting sideband Rabi frequency in Hz.
        #[arg(long)]
        rabi: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Distribution of the naive and corrected estimators over repeated experiments.
    MonteCarlo {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        #[arg(long, default_value_t = 60)]
        bins: usize,
    },
    /// Certifier value against sideband detuning.
    Sweep {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long, default_value_t = -2000.0, allow_negative_numbers = true)]
        from_hz: f64,
        #[arg(long, default_value_t = 2000.0, allow_negative_numbers = true)]
        to_hz: f64,
        #[arg(long, default_value_t = 41)]
        steps: usize,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 31)]
    points: usize,
    #[arg(long, default_value_t = 400)]
    shots: u64,
    #[arg(long)]
    truncation: Option<usize>,
    /// Output file (CSV or JSON); stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// off, thermal[:nbar], carrier or detuning:<Hz>.
    #[arg(long, default_value = "off")]
    noise: String,
}

#[derive(Args, Clone)]
struct TargetArgs {
    /// Levels of an equal superposition, e.g. 0,1,2.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["amplitudes", "target_file", "fixture"])]
    levels: Option<Vec<usize>>,
    /// Real amplitudes of levels 0, 1, ..., normalized on load.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, conflicts_with_all = ["target_file", "fixture"])]
    amplitudes: Option<Vec<f64>>,
    /// JSON list of amplitudes (numbers or [re, im] pairs).
    #[arg(long, conflicts_with = "fixture")]
    target_file: Option<PathBuf>,
    /// Built-in table fixture (table1, table2, table3) or a fixture JSON path.
    #[arg(long)]
    fixture: Option<String>,
}

impl TargetArgs {
    fn fixture(&self) -> Result<Option<TableFixture>> {
        match &self.fixture {
            None => Ok(None),
            Some(name) if Path::new(name).exists() => Ok(Some(TableFixture::load(name)?)),
            Some(name) => Ok(Some(TableFixture::builtin(name)?)),
        }
    }

    fn target(&self) -> Result<TargetState> {
        if let Some(f) = self.fixture()? {
            return Ok(f.target_state()?);
        }
        if let Some(path) = &self.target_file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            return Ok(TargetState::from_json(&text)?);
        }
        if let Some(a) = &self.amplitudes {
            return Ok(TargetState::normalized(a.iter().map(|&x| C64::new(x, 0.0)).collect())?);
        }
        Ok(TargetState::equal(self.levels.as_deref().unwrap_or(&[0, 1, 2])))
    }
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    #[command(flatten)]
    target: TargetArgs,
    /// Creation sequence JSON, overriding the synthesized or fixture one.
    #[arg(long)]
    creation: Option<PathBuf>,
    /// Mapping sequence JSON, overriding the optimized or fixture one.
    #[arg(long)]
    mapping: Option<PathBuf>,
    /// Physical parameters JSON; the experimental values when absent.
    #[arg(long)]
    params: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let target = self.target.target()?;
        let given = |p: &Option<PathBuf>| -> Result<Option<PulseSequence>> {
            p.as_ref()
                .map(|p| PulseSequence::load(p).with_context(|| format!("reading {}", p.display())))
                .transpose()
        };
        let (creation, mapping) = (given(&self.creation)?, given(&self.mapping)?);
        let mut cfg = match (self.target.fixture()?, creation, mapping) {
            (_, Some(c), Some(m)) => ExperimentConfig::new(target, c, m),
            (Some(f), c, m) => {
                let mut cfg = ExperimentConfig::from_fixture(&f)?;
                cfg.creation = c.unwrap_or(cfg.creation);
                cfg.mapping = m.unwrap_or(cfg.mapping);
                cfg
            }
            (None, c, m) => {
                let creation = match c {
                    Some(c) => c,
                    None => synthesize_creation_with(&target, 4, &[Transition::RedSideband])?,
                };
                let mapping = match m {
                    Some(m) => m,
                    None => find_mapping(&build_mapping_spec(&target), &MappingOptions::default())?,
                };
                ExperimentConfig::new(target, creation, mapping)
            }
        };
        if let Some(p) = &self.params {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            cfg.params = serde_json::from_str::<PhysicalParams>(&text)?;
        }
        let c = &self.common;
        cfg.noise = c.noise.parse::<NoiseMode>()?;
        cfg.n_points = c.points;
        cfg.shots_per_point = c.shots;
        cfg.seed = c.seed;
        if let Some(t) = c.truncation {
            cfg.truncation = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json(path: &Option<PathBuf>, value: &serde_json::Value) -> Result<()> {
    let mut w = output(path)?;
    writeln!(w, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn parse_qubit(s: &str) -> Result<Qubit> {
    match s {
        "e" | "excited" => Ok(Qubit::Excited),
        "g" | "ground" => Ok(Qubit::Ground),
        _ => bail!("measured state must be e or g, got {s}"),
    }
}

fn pattern_summary(pattern: &InterferencePattern) -> Result<String> {
    Ok(format!(
        "C = {:.6}, visibility = {:.4}",
        certifier_value(pattern)?,
        pattern.visibility()
    ))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synthesize {
            target,
            red_only,
            branches,
            common,
        } => {
            let t = target.target()?;
            let seq = if red_only {
                synthesize_creation_with(&t, branches, &[Transition::RedSideband])?
            } else {
                synthesize_creation(&t, branches)?
            };
            eprint!("{seq}");
            eprintln!("total duration {:.4}", seq.total_duration());
            let mut w = output(&common.output)?;
            writeln!(w, "{}", seq.to_json()?)?;
        }
        Command::Map {
            target,
            restarts,
            measure,
            common,
        } => {
            let t = target.target()?;
            let spec = build_mapping_spec(&t);
            let opts = MappingOptions {
                restarts,
                seed: common.seed,
                measured: parse_qubit(&measure)?,
                ..Default::default()
            };
            let seq = find_mapping(&spec, &opts)?;
            eprint!("{seq}");
            eprintln!(
                "total duration {:.4}, mapping error {:.3e}",
                seq.total_duration(),
                mapping_error_for(&seq, &spec, opts.measured)
            );
            let mut w = output(&common.output)?;
            writeln!(w, "{}", seq.to_json()?)?;
        }
        Command::Pattern { experiment } => {
            let cfg = experiment.config()?;
            let pattern = expected_pattern(&cfg)?;
            eprintln!("{}", pattern_summary(&pattern)?);
            pattern.write_csv(output(&experiment.common.output)?)?;
        }
        Command::Certify {
            experiment,
            input,
            rasters,
            record,
            z,
        } => {
            let (record_data, weights) = match &input {
                Some(path) => {
                    let rec = ShotRecord::read_csv(File::open(path).with_context(|| format!("opening {}", path.display()))?)?;
                    let weights = trapezium_weights(rec.phases.len());
                    (rec, weights)
                }
                None => {
                    let mut cfg = experiment.config()?;
                    cfg.rasters = rasters;
                    cfg.validate()?;
                    let out = simulate(&cfg)?;
                    if let Some(p) = &record {
                        write_record_csv(&out, BufWriter::new(File::create(p)?))?;
                    }
                    let w = out.pattern.weights.clone();
                    (out.record, w)
                }
            };
            let result = unbiased_c_with_z(&record_data, &weights, z)?;
            let p = record_data.proportions();
            let pattern = InterferencePattern::new(record_data.phases.clone(), p, weights)?;
            let report = CertifierReport::from_pattern(&pattern, result.sigma, z)?;
            eprintln!(
                "C = {:.4} +/- {:.4} (naive {:.4}); certified {}-coherent",
                result.c_unbiased, result.sigma, result.c_naive, result.certified_level
            );
            write_json(
                &experiment.common.output,
                &json!({ "result": result, "moments": { "m1": report.m1, "m3": report.m3 } }),
            )?;
        }
        Command::Thresholds {
            dim,
            k,
            components,
            restarts,
            unit_weights,
            real,
            common,
        } => {
            let opts = ThresholdOptions {
                restarts,
                seed: common.seed,
                real,
                unit_weights,
                ..Default::default()
            };
            let r = maximize_threshold_with(dim, k, components.unwrap_or(dim), &opts)?;
            eprintln!(
                "dim {dim}, k {k}: max C = {:.10} (agreed {}, rank-1 collapse {:.2})",
                r.value, r.agreed, r.collapse_fraction
            );
            write_json(&common.output, &serde_json::to_value(&r)?)?;
        }
        Command::Probe {
            target,
            max_time_us,
            dephasing,
            common,
        } => {
            let t = target.target()?;
            let truncation = common.truncation.unwrap_or(t.default_truncation());
            let rho = JointDensity::from_pure(&t.joint(truncation)?);
            let params = PhysicalParams {
                motional_dephasing_rate: dephasing,
                ..PhysicalParams::experimental()
            };
            if common.points < 2 {
                bail!("need at least 2 time points");
            }
            let times: Vec<f64> = (0..common.points)
                .map(|i| max_time_us * 1e-6 * i as f64 / (common.points - 1) as f64)
                .collect();
            let probs = blue_sideband_probe(&rho, &params, &times);
            let pattern = InterferencePattern::new(times.clone(), probs, vec![1.0 / times.len() as f64; times.len()])?;
            let record = ShotRecord::sample(&pattern, common.shots, common.seed, 0)?;
            record.write_csv(output(&common.output)?, "time_s")?;
        }
        Command::Fit {
            input,
            levels,
            bootstrap,
            rabi,
            common,
        } => {
            let rec = ShotRecord::read_csv(File::open(&input).with_context(|| format!("opening {}", input.display()))?)?;
            let cfg = ProbeFitConfig {
                levels,
                bootstrap,
                seed: common.seed,
                rabi_guess: rabi,
                ..Default::default()
            };
            let fit = fit_probe(&rec, &cfg)?;
            eprintln!(
                "populations {:?}, sideband Rabi {:.1} Hz",
                fit.populations.iter().map(|p| format!("{p:.4}")).collect::<Vec<_>>(),
                fit.sideband_rabi
            );
            write_json(&common.output, &serde_json::to_value(&fit)?)?;
        }
        Command::MonteCarlo { experiment, runs, bins } => {
            let cfg = experiment.config()?;
            let pattern = expected_pattern(&cfg)?;
            let truth = certifier_value(&pattern)?;
            let (hist, samples) = monte_carlo_pdf(&pattern, cfg.shots_per_point, runs, cfg.seed, bins)?;
            let (naive, corrected) = (summarize(&samples.naive), summarize(&samples.unbiased));
            eprintln!(
                "true C {truth:.5}; naive mean {:.5} (SE {:.1e}); corrected mean {:.5} (SE {:.1e}); empirical std {:.5}",
                naive.mean, naive.standard_error, corrected.mean, corrected.standard_error, corrected.std
            );
            hist.write_csv(output(&experiment.common.output)?)?;
        }
        Command::Sweep {
            experiment,
            from_hz,
            to_hz,
            steps,
        } => {
            if steps < 2 {
                bail!("need at least 2 sweep steps");
            }
            let cfg = experiment.config()?;
            let deltas: Vec<f64> = (0..steps)
                .map(|i| from_hz + (to_hz - from_hz) * i as f64 / (steps - 1) as f64)
                .collect();
            let points = detuning_sweep(&cfg, &deltas)?;
            write_sweep_csv(&points, output(&experiment.common.output)?)?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        let broken_pipe = e.chain().any(|c| match c.downcast_ref::<io::Error>() {
            Some(e) => e.kind() == io::ErrorKind::BrokenPipe,
            None => matches!(c.downcast_ref(), Some(coherence_core::Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe),
        });
        if broken_pipe {
            return;
        }
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
