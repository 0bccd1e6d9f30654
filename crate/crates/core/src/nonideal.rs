//! Time-dependent propagation with off-resonant carrier driving, laser
//! detuning and motional dephasing.
//!
//! The Hamiltonian is written in the interaction picture of the bare qubit
//! and trap. Laser phases are referenced to an absolute clock started at the
//! beginning of the experiment, so a detuned laser accumulates phase between
//! pulses as well as during them.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{basis_index, dimension, JointDensity, JointState, Qubit, C64};
use crate::ideal::coupled_pairs;
use crate::params::PhysicalParams;
use crate::pulse::{Pulse, PulseSequence, Transition};

/// Couplings sharing one time-dependent phase `e^{i(φ + 2π f t)}`.
#[derive(Clone, Debug)]
struct CouplingGroup {
    phase: f64,
    freq: f64,
    pairs: Vec<(usize, usize, f64)>,
}

#[derive(Clone, Debug)]
struct PulseHamiltonian {
    diagonal: Vec<f64>,
    groups: Vec<CouplingGroup>,
}

impl PulseHamiltonian {
    /// Writes `-i H(t) v` into `out`.
    fn derivative(&self, t: f64, v: &[C64], out: &mut [C64]) {
        for ((o, x), d) in out.iter_mut().zip(v).zip(&self.diagonal) {
            *o = x * *d;
        }
        for g in &self.groups {
            let c = C64::from_polar(1.0, g.phase + 2.0 * PI * g.freq * t);
            let cc = c.conj();
            for &(lo, up, amp) in &g.pairs {
                out[lo] += c * v[up] * amp;
                out[up] += cc * v[lo] * amp;
            }
        }
        for o in out.iter_mut() {
            *o = C64::new(o.im, -o.re);
        }
    }
}

/// Configuration of the nonideal propagator.
#[derive(Clone, Debug, PartialEq)]
pub struct NonidealModel {
    pub params: PhysicalParams,
    /// Include the carrier driven off resonance by ±ν_m while a sideband is addressed.
    pub off_resonant_carrier: bool,
    /// Cancel the static light shift of the off-resonant carrier during sideband pulses.
    pub stark_compensation: bool,
    /// Integration steps per trap period.
    pub steps_per_trap_period: usize,
}

impl NonidealModel {
    pub fn new(params: PhysicalParams) -> Self {
        NonidealModel {
            params,
            off_resonant_carrier: true,
            stark_compensation: true,
            steps_per_trap_period: 50,
        }
    }

    /// Only the addressed transition, plus detuning and dephasing.
    pub fn resonant_only(params: PhysicalParams) -> Self {
        NonidealModel {
            off_resonant_carrier: false,
            stark_compensation: false,
            ..Self::new(params)
        }
    }

    fn hamiltonian(&self, pulse: &Pulse, truncation: usize) -> PulseHamiltonian {
        let p = &self.params;
        let dim = dimension(truncation);
        let detuning = p.transition_detuning(pulse.transition);
        let rabi = p.pair_rabi(pulse.transition);
        let mut groups = vec![CouplingGroup {
            phase: pulse.phase,
            freq: detuning,
            pairs: coupled_pairs(pulse.transition, truncation)
                .into_iter()
                .map(|c| (c.lower, c.upper, PI * rabi * c.strength))
                .collect(),
        }];
        let mut diagonal = vec![0.0; dim];
        if pulse.transition.is_sideband() && self.off_resonant_carrier {
            let sign = match pulse.transition {
                Transition::RedSideband => -1.0,
                _ => 1.0,
            };
            groups.push(CouplingGroup {
                phase: pulse.phase,
                freq: detuning + sign * p.trap_freq,
                pairs: coupled_pairs(Transition::Carrier, truncation)
                    .into_iter()
                    .map(|c| (c.lower, c.upper, PI * p.carrier_rabi))
                    .collect(),
            });
            if self.stark_compensation {
                let shift = PI * p.carrier_light_shift();
                for n in 0..=truncation {
                    diagonal[basis_index(truncation, Qubit::Ground, n)] = -sign * shift;
                    diagonal[basis_index(truncation, Qubit::Excited, n)] = sign * shift;
                }
            }
        }
        PulseHamiltonian { diagonal, groups }
    }

    fn step_count(&self, duration: f64) -> usize {
        let max_step = 1.0 / (self.steps_per_trap_period as f64 * self.params.trap_freq);
        ((duration / max_step).ceil() as usize).max(1)
    }

    fn integrate(
        &self,
        h: &PulseHamiltonian,
        v: &mut [C64],
        start: f64,
        duration: f64,
    ) -> Result<()> {
        let steps = self.step_count(duration);
        let dt = duration / steps as f64;
        let n = v.len();
        let (mut k1, mut k2, mut k3, mut k4) =
            (vec![C64::default(); n], vec![C64::default(); n], vec![C64::default(); n], vec![C64::default(); n]);
        let mut tmp = vec![C64::default(); n];
        for s in 0..steps {
            let t = start + s as f64 * dt;
            h.derivative(t, v, &mut k1);
            for i in 0..n {
                tmp[i] = v[i] + k1[i] * (0.5 * dt);
            }
            h.derivative(t + 0.5 * dt, &tmp, &mut k2);
            for i in 0..n {
                tmp[i] = v[i] + k2[i] * (0.5 * dt);
            }
            h.derivative(t + 0.5 * dt, &tmp, &mut k3);
            for i in 0..n {
                tmp[i] = v[i] + k3[i] * dt;
            }
            h.derivative(t + dt, &tmp, &mut k4);
            for i in 0..n {
                v[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
            }
        }
        if v.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::Integrator("non-finite amplitude".into()));
        }
        Ok(())
    }

    /// Propagates a pure state through one pulse starting at absolute time
    /// `start`. Dephasing is ignored here; see [`Self::evolve_density`].
    pub fn evolve_state(&self, state: &JointState, pulse: &Pulse, start: f64) -> Result<JointState> {
        let h = self.hamiltonian(pulse, state.truncation());
        let mut out = state.clone();
        self.integrate(&h, out.amplitudes_mut(), start, self.params.physical_duration(pulse))?;
        Ok(out)
    }

    /// Runs a sequence on a pure state. Returns the final state and the
    /// absolute time at its end.
    pub fn run_state(&self, state: &JointState, seq: &PulseSequence, start: f64) -> Result<(JointState, f64)> {
        let mut out = state.clone();
        let mut t = start;
        for pulse in &seq.pulses {
            out = self.evolve_state(&out, pulse, t)?;
            t += self.params.physical_duration(pulse);
        }
        Ok((out, t))
    }

    fn evolve_density_matrix(&self, rho: &mut DMatrix<C64>, pulse: &Pulse, start: f64, truncation: usize) -> Result<()> {
        let h = self.hamiltonian(pulse, truncation);
        let duration = self.params.physical_duration(pulse);
        let steps = self.step_count(duration);
        let dt = duration / steps as f64;
        let dim = rho.nrows();
        let gamma = self.params.motional_dephasing_rate;
        let phonon = |i: usize| (i % (truncation + 1)) as f64;
        let damping = DMatrix::from_fn(dim, dim, |a, b| {
            C64::new((-gamma * dt * (phonon(a) - phonon(b)).powi(2)).exp(), 0.0)
        });
        // d rho/dt = -i[H, rho] = K - K^dagger with K = -i H rho.
        let rhs = |t: f64, r: &DMatrix<C64>| -> DMatrix<C64> {
            let mut k = DMatrix::zeros(dim, dim);
            let mut col = vec![C64::default(); dim];
            for j in 0..dim {
                let src: Vec<C64> = r.column(j).iter().cloned().collect();
                h.derivative(t, &src, &mut col);
                k.column_mut(j).copy_from_slice(&col);
            }
            &k + k.adjoint()
        };
        for s in 0..steps {
            let t = start + s as f64 * dt;
            let k1 = rhs(t, rho);
            let k2 = rhs(t + 0.5 * dt, &(&*rho + &k1 * C64::new(0.5 * dt, 0.0)));
            let k3 = rhs(t + 0.5 * dt, &(&*rho + &k2 * C64::new(0.5 * dt, 0.0)));
            let k4 = rhs(t + dt, &(&*rho + &k3 * C64::new(dt, 0.0)));
            *rho += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
            if gamma > 0.0 {
                rho.component_mul_assign(&damping);
            }
        }
        if rho.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::Integrator("non-finite density matrix".into()));
        }
        Ok(())
    }

    /// Propagates a density matrix through one pulse starting at absolute
    /// time `start`. Without dephasing the state is propagated as an
    /// ensemble of pure states.
    pub fn evolve_density(&self, rho: &JointDensity, pulse: &Pulse, start: f64) -> Result<JointDensity> {
        let (out, _) = self.run_density(rho, &PulseSequence::new("", vec![*pulse]), start)?;
        Ok(out)
    }

    /// Runs a sequence on a density matrix; returns the final state and end time.
    pub fn run_density(&self, rho: &JointDensity, seq: &PulseSequence, start: f64) -> Result<(JointDensity, f64)> {
        let truncation = rho.truncation();
        let end = start + seq.pulses.iter().map(|p| self.params.physical_duration(p)).sum::<f64>();
        let out = if self.params.motional_dephasing_rate == 0.0 {
            let mut components = Vec::new();
            for (w, psi) in rho.ensemble(1e-15) {
                components.push((w, self.run_state(&psi, seq, start)?.0));
            }
            mixture_unnormalized(truncation, &components)
        } else {
            let mut m = rho.matrix().clone();
            let mut t = start;
            for pulse in &seq.pulses {
                self.evolve_density_matrix(&mut m, pulse, t, truncation)?;
                t += self.params.physical_duration(pulse);
            }
            JointDensity::from_raw(truncation, m)
        };
        out.check_leakage()?;
        Ok((out, end))
    }
}

fn mixture_unnormalized(truncation: usize, components: &[(f64, JointState)]) -> JointDensity {
    let dim = dimension(truncation);
    let mut m = DMatrix::zeros(dim, dim);
    for (w, psi) in components {
        let v = psi.to_vector();
        m += (&v * v.adjoint()) * C64::new(*w, 0.0);
    }
    JointDensity::from_raw(truncation, m)
}

/// One pulse under the full model with the experiment clock at zero.
/// `physical_duration` must agree with the pulse's scaled duration.
pub fn apply_pulse_nonideal(
    rho: &JointDensity,
    pulse: &Pulse,
    params: &PhysicalParams,
    physical_duration: f64,
) -> Result<JointDensity> {
    params.validate()?;
    let expected = params.physical_duration(pulse);
    if (physical_duration - expected).abs() > 1e-9 * expected.max(1e-12) {
        return Err(Error::InvalidParameter(format!(
            "physical duration {physical_duration:e} s does not match scaled duration ({expected:e} s)"
        )));
    }
    NonidealModel::new(params.clone()).evolve_density(rho, pulse, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ideal::{apply_sequence_density, pulse_unitary};

    fn table_one_creation() -> PulseSequence {
        PulseSequence::new(
            "creation",
            vec![
                Pulse::carrier(0.5, 0.0),
                Pulse::red(0.70, -0.5 * PI),
                Pulse::carrier(0.73, PI),
                Pulse::red(0.71, 0.5 * PI),
            ],
        )
    }

    #[test]
    fn reduces_to_ideal_without_noise() {
        let model = NonidealModel::resonant_only(PhysicalParams::experimental());
        let rho = JointDensity::thermal(0.0, 8).unwrap();
        let seq = table_one_creation();
        let (out, _) = model.run_density(&rho, &seq, 0.0).unwrap();
        let ideal = apply_sequence_density(&rho, &seq).unwrap();
        assert!(out.trace_distance(&ideal) < 1e-6);
    }

    #[test]
    fn dephasing_integrator_reduces_to_ideal_at_zero_rate() {
        let mut model = NonidealModel::resonant_only(PhysicalParams::experimental());
        let rho = JointDensity::from_pure(&JointState::basis(8, Qubit::Ground, 1));
        let pulse = Pulse::red(0.6, 0.4);
        let mut m = rho.matrix().clone();
        model.params.motional_dephasing_rate = 0.0;
        model.evolve_density_matrix(&mut m, &pulse, 0.0, 8).unwrap();
        let u = pulse_unitary(&pulse, 8);
        let ideal = &u * rho.matrix() * u.adjoint();
        assert!((m - ideal).camax() < 1e-6);
    }

    #[test]
    fn detuned_flop_visibility() {
        let mut params = PhysicalParams::experimental();
        let rabi = params.lamb_dicke * params.carrier_rabi;
        params.sideband_detuning = -rabi;
        let model = NonidealModel::resonant_only(params.clone());
        let generalized = PhysicalParams::modified_rabi(rabi, rabi);
        // peak of the detuned flop
        let duration = 2.0 * rabi / (2.0 * generalized);
        let psi = JointState::basis(8, Qubit::Ground, 0);
        let out = model.evolve_state(&psi, &Pulse::blue(duration, 0.0), 0.0).unwrap();
        let expected = PhysicalParams::detuned_visibility(rabi, rabi);
        assert!((out.excited_population() - expected).abs() < 1e-6);
        assert!((expected - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dephasing_preserves_trace_and_hermiticity() {
        let mut params = PhysicalParams::experimental();
        params.motional_dephasing_rate = 2e3;
        let model = NonidealModel::new(params);
        let psi = JointState::from_motional(8, &[C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        let rho = JointDensity::from_pure(&psi);
        let out = model.evolve_density(&rho, &Pulse::red(0.7, 0.3), 0.0).unwrap();
        assert!((out.trace() - 1.0).abs() < 1e-9);
        assert!(out.hermiticity_error() < 1e-9);
        // coherences decay
        let before = rho.matrix()[(0, 2)].norm();
        let after_free = {
            let m = NonidealModel::resonant_only(PhysicalParams::experimental());
            m.evolve_density(&rho, &Pulse::red(0.7, 0.3), 0.0).unwrap().matrix()[(0, 2)].norm()
        };
        assert!(out.matrix()[(0, 2)].norm() < after_free.max(before));
    }

    #[test]
    fn stark_compensation_cancels_light_shift_for_both_sidebands() {
        let params = PhysicalParams::experimental();
        for pulse in [Pulse::red(1.0, 0.0), Pulse::blue(1.0, 0.0)] {
            let start = match pulse.transition {
                Transition::RedSideband => JointState::basis(8, Qubit::Ground, 1),
                _ => JointState::ground(8),
            };
            let ideal = crate::ideal::apply_pulse_ideal(&start, &pulse).unwrap();
            let mut errors = Vec::new();
            for comp in [false, true] {
                let model = NonidealModel {
                    stark_compensation: comp,
                    ..NonidealModel::new(params.clone())
                };
                let out = model.evolve_state(&start, &pulse, 0.0).unwrap();
                errors.push(1.0 - out.fidelity(&ideal));
            }
            assert!(errors[1] < errors[0], "{pulse:?}: {errors:?}");
            assert!(errors[1] < 0.01, "{pulse:?}: {errors:?}");
        }
    }

    #[test]
    fn rejects_inconsistent_duration() {
        let params = PhysicalParams::experimental();
        let rho = JointDensity::thermal(0.0, 6).unwrap();
        let p = Pulse::carrier(1.0, 0.0);
        assert!(apply_pulse_nonideal(&rho, &p, &params, 1e-3).is_err());
        let t = params.physical_duration(&p);
        let out = apply_pulse_nonideal(&rho, &p, &params, t).unwrap();
        assert!((out.trace() - 1.0).abs() < 1e-9);
    }
}
