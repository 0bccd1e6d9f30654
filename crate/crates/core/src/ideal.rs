//! Exact resonant propagators in the Lamb–Dicke limit.
//!
//! Each pulse is block diagonal: independent 2×2 rotations on coupled pairs
//! `(lower, upper)` where `lower` is the ground-qubit member. A pair rotated
//! by angle `θ` with phase `φ` evolves as
//!
//! ```text
//! [ cos θ/2            -i e^{iφ} sin θ/2 ]
//! [ -i e^{-iφ} sin θ/2  cos θ/2           ]
//! ```

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::hilbert::{basis_index, dimension, JointDensity, JointState, Qubit, C64};
use crate::pulse::{Pulse, PulseSequence, Transition};

/// A coupled pair of basis indices and its coupling relative to the pair
/// that contains motional `|0⟩`.
#[derive(Clone, Copy, Debug)]
pub struct CoupledPair {
    pub lower: usize,
    pub upper: usize,
    pub strength: f64,
}

/// All pairs a transition couples inside the truncated space. States whose
/// partner lies outside the space are left untouched.
pub fn coupled_pairs(transition: Transition, truncation: usize) -> Vec<CoupledPair> {
    let g = |n| basis_index(truncation, Qubit::Ground, n);
    let e = |n| basis_index(truncation, Qubit::Excited, n);
    match transition {
        Transition::Carrier => (0..=truncation)
            .map(|n| CoupledPair {
                lower: g(n),
                upper: e(n),
                strength: 1.0,
            })
            .collect(),
        Transition::RedSideband => (1..=truncation)
            .map(|n| CoupledPair {
                lower: g(n),
                upper: e(n - 1),
                strength: (n as f64).sqrt(),
            })
            .collect(),
        Transition::BlueSideband => (0..truncation)
            .map(|n| CoupledPair {
                lower: g(n),
                upper: e(n + 1),
                strength: ((n + 1) as f64).sqrt(),
            })
            .collect(),
    }
}

/// Rotation angle of a pair with the given relative strength.
#[inline]
pub fn rotation_angle(duration: f64, strength: f64) -> f64 {
    PI * duration * strength
}

/// Applies the 2×2 rotation to `(x, y)`.
#[inline]
pub fn rotate_pair(x: C64, y: C64, theta: f64, phase: f64) -> (C64, C64) {
    let (s, c) = (0.5 * theta).sin_cos();
    let off_upper = C64::new(0.0, -1.0) * C64::from_polar(s, phase);
    let off_lower = C64::new(0.0, -1.0) * C64::from_polar(s, -phase);
    (x * c + off_upper * y, off_lower * x + y * c)
}

fn rotate_in_place(amps: &mut [C64], pulse: &Pulse, truncation: usize) {
    rotate_raw(amps, pulse.transition, pulse.duration, pulse.phase, truncation);
}

/// Unchecked rotation. Negative durations are allowed and equal the
/// positive duration with the phase advanced by π.
pub(crate) fn rotate_raw(amps: &mut [C64], transition: Transition, duration: f64, phase: f64, truncation: usize) {
    let n_max = truncation;
    let e0 = n_max + 1;
    let (first, last) = match transition {
        Transition::Carrier => (0, n_max),
        Transition::RedSideband => (1, n_max),
        Transition::BlueSideband => (0, n_max - 1),
    };
    for n in first..=last {
        let (upper, strength) = match transition {
            Transition::Carrier => (e0 + n, 1.0),
            Transition::RedSideband => (e0 + n - 1, (n as f64).sqrt()),
            Transition::BlueSideband => (e0 + n + 1, ((n + 1) as f64).sqrt()),
        };
        let theta = rotation_angle(duration, strength);
        let (x, y) = rotate_pair(amps[n], amps[upper], theta, phase);
        amps[n] = x;
        amps[upper] = y;
    }
}

/// Applies one ideal pulse. Input and output must respect the leakage guard.
pub fn apply_pulse_ideal(state: &JointState, pulse: &Pulse) -> Result<JointState> {
    state.check_leakage()?;
    let mut out = state.clone();
    rotate_in_place(out.amplitudes_mut(), pulse, state.truncation());
    out.check_leakage()?;
    Ok(out)
}

/// Left fold of [`apply_pulse_ideal`].
pub fn apply_sequence(state: &JointState, seq: &PulseSequence) -> Result<JointState> {
    state.check_leakage()?;
    let mut out = state.clone();
    for pulse in &seq.pulses {
        rotate_in_place(out.amplitudes_mut(), pulse, state.truncation());
        out.check_leakage()?;
    }
    Ok(out)
}

/// Multiplies every `|q,n⟩` amplitude by `e^{-i n φ}`.
pub fn free_evolution(state: &JointState, phi: f64) -> JointState {
    let n_max = state.truncation();
    let mut out = state.clone();
    for (i, a) in out.amplitudes_mut().iter_mut().enumerate() {
        let n = (i % (n_max + 1)) as f64;
        *a *= C64::from_polar(1.0, -n * phi);
    }
    out
}

pub fn free_evolution_operator(truncation: usize, phi: f64) -> DMatrix<C64> {
    let dim = dimension(truncation);
    DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            C64::from_polar(1.0, -((i % (truncation + 1)) as f64) * phi)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

pub fn pulse_unitary(pulse: &Pulse, truncation: usize) -> DMatrix<C64> {
    let dim = dimension(truncation);
    let mut u = DMatrix::identity(dim, dim);
    for pair in coupled_pairs(pulse.transition, truncation) {
        let theta = rotation_angle(pulse.duration, pair.strength);
        let (s, c) = (0.5 * theta).sin_cos();
        u[(pair.lower, pair.lower)] = C64::new(c, 0.0);
        u[(pair.upper, pair.upper)] = C64::new(c, 0.0);
        u[(pair.lower, pair.upper)] = C64::new(0.0, -1.0) * C64::from_polar(s, pulse.phase);
        u[(pair.upper, pair.lower)] = C64::new(0.0, -1.0) * C64::from_polar(s, -pulse.phase);
    }
    u
}

/// Product of pulse unitaries, first pulse rightmost.
pub fn sequence_unitary(seq: &PulseSequence, truncation: usize) -> DMatrix<C64> {
    let dim = dimension(truncation);
    let mut u = DMatrix::identity(dim, dim);
    for pulse in &seq.pulses {
        u = pulse_unitary(pulse, truncation) * u;
    }
    u
}

/// `U ρ U†` for an ideal sequence, with the leakage guard checked on the
/// result.
pub fn apply_sequence_density(rho: &JointDensity, seq: &PulseSequence) -> Result<JointDensity> {
    rho.check_leakage()?;
    let u = sequence_unitary(seq, rho.truncation());
    let out = JointDensity::from_raw(rho.truncation(), &u * rho.matrix() * u.adjoint());
    out.check_leakage()?;
    Ok(out)
}

/// Largest overlap with `target` over all free-evolution phases, sampled on
/// a grid and refined by golden-section search around the best grid point.
pub fn fidelity_modulo_free_evolution(state: &JointState, target: &JointState) -> f64 {
    let f = |phi: f64| target.fidelity(&free_evolution(state, phi));
    let grid = 720;
    let step = 2.0 * PI / grid as f64;
    let (mut best_phi, mut best) = (0.0, f(0.0));
    for k in 1..grid {
        let phi = k as f64 * step;
        let v = f(phi);
        if v > best {
            best = v;
            best_phi = phi;
        }
    }
    let (mut a, mut b) = (best_phi - step, best_phi + step);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.max(f(0.5 * (a + b)))
}
