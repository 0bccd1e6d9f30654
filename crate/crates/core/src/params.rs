//! Physical parameters of the trap and drive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::{Pulse, Transition};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Carrier Rabi frequency Ω in Hz.
    pub carrier_rabi: f64,
    /// Lamb–Dicke parameter η.
    pub lamb_dicke: f64,
    /// Trap frequency ν_m in Hz.
    pub trap_freq: f64,
    /// Qubit frequency in Hz. Informational only.
    pub qubit_freq: f64,
    /// Laser detuning from the carrier in Hz.
    pub carrier_detuning: f64,
    /// Miscalibration of the trap frequency used for the sideband lasers, in Hz.
    pub sideband_detuning: f64,
    pub thermal_nbar: f64,
    /// Motional dephasing rate γ in Hz.
    pub motional_dephasing_rate: f64,
}

impl PhysicalParams {
    /// Parameters of the 40Ca+ experiment: Ω = 90 kHz, η = 0.09, ν_m = 1.1 MHz.
    pub fn experimental() -> Self {
        PhysicalParams {
            carrier_rabi: 90e3,
            lamb_dicke: 0.09,
            trap_freq: 1.1e6,
            qubit_freq: 411.042e12,
            carrier_detuning: 0.0,
            sideband_detuning: 0.0,
            thermal_nbar: 0.0,
            motional_dephasing_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.carrier_rabi > 0.0 && self.carrier_rabi.is_finite()) {
            return bad("carrier_rabi must be positive");
        }
        if !(self.lamb_dicke > 0.0 && self.lamb_dicke < 0.3) {
            return bad("lamb_dicke must lie in (0, 0.3)");
        }
        if !(self.trap_freq > 0.0 && self.trap_freq.is_finite()) {
            return bad("trap_freq must be positive");
        }
        if !(self.thermal_nbar >= 0.0 && self.thermal_nbar.is_finite()) {
            return bad("thermal_nbar must be non-negative");
        }
        if !(self.motional_dephasing_rate >= 0.0 && self.motional_dephasing_rate.is_finite()) {
            return bad("motional_dephasing_rate must be non-negative");
        }
        if !(self.carrier_detuning.is_finite() && self.sideband_detuning.is_finite()) {
            return bad("detunings must be finite");
        }
        Ok(())
    }

    /// Rabi frequency of the pair containing motional |0⟩.
    pub fn pair_rabi(&self, transition: Transition) -> f64 {
        match transition {
            Transition::Carrier => self.carrier_rabi,
            _ => self.lamb_dicke * self.carrier_rabi,
        }
    }

    /// Laser detuning seen by the addressed transition.
    pub fn transition_detuning(&self, transition: Transition) -> f64 {
        match transition {
            Transition::Carrier => self.carrier_detuning,
            Transition::RedSideband => self.carrier_detuning - self.sideband_detuning,
            Transition::BlueSideband => self.carrier_detuning + self.sideband_detuning,
        }
    }

    /// Wall-clock length of a pulse: scaled duration 1 lasts `1/(2 Ω_pair)`.
    pub fn physical_duration(&self, pulse: &Pulse) -> f64 {
        pulse.duration / (2.0 * self.pair_rabi(pulse.transition))
    }

    /// Generalized Rabi frequency `√(Ω'² + δ²)` of a pair with bare frequency `rabi`.
    pub fn modified_rabi(rabi: f64, detuning: f64) -> f64 {
        rabi.hypot(detuning)
    }

    /// Rabi-flop visibility `1/(1 + δ²/Ω'²)` of a detuned pair.
    pub fn detuned_visibility(rabi: f64, detuning: f64) -> f64 {
        1.0 / (1.0 + (detuning / rabi).powi(2))
    }

    /// Light shift of the qubit from the off-resonant carrier while a
    /// sideband is driven.
    pub fn carrier_light_shift(&self) -> f64 {
        self.carrier_rabi.hypot(self.trap_freq) - self.trap_freq
    }
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self::experimental()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experimental_parameters_validate() {
        PhysicalParams::experimental().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        let mut p = PhysicalParams::experimental();
        p.lamb_dicke = 0.3;
        assert!(p.validate().is_err());
        let mut p = PhysicalParams::experimental();
        p.thermal_nbar = -0.1;
        assert!(p.validate().is_err());
        let mut p = PhysicalParams::experimental();
        p.carrier_rabi = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn sideband_pi_pulse_duration() {
        let p = PhysicalParams::experimental();
        let t = p.physical_duration(&Pulse::red(1.0, 0.0));
        assert!((t - 1.0 / (2.0 * 0.09 * 90e3)).abs() < 1e-15);
    }
}
