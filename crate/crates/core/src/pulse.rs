//! Pulses and pulse sequences, plus their JSON wire format.
//!
//! Durations are scaled so that `1.0` exchanges `|g,0⟩ ↔ |e,0⟩` on the
//! carrier, `|g,1⟩ ↔ |e,0⟩` on the red sideband and `|g,0⟩ ↔ |e,1⟩` on the
//! blue sideband. Phases are stored in radians and serialized as multiples
//! of π (`phase_over_pi`).

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    #[serde(rename = "carrier")]
    Carrier,
    #[serde(rename = "red")]
    RedSideband,
    #[serde(rename = "blue")]
    BlueSideband,
}

impl Transition {
    pub fn is_sideband(self) -> bool {
        !matches!(self, Transition::Carrier)
    }

    pub fn short_name(self) -> char {
        match self {
            Transition::Carrier => 'c',
            Transition::RedSideband => 'r',
            Transition::BlueSideband => 'b',
        }
    }

    /// Parses `c`/`r`/`b` or the long names.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "c" | "carrier" => Ok(Transition::Carrier),
            "r" | "red" | "rsb" => Ok(Transition::RedSideband),
            "b" | "blue" | "bsb" => Ok(Transition::BlueSideband),
            other => Err(Error::InvalidParameter(format!("unknown transition '{other}'"))),
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Transition::Carrier => "carrier",
            Transition::RedSideband => "red",
            Transition::BlueSideband => "blue",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PulseRecord", into = "PulseRecord")]
pub struct Pulse {
    pub transition: Transition,
    pub duration: f64,
    /// Radians.
    pub phase: f64,
}

#[derive(Serialize, Deserialize)]
struct PulseRecord {
    transition: Transition,
    duration: f64,
    phase_over_pi: f64,
}

impl TryFrom<PulseRecord> for Pulse {
    type Error = Error;

    fn try_from(r: PulseRecord) -> Result<Self> {
        Pulse::new(r.transition, r.duration, r.phase_over_pi * PI)
    }
}

impl From<Pulse> for PulseRecord {
    fn from(p: Pulse) -> Self {
        PulseRecord {
            transition: p.transition,
            duration: p.duration,
            phase_over_pi: p.phase / PI,
        }
    }
}

impl Pulse {
    pub fn new(transition: Transition, duration: f64, phase: f64) -> Result<Self> {
        if !(duration >= 0.0) || !duration.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "pulse duration must be finite and >= 0, got {duration}"
            )));
        }
        Ok(Pulse {
            transition,
            duration,
            phase,
        })
    }

    pub fn carrier(duration: f64, phase: f64) -> Self {
        Pulse::new(Transition::Carrier, duration, phase).expect("valid carrier pulse")
    }

    pub fn red(duration: f64, phase: f64) -> Self {
        Pulse::new(Transition::RedSideband, duration, phase).expect("valid red pulse")
    }

    pub fn blue(duration: f64, phase: f64) -> Self {
        Pulse::new(Transition::BlueSideband, duration, phase).expect("valid blue pulse")
    }

    /// Inverse rotation with the same duration: phase advanced by π.
    pub fn inverse(&self) -> Pulse {
        Pulse {
            phase: self.phase + PI,
            ..*self
        }
    }

    /// Phase offset induced by a free-evolution phase `phi` applied before
    /// this pulse.
    pub fn shifted(&self, phi: f64) -> Pulse {
        let phase = match self.transition {
            Transition::Carrier => self.phase,
            Transition::RedSideband => self.phase - phi,
            Transition::BlueSideband => self.phase + phi,
        };
        Pulse { phase, ..*self }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub label: String,
    pub pulses: Vec<Pulse>,
}

impl PulseSequence {
    pub fn new(label: impl Into<String>, pulses: Vec<Pulse>) -> Self {
        PulseSequence {
            label: label.into(),
            pulses,
        }
    }

    pub fn empty(label: impl Into<String>) -> Self {
        Self::new(label, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.pulses.iter().map(|p| p.duration).sum()
    }

    pub fn max_duration(&self) -> f64 {
        self.pulses.iter().map(|p| p.duration).fold(0.0, f64::max)
    }

    pub fn transitions(&self) -> Vec<Transition> {
        self.pulses.iter().map(|p| p.transition).collect()
    }

    /// Every red phase decremented by `phi`, every blue phase incremented.
    pub fn shift_phases(&self, phi: f64) -> PulseSequence {
        PulseSequence {
            label: self.label.clone(),
            pulses: self.pulses.iter().map(|p| p.shifted(phi)).collect(),
        }
    }

    /// Reversed order with each pulse inverted.
    pub fn adjoint(&self) -> PulseSequence {
        PulseSequence {
            label: format!("{} (adjoint)", self.label),
            pulses: self.pulses.iter().rev().map(Pulse::inverse).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

impl fmt::Display for PulseSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.label)?;
        for p in &self.pulses {
            writeln!(
                f,
                "  {:<8} d={:>8.5}  phase/pi={:>8.5}",
                p.transition.to_string(),
                p.duration,
                p.phase / PI
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_shift_is_identity() {
        let seq = PulseSequence::new(
            "t",
            vec![Pulse::carrier(0.5, 0.1), Pulse::red(0.7, -0.4), Pulse::blue(1.1, 2.0)],
        );
        assert_eq!(seq.shift_phases(0.0), seq);
    }

    #[test]
    fn red_phase_is_decremented() {
        let seq = PulseSequence::new("t", vec![Pulse::red(1.0, 0.3)]);
        let shifted = seq.shift_phases(0.5);
        assert!((shifted.pulses[0].phase - (-0.2)).abs() < 1e-15);
    }

    #[test]
    fn blue_incremented_carrier_untouched() {
        let seq = PulseSequence::new("t", vec![Pulse::blue(1.0, 0.3), Pulse::carrier(1.0, 0.3)]);
        let shifted = seq.shift_phases(0.5);
        assert!((shifted.pulses[0].phase - 0.8).abs() < 1e-15);
        assert_eq!(shifted.pulses[1].phase, 0.3);
    }

    #[test]
    fn negative_duration_rejected() {
        assert!(Pulse::new(Transition::Carrier, -0.1, 0.0).is_err());
        let bad = r#"{"label":"x","pulses":[{"transition":"red","duration":-1,"phase_over_pi":0}]}"#;
        assert!(PulseSequence::from_json(bad).is_err());
    }

    #[test]
    fn json_uses_phase_over_pi() {
        let seq = PulseSequence::new("t", vec![Pulse::red(0.71, -0.5 * PI)]);
        let json = seq.to_json().unwrap();
        assert!(json.contains("\"phase_over_pi\": -0.5"));
        assert!(json.contains("\"transition\": \"red\""));
        let back = PulseSequence::from_json(&json).unwrap();
        assert!((back.pulses[0].phase + 0.5 * PI).abs() < 1e-15);
    }
}
