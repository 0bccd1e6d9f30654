//! Published creation and measurement sequences shipped with the crate.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::C64;
use crate::pulse::{PulseSequence, Transition};
use crate::synthesis::TargetState;

const TABLE1: &str = include_str!("../fixtures/table1_012.json");
const TABLE2: &str = include_str!("../fixtures/table2_12.json");
const TABLE3: &str = include_str!("../fixtures/table3_0123.json");

pub const FIXTURE_NAMES: [&str; 3] = ["table1", "table2", "table3"];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableFixture {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Unnormalized real amplitudes of the target.
    pub target: Vec<f64>,
    pub truncation: usize,
    pub convention: String,
    /// Extra phase (in units of π) added to every blue-sideband pulse on load.
    #[serde(default)]
    pub blue_phase_offset_over_pi: f64,
    pub creation: PulseSequence,
    pub mapping: PulseSequence,
}

impl TableFixture {
    pub fn from_json(s: &str) -> Result<Self> {
        let mut f: TableFixture = serde_json::from_str(s)?;
        if f.convention != "minus_i_exp_i_phi" {
            return Err(Error::InvalidParameter(format!("unknown rotation convention {}", f.convention)));
        }
        let offset = f.blue_phase_offset_over_pi * PI;
        if offset != 0.0 {
            for seq in [&mut f.creation, &mut f.mapping] {
                for p in seq.pulses.iter_mut().filter(|p| p.transition == Transition::BlueSideband) {
                    p.phase += offset;
                }
            }
        }
        Ok(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let src = match name {
            "table1" => TABLE1,
            "table2" => TABLE2,
            "table3" => TABLE3,
            _ => return Err(Error::InvalidParameter(format!("no fixture named {name}"))),
        };
        Self::from_json(src)
    }

    pub fn target_state(&self) -> Result<TargetState> {
        TargetState::normalized(self.target.iter().map(|&a| C64::new(a, 0.0)).collect())
    }
}

pub fn all() -> Vec<TableFixture> {
    FIXTURE_NAMES
        .iter()
        .map(|n| TableFixture::builtin(n).expect("builtin fixture"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certifier::{certifier_value, sample_pattern, PovmElement};
    use crate::hilbert::{JointDensity, JointState};
    use crate::ideal::{apply_sequence, fidelity_modulo_free_evolution};
    use crate::synthesis::{build_mapping_spec, mapping_error};

    #[test]
    fn creation_columns_reach_targets() {
        for f in all() {
            let target = f.target_state().unwrap();
            let out = apply_sequence(&JointState::ground(f.truncation), &f.creation).unwrap();
            let fid = fidelity_modulo_free_evolution(&out, &target.joint(f.truncation).unwrap());
            assert!(fid > 0.99, "{}: {fid}", f.name);
        }
    }

    #[test]
    fn mapping_columns_are_close_to_optimal() {
        for f in all() {
            let target = f.target_state().unwrap();
            let err = (0..360)
                .map(|i| {
                    let alpha = i as f64 * PI / 180.0;
                    let amps = target
                        .amplitudes()
                        .iter()
                        .enumerate()
                        .map(|(n, a)| a * C64::from_polar(1.0, -(n as f64) * alpha))
                        .collect();
                    mapping_error(&f.mapping, &build_mapping_spec(&TargetState::new(amps).unwrap()))
                })
                .fold(f64::INFINITY, f64::min);
            assert!(err < 0.05, "{}: {err}", f.name);
        }
    }

    #[test]
    fn table3_needs_blue_offset() {
        let f = TableFixture::builtin("table3").unwrap();
        let rho = JointDensity::from_pure(&f.target_state().unwrap().joint(f.truncation).unwrap());
        let a = PovmElement::excited(f.truncation);
        let c = certifier_value(&sample_pattern(&rho, &f.mapping, &a, 31).unwrap()).unwrap();
        assert!(c > 2.2, "{c}");
        let raw: TableFixture = serde_json::from_str(TABLE3).unwrap();
        let c_raw = certifier_value(&sample_pattern(&rho, &raw.mapping, &a, 31).unwrap()).unwrap();
        assert!(c_raw < 1.0, "{c_raw}");
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert!(TableFixture::builtin("table9").is_err());
    }
}
