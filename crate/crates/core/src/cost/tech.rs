use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const ILLUSTRATIVE: &str = include_str!("../../profiles/tech_illustrative.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcEntry {
    pub bits: u8,
    pub area: f64,
    /// Per conversion.
    pub energy: f64,
}

/// How much buffer an operator reserves for its intermediate tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferPolicy {
    /// The largest of the operator's input, output and internal tensors.
    LargestIntermediate,
    /// Input and output tensors together (double buffering).
    InputPlusOutput,
}

/// Per-unit technology numbers. Times, energies and areas are in arbitrary but
/// consistent units; only ratios are meaningful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechParams {
    pub label: String,
    /// Per slice read of one crossbar.
    pub xbar_read_time: f64,
    /// Per programmed vector.
    pub xbar_write_time: f64,
    /// Per conversion.
    pub adc_time: f64,
    pub adc: Vec<AdcEntry>,
    pub adcs_per_xbar: usize,
    /// Final activation after the last FC.
    pub activation_time: f64,
    pub bank_read_energy: f64,
    pub buffer_area_per_byte: f64,
    pub buffer_policy: BufferPolicy,
    pub buffer_read_energy: f64,
    /// Per word moved between buffer and engine.
    pub buffer_word_time: f64,
    pub buffer_write_energy: f64,
    pub cell_area: f64,
    pub cell_read_energy: f64,
    pub cell_write_energy: f64,
    /// Fraction of compute area and energy added for control and adder trees.
    pub controller_overhead: f64,
    pub dac_area: f64,
    /// Per driven word line per slice.
    pub dac_energy: f64,
    pub mbsa_area: f64,
    /// Per bit pass per lane.
    pub mbsa_energy: f64,
    /// Per bit pass.
    pub mbsa_time: f64,
    pub num_banks: usize,
    /// One embedding-bank access.
    pub t_bank: f64,
}

impl Default for TechParams {
    fn default() -> Self {
        Self::illustrative()
    }
}

impl TechParams {
    /// The bundled illustrative profile.
    pub fn illustrative() -> Self {
        Self::from_json(ILLUSTRATIVE).expect("bundled profile is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let tp: Self = serde_json::from_str(text)?;
        tp.check()?;
        Ok(tp)
    }

    pub fn to_json(&self) -> Result<String> {
        crate::json::to_canonical_pretty(self)
    }

    pub fn check(&self) -> Result<()> {
        let scalars = [
            ("xbar_read_time", self.xbar_read_time),
            ("xbar_write_time", self.xbar_write_time),
            ("adc_time", self.adc_time),
            ("activation_time", self.activation_time),
            ("bank_read_energy", self.bank_read_energy),
            ("buffer_area_per_byte", self.buffer_area_per_byte),
            ("buffer_read_energy", self.buffer_read_energy),
            ("buffer_word_time", self.buffer_word_time),
            ("buffer_write_energy", self.buffer_write_energy),
            ("cell_area", self.cell_area),
            ("cell_read_energy", self.cell_read_energy),
            ("cell_write_energy", self.cell_write_energy),
            ("controller_overhead", self.controller_overhead),
            ("dac_area", self.dac_area),
            ("dac_energy", self.dac_energy),
            ("mbsa_area", self.mbsa_area),
            ("mbsa_energy", self.mbsa_energy),
            ("mbsa_time", self.mbsa_time),
            ("t_bank", self.t_bank),
        ];
        for (name, v) in scalars {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("tech: {name} must be > 0, got {v}")));
            }
        }
        if self.adcs_per_xbar == 0 || self.num_banks == 0 {
            return Err(Error::InvalidConfig("tech: adcs_per_xbar and num_banks must be >= 1".into()));
        }
        if self.adc.is_empty() {
            return Err(Error::InvalidConfig("tech: adc table is empty".into()));
        }
        let mut sorted = self.adc.clone();
        sorted.sort_by_key(|e| e.bits);
        for e in &sorted {
            if !(e.area > 0.0 && e.energy > 0.0) {
                return Err(Error::InvalidConfig(format!("tech: adc {} bits needs positive area and energy", e.bits)));
            }
        }
        for w in sorted.windows(2) {
            if w[0].bits == w[1].bits {
                return Err(Error::InvalidConfig(format!("tech: duplicate adc entry for {} bits", w[0].bits)));
            }
            if w[1].area < w[0].area || w[1].energy < w[0].energy {
                return Err(Error::InvalidConfig("tech: adc area/energy must be nondecreasing in bits".into()));
            }
        }
        Ok(())
    }

    pub fn adc_entry(&self, bits: u8) -> Result<AdcEntry> {
        self.adc
            .iter()
            .copied()
            .find(|e| e.bits == bits)
            .ok_or_else(|| Error::InvalidConfig(format!("tech: no adc entry for {bits} bits")))
    }

    /// Copy with every time entry multiplied by `c`.
    pub fn scale_times(&self, c: f64) -> Self {
        let mut t = self.clone();
        for v in [
            &mut t.xbar_read_time,
            &mut t.xbar_write_time,
            &mut t.adc_time,
            &mut t.activation_time,
            &mut t.buffer_word_time,
            &mut t.mbsa_time,
            &mut t.t_bank,
        ] {
            *v *= c;
        }
        t
    }
}
