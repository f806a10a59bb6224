//! Bit-accurate functional model of ReRAM crossbars.
//!
//! Cells hold unsigned digits of `cell_bits` bits. Signed weights are split into a
//! positive and a negative array (differential columns) and each array into
//! `ceil(w_bits / cell_bits)` bit planes. Inputs are streamed as `dac_bits`-wide
//! two's-complement slices; every analog column sum passes through an ideal ADC that
//! only saturates. Results are recombined digitally by shift-and-add.

mod mbsa;
mod mvm;
mod program;
mod transposed;

use serde::{Deserialize, Serialize};

use crate::design_space::ReRAMConfig;
use crate::{Error, Result};

pub use mbsa::mbsa_square;
pub use mvm::{input_slices, mvm, InputSlice};
pub use program::{program_signed, ProgrammedMatrix, TileMeta};
pub use transposed::{transposed_program, TransposedArray};

/// Square crossbar geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossbarSpec {
    pub rows: usize,
    pub cols: usize,
    pub cell_bits: u8,
}

impl CrossbarSpec {
    pub fn new(size: usize, cell_bits: u8) -> Result<Self> {
        if ![16, 32, 64].contains(&size) {
            return Err(Error::InvalidConfig(format!("crossbar size {size} not in {{16, 32, 64}}")));
        }
        if ![1, 2].contains(&cell_bits) {
            return Err(Error::InvalidConfig(format!("cell_bits {cell_bits} not in {{1, 2}}")));
        }
        Ok(Self { rows: size, cols: size, cell_bits })
    }

    pub fn from_reram(r: &ReRAMConfig) -> Result<Self> {
        Self::new(r.xbar_size, r.cell_bits)
    }

    pub fn max_cell(&self) -> u8 {
        (1u8 << self.cell_bits) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConverterSpec {
    pub dac_bits: u8,
    pub adc_bits: u8,
    /// ADCs multiplexed across the columns of one crossbar; affects cost only.
    pub adcs_per_xbar: usize,
}

impl ConverterSpec {
    pub fn new(dac_bits: u8, adc_bits: u8, adcs_per_xbar: usize) -> Result<Self> {
        if ![1, 2].contains(&dac_bits) {
            return Err(Error::InvalidConfig(format!("dac_bits {dac_bits} not in {{1, 2}}")));
        }
        if ![4, 6, 8].contains(&adc_bits) {
            return Err(Error::InvalidConfig(format!("adc_bits {adc_bits} not in {{4, 6, 8}}")));
        }
        if adcs_per_xbar == 0 {
            return Err(Error::InvalidConfig("adcs_per_xbar must be >= 1".into()));
        }
        Ok(Self { dac_bits, adc_bits, adcs_per_xbar })
    }

    pub fn from_reram(r: &ReRAMConfig, adcs_per_xbar: usize) -> Result<Self> {
        Self::new(r.dac_bits, r.adc_bits, adcs_per_xbar)
    }

    pub fn adc_max(&self) -> u64 {
        (1u64 << self.adc_bits) - 1
    }
}

/// ADC saturation statistics of one workload.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaturationLog {
    /// ADC conversions whose analog value exceeded full scale.
    pub clip_count: u64,
    /// Largest amount by which an analog value exceeded full scale.
    pub max_overflow: u64,
    /// Total ADC conversions performed.
    pub conversions: u64,
}

impl SaturationLog {
    pub fn is_clean(&self) -> bool {
        self.clip_count == 0
    }

    pub fn merge(&mut self, other: &SaturationLog) {
        self.clip_count += other.clip_count;
        self.max_overflow = self.max_overflow.max(other.max_overflow);
        self.conversions += other.conversions;
    }

    /// Converts one analog value and records the outcome.
    pub fn convert(&mut self, analog_sum: u64, adc_bits: u8) -> u64 {
        let (q, clipped) = adc_quantize(analog_sum, adc_bits);
        self.conversions += 1;
        if clipped {
            self.clip_count += 1;
            self.max_overflow = self.max_overflow.max(analog_sum - q);
        }
        q
    }
}

/// Ideal ADC: the reading saturates at `2^adc_bits - 1`.
pub fn adc_quantize(analog_sum: u64, adc_bits: u8) -> (u64, bool) {
    let full_scale = (1u64 << adc_bits) - 1;
    if analog_sum > full_scale {
        (full_scale, true)
    } else {
        (analog_sum, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Normal,
    /// Written column-wise so producer vectors land without a transposition buffer.
    TransposedWrite,
}

/// One physical array of unsigned cell digits, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgrammedCrossbar {
    pub spec: CrossbarSpec,
    cells: Vec<u8>,
    pub orientation: Orientation,
}

impl ProgrammedCrossbar {
    pub fn blank(spec: CrossbarSpec, orientation: Orientation) -> Self {
        Self { spec, cells: vec![0; spec.rows * spec.cols], orientation }
    }

    pub fn from_cells(spec: CrossbarSpec, cells: Vec<Vec<u8>>, orientation: Orientation) -> Result<Self> {
        if cells.len() != spec.rows || cells.iter().any(|r| r.len() != spec.cols) {
            return Err(Error::ShapeMismatch(format!("expected {}x{} cells", spec.rows, spec.cols)));
        }
        if cells.iter().flatten().any(|&c| c > spec.max_cell()) {
            return Err(Error::InvalidConfig(format!("cell value exceeds {} bits", spec.cell_bits)));
        }
        Ok(Self { spec, cells: cells.concat(), orientation })
    }

    pub fn cell(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.spec.cols + col]
    }

    pub(crate) fn set(&mut self, row: usize, col: usize, value: u8) {
        debug_assert!(value <= self.spec.max_cell());
        self.cells[row * self.spec.cols + col] = value;
    }

    /// Word-line read: drive row `r` with `digits[r]`, return the analog sum of every column.
    pub fn column_sums(&self, digits: &[u8]) -> Vec<u64> {
        let cols = self.spec.cols;
        let mut acc = vec![0u64; cols];
        for (r, &d) in digits.iter().enumerate().take(self.spec.rows) {
            if d == 0 {
                continue;
            }
            let row = &self.cells[r * cols..(r + 1) * cols];
            for (a, &c) in acc.iter_mut().zip(row) {
                *a += u64::from(d) * u64::from(c);
            }
        }
        acc
    }

    /// Transposed read: drive column `c` with `digits[c]`, return the analog sum of every row.
    pub fn row_sums(&self, digits: &[u8]) -> Vec<u64> {
        let cols = self.spec.cols;
        (0..self.spec.rows)
            .map(|r| {
                self.cells[r * cols..(r + 1) * cols]
                    .iter()
                    .zip(digits)
                    .map(|(&c, &d)| u64::from(c) * u64::from(d))
                    .sum()
            })
            .collect()
    }

    pub fn cells(&self) -> Vec<Vec<u8>> {
        self.cells.chunks(self.spec.cols).map(<[u8]>::to_vec).collect()
    }

    /// Debug dump for golden-file tests.
    pub fn to_debug_json(&self) -> serde_json::Value {
        serde_json::json!({
            "spec": self.spec,
            "orientation": self.orientation,
            "cells": self.cells(),
        })
    }
}
