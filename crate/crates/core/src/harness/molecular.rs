//! Eigenphase tables for the molecular energy scan.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::Phase;

pub const HARTREE_TO_KCAL_MOL: f64 = 627.509;

pub const COLUMNS: [&str; 5] = ["distance", "eigenphase", "reference_energy", "scale", "offset"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MolecularRecord {
    /// Bond distance, Ångström.
    pub bond_distance: f64,
    pub eigenphase: Phase,
    /// Hartree.
    pub reference_energy: f64,
    /// Energy = scale · phase + offset, Hartree per radian and Hartree.
    pub scale: f64,
    pub offset: f64,
}

impl MolecularRecord {
    pub fn energy(&self, phase: Phase) -> f64 {
        self.scale * phase.value() + self.offset
    }

    pub fn error_kcal_mol(&self, phase: Phase) -> f64 {
        (self.energy(phase) - self.reference_energy).abs() * HARTREE_TO_KCAL_MOL
    }
}

pub fn load_molecular_table(path: &Path) -> Result<Vec<MolecularRecord>> {
    read_molecular_table(std::fs::File::open(path)?)
}

/// Parses the table; an empty input yields an empty list. Errors give the
/// 1-based file line of the offending row.
pub fn read_molecular_table<R: Read>(mut r: R) -> Result<Vec<MolecularRecord>> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = COLUMNS
        .iter()
        .map(|c| headers.iter().position(|h| h == *c).ok_or_else(|| Error::UnknownColumn((*c).to_string())))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Load { row, message: e.to_string() })?;
        let get = |k: usize| -> Result<f64> {
            let raw = rec.get(idx[k]).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Load { row, message: format!("`{}` is not a finite number: {raw:?}", COLUMNS[k]) })
        };
        let phi = get(1)?;
        let eigenphase = Phase::from_canonical(phi)
            .map_err(|_| Error::Load { row, message: format!("eigenphase {phi} outside [0, 2π)") })?;
        let bond_distance = get(0)?;
        if bond_distance <= 0.0 {
            return Err(Error::Load { row, message: format!("distance must be > 0, got {bond_distance}") });
        }
        out.push(MolecularRecord { bond_distance, eigenphase, reference_energy: get(2)?, scale: get(3)?, offset: get(4)? });
    }
    Ok(out)
}

/// Synthetic H₂-like dissociation curve from a Morse potential, with the
/// energy mapped to phase by `E = scale · φ`.
pub fn morse_table(distances: &[f64]) -> Vec<MolecularRecord> {
    const BOHR_PER_ANGSTROM: f64 = 1.889_726_124_6;
    const DEPTH: f64 = 0.1745;
    const WIDTH: f64 = 1.0282;
    const R_EQ: f64 = 1.4011;
    const PHASE_PER_HARTREE: f64 = 4.8741;
    distances
        .iter()
        .map(|&d| {
            let r = d * BOHR_PER_ANGSTROM;
            let e = -1.0 - DEPTH + DEPTH * (1.0 - (-WIDTH * (r - R_EQ)).exp()).powi(2);
            let phi = -e * PHASE_PER_HARTREE;
            MolecularRecord {
                bond_distance: d,
                eigenphase: Phase::from_canonical(phi).expect("in range"),
                reference_energy: -phi / PHASE_PER_HARTREE,
                scale: -1.0 / PHASE_PER_HARTREE,
                offset: 0.0,
            }
        })
        .collect()
}
