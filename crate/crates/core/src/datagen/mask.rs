//! Splitting a flattened diagram into observed (`v`) and hidden (`h`) parts.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

/// Which entries of a `[P × T]` target are unspecified.
///
/// Row masks hide whole phase rows; cell masks list flattened indices
/// (phase-major, then temperature) and leave `hidden_phase_rows` empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mask {
    pub ratio: f64,
    pub hidden_phase_rows: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hidden_cells: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    Rows,
    Cells,
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Domain(format!("mask ratio {ratio} outside [0, 1]")));
    }
    Ok(())
}

impl Mask {
    /// Nothing hidden.
    pub fn none() -> Self {
        Self {
            ratio: 0.0,
            hidden_phase_rows: Vec::new(),
            hidden_cells: Vec::new(),
        }
    }

    /// Hides `round(ratio · phases)` phase rows chosen at random.
    pub fn random_rows(ratio: f64, phases: usize, rng: &mut Rng) -> Result<Self> {
        check_ratio(ratio)?;
        let k = (ratio * phases as f64).round() as usize;
        let mut rows = sample(rng, phases, k).into_vec();
        rows.sort_unstable();
        Ok(Self {
            ratio,
            hidden_phase_rows: rows,
            hidden_cells: Vec::new(),
        })
    }

    /// Hides `round(ratio · phases · temps)` individual cells.
    pub fn random_cells(ratio: f64, phases: usize, temps: usize, rng: &mut Rng) -> Result<Self> {
        check_ratio(ratio)?;
        let n = phases * temps;
        let k = (ratio * n as f64).round() as usize;
        let mut cells = sample(rng, n, k).into_vec();
        cells.sort_unstable();
        Ok(Self {
            ratio,
            hidden_phase_rows: Vec::new(),
            hidden_cells: cells,
        })
    }

    pub fn random(mode: MaskMode, ratio: f64, phases: usize, temps: usize, rng: &mut Rng) -> Result<Self> {
        match mode {
            MaskMode::Rows => Self::random_rows(ratio, phases, rng),
            MaskMode::Cells => Self::random_cells(ratio, phases, temps, rng),
        }
    }

    /// Mask from explicit hidden flags (length `phases · temps`). Fully hidden
    /// rows are reported as rows, everything else as cells.
    pub fn from_flags(flags: &[bool], phases: usize, temps: usize) -> Result<Self> {
        if flags.len() != phases * temps {
            return Err(Error::dim("mask flags", &[phases * temps], &[flags.len()]));
        }
        let rows: Vec<usize> = (0..phases)
            .filter(|p| flags[p * temps..(p + 1) * temps].iter().all(|f| *f))
            .collect();
        let hidden = flags.iter().filter(|f| **f).count();
        let cells_only: Vec<usize> = (0..flags.len())
            .filter(|i| flags[*i] && !rows.contains(&(i / temps)))
            .collect();
        if cells_only.is_empty() {
            Ok(Self {
                ratio: rows.len() as f64 / phases as f64,
                hidden_phase_rows: rows,
                hidden_cells: Vec::new(),
            })
        } else {
            Ok(Self {
                ratio: hidden as f64 / flags.len() as f64,
                hidden_phase_rows: Vec::new(),
                hidden_cells: (0..flags.len()).filter(|i| flags[*i]).collect(),
            })
        }
    }

    pub fn validate(&self, phases: usize, temps: usize) -> Result<()> {
        check_ratio(self.ratio)?;
        if let Some(r) = self.hidden_phase_rows.iter().find(|r| **r >= phases) {
            return Err(Error::Domain(format!("hidden phase row {r} out of range for {phases} phases")));
        }
        if let Some(c) = self.hidden_cells.iter().find(|c| **c >= phases * temps) {
            return Err(Error::Domain(format!("hidden cell {c} out of range")));
        }
        if self.hidden_cells.is_empty() && self.hidden_phase_rows.len() != (self.ratio * phases as f64).round() as usize {
            return Err(Error::Domain(format!(
                "{} hidden rows do not match ratio {} of {phases} phases",
                self.hidden_phase_rows.len(),
                self.ratio
            )));
        }
        Ok(())
    }

    /// Per-entry hidden flags in flattening order.
    pub fn hidden_flags(&self, phases: usize, temps: usize) -> Vec<bool> {
        let mut flags = vec![false; phases * temps];
        for r in &self.hidden_phase_rows {
            flags[r * temps..(r + 1) * temps].iter_mut().for_each(|f| *f = true);
        }
        for c in &self.hidden_cells {
            flags[*c] = true;
        }
        flags
    }

    pub fn is_empty(&self) -> bool {
        self.hidden_phase_rows.is_empty() && self.hidden_cells.is_empty()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }
}

/// Splits `values` into `(v, h)` in flattening order.
pub fn apply_mask(values: &[f64], mask: &Mask, phases: usize, temps: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if values.len() != phases * temps {
        return Err(Error::dim("diagram", &[phases, temps], &[values.len()]));
    }
    mask.validate(phases, temps)?;
    let flags = mask.hidden_flags(phases, temps);
    let mut v = Vec::new();
    let mut h = Vec::new();
    for (x, hidden) in values.iter().zip(flags) {
        if hidden { h.push(*x) } else { v.push(*x) }
    }
    Ok((v, h))
}

/// Inverse of [`apply_mask`].
pub fn merge(v: &[f64], h: &[f64], mask: &Mask, phases: usize, temps: usize) -> Result<Vec<f64>> {
    let flags = mask.hidden_flags(phases, temps);
    let n_hidden = flags.iter().filter(|f| **f).count();
    if h.len() != n_hidden || v.len() + h.len() != flags.len() {
        return Err(Error::dim("mask merge", &[flags.len() - n_hidden, n_hidden], &[v.len(), h.len()]));
    }
    let (mut vi, mut hi) = (v.iter(), h.iter());
    Ok(flags
        .iter()
        .map(|f| if *f { *hi.next().unwrap() } else { *vi.next().unwrap() })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ratio_extremes_and_half() {
        let mut rng = crate::rng::stream(1, "mask");
        let d: Vec<f64> = (0..8 * 31).map(|i| i as f64).collect();
        let (v, h) = apply_mask(&d, &Mask::random_rows(0.0, 8, &mut rng).unwrap(), 8, 31).unwrap();
        assert_eq!((v.len(), h.len()), (248, 0));
        assert_eq!(v, d);
        let (v, h) = apply_mask(&d, &Mask::random_rows(1.0, 8, &mut rng).unwrap(), 8, 31).unwrap();
        assert_eq!((v.len(), h.len()), (0, 248));
        let m = Mask::random_rows(0.5, 8, &mut rng).unwrap();
        assert_eq!(m.hidden_phase_rows.len(), 4);
    }

    #[test]
    fn flags_round_trip_through_mask() {
        let mut rng = crate::rng::stream(2, "mask");
        let m = Mask::random_rows(0.25, 8, &mut rng).unwrap();
        let back = Mask::from_flags(&m.hidden_flags(8, 31), 8, 31).unwrap();
        assert_eq!(m, back);
        let c = Mask::random_cells(0.3, 8, 31, &mut rng).unwrap();
        let back = Mask::from_flags(&c.hidden_flags(8, 31), 8, 31).unwrap();
        assert_eq!(c.hidden_cells, back.hidden_cells);
    }

    #[test]
    fn out_of_range_rows_rejected() {
        let m = Mask {
            ratio: 0.125,
            hidden_phase_rows: vec![9],
            hidden_cells: vec![],
        };
        assert!(matches!(apply_mask(&[0.0; 16], &m, 8, 2), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn merge_inverts_apply(seed in 0u64..1000, ratio in 0.0f64..=1.0, cells in any::<bool>()) {
            let mut rng = crate::rng::stream(seed, "mask-prop");
            let d: Vec<f64> = (0..8 * 5).map(|i| (i as f64 * 0.731).sin()).collect();
            let m = if cells { Mask::random_cells(ratio, 8, 5, &mut rng).unwrap() } else { Mask::random_rows(ratio, 8, &mut rng).unwrap() };
            let (v, h) = apply_mask(&d, &m, 8, 5).unwrap();
            let back = merge(&v, &h, &m, 8, 5).unwrap();
            prop_assert!(back.iter().zip(&d).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
