//! Dataset construction against the simulator: the neighbourhood of the base
//! alloys, the FCC-search driven set, masks and folds.

mod bo;
mod mask;

pub use bo::{
    bo_objective, bo_search, expected_improvement, gp_ei_minimize, BoObjective, BoObjectiveConfig, BoPoint, Evaluation,
    GpEiConfig, SearchBox,
};
pub use mask::{apply_mask, merge, Mask, MaskMode};

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::rng::{stream, Rng};
use crate::simulator::{base_alloys, base_fcc_line, swap, Composition, PhaseDiagram, SimulatorSpec, AUX, ELEMENTS, M};
use crate::{Error, Result};

pub const DATASET_FILE: &str = "dataset.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_FORMAT: u32 = 1;
pub const FOLDS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Neighborhood,
    BoDriven,
}

/// Aligned compositions and flattened diagrams with fold ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub labels: Vec<String>,
    pub temperatures: Vec<f64>,
    pub compositions: Vec<Composition>,
    /// Phase-major flattened diagrams, `labels.len() · temperatures.len()` wide.
    pub targets: Vec<Vec<f64>>,
    pub folds: Vec<usize>,
    pub manifest: DatasetManifest,
}

/// Generation parameters echoed next to the CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub provenance: Provenance,
    pub size: usize,
    pub seed: u64,
    pub relative_perturbation: f64,
    pub symmetrize: bool,
    pub spec_seed: u64,
    pub spec_sha256: String,
    pub fold_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchSummary>,
    #[serde(default)]
    pub csv_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSummary {
    pub budget: usize,
    pub line: (f64, f64),
    pub region_points: usize,
    pub selected: usize,
    pub per_point: usize,
}

impl Dataset {
    pub fn width(&self) -> usize {
        self.labels.len() * self.temperatures.len()
    }

    pub fn len(&self) -> usize {
        self.compositions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compositions.is_empty()
    }

    pub fn phases(&self) -> usize {
        self.labels.len()
    }

    pub fn temps(&self) -> usize {
        self.temperatures.len()
    }

    /// Column names of the CSV.
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ELEMENTS.iter().map(|e| format!("element:{e}")).collect();
        h.extend(
            PhaseDiagram::feature_names(&self.labels, &self.temperatures)
                .into_iter()
                .map(|n| format!("phase:{n}")),
        );
        h.push("fold".into());
        h
    }

    pub fn target_names(&self) -> Vec<String> {
        PhaseDiagram::feature_names(&self.labels, &self.temperatures)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.compositions.len();
        if self.targets.len() != n || self.folds.len() != n {
            return Err(Error::dim("dataset rows", &[n, n], &[self.targets.len(), self.folds.len()]));
        }
        let w = self.width();
        if let Some(t) = self.targets.iter().find(|t| t.len() != w) {
            return Err(Error::dim("dataset target", &[w], &[t.len()]));
        }
        for c in &self.compositions {
            c.validate()?;
        }
        Ok(())
    }

    /// Row indices with `folds[i] == fold`, and the rest.
    pub fn split(&self, test_fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.len()).partition(|i| self.folds[*i] != test_fold)
    }

    /// Every stored diagram equals a fresh simulation.
    pub fn verify(&self, spec: &SimulatorSpec) -> Result<()> {
        for (i, (x, y)) in self.compositions.iter().zip(&self.targets).enumerate() {
            if spec.simulate(x)?.values != *y {
                return Err(Error::Integrity(format!("row {i} does not match the simulator")));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
        w.write_record(self.header()).map_err(to_err)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.compositions[i].0.iter().map(|v| format!("{v:.16e}")).collect();
            rec.extend(self.targets[i].iter().map(|v| format!("{v:.16e}")));
            rec.push(self.folds[i].to_string());
            w.write_record(&rec).map_err(to_err)?;
        }
        w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))
    }

    /// Parses CSV bytes; labels and temperatures come from the header.
    pub fn from_csv(bytes: &[u8], manifest: DatasetManifest, path: &Path) -> Result<Self> {
        let perr = |d: String| Error::parse(path, d);
        let mut r = csv::Reader::from_reader(bytes);
        let header: Vec<String> = r
            .headers()
            .map_err(|e| perr(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.len() < M + 2 || header.last().map(String::as_str) != Some("fold") {
            return Err(perr("header must list elements, phases and a final fold column".into()));
        }
        for (h, e) in header.iter().zip(ELEMENTS) {
            if *h != format!("element:{e}") {
                return Err(perr(format!("expected column element:{e}, found {h}")));
            }
        }
        let mut labels: Vec<String> = Vec::new();
        let mut temperatures: Vec<f64> = Vec::new();
        let mut cells: Vec<(String, f64)> = Vec::new();
        for h in &header[M..header.len() - 1] {
            let rest = h
                .strip_prefix("phase:")
                .ok_or_else(|| perr(format!("unexpected column {h}")))?;
            let (label, temp) = rest.rsplit_once('@').ok_or_else(|| perr(format!("malformed column {h}")))?;
            let temp: f64 = temp.parse().map_err(|_| perr(format!("bad temperature in {h}")))?;
            if !labels.iter().any(|l| l == label) {
                labels.push(label.to_string());
            }
            if labels.len() == 1 {
                temperatures.push(temp);
            }
            cells.push((label.to_string(), temp));
        }
        let expected = PhaseDiagram::feature_names(&labels, &temperatures);
        let found: Vec<String> = cells.iter().map(|(l, t)| format!("{l}@{t}")).collect();
        if expected != found {
            return Err(perr("phase columns must be phase-major over one shared temperature grid".into()));
        }
        let width = labels.len() * temperatures.len();
        let mut ds = Dataset {
            labels,
            temperatures,
            compositions: Vec::new(),
            targets: Vec::new(),
            folds: Vec::new(),
            manifest,
        };
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| perr(e.to_string()))?;
            if rec.len() != header.len() {
                return Err(perr(format!("row {row} has {} fields, expected {}", rec.len(), header.len())));
            }
            let num = |j: usize| -> Result<f64> {
                rec[j]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| perr(format!("row {row}, column {}: not a number", header[j])))
            };
            let mut f = [0.0; M];
            for (j, v) in f.iter_mut().enumerate() {
                *v = num(j)?;
            }
            let target = (M..M + width).map(num).collect::<Result<Vec<f64>>>()?;
            let fold: usize = rec[header.len() - 1]
                .trim()
                .parse()
                .map_err(|_| perr(format!("row {row}: bad fold id")))?;
            ds.compositions.push(Composition::new(f).map_err(|e| perr(format!("row {row}: {e}")))?);
            ds.targets.push(target);
            ds.folds.push(fold);
        }
        Ok(ds)
    }

    /// Writes `dataset.csv` and `manifest.json` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let bytes = self.to_csv()?;
        let mut manifest = self.manifest.clone();
        manifest.csv_sha256 = hex::encode(Sha256::digest(&bytes));
        let csv_path = dir.join(DATASET_FILE);
        std::fs::write(&csv_path, &bytes).map_err(|e| Error::io(&csv_path, e))?;
        write_json(&dir.join(MANIFEST_FILE), &manifest)
    }

    /// Loads from a dataset directory or its CSV file; the manifest must sit
    /// next to the CSV.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::io(path, std::io::ErrorKind::NotFound.into()));
        }
        let (csv_path, dir): (PathBuf, PathBuf) = if path.is_dir() {
            (path.join(DATASET_FILE), path.to_path_buf())
        } else {
            (path.to_path_buf(), path.parent().map(Path::to_path_buf).unwrap_or_default())
        };
        let man_path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&man_path).map_err(|e| Error::io(&man_path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::parse(&man_path, e.to_string()))?;
        if manifest.format_version != DATASET_FORMAT {
            return Err(Error::Version {
                found: manifest.format_version.to_string(),
                expected: DATASET_FORMAT.to_string(),
            });
        }
        let bytes = std::fs::read(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        if !manifest.csv_sha256.is_empty() && manifest.csv_sha256 != hex::encode(Sha256::digest(&bytes)) {
            return Err(Error::Integrity(format!("{} does not match its manifest hash", csv_path.display())));
        }
        let ds = Self::from_csv(&bytes, manifest, &csv_path)?;
        ds.validate()?;
        Ok(ds)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// SHA-256 of the spec's canonical JSON.
pub fn spec_digest(spec: &SimulatorSpec) -> Result<String> {
    Ok(hex::encode(Sha256::digest(spec.to_json()?.as_bytes())))
}

/// Splits `0..n` into `k` shuffled folds whose sizes differ by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || n < k {
        return Err(Error::Domain(format!("cannot split {n} rows into {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, "kfold"));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = idx[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

/// Fold id per row.
pub fn fold_ids(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut ids = vec![0; n];
    for (f, rows) in kfold_split(n, k, seed)?.iter().enumerate() {
        for r in rows {
            ids[*r] = f;
        }
    }
    Ok(ids)
}

/// Scales every auxiliary element by an independent factor in
/// `[1 − rel, 1 + rel]`, with Al as the balance. Draws that would break the
/// optional auxiliary cap (or push Al negative) are redrawn.
pub fn perturb_neighborhood(base: &Composition, rel: f64, n: usize, cap: Option<f64>, rng: &mut Rng) -> Result<Vec<Composition>> {
    if !(rel > 0.0 && rel < 1.0) {
        return Err(Error::Domain(format!("relative perturbation {rel} outside (0, 1)")));
    }
    base.validate()?;
    let limit = cap.unwrap_or(100.0);
    if base.aux_total() * (1.0 - rel) > limit {
        return Err(Error::Domain(format!("base exceeds the {limit}% cap even at the lowest scaling")));
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let aux: Vec<f64> = base
            .aux()
            .iter()
            .map(|v| v * rng.random_range(1.0 - rel..=1.0 + rel))
            .collect();
        if aux.iter().sum::<f64>() <= limit {
            out.push(Composition::from_aux(&aux)?);
        }
    }
    Ok(out)
}

/// Simulates every composition, splitting the work over `jobs` threads.
pub fn simulate_all(spec: &SimulatorSpec, xs: &[Composition], jobs: usize) -> Result<Vec<Vec<f64>>> {
    let jobs = jobs.max(1).min(xs.len().max(1));
    if jobs == 1 {
        return xs.iter().map(|x| spec.simulate(x).map(|d| d.values)).collect();
    }
    let chunk = xs.len().div_ceil(jobs);
    let parts: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|s| {
        let handles: Vec<_> = xs
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(|x| spec.simulate(x).map(|d| d.values)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(xs.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildOptions {
    pub kind: Provenance,
    pub size: usize,
    pub seed: u64,
    pub relative_perturbation: f64,
    /// Swap the symmetric pair on a random half of the rows.
    pub symmetrize: bool,
    pub search_budget: usize,
    pub per_point: usize,
    pub engine: GpEiConfig,
    #[serde(skip)]
    pub jobs: usize,
}

impl BuildOptions {
    pub fn new(kind: Provenance, size: usize, seed: u64) -> Self {
        Self {
            kind,
            size,
            seed,
            relative_perturbation: 0.2,
            symmetrize: false,
            search_budget: 200,
            per_point: 15,
            engine: GpEiConfig::default(),
            jobs: 1,
        }
    }
}

pub fn build_dataset(spec: &SimulatorSpec, opts: &BuildOptions) -> Result<Dataset> {
    if opts.size < FOLDS {
        return Err(Error::Config(format!("dataset size {} is below the {FOLDS} folds", opts.size)));
    }
    let rel = opts.relative_perturbation;
    let mut rng = stream(opts.seed, "dataset");
    let mut search = None;
    let mut xs: Vec<Composition> = match opts.kind {
        Provenance::Neighborhood => {
            let bases = base_alloys();
            let per = opts.size / bases.len();
            let extra = opts.size % bases.len();
            let mut xs = Vec::with_capacity(opts.size);
            for (i, (_, b)) in bases.iter().enumerate() {
                xs.extend(perturb_neighborhood(b, rel, per + usize::from(i < extra), None, &mut rng)?);
            }
            xs
        }
        Provenance::BoDriven => {
            let line = base_fcc_line(spec)?;
            let cfg = BoObjectiveConfig::with_line(line);
            let bx = SearchBox::alloy_default();
            let mut search_rng = stream(opts.seed, "dataset-search");
            let trace = bo_search(&cfg, spec, &bx, opts.search_budget, &opts.engine, &mut search_rng)?;
            let mut region: Vec<&BoPoint> = trace.iter().filter(|p| cfg.in_region(p.y200, p.y500)).collect();
            let per = opts.per_point.max(1);
            let needed = opts.size.div_ceil(per);
            if region.len() < needed {
                return Err(Error::Shortfall {
                    needed,
                    found: region.len(),
                });
            }
            region.shuffle(&mut rng);
            let chosen = &region[..needed];
            search = Some(SearchSummary {
                budget: opts.search_budget,
                line,
                region_points: region.len(),
                selected: needed,
                per_point: per,
            });
            let mut xs = Vec::with_capacity(needed * per);
            for p in chosen {
                xs.extend(perturb_neighborhood(&p.composition, rel, per, Some(cfg.constraint_cap), &mut rng)?);
            }
            xs.truncate(opts.size);
            xs
        }
    };
    if opts.symmetrize {
        for x in xs.iter_mut() {
            if rng.random_bool(0.5) {
                *x = swap(x, spec.symmetric_pair);
            }
        }
    }
    let targets = simulate_all(spec, &xs, opts.jobs)?;
    let folds = fold_ids(xs.len(), FOLDS, opts.seed)?;
    let mut fold_sizes = vec![0; FOLDS];
    for f in &folds {
        fold_sizes[*f] += 1;
    }
    let ds = Dataset {
        labels: spec.labels.clone(),
        temperatures: spec.temperatures.clone(),
        compositions: std::mem::take(&mut xs),
        targets,
        folds,
        manifest: DatasetManifest {
            format_version: DATASET_FORMAT,
            provenance: opts.kind,
            size: opts.size,
            seed: opts.seed,
            relative_perturbation: rel,
            symmetrize: opts.symmetrize,
            spec_seed: spec.seed,
            spec_sha256: spec_digest(spec)?,
            fold_sizes,
            search,
            csv_sha256: String::new(),
        },
    };
    ds.validate()?;
    Ok(ds)
}

/// Sum of the auxiliary fractions of every row.
pub fn aux_totals(ds: &Dataset) -> Vec<f64> {
    ds.compositions.iter().map(|c| c.0[..AUX].iter().sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::base_alloy;

    fn spec() -> SimulatorSpec {
        SimulatorSpec::generate(7, 8).unwrap()
    }

    #[test]
    fn perturbation_bounds() {
        let mut rng = stream(1, "perturb");
        let b = base_alloy("2024").unwrap();
        for x in perturb_neighborhood(&b, 0.2, 500, None, &mut rng).unwrap() {
            assert!(x.0[1] >= 3.48 - 1e-12 && x.0[1] <= 5.22 + 1e-12);
            assert_eq!(x.0[5], 0.0);
            assert!((x.0.iter().sum::<f64>() - 100.0).abs() <= 1e-9);
        }
        assert!(perturb_neighborhood(&b, 1.0, 1, None, &mut rng).is_err());
    }

    #[test]
    fn kfold_examples() {
        let f = kfold_split(10, 5, 3).unwrap();
        assert!(f.iter().all(|g| g.len() == 2));
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(f, kfold_split(10, 5, 3).unwrap());
        assert!(matches!(kfold_split(3, 5, 0), Err(Error::Domain(_))));
        let g = kfold_split(13, 5, 9).unwrap();
        let sizes: Vec<usize> = g.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn neighborhood_counts_and_regeneration() {
        let s = spec();
        let ds = build_dataset(&s, &BuildOptions::new(Provenance::Neighborhood, 150, 11)).unwrap();
        assert_eq!(ds.len(), 150);
        assert_eq!(ds.manifest.fold_sizes, vec![30; 5]);
        for chunk in ds.compositions.chunks(5) {
            assert!(chunk.windows(2).all(|w| (w[0].0[AUX] - w[1].0[AUX]).abs() < 15.0));
        }
        ds.verify(&s).unwrap();
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = spec();
        let ds = build_dataset(&s, &BuildOptions::new(Provenance::Neighborhood, 60, 12)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.compositions, ds.compositions);
        assert_eq!(back.targets, ds.targets);
        assert_eq!(back.folds, ds.folds);
        assert_eq!(back.header()[0], "element:Cr");
        assert_eq!(back.header()[10], "phase:LIQUID@0");
        let bytes = std::fs::read(dir.path().join(DATASET_FILE)).unwrap();
        std::fs::write(dir.path().join(DATASET_FILE), &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(Dataset::load(dir.path()), Err(Error::Integrity(_))));
    }

    #[test]
    fn symmetrize_swaps_about_half() {
        let s = spec();
        let mut o = BuildOptions::new(Provenance::Neighborhood, 300, 13);
        o.symmetrize = true;
        let ds = build_dataset(&s, &o).unwrap();
        ds.verify(&s).unwrap();
        let swapped = ds
            .compositions
            .chunks(10)
            .zip(base_alloys())
            .map(|(rows, (_, b))| {
                rows.iter()
                    .filter(|x| (x.0[2] - b.0[2]).abs() > (x.0[4] - b.0[4]).abs() + 1e-12 && b.0[2] != b.0[4])
                    .count()
            })
            .sum::<usize>();
        assert!(swapped > 90 && swapped < 210, "{swapped}");
    }
}
