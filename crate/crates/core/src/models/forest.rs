//! Random forest regression baseline: bootstrap-aggregated multi-output
//! variance-reduction trees with random feature subsets at each split.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_features: usize,
    /// Nodes with at most this many rows become leaves.
    pub min_leaf_rows: usize,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 30,
            max_features: 100,
            min_leaf_rows: 5,
            bootstrap: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Leaf { value: Vec<f64> },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub n_features: usize,
    pub n_outputs: usize,
}

struct Fitter<'a> {
    x: &'a [f64],
    y: &'a [f64],
    f: usize,
    m: usize,
    cfg: &'a ForestConfig,
}

impl Fitter<'_> {
    fn mean(&self, rows: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for r in rows {
            for (o, v) in out.iter_mut().zip(&self.y[r * self.m..(r + 1) * self.m]) {
                *o += v;
            }
        }
        let n = rows.len().max(1) as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    fn is_constant(&self, rows: &[usize]) -> bool {
        let first = &self.y[rows[0] * self.m..(rows[0] + 1) * self.m];
        rows.iter()
            .all(|r| &self.y[r * self.m..(r + 1) * self.m] == first)
    }

    /// Best `(feature, threshold, gain)` over a random feature subset.
    fn best_split(&self, rows: &[usize], rng: &mut Rng) -> Option<(usize, f64)> {
        let n = rows.len();
        let k = self.cfg.max_features.min(self.f).max(1);
        let features = sample(rng, self.f, k);
        let total: Vec<f64> = {
            let mut t = vec![0.0; self.m];
            for r in rows {
                for (o, v) in t.iter_mut().zip(&self.y[r * self.m..(r + 1) * self.m]) {
                    *o += v;
                }
            }
            t
        };
        let parent_score: f64 = total.iter().map(|s| s * s).sum::<f64>() / n as f64;
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order: Vec<usize> = rows.to_vec();
        let mut left = vec![0.0; self.m];
        for feat in features.iter() {
            let val = |r: usize| self.x[r * self.f + feat];
            order.sort_by(|a, b| val(*a).total_cmp(&val(*b)).then(a.cmp(b)));
            left.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n - 1 {
                let r = order[i];
                for (o, v) in left.iter_mut().zip(&self.y[r * self.m..(r + 1) * self.m]) {
                    *o += v;
                }
                let (a, b) = (val(order[i]), val(order[i + 1]));
                if a == b {
                    continue;
                }
                let nl = (i + 1) as f64;
                let nr = (n - i - 1) as f64;
                let score: f64 = left
                    .iter()
                    .zip(&total)
                    .map(|(l, t)| l * l / nl + (t - l) * (t - l) / nr)
                    .sum();
                let gain = score - parent_score;
                if best.is_none_or(|(_, _, g)| gain > g) {
                    best = Some((feat, 0.5 * (a + b), gain));
                }
            }
        }
        best.filter(|(_, _, g)| *g > 1e-12 * parent_score.abs().max(1e-300))
            .map(|(f, t, _)| (f, t))
    }

    fn grow(&self, rows: Vec<usize>, rng: &mut Rng) -> RegressionTree {
        let mut nodes = Vec::new();
        let mut stack = vec![(rows, 0usize)];
        nodes.push(TreeNode::Leaf { value: vec![] });
        while let Some((rows, slot)) = stack.pop() {
            let split = if rows.len() <= self.cfg.min_leaf_rows || self.is_constant(&rows) {
                None
            } else {
                self.best_split(&rows, rng)
            };
            match split {
                None => nodes[slot] = TreeNode::Leaf { value: self.mean(&rows) },
                Some((feature, threshold)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) = rows
                        .iter()
                        .partition(|row| self.x[**row * self.f + feature] <= threshold);
                    let (li, ri) = (nodes.len(), nodes.len() + 1);
                    nodes.push(TreeNode::Leaf { value: vec![] });
                    nodes.push(TreeNode::Leaf { value: vec![] });
                    nodes[slot] = TreeNode::Split { feature, threshold, left: li, right: ri };
                    stack.push((r, ri));
                    stack.push((l, li));
                }
            }
        }
        RegressionTree { nodes }
    }
}

/// Fits a forest on row-major `features` (`rows × n_features`) and `targets`
/// (`rows × n_outputs`).
pub fn forest_fit(
    features: &[f64],
    targets: &[f64],
    n_features: usize,
    n_outputs: usize,
    cfg: &ForestConfig,
    rng: &mut Rng,
) -> Result<ForestModel> {
    if n_features == 0 || n_outputs == 0 || features.len() % n_features != 0 {
        return Err(Error::dim("forest features", &[n_features], &[features.len()]));
    }
    let rows = features.len() / n_features;
    if rows == 0 || targets.len() != rows * n_outputs {
        return Err(Error::dim("forest targets", &[rows * n_outputs], &[targets.len()]));
    }
    if cfg.n_trees == 0 {
        return Err(Error::Config("forest needs at least one tree".into()));
    }
    let fitter = Fitter {
        x: features,
        y: targets,
        f: n_features,
        m: n_outputs,
        cfg,
    };
    let trees = (0..cfg.n_trees)
        .map(|_| {
            let sample_rows: Vec<usize> = if cfg.bootstrap {
                (0..rows).map(|_| rng.random_range(0..rows)).collect()
            } else {
                (0..rows).collect()
            };
            fitter.grow(sample_rows, rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        n_features,
        n_outputs,
    })
}

impl ForestModel {
    /// Mean of the per-tree predictions.
    pub fn predict(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_features {
            return Err(Error::dim("forest input", &[self.n_features], &[row.len()]));
        }
        let mut out = vec![0.0; self.n_outputs];
        for t in &self.trees {
            for (o, v) in out.iter_mut().zip(t.predict(row)) {
                *o += v;
            }
        }
        let n = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        Ok(out)
    }

    /// Flat encoding: `[n_trees, (n_nodes, node…)…]`, node = `[feature or −1,
    /// threshold, left, right, value × n_outputs]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = vec![self.trees.len() as f64];
        for t in &self.trees {
            out.push(t.nodes.len() as f64);
            for n in &t.nodes {
                match n {
                    TreeNode::Leaf { value } => {
                        out.extend([-1.0, 0.0, 0.0, 0.0]);
                        out.extend(value);
                    }
                    TreeNode::Split { feature, threshold, left, right } => {
                        out.extend([*feature as f64, *threshold, *left as f64, *right as f64]);
                        out.extend(std::iter::repeat_n(0.0, self.n_outputs));
                    }
                }
            }
        }
        out
    }

    pub fn from_flat(flat: &[f64], n_features: usize, n_outputs: usize) -> Result<Self> {
        let bad = || Error::Integrity("malformed forest encoding".into());
        let mut it = flat.iter().copied();
        let n_trees = it.next().ok_or_else(bad)? as usize;
        let stride = 4 + n_outputs;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n_nodes = it.next().ok_or_else(bad)? as usize;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let rec: Vec<f64> = it.by_ref().take(stride).collect();
                if rec.len() != stride {
                    return Err(bad());
                }
                if rec[0] < 0.0 {
                    nodes.push(TreeNode::Leaf { value: rec[4..].to_vec() });
                } else {
                    let (left, right) = (rec[2] as usize, rec[3] as usize);
                    if left >= n_nodes || right >= n_nodes || rec[0] as usize >= n_features {
                        return Err(bad());
                    }
                    nodes.push(TreeNode::Split {
                        feature: rec[0] as usize,
                        threshold: rec[1],
                        left,
                        right,
                    });
                }
            }
            trees.push(RegressionTree { nodes });
        }
        if it.next().is_some() {
            return Err(bad());
        }
        Ok(Self {
            trees,
            n_features,
            n_outputs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_predicts_constant() {
        let mut rng = crate::rng::stream(1, "forest");
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = vec![4.25; 20];
        let f = forest_fit(&x, &y, 2, 1, &ForestConfig::default(), &mut rng).unwrap();
        for r in x.chunks(2) {
            assert_eq!(f.predict(r).unwrap(), vec![4.25]);
        }
        assert_eq!(f.predict(&[100.0, -100.0]).unwrap(), vec![4.25]);
    }

    #[test]
    fn single_tree_recovers_leaf_means() {
        let mut rng = crate::rng::stream(2, "forest");
        let x: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..12).map(|i| if i < 6 { 1.0 + (i % 2) as f64 } else { 10.0 }).collect();
        let cfg = ForestConfig {
            n_trees: 1,
            max_features: 1,
            min_leaf_rows: 6,
            bootstrap: false,
        };
        let f = forest_fit(&x, &y, 1, 1, &cfg, &mut rng).unwrap();
        assert_eq!(f.trees[0].nodes.len(), 3);
        assert_eq!(f.predict(&[2.0]).unwrap(), vec![1.5]);
        assert_eq!(f.predict(&[9.0]).unwrap(), vec![10.0]);
        match &f.trees[0].nodes[0] {
            TreeNode::Split { threshold, .. } => assert_eq!(*threshold, 5.5),
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn predict_rejects_wrong_width() {
        let mut rng = crate::rng::stream(3, "forest");
        let f = forest_fit(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0], 2, 1, &ForestConfig::default(), &mut rng).unwrap();
        assert!(matches!(f.predict(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn flat_encoding_round_trips() {
        let mut rng = crate::rng::stream(4, "forest");
        let x: Vec<f64> = (0..200).map(|i| ((i * 7919) % 97) as f64 / 97.0).collect();
        let y: Vec<f64> = (0..100).flat_map(|i| [x[2 * i] * 3.0, x[2 * i + 1] - 1.0]).collect();
        let cfg = ForestConfig { n_trees: 3, ..ForestConfig::default() };
        let f = forest_fit(&x, &y, 2, 2, &cfg, &mut rng).unwrap();
        let g = ForestModel::from_flat(&f.to_flat(), 2, 2).unwrap();
        assert_eq!(f, g);
        assert!(ForestModel::from_flat(&f.to_flat()[..10], 2, 2).is_err());
    }
}
