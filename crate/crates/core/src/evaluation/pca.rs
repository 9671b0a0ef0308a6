use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Principal axes of a point cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit axes, largest variance first.
    pub components: Vec<Vec<f64>>,
    /// Share of total variance per kept axis.
    pub explained: Vec<f64>,
    pub projected: Vec<Vec<f64>>,
}

impl Pca {
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((a, v), m)| a * (v - m)).sum())
            .collect()
    }

    pub fn reconstruct(&self, p: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, s) in self.components.iter().zip(p) {
            for (o, a) in out.iter_mut().zip(c) {
                *o += s * a;
            }
        }
        out
    }
}

/// Centers `rows`, eigendecomposes their covariance and projects onto the top
/// `dims` axes. Axis signs are fixed so the largest-magnitude loading is positive.
pub fn pca_project(rows: &[Vec<f64>], dims: usize) -> Result<Pca> {
    let n = rows.len();
    let f = rows.first().map_or(0, Vec::len);
    if dims == 0 || dims > f {
        return Err(Error::Domain(format!("cannot keep {dims} components of {f} features")));
    }
    if n < dims {
        return Err(Error::Domain(format!("{n} rows are too few for {dims} components")));
    }
    if rows.iter().any(|r| r.len() != f) {
        return Err(Error::dim("pca rows", &[f], &[]));
    }
    let mut mean = vec![0.0; f];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let x = DMatrix::from_fn(n, f, |i, j| rows[i][j] - mean[j]);
    let cov = x.transpose() * &x / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let mut components = Vec::with_capacity(dims);
    let mut explained = Vec::with_capacity(dims);
    for k in order.into_iter().take(dims) {
        let mut c: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let lead = c.iter().copied().fold(0.0_f64, |a, v| if v.abs() > a.abs() { v } else { a });
        if lead < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(c);
        explained.push(if total > 0.0 { eig.eigenvalues[k].max(0.0) / total } else { 0.0 });
    }
    let mut pca = Pca {
        mean,
        components,
        explained,
        projected: Vec::new(),
    };
    pca.projected = rows.iter().map(|r| pca.project(r)).collect();
    Ok(pca)
}
