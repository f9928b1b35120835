//! Weighted least squares over sparse designs.
//!
//! The normal matrix is accumulated densely from the sparse rows (intercept
//! in column 0) and factored with a Cholesky decomposition. Column groups
//! whose per-row sum is the same on every row are aliased with the
//! intercept; each such group gets a sum-to-zero constraint, imposed by
//! adding `kappa * u u^T` to the normal matrix. The solution is then the
//! constrained least squares solution and the covariance is
//! `sigma^2 * (G - kappa * (G U)(G U)^T)` with `G` the inverse of the
//! augmented matrix.
//!
//! Weights are rescaled by their mean before accumulation, so multiplying
//! every weight by a constant changes nothing.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{ColumnMap, DesignError, DesignMatrix};

/// Relative pivot size below which the normal matrix counts as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-10;
/// Ridge size relative to the mean diagonal of the normal matrix.
pub const RIDGE_SCALE: f64 = 1e-8;

const PARALLEL_MIN_DIM: usize = 192;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollinearityPolicy {
    /// Fail and name the most correlated pair of columns.
    #[default]
    Error,
    /// Add a small ridge and flag it in the diagnostics.
    Ridge,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitOptions {
    pub collinearity: CollinearityPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Ridge added to the diagonal, in normalized-weight units.
    pub ridge_lambda: Option<f64>,
    /// Column groups that received a sum-to-zero constraint.
    pub constrained_groups: Vec<String>,
    /// Mean of the supplied weights; internal weights are divided by it.
    pub mean_weight: f64,
    /// Smallest relative Cholesky pivot.
    pub min_relative_pivot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub intercept: f64,
    pub intercept_se: f64,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Residual variance with weights normalized to mean one.
    pub sigma2: f64,
    pub dof: usize,
    pub n_rows: usize,
    pub column_map: ColumnMap,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn n_cols(&self) -> usize {
        self.coefficients.len()
    }

    /// Writes `column_id,estimate,std_error`, intercept first, with
    /// shortest round-trip formatting.
    pub fn write_coefficients_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["column_id", "estimate", "std_error"])?;
        out.write_record([
            "intercept".to_string(),
            self.intercept.to_string(),
            self.intercept_se.to_string(),
        ])?;
        for (i, key) in self.column_map.keys().iter().enumerate() {
            out.write_record([
                key.to_string(),
                self.coefficients[i].to_string(),
                self.std_errors[i].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("{rows} rows cannot identify {cols} columns plus an intercept")]
    TooFewRows { rows: usize, cols: usize },
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("normal matrix is singular: columns `{first}` and `{second}` have correlation {correlation:.6}")]
    Collinear {
        first: String,
        second: String,
        correlation: f64,
    },
    #[error("normal matrix is singular even after ridge {lambda:e}")]
    Singular { lambda: f64 },
}

/// Row-major square matrix.
#[derive(Debug, Clone)]
struct Square {
    n: usize,
    a: Vec<f64>,
}

impl Square {
    fn zeros(n: usize) -> Self {
        Square { n, a: vec![0.0; n * n] }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.a[i * self.n + j]
    }

    fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.at(i, i)).sum()
    }
}

struct Cholesky {
    l: Square,
    min_relative_pivot: f64,
}

/// Lower Cholesky factor of a symmetric matrix whose lower triangle is
/// filled. Returns `None` when a pivot falls to `PIVOT_TOLERANCE` times the
/// original diagonal or below.
fn cholesky(mut m: Square) -> Option<Cholesky> {
    let n = m.n;
    let mut min_rel = f64::INFINITY;
    for j in 0..n {
        let (top, bottom) = m.a.split_at_mut((j + 1) * n);
        let row_j = &mut top[j * n..];
        let diag = row_j[j];
        let d = diag - dot(&row_j[..j], &row_j[..j]);
        let rel = if diag > 0.0 { d / diag } else { f64::NEG_INFINITY };
        if rel.is_nan() || rel <= PIVOT_TOLERANCE {
            return None;
        }
        min_rel = min_rel.min(rel);
        let ljj = d.sqrt();
        row_j[j] = ljj;
        let lj = &row_j[..j];
        let update = |row_i: &mut [f64]| {
            row_i[j] = (row_i[j] - dot(&row_i[..j], lj)) / ljj;
        };
        if n - j > PARALLEL_MIN_DIM {
            bottom.par_chunks_mut(n).for_each(update);
        } else {
            bottom.chunks_mut(n).for_each(update);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            *m.at_mut(i, j) = 0.0;
        }
    }
    Some(Cholesky {
        l: m,
        min_relative_pivot: min_rel,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Cholesky {
    fn forward(&self, b: &mut [f64], start: usize) {
        let n = self.l.n;
        for i in start..n {
            let row = &self.l.a[i * n..i * n + i];
            let s = dot(&row[start..], &b[start..i]);
            b[i] = (b[i] - s) / self.l.at(i, i);
        }
    }

    fn backward(&self, b: &mut [f64]) {
        let n = self.l.n;
        for i in (0..n).rev() {
            let mut s = b[i];
            for (k, bk) in b.iter().enumerate().skip(i + 1) {
                s -= self.l.at(k, i) * bk;
            }
            b[i] = s / self.l.at(i, i);
        }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward(&mut x, 0);
        self.backward(&mut x);
        x
    }

    /// Diagonal of the inverse, one triangular solve per column.
    fn inverse_diagonal(&self) -> Vec<f64> {
        let n = self.l.n;
        let column = |j: usize| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            self.forward(&mut e, j);
            e[j..].iter().map(|v| v * v).sum::<f64>()
        };
        if n > PARALLEL_MIN_DIM {
            (0..n).into_par_iter().map(column).collect()
        } else {
            (0..n).map(column).collect()
        }
    }
}

/// Normal equations in normalized weights, intercept at index 0.
struct Normal {
    m: Square,
    b: Vec<f64>,
    mean_weight: f64,
}

fn accumulate(design: &DesignMatrix) -> Normal {
    let p = design.n_cols() + 1;
    let n = design.n_rows() as f64;
    let mean_weight = design.observations.iter().map(|o| o.weight).sum::<f64>() / n;
    let mut m = Square::zeros(p);
    let mut b = vec![0.0; p];
    let mut x: Vec<(usize, f64)> = Vec::with_capacity(16);
    for o in &design.observations {
        let w = o.weight / mean_weight;
        x.clear();
        x.push((0, 1.0));
        x.extend(o.columns.iter().map(|&(c, v)| (c + 1, v)));
        for &(i, xi) in &x {
            let wxi = w * xi;
            b[i] += wxi * o.response;
            for &(j, xj) in &x {
                if j <= i {
                    *m.at_mut(i, j) += wxi * xj;
                }
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            *m.at_mut(j, i) = m.at(i, j);
        }
    }
    Normal { m, b, mean_weight }
}

/// Indicator vectors (in shifted indices) of groups whose per-row sum is
/// constant across all rows. Groups may overlap; a group whose indicator
/// lies in the span of groups already kept adds nothing and is skipped.
fn pinned_groups(design: &DesignMatrix) -> Vec<(String, Vec<usize>)> {
    let groups = design.column_map.groups();
    let mut member: Vec<Vec<usize>> = vec![Vec::new(); design.n_cols()];
    for (g, group) in groups.iter().enumerate() {
        for &c in &group.columns {
            member[c].push(g);
        }
    }
    let mut first: Vec<Option<f64>> = vec![None; groups.len()];
    let mut constant = vec![true; groups.len()];
    let mut sums = vec![0.0; groups.len()];
    for o in &design.observations {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for &(c, v) in &o.columns {
            for &g in &member[c] {
                sums[g] += v;
            }
        }
        for g in 0..groups.len() {
            match first[g] {
                None => first[g] = Some(sums[g]),
                Some(s) if s != sums[g] => constant[g] = false,
                _ => {}
            }
        }
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for (g, pinned) in groups.iter().zip(constant) {
        if !pinned || g.columns.is_empty() {
            continue;
        }
        let mut r = vec![0.0; design.n_cols()];
        for &c in &g.columns {
            r[c] = 1.0;
        }
        for q in &basis {
            let proj = dot(&r, q);
            r.iter_mut().zip(q).for_each(|(x, y)| *x -= proj * y);
        }
        let norm2 = dot(&r, &r);
        if norm2 > 1e-9 * g.columns.len() as f64 {
            let inv = norm2.sqrt().recip();
            basis.push(r.iter().map(|x| x * inv).collect());
            kept.push((g.name.clone(), g.columns.iter().map(|c| c + 1).collect()));
        }
    }
    kept
}

/// Pair of distinct columns (intercept excluded) with the largest absolute
/// cosine in the weighted normal matrix.
fn most_collinear(m: &Square, map: &ColumnMap) -> FitError {
    let mut best = (0, 0, -1.0f64, 0.0);
    for i in 1..m.n {
        for j in 1..i {
            let denom = (m.at(i, i) * m.at(j, j)).sqrt();
            let r = if denom > 0.0 { m.at(i, j) / denom } else { 0.0 };
            if r.abs() > best.2 {
                best = (j, i, r.abs(), r);
            }
        }
    }
    if best.2 < 0.0 {
        return FitError::Singular { lambda: 0.0 };
    }
    FitError::Collinear {
        first: map.key(best.0 - 1).to_string(),
        second: map.key(best.1 - 1).to_string(),
        correlation: best.3,
    }
}

/// Fits `response ~ intercept + columns` by weighted least squares.
pub fn fit(design: &DesignMatrix, options: FitOptions) -> Result<FitResult, FitError> {
    design.validate()?;
    let (n, k) = (design.n_rows(), design.n_cols());
    if n <= k + 1 {
        return Err(FitError::TooFewRows { rows: n, cols: k });
    }
    let Normal { m, b, mean_weight } = accumulate(design);
    let p = m.n;
    let constraints = pinned_groups(design);
    let kappa = m.trace() / p as f64;
    let mut h = m.clone();
    for (_, u) in &constraints {
        for &i in u {
            for &j in u {
                *h.at_mut(i, j) += kappa;
            }
        }
    }

    let mut ridge = None;
    let chol = match cholesky(h.clone()) {
        Some(c) => c,
        None => match options.collinearity {
            CollinearityPolicy::Error => return Err(most_collinear(&m, &design.column_map)),
            CollinearityPolicy::Ridge => {
                let lambda = RIDGE_SCALE * kappa;
                for i in 1..p {
                    *h.at_mut(i, i) += lambda;
                }
                ridge = Some(lambda);
                cholesky(h).ok_or(FitError::Singular { lambda })?
            }
        },
    };

    let beta = chol.solve(&b);
    let mut rss = 0.0;
    for o in &design.observations {
        let fitted = beta[0] + o.columns.iter().map(|&(c, v)| v * beta[c + 1]).sum::<f64>();
        let r = o.response - fitted;
        rss += o.weight / mean_weight * r * r;
    }
    let dof = n + constraints.len() - p;
    let sigma2 = rss / dof as f64;

    let mut var = chol.inverse_diagonal();
    for (_, u) in &constraints {
        let mut e = vec![0.0; p];
        for &i in u {
            e[i] = 1.0;
        }
        let gu = chol.solve(&e);
        for (v, g) in var.iter_mut().zip(&gu) {
            *v -= kappa * g * g;
        }
    }
    let se: Vec<f64> = var.iter().map(|v| (sigma2 * v.max(0.0)).sqrt()).collect();

    Ok(FitResult {
        intercept: beta[0],
        intercept_se: se[0],
        coefficients: beta[1..].to_vec(),
        std_errors: se[1..].to_vec(),
        sigma2,
        dof,
        n_rows: n,
        column_map: design.column_map.clone(),
        diagnostics: FitDiagnostics {
            ridge_lambda: ridge,
            constrained_groups: constraints.into_iter().map(|(name, _)| name).collect(),
            mean_weight,
            min_relative_pivot: chol.min_relative_pivot,
        },
    })
}
