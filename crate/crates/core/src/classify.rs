//! Chi-square nearest-neighbor and nearest-subspace classifiers.
//!
//! NNC assigns the label of the training histogram with the smallest
//! chi-square distance. NSC fits one principal subspace per class (the top
//! eigenvectors of the class scatter, taken from the economy SVD of the
//! stacked feature columns) and assigns the class with the smallest
//! projection residual; features are square-rooted first so frequent
//! patterns do not dominate the fit.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest are treated as zero rank.
const RANK_TOLERANCE: f64 = 1e-12;

/// A feature vector with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeature {
    pub values: Vec<f64>,
    pub label: usize,
}

/// Chi-square distance `sum (a_i - b_i)^2 / (a_i + b_i)`; terms with a zero
/// denominator contribute nothing.
pub fn chi_square(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let denom = x + y;
            if denom > 0.0 {
                (x - y) * (x - y) / denom
            } else {
                0.0
            }
        })
        .sum())
}

/// Nearest neighbor under the chi-square distance; exact ties keep the
/// earliest training index.
pub fn nnc_predict(train: &[LabeledFeature], query: &[f64]) -> Result<usize> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut best = (f64::INFINITY, 0usize);
    for sample in train {
        let d = chi_square(&sample.values, query)?;
        if d < best.0 {
            best = (d, sample.label);
        }
    }
    Ok(best.1)
}

/// Element-wise square root; rejects negative entries.
pub fn sqrt_preprocess(values: &[f64]) -> Result<Vec<f64>> {
    if let Some(idx) = values.iter().position(|&v| v < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "negative entry {} at index {idx} cannot be square-rooted",
            values[idx]
        )));
    }
    Ok(values.iter().map(|v| v.sqrt()).collect())
}

/// How many principal directions each class subspace keeps.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubspaceRule {
    /// Smallest dimension capturing this fraction of the class scatter
    /// energy (eigenvalue mass).
    Energy(f64),
    /// Fixed per-class dimension, capped at the class sample count.
    Fixed(usize),
}

impl Default for SubspaceRule {
    fn default() -> Self {
        SubspaceRule::Energy(0.999)
    }
}

impl SubspaceRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SubspaceRule::Energy(f) if f > 0.0 && f <= 1.0 => Ok(()),
            SubspaceRule::Energy(f) => Err(Error::InvalidParameter(format!(
                "energy fraction must lie in (0, 1], got {f}"
            ))),
            SubspaceRule::Fixed(n) if n >= 1 => Ok(()),
            SubspaceRule::Fixed(_) => Err(Error::InvalidParameter(
                "fixed subspace dimension must be at least 1".into(),
            )),
        }
    }
}

impl std::str::FromStr for SubspaceRule {
    type Err = Error;

    /// `"0.99"` (a fraction below 1) selects the energy rule; an integer
    /// selects a fixed dimension.
    fn from_str(s: &str) -> Result<Self> {
        if let Ok(n) = s.parse::<usize>() {
            return Ok(SubspaceRule::Fixed(n));
        }
        let f: f64 = s
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("cannot parse subspace rule '{s}'")))?;
        Ok(SubspaceRule::Energy(f))
    }
}

impl std::fmt::Display for SubspaceRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SubspaceRule::Energy(frac) => write!(f, "{frac}"),
            SubspaceRule::Fixed(n) => write!(f, "{n}"),
        }
    }
}

/// Orthonormal principal subspace of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub label: usize,
    pub feature_dim: usize,
    pub subspace_dim: usize,
    /// Column-major `feature_dim x subspace_dim` orthonormal basis.
    pub basis: Vec<f64>,
}

impl ClassModel {
    pub fn basis_column(&self, j: usize) -> &[f64] {
        &self.basis[j * self.feature_dim..(j + 1) * self.feature_dim]
    }

    /// Projection residual `||(I - B B^T) q||_2`.
    pub fn residual(&self, query: &[f64]) -> Result<f64> {
        if query.len() != self.feature_dim {
            return Err(Error::LengthMismatch {
                left: query.len(),
                right: self.feature_dim,
            });
        }
        let mut projected = vec![0.0; self.feature_dim];
        for j in 0..self.subspace_dim {
            let col = self.basis_column(j);
            let coeff: f64 = col.iter().zip(query).map(|(c, q)| c * q).sum();
            for (p, c) in projected.iter_mut().zip(col) {
                *p += coeff * c;
            }
        }
        Ok(query
            .iter()
            .zip(&projected)
            .map(|(q, p)| (q - p) * (q - p))
            .sum::<f64>()
            .sqrt())
    }
}

/// Fits one principal subspace per class. Expects sqrt-preprocessed
/// features; labels may be any usize and come back in ascending order.
pub fn fit_nsc(train: &[LabeledFeature], rule: SubspaceRule) -> Result<Vec<ClassModel>> {
    rule.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let dim = train[0].values.len();
    if let Some(bad) = train.iter().find(|s| s.values.len() != dim) {
        return Err(Error::LengthMismatch {
            left: bad.values.len(),
            right: dim,
        });
    }

    let mut by_class: BTreeMap<usize, Vec<&[f64]>> = BTreeMap::new();
    for sample in train {
        by_class.entry(sample.label).or_default().push(&sample.values);
    }

    by_class
        .into_iter()
        .map(|(label, columns)| fit_class(label, dim, &columns, rule))
        .collect()
}

fn fit_class(
    label: usize,
    dim: usize,
    columns: &[&[f64]],
    rule: SubspaceRule,
) -> Result<ClassModel> {
    let count = columns.len();
    let matrix = DMatrix::from_fn(dim, count, |i, j| columns[j][i]);
    // Left singular vectors of X are the eigenvectors of the scatter X X^T;
    // the economy decomposition avoids forming the dim x dim scatter.
    let svd = matrix.svd(true, false);
    let u = svd.u.as_ref().expect("u requested");
    let singular = &svd.singular_values;

    let energies: Vec<f64> = singular.iter().map(|s| s * s).collect();
    let largest = energies.first().copied().unwrap_or(0.0);
    if largest <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "class {label} has zero scatter; cannot span a subspace"
        )));
    }
    let rank = energies
        .iter()
        .take_while(|&&e| e > RANK_TOLERANCE * largest)
        .count()
        .max(1);

    let n = match rule {
        SubspaceRule::Fixed(n) => n.min(count),
        SubspaceRule::Energy(fraction) => {
            let total: f64 = energies.iter().sum();
            let mut acc = 0.0;
            let mut n = energies.len();
            for (i, e) in energies.iter().enumerate() {
                acc += e;
                if acc >= fraction * total {
                    n = i + 1;
                    break;
                }
            }
            n
        }
    }
    .min(rank);

    let mut basis = Vec::with_capacity(dim * n);
    for j in 0..n {
        basis.extend(u.column(j).iter());
    }
    Ok(ClassModel {
        label,
        feature_dim: dim,
        subspace_dim: n,
        basis,
    })
}

/// Assigns the class whose subspace leaves the smallest residual; exact
/// ties pick the lowest class id.
pub fn nsc_predict(models: &[ClassModel], query: &[f64]) -> Result<usize> {
    if models.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut best: Option<(f64, usize)> = None;
    for model in models {
        let r = model.residual(query)?;
        best = Some(match best {
            None => (r, model.label),
            Some((br, bl)) if r < br || (r == br && model.label < bl) => (r, model.label),
            Some(prev) => prev,
        });
    }
    Ok(best.expect("non-empty models").1)
}

const MODEL_MAGIC: &[u8; 4] = b"LJPM";
const MODEL_VERSION: u32 = 1;

/// Persists fitted models: header (magic, version, class count,
/// feature dim), then per class (label, subspace dim, column-major basis as
/// little-endian f64).
pub fn save_models(path: impl AsRef<Path>, models: &[ClassModel]) -> Result<()> {
    if models.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let dim = models[0].feature_dim;
    let file = std::fs::File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    w.write_all(&(models.len() as u32).to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    for model in models {
        if model.feature_dim != dim {
            return Err(Error::LengthMismatch {
                left: model.feature_dim,
                right: dim,
            });
        }
        w.write_all(&(model.label as u32).to_le_bytes())?;
        w.write_all(&(model.subspace_dim as u32).to_le_bytes())?;
        for v in &model.basis {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_models(path: impl AsRef<Path>) -> Result<Vec<ClassModel>> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format("not a classifier model file".into()));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    if u32::from_le_bytes(buf4) != MODEL_VERSION {
        return Err(Error::Format("unsupported model version".into()));
    }
    r.read_exact(&mut buf4)?;
    let classes = u32::from_le_bytes(buf4) as usize;
    r.read_exact(&mut buf4)?;
    let dim = u32::from_le_bytes(buf4) as usize;

    let mut models = Vec::with_capacity(classes);
    let mut buf8 = [0u8; 8];
    for _ in 0..classes {
        r.read_exact(&mut buf4)?;
        let label = u32::from_le_bytes(buf4) as usize;
        r.read_exact(&mut buf4)?;
        let subspace_dim = u32::from_le_bytes(buf4) as usize;
        let mut basis = Vec::with_capacity(dim * subspace_dim);
        for _ in 0..dim * subspace_dim {
            r.read_exact(&mut buf8)?;
            basis.push(f64::from_le_bytes(buf8));
        }
        models.push(ClassModel {
            label,
            feature_dim: dim,
            subspace_dim,
            basis,
        });
    }
    Ok(models)
}
