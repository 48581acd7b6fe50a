//! Domain types: balanced panels, covariate blocks, cluster label spaces,
//! block parameters and unit assignments, plus the least-squares sample risk.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Balanced panel of `n` units observed over `t` periods with `p` covariates.
///
/// `y` is stored unit-major (`y[i * t + s]`), `x` likewise with covariates
/// innermost (`x[(i * t + s) * p + j]`).
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    n: usize,
    t: usize,
    p: usize,
    y: Vec<f64>,
    x: Vec<f64>,
}

impl PanelData {
    pub fn new(n: usize, t: usize, p: usize, y: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        if n == 0 || t == 0 || p == 0 {
            return Err(Error::Shape(format!(
                "panel dimensions must be positive, got N={n}, T={t}, p={p}"
            )));
        }
        if y.len() != n * t {
            return Err(Error::Shape(format!(
                "y has {} entries, expected N*T = {}",
                y.len(),
                n * t
            )));
        }
        if x.len() != n * t * p {
            return Err(Error::Shape(format!(
                "x has {} entries, expected N*T*p = {}",
                x.len(),
                n * t * p
            )));
        }
        if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!(
                "non-finite response at unit {}, period {}",
                pos / t,
                pos % t
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            let obs = pos / p;
            return Err(Error::Shape(format!(
                "non-finite covariate {} at unit {}, period {}",
                pos % p,
                obs / t,
                obs % t
            )));
        }
        Ok(Self { n, t, p, y, x })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    #[inline]
    pub fn response(&self, i: usize, s: usize) -> f64 {
        self.y[i * self.t + s]
    }

    #[inline]
    pub fn covariates(&self, i: usize, s: usize) -> &[f64] {
        let start = (i * self.t + s) * self.p;
        &self.x[start..start + self.p]
    }

    pub fn unit_response(&self, i: usize) -> &[f64] {
        &self.y[i * self.t..(i + 1) * self.t]
    }

    /// All `t * p` covariate values of unit `i`, period-major.
    pub fn unit_covariates(&self, i: usize) -> &[f64] {
        let w = self.t * self.p;
        &self.x[i * w..(i + 1) * w]
    }

    /// Returns a copy with units reordered so that new unit `r` is old unit `order[r]`.
    pub fn select_units(&self, order: &[usize]) -> Result<Self> {
        let mut y = Vec::with_capacity(order.len() * self.t);
        let mut x = Vec::with_capacity(order.len() * self.t * self.p);
        for &i in order {
            if i >= self.n {
                return Err(Error::Shape(format!("unit index {i} out of range")));
            }
            y.extend_from_slice(self.unit_response(i));
            x.extend_from_slice(self.unit_covariates(i));
        }
        Self::new(order.len(), self.t, self.p, y, x)
    }

    /// Same covariates, different response.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.n, self.t, self.p, y, self.x.clone())
    }
}

/// Partition of the covariate vector into contiguous blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BlockSpec {
    dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockSpec {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Config("at least one covariate block is required".into()));
        }
        if dims.contains(&0) {
            return Err(Error::Config(format!("block dimensions must be positive: {dims:?}")));
        }
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &d in &dims {
            acc += d;
            offsets.push(acc);
        }
        Ok(Self { dims, offsets })
    }

    /// A single block spanning all `p` covariates.
    pub fn single(p: usize) -> Result<Self> {
        Self::new(vec![p])
    }

    pub fn num_blocks(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self, block: usize) -> usize {
        self.dims[block]
    }

    /// Covariate columns belonging to `block`.
    pub fn range(&self, block: usize) -> Range<usize> {
        self.offsets[block]..self.offsets[block + 1]
    }

    pub fn total_dim(&self) -> usize {
        self.offsets[self.dims.len()]
    }

    pub fn check_panel(&self, data: &PanelData) -> Result<()> {
        if self.total_dim() != data.p() {
            return Err(Error::Shape(format!(
                "block dimensions {:?} sum to {}, panel has p = {}",
                self.dims,
                self.total_dim(),
                data.p()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for BlockSpec {
    type Error = Error;
    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Self::new(dims)
    }
}

impl From<BlockSpec> for Vec<usize> {
    fn from(spec: BlockSpec) -> Self {
        spec.dims
    }
}

/// Number of latent types per block; labels enumerate row-major over blocks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ClusterConfig {
    counts: Vec<usize>,
}

impl ClusterConfig {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Config("cluster counts must be non-empty".into()));
        }
        if counts.contains(&0) {
            return Err(Error::Config(format!("cluster counts must be positive: {counts:?}")));
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn count(&self, block: usize) -> usize {
        self.counts[block]
    }

    pub fn num_blocks(&self) -> usize {
        self.counts.len()
    }

    pub fn label_space_size(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn total_clusters(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Row-major index of a label tuple (last block varies fastest).
    pub fn label_index(&self, label: &[usize]) -> Result<usize> {
        self.check_label(label)?;
        Ok(label
            .iter()
            .zip(&self.counts)
            .fold(0, |acc, (&c, &k)| acc * k + c))
    }

    pub fn label_at(&self, mut index: usize) -> Vec<usize> {
        let mut label = vec![0; self.counts.len()];
        for (slot, &k) in label.iter_mut().zip(&self.counts).rev() {
            *slot = index % k;
            index /= k;
        }
        label
    }

    /// All labels in canonical row-major order.
    pub fn labels(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.label_space_size()).map(|idx| self.label_at(idx))
    }

    pub fn check_label(&self, label: &[usize]) -> Result<()> {
        if label.len() != self.counts.len() || label.iter().zip(&self.counts).any(|(&c, &k)| c >= k) {
            return Err(Error::InvalidLabel {
                label: label.to_vec(),
                counts: self.counts.clone(),
            });
        }
        Ok(())
    }

    pub fn check_blocks(&self, blocks: &BlockSpec) -> Result<()> {
        if self.num_blocks() != blocks.num_blocks() {
            return Err(Error::Shape(format!(
                "{} cluster counts for {} covariate blocks",
                self.num_blocks(),
                blocks.num_blocks()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for ClusterConfig {
    type Error = Error;
    fn try_from(counts: Vec<usize>) -> Result<Self> {
        Self::new(counts)
    }
}

impl From<ClusterConfig> for Vec<usize> {
    fn from(cfg: ClusterConfig) -> Self {
        cfg.counts
    }
}

/// Cluster parameters for every block, stored as `vec(theta)`: blocks
/// ascending, clusters ascending within a block, covariates innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    blocks: BlockSpec,
    clusters: ClusterConfig,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl ParamSet {
    pub fn zeros(blocks: &BlockSpec, clusters: &ClusterConfig) -> Result<Self> {
        clusters.check_blocks(blocks)?;
        let mut offsets = Vec::with_capacity(blocks.num_blocks() + 1);
        let mut acc = 0;
        offsets.push(0);
        for l in 0..blocks.num_blocks() {
            acc += blocks.dim(l) * clusters.count(l);
            offsets.push(acc);
        }
        Ok(Self {
            blocks: blocks.clone(),
            clusters: clusters.clone(),
            offsets,
            values: vec![0.0; acc],
        })
    }

    pub fn from_vec(blocks: &BlockSpec, clusters: &ClusterConfig, values: Vec<f64>) -> Result<Self> {
        let mut params = Self::zeros(blocks, clusters)?;
        if values.len() != params.values.len() {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, expected {}",
                values.len(),
                params.values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("parameter vector contains non-finite entries".into()));
        }
        params.values = values;
        Ok(params)
    }

    /// Builds from per-block lists of cluster columns: `columns[l][a]` is the
    /// `d_l`-vector of cluster `a` in block `l`.
    pub fn from_columns(columns: &[Vec<Vec<f64>>]) -> Result<Self> {
        let dims = columns
            .iter()
            .map(|cols| cols.first().map_or(0, |c| c.len()))
            .collect();
        let counts = columns.iter().map(|cols| cols.len()).collect();
        let blocks = BlockSpec::new(dims)?;
        let clusters = ClusterConfig::new(counts)?;
        let mut values = Vec::with_capacity(blocks.total_dim() * 2);
        for (l, cols) in columns.iter().enumerate() {
            for col in cols {
                if col.len() != blocks.dim(l) {
                    return Err(Error::Shape(format!("ragged parameter columns in block {l}")));
                }
                values.extend_from_slice(col);
            }
        }
        Self::from_vec(&blocks, &clusters, values)
    }

    pub fn blocks(&self) -> &BlockSpec {
        &self.blocks
    }

    pub fn clusters(&self) -> &ClusterConfig {
        &self.clusters
    }

    /// Total dimension `sum_l k_l d_l`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_vec(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_vec(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Offset of cluster `a` of block `l` inside `vec(theta)`.
    #[inline]
    pub fn coord(&self, block: usize, cluster: usize) -> usize {
        self.offsets[block] + cluster * self.blocks.dim(block)
    }

    #[inline]
    pub fn column(&self, block: usize, cluster: usize) -> &[f64] {
        let start = self.coord(block, cluster);
        &self.values[start..start + self.blocks.dim(block)]
    }

    #[inline]
    pub fn column_mut(&mut self, block: usize, cluster: usize) -> &mut [f64] {
        let start = self.coord(block, cluster);
        let d = self.blocks.dim(block);
        &mut self.values[start..start + d]
    }

    pub fn columns(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.blocks.num_blocks())
            .map(|l| {
                (0..self.clusters.count(l))
                    .map(|a| self.column(l, a).to_vec())
                    .collect()
            })
            .collect()
    }

    /// The composite coefficient vector `(theta_1(c_1), ..., theta_B(c_B))`.
    pub fn composite(&self, label: &[usize]) -> Result<Vec<f64>> {
        self.clusters.check_label(label)?;
        let mut out = Vec::with_capacity(self.blocks.total_dim());
        for (l, &c) in label.iter().enumerate() {
            out.extend_from_slice(self.column(l, c));
        }
        Ok(out)
    }

    /// Writes the composite vector into `out` without validation.
    #[inline]
    pub(crate) fn composite_into(&self, label: &[usize], out: &mut [f64]) {
        for (l, &c) in label.iter().enumerate() {
            out[self.blocks.range(l)].copy_from_slice(self.column(l, c));
        }
    }

    pub fn distance(&self, other: &ParamSet) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::Shape("parameter sets differ in dimension".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Reorders clusters of every block: new column `a` of block `l` is old column `perms[l][a]`.
    pub fn permute(&self, perms: &[Vec<usize>]) -> Result<Self> {
        if perms.len() != self.blocks.num_blocks() {
            return Err(Error::Shape("one permutation per block required".into()));
        }
        let mut out = self.clone();
        for (l, perm) in perms.iter().enumerate() {
            check_permutation(perm, self.clusters.count(l))?;
            for (a, &b) in perm.iter().enumerate() {
                out.column_mut(l, a).copy_from_slice(self.column(l, b));
            }
        }
        Ok(out)
    }

    pub fn check_compatible(&self, data: &PanelData) -> Result<()> {
        self.blocks.check_panel(data)
    }
}

pub(crate) fn check_permutation(perm: &[usize], k: usize) -> Result<()> {
    let mut seen = vec![false; k];
    if perm.len() != k {
        return Err(Error::Shape(format!("permutation of length {} for {k} clusters", perm.len())));
    }
    for &b in perm {
        if b >= k || std::mem::replace(&mut seen[b], true) {
            return Err(Error::Shape(format!("{perm:?} is not a permutation of 0..{k}")));
        }
    }
    Ok(())
}

/// Map from units to label tuples, stored 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    blocks: usize,
    labels: Vec<usize>,
}

impl Assignment {
    pub fn new(labels: Vec<Vec<usize>>, clusters: &ClusterConfig) -> Result<Self> {
        let blocks = clusters.num_blocks();
        let mut flat = Vec::with_capacity(labels.len() * blocks);
        for label in &labels {
            clusters.check_label(label)?;
            flat.extend_from_slice(label);
        }
        Ok(Self { blocks, labels: flat })
    }

    pub(crate) fn from_flat(blocks: usize, labels: Vec<usize>) -> Self {
        debug_assert!(blocks > 0 && labels.len().is_multiple_of(blocks));
        Self { blocks, labels }
    }

    /// Every unit in cluster 0 of every block.
    pub fn uniform(n: usize, clusters: &ClusterConfig) -> Self {
        Self::from_flat(clusters.num_blocks(), vec![0; n * clusters.num_blocks()])
    }

    pub fn n(&self) -> usize {
        self.labels.len() / self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks
    }

    #[inline]
    pub fn label(&self, i: usize) -> &[usize] {
        &self.labels[i * self.blocks..(i + 1) * self.blocks]
    }

    #[inline]
    pub fn block_label(&self, i: usize, block: usize) -> usize {
        self.labels[i * self.blocks + block]
    }

    pub fn labels(&self) -> impl Iterator<Item = &[usize]> {
        self.labels.chunks_exact(self.blocks)
    }

    pub fn to_vecs(&self) -> Vec<Vec<usize>> {
        self.labels().map(<[usize]>::to_vec).collect()
    }

    /// 1-based labels for external formats.
    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.labels()
            .map(|l| l.iter().map(|c| c + 1).collect())
            .collect()
    }

    pub fn check(&self, n: usize, clusters: &ClusterConfig) -> Result<()> {
        if self.blocks != clusters.num_blocks() {
            return Err(Error::Shape(format!(
                "assignment has {} blocks, cluster config has {}",
                self.blocks,
                clusters.num_blocks()
            )));
        }
        if self.n() != n {
            return Err(Error::Shape(format!("assignment covers {} units, panel has {n}", self.n())));
        }
        for label in self.labels() {
            clusters.check_label(label)?;
        }
        Ok(())
    }

    /// Number of units in each cluster of `block`.
    pub fn occupancy(&self, block: usize, k: usize) -> Vec<usize> {
        let mut counts = vec![0; k];
        for label in self.labels() {
            counts[label[block]] += 1;
        }
        counts
    }

    /// Applies per-block maps `maps[l][old] = new` to every label.
    pub fn relabel(&self, maps: &[Vec<usize>]) -> Result<Self> {
        if maps.len() != self.blocks {
            return Err(Error::Shape("one label map per block required".into()));
        }
        let mut labels = self.labels.clone();
        for chunk in labels.chunks_exact_mut(self.blocks) {
            for (c, map) in chunk.iter_mut().zip(maps) {
                *c = *map
                    .get(*c)
                    .ok_or_else(|| Error::Shape(format!("label {c} missing from relabel map")))?;
            }
        }
        Ok(Self { blocks: self.blocks, labels })
    }

    pub fn select_units(&self, order: &[usize]) -> Self {
        let mut labels = Vec::with_capacity(order.len() * self.blocks);
        for &i in order {
            labels.extend_from_slice(self.label(i));
        }
        Self::from_flat(self.blocks, labels)
    }
}

#[derive(Serialize, Deserialize)]
struct ParamSetRepr {
    block_dims: Vec<usize>,
    cluster_counts: Vec<usize>,
    /// `theta[l][a]` is the parameter column of cluster `a` in block `l`.
    theta: Vec<Vec<Vec<f64>>>,
}

impl Serialize for ParamSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ParamSetRepr {
            block_dims: self.blocks.dims().to_vec(),
            cluster_counts: self.clusters.counts().to_vec(),
            theta: self.columns(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ParamSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = ParamSetRepr::deserialize(deserializer)?;
        let params = ParamSet::from_columns(&repr.theta).map_err(serde::de::Error::custom)?;
        if params.blocks.dims() != repr.block_dims.as_slice()
            || params.clusters.counts() != repr.cluster_counts.as_slice()
        {
            return Err(serde::de::Error::custom("theta shape disagrees with block_dims/cluster_counts"));
        }
        Ok(params)
    }
}

/// Serialized as a list of 1-based label tuples.
impl Serialize for Assignment {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_one_based().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Assignment {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<usize>>::deserialize(deserializer)?;
        let blocks = rows.first().map_or(0, Vec::len);
        if blocks == 0 {
            return Err(serde::de::Error::custom("assignment must contain at least one labelled unit"));
        }
        let mut flat = Vec::with_capacity(rows.len() * blocks);
        for row in rows {
            if row.len() != blocks || row.contains(&0) {
                return Err(serde::de::Error::custom("labels must be 1-based tuples of equal length"));
            }
            flat.extend(row.into_iter().map(|c| c - 1));
        }
        Ok(Assignment::from_flat(blocks, flat))
    }
}

/// `(theta_1(c_1), ..., theta_B(c_B))` for a label `c`.
pub fn composite_theta(params: &ParamSet, label: &[usize]) -> Result<Vec<f64>> {
    params.composite(label)
}

fn check_fit_shapes(data: &PanelData, params: &ParamSet, gamma: &Assignment) -> Result<()> {
    params.check_compatible(data)?;
    gamma.check(data.n(), params.clusters())
}

/// Sum of squared residuals of unit `i` under composite coefficients `coef`.
#[inline]
pub(crate) fn unit_ssr(data: &PanelData, i: usize, coef: &[f64]) -> f64 {
    let p = data.p();
    data.unit_response(i)
        .iter()
        .zip(data.unit_covariates(i).chunks_exact(p))
        .map(|(&y, x)| {
            let fitted: f64 = x.iter().zip(coef).map(|(a, b)| a * b).sum();
            (y - fitted) * (y - fitted)
        })
        .sum()
}

/// Mean squared residual `(1/NT) sum_{i,t} (y_it - x_it' theta(c_i))^2`.
pub fn sample_risk(data: &PanelData, params: &ParamSet, gamma: &Assignment) -> Result<f64> {
    check_fit_shapes(data, params, gamma)?;
    Ok(sample_risk_unchecked(data, params, gamma))
}

pub(crate) fn sample_risk_unchecked(data: &PanelData, params: &ParamSet, gamma: &Assignment) -> f64 {
    let mut coef = vec![0.0; data.p()];
    let mut total = 0.0;
    for i in 0..data.n() {
        params.composite_into(gamma.label(i), &mut coef);
        total += unit_ssr(data, i, &coef);
    }
    total / (data.n() * data.t()) as f64
}

/// Residuals `y_it - x_it' theta(c_i)`, unit-major.
pub fn residuals(data: &PanelData, params: &ParamSet, gamma: &Assignment) -> Result<Vec<f64>> {
    check_fit_shapes(data, params, gamma)?;
    let mut coef = vec![0.0; data.p()];
    let mut out = Vec::with_capacity(data.n() * data.t());
    for i in 0..data.n() {
        params.composite_into(gamma.label(i), &mut coef);
        for s in 0..data.t() {
            let fitted: f64 = data.covariates(i, s).iter().zip(&coef).map(|(a, b)| a * b).sum();
            out.push(data.response(i, s) - fitted);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_block_params() -> ParamSet {
        ParamSet::from_columns(&[vec![vec![1.0], vec![0.0]], vec![vec![0.0], vec![1.0]]]).unwrap()
    }

    #[test]
    fn composite_concatenates_block_columns() {
        let params = two_block_params();
        assert_eq!(composite_theta(&params, &[0, 1]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(composite_theta(&params, &[1, 0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn composite_single_block_returns_column() {
        let params = ParamSet::from_columns(&[vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]]).unwrap();
        for a in 0..3 {
            assert_eq!(composite_theta(&params, &[a]).unwrap(), params.column(0, a));
        }
    }

    #[test]
    fn composite_rejects_out_of_range_label() {
        let params = two_block_params();
        assert!(matches!(composite_theta(&params, &[0, 2]), Err(Error::InvalidLabel { .. })));
        assert!(matches!(composite_theta(&params, &[0]), Err(Error::InvalidLabel { .. })));
    }

    #[test]
    fn composite_enumeration_covers_every_concatenation() {
        // k = (2, 3) with d = (2, 1): six distinct composites, one per label.
        let params = ParamSet::from_columns(&[
            vec![vec![0.3, -1.2], vec![2.5, 0.7]],
            vec![vec![-0.4], vec![1.9], vec![0.05]],
        ])
        .unwrap();
        let produced: Vec<Vec<f64>> = params.clusters().labels().map(|c| params.composite(&c).unwrap()).collect();
        let mut expected = Vec::new();
        for a in 0..2 {
            for b in 0..3 {
                let mut v = params.column(0, a).to_vec();
                v.extend_from_slice(params.column(1, b));
                expected.push(v);
            }
        }
        assert_eq!(produced, expected);
    }

    #[test]
    fn label_indexing_is_row_major() {
        let cfg = ClusterConfig::new(vec![2, 3, 2]).unwrap();
        let labels: Vec<_> = cfg.labels().collect();
        assert_eq!(labels.len(), 12);
        assert_eq!(labels[0], vec![0, 0, 0]);
        assert_eq!(labels[1], vec![0, 0, 1]);
        assert_eq!(labels[2], vec![0, 1, 0]);
        assert_eq!(labels[11], vec![1, 2, 1]);
        for (idx, label) in labels.iter().enumerate() {
            assert_eq!(cfg.label_index(label).unwrap(), idx);
        }
    }

    #[test]
    fn single_observation_risk_is_squared_response() {
        let data = PanelData::new(1, 1, 1, vec![3.0], vec![2.0]).unwrap();
        let params = ParamSet::from_columns(&[vec![vec![0.0]]]).unwrap();
        let gamma = Assignment::uniform(1, params.clusters());
        assert_eq!(sample_risk(&data, &params, &gamma).unwrap(), 9.0);
    }

    #[test]
    fn exact_fit_has_zero_risk() {
        let params = two_block_params();
        let x = vec![1.0, 2.0, -1.0, 0.5, 3.0, 1.0, 0.0, -2.0];
        let labels = vec![vec![0, 1], vec![1, 0]];
        let gamma = Assignment::new(labels, params.clusters()).unwrap();
        let mut y = Vec::new();
        for i in 0..2 {
            let coef = params.composite(gamma.label(i)).unwrap();
            for s in 0..2 {
                let row = &x[(i * 2 + s) * 2..(i * 2 + s) * 2 + 2];
                y.push(row[0] * coef[0] + row[1] * coef[1]);
            }
        }
        let data = PanelData::new(2, 2, 2, y, x).unwrap();
        assert_eq!(sample_risk(&data, &params, &gamma).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(PanelData::new(2, 2, 1, vec![0.0; 3], vec![0.0; 4]).is_err());
        assert!(PanelData::new(1, 1, 1, vec![f64::NAN], vec![0.0]).is_err());
        assert!(BlockSpec::new(vec![2, 0]).is_err());
        assert!(ClusterConfig::new(vec![]).is_err());
        let data = PanelData::new(1, 1, 3, vec![0.0], vec![0.0; 3]).unwrap();
        let params = two_block_params();
        let gamma = Assignment::uniform(1, params.clusters());
        assert!(matches!(sample_risk(&data, &params, &gamma), Err(Error::Shape(_))));
    }

    #[test]
    fn permute_and_relabel_roundtrip() {
        let params = ParamSet::from_columns(&[vec![vec![1.0], vec![2.0], vec![3.0]]]).unwrap();
        let perm = vec![vec![2, 0, 1]];
        let permuted = params.permute(&perm).unwrap();
        assert_eq!(permuted.as_vec(), &[3.0, 1.0, 2.0]);
        assert!(params.permute(&[vec![0, 0, 1]]).is_err());
    }
}
