//! Isolation forest built from scratch.
//!
//! Each tree is grown on a subsample of `psi` distinct rows drawn without
//! replacement. A node splits on a dimension chosen uniformly among the
//! dimensions that are not constant over the node's points, at a value drawn
//! uniformly from `(min, max]` of that dimension; points with `x < split` go
//! left. Growth stops at `ceil(log2 psi)`, at a single point, or when all of
//! a node's points coincide.
//!
//! Scores are `2^(-E[h(x)] / c(psi))`, higher meaning more anomalous. Tree
//! `t` draws only from the `t`-th SplitMix64 substream of the forest seed, so
//! trees can be built concurrently without changing the result.

use rayon::prelude::*;
use thiserror::Error;

use crate::parallel;
use crate::rng::SplitMix64;

/// Euler–Mascheroni constant as used by the harmonic-number approximation.
pub const EULER_GAMMA: f64 = 0.5772156649;
pub const DEFAULT_TREES: usize = 100;
pub const DEFAULT_MAX_SAMPLES: usize = 256;
pub const DEFAULT_CONTAMINATION: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum IsoForestError {
    #[error("need at least 2 points to fit, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite value in dimension {dim} of row {row}")]
    NonFiniteFeature { row: usize, dim: usize },
    #[error("row {row} has {found} dimensions, expected {expected}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("forest has not been fitted/calibrated")]
    NotFitted,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("bad forest encoding: {0}")]
    Decode(String),
}

/// Average path length of an unsuccessful BST search over `m` points.
pub fn c_factor(m: usize) -> f64 {
    if m <= 1 {
        return 0.0;
    }
    let m = m as f64;
    2.0 * ((m - 1.0).ln() + EULER_GAMMA) - 2.0 * (m - 1.0) / m
}

/// Score for a mean path length under subsample size `psi`.
pub fn score_from_path_length(mean_path: f64, psi: usize) -> f64 {
    let c = c_factor(psi);
    if c == 0.0 {
        return 1.0;
    }
    2f64.powf(-mean_path / c)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal {
        dim: usize,
        split: f64,
        left: usize,
        right: usize,
    },
    External {
        size: usize,
    },
}

/// Arena-allocated tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct IsoTree {
    pub nodes: Vec<Node>,
    pub height_limit: usize,
    /// Row indices of the training subsample.
    pub sample: Vec<usize>,
}

impl IsoTree {
    fn grow<R: AsRef<[f64]>>(
        rows: &[R],
        sample: Vec<usize>,
        height_limit: usize,
        rng: &mut SplitMix64,
    ) -> Self {
        let mut tree = IsoTree {
            nodes: Vec::new(),
            height_limit,
            sample: sample.clone(),
        };
        let dims = rows[0].as_ref().len();
        let mut points = sample;
        tree.build(rows, &mut points, 0, dims, rng);
        tree
    }

    fn build<R: AsRef<[f64]>>(
        &mut self,
        rows: &[R],
        points: &mut [usize],
        depth: usize,
        dims: usize,
        rng: &mut SplitMix64,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::External { size: points.len() });
        if depth >= self.height_limit || points.len() <= 1 {
            return id;
        }
        // Ranges of every dimension over this node's points.
        let mut candidates = Vec::new();
        for d in 0..dims {
            let (lo, hi) =
                points
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                        let v = rows[p].as_ref()[d];
                        (lo.min(v), hi.max(v))
                    });
            if hi > lo {
                candidates.push((d, lo, hi));
            }
        }
        if candidates.is_empty() {
            return id;
        }
        let (dim, lo, hi) = candidates[rng.below(candidates.len())];
        let mut split = lo + rng.next_f64_open_closed() * (hi - lo);
        if split <= lo {
            split = hi;
        }
        // Partition in place: values below the split first.
        let mut mid = 0;
        for i in 0..points.len() {
            if rows[points[i]].as_ref()[dim] < split {
                points.swap(i, mid);
                mid += 1;
            }
        }
        let (left_pts, right_pts) = points.split_at_mut(mid);
        let left = self.build(rows, left_pts, depth + 1, dims, rng);
        let right = self.build(rows, right_pts, depth + 1, dims, rng);
        self.nodes[id] = Node::Internal {
            dim,
            split,
            left,
            right,
        };
        id
    }

    /// Depth of the external node reached by `x` plus `c(size)` of that node.
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        let mut depth = 0usize;
        loop {
            match self.nodes[id] {
                Node::Internal {
                    dim,
                    split,
                    left,
                    right,
                } => {
                    id = if x[dim] < split { left } else { right };
                    depth += 1;
                }
                Node::External { size } => return depth as f64 + c_factor(size),
            }
        }
    }

    /// Longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Internal { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                Node::External { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::External { size } => Some(*size),
            Node::Internal { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub trees: usize,
    /// Upper bound on the subsample size; the forest uses `min(max_samples, n)`.
    pub max_samples: usize,
    pub contamination: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: DEFAULT_TREES,
            max_samples: DEFAULT_MAX_SAMPLES,
            contamination: DEFAULT_CONTAMINATION,
            seed: 42,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), IsoForestError> {
        if self.trees == 0 {
            return Err(IsoForestError::InvalidParams(
                "trees must be positive".into(),
            ));
        }
        if self.max_samples < 2 {
            return Err(IsoForestError::InvalidParams(
                "max_samples must be at least 2".into(),
            ));
        }
        if !(self.contamination > 0.0 && self.contamination <= 0.5) {
            return Err(IsoForestError::InvalidParams(format!(
                "contamination {} outside (0, 0.5]",
                self.contamination
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsoForest {
    pub trees: Vec<IsoTree>,
    pub psi: usize,
    pub dims: usize,
    pub contamination: f64,
    pub seed: u64,
    pub threshold: Option<f64>,
}

/// Partial Fisher–Yates: `psi` distinct indices out of `0..n`.
fn subsample(n: usize, psi: usize, rng: &mut SplitMix64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..psi {
        let j = i + rng.below(n - i);
        idx.swap(i, j);
    }
    idx.truncate(psi);
    idx
}

pub fn fit<R: AsRef<[f64]> + Sync>(
    rows: &[R],
    params: &ForestParams,
) -> Result<IsoForest, IsoForestError> {
    fit_with_workers(rows, params, 1)
}

/// Like [`fit`], building trees on `workers` threads. The result does not
/// depend on `workers`.
pub fn fit_with_workers<R: AsRef<[f64]> + Sync>(
    rows: &[R],
    params: &ForestParams,
    workers: usize,
) -> Result<IsoForest, IsoForestError> {
    params.validate()?;
    let n = rows.len();
    if n < 2 {
        return Err(IsoForestError::TooFewPoints(n));
    }
    let dims = rows[0].as_ref().len();
    if dims == 0 {
        return Err(IsoForestError::InvalidParams(
            "rows have no dimensions".into(),
        ));
    }
    for (row, r) in rows.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != dims {
            return Err(IsoForestError::DimensionMismatch {
                row,
                expected: dims,
                found: r.len(),
            });
        }
        if let Some(dim) = r.iter().position(|v| !v.is_finite()) {
            return Err(IsoForestError::NonFiniteFeature { row, dim });
        }
    }
    let psi = params.max_samples.min(n);
    let height_limit = (psi as f64).log2().ceil() as usize;
    let seeds = SplitMix64::substream_seeds(params.seed, params.trees);
    let build = |&seed: &u64| {
        let mut rng = SplitMix64::new(seed);
        let sample = subsample(n, psi, &mut rng);
        IsoTree::grow(rows, sample, height_limit, &mut rng)
    };
    let trees = if workers <= 1 {
        seeds.iter().map(build).collect()
    } else {
        parallel::install(workers, || seeds.par_iter().map(build).collect())
    };
    Ok(IsoForest {
        trees,
        psi,
        dims,
        contamination: params.contamination,
        seed: params.seed,
        threshold: None,
    })
}

impl IsoForest {
    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn score(&self, x: &[f64]) -> Result<f64, IsoForestError> {
        if self.trees.is_empty() {
            return Err(IsoForestError::NotFitted);
        }
        if x.len() != self.dims {
            return Err(IsoForestError::DimensionMismatch {
                row: 0,
                expected: self.dims,
                found: x.len(),
            });
        }
        Ok(score_from_path_length(self.mean_path_length(x), self.psi))
    }

    pub fn score_all<R: AsRef<[f64]> + Sync>(
        &self,
        rows: &[R],
        workers: usize,
    ) -> Result<Vec<f64>, IsoForestError> {
        parallel::install(workers, || {
            rows.par_iter().map(|r| self.score(r.as_ref())).collect()
        })
    }

    /// Sets the threshold to the `(1 - contamination)` quantile of the
    /// training scores and returns it.
    pub fn calibrate_threshold(&mut self, training_scores: &[f64]) -> Result<f64, IsoForestError> {
        if self.trees.is_empty() {
            return Err(IsoForestError::NotFitted);
        }
        if training_scores.is_empty() {
            return Err(IsoForestError::InvalidParams("no training scores".into()));
        }
        let t = quantile(training_scores, 1.0 - self.contamination);
        self.threshold = Some(t);
        Ok(t)
    }

    pub fn is_anomalous(&self, score: f64) -> Result<bool, IsoForestError> {
        self.threshold
            .map(|t| score > t)
            .ok_or(IsoForestError::NotFitted)
    }
}

/// Quantile with linear interpolation between order statistics
/// (position `q * (n - 1)` in the sorted sample).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

// ---------------------------------------------------------------------------
// Binary encoding
//
//   magic        5 bytes  "ISOF1"
//   seed         u64
//   psi          u64
//   dims         u64
//   contamination f64
//   has_threshold u8 (0/1), threshold f64 (present, 0.0 when unset)
//   tree_count   u64
//   per tree:
//     height_limit u64
//     sample_len   u64, then sample_len × u64 row indices
//     node_count   u64
//     per node: tag u8
//       0 = external: size u64
//       1 = internal: dim u64, split f64, left u64, right u64
//
// All integers and floats little-endian.
// ---------------------------------------------------------------------------

pub const FOREST_MAGIC: &[u8; 5] = b"ISOF1";

impl IsoForest {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let u = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u64).to_le_bytes());
        let f = |out: &mut Vec<u8>, v: f64| out.extend_from_slice(&v.to_le_bytes());
        out.extend_from_slice(FOREST_MAGIC);
        out.extend_from_slice(&self.seed.to_le_bytes());
        u(&mut out, self.psi);
        u(&mut out, self.dims);
        f(&mut out, self.contamination);
        out.push(self.threshold.is_some() as u8);
        f(&mut out, self.threshold.unwrap_or(0.0));
        u(&mut out, self.trees.len());
        for tree in &self.trees {
            u(&mut out, tree.height_limit);
            u(&mut out, tree.sample.len());
            for &s in &tree.sample {
                u(&mut out, s);
            }
            u(&mut out, tree.nodes.len());
            for node in &tree.nodes {
                match *node {
                    Node::External { size } => {
                        out.push(0);
                        u(&mut out, size);
                    }
                    Node::Internal {
                        dim,
                        split,
                        left,
                        right,
                    } => {
                        out.push(1);
                        u(&mut out, dim);
                        f(&mut out, split);
                        u(&mut out, left);
                        u(&mut out, right);
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IsoForestError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(5)? != FOREST_MAGIC {
            return Err(IsoForestError::Decode("missing ISOF1 magic".into()));
        }
        let seed = r.u64()?;
        let psi = r.usize()?;
        let dims = r.usize()?;
        let contamination = r.f64()?;
        let has_threshold = r.u8()?;
        let threshold = r.f64()?;
        let threshold = match has_threshold {
            0 => None,
            1 => Some(threshold),
            t => return Err(IsoForestError::Decode(format!("bad threshold flag {t}"))),
        };
        let tree_count = r.usize()?;
        let mut trees = Vec::new();
        for _ in 0..tree_count {
            let height_limit = r.usize()?;
            let sample_len = r.usize()?;
            let mut sample = Vec::new();
            for _ in 0..sample_len {
                sample.push(r.usize()?);
            }
            let node_count = r.usize()?;
            let mut nodes = Vec::new();
            for _ in 0..node_count {
                nodes.push(match r.u8()? {
                    0 => Node::External { size: r.usize()? },
                    1 => Node::Internal {
                        dim: r.usize()?,
                        split: r.f64()?,
                        left: r.usize()?,
                        right: r.usize()?,
                    },
                    t => return Err(IsoForestError::Decode(format!("bad node tag {t}"))),
                });
            }
            let tree = IsoTree {
                nodes,
                height_limit,
                sample,
            };
            validate_tree(&tree, dims)?;
            trees.push(tree);
        }
        if r.pos != bytes.len() {
            return Err(IsoForestError::Decode("trailing bytes".into()));
        }
        if trees.is_empty() || dims == 0 {
            return Err(IsoForestError::Decode("empty forest".into()));
        }
        Ok(IsoForest {
            trees,
            psi,
            dims,
            contamination,
            seed,
            threshold,
        })
    }
}

/// Children must point forward so traversal always terminates.
fn validate_tree(tree: &IsoTree, dims: usize) -> Result<(), IsoForestError> {
    if tree.nodes.is_empty() {
        return Err(IsoForestError::Decode("tree without nodes".into()));
    }
    for (id, node) in tree.nodes.iter().enumerate() {
        if let Node::Internal {
            dim, left, right, ..
        } = *node
        {
            if dim >= dims
                || left <= id
                || right <= id
                || left >= tree.nodes.len()
                || right >= tree.nodes.len()
            {
                return Err(IsoForestError::Decode(format!("bad links at node {id}")));
            }
        }
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IsoForestError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| IsoForestError::Decode("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, IsoForestError> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64, IsoForestError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize, IsoForestError> {
        usize::try_from(self.u64()?).map_err(|_| IsoForestError::Decode("count overflow".into()))
    }
    fn f64(&mut self) -> Result<f64, IsoForestError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(trees: usize, seed: u64) -> ForestParams {
        ForestParams {
            trees,
            seed,
            ..ForestParams::default()
        }
    }

    #[test]
    fn c_factor_values() {
        assert_eq!(c_factor(0), 0.0);
        assert_eq!(c_factor(1), 0.0);
        assert!((c_factor(2) - 0.154431).abs() < 1e-6);
        assert_eq!(c_factor(2), 2.0 * EULER_GAMMA - 1.0);
    }

    #[test]
    fn score_formula_landmarks() {
        for psi in [2, 16, 256] {
            assert_eq!(score_from_path_length(c_factor(psi), psi), 0.5);
            assert_eq!(score_from_path_length(0.0, psi), 1.0);
        }
        let mut last = 1.0;
        for h in 1..50 {
            let s = score_from_path_length(h as f64 * 0.3, 256);
            assert!(s < last && s > 0.0);
            last = s;
        }
    }

    #[test]
    fn two_points_one_tree() {
        let rows = vec![vec![0.0, 1.0], vec![2.0, 5.0]];
        let f = fit(&rows, &params(1, 3)).unwrap();
        let t = &f.trees[0];
        assert_eq!(f.psi, 2);
        assert_eq!(t.height_limit, 1);
        assert!(matches!(t.nodes[0], Node::Internal { .. }));
        assert_eq!(t.leaf_sizes().collect::<Vec<_>>(), vec![1, 1]);
        for r in &rows {
            assert_eq!(t.path_length(r), 1.0);
        }
    }

    #[test]
    fn identical_points_make_single_leaf_trees() {
        let rows = vec![vec![1.0, 2.0, 3.0]; 40];
        let f = fit(&rows, &params(10, 1)).unwrap();
        for t in &f.trees {
            assert_eq!(t.nodes, vec![Node::External { size: 40 }]);
        }
        let s: Vec<f64> = rows.iter().map(|r| f.score(r).unwrap()).collect();
        assert!(s.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn external_root_of_one_point_has_zero_path() {
        let tree = IsoTree {
            nodes: vec![Node::External { size: 1 }],
            height_limit: 0,
            sample: vec![0],
        };
        assert_eq!(tree.path_length(&[3.0]), 0.0);
    }

    #[test]
    fn tree_structure_invariants() {
        let mut rng = SplitMix64::new(9);
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|_| (0..5).map(|_| rng.next_f64()).collect())
            .collect();
        let f = fit(&rows, &params(20, 4)).unwrap();
        assert_eq!(f.psi, 256);
        for t in &f.trees {
            assert_eq!(t.height_limit, 8);
            assert!(t.depth() <= t.height_limit);
            assert_eq!(t.leaf_sizes().sum::<usize>(), 256);
            let mut s = t.sample.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), 256);
            validate_tree(t, 5).unwrap();
        }
    }

    #[test]
    fn fit_errors() {
        assert_eq!(
            fit(&[vec![1.0]], &params(1, 1)),
            Err(IsoForestError::TooFewPoints(1))
        );
        assert_eq!(
            fit(&[vec![1.0, f64::NAN], vec![0.0, 0.0]], &params(1, 1)),
            Err(IsoForestError::NonFiniteFeature { row: 0, dim: 1 })
        );
        let bad = ForestParams {
            contamination: 0.6,
            ..ForestParams::default()
        };
        assert!(fit(&[vec![1.0], vec![2.0]], &bad).is_err());
    }

    #[test]
    fn unfitted_forest_refuses_to_score() {
        let mut f = IsoForest {
            trees: vec![],
            psi: 2,
            dims: 1,
            contamination: 0.1,
            seed: 0,
            threshold: None,
        };
        assert_eq!(f.score(&[1.0]), Err(IsoForestError::NotFitted));
        assert_eq!(
            f.calibrate_threshold(&[0.5]),
            Err(IsoForestError::NotFitted)
        );
    }

    #[test]
    fn quantile_interpolates() {
        let scores: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert!((quantile(&scores, 0.5) - 0.55).abs() < 1e-12);
        assert_eq!(quantile(&scores, 1.0), 1.0);
        assert_eq!(quantile(&scores, 0.0), 0.1);
    }

    #[test]
    fn parallel_fit_matches_serial() {
        let mut rng = SplitMix64::new(2);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..3).map(|_| rng.next_f64()).collect())
            .collect();
        let a = fit_with_workers(&rows, &params(30, 8), 1).unwrap();
        let b = fit_with_workers(&rows, &params(30, 8), 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn encoding_round_trips_and_rejects_garbage() {
        let mut rng = SplitMix64::new(5);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..4).map(|_| rng.next_f64()).collect())
            .collect();
        let mut f = fit(&rows, &params(7, 1)).unwrap();
        let scores = f.score_all(&rows, 1).unwrap();
        f.calibrate_threshold(&scores).unwrap();
        let bytes = f.to_bytes();
        assert_eq!(&bytes[..5], b"ISOF1");
        assert_eq!(IsoForest::from_bytes(&bytes).unwrap(), f);
        for cut in [0, 4, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(IsoForest::from_bytes(&bytes[..cut]).is_err());
        }
    }
}
