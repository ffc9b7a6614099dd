//! Skeleton graph construction, symmetric adjacency normalization, learnable
//! adjacency powers, topology scores, and top-k neighbor selection.

use crate::error::{Result, SgnError};
use crate::tensor::{Mat, Param};

/// A skeleton: joint count, bone edges, and an optional parent table
/// (root points at itself) used to derive the bone modality.
#[derive(Debug, Clone)]
pub struct SkeletonGraph {
    pub joints: usize,
    pub edges: Vec<(usize, usize)>,
    pub parents: Option<Vec<usize>>,
}

impl SkeletonGraph {
    pub fn new(joints: usize, edges: Vec<(usize, usize)>, parents: Option<Vec<usize>>) -> Result<Self> {
        if joints == 0 {
            return Err(SgnError::Config("graph needs at least one joint".into()));
        }
        for &(u, v) in &edges {
            if u >= joints || v >= joints {
                return Err(SgnError::Config(format!(
                    "edge ({u},{v}) references a joint outside 0..{joints}"
                )));
            }
        }
        if let Some(p) = &parents {
            if p.len() != joints {
                return Err(SgnError::Config("parent table length must equal joint count".into()));
            }
            if p.iter().any(|&x| x >= joints) {
                return Err(SgnError::Config("parent index outside joint range".into()));
            }
        }
        Ok(SkeletonGraph { joints, edges, parents })
    }

    /// Binary symmetric adjacency with zero diagonal.
    pub fn adjacency(&self) -> Mat {
        let mut a = Mat::zeros(self.joints, self.joints);
        for &(u, v) in &self.edges {
            if u != v {
                a.set(u, v, 1.0);
                a.set(v, u, 1.0);
            }
        }
        a
    }

    /// Whether every joint is reachable from joint 0 over the edges.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.joints];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(a, b) in &self.edges {
                for (x, y) in [(a, b), (b, a)] {
                    if x == u && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Parse the plain-text graph format: first line the joint count,
    /// then `u v` edge lines, optionally followed by a `parent:` block with
    /// one parent index per joint.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let joints: usize = lines
            .next()
            .ok_or_else(|| SgnError::Data("empty graph file".into()))?
            .parse()
            .map_err(|_| SgnError::Data("first line of a graph file must be the joint count".into()))?;
        let mut edges = Vec::new();
        let mut parents: Option<Vec<usize>> = None;
        let mut in_parents = false;
        for line in lines {
            if line == "parent:" {
                in_parents = true;
                parents = Some(Vec::new());
                continue;
            }
            if in_parents {
                let p: usize = line
                    .parse()
                    .map_err(|_| SgnError::Data(format!("bad parent line: {line:?}")))?;
                parents.as_mut().unwrap().push(p);
            } else {
                let mut it = line.split_whitespace();
                let u: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| SgnError::Data(format!("bad edge line: {line:?}")))?;
                let v: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| SgnError::Data(format!("bad edge line: {line:?}")))?;
                edges.push((u, v));
            }
        }
        SkeletonGraph::new(joints, edges, parents)
    }

    /// The 25-joint skeleton used by Kinect-v2 recordings.
    pub fn ntu25() -> Self {
        Self::parse(include_str!("../data/ntu25.txt")).expect("builtin ntu25 graph parses")
    }

    /// The 20-joint skeleton used by Kinect-v1 recordings.
    pub fn nwucla20() -> Self {
        Self::parse(include_str!("../data/nwucla20.txt")).expect("builtin nwucla20 graph parses")
    }
}

/// Symmetric normalization `Δ^{-1/2}·(A+I)·Δ^{-1/2}` where `Δ` is the degree
/// matrix of `A+I`. Requires a symmetric adjacency with zero diagonal.
pub fn normalize_adjacency(a: &Mat) -> Result<Mat> {
    let n = a.rows;
    if a.cols != n {
        return Err(SgnError::Dimension("adjacency must be square".into()));
    }
    for i in 0..n {
        if a.get(i, i) != 0.0 {
            return Err(SgnError::Contract("adjacency diagonal must be zero".into()));
        }
        for j in 0..i {
            if a.get(i, j) != a.get(j, i) {
                return Err(SgnError::Contract("adjacency must be symmetric".into()));
            }
        }
    }
    let mut tilde = a.clone();
    for i in 0..n {
        tilde.set(i, i, 1.0);
    }
    let deg: Vec<f64> = (0..n).map(|i| tilde.row(i).iter().sum::<f64>()).collect();
    let inv_sqrt: Vec<f64> = deg.iter().map(|&d| 1.0 / d.sqrt()).collect();
    let mut out = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, inv_sqrt[i] * tilde.get(i, j) * inv_sqrt[j]);
        }
    }
    Ok(out)
}

/// Stack of learnable `V×V` relational matrices, the model's dynamic topology.
#[derive(Debug, Clone)]
pub struct AdjacencyPowers {
    pub pa: Param,
    pub relations: usize,
    pub joints: usize,
}

impl AdjacencyPowers {
    /// Initialize slice `n` with the n-th power of the normalized adjacency
    /// (slice 0 is the identity).
    pub fn from_normalized(name: impl Into<String>, a_norm: &Mat, relations: usize) -> Result<Self> {
        if relations == 0 {
            return Err(SgnError::Config("need at least one relation slice".into()));
        }
        let v = a_norm.rows;
        let mut data = Vec::with_capacity(relations * v * v);
        let mut power = Mat::identity(v);
        for n in 0..relations {
            if n > 0 {
                power = power.matmul(a_norm);
            }
            data.extend_from_slice(&power.data);
        }
        Ok(AdjacencyPowers {
            pa: Param::new(name, vec![relations, v, v], data, true),
            relations,
            joints: v,
        })
    }

    /// Borrow slice `n` as a matrix copy.
    pub fn slice(&self, n: usize) -> Mat {
        let v = self.joints;
        let start = n * v * v;
        Mat { rows: v, cols: v, data: self.pa.value[start..start + v * v].to_vec() }
    }

    /// Accumulate a gradient into slice `n`.
    pub fn add_slice_grad(&mut self, n: usize, grad: &Mat) {
        let v = self.joints;
        let start = n * v * v;
        for (g, d) in self.pa.grad[start..start + v * v].iter_mut().zip(&grad.data) {
            *g += *d;
        }
    }
}

/// Nonnegative joint-to-joint correlation strengths: `Σ_n |pa[n]|`.
#[derive(Debug, Clone)]
pub struct TopologyScore {
    pub scores: Mat,
}

/// Elementwise `Σ_n |pa[n,:,:]|` over all relation slices.
pub fn topology_score(powers: &AdjacencyPowers) -> TopologyScore {
    let v = powers.joints;
    let mut scores = Mat::zeros(v, v);
    for n in 0..powers.relations {
        let start = n * v * v;
        for (s, &x) in scores.data.iter_mut().zip(&powers.pa.value[start..start + v * v]) {
            *s += x.abs();
        }
    }
    TopologyScore { scores }
}

/// For each target joint (column), the k source joints with the largest
/// scores, in descending score order with ties broken by lower index.
/// With `self_boost`, the diagonal is first raised to the column max plus
/// one so every joint selects itself.
pub fn topk_neighbors(scores: &Mat, k: usize, self_boost: bool) -> Result<Vec<Vec<usize>>> {
    let v = scores.rows;
    assert_eq!(scores.cols, v, "score matrix must be square");
    if k == 0 || k > v {
        return Err(SgnError::Contract(format!("top-k needs 1 <= k <= {v}, got {k}")));
    }
    let mut out = Vec::with_capacity(v);
    for target in 0..v {
        let mut col: Vec<(usize, f64)> = (0..v).map(|u| (u, scores.get(u, target))).collect();
        if self_boost {
            let m = col.iter().map(|&(_, s)| s).fold(f64::NEG_INFINITY, f64::max);
            col[target].1 = m + 1.0;
        }
        col.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out.push(col.into_iter().take(k).map(|(u, _)| u).collect());
    }
    Ok(out)
}
