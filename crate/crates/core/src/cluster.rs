//! Geometric cluster trees over edge DOFs and admissible block partitions.

use nalgebra::{Point3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::DofMap;
use crate::mesh::Mesh;

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn from_point(p: &Point3<f64>) -> Self {
        Self { min: [p.x, p.y, p.z], max: [p.x, p.y, p.z] }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = Self::from_point(it.next()?);
        Some(it.fold(first, |b, p| b.union(&Self::from_point(p))))
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            min: [0, 1, 2].map(|k| self.min[k].min(other.min[k])),
            max: [0, 1, 2].map(|k| self.max[k].max(other.max[k])),
        }
    }

    pub fn extent(&self) -> Vector3<f64> {
        Vector3::from_fn(|k, _| self.max[k] - self.min[k])
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        self.extent().norm()
    }

    /// Side of the smallest enclosing cube.
    pub fn cube_side(&self) -> f64 {
        self.extent().max()
    }

    /// Euclidean distance between the two boxes (0 if they touch or overlap).
    pub fn distance(&self, other: &Self) -> f64 {
        Vector3::from_fn(|k, _| (other.min[k] - self.max[k]).max(self.min[k] - other.max[k]).max(0.0)).norm()
    }

    pub fn contains(&self, p: &Point3<f64>, tol: f64) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] - tol && p[k] <= self.max[k] + tol)
    }

    fn longest_axis(&self) -> usize {
        let e = self.extent();
        // first maximal axis, for determinism
        (0..3).fold(0, |best, k| if e[k] > e[best] { k } else { best })
    }

    fn halves(&self, axis: usize) -> (Self, Self, f64) {
        let mid = 0.5 * (self.min[axis] + self.max[axis]);
        let mut lo = *self;
        let mut hi = *self;
        lo.max[axis] = mid;
        hi.min[axis] = mid;
        (lo, hi, mid)
    }
}

/// `min{diam B_τ, diam B_σ} ≤ η·dist(B_τ, B_σ)`; touching boxes are never admissible.
pub fn is_admissible(a: &Aabb, b: &Aabb, eta: f64) -> bool {
    let dist = a.distance(b);
    dist > 0.0 && a.diameter().min(b.diameter()) <= eta * dist
}

#[derive(Debug, Clone, Serialize)]
pub struct Cluster {
    pub id: usize,
    pub level: usize,
    /// Sorted DOF ids.
    pub indices: Vec<usize>,
    /// Tight box around the supports of all member basis functions.
    pub bbox: Aabb,
    /// Side of the enclosing cube of `bbox`.
    pub cube_side: f64,
    pub children: Option<[usize; 2]>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Binary cluster tree; cluster 0 is the root.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterTree {
    clusters: Vec<Cluster>,
    n_leaf: usize,
    n_dofs: usize,
}

impl ClusterTree {
    pub fn root(&self) -> &Cluster {
        &self.clusters[0]
    }

    pub fn cluster(&self, id: usize) -> &Cluster {
        &self.clusters[id]
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn n_leaf(&self) -> usize {
        self.n_leaf
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    /// Largest cluster level.
    pub fn depth(&self) -> usize {
        self.clusters.iter().map(|c| c.level).max().unwrap_or(0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.iter().filter(|c| c.is_leaf())
    }
}

/// Recursive midpoint bisection of a geometric box along its longest axis,
/// with DOFs assigned by edge midpoint (ties go to the lower half). Halves
/// that would be empty are skipped without creating a tree level.
pub fn build_cluster_tree(mesh: &Mesh, dofs: &DofMap, n_leaf: usize) -> Result<ClusterTree> {
    if n_leaf == 0 {
        return Err(Error::InvalidInput("n_leaf must be at least 1".into()));
    }
    let n = dofs.len();
    if n == 0 {
        return Err(Error::InvalidInput("no degrees of freedom".into()));
    }
    let mids: Vec<Point3<f64>> = (0..n).map(|i| mesh.edge_midpoint(dofs.edge(i))).collect();
    let mut supports = Vec::with_capacity(n);
    for i in 0..n {
        let pts: Vec<Point3<f64>> = mesh
            .support_tets(dofs.edge(i))?
            .iter()
            .flat_map(|t| mesh.tet_points(*t))
            .collect();
        supports.push(Aabb::from_points(&pts).expect("edge has a support tet"));
    }
    let geometric = Aabb::from_points(&mids).expect("nonempty");
    let floor = 1e-12 * mesh.side();
    let mut builder = Builder { mids: &mids, supports: &supports, n_leaf, floor, clusters: Vec::new() };
    builder.build((0..n).collect(), geometric, 0);
    Ok(ClusterTree { clusters: builder.clusters, n_leaf, n_dofs: n })
}

struct Builder<'a> {
    mids: &'a [Point3<f64>],
    supports: &'a [Aabb],
    n_leaf: usize,
    floor: f64,
    clusters: Vec<Cluster>,
}

impl Builder<'_> {
    fn build(&mut self, indices: Vec<usize>, mut region: Aabb, level: usize) -> usize {
        let bbox = indices
            .iter()
            .map(|i| self.supports[*i])
            .reduce(|a, b| a.union(&b))
            .expect("clusters are nonempty");
        let id = self.clusters.len();
        self.clusters.push(Cluster {
            id,
            level,
            indices: Vec::new(),
            bbox,
            cube_side: bbox.cube_side(),
            children: None,
        });
        if indices.len() > self.n_leaf {
            loop {
                if region.cube_side() <= self.floor {
                    break;
                }
                let axis = region.longest_axis();
                let (lo_box, hi_box, mid) = region.halves(axis);
                let (lo, hi): (Vec<usize>, Vec<usize>) = indices.iter().partition(|i| self.mids[**i][axis] <= mid);
                if hi.is_empty() {
                    region = lo_box;
                } else if lo.is_empty() {
                    region = hi_box;
                } else {
                    let a = self.build(lo, lo_box, level + 1);
                    let b = self.build(hi, hi_box, level + 1);
                    self.clusters[id].children = Some([a, b]);
                    break;
                }
            }
        }
        self.clusters[id].indices = indices;
        id
    }
}

/// Far field (admissible leaves) and near field of a block cluster tree.
#[derive(Debug, Clone, Serialize)]
pub struct BlockPartition {
    pub far: Vec<(usize, usize)>,
    pub near: Vec<(usize, usize)>,
    pub eta: f64,
}

/// Standard recursion from `(root, root)`: admissible pairs become far
/// leaves, pairs of leaf clusters become near leaves, otherwise the
/// non-leaf clusters are split.
pub fn build_block_partition(tree: &ClusterTree, eta: f64) -> Result<BlockPartition> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    let mut part = BlockPartition { far: Vec::new(), near: Vec::new(), eta };
    let mut stack = vec![(0, 0)];
    while let Some((t, s)) = stack.pop() {
        let (ct, cs) = (tree.cluster(t), tree.cluster(s));
        if is_admissible(&ct.bbox, &cs.bbox, eta) {
            part.far.push((t, s));
            continue;
        }
        match (ct.children, cs.children) {
            (None, None) => part.near.push((t, s)),
            (None, Some(sc)) => stack.extend(sc.iter().rev().map(|c| (t, *c))),
            (Some(tc), None) => stack.extend(tc.iter().rev().map(|c| (*c, s))),
            (Some(tc), Some(sc)) => {
                for a in tc.iter().rev() {
                    for b in sc.iter().rev() {
                        stack.push((*a, *b));
                    }
                }
            }
        }
    }
    Ok(part)
}

/// Largest number of far-field partners of any cluster, counted as row and
/// as column cluster.
pub fn sparsity_constant(partition: &BlockPartition) -> usize {
    use std::collections::BTreeMap;
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (t, s) in &partition.far {
        *rows.entry(*t).or_default() += 1;
        *cols.entry(*s).or_default() += 1;
    }
    rows.values().chain(cols.values()).copied().max().unwrap_or(0)
}

impl BlockPartition {
    pub fn blocks(&self) -> impl Iterator<Item = (usize, usize, bool)> + '_ {
        self.far.iter().map(|(t, s)| (*t, *s, true)).chain(self.near.iter().map(|(t, s)| (*t, *s, false)))
    }

    /// Whether the blocks cover every `(i, j)` exactly once.
    pub fn tiles(&self, tree: &ClusterTree) -> bool {
        let n = tree.n_dofs();
        let mut hit = vec![false; n * n];
        for (t, s, _) in self.blocks() {
            for i in &tree.cluster(t).indices {
                for j in &tree.cluster(s).indices {
                    let k = i * n + j;
                    if hit[k] {
                        return false;
                    }
                    hit[k] = true;
                }
            }
        }
        hit.into_iter().all(|h| h)
    }

    pub fn dump<'a>(&'a self, tree: &'a ClusterTree) -> PartitionDump<'a> {
        PartitionDump {
            n_dofs: tree.n_dofs(),
            n_leaf: tree.n_leaf(),
            depth: tree.depth(),
            eta: self.eta,
            sparsity_constant: sparsity_constant(self),
            clusters: tree.clusters(),
            far: &self.far,
            near: &self.near,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct PartitionDump<'a> {
    pub n_dofs: usize,
    pub n_leaf: usize,
    pub depth: usize,
    pub eta: f64,
    pub sparsity_constant: usize,
    pub clusters: &'a [Cluster],
    pub far: &'a [(usize, usize)],
    pub near: &'a [(usize, usize)],
}
