//! Finite length spaces as weighted graphs.
//!
//! A [`LengthSpace`] is an immutable connected weighted graph. Distances are
//! graph shortest-path lengths, geodesics are shortest paths with deterministic
//! lexicographic tie-breaking, and points strictly interior to edges are
//! addressed by (edge, offset).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Absolute tolerance for length comparisons.
pub const LENGTH_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleTag {
    Euclidean,
    Hyperbolic,
    Cone {
        #[serde(rename = "total-angle")]
        total_angle: f64,
    },
    Tree,
}

#[derive(Clone, Debug)]
pub struct LengthSpace {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    adj: Vec<Vec<(usize, f64)>>,
    coords: Option<Vec<[f64; 2]>>,
    boundary: Option<Vec<usize>>,
    oracle: Option<OracleTag>,
}

#[derive(Serialize, Deserialize)]
struct SpaceJson {
    vertices: usize,
    edges: Vec<(usize, usize, f64)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    coords: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    boundary: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    oracle: Option<OracleTag>,
}

impl Serialize for LengthSpace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SpaceJson {
            vertices: self.n,
            edges: self.edges.clone(),
            coords: self.coords.clone(),
            boundary: self.boundary.clone(),
            oracle: self.oracle,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LengthSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = SpaceJson::deserialize(d)?;
        let mut space = build_space(raw.vertices, raw.edges, raw.coords, raw.boundary)
            .map_err(serde::de::Error::custom)?;
        space.oracle = raw.oracle;
        Ok(space)
    }
}

/// Validated constructor. Rejects non-positive weights, out-of-range
/// endpoints, disconnected graphs and malformed boundary cycles.
pub fn build_space(
    vertices: usize,
    edges: Vec<(usize, usize, f64)>,
    coords: Option<Vec<[f64; 2]>>,
    boundary: Option<Vec<usize>>,
) -> Result<LengthSpace> {
    for &(a, b, w) in &edges {
        if a >= vertices {
            return Err(LabError::BadVertex(a, vertices));
        }
        if b >= vertices {
            return Err(LabError::BadVertex(b, vertices));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(LabError::BadWeight(a, b, w));
        }
    }
    if let Some(c) = &coords {
        if c.len() != vertices {
            return Err(LabError::MissingCoords(format!(
                "coords length {} != vertex count {}",
                c.len(),
                vertices
            )));
        }
    }
    let mut adj = vec![Vec::new(); vertices];
    for &(a, b, w) in &edges {
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    // Single BFS; every query assumes connectivity afterwards.
    if vertices > 0 {
        let mut seen = vec![false; vertices];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1usize;
        while let Some(v) = stack.pop() {
            for &(u, _) in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        if count != vertices {
            return Err(LabError::Disconnected(count, vertices));
        }
    }
    let space = LengthSpace {
        n: vertices,
        edges,
        adj,
        coords,
        boundary: None,
        oracle: None,
    };
    let space = match boundary {
        None => space,
        Some(cycle) => space.with_boundary(cycle)?,
    };
    Ok(space)
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    vertex: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (dist, vertex); BinaryHeap is a max-heap, so reverse.
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap()
            .then(other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest-path tree. `dist[v]` and `pred[v]` are only
/// meaningful where `settled[v]` is true (always true after a full run).
#[derive(Clone, Debug)]
pub struct Sssp {
    pub source: usize,
    pub dist: Vec<f64>,
    pub pred: Vec<usize>,
    pub settled: Vec<bool>,
}

/// A point of the metric graph: a vertex, or a point strictly interior to an
/// edge at a given arc-length offset from endpoint `a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Position {
    Vertex(usize),
    Edge {
        a: usize,
        b: usize,
        offset: f64,
        weight: f64,
    },
}

impl Position {
    /// Carrier vertices together with the arc-length offset to each.
    pub fn carriers(&self) -> Vec<(usize, f64)> {
        match *self {
            Position::Vertex(v) => vec![(v, 0.0)],
            Position::Edge { a, b, offset, weight } => vec![(a, offset), (b, weight - offset)],
        }
    }

    pub fn interpolate_coords(&self, coords: &[[f64; 2]]) -> [f64; 2] {
        match *self {
            Position::Vertex(v) => coords[v],
            Position::Edge { a, b, offset, weight } => {
                let t = offset / weight;
                let pa = coords[a];
                let pb = coords[b];
                [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
            }
        }
    }
}

/// Arc-length parametrized shortest path.
#[derive(Clone, Debug)]
pub struct GeodesicPath {
    pub vertices: Vec<usize>,
    pub cumulative: Vec<f64>,
    pub total: f64,
}

impl GeodesicPath {
    /// Point at arc length `t` from the start, clamped to `[0, total]`.
    pub fn point_at(&self, t: f64) -> Position {
        let t = t.clamp(0.0, self.total);
        if self.vertices.len() == 1 {
            return Position::Vertex(self.vertices[0]);
        }
        // Last segment index with cumulative[i] <= t.
        let mut i = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        if i + 1 >= self.vertices.len() {
            i = self.vertices.len() - 2;
        }
        let off = t - self.cumulative[i];
        let w = self.cumulative[i + 1] - self.cumulative[i];
        if off <= LENGTH_TOL {
            Position::Vertex(self.vertices[i])
        } else if off >= w - LENGTH_TOL {
            Position::Vertex(self.vertices[i + 1])
        } else {
            Position::Edge {
                a: self.vertices[i],
                b: self.vertices[i + 1],
                offset: off,
                weight: w,
            }
        }
    }
}

impl LengthSpace {
    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        self.coords.as_deref()
    }

    pub fn boundary(&self) -> Option<&[usize]> {
        self.boundary.as_deref()
    }

    pub fn oracle(&self) -> Option<OracleTag> {
        self.oracle
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[v]
    }

    pub fn edge_weight(&self, a: usize, b: usize) -> Option<f64> {
        self.adj[a]
            .iter()
            .find(|&&(u, _)| u == b)
            .map(|&(_, w)| w)
    }

    pub fn set_oracle(&mut self, tag: Option<OracleTag>) {
        self.oracle = tag;
    }

    /// Attach a boundary cycle, validating that it is simple and closed in the
    /// edge set.
    pub fn with_boundary(mut self, cycle: Vec<usize>) -> Result<Self> {
        if cycle.len() < 3 {
            return Err(LabError::BadBoundary(format!(
                "cycle has {} vertices, need at least 3",
                cycle.len()
            )));
        }
        let mut seen = vec![false; self.n];
        for &v in &cycle {
            if v >= self.n {
                return Err(LabError::BadVertex(v, self.n));
            }
            if seen[v] {
                return Err(LabError::BadBoundary(format!("repeated vertex {v}")));
            }
            seen[v] = true;
        }
        for i in 0..cycle.len() {
            let a = cycle[i];
            let b = cycle[(i + 1) % cycle.len()];
            if self.edge_weight(a, b).is_none() {
                return Err(LabError::BadBoundary(format!(
                    "consecutive vertices {a} and {b} are not adjacent"
                )));
            }
        }
        self.boundary = Some(cycle);
        Ok(self)
    }

    /// Same topology and metadata, new edge weights (in edge order). The
    /// oracle tag is dropped; callers re-tag when an exact model is known.
    pub fn reweighted(&self, weights: &[f64]) -> Result<LengthSpace> {
        assert_eq!(weights.len(), self.edges.len());
        let edges: Vec<(usize, usize, f64)> = self
            .edges
            .iter()
            .zip(weights)
            .map(|(&(a, b, _), &w)| (a, b, w))
            .collect();
        build_space(self.n, edges, self.coords.clone(), self.boundary.clone())
    }

    /// Remove one vertex; returns the new space and the old-to-new index map
    /// (`usize::MAX` for the removed vertex). The boundary must not contain it.
    pub fn remove_vertex(&self, v: usize) -> Result<LengthSpace> {
        if let Some(b) = &self.boundary {
            if b.contains(&v) {
                return Err(LabError::BadBoundary(format!(
                    "cannot remove boundary vertex {v}"
                )));
            }
        }
        let map: Vec<usize> = (0..self.n)
            .map(|i| if i < v { i } else if i == v { usize::MAX } else { i - 1 })
            .collect();
        let edges: Vec<(usize, usize, f64)> = self
            .edges
            .iter()
            .filter(|&&(a, b, _)| a != v && b != v)
            .map(|&(a, b, w)| (map[a], map[b], w))
            .collect();
        let coords = self
            .coords
            .as_ref()
            .map(|c| (0..self.n).filter(|&i| i != v).map(|i| c[i]).collect());
        let boundary = self
            .boundary
            .as_ref()
            .map(|cyc| cyc.iter().map(|&i| map[i]).collect());
        let mut s = build_space(self.n - 1, edges, coords, boundary)?;
        s.oracle = self.oracle;
        Ok(s)
    }

    /// Dijkstra from `src`. With `targets`, stops as soon as every target is
    /// settled. Ties are broken toward the smaller predecessor index so that
    /// geodesics are reproducible.
    pub fn sssp(&self, src: usize, targets: Option<&[usize]>) -> Sssp {
        assert!(src < self.n, "source out of range");
        let mut dist = vec![f64::INFINITY; self.n];
        let mut pred = vec![usize::MAX; self.n];
        let mut settled = vec![false; self.n];
        let mut remaining = 0usize;
        let mut is_target = Vec::new();
        if let Some(ts) = targets {
            is_target = vec![false; self.n];
            for &t in ts {
                if !is_target[t] {
                    is_target[t] = true;
                    remaining += 1;
                }
            }
        }
        dist[src] = 0.0;
        pred[src] = src;
        let mut heap = BinaryHeap::new();
        heap.push(HeapItem { dist: 0.0, vertex: src });
        while let Some(HeapItem { dist: d, vertex: v }) = heap.pop() {
            if settled[v] {
                continue;
            }
            settled[v] = true;
            if targets.is_some() && is_target[v] {
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
            }
            for &(u, w) in &self.adj[v] {
                let nd = d + w;
                if nd < dist[u] {
                    dist[u] = nd;
                    pred[u] = v;
                    heap.push(HeapItem { dist: nd, vertex: u });
                } else if nd == dist[u] && !settled[u] && v < pred[u] {
                    pred[u] = v;
                }
            }
        }
        Sssp { source: src, dist, pred, settled }
    }

    pub fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.n {
            return Err(LabError::BadVertex(v, self.n));
        }
        Ok(())
    }

    /// Shortest-path distance between vertices.
    pub fn distance(&self, a: usize, b: usize) -> Result<f64> {
        self.check_vertex(a)?;
        self.check_vertex(b)?;
        if a == b {
            return Ok(0.0);
        }
        Ok(self.sssp(a, Some(&[b])).dist[b])
    }

    /// Shortest path as an arc-length parametrized polyline.
    pub fn geodesic(&self, a: usize, b: usize) -> Result<GeodesicPath> {
        self.check_vertex(a)?;
        self.check_vertex(b)?;
        let tree = self.sssp(a, Some(&[b]));
        Ok(self.path_from_tree(&tree, b))
    }

    /// Extract the path to `target` from a shortest-path tree.
    pub fn path_from_tree(&self, tree: &Sssp, target: usize) -> GeodesicPath {
        let mut rev = vec![target];
        let mut v = target;
        while v != tree.source {
            v = tree.pred[v];
            rev.push(v);
        }
        rev.reverse();
        let mut cumulative = Vec::with_capacity(rev.len());
        cumulative.push(0.0);
        for i in 1..rev.len() {
            let w = self.edge_weight(rev[i - 1], rev[i]).expect("tree edge");
            cumulative.push(cumulative[i - 1] + w);
        }
        let total = *cumulative.last().unwrap();
        GeodesicPath { vertices: rev, cumulative, total }
    }

    /// Length of a polyline of pairwise-adjacent vertices.
    pub fn curve_length(&self, polyline: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for pair in polyline.windows(2) {
            self.check_vertex(pair[0])?;
            self.check_vertex(pair[1])?;
            match self.edge_weight(pair[0], pair[1]) {
                Some(w) => total += w,
                None => return Err(LabError::NotAdjacent(pair[0], pair[1])),
            }
        }
        if let Some(&v) = polyline.first() {
            self.check_vertex(v)?;
        }
        Ok(total)
    }
}

/// Cache of shortest-path rows used when many point-to-point distances are
/// needed against a shared set of endpoints.
#[derive(Default)]
pub struct DistCache {
    rows: std::collections::HashMap<usize, Sssp>,
}

impl DistCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Run (or reuse) a shortest-path tree from `src` that settles at least
    /// `targets`.
    pub fn prime(&mut self, space: &LengthSpace, src: usize, targets: &[usize]) {
        let ok = self
            .rows
            .get(&src)
            .map(|t| targets.iter().all(|&v| t.settled[v]))
            .unwrap_or(false);
        if !ok {
            self.rows.insert(src, space.sssp(src, Some(targets)));
        }
    }

    pub fn vertex_dist(&mut self, space: &LengthSpace, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        if let Some(t) = self.rows.get(&a) {
            if t.settled[b] {
                return t.dist[b];
            }
        }
        if let Some(t) = self.rows.get(&b) {
            if t.settled[a] {
                return t.dist[a];
            }
        }
        self.prime(space, a, &[b]);
        self.rows[&a].dist[b]
    }

    /// Distance between two graph points, going through carrier vertices or
    /// directly along a shared edge.
    pub fn position_dist(&mut self, space: &LengthSpace, p: Position, q: Position) -> f64 {
        let mut best = f64::INFINITY;
        if let (
            Position::Edge { a, b, offset: s, .. },
            Position::Edge { a: c, b: d, offset: t, .. },
        ) = (p, q)
        {
            if a == c && b == d {
                best = (s - t).abs();
            } else if a == d && b == c {
                // Same edge, opposite orientation.
                let w = match p {
                    Position::Edge { weight, .. } => weight,
                    _ => unreachable!(),
                };
                best = (s - (w - t)).abs();
            }
        }
        for (cp, op) in p.carriers() {
            for (cq, oq) in q.carriers() {
                let d = op + self.vertex_dist(space, cp, cq) + oq;
                if d < best {
                    best = d;
                }
            }
        }
        best
    }
}

/// All-pairs shortest paths by Floyd-Warshall. Intended as an independent
/// oracle for small spaces only.
pub fn floyd_warshall(space: &LengthSpace) -> Vec<Vec<f64>> {
    let n = space.vertex_count();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        d[i][i] = 0.0;
    }
    for &(a, b, w) in space.edges() {
        if w < d[a][b] {
            d[a][b] = w;
            d[b][a] = w;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}
