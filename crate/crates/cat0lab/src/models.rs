//! Generators for desk-scale model spaces with exact distance oracles:
//! flat and hyperbolic discs, Euclidean cones and metric trees.
//!
//! Disc meshes are triangular lattices. Besides the unit lattice edges, every
//! vertex is connected to all lattice neighbors within a template radius that
//! grows like `h^(-1/2)`; this keeps the angular resolution of path directions
//! improving under refinement, so the shortest-path metric converges to the
//! continuum metric at first order.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{LabError, Result};
use crate::space::{build_space, LengthSpace, OracleTag};

pub const MAX_VERTICES: usize = 300_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    FlatDisc,
    HyperbolicDisc,
    Cone,
    Tree,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default = "default_radius")]
    pub radius: f64,
    pub spacing: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cone_total_angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree_legs: Option<Vec<f64>>,
}

fn default_radius() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn flat_disc(radius: f64, spacing: f64) -> Self {
        ModelSpec {
            kind: ModelKind::FlatDisc,
            radius,
            spacing,
            cone_total_angle: None,
            tree_legs: None,
        }
    }

    pub fn hyperbolic_disc(radius: f64, spacing: f64) -> Self {
        ModelSpec {
            kind: ModelKind::HyperbolicDisc,
            radius,
            spacing,
            cone_total_angle: None,
            tree_legs: None,
        }
    }

    pub fn cone(total_angle: f64, radius: f64, spacing: f64) -> Self {
        ModelSpec {
            kind: ModelKind::Cone,
            radius,
            spacing,
            cone_total_angle: Some(total_angle),
            tree_legs: None,
        }
    }

    pub fn tree(legs: Vec<f64>, spacing: f64) -> Self {
        ModelSpec {
            kind: ModelKind::Tree,
            radius: 0.0,
            spacing,
            cone_total_angle: None,
            tree_legs: Some(legs),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0) {
            return Err(LabError::BadModelSpec(format!(
                "spacing must be positive, got {}",
                self.spacing
            )));
        }
        match self.kind {
            ModelKind::Tree => {
                let legs = self
                    .tree_legs
                    .as_ref()
                    .ok_or_else(|| LabError::BadModelSpec("tree requires tree-legs".into()))?;
                if legs.is_empty() || legs.iter().any(|&l| !(l > 0.0)) {
                    return Err(LabError::BadModelSpec("tree legs must be positive".into()));
                }
            }
            ModelKind::Cone => {
                let theta = self.cone_total_angle.ok_or_else(|| {
                    LabError::BadModelSpec("cone requires cone-total-angle".into())
                })?;
                if !(theta > 0.0) {
                    return Err(LabError::BadModelSpec(
                        "cone-total-angle must be positive".into(),
                    ));
                }
                if !(self.radius > 0.0) {
                    return Err(LabError::BadModelSpec("radius must be positive".into()));
                }
            }
            ModelKind::FlatDisc => {
                if !(self.radius > 0.0) {
                    return Err(LabError::BadModelSpec("radius must be positive".into()));
                }
            }
            ModelKind::HyperbolicDisc => {
                if !(self.radius > 0.0 && self.radius < 1.0) {
                    return Err(LabError::BadModelSpec(
                        "hyperbolic disc radius is a Poincare coordinate radius in (0, 1)".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Lattice template radius in units of the spacing. Grows like `h^(-1/2)` so
/// that the direction-quantization error of shortest paths is O(h).
pub fn template_radius(h: f64) -> i64 {
    ((0.5 / h).sqrt().round() as i64).max(2)
}

/// Poincare disc distance (curvature -1) between two chart points.
pub fn hyperbolic_distance(z: [f64; 2], w: [f64; 2]) -> f64 {
    let dz2 = (z[0] - w[0]).powi(2) + (z[1] - w[1]).powi(2);
    let nz = 1.0 - z[0] * z[0] - z[1] * z[1];
    let nw = 1.0 - w[0] * w[0] - w[1] * w[1];
    (1.0 + 2.0 * dz2 / (nz * nw)).acosh()
}

/// Exact distance on the Euclidean cone of total angle `theta`, between two
/// points given in the conformally flat chart (the cone metric in the chart
/// is |z|^alpha |dz| with theta = 2 pi (1 + alpha)).
pub fn cone_chart_distance(theta: f64, z: [f64; 2], w: [f64; 2]) -> f64 {
    let beta = theta / (2.0 * std::f64::consts::PI); // 1 + alpha
    let rz = z[0].hypot(z[1]);
    let rw = w[0].hypot(w[1]);
    let r1 = rz.powf(beta) / beta;
    let r2 = rw.powf(beta) / beta;
    if rz == 0.0 || rw == 0.0 {
        return r1 + r2;
    }
    let mut dphi = (z[1].atan2(z[0]) - w[1].atan2(w[0])).abs();
    if dphi > std::f64::consts::PI {
        dphi = 2.0 * std::f64::consts::PI - dphi;
    }
    let delta = beta * dphi;
    if delta >= std::f64::consts::PI {
        r1 + r2
    } else {
        (r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * delta.cos()).sqrt()
    }
}

/// Closed-form distance for the model a space was generated from.
pub fn exact_distance(space: &LengthSpace, a: usize, b: usize) -> Result<f64> {
    space.check_vertex(a)?;
    space.check_vertex(b)?;
    let tag = space
        .oracle()
        .ok_or_else(|| LabError::MissingOracle("space has no oracle tag".into()))?;
    if tag == OracleTag::Tree {
        // Shortest paths are exact on trees.
        return space.distance(a, b);
    }
    let coords = space
        .coords()
        .ok_or_else(|| LabError::MissingCoords("oracle evaluation needs coords".into()))?;
    let (z, w) = (coords[a], coords[b]);
    Ok(match tag {
        OracleTag::Euclidean => (z[0] - w[0]).hypot(z[1] - w[1]),
        OracleTag::Hyperbolic => hyperbolic_distance(z, w),
        OracleTag::Cone { total_angle } => cone_chart_distance(total_angle, z, w),
        OracleTag::Tree => unreachable!(),
    })
}

fn lattice_coord(h: f64, i: i64, j: i64) -> [f64; 2] {
    [
        h * (i as f64 + 0.5 * j as f64),
        h * (3.0f64.sqrt() / 2.0) * j as f64,
    ]
}

/// Generate the model space described by `spec`.
pub fn generate(spec: &ModelSpec) -> Result<LengthSpace> {
    spec.validate()?;
    match spec.kind {
        ModelKind::Tree => generate_tree(spec.tree_legs.as_ref().unwrap(), spec.spacing),
        ModelKind::FlatDisc | ModelKind::HyperbolicDisc | ModelKind::Cone => generate_disc(spec),
    }
}

fn generate_tree(legs: &[f64], h: f64) -> Result<LengthSpace> {
    let mut edges = Vec::new();
    let mut n = 1usize; // center is vertex 0
    for &len in legs {
        let segs = (len / h).ceil().max(1.0) as usize;
        let step = len / segs as f64;
        let mut prev = 0usize;
        for _ in 0..segs {
            let v = n;
            n += 1;
            edges.push((prev, v, step));
            prev = v;
        }
    }
    if n > MAX_VERTICES {
        return Err(LabError::VertexBudget(n, MAX_VERTICES));
    }
    let mut s = build_space(n, edges, None, None)?;
    s.set_oracle(Some(OracleTag::Tree));
    Ok(s)
}

fn generate_disc(spec: &ModelSpec) -> Result<LengthSpace> {
    let h = spec.spacing;
    let radius = spec.radius;
    // Cheap size estimate before touching any allocation.
    let density = 2.0 / (3.0f64.sqrt() * h * h);
    let estimate = (std::f64::consts::PI * radius * radius * density) as usize;
    if estimate > 2 * MAX_VERTICES {
        return Err(LabError::VertexBudget(estimate, MAX_VERTICES));
    }
    let m = (radius / h).ceil() as i64 + 1;
    // Collect lattice points inside the disc, scanned in a fixed order.
    let mut index: HashMap<(i64, i64), usize> = HashMap::new();
    let mut coords: Vec<[f64; 2]> = Vec::new();
    let mut keys: Vec<(i64, i64)> = Vec::new();
    for j in -m..=m {
        for i in -m..=m {
            let p = lattice_coord(h, i, j);
            if p[0].hypot(p[1]) <= radius + 1e-9 {
                index.insert((i, j), coords.len());
                keys.push((i, j));
                coords.push(p);
            }
        }
    }
    let n = coords.len();
    if n > MAX_VERTICES {
        return Err(LabError::VertexBudget(n, MAX_VERTICES));
    }
    if n < 7 {
        return Err(LabError::BadModelSpec(
            "disc too small for the requested spacing".into(),
        ));
    }
    // Template offsets: coprime lattice vectors within the template radius,
    // one representative per +/- pair.
    let k = template_radius(h);
    let mut offsets = Vec::new();
    for dj in 0..=k {
        for di in -k..=k {
            if dj == 0 && di <= 0 {
                continue;
            }
            if di * di + di * dj + dj * dj > k * k {
                continue;
            }
            if gcd(di.unsigned_abs(), dj.unsigned_abs()) != 1 {
                continue;
            }
            offsets.push((di, dj));
        }
    }
    let weight = |za: [f64; 2], zb: [f64; 2]| -> f64 {
        match spec.kind {
            ModelKind::FlatDisc => (za[0] - zb[0]).hypot(za[1] - zb[1]),
            ModelKind::HyperbolicDisc => hyperbolic_distance(za, zb),
            ModelKind::Cone => cone_chart_distance(spec.cone_total_angle.unwrap(), za, zb),
            ModelKind::Tree => unreachable!(),
        }
    };
    let mut edges = Vec::new();
    for (vi, &(i, j)) in keys.iter().enumerate() {
        for &(di, dj) in &offsets {
            if let Some(&vj) = index.get(&(i + di, j + dj)) {
                let w = weight(coords[vi], coords[vj]);
                // The apex of a cone with alpha > 0 can coincide with a
                // lattice point; weights must stay positive.
                edges.push((vi, vj, w.max(1e-300)));
            }
        }
    }
    let boundary = lattice_boundary(&index, &keys)?;
    let mut s = build_space(n, edges, Some(coords), Some(boundary))?;
    s.set_oracle(Some(match spec.kind {
        ModelKind::FlatDisc => OracleTag::Euclidean,
        ModelKind::HyperbolicDisc => OracleTag::Hyperbolic,
        ModelKind::Cone => OracleTag::Cone {
            total_angle: spec.cone_total_angle.unwrap(),
        },
        ModelKind::Tree => unreachable!(),
    }));
    Ok(s)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Walk the outer boundary of the unit-edge triangulation: directed edges of
/// CCW faces that have no twin are exactly the boundary cycle.
fn lattice_boundary(
    index: &HashMap<(i64, i64), usize>,
    keys: &[(i64, i64)],
) -> Result<Vec<usize>> {
    let mut succ: HashMap<usize, usize> = HashMap::new();
    let mut edge_faces: HashMap<(usize, usize), u32> = HashMap::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for &(i, j) in keys {
        // CCW faces: up (p, p+u, p+v) and down (p+u, p+u+v, p+v).
        let corners = [
            [(i, j), (i + 1, j), (i, j + 1)],
            [(i + 1, j), (i + 1, j + 1), (i, j + 1)],
        ];
        for tri in corners {
            if let (Some(&a), Some(&b), Some(&c)) = (
                index.get(&tri[0]),
                index.get(&tri[1]),
                index.get(&tri[2]),
            ) {
                faces.push([a, b, c]);
                for (x, y) in [(a, b), (b, c), (c, a)] {
                    let key = (x.min(y), x.max(y));
                    *edge_faces.entry(key).or_insert(0) += 1;
                }
            }
        }
    }
    let mut n_border = 0usize;
    for &[a, b, c] in &faces {
        for (x, y) in [(a, b), (b, c), (c, a)] {
            if edge_faces[&(x.min(y), x.max(y))] == 1 {
                if succ.insert(x, y).is_some() {
                    return Err(LabError::BadBoundary(
                        "lattice boundary is pinched".into(),
                    ));
                }
                n_border += 1;
            }
        }
    }
    let start = *succ
        .keys()
        .min()
        .ok_or_else(|| LabError::BadBoundary("no boundary edges".into()))?;
    let mut cycle = vec![start];
    let mut v = succ[&start];
    while v != start {
        cycle.push(v);
        v = *succ
            .get(&v)
            .ok_or_else(|| LabError::BadBoundary("boundary walk broke".into()))?;
        if cycle.len() > n_border {
            return Err(LabError::BadBoundary("boundary walk did not close".into()));
        }
    }
    if cycle.len() != n_border {
        return Err(LabError::BadBoundary(
            "boundary has more than one cycle".into(),
        ));
    }
    Ok(cycle)
}

/// Unit-edge triangulation reconstructed from coordinates: faces, cotangent
/// weights, barycentric vertex areas and interior flags.
#[derive(Clone, Debug)]
pub struct Triangulation {
    pub faces: Vec<[usize; 3]>,
    /// Unit lattice edges (a < b) with their cotangent weights.
    pub cot_edges: Vec<(usize, usize, f64)>,
    pub vertex_area: Vec<f64>,
    pub interior: Vec<bool>,
    pub spacing: f64,
}

pub fn triangulation(space: &LengthSpace) -> Result<Triangulation> {
    let coords = space
        .coords()
        .ok_or_else(|| LabError::NotFlatMesh("triangulation needs coords".into()))?;
    let boundary = space
        .boundary()
        .ok_or_else(|| LabError::NotFlatMesh("triangulation needs a boundary cycle".into()))?;
    let clen = |a: usize, b: usize| -> f64 {
        (coords[a][0] - coords[b][0]).hypot(coords[a][1] - coords[b][1])
    };
    let mut h_min = f64::INFINITY;
    for &(a, b, _) in space.edges() {
        h_min = h_min.min(clen(a, b));
    }
    let short_cut = 1.3 * h_min;
    let n = space.vertex_count();
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b, _) in space.edges() {
        if clen(a, b) <= short_cut {
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
    }
    for l in nbrs.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    let mut faces = Vec::new();
    for a in 0..n {
        for &b in &nbrs[a] {
            if b <= a {
                continue;
            }
            for &c in &nbrs[b] {
                if c <= b || !nbrs[a].contains(&c) {
                    continue;
                }
                // Orient CCW.
                let (pa, pb, pc) = (coords[a], coords[b], coords[c]);
                let cross = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0]);
                if cross >= 0.0 {
                    faces.push([a, b, c]);
                } else {
                    faces.push([a, c, b]);
                }
            }
        }
    }
    let mut vertex_area = vec![0.0; n];
    let mut cot_acc: HashMap<(usize, usize), f64> = HashMap::new();
    for &[a, b, c] in &faces {
        let (pa, pb, pc) = (coords[a], coords[b], coords[c]);
        let area =
            0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0])).abs();
        for v in [a, b, c] {
            vertex_area[v] += area / 3.0;
        }
        // Cotangent of the angle at each corner, accumulated on the opposite edge.
        let corners = [(a, b, c), (b, c, a), (c, a, b)];
        for (v, x, y) in corners {
            let (pv, px, py) = (coords[v], coords[x], coords[y]);
            let u1 = [px[0] - pv[0], px[1] - pv[1]];
            let u2 = [py[0] - pv[0], py[1] - pv[1]];
            let dot = u1[0] * u2[0] + u1[1] * u2[1];
            let crs = (u1[0] * u2[1] - u1[1] * u2[0]).abs();
            let cot = dot / crs.max(1e-300);
            let key = (x.min(y), x.max(y));
            *cot_acc.entry(key).or_insert(0.0) += 0.5 * cot;
        }
    }
    let mut cot_edges: Vec<(usize, usize, f64)> =
        cot_acc.into_iter().map(|((a, b), w)| (a, b, w)).collect();
    cot_edges.sort_unstable_by_key(|&(a, b, _)| (a, b));
    let mut interior = vec![true; n];
    for &v in boundary {
        interior[v] = false;
    }
    Ok(Triangulation {
        faces,
        cot_edges,
        vertex_area,
        interior,
        spacing: h_min,
    })
}

/// Representative mesh scale of an arbitrary space: the median edge weight.
pub fn median_edge_weight(space: &LengthSpace) -> f64 {
    let mut ws: Vec<f64> = space.edges().iter().map(|&(_, _, w)| w).collect();
    ws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ws[ws.len() / 2]
}

/// Edge-weight quantile. The 0.9 quantile serves as the coarse mesh scale of
/// a nonuniform space: discretization tolerances have to track the longest
/// edges a path may be forced through, not the typical ones.
pub fn edge_weight_quantile(space: &LengthSpace, q: f64) -> f64 {
    let mut ws: Vec<f64> = space.edges().iter().map(|&(_, _, w)| w).collect();
    ws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((ws.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize;
    ws[idx]
}

/// Vertex nearest to the given chart point.
pub fn nearest_vertex(space: &LengthSpace, p: [f64; 2]) -> Result<usize> {
    let coords = space
        .coords()
        .ok_or_else(|| LabError::MissingCoords("nearest_vertex needs coords".into()))?;
    Ok((0..space.vertex_count())
        .min_by(|&a, &b| {
            let da = (coords[a][0] - p[0]).hypot(coords[a][1] - p[1]);
            let db = (coords[b][0] - p[0]).hypot(coords[b][1] - p[1]);
            da.partial_cmp(&db).unwrap()
        })
        .unwrap())
}
