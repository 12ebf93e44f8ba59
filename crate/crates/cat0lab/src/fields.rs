//! Scalar functions on spaces: convex exponents, conformal factors, and the
//! discrete testers for convexity, subharmonicity and log-subharmonicity.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::models::{self, Triangulation};
use crate::space::{LengthSpace, OracleTag, Position};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum FieldRule {
    Constant { value: f64 },
    /// a*x + b*y + c in chart coordinates.
    Affine { a: f64, b: f64, c: f64 },
    /// scale * |z|^2.
    NormSquared { scale: f64 },
    /// |z|^alpha.
    PowerRadial { alpha: f64 },
    DistanceToVertex { vertex: usize },
    DistanceToSet { vertices: Vec<usize> },
    Exp { inner: Box<FieldRule> },
    Product { left: Box<FieldRule>, right: Box<FieldRule> },
}

#[derive(Clone, Debug)]
pub struct ScalarField {
    pub values: Vec<f64>,
    pub rule: Option<FieldRule>,
    pub positive: bool,
}

impl ScalarField {
    pub fn from_values(values: Vec<f64>) -> Self {
        let positive = values.iter().all(|&v| v > 0.0);
        ScalarField { values, rule: None, positive }
    }

    pub fn value(&self, v: usize) -> f64 {
        self.values[v]
    }

    /// Linear interpolation in arc length along an edge.
    pub fn at_position(&self, p: Position) -> f64 {
        match p {
            Position::Vertex(v) => self.values[v],
            Position::Edge { a, b, offset, weight } => {
                let t = offset / weight;
                (1.0 - t) * self.values[a] + t * self.values[b]
            }
        }
    }

    pub fn pointwise_product(&self, other: &ScalarField) -> ScalarField {
        let values: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .collect();
        let rule = match (&self.rule, &other.rule) {
            (Some(l), Some(r)) => Some(FieldRule::Product {
                left: Box::new(l.clone()),
                right: Box::new(r.clone()),
            }),
            _ => None,
        };
        let positive = values.iter().all(|&v| v > 0.0);
        ScalarField { values, rule, positive }
    }
}

/// Evaluate a coordinate closed form at an arbitrary chart point, when the
/// rule admits one for the space's geometry. Used by midpoint quadrature.
pub fn eval_rule_at_point(space: &LengthSpace, rule: &FieldRule, p: [f64; 2]) -> Option<f64> {
    match rule {
        FieldRule::Constant { value } => Some(*value),
        FieldRule::Affine { a, b, c } => Some(a * p[0] + b * p[1] + c),
        FieldRule::NormSquared { scale } => Some(scale * (p[0] * p[0] + p[1] * p[1])),
        FieldRule::PowerRadial { alpha } => Some(p[0].hypot(p[1]).powf(*alpha)),
        FieldRule::DistanceToVertex { vertex } => {
            let coords = space.coords()?;
            let q = coords[*vertex];
            match space.oracle()? {
                OracleTag::Euclidean => Some((p[0] - q[0]).hypot(p[1] - q[1])),
                OracleTag::Hyperbolic => Some(models::hyperbolic_distance(p, q)),
                OracleTag::Cone { total_angle } => {
                    Some(models::cone_chart_distance(total_angle, p, q))
                }
                OracleTag::Tree => None,
            }
        }
        FieldRule::DistanceToSet { vertices } => {
            let mut best = f64::INFINITY;
            for &v in vertices {
                let d = eval_rule_at_point(
                    space,
                    &FieldRule::DistanceToVertex { vertex: v },
                    p,
                )?;
                best = best.min(d);
            }
            Some(best)
        }
        FieldRule::Exp { inner } => Some(eval_rule_at_point(space, inner, p)?.exp()),
        FieldRule::Product { left, right } => {
            Some(eval_rule_at_point(space, left, p)? * eval_rule_at_point(space, right, p)?)
        }
    }
}

/// Evaluate a rule on every vertex of a space.
pub fn make_field(space: &LengthSpace, rule: &FieldRule) -> Result<ScalarField> {
    let n = space.vertex_count();
    let need_coords = matches!(
        rule,
        FieldRule::Affine { .. } | FieldRule::NormSquared { .. } | FieldRule::PowerRadial { .. }
    );
    if need_coords && space.coords().is_none() {
        return Err(LabError::MissingCoords(format!("rule {rule:?} needs coords")));
    }
    let values: Vec<f64> = match rule {
        FieldRule::Constant { value } => vec![*value; n],
        FieldRule::Affine { .. } | FieldRule::NormSquared { .. } | FieldRule::PowerRadial { .. } => {
            let coords = space.coords().unwrap();
            (0..n)
                .map(|v| eval_rule_at_point(space, rule, coords[v]).unwrap())
                .collect()
        }
        FieldRule::DistanceToVertex { vertex } => {
            space.check_vertex(*vertex)?;
            distance_field(space, *vertex)
        }
        FieldRule::DistanceToSet { vertices } => {
            if vertices.is_empty() {
                return Err(LabError::BadField("distance-to-set needs a non-empty set".into()));
            }
            let mut best = vec![f64::INFINITY; n];
            for &s in vertices {
                space.check_vertex(s)?;
                let d = distance_field(space, s);
                for v in 0..n {
                    best[v] = best[v].min(d[v]);
                }
            }
            best
        }
        FieldRule::Exp { inner } => {
            let f = make_field(space, inner)?;
            f.values.iter().map(|&x| x.exp()).collect()
        }
        FieldRule::Product { left, right } => {
            let l = make_field(space, left)?;
            let r = make_field(space, right)?;
            l.values.iter().zip(&r.values).map(|(&a, &b)| a * b).collect()
        }
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(LabError::BadField("rule produced non-finite values".into()));
    }
    let positive = values.iter().all(|&v| v > 0.0);
    Ok(ScalarField { values, rule: Some(rule.clone()), positive })
}

/// Distance to a vertex, through the exact oracle when one is available and
/// through graph shortest paths otherwise.
fn distance_field(space: &LengthSpace, from: usize) -> Vec<f64> {
    let n = space.vertex_count();
    if space.oracle().is_some() && space.oracle() != Some(OracleTag::Tree) {
        if let Ok(vals) = (0..n)
            .map(|v| models::exact_distance(space, from, v))
            .collect::<Result<Vec<f64>>>()
        {
            return vals;
        }
    }
    space.sssp(from, None).dist
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexityReport {
    pub samples: usize,
    pub min_defect: f64,
    pub tol: f64,
    pub pass: bool,
    /// (endpoints, parameters, defect) for the worst offenders.
    pub violations: Vec<((usize, usize), (f64, f64), f64)>,
}

/// Midpoint-convexity scan along sampled geodesics: for parameters t, t' the
/// defect (f(t) + f(t'))/2 - f((t + t')/2) must be >= -tol.
pub fn convexity_check(
    space: &LengthSpace,
    field: &ScalarField,
    n_geodesics: usize,
    tol: f64,
    seed: u64,
) -> Result<ConvexityReport> {
    let n = space.vertex_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_defect = f64::INFINITY;
    let mut violations = Vec::new();
    let mut samples = 0usize;
    for _ in 0..n_geodesics {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let g = space.geodesic(a, b)?;
        for _ in 0..3 {
            let t1: f64 = rng.gen_range(0.0..=g.total);
            let t2: f64 = rng.gen_range(0.0..=g.total);
            let mid = 0.5 * (t1 + t2);
            let f1 = field.at_position(g.point_at(t1));
            let f2 = field.at_position(g.point_at(t2));
            let fm = field.at_position(g.point_at(mid));
            let defect = 0.5 * (f1 + f2) - fm;
            samples += 1;
            if defect < min_defect {
                min_defect = defect;
            }
            if defect < -tol {
                violations.push(((a, b), (t1, t2), defect));
            }
        }
    }
    Ok(ConvexityReport {
        samples,
        min_defect,
        tol,
        pass: min_defect >= -tol,
        violations,
    })
}

#[derive(Clone, Debug)]
pub struct LaplacianField {
    /// Cotangent Laplacian normalized by barycentric vertex area. Only
    /// meaningful at interior vertices.
    pub values: Vec<f64>,
    pub interior: Vec<bool>,
}

/// Area-normalized cotangent Laplacian on a flat triangulated mesh.
pub fn discrete_laplacian(
    space: &LengthSpace,
    tri: &Triangulation,
    field: &ScalarField,
) -> Result<LaplacianField> {
    if space.oracle() != Some(OracleTag::Euclidean) {
        return Err(LabError::NotFlatMesh(
            "discrete Laplacian is defined on flat meshes".into(),
        ));
    }
    Ok(laplacian_of_values(tri, &field.values))
}

/// Same computation without the flatness gate; used internally where the
/// values are logs or pullbacks on a flat domain.
pub fn laplacian_of_values(tri: &Triangulation, values: &[f64]) -> LaplacianField {
    let n = values.len();
    let mut acc = vec![0.0; n];
    for &(a, b, w) in &tri.cot_edges {
        let d = values[b] - values[a];
        acc[a] += w * d;
        acc[b] -= w * d;
    }
    for v in 0..n {
        acc[v] /= tri.vertex_area[v].max(1e-300);
    }
    LaplacianField { values: acc, interior: tri.interior.clone() }
}

#[derive(Clone, Debug, Serialize)]
pub struct SubharmonicReport {
    pub min_laplacian: f64,
    pub tol: f64,
    pub pass: bool,
    pub excluded: Vec<usize>,
    pub checked: usize,
    pub degenerate: bool,
}

fn vanishing_exclusion(space: &LengthSpace, tri: &Triangulation, values: &[f64]) -> Vec<bool> {
    let coords = space.coords().expect("triangulated mesh has coords");
    let max_abs = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let vanish_eps = 1e-9 * max_abs.max(1e-300);
    let zeros: Vec<usize> = (0..values.len())
        .filter(|&v| values[v].abs() <= vanish_eps)
        .collect();
    let cut = 2.0 * tri.spacing + 1e-9;
    let mut excluded = vec![false; values.len()];
    for v in 0..values.len() {
        for &z in &zeros {
            let d = (coords[v][0] - coords[z][0]).hypot(coords[v][1] - coords[z][1]);
            if d <= cut {
                excluded[v] = true;
                break;
            }
        }
    }
    excluded
}

/// PASS iff the discrete Laplacian is >= -tol at every interior vertex
/// farther than 2h from the vanishing locus of the field.
pub fn subharmonic_check(
    space: &LengthSpace,
    tri: &Triangulation,
    field: &ScalarField,
    tol: f64,
) -> Result<SubharmonicReport> {
    let lap = discrete_laplacian(space, tri, field)?;
    let excluded = vanishing_exclusion(space, tri, &field.values);
    Ok(grade_laplacian(&lap, &excluded, tol))
}

/// PASS iff log of the field is discretely subharmonic away from its
/// vanishing locus (2h exclusion).
pub fn log_subharmonic_check(
    space: &LengthSpace,
    tri: &Triangulation,
    field: &ScalarField,
    tol: f64,
) -> Result<SubharmonicReport> {
    log_subharmonic_check_floored(space, tri, field, 0.0, 0.0, tol)
}

/// Like [`log_subharmonic_check`], but values at or below `floor` count as
/// vanishing and vertices within `boundary_margin` of the boundary cycle are
/// excluded. Estimated factors never hit zero exactly and lose smoothness
/// where their edge stencils are truncated by the boundary; the caller
/// supplies the scales below which positivity and smoothness are unresolved.
pub fn log_subharmonic_check_floored(
    space: &LengthSpace,
    tri: &Triangulation,
    field: &ScalarField,
    floor: f64,
    boundary_margin: f64,
    tol: f64,
) -> Result<SubharmonicReport> {
    if space.oracle() != Some(OracleTag::Euclidean) {
        return Err(LabError::NotFlatMesh(
            "log-subharmonicity is tested on flat meshes".into(),
        ));
    }
    let mut excluded = vanishing_exclusion(space, tri, &field.values);
    if floor > 0.0 {
        let coords = space.coords().expect("triangulated mesh has coords");
        let zeros: Vec<usize> = (0..field.values.len())
            .filter(|&v| field.values[v] <= floor)
            .collect();
        let cut = 2.0 * tri.spacing + 1e-9;
        for v in 0..field.values.len() {
            if excluded[v] {
                continue;
            }
            for &z in &zeros {
                let d = (coords[v][0] - coords[z][0]).hypot(coords[v][1] - coords[z][1]);
                if d <= cut {
                    excluded[v] = true;
                    break;
                }
            }
        }
    }
    if boundary_margin > 0.0 {
        if let Some(cycle) = space.boundary() {
            let coords = space.coords().expect("triangulated mesh has coords");
            for v in 0..field.values.len() {
                if excluded[v] {
                    continue;
                }
                for &b in cycle {
                    let d = (coords[v][0] - coords[b][0]).hypot(coords[v][1] - coords[b][1]);
                    if d <= boundary_margin {
                        excluded[v] = true;
                        break;
                    }
                }
            }
        }
    }
    for v in 0..field.values.len() {
        if !excluded[v] && field.values[v] <= 0.0 {
            return Err(LabError::BadField(format!(
                "negative value {} at vertex {v} outside the vanishing locus",
                field.values[v]
            )));
        }
    }
    let logs: Vec<f64> = field.values.iter().map(|&v| v.max(1e-300).ln()).collect();
    let lap = laplacian_of_values(tri, &logs);
    let mut report = grade_laplacian(&lap, &excluded, tol);
    // A factor vanishing everywhere carries no metric information.
    report.degenerate = report.checked == 0;
    Ok(report)
}

fn grade_laplacian(lap: &LaplacianField, excluded: &[bool], tol: f64) -> SubharmonicReport {
    let mut min_laplacian = f64::INFINITY;
    let mut checked = 0usize;
    for v in 0..lap.values.len() {
        if lap.interior[v] && !excluded[v] {
            checked += 1;
            if lap.values[v] < min_laplacian {
                min_laplacian = lap.values[v];
            }
        }
    }
    SubharmonicReport {
        min_laplacian,
        tol,
        pass: checked == 0 || min_laplacian >= -tol,
        excluded: (0..lap.values.len()).filter(|&v| excluded[v]).collect(),
        checked,
        degenerate: false,
    }
}
