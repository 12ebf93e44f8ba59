//! Conformal changes of length spaces: edge reweighting by a positive factor,
//! the two-step composition law, and a finite-difference check of the
//! curvature formula for conformal metrics on flat domains.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fields::{self, FieldRule, ScalarField};
use crate::models::Triangulation;
use crate::space::{LengthSpace, OracleTag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    /// Mean of the endpoint factor values. Exposes the discretization gap of
    /// repeated changes.
    #[default]
    Trapezoid,
    /// Factor value at the chart midpoint (geometric mean of the endpoint
    /// values when no closed form is available). Makes the composition law
    /// exact.
    Midpoint,
}

fn edge_factor(
    space: &LengthSpace,
    factor: &ScalarField,
    quadrature: Quadrature,
    a: usize,
    b: usize,
) -> f64 {
    match quadrature {
        Quadrature::Trapezoid => 0.5 * (factor.values[a] + factor.values[b]),
        Quadrature::Midpoint => {
            if let (Some(rule), Some(coords)) = (&factor.rule, space.coords()) {
                let mid = [
                    0.5 * (coords[a][0] + coords[b][0]),
                    0.5 * (coords[a][1] + coords[b][1]),
                ];
                if let Some(v) = fields::eval_rule_at_point(space, rule, mid) {
                    return v;
                }
            }
            (factor.values[a] * factor.values[b]).sqrt()
        }
    }
}

/// Reweight every edge by the factor, quadrature-averaged along the edge.
/// A power-radial factor on a flat disc is tagged with the exact cone oracle.
pub fn conformal_change(
    space: &LengthSpace,
    factor: &ScalarField,
    quadrature: Quadrature,
) -> Result<LengthSpace> {
    // Factors may vanish on a null set (the cone model |z|^alpha does at the
    // apex); what must stay positive is every reweighted edge.
    for (v, &x) in factor.values.iter().enumerate() {
        if !(x >= 0.0) {
            return Err(LabError::NonPositiveFactor(v, x));
        }
    }
    let weights: Vec<f64> = space
        .edges()
        .iter()
        .map(|&(a, b, w)| w * edge_factor(space, factor, quadrature, a, b))
        .collect();
    for (i, &w) in weights.iter().enumerate() {
        if !(w > 0.0) {
            let (a, _, _) = space.edges()[i];
            return Err(LabError::NonPositiveFactor(a, factor.values[a]));
        }
    }
    let mut out = space.reweighted(&weights)?;
    let cone_tag = match (&factor.rule, space.oracle()) {
        (Some(FieldRule::PowerRadial { alpha }), Some(OracleTag::Euclidean)) => {
            Some(OracleTag::Cone {
                total_angle: 2.0 * std::f64::consts::PI * (1.0 + alpha),
            })
        }
        _ => None,
    };
    out.set_oracle(cone_tag);
    Ok(out)
}

/// Build the factor e^f, rejecting exponents that would overflow.
pub fn exp_factor(f: &ScalarField) -> Result<ScalarField> {
    for (v, &x) in f.values.iter().enumerate() {
        if x.abs() > 700.0 {
            return Err(LabError::ExpOverflow(v, x));
        }
    }
    let values: Vec<f64> = f.values.iter().map(|&x| x.exp()).collect();
    let rule = f
        .rule
        .as_ref()
        .map(|r| FieldRule::Exp { inner: Box::new(r.clone()) });
    Ok(ScalarField { values, rule, positive: true })
}

#[derive(Clone, Debug, Serialize)]
pub struct CompositionReport {
    pub pairs: usize,
    pub max_rel_gap: f64,
    pub threshold: f64,
    pub lipschitz_bound: f64,
    pub pass: bool,
}

/// Compare distances in (rho2 . (rho1 . X)) against ((rho1 rho2) . X) on
/// sampled vertex pairs. Midpoint quadrature must agree to 1e-12; trapezoid
/// carries a quadrature gap bounded by 2 h Lip.
pub fn composition_law_check(
    space: &LengthSpace,
    rho1: &ScalarField,
    rho2: &ScalarField,
    quadrature: Quadrature,
    n_pairs: usize,
    seed: u64,
) -> Result<CompositionReport> {
    let step1 = conformal_change(space, rho1, quadrature)?;
    // Carry rho2 over to the intermediate space (same vertex set).
    let rho2_on_step1 = ScalarField {
        values: rho2.values.clone(),
        rule: rho2.rule.clone(),
        positive: rho2.positive,
    };
    let two_step = conformal_change(&step1, &rho2_on_step1, quadrature)?;
    let one_step = conformal_change(space, &rho1.pointwise_product(rho2), quadrature)?;

    let h_max = space
        .edges()
        .iter()
        .map(|&(_, _, w)| w)
        .fold(0.0f64, f64::max);
    let lip = space
        .edges()
        .iter()
        .map(|&(a, b, w)| {
            let l1 = (rho1.values[a] - rho1.values[b]).abs() / w;
            let l2 = (rho2.values[a] - rho2.values[b]).abs() / w;
            l1.max(l2)
        })
        .fold(0.0f64, f64::max);
    let threshold = match quadrature {
        Quadrature::Midpoint => 1e-12,
        Quadrature::Trapezoid => 2.0 * h_max * lip,
    };

    let n = space.vertex_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_sources = n_pairs.clamp(1, 32.min(n));
    let sources: Vec<usize> = (0..n_sources).map(|_| rng.gen_range(0..n)).collect();
    let per_source = n_pairs.div_ceil(n_sources);
    let mut max_rel_gap = 0.0f64;
    let mut pairs = 0usize;
    for &src in &sources {
        let da = two_step.sssp(src, None);
        let db = one_step.sssp(src, None);
        for _ in 0..per_source {
            let t = rng.gen_range(0..n);
            if t == src {
                continue;
            }
            let gap = (da.dist[t] - db.dist[t]).abs() / db.dist[t].max(1e-300);
            if gap > max_rel_gap {
                max_rel_gap = gap;
            }
            pairs += 1;
        }
    }
    Ok(CompositionReport {
        pairs,
        max_rel_gap,
        threshold,
        lipschitz_bound: lip,
        pass: max_rel_gap <= threshold,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvatureReport {
    pub spacing: f64,
    pub checked: usize,
    pub max_residual: f64,
    /// max_residual / h; first-order convergence keeps this stable.
    pub c_over_h: f64,
    pub curvature_at_origin: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Length of the conformal metric rho |dz| along a bowed chord between chart
/// points, minimized over the parabolic bowing amplitude. Recovers geodesic
/// lengths to higher order than the straight chord.
fn bowed_length<F: Fn([f64; 2]) -> f64>(rho: &F, p: [f64; 2], q: [f64; 2]) -> f64 {
    let dx = [q[0] - p[0], q[1] - p[1]];
    let len = dx[0].hypot(dx[1]);
    let nrm = [-dx[1] / len, dx[0] / len];
    // Composite Simpson over 8 intervals along c_s(t) = chord + s t(1-t) n len.
    let eval = |s: f64| -> f64 {
        let m = 8usize;
        let dt = 1.0 / m as f64;
        let point = |t: f64| -> [f64; 2] {
            let bow = s * t * (1.0 - t) * len;
            [p[0] + t * dx[0] + bow * nrm[0], p[1] + t * dx[1] + bow * nrm[1]]
        };
        let speed = |t: f64| -> f64 {
            let db = s * (1.0 - 2.0 * t) * len;
            (dx[0] + db * nrm[0]).hypot(dx[1] + db * nrm[1])
        };
        let f = |t: f64| rho(point(t)) * speed(t);
        let mut acc = f(0.0) + f(1.0);
        for i in 1..m {
            let t = i as f64 * dt;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(t);
        }
        acc * dt / 3.0
    };
    // One quadratic-fit minimization step over the amplitude.
    let d = 0.25;
    let (l_m, l_0, l_p) = (eval(-d), eval(0.0), eval(d));
    let denom = l_m - 2.0 * l_0 + l_p;
    let s_star = if denom.abs() > 1e-300 {
        (0.5 * d * (l_m - l_p) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    eval(s_star).min(l_0)
}

/// Gauss-Bonnet angle-defect estimate of the curvature of e^{2f} |dz|^2 on a
/// flat disc, compared against -e^{-2f} (Laplacian of f) at interior vertices
/// at least 4h from the boundary.
pub fn conformal_curvature_check(
    space: &LengthSpace,
    tri: &Triangulation,
    f: &ScalarField,
    tol: f64,
) -> Result<CurvatureReport> {
    if space.oracle() != Some(OracleTag::Euclidean) {
        return Err(LabError::NotFlatMesh("curvature check needs a flat base".into()));
    }
    let rule = f
        .rule
        .as_ref()
        .ok_or_else(|| LabError::BadField("curvature check needs a rule-backed field".into()))?
        .clone();
    let coords = space.coords().unwrap();
    let rho = |p: [f64; 2]| -> f64 {
        fields::eval_rule_at_point(space, &rule, p)
            .expect("rule evaluable at chart points")
            .exp()
    };
    let n = space.vertex_count();
    // Deformed side lengths per face, then angles and Heron areas.
    let mut angle_sum = vec![0.0f64; n];
    let mut def_area = vec![0.0f64; n];
    let mut elen: std::collections::HashMap<(usize, usize), f64> = std::collections::HashMap::new();
    let mut side = |a: usize, b: usize| -> f64 {
        let key = (a.min(b), a.max(b));
        if let Some(&l) = elen.get(&key) {
            return l;
        }
        let l = bowed_length(&rho, coords[key.0], coords[key.1]);
        elen.insert(key, l);
        l
    };
    for &[a, b, c] in &tri.faces {
        let (lab, lbc, lca) = (side(a, b), side(b, c), side(c, a));
        let angle = |opp: f64, s1: f64, s2: f64| -> f64 {
            ((s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2))
                .clamp(-1.0, 1.0)
                .acos()
        };
        angle_sum[a] += angle(lbc, lab, lca);
        angle_sum[b] += angle(lca, lab, lbc);
        angle_sum[c] += angle(lab, lbc, lca);
        let s = 0.5 * (lab + lbc + lca);
        let area2 = s * (s - lab) * (s - lbc) * (s - lca);
        let area = area2.max(0.0).sqrt();
        for v in [a, b, c] {
            def_area[v] += area / 3.0;
        }
    }
    let h = tri.spacing;
    let boundary = space.boundary().unwrap();
    let boundary_dist = |v: usize| -> f64 {
        boundary
            .iter()
            .map(|&b| (coords[v][0] - coords[b][0]).hypot(coords[v][1] - coords[b][1]))
            .fold(f64::INFINITY, f64::min)
    };
    let lap = fields::laplacian_of_values(tri, &f.values);
    let mut max_residual = 0.0f64;
    let mut checked = 0usize;
    let mut curvature_at_origin = f64::NAN;
    let mut best_origin = f64::INFINITY;
    for v in 0..n {
        if !tri.interior[v] {
            continue;
        }
        let curvature = (2.0 * std::f64::consts::PI - angle_sum[v]) / def_area[v].max(1e-300);
        let r0 = coords[v][0].hypot(coords[v][1]);
        if r0 < best_origin {
            best_origin = r0;
            curvature_at_origin = curvature;
        }
        if boundary_dist(v) < 4.0 * h {
            continue;
        }
        let predicted = -(-2.0 * f.values[v]).exp() * lap.values[v];
        let residual = (curvature - predicted).abs();
        checked += 1;
        if residual > max_residual {
            max_residual = residual;
        }
    }
    Ok(CurvatureReport {
        spacing: h,
        checked,
        max_residual,
        c_over_h: max_residual / h,
        curvature_at_origin,
        tol,
        pass: max_residual <= tol,
    })
}
