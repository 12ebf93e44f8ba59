//! Comparison-triangle tests for nonpositive curvature, plus the supporting
//! convexity and majorization checks.
//!
//! A passing scan corroborates the CAT(0) inequality on the sampled
//! triangles; it is not a proof. A failing scan with slack well below the
//! discretization tolerance is a genuine falsifier.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::models;
use crate::space::{DistCache, LengthSpace, Position};
use crate::target::{TargetPoint, TargetSpace};

/// One sampled cross pair inside a triangle. `t1` and `t2` encode side index
/// plus fraction along that side, e.g. 1.25 is a quarter of the way along
/// side 1.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TriangleRow {
    pub v0: usize,
    pub v1: usize,
    pub v2: usize,
    pub t1: f64,
    pub t2: f64,
    pub actual: f64,
    pub comparison: f64,
    pub slack: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TriangleReport {
    pub vertices: [usize; 3],
    pub sides: [f64; 3],
    pub samples: usize,
    pub min_slack: f64,
    pub mean_slack: f64,
    pub worst: TriangleRow,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub triangles: usize,
    pub samples: usize,
    pub min_slack: f64,
    pub mean_slack: f64,
    pub tol: f64,
    /// Coarse mesh scale (0.9 edge-weight quantile), the natural unit for
    /// `tol` on nonuniform meshes.
    pub h_coarse: f64,
    pub pass: bool,
    pub worst: TriangleRow,
    /// Worst pair of each tested triangle, in test order.
    pub rows: Vec<TriangleRow>,
}

fn comparison_coords(sides: [f64; 3]) -> Result<[[f64; 2]; 3]> {
    let [l01, l12, l20] = sides;
    for (a, b, c) in [(l01, l12, l20), (l12, l20, l01), (l20, l01, l12)] {
        if a > b + c + 1e-9 {
            return Err(LabError::CorruptMetric(l01, l12, l20));
        }
    }
    let x = (l01 * l01 + l20 * l20 - l12 * l12) / (2.0 * l01);
    let y = (l20 * l20 - x * x).max(0.0).sqrt();
    Ok([[0.0, 0.0], [l01, 0.0], [x, y]])
}

/// Test the CAT(0) comparison inequality on one geodesic triangle.
///
/// Sides are graph geodesics; `n_side_points` interior points are placed on
/// each at equal arc-length fractions, and every cross-side pair is compared
/// against the Euclidean comparison triangle. Positive slack means the actual
/// distance is below the comparison distance, as CAT(0) demands.
pub fn comparison_test(
    space: &LengthSpace,
    vertices: [usize; 3],
    n_side_points: usize,
) -> Result<TriangleReport> {
    let [a, b, c] = vertices;
    if a == b || b == c || a == c {
        return Err(LabError::BadModelSpec(
            "triangle vertices must be distinct".into(),
        ));
    }
    if n_side_points == 0 {
        return Err(LabError::BadModelSpec(
            "need at least one side point".into(),
        ));
    }
    let geos = [
        space.geodesic(a, b)?,
        space.geodesic(b, c)?,
        space.geodesic(c, a)?,
    ];
    let sides = [geos[0].total, geos[1].total, geos[2].total];
    let corners = comparison_coords(sides)?;

    // Side s runs from corner s to corner (s+1)%3.
    let mut positions: Vec<Vec<(f64, Position, [f64; 2])>> = Vec::with_capacity(3);
    for (s, g) in geos.iter().enumerate() {
        let (p0, p1) = (corners[s], corners[(s + 1) % 3]);
        let mut row = Vec::with_capacity(n_side_points);
        for i in 0..n_side_points {
            let frac = (i + 1) as f64 / (n_side_points + 1) as f64;
            let pos = g.point_at(frac * g.total);
            let cmp = [
                p0[0] + frac * (p1[0] - p0[0]),
                p0[1] + frac * (p1[1] - p0[1]),
            ];
            row.push((s as f64 + frac, pos, cmp));
        }
        positions.push(row);
    }

    let mut cache = DistCache::new();
    let all_carriers: Vec<usize> = positions
        .iter()
        .flatten()
        .flat_map(|(_, pos, _)| pos.carriers().into_iter().map(|(v, _)| v))
        .collect();
    for (_, pos, _) in positions[0].iter().chain(&positions[1]) {
        for (v, _) in pos.carriers() {
            cache.prime(space, v, &all_carriers);
        }
    }

    let mut min_slack = f64::INFINITY;
    let mut sum_slack = 0.0;
    let mut samples = 0usize;
    let mut worst: Option<TriangleRow> = None;
    for s1 in 0..3 {
        for s2 in (s1 + 1)..3 {
            for &(t1, p1, c1) in &positions[s1] {
                for &(t2, p2, c2) in &positions[s2] {
                    let actual = cache.position_dist(space, p1, p2);
                    let comparison = (c1[0] - c2[0]).hypot(c1[1] - c2[1]);
                    let slack = comparison - actual;
                    samples += 1;
                    sum_slack += slack;
                    if slack < min_slack {
                        min_slack = slack;
                        worst = Some(TriangleRow {
                            v0: a,
                            v1: b,
                            v2: c,
                            t1,
                            t2,
                            actual,
                            comparison,
                            slack,
                        });
                    }
                }
            }
        }
    }
    Ok(TriangleReport {
        vertices,
        sides,
        samples,
        min_slack,
        mean_slack: sum_slack / samples as f64,
        worst: worst.expect("at least one sample"),
    })
}

fn sample_triangle(
    space: &LengthSpace,
    rng: &mut ChaCha8Rng,
    local: bool,
    min_side: f64,
    radius: f64,
) -> Option<[usize; 3]> {
    let n = space.vertex_count();
    'attempt: for _ in 0..30 {
        let pool: Vec<usize> = if local {
            let center = rng.gen_range(0..n);
            let tree = space.sssp(center, None);
            let ball: Vec<usize> = (0..n).filter(|&v| tree.dist[v] <= radius).collect();
            if ball.len() < 8 {
                continue;
            }
            ball
        } else {
            (0..n).collect()
        };
        let mut verts = [0usize; 3];
        for slot in verts.iter_mut() {
            *slot = *pool.choose(rng).expect("nonempty pool");
        }
        if verts[0] == verts[1] || verts[1] == verts[2] || verts[0] == verts[2] {
            continue;
        }
        let mut sides = [0.0f64; 3];
        for (s, (i, j)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
            match space.distance(verts[i], verts[j]) {
                Ok(d) if d >= min_side => sides[s] = d,
                _ => continue 'attempt,
            }
        }
        // Thin triangles are rejected along with short-sided ones: when the
        // triangle inequality is tight below the mesh scale, side polylines
        // are only positioned up to that same scale and the comparison test
        // measures lattice noise, not curvature.
        let perimeter: f64 = sides.iter().sum();
        let gap = perimeter - 2.0 * sides.iter().cloned().fold(f64::MIN, f64::max);
        if gap < min_side {
            continue;
        }
        return Some(verts);
    }
    None
}

/// Randomized comparison-triangle scan.
///
/// Half the triangles are sampled uniformly, half locally inside a metric
/// ball of radius ten edge lengths, where discretization error is most
/// visible relative to triangle size. Deterministic for a fixed seed, and
/// independent of thread count: each triangle gets its own derived stream.
pub fn cat0_scan(
    space: &LengthSpace,
    n_triangles: usize,
    n_side_points: usize,
    tol: f64,
    seed: u64,
) -> Result<ComparisonReport> {
    if n_triangles == 0 {
        return Err(LabError::BadModelSpec("need at least one triangle".into()));
    }
    let h_est = models::median_edge_weight(space);
    let min_side = 4.0 * h_est;
    let radius = 10.0 * h_est;

    let reports: Vec<Result<Option<TriangleReport>>> = (0..n_triangles)
        .into_par_iter()
        .map(|i| {
            let stream = seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            let local = i % 2 == 1;
            match sample_triangle(space, &mut rng, local, min_side, radius) {
                Some(verts) => comparison_test(space, verts, n_side_points).map(Some),
                None => Ok(None),
            }
        })
        .collect();

    let mut rows = Vec::new();
    let mut min_slack = f64::INFINITY;
    let mut sum = 0.0;
    let mut samples = 0usize;
    let mut worst: Option<TriangleRow> = None;
    for r in reports {
        let Some(rep) = r? else { continue };
        sum += rep.mean_slack * rep.samples as f64;
        samples += rep.samples;
        if rep.min_slack < min_slack {
            min_slack = rep.min_slack;
            worst = Some(rep.worst);
        }
        rows.push(rep.worst);
    }
    if rows.is_empty() {
        return Err(LabError::BadModelSpec(
            "no nondegenerate triangles found; space too small for scan".into(),
        ));
    }
    Ok(ComparisonReport {
        triangles: rows.len(),
        samples,
        min_slack,
        mean_slack: sum / samples as f64,
        tol,
        h_coarse: models::edge_weight_quantile(space, 0.9),
        pass: min_slack >= -tol,
        worst: worst.expect("nonempty"),
        rows,
    })
}

pub fn scan_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("v0,v1,v2,t1,t2,actual,comparison,slack\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.9},{:.9},{:.9}\n",
            r.v0, r.v1, r.v2, r.t1, r.t2, r.actual, r.comparison, r.slack
        ));
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexityScanReport {
    pub pairs: usize,
    pub min_defect: f64,
    pub tol: f64,
    pub pass: bool,
    pub violations: usize,
}

/// Midpoint convexity of t -> d(gamma1(t), gamma2(t)) for random geodesic
/// pairs under proportional parametrization. In a CAT(0) space this function
/// is convex; the defect reported is the convex-combination surplus, so
/// negative values beyond tolerance are violations.
pub fn geodesic_distance_convexity(
    space: &LengthSpace,
    n_pairs: usize,
    tol: f64,
    seed: u64,
) -> Result<ConvexityScanReport> {
    let n = space.vertex_count();
    if n < 4 {
        return Err(LabError::BadModelSpec("space too small".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_defect = f64::INFINITY;
    let mut violations = 0usize;
    let mut done = 0usize;
    let mut guard = 0usize;
    while done < n_pairs {
        guard += 1;
        if guard > 20 * n_pairs + 100 {
            break;
        }
        let pick = |rng: &mut ChaCha8Rng| -> (usize, usize) {
            loop {
                let a = rng.gen_range(0..n);
                let b = rng.gen_range(0..n);
                if a != b {
                    return (a, b);
                }
            }
        };
        let (a, b) = pick(&mut rng);
        let (c, d) = pick(&mut rng);
        let g1 = space.geodesic(a, b)?;
        let g2 = space.geodesic(c, d)?;
        if g1.total < crate::space::LENGTH_TOL || g2.total < crate::space::LENGTH_TOL {
            continue;
        }
        let t1: f64 = rng.gen_range(0.0..1.0);
        let t2: f64 = rng.gen_range(0.0..1.0);
        let tm = 0.5 * (t1 + t2);
        let mut cache = DistCache::new();
        let phi = |cache: &mut DistCache, t: f64| {
            let p = g1.point_at(t * g1.total);
            let q = g2.point_at(t * g2.total);
            cache.position_dist(space, p, q)
        };
        let defect = 0.5 * (phi(&mut cache, t1) + phi(&mut cache, t2)) - phi(&mut cache, tm);
        if defect < min_defect {
            min_defect = defect;
        }
        if defect < -tol {
            violations += 1;
        }
        done += 1;
    }
    Ok(ConvexityScanReport {
        pairs: done,
        min_defect,
        tol,
        pass: violations == 0,
        violations,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MajorizationReport {
    pub boundary_len: usize,
    pub shortness_pairs: usize,
    pub max_shortness_excess: f64,
    pub max_arc_gap: f64,
    pub bijective: bool,
    pub monotone: bool,
    pub tol: f64,
    pub pass: bool,
}

/// Check that `p_map` is a majorization of the curve `gamma_x` by the space
/// `y`: the map is 1-Lipschitz up to tolerance on sampled pairs, restricts
/// to a cyclic arc-length-preserving bijection from the boundary cycle of
/// `y` onto the samples of `gamma_x`, and covers all of them.
#[allow(clippy::too_many_arguments)]
pub fn majorization_check(
    y: &LengthSpace,
    target: &TargetSpace,
    p_map: &[TargetPoint],
    gamma_x: &[TargetPoint],
    assignment: &[usize],
    n_pairs: usize,
    tol: f64,
    seed: u64,
) -> Result<MajorizationReport> {
    let boundary = y.boundary().ok_or_else(|| {
        LabError::BoundaryMismatch("majorant space has no boundary cycle".into())
    })?;
    let bn = boundary.len();
    let m = gamma_x.len();
    if p_map.len() != y.vertex_count() {
        return Err(LabError::BoundaryMismatch(format!(
            "map has {} values for {} vertices",
            p_map.len(),
            y.vertex_count()
        )));
    }
    if assignment.len() != bn {
        return Err(LabError::BoundaryMismatch(format!(
            "assignment length {} does not match boundary length {}",
            assignment.len(),
            bn
        )));
    }
    for p in p_map {
        target.check_point(p)?;
    }
    for (k, &v) in boundary.iter().enumerate() {
        let idx = assignment[k];
        if idx >= m {
            return Err(LabError::BoundaryMismatch(format!(
                "assignment index {idx} out of range for {m} curve samples"
            )));
        }
        let gap = target.distance(&p_map[v], &gamma_x[idx]);
        if gap > 1e-9 {
            return Err(LabError::BoundaryMismatch(format!(
                "boundary vertex {v} maps {gap:.3e} away from its assigned curve sample"
            )));
        }
    }

    // Bijectivity onto the curve samples.
    let bijective = if bn == m {
        let mut seen = vec![false; m];
        for &idx in assignment {
            seen[idx] = true;
        }
        seen.iter().all(|&s| s)
    } else {
        false
    };

    // Cyclic monotonicity of the assignment, in either orientation.
    let monotone = if bn == m && bn > 2 {
        let forward_breaks = (0..bn)
            .filter(|&k| (assignment[(k + 1) % bn] + m - assignment[k]) % m != 1)
            .count();
        let backward_breaks = (0..bn)
            .filter(|&k| (assignment[k] + m - assignment[(k + 1) % bn]) % m != 1)
            .count();
        forward_breaks == 0 || backward_breaks == 0
    } else {
        false
    };

    // Arc-length preservation, segment by segment: each boundary edge of Y
    // must match the chord length between consecutive assigned samples.
    let mut max_arc_gap = 0.0f64;
    for k in 0..bn {
        let (v0, v1) = (boundary[k], boundary[(k + 1) % bn]);
        let wy = y
            .edge_weight(v0, v1)
            .ok_or_else(|| LabError::BoundaryMismatch("boundary edge missing".into()))?;
        let wx = target.distance(&gamma_x[assignment[k]], &gamma_x[assignment[(k + 1) % bn]]);
        max_arc_gap = max_arc_gap.max((wy - wx).abs());
    }

    // Shortness on random vertex pairs of Y.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = y.vertex_count();
    let mut max_excess = 0.0f64;
    let mut pairs = 0usize;
    for _ in 0..n_pairs {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let dy = y.distance(a, b)?;
        let dx = target.distance(&p_map[a], &p_map[b]);
        max_excess = max_excess.max(dx - dy);
        pairs += 1;
    }

    Ok(MajorizationReport {
        boundary_len: bn,
        shortness_pairs: pairs,
        max_shortness_excess: max_excess,
        max_arc_gap,
        bijective,
        monotone,
        tol,
        pass: bijective && monotone && max_excess <= tol && max_arc_gap <= tol,
    })
}
