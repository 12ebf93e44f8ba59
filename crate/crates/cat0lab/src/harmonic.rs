//! Discrete harmonic and minimal-disc machinery: Korevaar-Schoen energy,
//! Dirichlet solutions by iterated Frechet barycenters, the Plateau loop
//! with monotone boundary reparametrization, and the conformal factor with
//! its intrinsic pullback space.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fields::{self, ScalarField, SubharmonicReport};
use crate::models::Triangulation;
use crate::space::{LengthSpace, OracleTag};
use crate::target::{TargetFieldRule, TargetPoint, TargetSpace};

#[derive(Clone, Debug)]
pub struct SpaceMap {
    pub target: TargetSpace,
    /// Image point per domain vertex.
    pub assignment: Vec<TargetPoint>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    pub energy: f64,
    /// Half-sum of incident edge terms over vertex area.
    pub density: Vec<f64>,
    /// Energy after each solver sweep; empty for a plain evaluation.
    pub history: Vec<f64>,
}

fn require_disc(space: &LengthSpace) -> Result<()> {
    if space.oracle() != Some(OracleTag::Euclidean) {
        return Err(LabError::NotFlatMesh(
            "energy machinery runs on flat disc domains".into(),
        ));
    }
    Ok(())
}

fn edge_energy(tri: &Triangulation, map: &SpaceMap) -> f64 {
    tri.cot_edges
        .iter()
        .map(|&(a, b, w)| {
            let d = map.target.distance(&map.assignment[a], &map.assignment[b]);
            w * d * d
        })
        .sum()
}

/// Korevaar-Schoen energy with cotangent weights. Normalized so that for a
/// Euclidean-plane target it equals the sum over coordinates of the classical
/// discrete Dirichlet energy; the identity map then carries twice the domain
/// area.
pub fn ks_energy(space: &LengthSpace, tri: &Triangulation, map: &SpaceMap) -> Result<EnergyReport> {
    require_disc(space)?;
    if map.assignment.len() != space.vertex_count() {
        return Err(LabError::BadTarget("map size does not match domain".into()));
    }
    let n = space.vertex_count();
    let mut density = vec![0.0f64; n];
    let mut energy = 0.0;
    for &(a, b, w) in &tri.cot_edges {
        let d = map.target.distance(&map.assignment[a], &map.assignment[b]);
        let term = w * d * d;
        energy += term;
        density[a] += 0.5 * term;
        density[b] += 0.5 * term;
    }
    for v in 0..n {
        density[v] /= tri.vertex_area[v].max(1e-300);
    }
    Ok(EnergyReport { energy, density, history: Vec::new() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    GaussSeidel,
    Jacobi,
}

#[derive(Clone, Debug)]
pub struct DirichletParams {
    pub mode: SweepMode,
    /// Target accuracy of the final map, in target-distance units. The
    /// stopping rule extrapolates the geometric tail of per-sweep
    /// displacements, so this bounds distance to the fixed point rather
    /// than the last increment.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Shuffle the interior update order (Gauss-Seidel only).
    pub order_seed: Option<u64>,
    /// Start interior vertices at random boundary images instead of the
    /// boundary barycenter.
    pub init_seed: Option<u64>,
}

impl Default for DirichletParams {
    fn default() -> Self {
        DirichletParams {
            mode: SweepMode::GaussSeidel,
            tol: 1e-9,
            max_sweeps: 200_000,
            order_seed: None,
            init_seed: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveStats {
    pub sweeps: usize,
    pub last_displacement: f64,
    /// Estimated distance from the fixed point at termination.
    pub residual_estimate: f64,
}

fn cot_adjacency(n: usize, tri: &Triangulation) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b, w) in &tri.cot_edges {
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    adj
}

/// Harmonic extension of boundary data by iterated barycenters.
///
/// `boundary` is aligned with the domain's boundary cycle. Interior vertices
/// are repeatedly replaced by the cotangent-weighted barycenter of their
/// neighbors' images; each replacement minimizes the local energy, so the
/// energy history is nonincreasing in Gauss-Seidel mode.
pub fn solve_dirichlet(
    space: &LengthSpace,
    tri: &Triangulation,
    target: &TargetSpace,
    boundary: &[TargetPoint],
    params: &DirichletParams,
) -> Result<(SpaceMap, EnergyReport, SolveStats)> {
    require_disc(space)?;
    let cycle = space
        .boundary()
        .ok_or_else(|| LabError::BadBoundary("domain has no boundary cycle".into()))?;
    if boundary.len() != cycle.len() {
        return Err(LabError::BadBoundary(format!(
            "got {} boundary values for a cycle of {}",
            boundary.len(),
            cycle.len()
        )));
    }
    for p in boundary {
        target.check_point(p)?;
    }
    let n = space.vertex_count();
    let mut fixed = vec![None; n];
    for (k, &v) in cycle.iter().enumerate() {
        fixed[v] = Some(boundary[k]);
    }
    let interior: Vec<usize> = (0..n).filter(|&v| fixed[v].is_none()).collect();
    let adj = cot_adjacency(n, tri);
    for &v in &interior {
        if adj[v].is_empty() {
            return Err(LabError::NotFlatMesh(format!(
                "interior vertex {v} has no triangulated neighbors"
            )));
        }
    }

    // Initialization: boundary barycenter, or seeded random boundary images.
    let uniform = vec![1.0; boundary.len()];
    let center = target.barycenter(boundary, &uniform)?;
    let mut assignment: Vec<TargetPoint> = (0..n)
        .map(|v| fixed[v].unwrap_or(center))
        .collect();
    if let Some(seed) = params.init_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for &v in &interior {
            assignment[v] = boundary[rng.gen_range(0..boundary.len())];
        }
    }

    let mut order: Vec<usize> = interior.clone();
    if let Some(seed) = params.order_seed {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }

    let mut map = SpaceMap { target: target.clone(), assignment };
    let mut history = vec![edge_energy(tri, &map)];
    let mut prev_disp = f64::INFINITY;
    let mut prev_ratio = 1.0f64;
    let mut stats = SolveStats { sweeps: 0, last_displacement: f64::NAN, residual_estimate: f64::NAN };
    for sweep in 1..=params.max_sweeps {
        let mut max_disp = 0.0f64;
        match params.mode {
            SweepMode::GaussSeidel => {
                for &v in &order {
                    let pts: Vec<TargetPoint> = adj[v].iter().map(|&(u, _)| map.assignment[u]).collect();
                    let ws: Vec<f64> = adj[v].iter().map(|&(_, w)| w).collect();
                    let b = map.target.barycenter(&pts, &ws)?;
                    max_disp = max_disp.max(map.target.distance(&map.assignment[v], &b));
                    map.assignment[v] = b;
                }
            }
            SweepMode::Jacobi => {
                let old = map.assignment.clone();
                for &v in &order {
                    let pts: Vec<TargetPoint> = adj[v].iter().map(|&(u, _)| old[u]).collect();
                    let ws: Vec<f64> = adj[v].iter().map(|&(_, w)| w).collect();
                    let b = map.target.barycenter(&pts, &ws)?;
                    max_disp = max_disp.max(map.target.distance(&old[v], &b));
                    map.assignment[v] = b;
                }
            }
        }
        history.push(edge_energy(tri, &map));
        stats.sweeps = sweep;
        stats.last_displacement = max_disp;
        // Geometric-tail bound: remaining distance <= disp * r / (1 - r),
        // with the contraction ratio smoothed over two sweeps so a single
        // small displacement cannot fake convergence.
        let ratio = if prev_disp.is_finite() { max_disp / prev_disp } else { 1.0 };
        let r = ratio.max(prev_ratio).min(1.0 - 1e-12);
        prev_ratio = ratio;
        stats.residual_estimate = if prev_disp.is_finite() && sweep >= 3 {
            max_disp * r / (1.0 - r)
        } else {
            f64::INFINITY
        };
        if max_disp == 0.0 || stats.residual_estimate <= params.tol {
            let mut report = EnergyReport {
                energy: *history.last().unwrap(),
                density: ks_energy(space, tri, &map)?.density,
                history,
            };
            report.energy = report.history.last().copied().unwrap();
            return Ok((map, report, stats));
        }
        prev_disp = max_disp;
    }
    Err(LabError::NoConvergence(params.max_sweeps, stats.last_displacement))
}

/// Direct sparse-free linear oracle for the Euclidean-plane target: the
/// cotangent Laplace equation solved per coordinate by LU factorization.
pub fn dirichlet_linear_oracle(
    space: &LengthSpace,
    tri: &Triangulation,
    boundary: &[TargetPoint],
) -> Result<Vec<TargetPoint>> {
    require_disc(space)?;
    let cycle = space
        .boundary()
        .ok_or_else(|| LabError::BadBoundary("domain has no boundary cycle".into()))?;
    if boundary.len() != cycle.len() {
        return Err(LabError::BadBoundary("boundary data size mismatch".into()));
    }
    let n = space.vertex_count();
    let mut value = vec![None; n];
    for (k, &v) in cycle.iter().enumerate() {
        let TargetPoint::Plane(p) = boundary[k] else {
            return Err(LabError::BadTarget("linear oracle needs plane points".into()));
        };
        value[v] = Some(p);
    }
    let interior: Vec<usize> = (0..n).filter(|&v| value[v].is_none()).collect();
    let index: std::collections::HashMap<usize, usize> =
        interior.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let m = interior.len();
    let mut a = nalgebra::DMatrix::<f64>::zeros(m, m);
    let mut rhs = nalgebra::DMatrix::<f64>::zeros(m, 2);
    for &(p, q, w) in &tri.cot_edges {
        for (s, t) in [(p, q), (q, p)] {
            let Some(&i) = index.get(&s) else { continue };
            a[(i, i)] += w;
            match index.get(&t) {
                Some(&j) => a[(i, j)] -= w,
                None => {
                    let b = value[t].unwrap();
                    rhs[(i, 0)] += w * b[0];
                    rhs[(i, 1)] += w * b[1];
                }
            }
        }
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| LabError::BadTarget("singular Laplace system".into()))?;
    let mut out = vec![TargetPoint::Plane([0.0, 0.0]); n];
    for v in 0..n {
        out[v] = match value[v] {
            Some(p) => TargetPoint::Plane(p),
            None => {
                let i = index[&v];
                TargetPoint::Plane([sol[(i, 0)], sol[(i, 1)]])
            }
        };
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct PullbackReport {
    pub min_laplacian: f64,
    pub checked: usize,
    pub tol: f64,
    pub pass: bool,
}

/// Fuglede-style test: the pullback of a convex target rule through a
/// harmonic map must be discretely subharmonic.
pub fn pullback_subharmonicity_test(
    space: &LengthSpace,
    tri: &Triangulation,
    map: &SpaceMap,
    rule: &TargetFieldRule,
    tol: f64,
) -> Result<PullbackReport> {
    require_disc(space)?;
    let values: Vec<f64> = map
        .assignment
        .iter()
        .map(|p| rule.eval(&map.target, p))
        .collect::<Result<_>>()?;
    let lap = fields::laplacian_of_values(tri, &values);
    let mut min_lap = f64::INFINITY;
    let mut checked = 0usize;
    for v in 0..values.len() {
        if lap.interior[v] {
            min_lap = min_lap.min(lap.values[v]);
            checked += 1;
        }
    }
    Ok(PullbackReport { min_laplacian: min_lap, checked, tol, pass: min_lap >= -tol })
}

#[derive(Clone, Debug, Serialize)]
pub struct PlateauReport {
    /// Γ-sample index per boundary-cycle vertex.
    pub assignment: Vec<usize>,
    pub outer_iterations: usize,
    pub outer_energy: Vec<f64>,
    pub boundary_moves: usize,
    pub monotone: bool,
}

fn cyclically_monotone(assignment: &[usize], m: usize) -> bool {
    // Weakly monotone with total winding one.
    let n = assignment.len();
    let total: usize = (0..n)
        .map(|k| (assignment[(k + 1) % n] + m - assignment[k]) % m)
        .sum();
    total == m
}

/// Least-energy filling of the sampled Jordan curve `gamma`: alternating
/// Dirichlet solves and single-step monotone boundary moves, with three
/// boundary vertices pinned to three Γ samples at thirds (the discrete
/// conformal-group normalization).
pub fn solve_plateau(
    space: &LengthSpace,
    tri: &Triangulation,
    target: &TargetSpace,
    gamma: &[TargetPoint],
    tol: f64,
    max_outer: usize,
    dirichlet: &DirichletParams,
) -> Result<(SpaceMap, EnergyReport, PlateauReport)> {
    require_disc(space)?;
    let cycle = space
        .boundary()
        .ok_or_else(|| LabError::BadBoundary("domain has no boundary cycle".into()))?
        .to_vec();
    let bn = cycle.len();
    let m = gamma.len();
    if m < bn {
        return Err(LabError::BadCurve(format!(
            "need at least {bn} curve samples, got {m}"
        )));
    }
    for p in gamma {
        target.check_point(p)?;
    }
    for i in 0..m {
        for j in (i + 1)..m {
            if target.distance(&gamma[i], &gamma[j]) < 1e-12 {
                return Err(LabError::BadCurve(format!(
                    "repeated curve samples {i} and {j}"
                )));
            }
        }
    }

    // Normalized arc-length position of each boundary vertex along the cycle
    // and of each sample along Γ; the initial assignment and the three pins
    // match the two by arc fraction, which is the discrete conformal-group
    // normalization.
    let mut cyc_frac = vec![0.0f64; bn];
    let mut acc = 0.0;
    for k in 0..bn {
        cyc_frac[k] = acc;
        acc += space
            .edge_weight(cycle[k], cycle[(k + 1) % bn])
            .ok_or_else(|| LabError::BadBoundary("boundary edge missing".into()))?;
    }
    let cyc_total = acc;
    let mut gam_frac = vec![0.0f64; m];
    let mut acc = 0.0;
    for s in 0..m {
        gam_frac[s] = acc;
        acc += target.distance(&gamma[s], &gamma[(s + 1) % m]);
    }
    let gam_total = acc;
    let sample_for = |k: usize| -> usize {
        let f = cyc_frac[k] / cyc_total;
        (0..m)
            .min_by(|&a, &b| {
                let da = (gam_frac[a] / gam_total - f).abs().min(1.0 - (gam_frac[a] / gam_total - f).abs());
                let db = (gam_frac[b] / gam_total - f).abs().min(1.0 - (gam_frac[b] / gam_total - f).abs());
                da.partial_cmp(&db).unwrap()
            })
            .unwrap()
    };
    let mut assignment: Vec<usize> = (0..bn).map(sample_for).collect();
    if !cyclically_monotone(&assignment, m) {
        // Fall back to the index-proportional assignment, which is always
        // monotone; arc matching can stutter on very coarse curves.
        assignment = (0..bn).map(|k| k * m / bn).collect();
    }
    let pins = [
        (0usize, assignment[0]),
        (bn / 3, assignment[bn / 3]),
        (2 * bn / 3, assignment[2 * bn / 3]),
    ];

    let adj = cot_adjacency(space.vertex_count(), tri);
    let pinned: std::collections::HashSet<usize> = pins.iter().map(|&(k, _)| k).collect();

    let mut best: Option<(SpaceMap, EnergyReport)> = None;
    let mut outer_energy = Vec::new();
    let mut moves_total = 0usize;
    let mut outer_done = 0usize;
    for outer in 1..=max_outer {
        outer_done = outer;
        let bvals: Vec<TargetPoint> = assignment.iter().map(|&s| gamma[s]).collect();
        let (map, energy, _) = solve_dirichlet(space, tri, target, &bvals, dirichlet)?;
        outer_energy.push(energy.energy);

        // Boundary stage: move one assignment index by one sample where it
        // lowers the energy of the edges incident to that boundary vertex,
        // keeping cyclic weak monotonicity.
        let mut current = map.assignment.clone();
        let mut moves = 0usize;
        for pass in 0..2 * bn {
            let mut improved = false;
            for k in 0..bn {
                if pinned.contains(&k) {
                    continue;
                }
                let v = cycle[k];
                let prev = assignment[(k + bn - 1) % bn];
                let next = assignment[(k + 1) % bn];
                let span = (next + m - prev) % m;
                let local = |p: &TargetPoint| -> f64 {
                    adj[v]
                        .iter()
                        .map(|&(u, w)| {
                            let d = target.distance(p, &current[u]);
                            w * d * d
                        })
                        .sum()
                };
                let here = local(&gamma[assignment[k]]);
                let mut best_idx = assignment[k];
                let mut best_val = here - 1e-15;
                for cand in [(assignment[k] + 1) % m, (assignment[k] + m - 1) % m] {
                    if (cand + m - prev) % m > span {
                        continue;
                    }
                    let val = local(&gamma[cand]);
                    if val < best_val {
                        best_val = val;
                        best_idx = cand;
                    }
                }
                if best_idx != assignment[k] {
                    assignment[k] = best_idx;
                    current[v] = gamma[best_idx];
                    moves += 1;
                    improved = true;
                }
            }
            debug_assert!(cyclically_monotone(&assignment, m), "pass {pass}");
            if !improved {
                break;
            }
        }
        moves_total += moves;

        let done = match &best {
            Some((_, prev)) => prev.energy - energy.energy < tol && moves == 0,
            None => false,
        };
        let replace = best
            .as_ref()
            .map(|(_, prev)| energy.energy <= prev.energy)
            .unwrap_or(true);
        if replace {
            best = Some((map, energy));
        }
        if done {
            break;
        }
        if outer == max_outer && moves > 0 {
            return Err(LabError::NoConvergence(max_outer, moves as f64));
        }
    }
    let (map, energy) = best.expect("at least one outer iteration");
    let monotone = cyclically_monotone(&assignment, m);
    Ok((
        map,
        energy,
        PlateauReport {
            assignment,
            outer_iterations: outer_done,
            outer_energy,
            boundary_moves: moves_total,
            monotone,
        },
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct ConformalFactorReport {
    pub degenerate: bool,
    /// Values at or below this are treated as vanishing: twice the coarse
    /// mesh scale times the factor's own edge slope, the level below which
    /// the estimator cannot resolve positivity.
    pub vanish_floor: f64,
    pub log_subharmonic: Option<SubharmonicReport>,
}

/// Per-vertex conformal factor of a map: mean over incident edges of image
/// distance over edge weight. The attached report checks log-subharmonicity
/// away from the vanishing locus.
pub fn conformal_factor_estimate(
    space: &LengthSpace,
    tri: &Triangulation,
    map: &SpaceMap,
    tol: f64,
) -> Result<(ScalarField, ConformalFactorReport)> {
    require_disc(space)?;
    let n = space.vertex_count();
    let mut sum = vec![0.0f64; n];
    let mut deg = vec![0usize; n];
    for &(a, b, w) in space.edges() {
        let d = map.target.distance(&map.assignment[a], &map.assignment[b]);
        sum[a] += d / w;
        sum[b] += d / w;
        deg[a] += 1;
        deg[b] += 1;
    }
    let values: Vec<f64> = (0..n).map(|v| sum[v] / deg[v].max(1) as f64).collect();
    let max = values.iter().fold(0.0f64, |m, &v| m.max(v));
    // The estimator is only smooth where the full edge template fits; a
    // band of one template reach plus the exclusion cut hugs the boundary.
    let h_coarse = crate::models::edge_weight_quantile(space, 0.9);
    let margin = h_coarse + 2.0 * tri.spacing;
    // The resolution floor uses the factor's slope away from that band,
    // where the estimate is trustworthy; boundary roughness would inflate
    // it past the factor itself.
    let coords = space.coords().expect("disc has a chart");
    let cycle = space.boundary().unwrap_or(&[]);
    let near_boundary = |v: usize| {
        cycle.iter().any(|&b| {
            let dx = coords[v][0] - coords[b][0];
            let dy = coords[v][1] - coords[b][1];
            (dx * dx + dy * dy).sqrt() <= margin
        })
    };
    let slope = space
        .edges()
        .iter()
        .filter(|&&(a, b, _)| !near_boundary(a) && !near_boundary(b))
        .map(|&(a, b, w)| (values[a] - values[b]).abs() / w)
        .fold(0.0f64, f64::max);
    let floor = 2.0 * h_coarse * slope;
    let lambda = ScalarField { positive: values.iter().all(|&v| v > 0.0), values, rule: None };
    if max <= 1e-300 {
        return Ok((
            lambda,
            ConformalFactorReport { degenerate: true, vanish_floor: floor, log_subharmonic: None },
        ));
    }
    let report = fields::log_subharmonic_check_floored(space, tri, &lambda, floor, margin, tol)?;
    Ok((
        lambda,
        ConformalFactorReport {
            degenerate: report.degenerate,
            vanish_floor: floor,
            log_subharmonic: Some(report),
        },
    ))
}

/// Replace factor values in the boundary band, where the estimator is
/// unreliable, by a local affine extrapolation from the trustworthy
/// interior. The band is one edge-template reach: estimates there
/// average over boundary vertices, whose trace is snapped to curve
/// samples, and the O(1) relative noise would read as spurious
/// curvature in the pullback. Affine extrapolation rather than a plain
/// copy, so a factor growing toward the boundary keeps its slope and
/// the pullback keeps its boundary lengths. Returns the field and the
/// number of replaced vertices.
pub fn regularize_factor_boundary(
    space: &LengthSpace,
    tri: &Triangulation,
    lambda: &ScalarField,
) -> Result<(ScalarField, usize)> {
    require_disc(space)?;
    let coords = space.coords().expect("disc has a chart");
    let cycle = space
        .boundary()
        .ok_or_else(|| LabError::BadBoundary("domain has no boundary cycle".into()))?;
    let _ = tri;
    let margin = crate::models::edge_weight_quantile(space, 0.9);
    let dist_to_cycle = |v: usize| {
        cycle
            .iter()
            .map(|&b| {
                let dx = coords[v][0] - coords[b][0];
                let dy = coords[v][1] - coords[b][1];
                (dx * dx + dy * dy).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let n = space.vertex_count();
    let in_band: Vec<bool> = (0..n).map(|v| dist_to_cycle(v) <= margin).collect();
    let trusted: Vec<usize> = (0..n).filter(|&v| !in_band[v]).collect();
    if trusted.is_empty() {
        return Ok((lambda.clone(), 0));
    }
    let mut values = lambda.values.clone();
    let mut replaced = 0usize;
    for v in 0..n {
        if !in_band[v] {
            continue;
        }
        let dist = |a: usize, b: usize| {
            (coords[a][0] - coords[b][0]).hypot(coords[a][1] - coords[b][1])
        };
        let nearest = trusted
            .iter()
            .copied()
            .min_by(|&a, &b| dist(v, a).total_cmp(&dist(v, b)))
            .expect("nonempty");
        // Affine fit over the trusted patch around the nearest anchor,
        // evaluated at v.
        let patch: Vec<usize> = trusted
            .iter()
            .copied()
            .filter(|&t| dist(nearest, t) <= 2.5 * margin)
            .collect();
        values[v] = if patch.len() >= 6 {
            let mut a = nalgebra::DMatrix::zeros(patch.len(), 3);
            let mut b = nalgebra::DVector::zeros(patch.len());
            for (row, &t) in patch.iter().enumerate() {
                a[(row, 0)] = 1.0;
                a[(row, 1)] = coords[t][0] - coords[v][0];
                a[(row, 2)] = coords[t][1] - coords[v][1];
                b[row] = lambda.values[t];
            }
            let ata = a.transpose() * &a;
            let atb = a.transpose() * b;
            match ata.lu().solve(&atb) {
                Some(c) => c[0].max(0.0),
                None => lambda.values[nearest],
            }
        } else {
            lambda.values[nearest]
        };
        replaced += 1;
    }
    let positive = values.iter().all(|&x| x > 0.0);
    Ok((ScalarField { values, rule: None, positive }, replaced))
}

/// Conformal change of the flat domain by a nonnegative factor, flooring
/// edges whose endpoints both vanish at w * 1e-9 in place of the metric
/// completion. Returns the space and the number of floored edges.
pub fn intrinsic_pullback(
    space: &LengthSpace,
    lambda: &ScalarField,
) -> Result<(LengthSpace, usize)> {
    require_disc(space)?;
    for (v, &x) in lambda.values.iter().enumerate() {
        if !(x >= 0.0) {
            return Err(LabError::NonPositiveFactor(v, x));
        }
    }
    let max = lambda.values.iter().fold(0.0f64, |m, &v| m.max(v));
    let vanish = |v: usize| lambda.values[v] <= 1e-9 * max.max(1e-300);
    let mut floored = 0usize;
    let weights: Vec<f64> = space
        .edges()
        .iter()
        .map(|&(a, b, w)| {
            if vanish(a) && vanish(b) {
                floored += 1;
                w * 1e-9
            } else {
                w * 0.5 * (lambda.values[a] + lambda.values[b])
            }
        })
        .collect();
    let mut out = space.reweighted(&weights)?;
    out.set_oracle(None);
    Ok((out, floored))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{self, ModelSpec};

    fn disc(h: f64) -> (LengthSpace, Triangulation) {
        let x = models::generate(&ModelSpec::flat_disc(1.0, h)).unwrap();
        let tri = models::triangulation(&x).unwrap();
        (x, tri)
    }

    fn identity_map(x: &LengthSpace) -> SpaceMap {
        let coords = x.coords().unwrap();
        SpaceMap {
            target: TargetSpace::EuclideanPlane,
            assignment: coords.iter().map(|&p| TargetPoint::Plane(p)).collect(),
        }
    }

    #[test]
    fn energy_of_constant_identity_and_scaling() {
        let (x, tri) = disc(0.1);
        let constant = SpaceMap {
            target: TargetSpace::EuclideanPlane,
            assignment: vec![TargetPoint::Plane([0.3, 0.4]); x.vertex_count()],
        };
        assert_eq!(ks_energy(&x, &tri, &constant).unwrap().energy, 0.0);

        let ident = identity_map(&x);
        let e1 = ks_energy(&x, &tri, &ident).unwrap().energy;
        let area: f64 = tri.vertex_area.iter().sum();
        assert!(
            (e1 - 2.0 * area).abs() < 0.02 * 2.0 * area,
            "identity energy {e1} vs 2*area {}",
            2.0 * area
        );

        let doubled = SpaceMap {
            target: TargetSpace::EuclideanPlane,
            assignment: ident
                .assignment
                .iter()
                .map(|p| match p {
                    TargetPoint::Plane(q) => TargetPoint::Plane([2.0 * q[0], 2.0 * q[1]]),
                    _ => unreachable!(),
                })
                .collect(),
        };
        let e2 = ks_energy(&x, &tri, &doubled).unwrap().energy;
        assert!((e2 - 4.0 * e1).abs() < 1e-9 * e1);
    }

    #[test]
    fn constant_boundary_solves_immediately() {
        let (x, tri) = disc(0.15);
        let bn = x.boundary().unwrap().len();
        let b = vec![TargetPoint::Plane([1.0, -2.0]); bn];
        let (map, energy, stats) = solve_dirichlet(
            &x,
            &tri,
            &TargetSpace::EuclideanPlane,
            &b,
            &DirichletParams::default(),
        )
        .unwrap();
        assert_eq!(stats.sweeps, 1);
        assert!(energy.energy < 1e-20);
        assert!(map.assignment.iter().all(|p| *p == TargetPoint::Plane([1.0, -2.0])));
    }

    #[test]
    fn dirichlet_matches_linear_oracle() {
        let (x, tri) = disc(0.1);
        let cycle = x.boundary().unwrap().to_vec();
        let coords = x.coords().unwrap();
        // A nontrivial smooth boundary condition.
        let b: Vec<TargetPoint> = cycle
            .iter()
            .map(|&v| {
                let [px, py] = coords[v];
                TargetPoint::Plane([px * px - py * py + 0.3 * py, 2.0 * px * py])
            })
            .collect();
        let params = DirichletParams { tol: 1e-10, ..Default::default() };
        let (map, energy, _) =
            solve_dirichlet(&x, &tri, &TargetSpace::EuclideanPlane, &b, &params).unwrap();
        let oracle = dirichlet_linear_oracle(&x, &tri, &b).unwrap();
        let t = TargetSpace::EuclideanPlane;
        let gap = (0..x.vertex_count())
            .map(|v| t.distance(&map.assignment[v], &oracle[v]))
            .fold(0.0f64, f64::max);
        assert!(gap <= 1e-8, "max gap {gap}");
        for w in energy.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "energy increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn gauss_seidel_and_jacobi_agree() {
        let (x, tri) = disc(0.15);
        let cycle = x.boundary().unwrap().to_vec();
        let coords = x.coords().unwrap();
        let b: Vec<TargetPoint> = cycle
            .iter()
            .map(|&v| TargetPoint::Plane([coords[v][0].powi(2), coords[v][1]]))
            .collect();
        let tol = 1e-9;
        let gs = DirichletParams { tol, ..Default::default() };
        let ja = DirichletParams { mode: SweepMode::Jacobi, tol, init_seed: Some(5), ..Default::default() };
        let (m1, _, _) = solve_dirichlet(&x, &tri, &TargetSpace::EuclideanPlane, &b, &gs).unwrap();
        let (m2, e2, _) = solve_dirichlet(&x, &tri, &TargetSpace::EuclideanPlane, &b, &ja).unwrap();
        let t = TargetSpace::EuclideanPlane;
        let gap = (0..x.vertex_count())
            .map(|v| t.distance(&m1.assignment[v], &m2.assignment[v]))
            .fold(0.0f64, f64::max);
        assert!(gap <= 10.0 * tol, "gap {gap}");
        for w in e2.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn tripod_boundary_maps_into_subtree() {
        let (x, tri) = disc(0.15);
        let cycle = x.boundary().unwrap().to_vec();
        let bn = cycle.len();
        let target = TargetSpace::tree(vec![1.0, 1.0, 1.0]).unwrap();
        let b: Vec<TargetPoint> = (0..bn)
            .map(|k| TargetPoint::Tree { leg: 3 * k / bn, t: 0.8 })
            .collect();
        let (map, energy, _) =
            solve_dirichlet(&x, &tri, &target, &b, &DirichletParams::default()).unwrap();
        for p in &map.assignment {
            let TargetPoint::Tree { t, .. } = p else { panic!() };
            assert!(*t <= 0.8 + 1e-9, "left the convex hull: {p:?}");
        }
        // Competitors with the same boundary must not beat the solution.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let interior: Vec<usize> = {
            let mut fixed = vec![false; x.vertex_count()];
            for &v in &cycle {
                fixed[v] = true;
            }
            (0..x.vertex_count()).filter(|&v| !fixed[v]).collect()
        };
        for _ in 0..10 {
            let mut comp = map.clone();
            for &v in &interior {
                comp.assignment[v] = TargetPoint::Tree {
                    leg: rng.gen_range(0..3),
                    t: rng.gen_range(0.0..0.8),
                };
            }
            let ce = ks_energy(&x, &tri, &comp).unwrap().energy;
            assert!(ce >= energy.energy - 1e-9, "competitor won: {ce} < {}", energy.energy);
        }
    }

    #[test]
    fn interior_stays_in_convex_hull_of_boundary() {
        let (x, tri) = disc(0.12);
        let cycle = x.boundary().unwrap().to_vec();
        let coords = x.coords().unwrap();
        let b: Vec<TargetPoint> = cycle
            .iter()
            .map(|&v| TargetPoint::Plane([coords[v][0].abs(), coords[v][1]]))
            .collect();
        let (map, _, _) =
            solve_dirichlet(&x, &tri, &TargetSpace::EuclideanPlane, &b, &DirichletParams::default())
                .unwrap();
        for p in &map.assignment {
            let TargetPoint::Plane(q) = p else { panic!() };
            assert!(q[0] >= -1e-9, "left the half-plane hull: {q:?}");
        }
    }

    #[test]
    fn affine_pullback_is_harmonic() {
        let (x, tri) = disc(0.12);
        let cycle = x.boundary().unwrap().to_vec();
        let coords = x.coords().unwrap();
        let b: Vec<TargetPoint> = cycle
            .iter()
            .map(|&v| TargetPoint::Plane([coords[v][0] - 0.4 * coords[v][1], coords[v][1]]))
            .collect();
        let params = DirichletParams { tol: 1e-10, ..Default::default() };
        let (map, _, _) =
            solve_dirichlet(&x, &tri, &TargetSpace::EuclideanPlane, &b, &params).unwrap();
        let rule = TargetFieldRule::Affine { a: 0.7, b: -0.2, c: 0.1 };
        let rep = pullback_subharmonicity_test(&x, &tri, &map, &rule, 1e-8).unwrap();
        assert!(rep.min_laplacian.abs() < 1e-6, "lap {}", rep.min_laplacian);
    }

    #[test]
    fn concave_rule_fails_pullback() {
        let (x, tri) = disc(0.12);
        let map = identity_map(&x);
        let rule = TargetFieldRule::NormSquared { scale: -1.0 };
        let rep = pullback_subharmonicity_test(&x, &tri, &map, &rule, 0.1).unwrap();
        assert!(!rep.pass);
        assert!((rep.min_laplacian + 4.0).abs() < 0.2, "lap {}", rep.min_laplacian);
    }

    #[test]
    fn plateau_circle_recovers_identity() {
        let (x, tri) = disc(0.1);
        let cycle = x.boundary().unwrap().to_vec();
        let coords = x.coords().unwrap();
        let bn = cycle.len();
        // The circle the jagged mesh boundary actually approximates; the
        // residual energy excess over the identity is the cost of smoothing
        // that jag onto a true circle.
        let rbar: f64 =
            cycle.iter().map(|&v| coords[v][0].hypot(coords[v][1])).sum::<f64>() / bn as f64;
        let gamma: Vec<TargetPoint> = (0..bn)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / bn as f64;
                TargetPoint::Plane([rbar * a.cos(), rbar * a.sin()])
            })
            .collect();
        let (_, energy, rep) = solve_plateau(
            &x,
            &tri,
            &TargetSpace::EuclideanPlane,
            &gamma,
            1e-10,
            40,
            &DirichletParams { tol: 1e-10, ..Default::default() },
        )
        .unwrap();
        assert!(rep.monotone);
        let ident = ks_energy(&x, &tri, &identity_map(&x)).unwrap().energy;
        assert!(
            (energy.energy - ident).abs() <= 0.05 * ident,
            "plateau {} vs identity {}",
            energy.energy,
            ident
        );
        // Boundary parametrization stays near uniform, up to the pinned
        // rotation.
        let offset = rep.assignment[0];
        for (k, &s) in rep.assignment.iter().enumerate() {
            let expect = (offset + k) % bn;
            let dev = (s + bn - expect) % bn;
            let dev = dev.min(bn - dev);
            assert!(dev <= 3, "assignment {s} at {k} deviates by {dev}");
        }
    }

    #[test]
    fn plateau_rejects_repeated_samples() {
        let (x, tri) = disc(0.2);
        let bn = x.boundary().unwrap().len();
        let mut gamma: Vec<TargetPoint> = (0..bn)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / bn as f64;
                TargetPoint::Plane([a.cos(), a.sin()])
            })
            .collect();
        gamma[1] = gamma[0];
        let err = solve_plateau(
            &x,
            &tri,
            &TargetSpace::EuclideanPlane,
            &gamma,
            1e-8,
            10,
            &DirichletParams::default(),
        );
        assert!(matches!(err, Err(LabError::BadCurve(_))));
    }

    #[test]
    fn ellipse_beats_fixed_parametrization() {
        let (x, tri) = disc(0.15);
        let bn = x.boundary().unwrap().len();
        let gamma: Vec<TargetPoint> = (0..bn)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / bn as f64;
                TargetPoint::Plane([2.0 * a.cos(), a.sin()])
            })
            .collect();
        let params = DirichletParams { tol: 1e-10, ..Default::default() };
        // Stage (a) only: uniform assignment, one Dirichlet solve.
        let bvals: Vec<TargetPoint> = (0..bn).map(|k| gamma[k]).collect();
        let (_, fixed_energy, _) =
            solve_dirichlet(&x, &tri, &TargetSpace::EuclideanPlane, &bvals, &params).unwrap();
        let (_, full_energy, rep) = solve_plateau(
            &x,
            &tri,
            &TargetSpace::EuclideanPlane,
            &gamma,
            1e-10,
            60,
            &params,
        )
        .unwrap();
        assert!(rep.boundary_moves > 0);
        assert!(
            full_energy.energy < fixed_energy.energy - 1e-6,
            "full {} vs fixed {}",
            full_energy.energy,
            fixed_energy.energy
        );
    }

    #[test]
    fn identity_conformal_factor_is_one() {
        let (x, tri) = disc(0.1);
        let map = identity_map(&x);
        let (lambda, rep) = conformal_factor_estimate(&x, &tri, &map, 0.5).unwrap();
        assert!(!rep.degenerate);
        for &v in &lambda.values {
            assert!((v - 1.0).abs() < 0.02, "lambda {v}");
        }
    }

    #[test]
    fn z_squared_conformal_factor() {
        let (x, tri) = disc(0.05);
        let coords = x.coords().unwrap();
        let map = SpaceMap {
            target: TargetSpace::EuclideanPlane,
            assignment: coords
                .iter()
                .map(|&[a, b]| TargetPoint::Plane([a * a - b * b, 2.0 * a * b]))
                .collect(),
        };
        let (lambda, rep) = conformal_factor_estimate(&x, &tri, &map, 5.0 * 0.05).unwrap();
        for (v, &[a, b]) in coords.iter().enumerate() {
            let r = a.hypot(b);
            if r > 0.2 {
                let expect = 2.0 * r;
                assert!(
                    (lambda.values[v] - expect).abs() <= 0.05 * expect,
                    "lambda {} vs {expect} at r {r}",
                    lambda.values[v]
                );
            }
        }
        let sub = rep.log_subharmonic.unwrap();
        assert!(sub.pass, "min log-laplacian {}", sub.min_laplacian);
    }

    #[test]
    fn constant_map_factor_is_degenerate() {
        let (x, tri) = disc(0.15);
        let map = SpaceMap {
            target: TargetSpace::EuclideanPlane,
            assignment: vec![TargetPoint::Plane([0.0, 0.0]); x.vertex_count()],
        };
        let (lambda, rep) = conformal_factor_estimate(&x, &tri, &map, 0.5).unwrap();
        assert!(rep.degenerate);
        assert!(lambda.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn intrinsic_pullback_of_unit_factor_is_domain() {
        let (x, _) = disc(0.15);
        let lambda = ScalarField::from_values(vec![1.0; x.vertex_count()]);
        let (y, floored) = intrinsic_pullback(&x, &lambda).unwrap();
        assert_eq!(floored, 0);
        for (e1, e2) in x.edges().iter().zip(y.edges()) {
            assert!((e1.2 - e2.2).abs() < 1e-15);
        }
    }

    #[test]
    fn intrinsic_pullback_of_abs_z_is_cone() {
        let (x, _) = disc(0.05);
        let coords = x.coords().unwrap();
        let lambda =
            ScalarField::from_values(coords.iter().map(|&[a, b]| a.hypot(b)).collect());
        let (y, _) = intrinsic_pullback(&x, &lambda).unwrap();
        let tol = 3.0 * models::edge_weight_quantile(&y, 0.9);
        let rep = crate::verify::cat0_scan(&y, 300, 3, tol, 17).unwrap();
        assert!(rep.pass, "min slack {} tol {tol}", rep.min_slack);
        // Cross-check one long distance against the exact cone(4 pi) metric.
        let a = models::nearest_vertex(&x, [0.8, 0.0]).unwrap();
        let b = models::nearest_vertex(&x, [-0.8, 0.0]).unwrap();
        let exact = models::cone_chart_distance(
            4.0 * std::f64::consts::PI,
            coords[a],
            coords[b],
        );
        let got = y.distance(a, b).unwrap();
        assert!((got - exact).abs() <= 0.02 * exact, "{got} vs {exact}");
    }

    #[test]
    fn negative_factor_rejected() {
        let (x, _) = disc(0.2);
        let mut vals = vec![1.0; x.vertex_count()];
        vals[3] = -0.1;
        let lambda = ScalarField::from_values(vals);
        assert!(intrinsic_pullback(&x, &lambda).is_err());
    }
}
