//! End-to-end run tying the solvers and checkers together: a convex
//! exponent on a model surface, a least-energy disc spanning a Jordan
//! curve, and comparison-triangle scans of every space the construction
//! produces.

use serde::{Deserialize, Serialize};

use crate::conformal::{self, Quadrature};
use crate::error::{LabError, Result};
use crate::fields::{self, ConvexityReport, FieldRule, ScalarField};
use crate::harmonic::{
    self, ConformalFactorReport, DirichletParams, EnergyReport, PlateauReport,
};
use crate::models::{self, ModelKind, ModelSpec};
use crate::target::{TargetFieldRule, TargetPoint, TargetSpace};
use crate::verify::{self, ComparisonReport, MajorizationReport};

/// Boundary curve for the spanning problem, in chart coordinates of the
/// target plane.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "curve", rename_all = "kebab-case")]
pub enum GammaSpec {
    /// Centered circle, sampled uniformly in angle with one sample per
    /// boundary vertex of the domain.
    Circle { radius: f64 },
    /// Explicit sample list, in cyclic order.
    Points { points: Vec<TargetPoint> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineParams {
    pub scan_triangles: usize,
    pub side_points: usize,
    pub seed: u64,
    /// Run past a failed convexity pretest instead of refusing.
    pub force: bool,
    pub dirichlet_tol: f64,
    pub plateau_tol: f64,
    pub max_outer: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            scan_triangles: 4000,
            side_points: 2,
            seed: 7,
            force: false,
            dirichlet_tol: 1e-7,
            plateau_tol: 1e-6,
            max_outer: 400,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StageLine {
    pub stage: &'static str,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineReport {
    pub refused: bool,
    pub forced: bool,
    pub spacing: f64,
    pub convexity: ConvexityReport,
    pub plateau_energy: Option<EnergyReport>,
    pub plateau: Option<PlateauReport>,
    pub factor: Option<ConformalFactorReport>,
    /// ks_energy of the spanning map against 2 * sum of lambda^2 * area,
    /// the conformality diagnostic; near 1 when the map is conformal.
    pub lambda_energy_ratio: Option<f64>,
    /// Vertices whose factor value was replaced by the nearest interior
    /// one before the pullback, the boundary band of the estimator.
    pub boundary_regularized: Option<usize>,
    pub pullback_scan: Option<ComparisonReport>,
    pub majorization: Option<MajorizationReport>,
    pub deformed_pullback_scan: Option<ComparisonReport>,
    pub deformed_domain_scan: Option<ComparisonReport>,
    pub stages: Vec<StageLine>,
    pub pass: bool,
}

fn target_for(spec: &ModelSpec) -> Result<TargetSpace> {
    match spec.kind {
        ModelKind::FlatDisc => Ok(TargetSpace::EuclideanPlane),
        ModelKind::HyperbolicDisc => Ok(TargetSpace::HyperbolicPlane),
        _ => Err(LabError::BadModelSpec(
            "the pipeline runs on flat or hyperbolic discs".into(),
        )),
    }
}

/// Target-side counterpart of a domain field rule, so f can be evaluated
/// at image points of the spanning map.
fn target_rule(
    space: &crate::space::LengthSpace,
    rule: &FieldRule,
) -> Result<TargetFieldRule> {
    match rule {
        FieldRule::NormSquared { scale } => Ok(TargetFieldRule::NormSquared { scale: *scale }),
        FieldRule::Affine { a, b, c } => Ok(TargetFieldRule::Affine { a: *a, b: *b, c: *c }),
        FieldRule::Constant { value } => {
            Ok(TargetFieldRule::Affine { a: 0.0, b: 0.0, c: *value })
        }
        FieldRule::DistanceToVertex { vertex } => {
            let all = space
                .coords()
                .ok_or_else(|| LabError::MissingCoords("domain has no chart".into()))?;
            let coords = all
                .get(*vertex)
                .copied()
                .ok_or(LabError::BadVertex(*vertex, all.len()))?;
            Ok(TargetFieldRule::DistanceTo { point: TargetPoint::Plane(coords) })
        }
        other => Err(LabError::BadField(format!(
            "rule {other:?} has no target-side counterpart"
        ))),
    }
}

fn gamma_samples(gamma: &GammaSpec, n: usize) -> Result<Vec<TargetPoint>> {
    match gamma {
        GammaSpec::Circle { radius } => {
            if !(*radius > 0.0) {
                return Err(LabError::BadCurve(format!("circle radius {radius}")));
            }
            Ok((0..n)
                .map(|k| {
                    let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    TargetPoint::Plane([radius * t.cos(), radius * t.sin()])
                })
                .collect())
        }
        GammaSpec::Points { points } => {
            if points.len() < n {
                return Err(LabError::BadCurve(format!(
                    "need at least {n} curve samples, got {}",
                    points.len()
                )));
            }
            Ok(points.clone())
        }
    }
}

/// Run the whole construction on one instance and scan every space it
/// produces.
///
/// Stages: (1) generate the domain and pretest convexity of f along
/// geodesics; (2) solve the spanning problem for the curve; (3) estimate
/// the conformal factor and check its log-subharmonicity; (4) pull the
/// factor back to an intrinsic space Y and scan it; (5) check that the
/// spanning map majorizes the curve from Y; (6) deform Y by e^(f o v)
/// and scan; (7) deform the domain by e^f directly and scan. A failed
/// pretest aborts before stage 2 unless `force` is set.
pub fn main_theorem_pipeline(
    spec: &ModelSpec,
    f_rule: &FieldRule,
    gamma: &GammaSpec,
    params: &PipelineParams,
) -> Result<PipelineReport> {
    let h = spec.spacing;
    let target = target_for(spec)?;
    // The model surface X is the target of the spanning problem; the
    // spanning map is always parametrized on a flat disc.
    let space_x = models::generate(spec)?;
    let domain = if spec.kind == ModelKind::FlatDisc {
        space_x.clone()
    } else {
        models::generate(&ModelSpec::flat_disc(1.0, h))?
    };
    let tri = models::triangulation(&domain)?;
    let f_on_x = fields::make_field(&space_x, f_rule)?;
    let f_target = target_rule(&space_x, f_rule)?;

    // Stage 1: geodesic midpoint convexity of the exponent on X.
    let convexity = fields::convexity_check(&space_x, &f_on_x, 400, 3.0 * h, params.seed)?;
    let mut stages = vec![StageLine { stage: "generate", pass: convexity.pass }];
    if !convexity.pass && !params.force {
        return Ok(PipelineReport {
            refused: true,
            forced: false,
            spacing: h,
            convexity,
            plateau_energy: None,
            plateau: None,
            factor: None,
            lambda_energy_ratio: None,
            boundary_regularized: None,
            pullback_scan: None,
            majorization: None,
            deformed_pullback_scan: None,
            deformed_domain_scan: None,
            stages,
            pass: false,
        });
    }

    // Stage 2: least-energy spanning of the curve.
    let cycle_len = domain
        .boundary()
        .ok_or_else(|| LabError::BadBoundary("domain has no boundary cycle".into()))?
        .len();
    let gamma_x = gamma_samples(gamma, cycle_len)?;
    let dirichlet = DirichletParams { tol: params.dirichlet_tol, ..DirichletParams::default() };
    let (map, energy, plateau) = harmonic::solve_plateau(
        &domain,
        &tri,
        &target,
        &gamma_x,
        params.plateau_tol,
        params.max_outer,
        &dirichlet,
    )
    .map_err(|e| LabError::PipelineStage("plateau", e.to_string()))?;
    stages.push(StageLine { stage: "plateau", pass: plateau.monotone });

    // Stage 3: conformal factor and its log-subharmonicity.
    let (lambda, factor) = harmonic::conformal_factor_estimate(&domain, &tri, &map, 5.0 * h)
        .map_err(|e| LabError::PipelineStage("factor", e.to_string()))?;
    let lambda_energy: f64 = (0..domain.vertex_count())
        .map(|v| 2.0 * lambda.values[v].powi(2) * tri.vertex_area[v])
        .sum();
    let lambda_energy_ratio = energy.energy / lambda_energy;
    let factor_pass = !factor.degenerate
        && factor.log_subharmonic.as_ref().map(|r| r.pass).unwrap_or(false);
    stages.push(StageLine { stage: "factor", pass: factor_pass });

    // Stage 4: intrinsic pullback Y and its comparison scan. The factor is
    // regularized over the boundary band first: there the boundary trace is
    // snapped to curve samples and the raw estimate carries noise that would
    // read as spurious curvature.
    let (lambda_reg, regularized) = harmonic::regularize_factor_boundary(&domain, &tri, &lambda)
        .map_err(|e| LabError::PipelineStage("pullback", e.to_string()))?;
    let (y, _floored) = harmonic::intrinsic_pullback(&domain, &lambda_reg)
        .map_err(|e| LabError::PipelineStage("pullback", e.to_string()))?;
    let tol_y = 3.0 * models::edge_weight_quantile(&y, 0.9);
    let pullback_scan = verify::cat0_scan(
        &y,
        params.scan_triangles,
        params.side_points,
        tol_y,
        params.seed,
    )
    .map_err(|e| LabError::PipelineStage("pullback-scan", e.to_string()))?;
    stages.push(StageLine { stage: "pullback-scan", pass: pullback_scan.pass });

    // Stage 5: the spanning map, read off Y, majorizes the curve. The curve
    // is sampled at the trace of the map itself: the boundary assignment is
    // only weakly monotone against an independent sampling, so the trace
    // points are the sampling on which the boundary restriction is an
    // order-preserving bijection.
    let cycle = domain.boundary().expect("checked above");
    let gamma_trace: Vec<TargetPoint> =
        cycle.iter().map(|&v| map.assignment[v].clone()).collect();
    let identity: Vec<usize> = (0..cycle.len()).collect();
    let majorization = verify::majorization_check(
        &y,
        &target,
        &map.assignment,
        &gamma_trace,
        &identity,
        2000,
        5.0 * h,
        params.seed,
    )
    .map_err(|e| LabError::PipelineStage("majorization", e.to_string()))?;
    stages.push(StageLine { stage: "majorization", pass: majorization.pass });

    // Stage 6: deform Y by e^(f o v) and scan.
    let f_on_y: Result<Vec<f64>> = map
        .assignment
        .iter()
        .map(|p| f_target.eval(&target, p))
        .collect();
    let rho_y = conformal::exp_factor(&ScalarField::from_values(f_on_y?))
        .map_err(|e| LabError::PipelineStage("deform-pullback", e.to_string()))?;
    let y_deformed = conformal::conformal_change(&y, &rho_y, Quadrature::Trapezoid)
        .map_err(|e| LabError::PipelineStage("deform-pullback", e.to_string()))?;
    let tol_yd = 3.0 * models::edge_weight_quantile(&y_deformed, 0.9);
    let deformed_pullback_scan = verify::cat0_scan(
        &y_deformed,
        params.scan_triangles,
        params.side_points,
        tol_yd,
        params.seed,
    )
    .map_err(|e| LabError::PipelineStage("deform-pullback-scan", e.to_string()))?;
    stages.push(StageLine {
        stage: "deformed-pullback-scan",
        pass: deformed_pullback_scan.pass,
    });

    // Stage 7: deform the domain by e^f directly and scan.
    let rho_x = conformal::exp_factor(&f_on_x)
        .map_err(|e| LabError::PipelineStage("deform-domain", e.to_string()))?;
    let x_deformed = conformal::conformal_change(&space_x, &rho_x, Quadrature::Trapezoid)
        .map_err(|e| LabError::PipelineStage("deform-domain", e.to_string()))?;
    let tol_xd = 3.0 * models::edge_weight_quantile(&x_deformed, 0.9);
    let deformed_domain_scan = verify::cat0_scan(
        &x_deformed,
        params.scan_triangles,
        params.side_points,
        tol_xd,
        params.seed,
    )
    .map_err(|e| LabError::PipelineStage("deform-domain-scan", e.to_string()))?;
    stages.push(StageLine {
        stage: "deformed-domain-scan",
        pass: deformed_domain_scan.pass,
    });

    let pass = stages.iter().all(|s| s.pass);
    Ok(PipelineReport {
        refused: false,
        forced: params.force && !convexity.pass,
        spacing: h,
        convexity,
        plateau_energy: Some(energy),
        plateau: Some(plateau),
        factor: Some(factor),
        lambda_energy_ratio: Some(lambda_energy_ratio),
        boundary_regularized: Some(regularized),
        pullback_scan: Some(pullback_scan),
        majorization: Some(majorization),
        deformed_pullback_scan: Some(deformed_pullback_scan),
        deformed_domain_scan: Some(deformed_domain_scan),
        stages,
        pass,
    })
}
