//! Experiment runner: JSON configs in, JSON reports and CSV evidence out,
//! with a canonical suite of configs shipped in the binary. Reports are
//! byte-identical across reruns and thread counts apart from the timestamp
//! field; exit status 0 means PASS, 1 means FAIL, 2 means the run itself
//! could not be carried out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::conformal::{self, Quadrature};
use crate::error::{LabError, Result};
use crate::fields::{self, FieldRule};
use crate::harmonic::{self, DirichletParams, SweepMode};
use crate::models::{self, ModelSpec};
use crate::pipeline::{self, GammaSpec, PipelineParams};
use crate::space::LengthSpace;
use crate::target::{TargetPoint, TargetSpace};
use crate::verify;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Deform,
    Cat0Scan,
    CurvatureCheck,
    Dirichlet,
    Plateau,
    Pipeline,
    CompositionLaw,
}

/// A space given inline as a model recipe or as a path to a serialized
/// space file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceSource {
    Model(ModelSpec),
    Path(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSpec {
    EuclideanPlane,
    HyperbolicPlane,
}

impl TargetSpec {
    fn build(self) -> TargetSpace {
        match self {
            TargetSpec::EuclideanPlane => TargetSpace::EuclideanPlane,
            TargetSpec::HyperbolicPlane => TargetSpace::HyperbolicPlane,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldRule>,
    /// Second factor rule for the composition law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field2: Option<FieldRule>,
    /// Deform by e^field instead of by field directly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponentiate: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<Quadrature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triangles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    /// Absolute tolerance; takes precedence over `tol_h`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Tolerance in units of the coarse mesh scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_h: Option<f64>,
    /// Chart point whose nearest vertex is removed before deforming,
    /// for punctured-disc controls.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub puncture: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
    /// Boundary images aligned with the domain boundary cycle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Vec<TargetPoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<SweepMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outer: Option<usize>,
    /// Verdict the suite runner expects from this config; FAIL marks a
    /// negative control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Output path for the deformed space (deform experiment).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space_out: Option<PathBuf>,
}

pub struct RunOutcome {
    pub verdict: Verdict,
    pub report: Value,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
    if config.version != CONFIG_VERSION {
        return Err(LabError::Config(format!(
            "field version: expected {CONFIG_VERSION}, got {}",
            config.version
        )));
    }
    Ok(config)
}

fn load_space(source: &Option<SpaceSource>) -> Result<(LengthSpace, Option<ModelSpec>)> {
    match source {
        None => Err(LabError::Config("field space: required".into())),
        Some(SpaceSource::Model(spec)) => Ok((models::generate(spec)?, Some(spec.clone()))),
        Some(SpaceSource::Path(path)) => {
            let text = std::fs::read_to_string(path)?;
            let space: LengthSpace = serde_json::from_str(&text)?;
            Ok((space, None))
        }
    }
}

fn apply_puncture(space: LengthSpace, config: &ExperimentConfig) -> Result<LengthSpace> {
    match config.puncture {
        None => Ok(space),
        Some(p) => {
            let v = models::nearest_vertex(&space, p)?;
            space.remove_vertex(v)
        }
    }
}

fn model_spec(source: &Option<SpaceSource>) -> Result<ModelSpec> {
    match source {
        Some(SpaceSource::Model(spec)) => Ok(spec.clone()),
        _ => Err(LabError::Config(
            "field space: this experiment needs an inline model recipe".into(),
        )),
    }
}

fn need_field(config: &ExperimentConfig) -> Result<&FieldRule> {
    config
        .field
        .as_ref()
        .ok_or_else(|| LabError::Config("field field: required".into()))
}

/// Deformation factor from the config: the field rule itself, or its
/// exponential when `exponentiate` is set.
fn factor_from(
    space: &LengthSpace,
    rule: &FieldRule,
    exponentiate: bool,
) -> Result<fields::ScalarField> {
    let f = fields::make_field(space, rule)?;
    if exponentiate {
        conformal::exp_factor(&f)
    } else {
        Ok(f)
    }
}

fn scan_tol(config: &ExperimentConfig, space: &LengthSpace) -> f64 {
    let h_coarse = models::edge_weight_quantile(space, 0.9);
    config
        .tol
        .unwrap_or_else(|| config.tol_h.unwrap_or(3.0) * h_coarse)
}

fn boundary_samples(
    config: &ExperimentConfig,
    space: &LengthSpace,
) -> Result<Vec<TargetPoint>> {
    let cycle_len = space
        .boundary()
        .ok_or_else(|| LabError::BadBoundary("domain has no boundary cycle".into()))?
        .len();
    if let Some(points) = &config.boundary {
        return Ok(points.clone());
    }
    match &config.gamma {
        Some(GammaSpec::Circle { radius }) => Ok((0..cycle_len)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / cycle_len as f64;
                TargetPoint::Plane([radius * t.cos(), radius * t.sin()])
            })
            .collect()),
        Some(GammaSpec::Points { points }) => Ok(points.clone()),
        None => Err(LabError::Config(
            "field boundary: required (or a gamma curve to sample)".into(),
        )),
    }
}

fn write_if(path: &Option<PathBuf>, content: &str) -> Result<()> {
    if let Some(p) = path {
        if let Some(dir) = p.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        std::fs::write(p, content)?;
    }
    Ok(())
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    match config.experiment {
        ExperimentKind::Deform => {
            let (space, _) = load_space(&config.space)?;
            let space = apply_puncture(space, config)?;
            let rule = need_field(config)?;
            let factor = factor_from(&space, rule, config.exponentiate.unwrap_or(false))?;
            let quad = config.quadrature.unwrap_or_default();
            let deformed = conformal::conformal_change(&space, &factor, quad)?;
            write_if(
                &config.space_out,
                &serde_json::to_string_pretty(&deformed).map_err(LabError::from)?,
            )?;
            let mut weights: Vec<f64> = deformed.edges().iter().map(|&(_, _, w)| w).collect();
            weights.sort_by(f64::total_cmp);
            Ok(RunOutcome {
                verdict: Verdict::Pass,
                report: json!({
                    "vertices": deformed.vertex_count(),
                    "edges": weights.len(),
                    "min_weight": weights.first(),
                    "median_weight": weights[weights.len() / 2],
                    "max_weight": weights.last(),
                }),
            })
        }
        ExperimentKind::Cat0Scan => {
            let (base, _) = load_space(&config.space)?;
            let base = apply_puncture(base, config)?;
            let space = match &config.field {
                Some(rule) => {
                    let factor =
                        factor_from(&base, rule, config.exponentiate.unwrap_or(false))?;
                    let quad = config.quadrature.unwrap_or_default();
                    conformal::conformal_change(&base, &factor, quad)?
                }
                None => base,
            };
            let report = verify::cat0_scan(
                &space,
                config.triangles.unwrap_or(1000),
                config.side_points.unwrap_or(2),
                scan_tol(config, &space),
                config.seed,
            )?;
            write_if(&config.csv, &verify::scan_csv(&report))?;
            let verdict = if report.pass { Verdict::Pass } else { Verdict::Fail };
            Ok(RunOutcome {
                verdict,
                report: serde_json::to_value(&report).map_err(LabError::from)?,
            })
        }
        ExperimentKind::CurvatureCheck => {
            let (space, spec) = load_space(&config.space)?;
            let tri = models::triangulation(&space)?;
            let rule = need_field(config)?;
            let f = fields::make_field(&space, rule)?;
            let h = spec.map(|s| s.spacing).unwrap_or_else(|| tri.spacing);
            let tol = config.tol.unwrap_or_else(|| config.tol_h.unwrap_or(10.0) * h);
            let report = conformal::conformal_curvature_check(&space, &tri, &f, tol)?;
            let verdict = if report.pass { Verdict::Pass } else { Verdict::Fail };
            Ok(RunOutcome {
                verdict,
                report: serde_json::to_value(&report).map_err(LabError::from)?,
            })
        }
        ExperimentKind::Dirichlet => {
            let (space, _) = load_space(&config.space)?;
            let tri = models::triangulation(&space)?;
            let target = config
                .target
                .unwrap_or(TargetSpec::EuclideanPlane)
                .build();
            let boundary = boundary_samples(config, &space)?;
            let params = DirichletParams {
                mode: config.mode.unwrap_or(SweepMode::GaussSeidel),
                tol: config.tol.unwrap_or(1e-9),
                ..DirichletParams::default()
            };
            let (map, energy, stats) =
                harmonic::solve_dirichlet(&space, &tri, &target, &boundary, &params)?;
            let monotone = energy
                .history
                .windows(2)
                .all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
            let verdict = if monotone { Verdict::Pass } else { Verdict::Fail };
            Ok(RunOutcome {
                verdict,
                report: json!({
                    "domain-ref": config.space,
                    "target": config.target.unwrap_or(TargetSpec::EuclideanPlane),
                    "assignment": map.assignment,
                    "energy": energy.energy,
                    "sweeps": stats.sweeps,
                    "residual_estimate": stats.residual_estimate,
                    "energy_monotone": monotone,
                }),
            })
        }
        ExperimentKind::Plateau => {
            let (space, _) = load_space(&config.space)?;
            let tri = models::triangulation(&space)?;
            let target = config
                .target
                .unwrap_or(TargetSpec::EuclideanPlane)
                .build();
            let gamma = boundary_samples(config, &space)?;
            let params = DirichletParams {
                tol: config.tol.unwrap_or(1e-7),
                ..DirichletParams::default()
            };
            let (map, energy, plateau) = harmonic::solve_plateau(
                &space,
                &tri,
                &target,
                &gamma,
                config.tol.unwrap_or(1e-6),
                config.max_outer.unwrap_or(400),
                &params,
            )?;
            let verdict = if plateau.monotone { Verdict::Pass } else { Verdict::Fail };
            Ok(RunOutcome {
                verdict,
                report: json!({
                    "domain-ref": config.space,
                    "target": config.target.unwrap_or(TargetSpec::EuclideanPlane),
                    "assignment": map.assignment,
                    "boundary_assignment": plateau.assignment,
                    "energy": energy.energy,
                    "sweeps": plateau.outer_iterations,
                    "outer_energy": plateau.outer_energy,
                    "monotone": plateau.monotone,
                }),
            })
        }
        ExperimentKind::Pipeline => {
            let spec = model_spec(&config.space)?;
            let rule = need_field(config)?;
            let gamma = config
                .gamma
                .clone()
                .ok_or_else(|| LabError::Config("field gamma: required".into()))?;
            let defaults = PipelineParams::default();
            let params = PipelineParams {
                scan_triangles: config.triangles.unwrap_or(defaults.scan_triangles),
                side_points: config.side_points.unwrap_or(defaults.side_points),
                seed: config.seed,
                force: config.force.unwrap_or(false),
                max_outer: config.max_outer.unwrap_or(defaults.max_outer),
                ..defaults
            };
            let report = pipeline::main_theorem_pipeline(&spec, rule, &gamma, &params)?;
            if let Some(scan) = &report.deformed_domain_scan {
                write_if(&config.csv, &verify::scan_csv(scan))?;
            }
            let verdict = if report.pass { Verdict::Pass } else { Verdict::Fail };
            Ok(RunOutcome {
                verdict,
                report: serde_json::to_value(&report).map_err(LabError::from)?,
            })
        }
        ExperimentKind::CompositionLaw => {
            let (space, _) = load_space(&config.space)?;
            let rule1 = need_field(config)?;
            let rule2 = config
                .field2
                .as_ref()
                .ok_or_else(|| LabError::Config("field field2: required".into()))?;
            let exp = config.exponentiate.unwrap_or(false);
            let rho1 = factor_from(&space, rule1, exp)?;
            let rho2 = factor_from(&space, rule2, exp)?;
            let report = conformal::composition_law_check(
                &space,
                &rho1,
                &rho2,
                config.quadrature.unwrap_or_default(),
                config.pairs.unwrap_or(1000),
                config.seed,
            )?;
            let verdict = if report.pass { Verdict::Pass } else { Verdict::Fail };
            Ok(RunOutcome {
                verdict,
                report: serde_json::to_value(&report).map_err(LabError::from)?,
            })
        }
    }
}

fn timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Full report envelope for one run: config echo, verdict, evidence.
pub fn report_envelope(config: &ExperimentConfig, outcome: &RunOutcome) -> Value {
    json!({
        "experiment": config.experiment,
        "seed": config.seed,
        "verdict": outcome.verdict,
        "timestamp": timestamp(),
        "report": outcome.report,
    })
}

/// Run one config: print the report, write artifacts, map the verdict to
/// an exit status.
pub fn run(config: &ExperimentConfig) -> Result<(i32, Value)> {
    let outcome = run_experiment(config)?;
    let envelope = report_envelope(config, &outcome);
    let text = serde_json::to_string_pretty(&envelope).map_err(LabError::from)?;
    write_if(&config.report, &text)?;
    let status = match outcome.verdict {
        Verdict::Pass => 0,
        Verdict::Fail => 1,
    };
    Ok((status, envelope))
}

pub struct SuiteMember {
    pub name: &'static str,
    pub config: &'static str,
}

/// Canonical configs shipped with the binary. The oracle bundle scans the
/// closed-form model spaces and pins the exact composition identity; the
/// theorem bundle reproduces the positive instances of the main theorem;
/// every negative control is expected to FAIL its inner check.
pub const ORACLE_SUITE: &[SuiteMember] = &[
    SuiteMember {
        name: "oracle-flat-scan",
        config: include_str!("../configs/oracle-flat-scan.json"),
    },
    SuiteMember {
        name: "oracle-hyperbolic-scan",
        config: include_str!("../configs/oracle-hyperbolic-scan.json"),
    },
    SuiteMember {
        name: "oracle-tree-scan",
        config: include_str!("../configs/oracle-tree-scan.json"),
    },
    SuiteMember {
        name: "oracle-cone-scan",
        config: include_str!("../configs/oracle-cone-scan.json"),
    },
    SuiteMember {
        name: "oracle-composition-midpoint",
        config: include_str!("../configs/oracle-composition-midpoint.json"),
    },
    SuiteMember {
        name: "oracle-dirichlet-disc",
        config: include_str!("../configs/oracle-dirichlet-disc.json"),
    },
];

pub const THEOREM_SUITE: &[SuiteMember] = &[
    SuiteMember {
        name: "theorem-flat-normsq",
        config: include_str!("../configs/theorem-flat-normsq.json"),
    },
    SuiteMember {
        name: "theorem-flat-distance",
        config: include_str!("../configs/theorem-flat-distance.json"),
    },
    SuiteMember {
        name: "theorem-hyperbolic-distance",
        config: include_str!("../configs/theorem-hyperbolic-distance.json"),
    },
    SuiteMember {
        name: "theorem-tripod-distance",
        config: include_str!("../configs/theorem-tripod-distance.json"),
    },
    SuiteMember {
        name: "theorem-curvature-formula",
        config: include_str!("../configs/theorem-curvature-formula.json"),
    },
    SuiteMember {
        name: "theorem-plateau-circle",
        config: include_str!("../configs/theorem-plateau-circle.json"),
    },
    SuiteMember {
        name: "theorem-pipeline-flat",
        config: include_str!("../configs/theorem-pipeline-flat.json"),
    },
    SuiteMember {
        name: "theorem-pipeline-hyperbolic",
        config: include_str!("../configs/theorem-pipeline-hyperbolic.json"),
    },
];

pub const NEGATIVE_SUITE: &[SuiteMember] = &[
    SuiteMember {
        name: "negative-cone-half",
        config: include_str!("../configs/negative-cone-half.json"),
    },
    SuiteMember {
        name: "negative-punctured-power",
        config: include_str!("../configs/negative-punctured-power.json"),
    },
    SuiteMember {
        name: "negative-concave-exponent",
        config: include_str!("../configs/negative-concave-exponent.json"),
    },
];

pub fn suite_members(name: &str) -> Result<Vec<&'static SuiteMember>> {
    match name {
        "oracle" => Ok(ORACLE_SUITE.iter().collect()),
        "theorem" => Ok(THEOREM_SUITE.iter().collect()),
        "negative-controls" => Ok(NEGATIVE_SUITE.iter().collect()),
        "all" => Ok(ORACLE_SUITE
            .iter()
            .chain(THEOREM_SUITE)
            .chain(NEGATIVE_SUITE)
            .collect()),
        other => Err(LabError::Config(format!("unknown suite {other}"))),
    }
}

/// Run a named bundle of canonical configs. A member passes when its
/// verdict matches its expectation (PASS unless marked as a negative
/// control); the aggregate passes when every member does.
pub fn suite(name: &str, out_dir: Option<&Path>) -> Result<(i32, Value)> {
    let members = suite_members(name)?;
    let mut rows = Vec::new();
    let mut all_ok = true;
    for member in members {
        let mut config = parse_config(member.config)?;
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
            config.report = Some(dir.join(format!("{}.json", member.name)));
            config.csv = config
                .csv
                .map(|_| dir.join(format!("{}.csv", member.name)));
        }
        let expected = config.expect.unwrap_or(Verdict::Pass);
        let outcome = run_experiment(&config)?;
        let ok = outcome.verdict == expected;
        all_ok &= ok;
        if out_dir.is_some() {
            let envelope = report_envelope(&config, &outcome);
            write_if(
                &config.report,
                &serde_json::to_string_pretty(&envelope).map_err(LabError::from)?,
            )?;
        }
        rows.push(json!({
            "name": member.name,
            "verdict": outcome.verdict,
            "expected": expected,
            "ok": ok,
        }));
    }
    let envelope = json!({
        "suite": name,
        "members": rows,
        "verdict": if all_ok { Verdict::Pass } else { Verdict::Fail },
        "timestamp": timestamp(),
    });
    Ok((if all_ok { 0 } else { 1 }, envelope))
}
