//! Acceptance gate: one test per criterion, each printing a single
//! verdict line. Run with `cargo test --test acceptance`.

use std::time::Instant;

use cat0lab::conformal::{self, Quadrature};
use cat0lab::fields::{self, FieldRule};
use cat0lab::harmonic::{self, DirichletParams, SweepMode};
use cat0lab::models::{self, ModelSpec};
use cat0lab::pipeline::{main_theorem_pipeline, GammaSpec, PipelineParams};
use cat0lab::space::LengthSpace;
use cat0lab::target::{TargetFieldRule, TargetPoint, TargetSpace};
use cat0lab::verify;

fn verdict(criterion: u32, pass: bool, detail: &str) {
    println!(
        "criterion {criterion:02} {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion:02}: {detail}");
}

/// Max and mean relative error of mesh distances against the space's
/// closed-form oracle, over roughly `sources^2` pairs separated by at
/// least `min_sep`.
fn oracle_error(space: &LengthSpace, sources: usize, min_sep: f64) -> (f64, f64) {
    let n = space.vertex_count();
    let stride = (n / sources).max(1);
    let picks: Vec<usize> = (0..n).step_by(stride).take(sources).collect();
    let mut max_rel = 0.0f64;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for &src in &picks {
        let sssp = space.sssp(src, None);
        for &dst in &picks {
            let exact = models::exact_distance(space, src, dst).expect("oracle");
            if exact < min_sep {
                continue;
            }
            let rel = (sssp.dist[dst] - exact).abs() / exact;
            max_rel = max_rel.max(rel);
            sum += rel;
            count += 1;
        }
    }
    (max_rel, sum / count.max(1) as f64)
}

fn oracle_models(h: f64) -> Vec<(&'static str, ModelSpec)> {
    vec![
        ("flat", ModelSpec::flat_disc(1.0, h)),
        ("hyperbolic", ModelSpec::hyperbolic_disc(0.9, h)),
        ("tree", ModelSpec::tree(vec![1.0, 1.0, 1.0], h)),
        ("cone", ModelSpec::cone(4.0 * std::f64::consts::PI, 1.0, h)),
    ]
}

#[test]
fn criterion_01_oracle_fidelity() {
    let mut detail = String::new();
    let mut pass = true;
    for (name, coarse) in oracle_models(0.02) {
        let t0 = Instant::now();
        let space = models::generate(&coarse).unwrap();
        let (max_c, mean_c) = oracle_error(&space, 32, 0.2);
        let fine = ModelSpec { spacing: 0.01, ..coarse };
        let space = models::generate(&fine).unwrap();
        let (max_f, mean_f) = oracle_error(&space, 32, 0.2);
        let halves = mean_f <= 0.7 * mean_c && max_f <= 0.8 * max_c;
        pass &= max_c <= 0.02 && halves && t0.elapsed().as_secs() <= 60;
        detail.push_str(&format!(
            "{name}: max {:.4}->{:.4} mean {:.5}->{:.5}; ",
            max_c, max_f, mean_c, mean_f
        ));
    }
    verdict(1, pass, detail.trim_end());
}

#[test]
fn criterion_02_conformal_cone_identity() {
    let h = 0.02;
    let space = models::generate(&ModelSpec::flat_disc(1.0, h)).unwrap();
    let mut detail = String::new();
    let mut pass = true;
    for alpha in [0.5, 1.0, 2.0] {
        let factor =
            fields::make_field(&space, &FieldRule::PowerRadial { alpha }).unwrap();
        let cone = conformal::conformal_change(&space, &factor, Quadrature::Midpoint).unwrap();
        let (max_rel, mean_rel) = oracle_error(&cone, 24, 0.2);
        pass &= max_rel <= 0.02;
        detail.push_str(&format!("a={alpha}: max {:.4} mean {:.5}; ", max_rel, mean_rel));
    }
    // Negative control: alpha = -0.5 on the punctured disc must fail the
    // scan decisively near the former apex.
    let hs = 0.05;
    let disc = models::generate(&ModelSpec::flat_disc(1.0, hs)).unwrap();
    let apex = models::nearest_vertex(&disc, [0.0, 0.0]).unwrap();
    let punctured = disc.remove_vertex(apex).unwrap();
    let factor =
        fields::make_field(&punctured, &FieldRule::PowerRadial { alpha: -0.5 }).unwrap();
    let sharp = conformal::conformal_change(&punctured, &factor, Quadrature::Midpoint).unwrap();
    let tol = 3.0 * models::edge_weight_quantile(&sharp, 0.9);
    let report = verify::cat0_scan(&sharp, 10_000, 2, tol, 20_002).unwrap();
    pass &= !report.pass && report.min_slack < -3.0 * hs;
    detail.push_str(&format!(
        "a=-0.5: min slack {:.3} < {:.3}",
        report.min_slack,
        -3.0 * hs
    ));
    verdict(2, pass, &detail);
}

fn tree_center(space: &LengthSpace) -> usize {
    let a = space.sssp(0, None);
    let far1 = (0..space.vertex_count())
        .max_by(|&i, &j| a.dist[i].total_cmp(&a.dist[j]))
        .unwrap();
    let d1 = space.sssp(far1, None);
    let far2 = (0..space.vertex_count())
        .max_by(|&i, &j| d1.dist[i].total_cmp(&d1.dist[j]))
        .unwrap();
    let d2 = space.sssp(far2, None);
    (0..space.vertex_count())
        .min_by(|&i, &j| {
            d1.dist[i].max(d2.dist[i]).total_cmp(&d1.dist[j].max(d2.dist[j]))
        })
        .unwrap()
}

#[test]
fn criterion_03_main_theorem_positive_instances() {
    let mut detail = String::new();
    let mut pass = true;
    let h = 0.05;
    let cases: Vec<(&str, LengthSpace, FieldRule)> = {
        let flat = models::generate(&ModelSpec::flat_disc(1.0, h)).unwrap();
        let point = models::nearest_vertex(&flat, [0.3, 0.1]).unwrap();
        let hyp = models::generate(&ModelSpec::hyperbolic_disc(0.9, h)).unwrap();
        let hyp_center = models::nearest_vertex(&hyp, [0.0, 0.0]).unwrap();
        let tripod = models::generate(&ModelSpec::tree(vec![1.0, 1.0, 1.0], 0.02)).unwrap();
        let center = tree_center(&tripod);
        vec![
            ("flat+normsq", flat.clone(), FieldRule::NormSquared { scale: 1.0 }),
            ("flat+dist", flat, FieldRule::DistanceToVertex { vertex: point }),
            ("hyp+dist", hyp, FieldRule::DistanceToVertex { vertex: hyp_center }),
            ("tripod+dist", tripod, FieldRule::DistanceToVertex { vertex: center }),
        ]
    };
    for (name, space, rule) in cases {
        let t0 = Instant::now();
        let f = fields::make_field(&space, &rule).unwrap();
        let rho = conformal::exp_factor(&f).unwrap();
        let deformed = conformal::conformal_change(&space, &rho, Quadrature::Trapezoid).unwrap();
        let tol = 3.0 * models::edge_weight_quantile(&deformed, 0.9);
        let report = verify::cat0_scan(&deformed, 10_000, 2, tol, 30_001).unwrap();
        let in_time = t0.elapsed().as_secs() <= 120;
        pass &= report.pass && in_time;
        detail.push_str(&format!(
            "{name}: min {:.3} tol {:.3} {}s; ",
            report.min_slack,
            tol,
            t0.elapsed().as_secs()
        ));
    }
    verdict(3, pass, detail.trim_end());
}

#[test]
fn criterion_04_negative_control_curvature() {
    let h = 0.05;
    let space = models::generate(&ModelSpec::flat_disc(1.0, h)).unwrap();
    let f = fields::make_field(&space, &FieldRule::NormSquared { scale: -1.0 }).unwrap();
    let rho = conformal::exp_factor(&f).unwrap();
    let deformed = conformal::conformal_change(&space, &rho, Quadrature::Trapezoid).unwrap();
    let tol = 3.0 * models::edge_weight_quantile(&deformed, 0.9);
    let scan = verify::cat0_scan(&deformed, 10_000, 2, tol, 40_001).unwrap();

    // Gauss-Bonnet curvature of e^{2f} with f = -|z|^2 / 2 at the origin:
    // -e^{-2f} (Laplacian of f) = +2.
    let hs = 0.01;
    let fine = models::generate(&ModelSpec::flat_disc(1.0, hs)).unwrap();
    let tri = models::triangulation(&fine).unwrap();
    let f = fields::make_field(&fine, &FieldRule::NormSquared { scale: -0.5 }).unwrap();
    let report = conformal::conformal_curvature_check(&fine, &tri, &f, 10.0 * hs).unwrap();
    let curvature_ok = (report.curvature_at_origin - 2.0).abs() <= 0.1;
    let pass = !scan.pass && curvature_ok;
    verdict(
        4,
        pass,
        &format!(
            "scan min {:.3} tol {:.3}; K(0) = {:.4}",
            scan.min_slack, tol, report.curvature_at_origin
        ),
    );
}

#[test]
fn criterion_05_curvature_formula_residual() {
    let mut cs = Vec::new();
    for h in [0.04, 0.02] {
        let space = models::generate(&ModelSpec::flat_disc(1.0, h)).unwrap();
        let tri = models::triangulation(&space).unwrap();
        let f = fields::make_field(&space, &FieldRule::NormSquared { scale: 0.5 }).unwrap();
        let report = conformal::conformal_curvature_check(&space, &tri, &f, 10.0 * h).unwrap();
        cs.push((h, report.max_residual, report.c_over_h));
    }
    let (c1, c2) = (cs[0].2, cs[1].2);
    let stable = c2 <= 1.5 * c1 && c1.is_finite() && c2.is_finite();
    let bounded = cs.iter().all(|&(h, res, _)| res <= 10.0 * h);
    verdict(
        5,
        stable && bounded,
        &format!("C = {:.3} at h=0.04, {:.3} at h=0.02", c1, c2),
    );
}

fn circle_boundary(space: &LengthSpace, radius: f64) -> Vec<TargetPoint> {
    let cycle = space.boundary().unwrap();
    let coords = space.coords().unwrap();
    cycle
        .iter()
        .map(|&v| {
            let a = coords[v][1].atan2(coords[v][0]);
            TargetPoint::Plane([radius * a.cos(), radius * a.sin()])
        })
        .collect()
}

#[test]
fn criterion_06_dirichlet_linear_oracle() {
    let t0 = Instant::now();
    let space = models::generate(&ModelSpec::flat_disc(1.0, 0.05)).unwrap();
    let tri = models::triangulation(&space).unwrap();
    let boundary = circle_boundary(&space, 1.0);
    let params = DirichletParams { tol: 1e-10, ..DirichletParams::default() };
    let (map, _, _) = harmonic::solve_dirichlet(
        &space,
        &tri,
        &TargetSpace::EuclideanPlane,
        &boundary,
        &params,
    )
    .unwrap();
    let oracle = harmonic::dirichlet_linear_oracle(&space, &tri, &boundary).unwrap();
    let mut max_gap = 0.0f64;
    for (p, q) in map.assignment.iter().zip(&oracle) {
        max_gap = max_gap.max(TargetSpace::EuclideanPlane.distance(p, q));
    }
    let in_time = t0.elapsed().as_secs() <= 60;
    verdict(
        6,
        max_gap <= 1e-8 && in_time && space.vertex_count() <= 10_000,
        &format!(
            "max gap {:.2e} on {} vertices in {}s",
            max_gap,
            space.vertex_count(),
            t0.elapsed().as_secs()
        ),
    );
}

#[test]
fn criterion_07_energy_monotone_and_uniqueness() {
    let space = models::generate(&ModelSpec::flat_disc(1.0, 0.1)).unwrap();
    let tri = models::triangulation(&space).unwrap();
    let boundary = circle_boundary(&space, 1.0);
    let tol = 1e-9;
    let gs = DirichletParams {
        mode: SweepMode::GaussSeidel,
        tol,
        order_seed: Some(5),
        ..DirichletParams::default()
    };
    let (map_gs, energy, _) = harmonic::solve_dirichlet(
        &space,
        &tri,
        &TargetSpace::EuclideanPlane,
        &boundary,
        &gs,
    )
    .unwrap();
    let monotone = energy
        .history
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
    let jacobi = DirichletParams {
        mode: SweepMode::Jacobi,
        tol,
        init_seed: Some(9),
        ..DirichletParams::default()
    };
    let (map_j, _, _) = harmonic::solve_dirichlet(
        &space,
        &tri,
        &TargetSpace::EuclideanPlane,
        &boundary,
        &jacobi,
    )
    .unwrap();
    let mut max_gap = 0.0f64;
    for (p, q) in map_gs.assignment.iter().zip(&map_j.assignment) {
        max_gap = max_gap.max(TargetSpace::EuclideanPlane.distance(p, q));
    }
    verdict(
        7,
        monotone && max_gap <= 10.0 * tol,
        &format!("history monotone {monotone}; GS-Jacobi gap {max_gap:.2e} vs {:.0e}", 10.0 * tol),
    );
}

#[test]
fn criterion_08_fuglede_property() {
    let h = 0.1;
    let space = models::generate(&ModelSpec::flat_disc(1.0, h)).unwrap();
    let tri = models::triangulation(&space).unwrap();
    let params = DirichletParams { tol: 1e-9, ..DirichletParams::default() };
    let circle = circle_boundary(&space, 1.0);
    let (harmonic_map, _, _) = harmonic::solve_dirichlet(
        &space,
        &tri,
        &TargetSpace::EuclideanPlane,
        &circle,
        &params,
    )
    .unwrap();
    let gamma: Vec<TargetPoint> = {
        let cycle_len = space.boundary().unwrap().len();
        (0..cycle_len)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / cycle_len as f64;
                TargetPoint::Plane([0.8 * t.cos(), 0.8 * t.sin()])
            })
            .collect()
    };
    let (plateau_map, _, _) = harmonic::solve_plateau(
        &space,
        &tri,
        &TargetSpace::EuclideanPlane,
        &gamma,
        1e-6,
        400,
        &params,
    )
    .unwrap();
    let origin = TargetPoint::Plane([0.0, 0.0]);
    let convex_rules = [
        TargetFieldRule::Affine { a: 1.0, b: -0.5, c: 0.2 },
        TargetFieldRule::DistanceTo { point: origin },
        TargetFieldRule::SqDistanceTo { point: origin },
        TargetFieldRule::NormSquared { scale: 1.0 },
    ];
    let mut pass = true;
    let mut worst = f64::INFINITY;
    for map in [&harmonic_map, &plateau_map] {
        for rule in &convex_rules {
            let report =
                harmonic::pullback_subharmonicity_test(&space, &tri, map, rule, 5.0 * h)
                    .unwrap();
            worst = worst.min(report.min_laplacian);
            pass &= report.pass;
        }
    }
    let concave = harmonic::pullback_subharmonicity_test(
        &space,
        &tri,
        &harmonic_map,
        &TargetFieldRule::NormSquared { scale: -1.0 },
        5.0 * h,
    )
    .unwrap();
    pass &= !concave.pass;
    verdict(
        8,
        pass,
        &format!(
            "convex min laplacian {:.3} vs {:.3}; concave min {:.3}",
            worst,
            -5.0 * h,
            concave.min_laplacian
        ),
    );
}

#[test]
fn criterion_09_composition_law() {
    let h = 0.05;
    let space = models::generate(&ModelSpec::flat_disc(1.0, h)).unwrap();
    let rho1 = fields::make_field(
        &space,
        &FieldRule::Exp { inner: Box::new(FieldRule::NormSquared { scale: 0.5 }) },
    )
    .unwrap();
    let rho2 = fields::make_field(
        &space,
        &FieldRule::Exp { inner: Box::new(FieldRule::NormSquared { scale: 0.25 }) },
    )
    .unwrap();
    let mid =
        conformal::composition_law_check(&space, &rho1, &rho2, Quadrature::Midpoint, 1000, 90_001)
            .unwrap();
    let trap = conformal::composition_law_check(
        &space,
        &rho1,
        &rho2,
        Quadrature::Trapezoid,
        1000,
        90_002,
    )
    .unwrap();
    verdict(
        9,
        mid.pass && trap.pass,
        &format!(
            "midpoint gap {:.2e} (<= 1e-12); trapezoid gap {:.2e} <= {:.2e}",
            mid.max_rel_gap, trap.max_rel_gap, trap.threshold
        ),
    );
}

#[test]
fn criterion_10_pipeline() {
    let t0 = Instant::now();
    let spec = ModelSpec::flat_disc(1.0, 0.05);
    let rule = FieldRule::NormSquared { scale: 1.0 };
    let gamma = GammaSpec::Circle { radius: 0.8 };
    let report =
        main_theorem_pipeline(&spec, &rule, &gamma, &PipelineParams::default()).unwrap();
    let elapsed = t0.elapsed().as_secs();
    let stages: Vec<String> = report
        .stages
        .iter()
        .map(|s| format!("{}:{}", s.stage, if s.pass { "ok" } else { "FAIL" }))
        .collect();
    verdict(
        10,
        report.pass && report.stages.len() == 7 && elapsed <= 300,
        &format!("{} in {elapsed}s", stages.join(" ")),
    );
}

#[test]
fn criterion_11_full_suite() {
    let t0 = Instant::now();
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_lab"))
        .args(["suite", "all"])
        .stdout(std::process::Stdio::null())
        .status()
        .expect("binary runs");
    let elapsed = t0.elapsed().as_secs();
    verdict(
        11,
        status.code() == Some(0) && elapsed <= 600,
        &format!("exit {:?} in {elapsed}s", status.code()),
    );
}
