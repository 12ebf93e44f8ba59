//! Target spaces for maps: the Euclidean plane, the Poincare disc, star-shaped
//! metric trees, and finite meshes. The first three carry closed-form
//! distances and geodesics; meshes fall back to graph shortest paths.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::models;
use crate::space::LengthSpace;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetPoint {
    MeshVertex(usize),
    Plane([f64; 2]),
    Tree { leg: usize, t: f64 },
}

#[derive(Clone, Debug)]
pub struct StarTree {
    pub legs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MeshTarget {
    pub space: LengthSpace,
    dist: Vec<Vec<f64>>,
}

impl MeshTarget {
    pub fn new(space: LengthSpace) -> Result<Self> {
        let n = space.vertex_count();
        if n > 20_000 {
            return Err(LabError::BadTarget(format!(
                "mesh target too large for all-pairs distances: {n} vertices"
            )));
        }
        let dist = (0..n).map(|v| space.sssp(v, None).dist).collect();
        Ok(MeshTarget { space, dist })
    }
}

#[derive(Clone, Debug)]
pub enum TargetSpace {
    EuclideanPlane,
    HyperbolicPlane,
    Tree(StarTree),
    Mesh(MeshTarget),
}

fn cx(p: [f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

fn uncx(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

/// Mobius translation sending `a` to the origin.
fn mobius_to_origin(a: Complex64, z: Complex64) -> Complex64 {
    (z - a) / (Complex64::new(1.0, 0.0) - a.conj() * z)
}

fn mobius_from_origin(a: Complex64, w: Complex64) -> Complex64 {
    (w + a) / (Complex64::new(1.0, 0.0) + a.conj() * w)
}

/// Logarithm map of the Poincare disc at `a`: tangent vector whose norm is
/// the hyperbolic distance.
fn hyp_log(a: Complex64, p: Complex64) -> Complex64 {
    let w = mobius_to_origin(a, p);
    let r = w.norm();
    if r < 1e-300 {
        return Complex64::new(0.0, 0.0);
    }
    let d = 2.0 * r.atanh();
    w / r * d
}

fn hyp_exp(a: Complex64, v: Complex64) -> Complex64 {
    let d = v.norm();
    if d < 1e-300 {
        return a;
    }
    let w = v / d * (d / 2.0).tanh();
    mobius_from_origin(a, w)
}

impl TargetSpace {
    pub fn tree(legs: Vec<f64>) -> Result<Self> {
        if legs.is_empty() || legs.iter().any(|&l| !(l > 0.0)) {
            return Err(LabError::BadTarget("tree legs must be positive".into()));
        }
        Ok(TargetSpace::Tree(StarTree { legs }))
    }

    pub fn check_point(&self, p: &TargetPoint) -> Result<()> {
        match (self, p) {
            (TargetSpace::EuclideanPlane, TargetPoint::Plane(_)) => Ok(()),
            (TargetSpace::HyperbolicPlane, TargetPoint::Plane(q)) => {
                if q[0].hypot(q[1]) < 1.0 {
                    Ok(())
                } else {
                    Err(LabError::BadTarget(format!(
                        "point {q:?} outside the Poincare disc"
                    )))
                }
            }
            (TargetSpace::Tree(tr), TargetPoint::Tree { leg, t }) => {
                if *leg < tr.legs.len() && *t >= 0.0 && *t <= tr.legs[*leg] + 1e-9 {
                    Ok(())
                } else {
                    Err(LabError::BadTarget(format!(
                        "tree point leg {leg} t {t} out of range"
                    )))
                }
            }
            (TargetSpace::Mesh(m), TargetPoint::MeshVertex(v)) => m.space.check_vertex(*v),
            _ => Err(LabError::BadTarget(
                "point kind does not match target kind".into(),
            )),
        }
    }

    pub fn distance(&self, p: &TargetPoint, q: &TargetPoint) -> f64 {
        match (self, p, q) {
            (TargetSpace::EuclideanPlane, TargetPoint::Plane(a), TargetPoint::Plane(b)) => {
                (a[0] - b[0]).hypot(a[1] - b[1])
            }
            (TargetSpace::HyperbolicPlane, TargetPoint::Plane(a), TargetPoint::Plane(b)) => {
                models::hyperbolic_distance(*a, *b)
            }
            (
                TargetSpace::Tree(_),
                TargetPoint::Tree { leg: la, t: ta },
                TargetPoint::Tree { leg: lb, t: tb },
            ) => {
                if la == lb || *ta == 0.0 || *tb == 0.0 {
                    if la == lb {
                        (ta - tb).abs()
                    } else {
                        ta + tb
                    }
                } else {
                    ta + tb
                }
            }
            (TargetSpace::Mesh(m), TargetPoint::MeshVertex(a), TargetPoint::MeshVertex(b)) => {
                m.dist[*a][*b]
            }
            _ => f64::NAN,
        }
    }

    /// Point at parameter fraction `frac` in [0,1] along the geodesic from
    /// `p` to `q` (at distance frac*d(p,q) from `p`).
    pub fn point_on_geodesic(&self, p: &TargetPoint, q: &TargetPoint, frac: f64) -> TargetPoint {
        let frac = frac.clamp(0.0, 1.0);
        match (self, p, q) {
            (TargetSpace::EuclideanPlane, TargetPoint::Plane(a), TargetPoint::Plane(b)) => {
                TargetPoint::Plane([
                    a[0] + frac * (b[0] - a[0]),
                    a[1] + frac * (b[1] - a[1]),
                ])
            }
            (TargetSpace::HyperbolicPlane, TargetPoint::Plane(a), TargetPoint::Plane(b)) => {
                let v = hyp_log(cx(*a), cx(*b));
                TargetPoint::Plane(uncx(hyp_exp(cx(*a), v * frac)))
            }
            (
                TargetSpace::Tree(_),
                TargetPoint::Tree { leg: la, t: ta },
                TargetPoint::Tree { leg: lb, t: tb },
            ) => {
                if la == lb {
                    TargetPoint::Tree { leg: *la, t: ta + frac * (tb - ta) }
                } else {
                    let s = frac * (ta + tb);
                    if s <= *ta {
                        TargetPoint::Tree { leg: *la, t: ta - s }
                    } else {
                        TargetPoint::Tree { leg: *lb, t: s - ta }
                    }
                }
            }
            (TargetSpace::Mesh(m), TargetPoint::MeshVertex(a), TargetPoint::MeshVertex(b)) => {
                let g = m.space.geodesic(*a, *b).expect("valid vertices");
                let pos = g.point_at(frac * g.total);
                // Snap to the nearer carrier vertex; mesh targets are
                // vertex-valued.
                let v = match pos {
                    crate::space::Position::Vertex(v) => v,
                    crate::space::Position::Edge { a, b, offset, weight } => {
                        if offset < weight - offset {
                            a
                        } else {
                            b
                        }
                    }
                };
                TargetPoint::MeshVertex(v)
            }
            _ => *p,
        }
    }

    /// Minimizer of the weighted sum of squared distances. Closed form for the
    /// plane and star trees, Karcher iteration for the Poincare disc, vertex
    /// enumeration for meshes.
    pub fn barycenter(&self, points: &[TargetPoint], weights: &[f64]) -> Result<TargetPoint> {
        if points.is_empty() {
            return Err(LabError::BadTarget("barycenter of empty point list".into()));
        }
        assert_eq!(points.len(), weights.len());
        let wsum: f64 = weights.iter().sum();
        if !(wsum > 0.0) || weights.iter().any(|&w| w < 0.0) {
            return Err(LabError::BadTarget(
                "barycenter weights must be nonnegative with positive sum".into(),
            ));
        }
        match self {
            TargetSpace::EuclideanPlane => {
                let mut acc = [0.0f64; 2];
                for (p, &w) in points.iter().zip(weights) {
                    let TargetPoint::Plane(a) = p else {
                        return Err(LabError::BadTarget("expected plane point".into()));
                    };
                    acc[0] += w * a[0];
                    acc[1] += w * a[1];
                }
                Ok(TargetPoint::Plane([acc[0] / wsum, acc[1] / wsum]))
            }
            TargetSpace::HyperbolicPlane => {
                let pts: Vec<Complex64> = points
                    .iter()
                    .map(|p| match p {
                        TargetPoint::Plane(a) => Ok(cx(*a)),
                        _ => Err(LabError::BadTarget("expected plane point".into())),
                    })
                    .collect::<Result<_>>()?;
                let mut x = pts[0];
                for _ in 0..500 {
                    let mut mean = Complex64::new(0.0, 0.0);
                    for (p, &w) in pts.iter().zip(weights) {
                        mean += hyp_log(x, *p) * w;
                    }
                    mean /= wsum;
                    if mean.norm() <= 1e-12 {
                        break;
                    }
                    x = hyp_exp(x, mean);
                }
                Ok(TargetPoint::Plane(uncx(x)))
            }
            TargetSpace::Tree(tr) => {
                // On each leg the objective is quadratic in the signed
                // coordinate; balance the gradient per leg and take the best.
                let mut decomposed = Vec::with_capacity(points.len());
                for p in points {
                    let TargetPoint::Tree { leg, t } = p else {
                        return Err(LabError::BadTarget("expected tree point".into()));
                    };
                    decomposed.push((*leg, *t));
                }
                let mut best = (f64::INFINITY, TargetPoint::Tree { leg: 0, t: 0.0 });
                for leg in 0..tr.legs.len() {
                    let mut num = 0.0;
                    for (&(l, t), &w) in decomposed.iter().zip(weights) {
                        num += if l == leg { w * t } else { -w * t };
                    }
                    let t_star = (num / wsum).clamp(0.0, tr.legs[leg]);
                    let cand = TargetPoint::Tree { leg, t: t_star };
                    let obj: f64 = points
                        .iter()
                        .zip(weights)
                        .map(|(p, &w)| w * self.distance(&cand, p).powi(2))
                        .sum();
                    if obj < best.0 - 1e-15 {
                        best = (obj, cand);
                    }
                }
                Ok(best.1)
            }
            TargetSpace::Mesh(m) => {
                let mut best = (f64::INFINITY, 0usize);
                for v in 0..m.space.vertex_count() {
                    let obj: f64 = points
                        .iter()
                        .zip(weights)
                        .map(|(p, &w)| {
                            let TargetPoint::MeshVertex(u) = p else { return f64::NAN };
                            w * m.dist[v][*u].powi(2)
                        })
                        .sum();
                    if obj < best.0 {
                        best = (obj, v);
                    }
                }
                Ok(TargetPoint::MeshVertex(best.1))
            }
        }
    }
}

/// Closed-form scalar rules on target spaces, used for convex pullbacks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum TargetFieldRule {
    /// a*x + b*y + c on the Euclidean plane.
    Affine { a: f64, b: f64, c: f64 },
    DistanceTo { point: TargetPoint },
    SqDistanceTo { point: TargetPoint },
    /// scale * |z|^2 on the plane; negative scale gives the concave control.
    NormSquared { scale: f64 },
}

impl TargetFieldRule {
    pub fn eval(&self, target: &TargetSpace, p: &TargetPoint) -> Result<f64> {
        match self {
            TargetFieldRule::Affine { a, b, c } => match (target, p) {
                (TargetSpace::EuclideanPlane, TargetPoint::Plane(q)) => {
                    Ok(a * q[0] + b * q[1] + c)
                }
                _ => Err(LabError::BadTarget(
                    "affine rules are defined on the Euclidean plane".into(),
                )),
            },
            TargetFieldRule::DistanceTo { point } => Ok(target.distance(point, p)),
            TargetFieldRule::SqDistanceTo { point } => Ok(target.distance(point, p).powi(2)),
            TargetFieldRule::NormSquared { scale } => match p {
                TargetPoint::Plane(q) => Ok(scale * (q[0] * q[0] + q[1] * q[1])),
                _ => Err(LabError::BadTarget(
                    "norm-squared rules are defined on plane targets".into(),
                )),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_midpoint() {
        let t = TargetSpace::EuclideanPlane;
        let p = TargetPoint::Plane([0.0, 0.0]);
        let q = TargetPoint::Plane([2.0, 0.0]);
        let b = t.barycenter(&[p, q], &[1.0, 1.0]).unwrap();
        assert_eq!(b, TargetPoint::Plane([1.0, 0.0]));
    }

    #[test]
    fn hyperbolic_symmetric_barycenter_is_origin() {
        let t = TargetSpace::HyperbolicPlane;
        let p = TargetPoint::Plane([0.5, 0.0]);
        let q = TargetPoint::Plane([-0.5, 0.0]);
        let b = t.barycenter(&[p, q], &[1.0, 1.0]).unwrap();
        let TargetPoint::Plane(z) = b else { panic!() };
        assert!(z[0].hypot(z[1]) < 1e-9, "got {z:?}");
    }

    #[test]
    fn tripod_barycenter_is_center() {
        let t = TargetSpace::tree(vec![2.0, 2.0, 2.0]).unwrap();
        let p = TargetPoint::Tree { leg: 0, t: 1.0 };
        let q = TargetPoint::Tree { leg: 1, t: 1.0 };
        let b = t.barycenter(&[p, q], &[1.0, 1.0]).unwrap();
        let TargetPoint::Tree { t: tb, .. } = b else { panic!() };
        assert!(tb.abs() < 1e-12, "expected center, got {b:?}");
    }

    #[test]
    fn geodesic_point_distances_check_out() {
        // point-on-geodesic must land at distance frac*d from p: 1e-10 for
        // the closed-form targets.
        let cases = vec![
            (
                TargetSpace::EuclideanPlane,
                TargetPoint::Plane([0.1, -0.2]),
                TargetPoint::Plane([0.6, 0.4]),
            ),
            (
                TargetSpace::HyperbolicPlane,
                TargetPoint::Plane([0.3, 0.1]),
                TargetPoint::Plane([-0.4, 0.5]),
            ),
            (
                TargetSpace::tree(vec![1.0, 2.0, 1.5]).unwrap(),
                TargetPoint::Tree { leg: 0, t: 0.8 },
                TargetPoint::Tree { leg: 2, t: 1.2 },
            ),
        ];
        for (t, p, q) in cases {
            let d = t.distance(&p, &q);
            for frac in [0.0, 0.25, 0.5, 0.9, 1.0] {
                let m = t.point_on_geodesic(&p, &q, frac);
                assert!(
                    (t.distance(&p, &m) - frac * d).abs() < 1e-10,
                    "frac {frac} on {t:?}"
                );
            }
        }
    }

    #[test]
    fn hyperbolic_distance_is_a_metric_sample() {
        let t = TargetSpace::HyperbolicPlane;
        let pts = [
            TargetPoint::Plane([0.0, 0.0]),
            TargetPoint::Plane([0.5, 0.0]),
            TargetPoint::Plane([0.1, -0.6]),
        ];
        for a in &pts {
            for b in &pts {
                for c in &pts {
                    assert!(
                        t.distance(a, b) + t.distance(b, c) >= t.distance(a, c) - 1e-12
                    );
                }
            }
        }
        assert!((t.distance(&pts[0], &pts[1]) - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn barycenter_rejects_empty_or_bad_weights() {
        let t = TargetSpace::EuclideanPlane;
        assert!(t.barycenter(&[], &[]).is_err());
        let p = TargetPoint::Plane([0.0, 0.0]);
        assert!(t.barycenter(&[p], &[0.0]).is_err());
    }

    #[test]
    fn target_rules_evaluate() {
        let t = TargetSpace::EuclideanPlane;
        let p = TargetPoint::Plane([0.3, 0.4]);
        let r = TargetFieldRule::NormSquared { scale: 1.0 };
        assert!((r.eval(&t, &p).unwrap() - 0.25).abs() < 1e-12);
        let d = TargetFieldRule::DistanceTo { point: TargetPoint::Plane([0.0, 0.0]) };
        assert!((d.eval(&t, &p).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn target_point_serde() {
        let p = TargetPoint::Plane([0.5, -0.25]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "[0.5,-0.25]");
        let back: TargetPoint = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        let tp = TargetPoint::Tree { leg: 1, t: 0.5 };
        let s = serde_json::to_string(&tp).unwrap();
        let back: TargetPoint = serde_json::from_str(&s).unwrap();
        assert_eq!(back, tp);
    }
}
