//! Smooth closed curves, Nyström meshes and ε-periodic inclusion arrays.
//!
//! Curves are 2π-periodic parametrizations oriented counter-clockwise, so the
//! normal `(y′, −x′)/|x′|` points out of the enclosed region. A mesh samples
//! each component at `t_j = 2πj/N` with trapezoid weights `2π|x′(t_j)|/N`.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];

fn default_scale() -> f64 {
    1.0
}
fn default_kite_a() -> f64 {
    0.65
}
fn default_kite_b() -> f64 {
    1.5
}

/// Shape parameters of a closed curve, as written in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    Circle {
        center: Vec2,
        radius: f64,
    },
    /// Semi-axes `a`, `b`, rotated by `angle` radians.
    Ellipse {
        center: Vec2,
        a: f64,
        b: f64,
        #[serde(default)]
        angle: f64,
    },
    /// `scale·(cos t + a cos 2t − a, b sin t + c sin 2t) + center`.
    Kite {
        center: Vec2,
        #[serde(default = "default_scale")]
        scale: f64,
        #[serde(default = "default_kite_a")]
        a: f64,
        #[serde(default = "default_kite_b")]
        b: f64,
        #[serde(default)]
        c: f64,
    },
    /// Trigonometric polynomial; entry `k-1` multiplies `cos kt` or `sin kt`.
    Trig {
        center: Vec2,
        x_cos: Vec<f64>,
        x_sin: Vec<f64>,
        y_cos: Vec<f64>,
        y_sin: Vec<f64>,
    },
    /// Even-exponent superellipse approximating a square with rounded corners.
    SmoothedSquare {
        center: Vec2,
        half_width: f64,
        corner_radius: f64,
    },
}

/// A validated curve: `scale·shape(t) + shift`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedCurve {
    pub spec: CurveSpec,
    pub scale: f64,
    pub shift: Vec2,
    exponent: i32,
}

/// Superellipse exponent whose corner curvature radius is closest to `rho`.
fn superellipse_exponent(half_width: f64, rho: f64) -> i32 {
    let radius = |p: f64| 2f64.sqrt() * half_width * 2f64.powf(-1.0 / p) / (p - 1.0);
    let mut best = (4, f64::INFINITY);
    for p in (4..=400).step_by(2) {
        let d = (radius(p as f64) - rho).abs();
        if d < best.1 {
            best = (p, d);
        }
    }
    best.0
}

pub fn make_curve(spec: CurveSpec) -> Result<ClosedCurve> {
    let bad = |m: &str| Err(Error::Invalid(m.to_string()));
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    let mut exponent = 0;
    match &spec {
        CurveSpec::Circle { center, radius } => {
            if !(finite(center) && *radius > 0.0 && radius.is_finite()) {
                return bad("circle radius must be positive");
            }
        }
        CurveSpec::Ellipse { center, a, b, angle } => {
            if !(finite(center) && *a > 0.0 && *b > 0.0 && angle.is_finite()) {
                return bad("ellipse semi-axes must be positive");
            }
        }
        CurveSpec::Kite { center, scale, a, b, c } => {
            if !(finite(center) && *scale > 0.0 && finite(&[*a, *b, *c])) {
                return bad("kite scale must be positive");
            }
        }
        CurveSpec::Trig { center, x_cos, x_sin, y_cos, y_sin } => {
            if !(finite(center) && finite(x_cos) && finite(x_sin) && finite(y_cos) && finite(y_sin)) {
                return bad("non-finite trigonometric coefficient");
            }
        }
        CurveSpec::SmoothedSquare { center, half_width, corner_radius } => {
            if !(finite(center) && *half_width > 0.0 && *corner_radius > 0.0 && *corner_radius < *half_width) {
                return bad("smoothed square needs 0 < corner_radius < half_width");
            }
            exponent = superellipse_exponent(*half_width, *corner_radius);
        }
    }
    let curve = ClosedCurve { spec, scale: 1.0, shift: [0.0, 0.0], exponent };
    curve.validate()?;
    Ok(curve)
}

impl ClosedCurve {
    /// Position, first and second derivative of the unscaled shape.
    fn shape(&self, t: f64) -> [Vec2; 3] {
        let (s, c) = t.sin_cos();
        match &self.spec {
            CurveSpec::Circle { center, radius: r } => [
                [center[0] + r * c, center[1] + r * s],
                [-r * s, r * c],
                [-r * c, -r * s],
            ],
            CurveSpec::Ellipse { center, a, b, angle } => {
                let (sa, ca) = angle.sin_cos();
                let rot = |v: Vec2| [ca * v[0] - sa * v[1], sa * v[0] + ca * v[1]];
                let p = rot([a * c, b * s]);
                [[center[0] + p[0], center[1] + p[1]], rot([-a * s, b * c]), rot([-a * c, -b * s])]
            }
            CurveSpec::Kite { center, scale: k, a, b, c: cc } => {
                let (s2, c2) = (2.0 * t).sin_cos();
                [
                    [center[0] + k * (c + a * c2 - a), center[1] + k * (b * s + cc * s2)],
                    [k * (-s - 2.0 * a * s2), k * (b * c + 2.0 * cc * c2)],
                    [k * (-c - 4.0 * a * c2), k * (-b * s - 4.0 * cc * s2)],
                ]
            }
            CurveSpec::Trig { center, x_cos, x_sin, y_cos, y_sin } => {
                let mut out = [[center[0], center[1]], [0.0; 2], [0.0; 2]];
                let mut add = |coef: &[f64], dim: usize, is_cos: bool| {
                    for (i, &v) in coef.iter().enumerate() {
                        let k = (i + 1) as f64;
                        let (sk, ck) = (k * t).sin_cos();
                        if is_cos {
                            out[0][dim] += v * ck;
                            out[1][dim] -= v * k * sk;
                            out[2][dim] -= v * k * k * ck;
                        } else {
                            out[0][dim] += v * sk;
                            out[1][dim] += v * k * ck;
                            out[2][dim] -= v * k * k * sk;
                        }
                    }
                };
                add(x_cos, 0, true);
                add(x_sin, 0, false);
                add(y_cos, 1, true);
                add(y_sin, 1, false);
                out
            }
            CurveSpec::SmoothedSquare { center, half_width: h, .. } => {
                let p = self.exponent;
                let pf = p as f64;
                let f = c.powi(p) + s.powi(p);
                let f1 = pf * (-c.powi(p - 1) * s + s.powi(p - 1) * c);
                let f2 = pf
                    * ((pf - 1.0) * c.powi(p - 2) * s * s - c.powi(p) + (pf - 1.0) * s.powi(p - 2) * c * c
                        - s.powi(p));
                let r = h * f.powf(-1.0 / pf);
                let r1 = -(h / pf) * f.powf(-1.0 / pf - 1.0) * f1;
                let r2 = -(h / pf)
                    * ((-1.0 / pf - 1.0) * f.powf(-1.0 / pf - 2.0) * f1 * f1 + f.powf(-1.0 / pf - 1.0) * f2);
                [
                    [center[0] + r * c, center[1] + r * s],
                    [r1 * c - r * s, r1 * s + r * c],
                    [r2 * c - 2.0 * r1 * s - r * c, r2 * s + 2.0 * r1 * c - r * s],
                ]
            }
        }
    }

    pub fn point(&self, t: f64) -> Vec2 {
        let p = self.shape(t)[0];
        [self.scale * p[0] + self.shift[0], self.scale * p[1] + self.shift[1]]
    }

    pub fn tangent(&self, t: f64) -> Vec2 {
        let d = self.shape(t)[1];
        [self.scale * d[0], self.scale * d[1]]
    }

    pub fn second_derivative(&self, t: f64) -> Vec2 {
        let d = self.shape(t)[2];
        [self.scale * d[0], self.scale * d[1]]
    }

    pub fn speed(&self, t: f64) -> f64 {
        let d = self.tangent(t);
        d[0].hypot(d[1])
    }

    pub fn normal(&self, t: f64) -> Vec2 {
        let d = self.tangent(t);
        let v = d[0].hypot(d[1]);
        [d[1] / v, -d[0] / v]
    }

    /// The curve mapped by `x ↦ factor·x + offset`.
    pub fn transformed(&self, factor: f64, offset: Vec2) -> ClosedCurve {
        ClosedCurve {
            spec: self.spec.clone(),
            scale: factor * self.scale,
            shift: [factor * self.shift[0] + offset[0], factor * self.shift[1] + offset[1]],
            exponent: self.exponent,
        }
    }

    /// Arclength by a fine trapezoid rule (spectrally accurate).
    pub fn length(&self) -> f64 {
        let m = 4096;
        (0..m).map(|j| self.speed(2.0 * PI * j as f64 / m as f64)).sum::<f64>() * 2.0 * PI / m as f64
    }

    pub fn signed_area(&self) -> f64 {
        let m = 4096;
        let mut a = 0.0;
        for j in 0..m {
            let t = 2.0 * PI * j as f64 / m as f64;
            let (p, d) = (self.point(t), self.tangent(t));
            a += p[0] * d[1] - p[1] * d[0];
        }
        0.5 * a * 2.0 * PI / m as f64
    }

    pub fn polygon(&self, m: usize) -> Vec<Vec2> {
        (0..m).map(|j| self.point(2.0 * PI * j as f64 / m as f64)).collect()
    }

    /// Strict interior test.
    pub fn contains(&self, q: Vec2) -> bool {
        let local = [(q[0] - self.shift[0]) / self.scale, (q[1] - self.shift[1]) / self.scale];
        match &self.spec {
            CurveSpec::Circle { center, radius } => {
                (local[0] - center[0]).hypot(local[1] - center[1]) < *radius
            }
            CurveSpec::Ellipse { center, a, b, angle } => {
                let (sa, ca) = angle.sin_cos();
                let (dx, dy) = (local[0] - center[0], local[1] - center[1]);
                let (u, v) = (ca * dx + sa * dy, -sa * dx + ca * dy);
                (u / a).powi(2) + (v / b).powi(2) < 1.0
            }
            CurveSpec::SmoothedSquare { center, half_width, .. } => {
                let (dx, dy) = (local[0] - center[0], local[1] - center[1]);
                let p = self.exponent;
                (dx / half_width).powi(p) + (dy / half_width).powi(p) < 1.0
            }
            _ => winding_number(&self.polygon(8192), q) != 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let m = 1024;
        let pts = self.polygon(m);
        for j in 0..m {
            let t = 2.0 * PI * j as f64 / m as f64;
            if !(self.speed(t) > 0.0) {
                return Err(Error::Invalid(format!("degenerate parametrization at t = {t:.4}")));
            }
        }
        for i in 0..m {
            let (a0, a1) = (pts[i], pts[(i + 1) % m]);
            for j in i + 2..m {
                if i == 0 && j == m - 1 {
                    continue;
                }
                let (b0, b1) = (pts[j], pts[(j + 1) % m]);
                if segments_intersect(a0, a1, b0, b1) {
                    return Err(Error::SelfIntersection(format!(
                        "{:?}: segments near t = {:.4} and t = {:.4} cross",
                        self.spec,
                        2.0 * PI * i as f64 / m as f64,
                        2.0 * PI * j as f64 / m as f64
                    )));
                }
            }
        }
        if self.signed_area() <= 0.0 {
            return Err(Error::Invalid(format!("{:?}: curve must be counter-clockwise", self.spec)));
        }
        Ok(())
    }
}

fn cross(o: Vec2, a: Vec2, b: Vec2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: Vec2, b: Vec2, c: Vec2, d: f64| {
        d == 0.0 && c[0] >= a[0].min(b[0]) && c[0] <= a[0].max(b[0]) && c[1] >= a[1].min(b[1]) && c[1] <= a[1].max(b[1])
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

/// Point-in-polygon test by winding number.
pub fn polygon_contains(poly: &[Vec2], q: Vec2) -> bool {
    winding_number(poly, q) != 0
}

fn winding_number(poly: &[Vec2], q: Vec2) -> i32 {
    let mut w = 0;
    let m = poly.len();
    for i in 0..m {
        let (a, b) = (poly[i], poly[(i + 1) % m]);
        if a[1] <= q[1] {
            if b[1] > q[1] && cross(a, b, q) > 0.0 {
                w += 1;
            }
        } else if b[1] <= q[1] && cross(a, b, q) < 0.0 {
            w -= 1;
        }
    }
    w
}

/// One sampled curve of a mesh.
#[derive(Clone, Debug)]
pub struct Component {
    pub n: usize,
    pub offset: usize,
    pub t: Vec<f64>,
    pub nodes: Vec<Vec2>,
    pub tangents: Vec<Vec2>,
    pub second: Vec<Vec2>,
    pub normals: Vec<Vec2>,
    pub speeds: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Component {
    pub fn length(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Arclength-weighted centroid of the nodes.
    pub fn centroid(&self) -> Vec2 {
        let l = self.length();
        let mut c = [0.0; 2];
        for (p, w) in self.nodes.iter().zip(&self.weights) {
            c[0] += w * p[0];
            c[1] += w * p[1];
        }
        [c[0] / l, c[1] / l]
    }

    /// Largest distance between consecutive nodes.
    pub fn spacing(&self) -> f64 {
        (0..self.n)
            .map(|j| {
                let (a, b) = (self.nodes[j], self.nodes[(j + 1) % self.n]);
                (a[0] - b[0]).hypot(a[1] - b[1])
            })
            .fold(0.0, f64::max)
    }
}

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

/// Nodes, normals and weights of one or more closed curves.
#[derive(Clone, Debug)]
pub struct BoundaryMesh {
    pub id: u64,
    pub components: Vec<Component>,
}

pub fn mesh_curve(curve: &ClosedCurve, n: usize) -> Result<BoundaryMesh> {
    Ok(BoundaryMesh { id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed), components: vec![sample(curve, n, 0)?] })
}

fn sample(curve: &ClosedCurve, n: usize, offset: usize) -> Result<Component> {
    if !n.is_multiple_of(2) || n < 16 {
        return Err(Error::Invalid(format!("mesh size must be even and at least 16, got {n}")));
    }
    let t: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
    let nodes = t.iter().map(|&s| curve.point(s)).collect();
    let tangents: Vec<Vec2> = t.iter().map(|&s| curve.tangent(s)).collect();
    let second = t.iter().map(|&s| curve.second_derivative(s)).collect();
    let speeds: Vec<f64> = tangents.iter().map(|d| d[0].hypot(d[1])).collect();
    let normals = tangents.iter().zip(&speeds).map(|(d, v)| [d[1] / v, -d[0] / v]).collect();
    let weights = speeds.iter().map(|v| 2.0 * PI * v / n as f64).collect();
    Ok(Component { n, offset, t, nodes, tangents, second, normals, speeds, weights })
}

impl BoundaryMesh {
    /// Mesh with one component per curve, all with `n` nodes.
    pub fn from_curves(curves: &[ClosedCurve], n: usize) -> Result<Self> {
        let mut components = Vec::with_capacity(curves.len());
        let mut offset = 0;
        for c in curves {
            components.push(sample(c, n, offset)?);
            offset += n;
        }
        Ok(BoundaryMesh { id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed), components })
    }

    pub fn num_nodes(&self) -> usize {
        self.components.iter().map(|c| c.n).sum()
    }

    pub fn dof(&self) -> usize {
        2 * self.num_nodes()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Vec2> {
        self.components.iter().flat_map(|c| c.nodes.iter())
    }

    pub fn normals(&self) -> impl Iterator<Item = &Vec2> {
        self.components.iter().flat_map(|c| c.normals.iter())
    }

    pub fn weights(&self) -> impl Iterator<Item = &f64> {
        self.components.iter().flat_map(|c| c.weights.iter())
    }

    /// Quadrature weight of every degree of freedom (each node twice).
    pub fn dof_weights(&self) -> Vec<f64> {
        self.weights().flat_map(|&w| [w, w]).collect()
    }

    /// Single-component mesh holding a copy of component `c`.
    pub fn component_mesh(&self, c: usize) -> BoundaryMesh {
        let mut comp = self.components[c].clone();
        comp.offset = 0;
        BoundaryMesh { id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed), components: vec![comp] }
    }

    pub fn component_of_node(&self, node: usize) -> usize {
        self.components.iter().position(|c| node < c.offset + c.n).expect("node index out of range")
    }

    /// Distance from `p` to the closest component, relative to that component's node spacing,
    /// returned as `(distance, spacing)`.
    pub fn nearest(&self, p: Vec2) -> (f64, f64) {
        let mut best = (f64::INFINITY, 1.0);
        for c in &self.components {
            let d = c.nodes.iter().map(|q| (q[0] - p[0]).hypot(q[1] - p[1])).fold(f64::INFINITY, f64::min);
            let h = c.spacing();
            if d / h < best.0 / best.1 {
                best = (d, h);
            }
        }
        best
    }
}

/// Periodic array `D_ε = ⋃ ε(n + ω)` inside an outer curve.
#[derive(Clone, Debug)]
pub struct InclusionArray {
    pub outer: ClosedCurve,
    pub omega: ClosedCurve,
    pub eps: f64,
    pub cells: Vec<[i64; 2]>,
    pub inclusions: BoundaryMesh,
    pub outer_mesh: BoundaryMesh,
}

const CELL_MARGIN: f64 = 1e-9;

fn inside_with_margin(curve: &ClosedCurve, p: Vec2, margin: f64) -> bool {
    [[0.0, 0.0], [margin, 0.0], [-margin, 0.0], [0.0, margin], [0.0, -margin]]
        .iter()
        .all(|d| curve.contains([p[0] + d[0], p[1] + d[1]]))
}

/// Lattice cells whose closed ε-cell lies inside `outer` (corners and edge midpoints tested).
pub fn lattice_cells(outer: &ClosedCurve, eps: f64) -> Vec<[i64; 2]> {
    let poly = outer.polygon(4096);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &poly {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let range = |k: usize| ((lo[k] / eps).floor() as i64 - 1)..=((hi[k] / eps).ceil() as i64 + 1);
    let mut cells = Vec::new();
    for n1 in range(0) {
        for n2 in range(1) {
            let probes = [-0.5, 0.0, 0.5];
            let ok = probes.iter().all(|&a| {
                probes.iter().all(|&b| {
                    (a == 0.0 && b == 0.0)
                        || inside_with_margin(outer, [eps * (n1 as f64 + a), eps * (n2 as f64 + b)], CELL_MARGIN)
                })
            });
            if ok {
                cells.push([n1, n2]);
            }
        }
    }
    cells
}

pub fn build_array(outer: &ClosedCurve, omega: &ClosedCurve, eps: f64, n_incl: usize, n_outer: usize) -> Result<InclusionArray> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Invalid(format!("period must lie in (0, 1], got {eps}")));
    }
    let gap = omega
        .polygon(2048)
        .iter()
        .map(|p| (0.5 - p[0].abs()).min(0.5 - p[1].abs()))
        .fold(f64::INFINITY, f64::min);
    if !(gap > 0.0) {
        return Err(Error::Invalid("inclusion must lie inside the unit cell (-1/2,1/2)^2".into()));
    }
    let cells = lattice_cells(outer, eps);
    if cells.is_empty() {
        return Err(Error::NoCells);
    }
    let curves: Vec<ClosedCurve> =
        cells.iter().map(|n| omega.transformed(eps, [eps * n[0] as f64, eps * n[1] as f64])).collect();
    let inclusions = BoundaryMesh::from_curves(&curves, n_incl)?;
    let outer_mesh = mesh_curve(outer, n_outer)?;
    Ok(InclusionArray { outer: outer.clone(), omega: omega.clone(), eps, cells, inclusions, outer_mesh })
}
