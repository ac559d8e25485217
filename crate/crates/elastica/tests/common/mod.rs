//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

pub mod quadrature;

use std::f64::consts::PI;

use elastica_np::geometry::{build_array, make_curve, mesh_curve, BoundaryMesh, ClosedCurve, CurveSpec, InclusionArray, Vec2};
use elastica_np::kernels::{stokes_traction, traction, Family, KernelSpec, LamePair};
use elastica_np::potentials::Layer;
use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn background() -> LamePair {
    LamePair { lambda: 1.0, mu: 1.0 }
}

pub fn circle(center: Vec2, r: f64) -> ClosedCurve {
    make_curve(CurveSpec::Circle { center, radius: r }).unwrap()
}

pub fn ellipse() -> ClosedCurve {
    make_curve(CurveSpec::Ellipse { center: [0.1, -0.05], a: 0.9, b: 0.55, angle: 0.3 }).unwrap()
}

pub fn kite() -> ClosedCurve {
    make_curve(CurveSpec::Kite { center: [0.2, 0.0], scale: 0.6, a: 0.65, b: 1.5, c: 0.0 }).unwrap()
}

pub fn outer_disk() -> ClosedCurve {
    circle([0.0, 0.0], 2.0)
}

/// Ω = disk r=2, ω = disk r=0.25, at period `eps`.
pub fn standard_array(eps: f64, n_incl: usize, n_outer: usize) -> InclusionArray {
    build_array(&outer_disk(), &circle([0.0, 0.0], 0.25), eps, n_incl, n_outer).unwrap()
}

pub fn single_mesh(curve: &ClosedCurve, n: usize) -> BoundaryMesh {
    mesh_curve(curve, n).unwrap()
}

/// Smooth density on component `c` as a function of the parameter.
pub fn smooth_density(c: usize, t: f64) -> [f64; 2] {
    let k = c as f64;
    [
        (t + 0.3 * k).cos() + 0.4 * (2.0 * t).sin() + 0.2 * (3.0 * t + k).cos(),
        0.7 * (t - 0.2 * k).sin() - 0.3 * (2.0 * t + 0.5).cos() + 0.1 * k,
    ]
}

pub fn sample_density(mesh: &BoundaryMesh) -> Vec<f64> {
    let mut out = Vec::with_capacity(mesh.dof());
    for (c, comp) in mesh.components.iter().enumerate() {
        for &t in &comp.t {
            out.extend(smooth_density(c, t));
        }
    }
    out
}

/// Quadratic extrapolation to `h = 0` through three samples.
pub fn richardson(h: [f64; 3], v: [f64; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        let mut l = 1.0;
        for j in 0..3 {
            if i != j {
                l *= (0.0 - h[j]) / (h[i] - h[j]);
            }
        }
        s += l * v[i];
    }
    s
}

fn kernel_traction(family: &Family, x: Vec2, z: Vec2, n: Vec2) -> [[f64; 2]; 2] {
    match family {
        Family::Lame(p) => traction(x, z, n, *p).unwrap(),
        Family::Stokes { .. } => stokes_traction(x, z, n).unwrap(),
    }
}

/// Free-space traction (normal `n`) at an off-boundary point `x` of the single
/// layer with density `density(c, t)` on the curves: adaptive quadrature on
/// component `own` (graded around parameter `t0`), trapezoid on the rest.
pub fn free_traction_near(
    family: &Family,
    curves: &[ClosedCurve],
    mesh: &BoundaryMesh,
    density: &dyn Fn(usize, f64) -> [f64; 2],
    own: usize,
    x: Vec2,
    n: Vec2,
    t0: f64,
) -> Vec2 {
    let curve = &curves[own];
    let f = |s: f64| {
        let z = curve.point(s);
        let t = kernel_traction(family, x, z, n);
        let p = density(own, s);
        let v = curve.speed(s);
        [v * (t[0][0] * p[0] + t[0][1] * p[1]), v * (t[1][0] * p[0] + t[1][1] * p[1])]
    };
    let mut out = quadrature::integrate_periodic_peaked(f, t0, 1e-12);
    for (c, comp) in mesh.components.iter().enumerate() {
        if c == own {
            continue;
        }
        for j in 0..comp.n {
            let t = kernel_traction(family, x, comp.nodes[j], n);
            let p = density(c, comp.t[j]);
            for a in 0..2 {
                out[a] += comp.weights[j] * (t[a][0] * p[0] + t[a][1] * p[1]);
            }
        }
    }
    out
}

/// Exterior (`sign = +1`) or interior (`sign = −1`) free-space traction limit
/// at parameter `t` of component `own`, by extrapolation from `x ± h n`.
pub fn extrapolated_traction(
    family: &Family,
    curves: &[ClosedCurve],
    mesh: &BoundaryMesh,
    density: &dyn Fn(usize, f64) -> [f64; 2],
    own: usize,
    t: f64,
    sign: f64,
) -> Vec2 {
    let hs = [1e-2, 1e-3, 1e-4];
    let x = curves[own].point(t);
    let n = curves[own].normal(t);
    let vals: Vec<Vec2> = hs
        .iter()
        .map(|h| free_traction_near(family, curves, mesh, density, own, [x[0] + sign * h * n[0], x[1] + sign * h * n[1]], n, t))
        .collect();
    [richardson(hs, [vals[0][0], vals[1][0], vals[2][0]]), richardson(hs, [vals[0][1], vals[1][1], vals[2][1]])]
}

/// Free-space traction of a single layer at an off-boundary point by the
/// trapezoid rule on the equispaced parameter samples of each curve.
pub fn dense_traction(family: &Family, curves: &[ClosedCurve], samples: &[Vec<[f64; 2]>], x: Vec2, n: Vec2) -> Vec2 {
    let mut out = [0.0; 2];
    for (curve, dens) in curves.iter().zip(samples) {
        let m = dens.len();
        for (j, p) in dens.iter().enumerate() {
            let t = 2.0 * PI * j as f64 / m as f64;
            let k = kernel_traction(family, x, curve.point(t), n);
            let w = curve.speed(t) * 2.0 * PI / m as f64;
            for a in 0..2 {
                out[a] += w * (k[a][0] * p[0] + k[a][1] * p[1]);
            }
        }
    }
    out
}

/// Number of lattice cells `n` with all of `ε(n + [−½,½]²)` corners and edge midpoints strictly inside the disk.
pub fn lattice_count_disk(radius: f64, eps: f64) -> usize {
    let m = (radius / eps).ceil() as i64 + 2;
    let mut count = 0;
    for i in -m..=m {
        for j in -m..=m {
            let mut ok = true;
            for a in [-0.5, 0.0, 0.5] {
                for b in [-0.5, 0.0, 0.5] {
                    let (x, y) = (eps * (i as f64 + a), eps * (j as f64 + b));
                    if (x * x + y * y).sqrt() >= radius - 1e-9 {
                        ok = false;
                    }
                }
            }
            count += ok as usize;
        }
    }
    count
}

/// Central-difference gradient of a vector field (`g[a][b] = ∂u_a/∂x_b`).
pub fn fd_gradient(u: &dyn Fn(Vec2) -> Vec2, x: Vec2, h: f64) -> [[f64; 2]; 2] {
    let mut g = [[0.0; 2]; 2];
    for b in 0..2 {
        let mut p = x;
        let mut m = x;
        p[b] += h;
        m[b] -= h;
        let (up, um) = (u(p), u(m));
        for a in 0..2 {
            g[a][b] = (up[a] - um[a]) / (2.0 * h);
        }
    }
    g
}

/// Fourth-order finite-difference Hessian entries `∂²u_a/∂x_b∂x_c`.
pub fn fd_hessian(u: &dyn Fn(Vec2) -> Vec2, x: Vec2, h: f64) -> [[[f64; 2]; 2]; 2] {
    let mut out = [[[0.0; 2]; 2]; 2];
    let at = |dx: f64, dy: f64| u([x[0] + dx, x[1] + dy]);
    let u0 = at(0.0, 0.0);
    for a in 0..2 {
        let d2 = |dir: usize| {
            let (ex, ey) = if dir == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
            let f = |k: f64| at(k * h * ex, k * h * ey)[a];
            (-f(2.0) + 16.0 * f(1.0) - 30.0 * u0[a] + 16.0 * f(-1.0) - f(-2.0)) / (12.0 * h * h)
        };
        out[a][0][0] = d2(0);
        out[a][1][1] = d2(1);
        let mixed = (at(h, h)[a] - at(h, -h)[a] - at(-h, h)[a] + at(-h, -h)[a]) / (4.0 * h * h);
        out[a][0][1] = mixed;
        out[a][1][0] = mixed;
    }
    out
}

/// `μΔu + (λ+μ)∇div u` by finite differences.
pub fn lame_residual(u: &dyn Fn(Vec2) -> Vec2, x: Vec2, pair: LamePair, h: f64) -> Vec2 {
    let d = fd_hessian(u, x, h);
    let mut r = [0.0; 2];
    for a in 0..2 {
        let lap = d[a][0][0] + d[a][1][1];
        let graddiv = d[0][0][a] + d[1][1][a];
        r[a] = pair.mu * lap + (pair.lambda + pair.mu) * graddiv;
    }
    r
}

/// Stress traction `λ div u N + 2μ 𝔻(u) N` from a gradient.
pub fn stress_traction(g: [[f64; 2]; 2], n: Vec2, pair: LamePair) -> Vec2 {
    let div = g[0][0] + g[1][1];
    let mut t = [0.0; 2];
    for a in 0..2 {
        t[a] = pair.lambda * div * n[a];
        for b in 0..2 {
            t[a] += pair.mu * (g[a][b] + g[b][a]) * n[b];
        }
    }
    t
}

pub fn random_point(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec2 {
    [r.random_range(lo..hi), r.random_range(lo..hi)]
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Curves of the inclusions of an array, in mesh component order.
pub fn array_curves(a: &InclusionArray) -> Vec<ClosedCurve> {
    a.cells.iter().map(|n| a.omega.transformed(a.eps, [a.eps * n[0] as f64, a.eps * n[1] as f64])).collect()
}

/// Trigonometric interpolant through nodal values on `n` equispaced parameters (n even).
pub fn trig_interp(values: &[f64], t: f64) -> f64 {
    let n = values.len();
    let mut s = 0.0;
    for (j, v) in values.iter().enumerate() {
        let d = 0.5 * (t - 2.0 * PI * j as f64 / n as f64);
        let sd = d.sin();
        if sd.abs() < 1e-14 {
            return *v;
        }
        s += v * (n as f64 * d).sin() * d.cos() / (n as f64 * sd);
    }
    s
}

/// Per-component trigonometric interpolant of an interleaved nodal field.
pub fn interpolant(mesh: &BoundaryMesh, values: &[f64]) -> impl Fn(usize, f64) -> [f64; 2] {
    let parts: Vec<[Vec<f64>; 2]> = mesh
        .components
        .iter()
        .map(|c| {
            let r = 2 * c.offset;
            [(0..c.n).map(|j| values[r + 2 * j]).collect(), (0..c.n).map(|j| values[r + 2 * j + 1]).collect()]
        })
        .collect();
    move |c: usize, t: f64| [trig_interp(&parts[c][0], t), trig_interp(&parts[c][1], t)]
}

/// Weighted L² inner product of interleaved nodal fields on a mesh.
pub fn l2_dot(mesh: &BoundaryMesh, a: &[f64], b: &[f64]) -> f64 {
    mesh.dof_weights().iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * x * y).sum()
}

fn mat_apply(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum()).collect()
}

/// Largest relative mismatch between the NP prediction `(±½ + K*)φ` and the
/// extrapolated off-boundary traction at a few nodes of every component.
pub fn jump_mismatch(spec: &KernelSpec, curves: &[ClosedCurve], mesh: &BoundaryMesh, probes: usize) -> f64 {
    let layer = Layer::new(mesh, spec).unwrap();
    let k = layer.np().unwrap();
    let phi = sample_density(mesh);
    let kphi = mat_apply(&k, &phi);
    let corr = match &spec.correction {
        Some(op) => {
            let nodes: Vec<_> = mesh.nodes().copied().collect();
            let normals: Vec<_> = mesh.normals().copied().collect();
            let sc = op.solve_sources(&nodes).unwrap();
            let w = mesh.dof_weights();
            let wphi: Vec<f64> = phi.iter().zip(&w).map(|(a, b)| a * b).collect();
            Some(mat_apply(&op.traction(&sc, &nodes, &normals).unwrap(), &wphi))
        }
        None => None,
    };
    let scale = norm(&kphi) / (mesh.dof() as f64).sqrt() + 0.5 * norm(&phi) / (mesh.dof() as f64).sqrt();
    let mut worst = 0.0f64;
    for (c, comp) in mesh.components.iter().enumerate() {
        for p in 0..probes {
            let j = (p * comp.n) / probes + 1;
            let node = comp.offset + j;
            for sign in [1.0, -1.0] {
                let mut t = extrapolated_traction(&spec.family, curves, mesh, &smooth_density, c, comp.t[j], sign);
                if let Some(cr) = &corr {
                    t[0] += cr[2 * node];
                    t[1] += cr[2 * node + 1];
                }
                for a in 0..2 {
                    let pred = sign * 0.5 * phi[2 * node + a] + kphi[2 * node + a];
                    worst = worst.max((pred - t[a]).abs() / scale);
                }
            }
        }
    }
    worst
}
