//! Adaptive Gauss–Kronrod (7/15) quadrature for vector-valued integrands.

#![allow(dead_code)]

use std::cell::Cell;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn finite<const K: usize>(mut v: [f64; K]) -> [f64; K] {
    for x in v.iter_mut() {
        if !x.is_finite() {
            *x = 0.0;
        }
    }
    v
}

fn rule<const K: usize, F: Fn(f64) -> [f64; K]>(f: &F, a: f64, b: f64) -> ([f64; K], f64) {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let f = |x: f64| finite(f(x));
    let mut kr = [0.0; K];
    let mut ga = [0.0; K];
    let fc = f(c);
    for k in 0..K {
        kr[k] = WGK[7] * fc[k];
        ga[k] = WG[3] * fc[k];
    }
    for i in 0..7 {
        let (f1, f2) = (f(c - h * XGK[i]), f(c + h * XGK[i]));
        for k in 0..K {
            kr[k] += WGK[i] * (f1[k] + f2[k]);
            if i % 2 == 1 {
                ga[k] += WG[i / 2] * (f1[k] + f2[k]);
            }
        }
    }
    let mut err = 0.0f64;
    for k in 0..K {
        kr[k] *= h;
        err = err.max((kr[k] - h * ga[k]).abs());
    }
    (kr, err)
}

fn recurse<const K: usize, F: Fn(f64) -> [f64; K]>(
    f: &F,
    a: f64,
    b: f64,
    whole: ([f64; K], f64),
    tol: f64,
    depth: u32,
    budget: &Cell<usize>,
) -> [f64; K] {
    let scale: f64 = whole.0.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if whole.1 <= tol || whole.1 <= 64.0 * f64::EPSILON * scale || depth == 0 || budget.get() == 0 {
        return whole.0;
    }
    budget.set(budget.get() - 1);
    let m = 0.5 * (a + b);
    let (l, r) = (rule(f, a, m), rule(f, m, b));
    let lv = recurse(f, a, m, l, 0.5 * tol, depth - 1, budget);
    let rv = recurse(f, m, b, r, 0.5 * tol, depth - 1, budget);
    let mut out = [0.0; K];
    for k in 0..K {
        out[k] = lv[k] + rv[k];
    }
    out
}

/// ∫_a^b f with absolute error target `tol` per component (bisection stops
/// after a fixed evaluation budget).
pub fn integrate<const K: usize, F: Fn(f64) -> [f64; K]>(f: F, a: f64, b: f64, tol: f64) -> [f64; K] {
    let pieces = 16;
    let budget = Cell::new(200_000);
    let mut out = [0.0; K];
    for p in 0..pieces {
        let lo = a + (b - a) * p as f64 / pieces as f64;
        let hi = a + (b - a) * (p + 1) as f64 / pieces as f64;
        let v = recurse(&f, lo, hi, rule(&f, lo, hi), tol / pieces as f64, 48, &budget);
        for k in 0..K {
            out[k] += v[k];
        }
    }
    out
}

/// ∫ over one period `[c − π, c + π]` for integrands sharply peaked at `c`,
/// using geometrically graded breakpoints around the peak.
pub fn integrate_periodic_peaked<const K: usize, F: Fn(f64) -> [f64; K]>(f: F, c: f64, tol: f64) -> [f64; K] {
    let mut cuts = vec![0.0];
    let mut d = 1e-7;
    while d < std::f64::consts::PI {
        cuts.push(d);
        d *= 2.0;
    }
    cuts.push(std::f64::consts::PI);
    let budget = Cell::new(200_000);
    let mut pieces = vec![];
    for w in cuts.windows(2) {
        for (lo, hi) in [(c + w[0], c + w[1]), (c - w[1], c - w[0])] {
            pieces.push((lo, hi, rule(&f, lo, hi)));
        }
    }
    let mass: f64 = pieces.iter().map(|p| p.2 .0.iter().map(|v| v.abs()).fold(0.0, f64::max)).sum();
    let per = (tol / pieces.len() as f64).max(1e-15 * mass);
    let mut out = [0.0; K];
    for (lo, hi, whole) in pieces {
        let v = recurse(&f, lo, hi, whole, per, 40, &budget);
        for k in 0..K {
            out[k] += v[k];
        }
    }
    out
}
