//! Closed-form benchmark functions and their task-constant samplers.

use std::f64::consts::PI;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub const BRANIN_LO: [f64; 2] = [-5.0, 0.0];
pub const BRANIN_HI: [f64; 2] = [10.0, 15.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BraninConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r: f64,
    pub s: f64,
    pub t: f64,
}

impl BraninConstants {
    pub fn standard() -> Self {
        BraninConstants { a: 1.0, b: 5.1 / (4.0 * PI * PI), c: 5.0 / PI, r: 6.0, s: 10.0, t: 1.0 / (8.0 * PI) }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.a, self.b, self.c, self.r, self.s, self.t]
    }
}

pub const BRANIN_RANGES: [(f64, f64); 6] = [(0.5, 1.5), (0.1, 0.15), (1.0, 2.0), (5.0, 7.0), (8.0, 12.0), (0.03, 0.05)];

/// `a (x2 - b x1^2 + c x1 - r)^2 + s (1 - t) cos(x1) + s`.
pub fn branin(x1: f64, x2: f64, k: &BraninConstants) -> Result<f64> {
    if !(BRANIN_LO[0]..=BRANIN_HI[0]).contains(&x1) || !(BRANIN_LO[1]..=BRANIN_HI[1]).contains(&x2) {
        return Err(Error::Input(format!("({x1}, {x2}) lies outside [-5, 10] x [0, 15]")));
    }
    Ok(branin_unchecked(x1, x2, k))
}

pub(crate) fn branin_unchecked(x1: f64, x2: f64, k: &BraninConstants) -> f64 {
    let inner = x2 - k.b * x1 * x1 + k.c * x1 - k.r;
    k.a * inner * inner + k.s * (1.0 - k.t) * x1.cos() + k.s
}

pub fn sample_branin_task<R: Rng>(rng: &mut R) -> BraninConstants {
    let v: Vec<f64> = BRANIN_RANGES.iter().map(|(a, b)| rng.gen_range(*a..*b)).collect();
    BraninConstants { a: v[0], b: v[1], c: v[2], r: v[3], s: v[4], t: v[5] }
}

const HARTMANN_A: [[f64; 3]; 4] = [[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]];
const HARTMANN_P: [[f64; 3]; 4] = [
    [0.3689, 0.1170, 0.2673],
    [0.4699, 0.4387, 0.7470],
    [0.1091, 0.8732, 0.5547],
    [0.0381, 0.5743, 0.8828],
];

pub const HARTMANN_STANDARD: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
pub const HARTMANN_RANGES: [(f64, f64); 4] = [(1.0, 1.02), (1.18, 1.2), (2.8, 3.0), (3.2, 3.4)];

pub fn hartmann3(x: &[f64], a: &[f64; 4]) -> Result<f64> {
    if x.len() != 3 || x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Input(format!("{x:?} lies outside [0, 1]^3")));
    }
    Ok(hartmann3_unchecked(x, a))
}

pub(crate) fn hartmann3_unchecked(x: &[f64], a: &[f64; 4]) -> f64 {
    let mut f = 0.0;
    for i in 0..4 {
        let e: f64 = (0..3).map(|j| HARTMANN_A[i][j] * (x[j] - HARTMANN_P[i][j]).powi(2)).sum();
        f -= a[i] * (-e).exp();
    }
    f
}

pub fn sample_hartmann_task<R: Rng>(rng: &mut R) -> [f64; 4] {
    let mut a = [0.0; 4];
    for (v, (lo, hi)) in a.iter_mut().zip(HARTMANN_RANGES) {
        *v = rng.gen_range(lo..hi);
    }
    a
}

/// Target safety function of the one-dimensional illustration on [-1, 1].
pub fn toy_target(x: f64) -> f64 {
    (10.0 * x.powi(3) - 5.0 * x - 10.0).sin() + x * x / 3.0 - 0.5
}

/// Source counterpart of [`toy_target`].
pub fn toy_source(x: f64) -> f64 {
    (10.0 * x.powi(3) - 5.0 * x - 10.0).sin() + (x * x).sin() - 0.5
}
