//! Globally adaptive Gauss–Kronrod (7, 15) integration.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

// Kronrod abscissae on [0, 1]; odd indices are the Gauss-7 nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Integration tolerances and work limit.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-11,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Piece {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = kronrod.abs();
    let mut fv = [(0.0, 0.0); 7];
    for (j, &x) in XGK.iter().take(7).enumerate() {
        let dx = half * x;
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
        fv[j] = (f1, f2);
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv[j].0 - mean).abs() + (fv[j].1 - mean).abs());
    }
    let value = kronrod * half;
    let asc = asc * half.abs();
    let abs_sum = abs_sum * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if asc != 0.0 && error != 0.0 {
        error = asc * (200.0 * error / asc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * abs_sum;
    if abs_sum > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) && floor > error {
        error = floor;
    }
    Piece { a, b, value, error }
}

impl Quadrature {
    /// Integrates `f` over `[breaks[0], breaks[last]]`, starting from the
    /// partition given by `breaks` (sorted, at least two points).
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, breaks: &[f64]) -> Result<f64> {
        if breaks.len() < 2 {
            return Err(Error::Quadrature("need at least two breakpoints".into()));
        }
        let mut heap = BinaryHeap::with_capacity(breaks.len() * 4);
        for w in breaks.windows(2) {
            if w[1] > w[0] {
                heap.push(gk15(&f, w[0], w[1]));
            }
        }
        let mut count = heap.len();
        loop {
            let (value, error) = heap
                .iter()
                .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
            if !value.is_finite() {
                return Err(Error::Quadrature(format!("non-finite integral {value}")));
            }
            if error <= self.abs_tol.max(self.rel_tol * value.abs()) {
                return Ok(value);
            }
            if count >= self.max_intervals {
                return Err(Error::Quadrature(format!(
                    "error estimate {error:.3e} above tolerance after {count} intervals"
                )));
            }
            let worst = heap.pop().expect("non-empty partition");
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                return Err(Error::Quadrature("interval cannot be bisected further".into()));
            }
            heap.push(gk15(&f, worst.a, mid));
            heap.push(gk15(&f, mid, worst.b));
            count += 1;
        }
    }
}

/// Evenly spaced breakpoints covering `[a, b]` with pieces no wider than `width`.
pub fn uniform_breaks(a: f64, b: f64, width: f64) -> Vec<f64> {
    let pieces = (((b - a) / width).ceil() as usize).max(1);
    (0..=pieces)
        .map(|i| a + (b - a) * i as f64 / pieces as f64)
        .collect()
}
