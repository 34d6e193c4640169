//! Globally adaptive Gauss-Kronrod (G7, K15) quadrature for smooth
//! integrands on finite intervals.

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

// 15-point Kronrod abscissae on [-1, 1] (positive half; symmetric).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

// Kronrod weights matching XGK.
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

// 7-point Gauss weights; node j corresponds to XGK[2j + 1], plus the centre.
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error && self.lo == other.lo
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then(self.lo.total_cmp(&other.lo))
    }
}

/// Value and error estimate of an adaptive integration run.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error_estimate: f64,
    pub subdivisions: usize,
}

fn kronrod_segment<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Result<Segment> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut result_kronrod = WGK[7] * fc;
    let mut result_gauss = WG[3] * fc;
    for j in 0..7 {
        let offset = half * XGK[j];
        let fsum = f(center - offset) + f(center + offset);
        result_kronrod += WGK[j] * fsum;
        if j % 2 == 1 {
            result_gauss += WG[j / 2] * fsum;
        }
    }
    let value = result_kronrod * half;
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: format!("integrand on [{lo}, {hi}]"),
        });
    }
    let error = ((result_kronrod - result_gauss) * half).abs();
    Ok(Segment {
        lo,
        hi,
        value,
        error,
    })
}

/// Integrates `f` over `[lo, hi]`, bisecting the segment with the largest
/// error estimate until the accumulated error drops below
/// `max(abs_tol, rel_tol * |integral|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Quadrature> {
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::InvalidInput(
            "integration bounds must be finite with lo < hi".into(),
        ));
    }
    if rel_tol <= 0.0 && abs_tol <= 0.0 {
        return Err(Error::InvalidInput(
            "at least one of rel_tol and abs_tol must be positive".into(),
        ));
    }
    const MAX_SEGMENTS: usize = 4096;

    let mut heap = BinaryHeap::new();
    let first = kronrod_segment(&f, lo, hi)?;
    let mut total = first.value;
    let mut total_error = first.error;
    heap.push(first);

    while total_error > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_SEGMENTS {
            return Err(Error::QuadratureFailure {
                subdivisions: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // Interval is at floating-point resolution; keep its estimate.
            heap.push(worst);
            break;
        }
        let left = kronrod_segment(&f, worst.lo, mid)?;
        let right = kronrod_segment(&f, mid, worst.hi)?;
        total += left.value + right.value - worst.value;
        total_error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }

    // Final reduction in a fixed order (by left endpoint) so the result does
    // not depend on heap internals.
    let mut segments: Vec<Segment> = heap.into_vec();
    segments.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut value = 0.0;
    let mut compensation = 0.0;
    let mut error = 0.0;
    for seg in &segments {
        // Neumaier summation
        let t = value + seg.value;
        if value.abs() >= seg.value.abs() {
            compensation += (value - t) + seg.value;
        } else {
            compensation += (seg.value - t) + value;
        }
        value = t;
        error += seg.error;
    }
    Ok(Quadrature {
        value: value + compensation,
        error_estimate: error,
        subdivisions: segments.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, panels: usize) -> f64 {
        let h = (hi - lo) / panels as f64;
        let mut acc = f(lo) + f(hi);
        for k in 1..panels {
            let x = lo + k as f64 * h;
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        acc * h / 3.0
    }

    #[test]
    fn integrates_polynomial_exactly() {
        // K15 is exact for polynomials of degree <= 22.
        let q = integrate(|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, 1e-12, 0.0).unwrap();
        // antiderivative: x^4/4 - x^2 + x evaluated on [-1, 3]
        let exact = (81.0 / 4.0 - 9.0 + 3.0) - (0.25 - 1.0 - 1.0);
        assert!((q.value - exact).abs() < 1e-12);
    }

    #[test]
    fn gaussian_density_integrates_to_one() {
        let q = integrate(
            |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            -10.0,
            10.0,
            1e-12,
            0.0,
        )
        .unwrap();
        assert!((q.value - 1.0).abs() < 1e-12, "got {}", q.value);
    }

    #[test]
    fn matches_independent_simpson_oracle() {
        let f = |x: f64| (x.sin() + 1.5) * (-0.3 * x * x).exp();
        let adaptive = integrate(f, -6.0, 7.0, 1e-12, 0.0).unwrap().value;
        let oracle = simpson(f, -6.0, 7.0, 200_000);
        assert!((adaptive - oracle).abs() < 1e-9, "{adaptive} vs {oracle}");
    }

    #[test]
    fn needle_requires_subdivision() {
        // A narrow spike forces the adaptive refinement to work.
        let f = |x: f64| (-(x * x) / (2.0 * 1e-4)).exp();
        let q = integrate(f, -5.0, 5.0, 1e-10, 0.0).unwrap();
        let exact = (2.0 * std::f64::consts::PI * 1e-4).sqrt();
        assert!(q.subdivisions > 4);
        assert!(((q.value - exact) / exact).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_finite_integrand() {
        let err = integrate(|x| 1.0 / x, -1.0, 1.0, 1e-10, 0.0);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(integrate(|x| x, 1.0, 1.0, 1e-10, 0.0).is_err());
        assert!(integrate(|x| x, f64::NEG_INFINITY, 1.0, 1e-10, 0.0).is_err());
    }
}
