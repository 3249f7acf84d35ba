//! Small numeric kernel: compensated summation, sample statistics,
//! interpolated percentiles, and the standard normal CDF.

/// Neumaier-compensated sum. Keeps accumulated rounding error below 1e-12
/// for up to ~1e6 well-scaled terms, so aggregate statistics do not depend
/// on accumulation order in any observable way.
pub fn sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = acc + v;
        if acc.abs() >= v.abs() {
            comp += (acc - t) + v;
        } else {
            comp += (v - t) + acc;
        }
        acc = t;
    }
    acc + comp
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(sum(values.iter().copied()) / values.len() as f64)
}

/// Sample standard deviation (n−1 denominator). `None` for fewer than two
/// values. Identical values give an exact 0 even when they are not
/// representable (e.g. 0.7), where the two-pass formula would leak a ~1e-16
/// residue.
pub fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    if values.windows(2).all(|w| w[0] == w[1]) {
        return Some(0.0);
    }
    let m = mean(values)?;
    let ss = sum(values.iter().map(|v| (v - m) * (v - m)));
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// Linear-interpolation percentile over an ascending slice: the value at
/// fractional position `(n-1) * q`, clamping `q` to [0, 1].
pub fn percentile_linear(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Standard normal CDF via `erfc`; absolute error well below 1e-10.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}
