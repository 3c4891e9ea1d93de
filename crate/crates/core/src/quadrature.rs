//! Adaptive Gauss–Kronrod integration and Wynn's epsilon extrapolation.

use crate::scalar::Scalar;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_548_969_225,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

/// Integral estimate with an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: T,
}

fn gk21<T: Scalar>(f: &mut impl FnMut(T) -> T, a: T, b: T) -> Estimate<T> {
    let half = T::lit(0.5);
    let center = (a + b) * half;
    let radius = (b - a) * half;
    let fc = f(center);
    let mut kronrod = fc * T::lit(WGK[10]);
    let mut gauss = T::zero();
    for i in 0..10 {
        let dx = radius * T::lit(XGK[i]);
        let pair = f(center - dx) + f(center + dx);
        kronrod = kronrod + T::lit(WGK[i]) * pair;
        if i % 2 == 1 {
            gauss = gauss + T::lit(WG[i / 2]) * pair;
        }
    }
    Estimate {
        value: kronrod * radius,
        error: ((kronrod - gauss) * radius).abs(),
    }
}

/// Globally adaptive GK21 on `[a, b]` until the summed error estimate is at
/// most `tol` or `max_intervals` pieces have been used.
pub fn integrate<T: Scalar>(
    mut f: impl FnMut(T) -> T,
    a: T,
    b: T,
    tol: T,
    max_intervals: usize,
) -> Estimate<T> {
    let mut pieces: Vec<(T, T, Estimate<T>)> = vec![(a, b, gk21(&mut f, a, b))];
    loop {
        let total_err = pieces.iter().fold(T::zero(), |acc, p| acc + p.2.error);
        if total_err <= tol || pieces.len() >= max_intervals {
            break;
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |best, (i, p)| {
                if p.2.error > best.1 {
                    (i, p.2.error)
                } else {
                    best
                }
            });
        let (lo, hi, _) = pieces.swap_remove(worst);
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            // Interval cannot be split further at this precision.
            pieces.push((lo, hi, gk21(&mut f, lo, hi)));
            break;
        }
        pieces.push((lo, mid, gk21(&mut f, lo, mid)));
        pieces.push((mid, hi, gk21(&mut f, mid, hi)));
    }
    let mut value = T::zero();
    let mut error = T::zero();
    // Sum in left-to-right order so the result does not depend on the
    // refinement history.
    pieces.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal));
    for p in &pieces {
        value = value + p.2.value;
        error = error + p.2.error;
    }
    Estimate { value, error }
}

/// Wynn's epsilon algorithm applied to a sequence of partial sums.
///
/// Returns the highest even-column extrapolant and the gap to the previous
/// one as an error estimate.
pub fn wynn_epsilon<T: Scalar>(partial_sums: &[T]) -> Estimate<T> {
    fn extrapolate<T: Scalar>(s: &[T]) -> T {
        let n = s.len();
        let mut prev = vec![T::zero(); n + 1];
        let mut cur: Vec<T> = s.to_vec();
        let mut best = *s.last().expect("non-empty");
        let mut column = 0usize;
        while cur.len() > 1 {
            let mut next = Vec::with_capacity(cur.len() - 1);
            for k in 0..cur.len() - 1 {
                let diff = cur[k + 1] - cur[k];
                if diff.is_zero() {
                    // Sequence has converged exactly in this column.
                    return if column.is_multiple_of(2) { cur[k + 1] } else { best };
                }
                next.push(prev[k + 1] + T::one() / diff);
            }
            column += 1;
            if column.is_multiple_of(2) {
                best = *next.last().expect("non-empty");
            }
            prev = cur;
            cur = next;
        }
        best
    }
    match partial_sums.len() {
        0 => Estimate { value: T::zero(), error: T::infinity() },
        1 => Estimate { value: partial_sums[0], error: T::infinity() },
        n => {
            let value = extrapolate(partial_sums);
            let previous = extrapolate(&partial_sums[..n - 1]);
            let older = if n > 2 { extrapolate(&partial_sums[..n - 2]) } else { previous };
            Estimate {
                value,
                error: (value - previous).abs().max((value - older).abs()),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomial_exactly() {
        let e = integrate(|x: f64| x.powi(5) - 2.0 * x, 0.0, 2.0, 1e-12, 50);
        assert!((e.value - (64.0 / 6.0 - 4.0)).abs() < 1e-13);
    }

    #[test]
    fn integrates_peaked_function() {
        let e = integrate(|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10, 500);
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((e.value - exact).abs() < 1e-8, "{} vs {}", e.value, exact);
    }

    #[test]
    fn wynn_accelerates_alternating_series() {
        // ln 2 = 1 - 1/2 + 1/3 - ...
        let mut sums = Vec::new();
        let mut acc = 0.0f64;
        for k in 1..=20 {
            acc += if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
            sums.push(acc);
        }
        let e = wynn_epsilon(&sums);
        assert!((e.value - 2f64.ln()).abs() < 1e-12, "{}", e.value);
        assert!(e.error < 1e-9);
    }
}
