//! One-dimensional root bracketing and minimization.

/// Bisection on a monotone predicate. `lo` must satisfy `above(lo) == true`
/// and `hi` must satisfy `above(hi) == false`; the bracket is narrowed until
/// the midpoint is no longer representable between the ends.
///
/// Returns the final `(lo, hi)` pair.
pub fn bisect(mut lo: f64, mut hi: f64, mut above: impl FnMut(f64) -> bool) -> (f64, f64) {
    for _ in 0..2100 {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            break;
        }
        if above(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`.
/// Stops when the bracket is narrower than `xtol`. Returns `(x, f(x))`.
pub fn golden_section(mut a: f64, mut b: f64, xtol: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > xtol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        if c >= d {
            break;
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// True when the samples decrease (weakly) to a single minimum and then
/// increase (weakly). `rel_tol` absorbs rounding noise on flat stretches.
pub fn is_unimodal(values: &[f64], rel_tol: f64) -> bool {
    let Some(argmin) = argmin(values) else {
        return true;
    };
    let slack = |a: f64, b: f64| rel_tol * a.abs().max(b.abs());
    let descending = values[..=argmin].windows(2).all(|w| w[1] <= w[0] + slack(w[0], w[1]));
    let ascending = values[argmin..].windows(2).all(|w| w[1] + slack(w[0], w[1]) >= w[0]);
    descending && ascending
}

/// Index of the smallest value, lowest index on ties. `None` for empty input.
pub fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(j) if values[j] <= v => {}
            _ => best = Some(i),
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt_two() {
        let (lo, hi) = bisect(0.0, 2.0, |x| x * x < 2.0);
        assert!((lo - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!(hi - lo <= 2.0 * f64::EPSILON);
    }

    #[test]
    fn bisect_works_with_reversed_orientation() {
        // Predicate true at the upper end.
        let (lo, _) = bisect(10.0, 0.0, |x| x > 3.0);
        assert!((lo - 3.0).abs() < 1e-14);
    }

    #[test]
    fn golden_section_on_quadratic() {
        let (x, fx) = golden_section(-3.0, 5.0, 1e-12, |x| (x - 1.25).powi(2) + 0.5);
        assert!((x - 1.25).abs() < 1e-7);
        assert!((fx - 0.5).abs() < 1e-14);
    }

    #[test]
    fn golden_section_boundary_minimum() {
        let (x, _) = golden_section(0.0, 1.0, 1e-12, |x| x);
        assert!(x < 1e-11);
    }

    #[test]
    fn unimodality_check() {
        assert!(is_unimodal(&[5.0, 3.0, 1.0, 2.0, 4.0], 0.0));
        assert!(is_unimodal(&[1.0, 2.0, 3.0], 0.0));
        assert!(!is_unimodal(&[3.0, 1.0, 2.0, 0.5, 4.0], 0.0));
        assert!(is_unimodal(&[], 0.0));
        assert_eq!(argmin(&[2.0, 1.0, 1.0]), Some(1));
    }
}
