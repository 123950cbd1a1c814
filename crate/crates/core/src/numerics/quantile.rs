use crate::error::{Error, Result};

/// Sample quantile with linear interpolation between order statistics: with
/// `h = (n - 1) p`, the result is `x[floor(h)] + (h - floor(h)) (x[floor(h)+1] - x[floor(h)])`
/// on the sorted values.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("quantile of an empty vector"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("quantile input contains NaN"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, p))
}

/// As [`quantile`] on already sorted, non-empty input.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_examples() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5).unwrap(), 3.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.25).unwrap(), 1.75);
        assert_eq!(quantile(&[4.0, 1.0, 3.0], 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&[4.0, 1.0, 3.0], 1.0).unwrap(), 4.0);
        assert!(quantile(&[], 0.5).is_err());
        assert!(quantile(&[1.0], 1.5).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_p(v in prop::collection::vec(-1e3f64..1e3, 1..40), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantile(&v, lo).unwrap() <= quantile(&v, hi).unwrap() + 1e-12);
        }

        #[test]
        fn affine_equivariant(v in prop::collection::vec(-1e3f64..1e3, 1..40), p in 0.0f64..1.0, s in 0.1f64..10.0, t in -100.0f64..100.0) {
            let mapped: Vec<f64> = v.iter().map(|x| s * x + t).collect();
            let lhs = quantile(&mapped, p).unwrap();
            let rhs = s * quantile(&v, p).unwrap() + t;
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
    }
}
