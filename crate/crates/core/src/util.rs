/// Monotone u64 key for finite floats; `-0.0` and `0.0` share a key.
pub(crate) fn order_key(v: f64) -> u64 {
    let v = if v == 0.0 { 0.0 } else { v };
    let bits = v.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

/// A point strictly above `lo` and at most `hi` (for `lo < hi`).
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m > lo {
        m
    } else {
        hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_key_is_monotone() {
        let xs = [-2.0, -0.5, -0.0, 0.0, 1e-300, 0.25, 1.0, 7.5];
        for w in xs.windows(2) {
            assert!(order_key(w[0]) <= order_key(w[1]));
        }
        assert_eq!(order_key(-0.0), order_key(0.0));
    }

    #[test]
    fn midpoint_is_strictly_above_low() {
        let lo = 0.3f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        assert_eq!(midpoint(lo, hi), hi);
        assert_eq!(midpoint(0.2, 0.4), 0.30000000000000004);
    }
}
