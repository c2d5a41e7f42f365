//! Small numeric helpers shared by the formula modules.

/// Largest argument covered by the factorial table.
pub const MAX_FACTORIAL: usize = 20;

const FACTORIALS: [f64; MAX_FACTORIAL + 1] = {
    let mut table = [1.0f64; MAX_FACTORIAL + 1];
    let mut i = 1;
    while i <= MAX_FACTORIAL {
        table[i] = table[i - 1] * i as f64;
        i += 1;
    }
    table
};

/// `n!` in double precision, `n <= 20`.
pub fn factorial(n: usize) -> f64 {
    FACTORIALS[n]
}

/// Binomial coefficient as a float. Returns 0 for `k > n`.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    if n <= MAX_FACTORIAL {
        return FACTORIALS[n] / (FACTORIALS[k] * FACTORIALS[n - k]);
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `base^exp` with the convention `0^0 = 1`.
pub fn powu(base: f64, exp: u32) -> f64 {
    base.powi(exp as i32)
}

/// `e^x - 1 - x` without cancellation for small `x`.
pub fn exp_m1_m_x(x: f64) -> f64 {
    if x.abs() < 0.1 {
        // Taylor series; 14 terms reach machine precision at |x| = 0.1
        let mut term = x * x / 2.0;
        let mut sum = term;
        for k in 3..=16 {
            term *= x / k as f64;
            sum += term;
        }
        sum
    } else {
        x.exp_m1() - x
    }
}

/// Rounds to 12 significant digits, the precision used in emitted files.
pub fn round_sig12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorial_table() {
        assert_eq!(factorial(0), 1.0);
        assert_eq!(factorial(5), 120.0);
        assert_eq!(factorial(20), 2_432_902_008_176_640_000.0);
    }

    #[test]
    fn exp_m1_m_x_is_accurate() {
        assert_eq!(exp_m1_m_x(0.0), 0.0);
        let x: f64 = 1e-6;
        assert!(
            (exp_m1_m_x(x) / (x * x / 2.0 + x.powi(3) / 6.0 + x.powi(4) / 24.0) - 1.0).abs()
                < 1e-15
        );
        for x in [-0.5f64, -0.099, 0.0999, 0.1, 2.0] {
            let direct = x.exp() - 1.0 - x;
            assert!((exp_m1_m_x(x) - direct).abs() < 1e-15, "{x}");
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(3, 5), 0.0);
        assert_eq!(binomial(0, 0), 1.0);
        assert_eq!(binomial(30, 3), 4060.0);
    }

    #[test]
    fn zero_to_zero_is_one() {
        assert_eq!(powu(0.0, 0), 1.0);
        assert_eq!(powu(0.0, 3), 0.0);
    }

    #[test]
    fn rounding_is_idempotent() {
        for x in [1.0 / 3.0, 2.0e-17, -7.123456789012345e8, 0.1] {
            let r = round_sig12(x);
            assert_eq!(round_sig12(r), r);
            assert!((r - x).abs() <= 1e-11 * x.abs());
        }
    }
}
