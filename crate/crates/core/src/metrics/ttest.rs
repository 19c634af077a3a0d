//! Matched-pair Student t-test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value_two_tailed: f64,
}

/// Lanczos approximation (g = 7, nine coefficients).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta, evaluated with the modified
/// Lentz method.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-tailed p-value of Student's t with `df` degrees of freedom.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Test the per-item differences `a - b` against a zero mean.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("paired lists differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Config(format!("a paired t-test needs at least 2 pairs, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Err(Error::Degenerate("paired differences have zero variance".into()));
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let df = n - 1;
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value_two_tailed: student_t_two_tailed(t, df as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use statrs::function::beta::beta_reg as statrs_beta_reg;
    use statrs::function::gamma::ln_gamma as statrs_ln_gamma;

    #[test]
    fn fixture_differences() {
        let a = [2.0, 1.0, 3.0, 2.0, 4.0];
        let r = paired_t_test(&a, &[0.0; 5]).unwrap();
        // mean 2.4, sd sqrt(1.3), t = 2.4 / sqrt(1.3 / 5)
        assert!((r.t_statistic - 2.4 / (1.3f64 / 5.0).sqrt()).abs() < 1e-12);
        assert!((r.t_statistic - 4.707).abs() < 1e-3);
        assert_eq!(r.degrees_of_freedom, 4);
        assert!((r.p_value_two_tailed - 0.00925).abs() < 1e-4);
    }

    #[test]
    fn zero_mean_difference() {
        let r = paired_t_test(&[1.0, -1.0, 1.0, -1.0], &[0.0; 4]).unwrap();
        assert_eq!(r.t_statistic, 0.0);
        assert_eq!(r.p_value_two_tailed, 1.0);
    }

    #[test]
    fn error_cases() {
        assert!(matches!(paired_t_test(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::Degenerate(_))));
        assert!(matches!(paired_t_test(&[1.0], &[0.0]), Err(Error::Config(_))));
        assert!(matches!(paired_t_test(&[1.0, 2.0], &[0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn ln_gamma_matches_oracle() {
        for &x in &[0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 10.0, 55.5, 170.0] {
            assert!((ln_gamma(x) - statrs_ln_gamma(x)).abs() < 1e-12 * statrs_ln_gamma(x).abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn incomplete_beta_matches_oracle(a in 0.1f64..50.0, b in 0.1f64..50.0, x in 0.0f64..1.0) {
            prop_assert!((beta_reg(a, b, x) - statrs_beta_reg(a, b, x)).abs() < 1e-10);
        }

        #[test]
        fn p_value_matches_student_cdf(t in -20.0f64..20.0, df in 1usize..200) {
            let dist = StudentsT::new(0.0, 1.0, df as f64).unwrap();
            let expected = 2.0 * dist.cdf(-t.abs());
            prop_assert!((student_t_two_tailed(t, df as f64) - expected).abs() < 1e-10);
        }

        #[test]
        fn antisymmetric_under_swap(v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..40)) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            if let (Ok(ab), Ok(ba)) = (paired_t_test(&a, &b), paired_t_test(&b, &a)) {
                prop_assert!((ab.t_statistic + ba.t_statistic).abs() < 1e-12 * ab.t_statistic.abs().max(1.0));
                prop_assert!((ab.p_value_two_tailed - ba.p_value_two_tailed).abs() < 1e-12);
            }
        }

        #[test]
        fn p_decreases_with_abs_t(t in 0.0f64..10.0, dt in 0.01f64..5.0, df in 1usize..50) {
            prop_assert!(student_t_two_tailed(t + dt, df as f64) <= student_t_two_tailed(t, df as f64));
        }
    }
}
