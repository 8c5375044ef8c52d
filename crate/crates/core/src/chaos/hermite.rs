//! One-dimensional probabilists' Hermite polynomials and the combinatorial
//! weights that appear in their products.

use std::collections::BTreeMap;
use std::sync::OnceLock;

/// Largest argument for which `n!` is exact in `f64` via integer arithmetic.
const EXACT_FACTORIAL_MAX: usize = 20;
const FACTORIAL_TABLE_LEN: usize = 171;

fn factorial_table() -> &'static [f64; FACTORIAL_TABLE_LEN] {
    static TABLE: OnceLock<[f64; FACTORIAL_TABLE_LEN]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [1.0; FACTORIAL_TABLE_LEN];
        let mut exact: u64 = 1;
        for n in 1..FACTORIAL_TABLE_LEN {
            if n <= EXACT_FACTORIAL_MAX {
                exact *= n as u64;
                t[n] = exact as f64;
            } else {
                t[n] = t[n - 1] * n as f64;
            }
        }
        t
    })
}

/// `n!` as a float. Exact up to `20!`, correctly rounded products above.
///
/// Overflows to infinity past `170!`.
pub fn factorial(n: usize) -> f64 {
    if n < FACTORIAL_TABLE_LEN {
        factorial_table()[n]
    } else {
        f64::INFINITY
    }
}

/// Binomial coefficient `C(n, k)` in floating point, zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    // below 2^53 binomials are integers; snap off accumulated rounding
    if n <= 60 {
        acc.round()
    } else {
        acc
    }
}

/// `χ(i, j, k) = i! j! / (k! (i-k)! (j-k)!)`, the weight of `He_{i+j-2k}`
/// in the expansion of `He_i He_j`. Zero when `k > min(i, j)`.
pub fn chi(i: usize, j: usize, k: usize) -> f64 {
    if k > i.min(j) {
        return 0.0;
    }
    // i!/((i-k)! k!) * j!/(j-k)!
    binomial(i, k) * factorial(j) / factorial(j - k)
}

/// `He_n(x)` by the three-term recurrence.
pub fn hermite_eval(n: usize, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut prev, mut cur) = (1.0, x);
            for k in 1..n {
                let next = x * cur - k as f64 * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Values `He_0(x), ..., He_n(x)`.
pub fn hermite_table(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    for k in 1..n {
        let next = x * out[k] - k as f64 * out[k - 1];
        out.push(next);
    }
    out
}

/// Linearization of `He_i He_j`: degree `i + j - 2k` maps to `χ(i, j, k)`.
pub fn product_expansion(i: usize, j: usize) -> BTreeMap<usize, f64> {
    (0..=i.min(j))
        .map(|k| (i + j - 2 * k, chi(i, j, k)))
        .collect()
}

/// Coefficients `c_m` with `He_n(x + s) = Σ_m c_m He_m(x)`, i.e.
/// `c_m = C(n, m) s^{n-m}`.
pub fn shift_expansion(n: usize, s: f64) -> Vec<f64> {
    (0..=n)
        .map(|m| binomial(n, m) * s.powi((n - m) as i32))
        .collect()
}

/// `E[He_a He_b He_c]` for a standard normal argument.
///
/// Nonzero only when `a + b + c` is even and each degree is at most the
/// sum of the other two; then it equals `χ(a, b, k) c!` with
/// `k = (a + b - c) / 2`.
pub fn triple_product_1d(a: usize, b: usize, c: usize) -> f64 {
    let s = a + b;
    if c > s || !(s - c).is_multiple_of(2) {
        return 0.0;
    }
    let k = (s - c) / 2;
    if k > a.min(b) {
        return 0.0;
    }
    chi(a, b, k) * factorial(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_degree_values() {
        assert_eq!(hermite_eval(0, 3.7), 1.0);
        assert_eq!(hermite_eval(1, 2.0), 2.0);
        assert_eq!(hermite_eval(2, 2.0), 3.0);
        // He_3 = x^3 - 3x, He_4 = x^4 - 6x^2 + 3
        let x = 1.3_f64;
        assert!((hermite_eval(3, x) - (x.powi(3) - 3.0 * x)).abs() < 1e-14);
        assert!((hermite_eval(4, x) - (x.powi(4) - 6.0 * x * x + 3.0)).abs() < 1e-13);
    }

    #[test]
    fn table_matches_pointwise() {
        let t = hermite_table(9, -0.7);
        for (n, v) in t.iter().enumerate() {
            assert!((v - hermite_eval(n, -0.7)).abs() < 1e-12);
        }
        assert_eq!(hermite_table(0, 5.0), vec![1.0]);
    }

    #[test]
    fn product_expansion_examples() {
        let e = product_expansion(1, 1);
        assert_eq!(e.len(), 2);
        assert_eq!(e[&2], 1.0);
        assert_eq!(e[&0], 1.0);
        let e = product_expansion(0, 5);
        assert_eq!(e.len(), 1);
        assert_eq!(e[&5], 1.0);
        let e = product_expansion(2, 2);
        assert_eq!((e[&4], e[&2], e[&0]), (1.0, 4.0, 2.0));
    }

    #[test]
    fn product_expansion_reconstructs_products() {
        for i in 0..7 {
            for j in 0..7 {
                for &x in &[-2.0, 0.0, 1.5] {
                    let lhs = hermite_eval(i, x) * hermite_eval(j, x);
                    let rhs: f64 = product_expansion(i, j)
                        .iter()
                        .map(|(&d, &c)| c * hermite_eval(d, x))
                        .sum();
                    let scale = lhs.abs().max(1.0);
                    assert!((lhs - rhs).abs() <= 1e-10 * scale, "{i} {j} {x}");
                }
            }
        }
    }

    #[test]
    fn shift_identity() {
        for n in 0..=8 {
            for &(x, s) in &[(0.3, 0.5), (-1.2, 2.0), (2.5, -0.75)] {
                let lhs = hermite_eval(n, x + s);
                let rhs: f64 = shift_expansion(n, s)
                    .iter()
                    .enumerate()
                    .map(|(m, c)| c * hermite_eval(m, x))
                    .sum();
                assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
            }
        }
    }

    #[test]
    fn generating_function_partial_sums() {
        for &s in &[-0.5f64, -0.2, 0.1, 0.5] {
            for &x in &[-2.0, -0.5, 0.0, 1.0, 2.0] {
                let t = hermite_table(20, x);
                let partial: f64 = t
                    .iter()
                    .enumerate()
                    .map(|(i, h)| s.powi(i as i32) * h / factorial(i))
                    .sum();
                let exact = (s * x - 0.5 * s * s).exp();
                assert!((partial - exact).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn factorials_and_binomials() {
        assert_eq!(factorial(0), 1.0);
        assert_eq!(factorial(5), 120.0);
        assert_eq!(factorial(20), 2_432_902_008_176_640_000.0);
        assert!((factorial(25) / 1.551_121_004_333_098_6e25 - 1.0).abs() < 1e-14);
        assert_eq!(binomial(13, 3), 286.0);
        assert_eq!(binomial(3, 5), 0.0);
        assert_eq!(chi(2, 2, 1), 4.0);
        assert_eq!(chi(2, 2, 2), 2.0);
        assert_eq!(chi(1, 3, 2), 0.0);
    }

    #[test]
    fn triple_product_examples() {
        assert_eq!(triple_product_1d(0, 0, 0), 1.0);
        assert_eq!(triple_product_1d(2, 2, 0), 2.0);
        assert_eq!(triple_product_1d(2, 2, 2), 8.0);
        assert_eq!(triple_product_1d(1, 1, 1), 0.0);
        assert_eq!(triple_product_1d(1, 1, 4), 0.0);
    }
}

#[cfg(test)]
mod props {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn product_expansion_holds_pointwise(i in 0usize..8, j in 0usize..8, x in -3.0f64..3.0) {
            let lhs = hermite_eval(i, x) * hermite_eval(j, x);
            let rhs: f64 = product_expansion(i, j).iter().map(|(&k, c)| c * hermite_eval(k, x)).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
