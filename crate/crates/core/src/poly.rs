//! Small dense polynomial helpers. Coefficients are stored in ascending
//! powers of a local coordinate.

/// Horner evaluation of `c[0] + c[1] s + c[2] s^2 + ...`.
#[inline]
pub fn eval(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * s + ck)
}

/// Coefficients of `u -> c(u + delta)`.
pub fn shift(c: &[f64], delta: f64) -> Vec<f64> {
    if delta == 0.0 {
        return c.to_vec();
    }
    let n = c.len();
    let mut out = vec![0.0; n];
    // binomial expansion, row by row of Pascal's triangle
    for (k, &ck) in c.iter().enumerate() {
        let mut binom = 1.0;
        let mut dpow = 1.0;
        for j in (0..=k).rev() {
            out[j] += ck * binom * dpow;
            binom = binom * j as f64 / (k - j + 1) as f64;
            dpow *= delta;
        }
    }
    out
}

/// Antiderivative vanishing at `s = 0`.
pub fn antiderivative(c: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(c.len() + 1);
    out.push(0.0);
    out.extend(c.iter().enumerate().map(|(k, &ck)| ck / (k + 1) as f64));
    out
}

/// Definite integral over `[0, h]`.
pub fn integral(c: &[f64], h: f64) -> f64 {
    eval(&antiderivative(c), h)
}

/// Coefficients of `s -> c(h - s)`.
pub fn reflect(c: &[f64], h: f64) -> Vec<f64> {
    let mut out = shift(c, h);
    for (k, v) in out.iter_mut().enumerate() {
        if k % 2 == 1 {
            *v = -*v;
        }
    }
    out
}

/// `a + scale * b`, padding the shorter operand with zeros.
pub fn axpy(a: &[f64], scale: f64, b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|k| a.get(k).copied().unwrap_or(0.0) + scale * b.get(k).copied().unwrap_or(0.0))
        .collect()
}

/// Drops trailing zero coefficients, keeping at least one entry.
pub fn trim(mut c: Vec<f64>) -> Vec<f64> {
    while c.len() > 1 && c.last() == Some(&0.0) {
        c.pop();
    }
    if c.is_empty() {
        c.push(0.0);
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_matches_direct_evaluation() {
        let c = [1.0, -2.0, 0.5, 3.0];
        let d = 0.37;
        let shifted = shift(&c, d);
        for &u in &[-1.0, 0.0, 0.2, 1.5] {
            assert!((eval(&shifted, u) - eval(&c, u + d)).abs() < 1e-12);
        }
    }

    #[test]
    fn reflect_matches_direct_evaluation() {
        let c = [0.3, 1.0, -4.0];
        let h = 0.25;
        let r = reflect(&c, h);
        for &s in &[0.0, 0.1, 0.25] {
            assert!((eval(&r, s) - eval(&c, h - s)).abs() < 1e-14);
        }
    }

    #[test]
    fn antiderivative_of_quadratic() {
        // 1 + 2s + 3s^2 integrates to s + s^2 + s^3
        let a = antiderivative(&[1.0, 2.0, 3.0]);
        assert_eq!(a, vec![0.0, 1.0, 1.0, 1.0]);
        assert!((integral(&[1.0, 2.0, 3.0], 2.0) - 14.0).abs() < 1e-14);
    }
}
