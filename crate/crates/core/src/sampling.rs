//! Low-discrepancy sequences used for sampling domains and phase space.

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Radical inverse of `index` in the `dim`-th prime base (Halton sequence).
pub fn halton(index: usize, dim: usize) -> f64 {
    let base = PRIMES[dim % PRIMES.len()];
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut k = index as u64;
    let mut r = 0.0;
    while k > 0 {
        r += f * (k % base) as f64;
        k /= base;
        f *= inv;
    }
    r
}

/// Additive recurrence with the plastic number (the "R2" sequence); its
/// consecutive terms are evenly spread over the unit square.
pub fn r2(index: usize) -> (f64, f64) {
    const G: f64 = 1.324_717_957_244_746;
    let a1 = 1.0 / G;
    let a2 = 1.0 / (G * G);
    let n = index as f64;
    ((0.5 + a1 * n).fract(), (0.5 + a2 * n).fract())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_base_two_prefix() {
        let v: Vec<f64> = (1..5).map(|k| halton(k, 0)).collect();
        assert_eq!(v, vec![0.5, 0.25, 0.75, 0.125]);
        assert!((halton(1, 1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn r2_stays_in_unit_square() {
        for k in 0..1000 {
            let (a, b) = r2(k);
            assert!((0.0..1.0).contains(&a) && (0.0..1.0).contains(&b));
        }
    }
}
