//! Halton low-discrepancy sequences (regular-value sampling) and a golden
//! section maximizer used by the dual-norm line searches.

const PRIMES: [u64; 6] = [2, 3, 5, 7, 11, 13];

pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Point i of the d-dimensional Halton sequence in [0,1)^d, d <= 6.
pub fn halton_point(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len());
    (0..dim).map(|k| halton(index + 1, PRIMES[k])).collect()
}

/// Golden-section search for the maximum of a unimodal function on [a, b].
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if (b - a).abs() < tol {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_fills_unit_interval() {
        let pts: Vec<f64> = (0..64).map(|i| halton(i + 1, 2)).collect();
        assert!(pts.iter().all(|&x| (0.0..1.0).contains(&x)));
        // first few base-2 values are the van der Corput sequence
        assert!((pts[0] - 0.5).abs() < 1e-15);
        assert!((pts[1] - 0.25).abs() < 1e-15);
        assert!((pts[2] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn golden_finds_parabola_max() {
        let (x, fx) = golden_max(|t| 1.0 - (t - 0.3) * (t - 0.3), 0.0, 1.0, 1e-10, 200);
        assert!((x - 0.3).abs() < 1e-8);
        assert!((fx - 1.0).abs() < 1e-12);
    }
}
