//! One-sided Clopper-Pearson bound and the binomial upper tail.
//!
//! `P[Bin(n, p) ≥ k] = I_p(k, n − k + 1)`, the regularized incomplete beta
//! function, evaluated by its continued fraction (modified Lentz).

use crate::{Error, Result};

/// Relative tolerance on the bisected bound.
const BISECT_TOL: f64 = 1e-13;

/// `P[Bin(n, p) ≥ k]`.
pub fn binom_upper_tail(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    reg_inc_beta(k as f64, (n - k + 1) as f64, p)
}

/// Lower `1 − alpha` confidence bound on the success probability after
/// observing `k` successes in `n` trials.
///
/// For `k > 0` the result `p̲` solves `P[Bin(n, p̲) ≥ k] = alpha`; for `k = 0`
/// it is 0 and for `k = n` the closed form `alpha^(1/n)`. The bisection
/// returns the lower end of its final bracket so the bound never overshoots.
pub fn binom_lower_bound(k: u64, n: u64, alpha: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("binomial bound needs n >= 1"));
    }
    if k > n {
        return Err(Error::domain(format!("successes {k} exceed trials {n}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if k == 0 {
        return Ok(0.0);
    }
    if k == n {
        return Ok((alpha.ln() / n as f64).exp());
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        if hi - lo <= BISECT_TOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if binom_upper_tail(k, n, mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Regularized incomplete beta `I_x(a, b)` for `0 < x < 1`.
fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() * beta_cf(a, b, x) / a).min(1.0)
    } else {
        (1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b).max(0.0)
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    let max_iter = 10_000 + (a.max(b).sqrt() * 20.0) as usize;
    for m in 1..=max_iter {
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
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
