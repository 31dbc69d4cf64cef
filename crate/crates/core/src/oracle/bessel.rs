//! Modified Bessel functions of the first kind, in the two forms the sphere
//! oracle needs: ln E[exp(κu₁)] for u uniform on a sphere, and I_{ν+1}/I_ν.

/// Above this argument the large-κ expansion replaces the power series.
const KAPPA_ASYMPTOTIC: f64 = 2e4;

const LN_RESCALE: f64 = 280.0 * std::f64::consts::LN_10;

/// ln Σ_m r_m with r_0 = 1 and r_{m+1} = r_m·q/((m+1)(m+a)).
fn log_series(q: f64, a: f64) -> f64 {
    let (mut term, mut sum, mut m, mut log_scale) = (1.0f64, 1.0f64, 0.0f64, 0.0f64);
    loop {
        term *= q / ((m + 1.0) * (m + a));
        m += 1.0;
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
        if sum > 1e280 {
            term *= 1e-280;
            sum *= 1e-280;
            log_scale += LN_RESCALE;
        }
    }
    sum.ln() + log_scale
}

/// Σ_j c_j with c_0 = 1, c_j = −c_{j−1}(μ − (2j−1)²)/(8jx), truncated at
/// the smallest term.
fn hankel_sum(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let (mut c, mut sum) = (1.0f64, 1.0f64);
    for j in 1..60 {
        let odd = (2 * j - 1) as f64;
        let next = -c * (mu - odd * odd) / (8.0 * j as f64 * x);
        if next.abs() >= c.abs() || next == 0.0 {
            break;
        }
        c = next;
        sum += c;
        if c.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// ln I_ν(x) for large x.
fn log_bessel_i_asymptotic(nu: f64, x: f64) -> f64 {
    x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + hankel_sum(nu, x).ln()
}

/// ln E[exp(κ u₁)] for u uniform on the unit sphere in ℝ^{2ν+2}, which is
/// ln(Γ(ν+1)(2/κ)^ν I_ν(κ)).
pub fn log_mean_exp_cos(nu: f64, kappa: f64) -> f64 {
    debug_assert!(nu >= 0.0 && kappa >= 0.0);
    if kappa > KAPPA_ASYMPTOTIC {
        libm::lgamma(nu + 1.0) - nu * (kappa / 2.0).ln() + log_bessel_i_asymptotic(nu, kappa)
    } else {
        log_series(kappa * kappa / 4.0, nu + 1.0)
    }
}

/// I_{ν+1}(κ)/I_ν(κ), the derivative of [`log_mean_exp_cos`] in κ.
pub fn bessel_ratio(nu: f64, kappa: f64) -> f64 {
    debug_assert!(nu >= 0.0 && kappa >= 0.0);
    if kappa == 0.0 {
        0.0
    } else if kappa > KAPPA_ASYMPTOTIC {
        hankel_sum(nu + 1.0, kappa) / hankel_sum(nu, kappa)
    } else {
        let q = kappa * kappa / 4.0;
        kappa / (2.0 * (nu + 1.0)) * (log_series(q, nu + 2.0) - log_series(q, nu + 1.0)).exp()
    }
}
