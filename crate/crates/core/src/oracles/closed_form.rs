//! Closed-form prices used as anchors: Black-Scholes and the CIR bond.

use statrs::distribution::{ContinuousCDF, Normal};

pub fn norm_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

pub fn black_scholes_call(s: f64, k: f64, r: f64, q: f64, sigma: f64, t: f64) -> f64 {
    if t <= 0.0 || sigma <= 0.0 {
        return (s * (-q * t.max(0.0)).exp() - k * (-r * t.max(0.0)).exp()).max(0.0);
    }
    let sq = sigma * t.sqrt();
    let d1 = ((s / k).ln() + (r - q + 0.5 * sigma * sigma) * t) / sq;
    let d2 = d1 - sq;
    s * (-q * t).exp() * norm_cdf(d1) - k * (-r * t).exp() * norm_cdf(d2)
}

pub fn black_scholes_put(s: f64, k: f64, r: f64, q: f64, sigma: f64, t: f64) -> f64 {
    black_scholes_call(s, k, r, q, sigma, t) - s * (-q * t).exp() + k * (-r * t).exp()
}

/// Zero-coupon bond price under CIR dynamics dr = kappa (theta - r) dt + xi sqrt(r) dW,
/// affine closed form A(T) exp(-B(T) r0). The xi -> 0 limit reduces to the
/// deterministic-rate discount.
pub fn cir_bond_price(r0: f64, kappa: f64, theta: f64, xi: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if xi == 0.0 {
        let b = if kappa == 0.0 { t } else { (1.0 - (-kappa * t).exp()) / kappa };
        return (-theta * t - (r0 - theta) * b).exp();
    }
    let g = (kappa * kappa + 2.0 * xi * xi).sqrt();
    let e = (g * t).exp();
    let den = (g + kappa) * (e - 1.0) + 2.0 * g;
    let b = 2.0 * (e - 1.0) / den;
    let a = (2.0 * g * ((kappa + g) * t / 2.0).exp() / den).powf(2.0 * kappa * theta / (xi * xi));
    a * (-b * r0).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn black_scholes_reference_value() {
        // textbook value, evaluated independently to 16 digits
        assert_relative_eq!(
            black_scholes_call(100.0, 100.0, 0.0, 0.0, 0.2, 1.0),
            7.965567455405796,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            black_scholes_call(100.0, 100.0, 0.05, 0.0, 0.2, 1.0),
            10.45058357218557,
            max_relative = 1e-12
        );
    }

    #[test]
    fn black_scholes_limits() {
        assert_eq!(black_scholes_call(120.0, 100.0, 0.0, 0.0, 0.2, 0.0), 20.0);
        let tiny_vol = black_scholes_call(120.0, 100.0, 0.0, 0.0, 1e-9, 1.0);
        assert!((tiny_vol - 20.0).abs() < 1e-6);
    }

    #[test]
    fn put_call_parity() {
        let (s, k, r, q, sig, t) = (95.0, 105.0, 0.03, 0.01, 0.25, 2.0);
        let c = black_scholes_call(s, k, r, q, sig, t);
        let p = black_scholes_put(s, k, r, q, sig, t);
        assert_relative_eq!(
            c - p,
            s * (-q * t).exp() - k * (-r * t).exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn cir_bond_reference_and_limits() {
        // deterministic limit
        assert_relative_eq!(cir_bond_price(0.05, 3.0, 0.05, 0.0, 1.0), (-0.05f64).exp(), epsilon = 1e-14);
        // T -> 0
        assert_eq!(cir_bond_price(0.08, 2.0, 0.05, 0.3, 0.0), 1.0);
        // affine formula at the rate parameters of the call test, frozen from
        // an independent high-precision evaluation
        assert_relative_eq!(
            cir_bond_price(0.05, 3.0, 0.05, 0.1, 1.0),
            0.9512434946563343,
            max_relative = 1e-12
        );
    }
}
