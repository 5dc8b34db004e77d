//! Model parameters: diffusion dynamics, the common/idiosyncratic jump
//! decomposition and the correlation arithmetic that goes with it.
//!
//! Jumps follow the Meixner process. Each driver carries an idiosyncratic
//! component `Y_j` plus a loading `b_j` on a shared component `Z`, so the
//! jump parts of the three drivers are correlated through `Z`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PricerError, Result};

/// Parameters of a Meixner process: scale `a`, skew `b`, intensity `d`, drift `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeixnerParams {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub m: f64,
}

impl MeixnerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) {
            return Err(PricerError::InvalidModel(format!("meixner a must be > 0, got {}", self.a)));
        }
        if !(self.b.abs() < std::f64::consts::PI) {
            return Err(PricerError::InvalidModel(format!("meixner |b| must be < pi, got {}", self.b)));
        }
        if !(self.d >= 0.0) {
            return Err(PricerError::InvalidModel(format!("meixner d must be >= 0, got {}", self.d)));
        }
        if !self.m.is_finite() {
            return Err(PricerError::InvalidModel("meixner m must be finite".into()));
        }
        Ok(())
    }

    /// Variance of the time-1 marginal, `a^2 d / (2 cos^2(b/2))`.
    ///
    /// This is the second cumulant of the characteristic exponent evaluated
    /// analytically at u = 0; no numerical differentiation is involved.
    pub fn variance(&self) -> f64 {
        let c = (self.b / 2.0).cos();
        self.a * self.a * self.d / (2.0 * c * c)
    }

    /// Mean of the time-1 marginal, `a d tan(b/2) + m`.
    pub fn mean(&self) -> f64 {
        self.a * self.d * (self.b / 2.0).tan() + self.m
    }
}

/// Characteristic exponent of the Meixner process,
/// `2d { log cos(b/2) - log cosh((a u - i b)/2) } + i m u`.
pub fn meixner_char_exponent(u: Complex64, p: &MeixnerParams) -> Result<Complex64> {
    let half_b = p.b / 2.0;
    if half_b.cos() <= 0.0 {
        return Err(PricerError::Degenerate(format!("cos(b/2) <= 0 for b = {}", p.b)));
    }
    let arg = (Complex64::new(p.a, 0.0) * u - Complex64::new(0.0, p.b)) / 2.0;
    let val = 2.0 * p.d * (Complex64::new(half_b.cos().ln(), 0.0) - arg.cosh().ln())
        + Complex64::new(0.0, p.m) * u;
    Ok(val)
}

/// Lévy density of the Meixner process, `d exp(b y / a) / (y sinh(pi y / a))`.
pub fn meixner_levy_density(y: f64, p: &MeixnerParams) -> Result<f64> {
    if y == 0.0 {
        return Err(PricerError::Degenerate("Meixner Lévy density is singular at y = 0".into()));
    }
    Ok(p.d * (p.b * y / p.a).exp() / (y * (std::f64::consts::PI * y / p.a).sinh()))
}

/// Index of a stochastic driver in the (S, v, r) ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Driver {
    Spot,
    Variance,
    Rate,
}

impl Driver {
    pub const ALL: [Driver; 3] = [Driver::Spot, Driver::Variance, Driver::Rate];

    pub fn index(self) -> usize {
        match self {
            Driver::Spot => 0,
            Driver::Variance => 1,
            Driver::Rate => 2,
        }
    }
}

/// Idiosyncratic processes `Y_j`, the common process `Z` and the loadings `b_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpStructure {
    pub idio_s: MeixnerParams,
    pub idio_v: MeixnerParams,
    pub idio_r: MeixnerParams,
    pub common: MeixnerParams,
    /// Loadings (b_s, b_v, b_r) on the common component; may be negative or zero.
    pub loadings: (f64, f64, f64),
}

impl JumpStructure {
    pub fn validate(&self) -> Result<()> {
        self.idio_s.validate()?;
        self.idio_v.validate()?;
        self.idio_r.validate()?;
        self.common.validate()?;
        let (bs, bv, br) = self.loadings;
        if !(bs.is_finite() && bv.is_finite() && br.is_finite()) {
            return Err(PricerError::InvalidModel("jump loadings must be finite".into()));
        }
        Ok(())
    }

    pub fn idio(&self, driver: Driver) -> &MeixnerParams {
        match driver {
            Driver::Spot => &self.idio_s,
            Driver::Variance => &self.idio_v,
            Driver::Rate => &self.idio_r,
        }
    }

    pub fn loading(&self, driver: Driver) -> f64 {
        match driver {
            Driver::Spot => self.loadings.0,
            Driver::Variance => self.loadings.1,
            Driver::Rate => self.loadings.2,
        }
    }

    /// Variance of the compound driver `X_j = Y_j + b_j Z` at time 1.
    pub fn compound_variance(&self, driver: Driver) -> f64 {
        let b = self.loading(driver);
        self.idio(driver).variance() + b * b * self.common.variance()
    }
}

/// Pairwise correlation of the compound jump drivers,
/// `b_i b_j Var(Z_1) / sqrt(Var(X_i,1) Var(X_j,1))`.
pub fn pairwise_jump_correlation(i: Driver, j: Driver, js: &JumpStructure) -> Result<f64> {
    let var_z = js.common.variance();
    let var_i = js.compound_variance(i);
    let var_j = js.compound_variance(j);
    if var_i <= 0.0 || var_j <= 0.0 {
        return Err(PricerError::Degenerate(
            "compound jump variance vanishes; correlation undefined".into(),
        ));
    }
    Ok(js.loading(i) * js.loading(j) * var_z / (var_i.sqrt() * var_j.sqrt()))
}

/// Total instantaneous correlation combining Brownian and jump parts,
/// `(rho sigma_i sigma_j + b_i b_j Var(Z_1)) / sqrt((sigma_i^2 + Var X_i)(sigma_j^2 + Var X_j))`.
pub fn total_correlation(
    i: Driver,
    j: Driver,
    sigma_i: f64,
    sigma_j: f64,
    rho: f64,
    js: &JumpStructure,
) -> Result<f64> {
    let var_z = js.common.variance();
    let den_i = sigma_i * sigma_i + js.compound_variance(i);
    let den_j = sigma_j * sigma_j + js.compound_variance(j);
    if den_i <= 0.0 || den_j <= 0.0 {
        return Err(PricerError::Degenerate("total-correlation denominator vanishes".into()));
    }
    Ok((rho * sigma_i * sigma_j + js.loading(i) * js.loading(j) * var_z)
        / (den_i.sqrt() * den_j.sqrt()))
}

/// Cosine law for a third correlation given two and the sphere angle:
/// `rho_xy = rho_yz rho_xz + sqrt((1-rho_yz^2)(1-rho_xz^2)) cos(phi_xy)`.
///
/// A 3x3 correlation matrix assembled this way is a Gram matrix of unit
/// vectors, hence positive semidefinite by construction.
pub fn cosine_law_rho(rho_yz: f64, rho_xz: f64, phi_xy: f64) -> f64 {
    rho_yz * rho_xz + ((1.0 - rho_yz * rho_yz) * (1.0 - rho_xz * rho_xz)).sqrt() * phi_xy.cos()
}

/// A piecewise-constant function of time. Values are sampled at the left
/// endpoint of each interval; a plain number deserializes as a constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeCurve {
    Constant(f64),
    Piecewise {
        /// Breakpoints, strictly increasing, starting at 0.
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl TimeCurve {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            TimeCurve::Constant(v) => *v,
            TimeCurve::Piecewise { times, values } => {
                let mut idx = 0;
                for (k, &tk) in times.iter().enumerate() {
                    if t >= tk {
                        idx = k;
                    } else {
                        break;
                    }
                }
                values[idx]
            }
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        match self {
            TimeCurve::Constant(v) => {
                if !v.is_finite() {
                    return Err(PricerError::InvalidModel(format!("{name} must be finite")));
                }
            }
            TimeCurve::Piecewise { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(PricerError::InvalidModel(format!(
                        "{name}: times/values must be non-empty and equal length"
                    )));
                }
                if !times.windows(2).all(|w| w[0] < w[1]) {
                    return Err(PricerError::InvalidModel(format!("{name}: times must increase")));
                }
            }
        }
        Ok(())
    }
}

impl From<f64> for TimeCurve {
    fn from(v: f64) -> Self {
        TimeCurve::Constant(v)
    }
}

/// Local-volatility surface sigma_s(S, t), tabulated with bilinear
/// interpolation and constant extrapolation beyond the table edges.
/// The default is the constant surface 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalVolSurface {
    pub s_values: Vec<f64>,
    pub t_values: Vec<f64>,
    /// values[i][j] = sigma at (s_values[i], t_values[j]).
    pub values: Vec<Vec<f64>>,
}

impl LocalVolSurface {
    pub fn constant(sigma: f64) -> Self {
        LocalVolSurface { s_values: vec![0.0], t_values: vec![0.0], values: vec![vec![sigma]] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s_values.is_empty() || self.t_values.is_empty() {
            return Err(PricerError::InvalidModel("local_vol: empty axes".into()));
        }
        if self.values.len() != self.s_values.len()
            || self.values.iter().any(|row| row.len() != self.t_values.len())
        {
            return Err(PricerError::InvalidModel("local_vol: values shape mismatch".into()));
        }
        if !self.s_values.windows(2).all(|w| w[0] < w[1])
            || !self.t_values.windows(2).all(|w| w[0] < w[1])
        {
            return Err(PricerError::InvalidModel("local_vol: axes must increase".into()));
        }
        if self.values.iter().flatten().any(|&v| !(v > 0.0)) {
            return Err(PricerError::InvalidModel("local_vol: sigma must be > 0".into()));
        }
        Ok(())
    }

    pub fn at(&self, s: f64, t: f64) -> f64 {
        let (i0, i1, ws) = Self::bracket(&self.s_values, s);
        let (j0, j1, wt) = Self::bracket(&self.t_values, t);
        let v00 = self.values[i0][j0];
        let v01 = self.values[i0][j1];
        let v10 = self.values[i1][j0];
        let v11 = self.values[i1][j1];
        (1.0 - ws) * ((1.0 - wt) * v00 + wt * v01) + ws * ((1.0 - wt) * v10 + wt * v11)
    }

    fn bracket(axis: &[f64], x: f64) -> (usize, usize, f64) {
        let n = axis.len();
        if n == 1 || x <= axis[0] {
            return (0, 0, 0.0);
        }
        if x >= axis[n - 1] {
            return (n - 1, n - 1, 0.0);
        }
        let hi = axis.partition_point(|&a| a <= x);
        let lo = hi - 1;
        let w = (x - axis[lo]) / (axis[hi] - axis[lo]);
        (lo, hi, w)
    }
}

impl Default for LocalVolSurface {
    fn default() -> Self {
        LocalVolSurface::constant(1.0)
    }
}

/// Diffusion parameters of the three-factor dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    /// Continuous dividend yield.
    pub q: f64,
    pub kappa_v: TimeCurve,
    pub theta_v: TimeCurve,
    pub xi_v: f64,
    pub kappa_r: TimeCurve,
    pub theta_r: TimeCurve,
    pub xi_r: f64,
    /// CEV exponent on v in the variance diffusion, in [0, 2).
    pub a_pow: f64,
    /// CEV exponent on r in the rate diffusion, in [0, 2).
    pub b_pow: f64,
    /// CEV exponent on S in the spot diffusion, in [0, 2).
    pub c_pow: f64,
    #[serde(default)]
    pub local_vol: LocalVolSurface,
    pub rho_sv: f64,
    pub rho_sr: f64,
    pub rho_vr: f64,
}

impl DiffusionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("a_pow", self.a_pow), ("b_pow", self.b_pow), ("c_pow", self.c_pow)] {
            if !(0.0..2.0).contains(&p) {
                return Err(PricerError::InvalidModel(format!("{name} must lie in [0,2), got {p}")));
            }
        }
        self.kappa_v.validate("kappa_v")?;
        self.theta_v.validate("theta_v")?;
        self.kappa_r.validate("kappa_r")?;
        self.theta_r.validate("theta_r")?;
        self.local_vol.validate()?;
        for (name, v) in [("xi_v", self.xi_v), ("xi_r", self.xi_r)] {
            if !(v >= 0.0) {
                return Err(PricerError::InvalidModel(format!("{name} must be >= 0, got {v}")));
            }
        }
        for t in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0] {
            for (name, c) in [("kappa_v", &self.kappa_v), ("kappa_r", &self.kappa_r)] {
                if c.at(t) < 0.0 {
                    return Err(PricerError::InvalidModel(format!("{name} must be >= 0")));
                }
            }
            for (name, c) in [("theta_v", &self.theta_v), ("theta_r", &self.theta_r)] {
                if !(c.at(t) > 0.0) {
                    return Err(PricerError::InvalidModel(format!("{name} must be > 0")));
                }
            }
        }
        for (name, rho) in [("rho_sv", self.rho_sv), ("rho_sr", self.rho_sr), ("rho_vr", self.rho_vr)] {
            if !(-1.0..=1.0).contains(&rho) {
                return Err(PricerError::InvalidModel(format!("{name} must lie in [-1,1], got {rho}")));
            }
        }
        let eig = min_eigenvalue_corr3(self.rho_sv, self.rho_sr, self.rho_vr);
        if eig < -1e-12 {
            return Err(PricerError::InvalidModel(format!(
                "Brownian correlation matrix is not PSD (min eigenvalue {eig:.3e})"
            )));
        }
        Ok(())
    }

    /// The 3x3 Brownian correlation matrix in (S, v, r) order, row-major.
    pub fn correlation_matrix(&self) -> [[f64; 3]; 3] {
        [
            [1.0, self.rho_sv, self.rho_sr],
            [self.rho_sv, 1.0, self.rho_vr],
            [self.rho_sr, self.rho_vr, 1.0],
        ]
    }
}

/// Minimum eigenvalue of the unit-diagonal 3x3 correlation matrix built from
/// the three pairwise entries. Jacobi rotations; exact enough for validation.
pub fn min_eigenvalue_corr3(rho_sv: f64, rho_sr: f64, rho_vr: f64) -> f64 {
    let mut a = [[1.0, rho_sv, rho_sr], [rho_sv, 1.0, rho_vr], [rho_sr, rho_vr, 1.0]];
    for _ in 0..50 {
        // largest off-diagonal element
        let mut p = 0;
        let mut q = 1;
        let mut big = a[0][1].abs();
        for (i, j) in [(0usize, 2usize), (1, 2)] {
            if a[i][j].abs() > big {
                big = a[i][j].abs();
                p = i;
                q = j;
            }
        }
        if big < 1e-15 {
            break;
        }
        let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
        let c = 1.0 / (t * t + 1.0).sqrt();
        let s = t * c;
        let mut b = a;
        for k in 0..3 {
            b[p][k] = c * a[p][k] - s * a[q][k];
            b[q][k] = s * a[p][k] + c * a[q][k];
        }
        a = b;
        let bb = a;
        for k in 0..3 {
            a[k][p] = c * bb[k][p] - s * bb[k][q];
            a[k][q] = s * bb[k][p] + c * bb[k][q];
        }
    }
    a[0][0].min(a[1][1]).min(a[2][2])
}

/// Full model: diffusion dynamics plus an optional jump structure.
/// Absent jumps means a pure-diffusion model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub diffusion: DiffusionParams,
    #[serde(default)]
    pub jumps: Option<JumpStructure>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        self.diffusion.validate()?;
        if let Some(js) = &self.jumps {
            js.validate()?;
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: ModelSpec = toml::from_str(s)
            .map_err(|e| PricerError::InvalidConfig(format!("model parse error: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| PricerError::InvalidConfig(format!("model serialize error: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn table4_jumps() -> JumpStructure {
        JumpStructure {
            idio_s: MeixnerParams { a: 0.04, b: -0.33, d: 52.0, m: 0.1 },
            idio_v: MeixnerParams { a: 0.02, b: -0.5, d: 40.0, m: 0.03 },
            idio_r: MeixnerParams { a: 0.01, b: -0.2, d: 30.0, m: 0.01 },
            common: MeixnerParams { a: 0.03, b: -0.1, d: 40.0, m: 0.05 },
            loadings: (1.0, 2.0, 3.0),
        }
    }

    #[test]
    fn char_exponent_vanishes_at_zero() {
        let p = MeixnerParams { a: 0.5, b: 1.0, d: 3.0, m: 0.7 };
        let v = meixner_char_exponent(Complex64::new(0.0, 0.0), &p).unwrap();
        assert!(v.norm() < 1e-15);
    }

    #[test]
    fn char_exponent_matches_high_precision_reference() {
        // phi(1) for (a=0.04, b=-0.33, d=52, m=0.1), 40-digit reference evaluation.
        let p = MeixnerParams { a: 0.04, b: -0.33, d: 52.0, m: 0.1 };
        let v = meixner_char_exponent(Complex64::new(1.0, 0.0), &p).unwrap();
        assert_relative_eq!(v.re, -0.021375175353435963, max_relative = 1e-13);
        assert_relative_eq!(v.im, -0.246301382908019509, max_relative = 1e-13);
    }

    #[test]
    fn char_exponent_symmetric_case_is_real_nonpositive() {
        let p = MeixnerParams { a: 0.3, b: 0.0, d: 2.0, m: 0.0 };
        for &u in &[0.5, 1.0, 3.0, 10.0] {
            let v = meixner_char_exponent(Complex64::new(u, 0.0), &p).unwrap();
            let expect = -2.0 * p.d * (p.a * u / 2.0).cosh().ln();
            assert_relative_eq!(v.re, expect, max_relative = 1e-14);
            assert!(v.im.abs() < 1e-14);
            assert!(v.re <= 0.0);
        }
    }

    #[test]
    fn variance_matches_reference_values() {
        let js = table4_jumps();
        assert_relative_eq!(js.idio_s.variance(), 0.042753437650873170, max_relative = 1e-14);
        assert_relative_eq!(js.idio_v.variance(), 0.008521595973862799, max_relative = 1e-14);
        assert_relative_eq!(js.idio_r.variance(), 0.001515100569633742, max_relative = 1e-14);
        assert_relative_eq!(js.common.variance(), 0.018045075106388564, max_relative = 1e-14);
    }

    #[test]
    fn pairwise_correlation_reference_and_limits() {
        let js = table4_jumps();
        let rho_sv = pairwise_jump_correlation(Driver::Spot, Driver::Variance, &js).unwrap();
        let rho_sr = pairwise_jump_correlation(Driver::Spot, Driver::Rate, &js).unwrap();
        let rho_vr = pairwise_jump_correlation(Driver::Variance, Driver::Rate, &js).unwrap();
        assert_relative_eq!(rho_sv, 0.515229049908009, max_relative = 1e-13);
        assert_relative_eq!(rho_sr, 0.542271112320066, max_relative = 1e-13);
        assert_relative_eq!(rho_vr, 0.941349882834765, max_relative = 1e-13);

        // zero loading kills the correlation
        let mut z = js.clone();
        z.loadings.0 = 0.0;
        assert_eq!(pairwise_jump_correlation(Driver::Spot, Driver::Variance, &z).unwrap(), 0.0);

        // huge loadings drive it to +1
        let mut big = js.clone();
        big.loadings = (1e3, 1e3, 1e3);
        let r = pairwise_jump_correlation(Driver::Spot, Driver::Variance, &big).unwrap();
        assert!((1.0 - r).abs() < 1e-3, "limit correlation {r}");
    }

    #[test]
    fn pairwise_correlation_monte_carlo_check() {
        // The correlation law only involves variances of Y and Z, so any
        // zero-mean increments with the matched variances reproduce it.
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let js = table4_jumps();
        let expect = pairwise_jump_correlation(Driver::Spot, Driver::Variance, &js).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let ny = Normal::new(0.0, js.idio_s.variance().sqrt()).unwrap();
        let nv = Normal::new(0.0, js.idio_v.variance().sqrt()).unwrap();
        let nz = Normal::new(0.0, js.common.variance().sqrt()).unwrap();
        let n = 1_000_000usize;
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let z = nz.sample(&mut rng);
            let x = ny.sample(&mut rng) + js.loadings.0 * z;
            let y = nv.sample(&mut rng) + js.loadings.1 * z;
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - sx / nf * (sy / nf);
        let vx = sxx / nf - (sx / nf) * (sx / nf);
        let vy = syy / nf - (sy / nf) * (sy / nf);
        let sample = cov / (vx * vy).sqrt();
        assert!((sample - expect).abs() < 4e-3, "mc {sample} vs analytic {expect}");
    }

    #[test]
    fn pairwise_correlation_degenerate_error() {
        let mut js = table4_jumps();
        js.idio_s.d = 0.0;
        js.common.d = 0.0;
        assert!(pairwise_jump_correlation(Driver::Spot, Driver::Variance, &js).is_err());
    }

    #[test]
    fn levy_density_reference_and_symmetry() {
        let p = MeixnerParams { a: 0.01, b: -0.2, d: 30.0, m: 0.01 };
        let v = meixner_levy_density(0.05, &p).unwrap();
        assert_relative_eq!(v, 6.652808077274630e-5, max_relative = 1e-12);

        let sym = MeixnerParams { a: 0.3, b: 0.0, d: 2.0, m: 0.0 };
        for &y in &[0.01, 0.1, 0.5] {
            let plus = meixner_levy_density(y, &sym).unwrap();
            let minus = meixner_levy_density(-y, &sym).unwrap();
            assert_relative_eq!(plus, minus, max_relative = 1e-14);
            assert!(plus > 0.0);
        }

        let zero_d = MeixnerParams { a: 0.3, b: 0.1, d: 0.0, m: 0.0 };
        assert_eq!(meixner_levy_density(0.2, &zero_d).unwrap(), 0.0);
        assert!(meixner_levy_density(0.0, &sym).is_err());
    }

    #[test]
    fn total_correlation_reduces_and_reference() {
        // vanishing jump terms reduce to the Brownian rho bit-for-bit
        let mut js = table4_jumps();
        js.loadings = (0.0, 0.0, 0.0);
        js.idio_s.d = 0.0;
        js.idio_v.d = 0.0;
        let rho = 0.37;
        let t = total_correlation(Driver::Spot, Driver::Variance, 0.4, 0.3, rho, &js).unwrap();
        assert!((t - rho).abs() < 1e-14);

        // vanishing diffusion terms reduce to the pairwise jump correlation
        let js = table4_jumps();
        let t0 = total_correlation(Driver::Spot, Driver::Variance, 0.0, 0.0, 0.0, &js).unwrap();
        let pj = pairwise_jump_correlation(Driver::Spot, Driver::Variance, &js).unwrap();
        assert_relative_eq!(t0, pj, max_relative = 1e-14);

        // mixed case frozen from an independent symbolic evaluation
        let t1 = total_correlation(Driver::Spot, Driver::Variance, 0.3, 0.2, -0.5, &js).unwrap();
        assert_relative_eq!(t1, 0.045141130232902018, max_relative = 1e-13);
    }

    #[test]
    fn cosine_law_values() {
        let pi = std::f64::consts::PI;
        assert_relative_eq!(cosine_law_rho(0.0, 0.0, 4.0 * pi / 5.0), -0.8090169943749473, max_relative = 1e-14);
        // double-barrier test parameters
        assert_relative_eq!(cosine_law_rho(0.3, 0.4, 4.0 * pi / 5.0), -0.587323331475857, max_relative = 1e-13);
        assert_relative_eq!(cosine_law_rho(0.5, 0.5, pi / 2.0), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn toml_round_trip() {
        let spec = ModelSpec {
            diffusion: DiffusionParams {
                q: 0.5,
                kappa_v: 2.0.into(),
                theta_v: 0.9.into(),
                xi_v: 0.3,
                kappa_r: 3.0.into(),
                theta_r: 0.05.into(),
                xi_r: 0.1,
                a_pow: 0.5,
                b_pow: 0.5,
                c_pow: 1.0,
                local_vol: LocalVolSurface::default(),
                rho_sv: -0.647,
                rho_sr: 0.0,
                rho_vr: 0.1,
            },
            jumps: Some(table4_jumps()),
        };
        spec.validate().unwrap();
        let text = spec.to_toml_string().unwrap();
        let back = ModelSpec::from_toml_str(&text).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn non_psd_correlations_rejected() {
        let spec = ModelSpec {
            diffusion: DiffusionParams {
                q: 0.0,
                kappa_v: 1.0.into(),
                theta_v: 0.2.into(),
                xi_v: 0.3,
                kappa_r: 1.0.into(),
                theta_r: 0.05.into(),
                xi_r: 0.1,
                a_pow: 0.5,
                b_pow: 0.5,
                c_pow: 1.0,
                local_vol: LocalVolSurface::default(),
                rho_sv: 0.9,
                rho_sr: 0.9,
                rho_vr: -0.9,
            },
            jumps: None,
        };
        assert!(spec.validate().is_err());
    }

    proptest! {
        #[test]
        fn char_exponent_hermitian(u in -50.0f64..50.0, a in 0.01f64..1.0,
                                   b in -3.0f64..3.0, d in 0.0f64..100.0, m in -1.0f64..1.0) {
            let p = MeixnerParams { a, b, d, m };
            let plus = meixner_char_exponent(Complex64::new(u, 0.0), &p).unwrap();
            let minus = meixner_char_exponent(Complex64::new(-u, 0.0), &p).unwrap();
            prop_assert!((minus - plus.conj()).norm() < 1e-10 * (1.0 + plus.norm()));
        }

        #[test]
        fn pairwise_correlation_sign_flip(bs in 0.1f64..5.0, bv in 0.1f64..5.0) {
            let mut js = table4_jumps();
            js.loadings = (bs, bv, 1.0);
            let plus = pairwise_jump_correlation(Driver::Spot, Driver::Variance, &js).unwrap();
            js.loadings.0 = -bs;
            let minus = pairwise_jump_correlation(Driver::Spot, Driver::Variance, &js).unwrap();
            prop_assert!((plus + minus).abs() < 1e-15);
            prop_assert!(plus.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn cosine_law_matrix_is_psd(r1 in -0.99f64..0.99, r2 in -0.99f64..0.99,
                                    phi in 0.0f64..std::f64::consts::PI) {
            let r3 = cosine_law_rho(r1, r2, phi);
            // matrix in (x, y, z) order: rho_xy = r3, rho_xz = r2, rho_yz = r1
            let eig = min_eigenvalue_corr3(r3, r2, r1);
            prop_assert!(eig >= -1e-12, "min eig {}", eig);
        }
    }
}
