//! Model parameters, pointwise constitutive laws and the stabilized nonlinear
//! right-hand sides of the tumor, nutrient and MDE equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, ScalarField};

/// Dimensionless model parameters.
///
/// The nutrient equation diffuses with `M_sigma / delta_sigma`. The tabulated
/// nutrient diffusivity (0.001) is used as `M_sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(rename = "eps_T")]
    pub eps_t: f64,
    #[serde(rename = "E_bar")]
    pub e_bar: f64,
    #[serde(rename = "M_T")]
    pub m_t: f64,
    #[serde(rename = "M_M")]
    pub m_m: f64,
    #[serde(rename = "M_sigma")]
    pub m_sigma: f64,
    pub delta_sigma: f64,
    #[serde(rename = "chi_H")]
    pub chi_h: f64,
    #[serde(rename = "lambda_T_pro")]
    pub lambda_t_pro: f64,
    #[serde(rename = "lambda_T_apo")]
    pub lambda_t_apo: f64,
    #[serde(rename = "lambda_VN")]
    pub lambda_vn: f64,
    pub lambda_sigma: f64,
    #[serde(rename = "lambda_M_pro")]
    pub lambda_m_pro: f64,
    #[serde(rename = "lambda_M_dec")]
    pub lambda_m_dec: f64,
    pub lambda_theta_deg: f64,
    pub lambda_theta_dec: f64,
    #[serde(rename = "sigma_VN")]
    pub sigma_vn: f64,
    #[serde(rename = "sigma_H")]
    pub sigma_h: f64,
    /// Smoothing width of the arctan Heaviside.
    pub eps1: f64,
    /// `C` in `kappa_T2 = (C eps_T)^2`.
    #[serde(rename = "C_stab")]
    pub c_stab: f64,
    pub beta_sigma: f64,
    #[serde(rename = "beta_M")]
    pub beta_m: f64,
    pub phi_sigma0_max: f64,
    pub theta0_max: f64,
    /// Override for `kappa_sigma`; defaults to its lower bound `lambda_sigma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_sigma: Option<f64>,
    /// Override for `kappa_M`; defaults to its lower bound.
    #[serde(default, rename = "kappa_M", skip_serializing_if = "Option::is_none")]
    pub kappa_m: Option<f64>,
}

/// Names accepted by [`ModelParams::preset`].
pub const PRESET_NAMES: [&str; 6] = [
    "baseline",
    "aggressive",
    "high_mde",
    "low_mde",
    "high_haptotaxis",
    "low_haptotaxis",
];

impl ModelParams {
    pub fn baseline() -> Self {
        Self {
            eps_t: 0.005,
            e_bar: 0.045,
            m_t: 2.0,
            m_m: 0.1,
            m_sigma: 0.001,
            delta_sigma: 0.01,
            chi_h: 0.001,
            lambda_t_pro: 2.0,
            lambda_t_apo: 0.005,
            lambda_vn: 1.0,
            lambda_sigma: 1.5,
            lambda_m_pro: 1.0,
            lambda_m_dec: 1.0,
            lambda_theta_deg: 1.0,
            lambda_theta_dec: 0.1,
            sigma_vn: 0.44,
            sigma_h: 0.6,
            eps1: 1e-3,
            c_stab: 0.125,
            beta_sigma: 1.0,
            beta_m: 1.0,
            phi_sigma0_max: 1.0,
            theta0_max: 1.0,
            kappa_sigma: None,
            kappa_m: None,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let mut p = Self::baseline();
        match name {
            "baseline" => {}
            "aggressive" => {
                p.lambda_t_pro = 2.5;
                p.lambda_t_apo = 0.001;
            }
            "high_mde" => {
                p.lambda_m_pro = 1.5;
                p.lambda_m_dec = 0.5;
            }
            "low_mde" => {
                p.lambda_m_pro = 0.5;
                p.lambda_m_dec = 1.5;
            }
            "high_haptotaxis" => p.chi_h = 0.002,
            "low_haptotaxis" => p.chi_h = 0.0005,
            other => {
                return Err(Error::config(format!(
                    "unknown preset `{other}` (expected one of {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        }
        Ok(p)
    }

    pub fn kappa_t1(&self) -> f64 {
        2.0 * self.m_t * self.e_bar
    }

    pub fn kappa_t2(&self) -> f64 {
        (self.c_stab * self.eps_t).powi(2)
    }

    pub fn kappa_sigma_min(&self) -> f64 {
        self.lambda_sigma
    }

    pub fn kappa_m_min(&self) -> f64 {
        self.lambda_m_dec + (self.lambda_m_pro + self.lambda_theta_dec) * self.theta0_max
    }

    pub fn kappa_sigma(&self) -> f64 {
        self.kappa_sigma.unwrap_or_else(|| self.kappa_sigma_min())
    }

    pub fn kappa_m(&self) -> f64 {
        self.kappa_m.unwrap_or_else(|| self.kappa_m_min())
    }

    /// `M_sigma / delta_sigma`.
    pub fn nutrient_diffusivity(&self) -> f64 {
        self.m_sigma / self.delta_sigma
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("eps_T", self.eps_t),
            ("E_bar", self.e_bar),
            ("M_T", self.m_t),
            ("M_M", self.m_m),
            ("M_sigma", self.m_sigma),
            ("delta_sigma", self.delta_sigma),
            ("chi_H", self.chi_h),
            ("lambda_T_pro", self.lambda_t_pro),
            ("lambda_T_apo", self.lambda_t_apo),
            ("lambda_VN", self.lambda_vn),
            ("lambda_sigma", self.lambda_sigma),
            ("lambda_M_pro", self.lambda_m_pro),
            ("lambda_M_dec", self.lambda_m_dec),
            ("lambda_theta_deg", self.lambda_theta_deg),
            ("lambda_theta_dec", self.lambda_theta_dec),
            ("sigma_VN", self.sigma_vn),
            ("sigma_H", self.sigma_h),
            ("eps1", self.eps1),
            ("C_stab", self.c_stab),
            ("beta_sigma", self.beta_sigma),
            ("beta_M", self.beta_m),
            ("phi_sigma0_max", self.phi_sigma0_max),
            ("theta0_max", self.theta0_max),
        ];
        for (key, v) in all {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!(
                    "{key} must be finite and >= 0, got {v}"
                )));
            }
        }
        let positive = [
            ("eps_T", self.eps_t),
            ("E_bar", self.e_bar),
            ("M_sigma", self.m_sigma),
            ("delta_sigma", self.delta_sigma),
            ("M_M", self.m_m),
            ("eps1", self.eps1),
            ("phi_sigma0_max", self.phi_sigma0_max),
        ];
        for (key, v) in positive {
            if v <= 0.0 {
                return Err(Error::config(format!("{key} must be > 0, got {v}")));
            }
        }
        if self.sigma_h == 0.0 {
            return Err(Error::config("sigma_H must be > 0"));
        }
        if let Some(k) = self.kappa_sigma {
            if !(k >= self.kappa_sigma_min()) {
                return Err(Error::config(format!(
                    "kappa_sigma = {k} is below its lower bound lambda_sigma = {}",
                    self.kappa_sigma_min()
                )));
            }
        }
        if let Some(k) = self.kappa_m {
            if !(k >= self.kappa_m_min()) {
                return Err(Error::config(format!(
                    "kappa_M = {k} is below its lower bound {}",
                    self.kappa_m_min()
                )));
            }
        }
        if self.kappa_sigma() <= 0.0 || self.kappa_m() <= 0.0 {
            return Err(Error::config(
                "stabilization constants kappa_sigma and kappa_M must be > 0",
            ));
        }
        Ok(())
    }
}

/// `H(x) = 1/2 (1 + (2/pi) atan(x / eps1))`.
pub fn heaviside_smooth(x: f64, eps1: f64) -> f64 {
    0.5 * (1.0 + std::f64::consts::FRAC_2_PI * (x / eps1).atan())
}

#[inline]
pub fn clamp_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Pointwise `max(0, min(1, f))`.
pub fn cutoff(f: &ScalarField) -> ScalarField {
    f.map(clamp_unit)
}

/// Degenerate mobility `M_T phi_V^2 (1 - phi_V)^2`.
#[inline]
pub fn mobility(phi_v: f64, m_t: f64) -> f64 {
    let q = phi_v * (1.0 - phi_v);
    m_t * q * q
}

/// Derivative of the double well, `E_bar (4 phi^3 - 6 phi^2 + 2 phi)`.
#[inline]
pub fn double_well_derivative(phi: f64, e_bar: f64) -> f64 {
    e_bar * phi * (2.0 + phi * (-6.0 + 4.0 * phi))
}

pub fn chemical_potential(phi_t: &ScalarField, params: &ModelParams) -> ScalarField {
    let lap = grid::laplacian(phi_t);
    potential_from_laplacian(phi_t, &lap, params)
}

fn potential_from_laplacian(
    phi_t: &ScalarField,
    lap: &ScalarField,
    params: &ModelParams,
) -> ScalarField {
    let eps2 = params.eps_t * params.eps_t;
    phi_t
        .zip_map(lap, |p, l| {
            double_well_derivative(p, params.e_bar) - eps2 * l
        })
        .expect("laplacian shares the grid of its input")
}

/// Stabilized nonlinear term of the tumor equation:
/// `div(m_T(phi_V) grad mu) - div(chi_H phi_V grad theta)
///  + lambda_pro phi_sigma phi_V (1 - phi_T) - lambda_apo phi_V
///  - kappa_T1 lap(phi_T) + kappa_T2 lap^2(phi_T)`.
pub fn nonlinear_t(
    phi_t: &ScalarField,
    phi_v: &ScalarField,
    phi_sigma: &ScalarField,
    theta: &ScalarField,
    params: &ModelParams,
) -> Result<ScalarField> {
    let g = phi_t.grid();
    g.check_same(phi_v.grid())?;
    g.check_same(phi_sigma.grid())?;
    g.check_same(theta.grid())?;

    let lap = grid::laplacian(phi_t);
    let bih = grid::laplacian(&lap);
    let mu = potential_from_laplacian(phi_t, &lap, params);
    let m_t = params.m_t;
    let flux = grid::div_edge_flux(phi_v, &mu, 1.0, |v| mobility(v, m_t))?;
    let hapto = grid::div_mobility_grad(phi_v, theta, -params.chi_h)?;
    let (k1, k2) = (params.kappa_t1(), params.kappa_t2());

    let mut out = flux;
    let o = out.data_mut();
    let it = phi_t
        .data()
        .iter()
        .zip(phi_v.data())
        .zip(phi_sigma.data())
        .zip(hapto.data())
        .zip(lap.data().iter().zip(bih.data()));
    for (k, ((((&pt, &pv), &ps), &hp), (&l, &b))) in it.enumerate() {
        let reaction = params.lambda_t_pro * ps * pv * (1.0 - pt) - params.lambda_t_apo * pv;
        o[k] += hp + reaction - k1 * l + k2 * b;
    }
    Ok(out)
}

/// `kappa_sigma psi - lambda_sigma phi_V (psi + 1)` at one node.
#[inline]
pub fn nonlinear_sigma_value(phi_v: f64, psi: f64, params: &ModelParams) -> f64 {
    params.kappa_sigma() * psi - params.lambda_sigma * phi_v * (psi + 1.0)
}

pub fn nonlinear_sigma(
    phi_v: &ScalarField,
    psi_sigma: &ScalarField,
    params: &ModelParams,
) -> Result<ScalarField> {
    phi_v.zip_map(psi_sigma, |v, p| nonlinear_sigma_value(v, p, params))
}

/// Stabilized MDE nonlinearity at one node:
/// `kappa_M psi - lambda_M_dec (psi + 1)
///  + lambda_M_pro phi_V theta sigma_H / (sigma_H + phi_sigma) (1 - psi)
///  - lambda_theta_dec theta (psi + 1)`.
#[inline]
pub fn nonlinear_m_value(
    phi_v: f64,
    psi: f64,
    phi_sigma: f64,
    theta: f64,
    params: &ModelParams,
) -> f64 {
    let hypoxic = params.sigma_h / (params.sigma_h + phi_sigma);
    params.kappa_m() * psi - params.lambda_m_dec * (psi + 1.0)
        + params.lambda_m_pro * phi_v * theta * hypoxic * (1.0 - psi)
        - params.lambda_theta_dec * theta * (psi + 1.0)
}

pub fn nonlinear_m(
    phi_v: &ScalarField,
    psi_m: &ScalarField,
    phi_sigma: &ScalarField,
    theta: &ScalarField,
    params: &ModelParams,
) -> Result<ScalarField> {
    let g = phi_v.grid();
    g.check_same(psi_m.grid())?;
    g.check_same(phi_sigma.grid())?;
    g.check_same(theta.grid())?;
    let data = phi_v
        .data()
        .iter()
        .zip(psi_m.data())
        .zip(phi_sigma.data().iter().zip(theta.data()))
        .map(|((&v, &p), (&s, &t))| nonlinear_m_value(v, p, s, t, params))
        .collect();
    ScalarField::from_vec(*g, data)
}

fn check_sigma_max(max: f64) -> Result<()> {
    if !(max > 0.0) {
        return Err(Error::config(format!(
            "phi_sigma0_max must be > 0, got {max}"
        )));
    }
    Ok(())
}

/// `psi_sigma = 2 phi_sigma / phi_sigma0_max - 1`.
pub fn psi_sigma_from_phi(phi_sigma: &ScalarField, phi_sigma0_max: f64) -> Result<ScalarField> {
    check_sigma_max(phi_sigma0_max)?;
    Ok(phi_sigma.map(|v| 2.0 * v / phi_sigma0_max - 1.0))
}

/// `phi_sigma = phi_sigma0_max (psi_sigma + 1) / 2`.
pub fn phi_sigma_from_psi(psi_sigma: &ScalarField, phi_sigma0_max: f64) -> Result<ScalarField> {
    check_sigma_max(phi_sigma0_max)?;
    Ok(psi_sigma.map(|v| phi_sigma0_max * (v + 1.0) * 0.5))
}

pub fn psi_m_from_phi(phi_m: &ScalarField) -> ScalarField {
    phi_m.map(|v| 2.0 * v - 1.0)
}

pub fn phi_m_from_psi(psi_m: &ScalarField) -> ScalarField {
    psi_m.map(|v| (v + 1.0) * 0.5)
}

/// The five physical fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub phi_t: ScalarField,
    pub phi_n: ScalarField,
    pub phi_sigma: ScalarField,
    pub phi_m: ScalarField,
    pub theta: ScalarField,
}

impl SimState {
    /// Viable fraction `C(phi_T) - phi_N`.
    pub fn phi_v(&self) -> ScalarField {
        self.phi_t
            .zip_map(&self.phi_n, |t, n| clamp_unit(t) - n)
            .expect("state fields share one grid")
    }

    pub fn psi_sigma(&self, phi_sigma0_max: f64) -> Result<ScalarField> {
        psi_sigma_from_phi(&self.phi_sigma, phi_sigma0_max)
    }

    pub fn psi_m(&self) -> ScalarField {
        psi_m_from_phi(&self.phi_m)
    }

    pub fn fields(&self) -> [(&'static str, &ScalarField); 5] {
        [
            ("phi_T", &self.phi_t),
            ("phi_N", &self.phi_n),
            ("phi_sigma", &self.phi_sigma),
            ("phi_M", &self.phi_m),
            ("theta", &self.theta),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.fields().iter().all(|(_, f)| f.is_finite())
    }
}
