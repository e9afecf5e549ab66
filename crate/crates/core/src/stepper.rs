//! One time step of the coupled system.
//!
//! The tumor fraction and the affine-transformed nutrient and MDE fields are
//! advanced with ETD1 or ETDRK2 through cosine-diagonalized Υ multipliers;
//! the necrotic fraction and the ECM density follow closed-form trapezoidal
//! updates.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::model::{self, heaviside_smooth, ModelParams, SimState};
use crate::spectral::{CosineTransform, OperatorKind, PhiTable, SpectralOperator};

/// Absolute slack on every structure-preservation check.
pub const INVARIANT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Etd1,
    Etdrk2,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "etd1" => Ok(Scheme::Etd1),
            "etdrk2" => Ok(Scheme::Etdrk2),
            other => Err(Error::config(format!(
                "unknown scheme `{other}` (expected etd1 or etdrk2)"
            ))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Etd1 => "etd1",
            Scheme::Etdrk2 => "etdrk2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub tau: f64,
    pub scheme: Scheme,
    /// Hold the x = +1 node layer of the nutrient at `phi_sigma0_max` after each step.
    pub nutrient_right_edge_source: bool,
}

impl StepConfig {
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::config(format!(
                "tau must be finite and > 0, got {}",
                self.tau
            )));
        }
        if params.lambda_vn > 0.0 && self.tau > 2.0 / params.lambda_vn {
            return Err(Error::config(format!(
                "tau = {} violates tau <= 2/lambda_VN = {}",
                self.tau,
                2.0 / params.lambda_vn
            )));
        }
        if params.lambda_theta_deg > 0.0 && self.tau > 2.0 / params.lambda_theta_deg {
            return Err(Error::config(format!(
                "tau = {} violates tau <= 2/lambda_theta_deg = {}",
                self.tau,
                2.0 / params.lambda_theta_deg
            )));
        }
        Ok(())
    }
}

/// Wall time spent per stage, accumulated over steps.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct StageTimings {
    pub nonlinear: Duration,
    pub spectral: Duration,
    pub pointwise: Duration,
}

#[derive(Clone, Copy)]
enum Stage {
    Nonlinear,
    Spectral,
    Pointwise,
}

struct Clock<'a>(Option<&'a mut StageTimings>);

impl Clock<'_> {
    fn time<T>(&mut self, stage: Stage, f: impl FnOnce() -> T) -> T {
        match self.0.as_deref_mut() {
            None => f(),
            Some(t) => {
                let start = Instant::now();
                let out = f();
                let slot = match stage {
                    Stage::Nonlinear => &mut t.nonlinear,
                    Stage::Spectral => &mut t.spectral,
                    Stage::Pointwise => &mut t.pointwise,
                };
                *slot += start.elapsed();
                out
            }
        }
    }
}

/// Closed-form trapezoidal update of the necrotic fraction at one node.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn trapezoid_n_value(
    phi_n: f64,
    phi_t_n: f64,
    phi_t_np1: f64,
    phi_sigma_n: f64,
    phi_sigma_pred: f64,
    params: &ModelParams,
    tau: f64,
) -> f64 {
    let half = 0.5 * tau * params.lambda_vn;
    let h_n = heaviside_smooth(params.sigma_vn - phi_sigma_n, params.eps1);
    let h_np1 = heaviside_smooth(params.sigma_vn - phi_sigma_pred, params.eps1);
    ((1.0 - half * h_n) * phi_n + half * (h_n * phi_t_n + h_np1 * phi_t_np1)) / (1.0 + half * h_np1)
}

/// Closed-form trapezoidal update of the ECM density at one node.
#[inline]
pub fn trapezoid_theta_value(
    theta: f64,
    phi_m_n: f64,
    phi_m_np1: f64,
    params: &ModelParams,
    tau: f64,
) -> f64 {
    let half = 0.5 * tau * params.lambda_theta_deg;
    theta * (1.0 - half * phi_m_n) / (1.0 + half * phi_m_np1)
}

fn check_tau_bound(tau: f64, rate: f64, name: &str) -> Result<()> {
    if !(tau > 0.0) || (rate > 0.0 && tau > 2.0 / rate) {
        return Err(Error::config(format!(
            "tau = {tau} violates tau <= 2/{name}"
        )));
    }
    Ok(())
}

pub fn trapezoid_n(
    phi_n: &ScalarField,
    phi_t_n: &ScalarField,
    phi_t_np1: &ScalarField,
    phi_sigma_n: &ScalarField,
    phi_sigma_pred: &ScalarField,
    params: &ModelParams,
    tau: f64,
) -> Result<ScalarField> {
    check_tau_bound(tau, params.lambda_vn, "lambda_VN")?;
    let g = phi_n.grid();
    for f in [phi_t_n, phi_t_np1, phi_sigma_n, phi_sigma_pred] {
        g.check_same(f.grid())?;
    }
    let data = (0..g.len())
        .map(|k| {
            trapezoid_n_value(
                phi_n.data()[k],
                phi_t_n.data()[k],
                phi_t_np1.data()[k],
                phi_sigma_n.data()[k],
                phi_sigma_pred.data()[k],
                params,
                tau,
            )
        })
        .collect();
    ScalarField::from_vec(*g, data)
}

pub fn trapezoid_theta(
    theta: &ScalarField,
    phi_m_n: &ScalarField,
    phi_m_np1: &ScalarField,
    params: &ModelParams,
    tau: f64,
) -> Result<ScalarField> {
    check_tau_bound(tau, params.lambda_theta_deg, "lambda_theta_deg")?;
    let g = theta.grid();
    g.check_same(phi_m_n.grid())?;
    g.check_same(phi_m_np1.grid())?;
    let data = (0..g.len())
        .map(|k| {
            trapezoid_theta_value(
                theta.data()[k],
                phi_m_n.data()[k],
                phi_m_np1.data()[k],
                params,
                tau,
            )
        })
        .collect();
    ScalarField::from_vec(*g, data)
}

/// Nonlinear terms evaluated at the old time level plus the ETD1 predictor.
struct Predictor {
    n_t: ScalarField,
    n_sigma: ScalarField,
    n_m: ScalarField,
    phi_t: ScalarField,
    psi_sigma_pred: ScalarField,
    psi_m_pred: ScalarField,
}

/// Advances [`SimState`]s with precomputed Υ tables for a fixed grid, parameter set and step size.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: GridSpec,
    params: ModelParams,
    cfg: StepConfig,
    phase: PhiTable,
    nutrient: PhiTable,
    mde: PhiTable,
}

impl Stepper {
    pub fn new(grid: GridSpec, params: ModelParams, cfg: StepConfig) -> Result<Self> {
        params.validate()?;
        cfg.validate(&params)?;
        let transform = Arc::new(CosineTransform::new(grid));
        let table = |kind| {
            PhiTable::new(
                SpectralOperator::build(grid, kind, &params),
                cfg.tau,
                Arc::clone(&transform),
            )
        };
        Ok(Self {
            phase: table(OperatorKind::PhaseField)?,
            nutrient: table(OperatorKind::Nutrient)?,
            mde: table(OperatorKind::Mde)?,
            grid,
            params,
            cfg,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &StepConfig {
        &self.cfg
    }

    pub fn tables(&self) -> [&PhiTable; 3] {
        [&self.phase, &self.nutrient, &self.mde]
    }

    /// Advances one step with the configured scheme. `step` labels errors.
    pub fn step(&self, state: &SimState, step: usize) -> Result<SimState> {
        self.step_timed(state, step, None)
    }

    pub fn step_timed(
        &self,
        state: &SimState,
        step: usize,
        timings: Option<&mut StageTimings>,
    ) -> Result<SimState> {
        let mut clock = Clock(timings);
        match self.cfg.scheme {
            Scheme::Etd1 => self.advance(state, step, false, &mut clock),
            Scheme::Etdrk2 => self.advance(state, step, true, &mut clock),
        }
    }

    pub fn etd1_step(&self, state: &SimState, step: usize) -> Result<SimState> {
        self.advance(state, step, false, &mut Clock(None))
    }

    pub fn etdrk2_step(&self, state: &SimState, step: usize) -> Result<SimState> {
        self.advance(state, step, true, &mut Clock(None))
    }

    fn predict(&self, s: &SimState, step: usize, clock: &mut Clock<'_>) -> Result<Predictor> {
        let p = &self.params;
        let smax = p.phi_sigma0_max;
        let (psi_sigma, psi_m, n_t, n_sigma, n_m) =
            clock.time(Stage::Nonlinear, || -> Result<_> {
                let phi_v = s.phi_v();
                let psi_sigma = s.psi_sigma(smax)?;
                let psi_m = s.psi_m();
                let n_t = model::nonlinear_t(&s.phi_t, &phi_v, &s.phi_sigma, &s.theta, p)?;
                let n_sigma = model::nonlinear_sigma(&phi_v, &psi_sigma, p)?;
                let n_m = model::nonlinear_m(&phi_v, &psi_m, &s.phi_sigma, &s.theta, p)?;
                Ok((psi_sigma, psi_m, n_t, n_sigma, n_m))
            })?;
        let (phi_t, psi_sigma_pred, psi_m_pred) =
            clock.time(Stage::Spectral, || -> Result<_> {
                Ok((
                    self.phase.propagate(&s.phi_t, &n_t)?,
                    self.nutrient.propagate(&psi_sigma, &n_sigma)?,
                    self.mde.propagate(&psi_m, &n_m)?,
                ))
            })?;
        for f in [&phi_t, &psi_sigma_pred, &psi_m_pred] {
            if !f.is_finite() {
                return Err(Error::Numerical {
                    step,
                    stage: "predictor",
                });
            }
        }
        Ok(Predictor {
            n_t,
            n_sigma,
            n_m,
            phi_t,
            psi_sigma_pred,
            psi_m_pred,
        })
    }

    fn advance(
        &self,
        s: &SimState,
        step: usize,
        second_order: bool,
        clock: &mut Clock<'_>,
    ) -> Result<SimState> {
        let p = &self.params;
        let tau = self.cfg.tau;
        let smax = p.phi_sigma0_max;
        let pred = self.predict(s, step, clock)?;
        let phi_sigma_pred = model::phi_sigma_from_psi(&pred.psi_sigma_pred, smax)?;
        let phi_t_hat = model::cutoff(&pred.phi_t);

        let (phi_t_new, psi_sigma_new, psi_m_new) = if second_order {
            let phi_v_pred = phi_t_hat.zip_map(&s.phi_n, |t, n| t - n)?;
            let (d_t, d_sigma, d_m) = clock.time(Stage::Nonlinear, || -> Result<_> {
                let n_t1 =
                    model::nonlinear_t(&phi_t_hat, &phi_v_pred, &phi_sigma_pred, &s.theta, p)?;
                let n_sigma1 = model::nonlinear_sigma(&phi_v_pred, &pred.psi_sigma_pred, p)?;
                let n_m1 = model::nonlinear_m(
                    &phi_v_pred,
                    &pred.psi_m_pred,
                    &phi_sigma_pred,
                    &s.theta,
                    p,
                )?;
                Ok((
                    n_t1.zip_map(&pred.n_t, |a, b| a - b)?,
                    n_sigma1.zip_map(&pred.n_sigma, |a, b| a - b)?,
                    n_m1.zip_map(&pred.n_m, |a, b| a - b)?,
                ))
            })?;
            let (t_bar, sig, m) = clock.time(Stage::Spectral, || -> Result<_> {
                Ok((
                    self.phase.correct(&phi_t_hat, &d_t)?,
                    self.nutrient.correct(&pred.psi_sigma_pred, &d_sigma)?,
                    self.mde.correct(&pred.psi_m_pred, &d_m)?,
                ))
            })?;
            for f in [&t_bar, &sig, &m] {
                if !f.is_finite() {
                    return Err(Error::Numerical {
                        step,
                        stage: "corrector",
                    });
                }
            }
            (model::cutoff(&t_bar), sig, m)
        } else {
            (
                phi_t_hat,
                pred.psi_sigma_pred.clone(),
                pred.psi_m_pred.clone(),
            )
        };

        clock.time(Stage::Pointwise, || {
            let mut phi_sigma = model::phi_sigma_from_psi(&psi_sigma_new, smax)?;
            let phi_m = model::phi_m_from_psi(&psi_m_new);
            let theta = trapezoid_theta(&s.theta, &s.phi_m, &phi_m, p, tau)?;
            let phi_n = trapezoid_n(
                &s.phi_n,
                &s.phi_t,
                &phi_t_new,
                &s.phi_sigma,
                &phi_sigma_pred,
                p,
                tau,
            )?;
            if self.cfg.nutrient_right_edge_source {
                clamp_right_edge(&mut phi_sigma, smax);
            }
            let next = SimState {
                t: s.t + tau,
                phi_t: phi_t_new,
                phi_n,
                phi_sigma,
                phi_m,
                theta,
            };
            if !next.is_finite() {
                return Err(Error::Numerical {
                    step,
                    stage: "trapezoid",
                });
            }
            Ok(next)
        })
    }
}

fn clamp_right_edge(field: &mut ScalarField, value: f64) {
    let g = *field.grid();
    let n = g.cells();
    for base in g.line_bases(0) {
        field.data_mut()[base + n] = value;
    }
}

/// One broken structure-preservation property at one node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub rule: &'static str,
    pub node: usize,
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} violates {} at node {} (value {:e})",
            self.field, self.rule, self.node, self.value
        )
    }
}

/// Pointwise bounds every admissible state satisfies:
/// `0 <= phi_N <= phi_T <= 1`, `|psi_sigma| <= 1`, `|psi_M| <= 1`,
/// `0 <= theta <= theta0_max`.
pub fn check_state(state: &SimState, params: &ModelParams) -> Vec<Violation> {
    let tol = INVARIANT_SLACK;
    let smax = params.phi_sigma0_max;
    let mut out = Vec::new();
    let mut push = |field, rule, node, value| {
        // Keep the report small on badly broken states.
        if out.len() < 32 {
            out.push(Violation {
                field,
                rule,
                node,
                value,
            });
        }
    };
    for k in 0..state.phi_t.grid().len() {
        let t = state.phi_t.data()[k];
        let n = state.phi_n.data()[k];
        let ps = 2.0 * state.phi_sigma.data()[k] / smax - 1.0;
        let pm = 2.0 * state.phi_m.data()[k] - 1.0;
        let th = state.theta.data()[k];
        if !(t >= -tol && t <= 1.0 + tol) {
            push("phi_T", "0 <= phi_T <= 1", k, t);
        }
        if !(n >= -tol) {
            push("phi_N", "phi_N >= 0", k, n);
        }
        if !(n <= t + tol) {
            push("phi_N", "phi_N <= phi_T", k, n - t);
        }
        if !(ps.abs() <= 1.0 + tol) {
            push("psi_sigma", "|psi_sigma| <= 1", k, ps);
        }
        if !(pm.abs() <= 1.0 + tol) {
            push("psi_M", "|psi_M| <= 1", k, pm);
        }
        if !(th >= -tol && th <= params.theta0_max + tol) {
            push("theta", "0 <= theta <= theta0_max", k, th);
        }
    }
    out
}

/// [`check_state`] on `next` plus the monotone ECM decay `theta^{n+1} <= theta^n`.
pub fn check_step(prev: &SimState, next: &SimState, params: &ModelParams) -> Vec<Violation> {
    let mut out = check_state(next, params);
    for (k, (a, b)) in prev.theta.data().iter().zip(next.theta.data()).enumerate() {
        if !(b <= &(a + INVARIANT_SLACK)) && out.len() < 32 {
            out.push(Violation {
                field: "theta",
                rule: "theta^{n+1} <= theta^n",
                node: k,
                value: b - a,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(grid: GridSpec, phi_t: ScalarField, theta: ScalarField, sigma: f64) -> SimState {
        SimState {
            t: 0.0,
            phi_n: ScalarField::zeros(grid),
            phi_sigma: ScalarField::constant(grid, sigma),
            phi_m: ScalarField::zeros(grid),
            phi_t,
            theta,
        }
    }

    #[test]
    fn scheme_parse() {
        assert_eq!("etd1".parse::<Scheme>().unwrap(), Scheme::Etd1);
        assert!("rk4".parse::<Scheme>().is_err());
        assert_eq!(Scheme::Etdrk2.to_string(), "etdrk2");
    }

    #[test]
    fn tau_bounds_are_enforced() {
        let p = ModelParams::baseline();
        let cfg = StepConfig {
            tau: 3.0,
            scheme: Scheme::Etdrk2,
            nutrient_right_edge_source: false,
        };
        let err = cfg.validate(&p).unwrap_err().to_string();
        assert!(err.contains("lambda_VN"), "{err}");
        let g = GridSpec::new(2, 4).unwrap();
        let f = ScalarField::zeros(g);
        assert!(trapezoid_theta(&f, &f, &f, &p, 2.5).is_err());
        assert!(trapezoid_n(&f, &f, &f, &f, &f, &p, 2.5).is_err());
    }

    #[test]
    fn theta_trapezoid_values() {
        let p = ModelParams::baseline();
        assert!((trapezoid_theta_value(1.0, 1.0, 1.0, &p, 1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(trapezoid_theta_value(0.8, 0.0, 0.0, &p, 1.0), 0.8);
        assert_eq!(trapezoid_theta_value(1.0, 1.0, 1.0, &p, 2.0), 0.0);
    }

    #[test]
    fn necrotic_trapezoid_switches() {
        let p = ModelParams::baseline();
        // nutrient far below threshold: H ~ 1
        let v = trapezoid_n_value(0.0, 1.0, 1.0, 0.0, 0.0, &p, 1.0);
        assert!((v - 2.0 / 3.0).abs() < 1e-3, "{v}");
        // nutrient far above threshold: H ~ 0
        let v = trapezoid_n_value(0.2, 1.0, 1.0, 1.0, 1.0, &p, 1.0);
        assert!((v - 0.2).abs() < 1e-3, "{v}");
    }

    #[test]
    fn tumor_free_nutrient_is_stationary() {
        let g = GridSpec::new(2, 16).unwrap();
        let p = ModelParams::baseline();
        for scheme in [Scheme::Etd1, Scheme::Etdrk2] {
            let cfg = StepConfig {
                tau: 1e-2,
                scheme,
                nutrient_right_edge_source: false,
            };
            let st = Stepper::new(g, p.clone(), cfg).unwrap();
            let s0 = state(
                g,
                ScalarField::zeros(g),
                ScalarField::constant(g, 0.9),
                0.63,
            );
            let s1 = st.step(&s0, 0).unwrap();
            assert!(s1.phi_sigma.data().iter().all(|v| (v - 0.63).abs() < 1e-13));
            assert_eq!(s1.theta, s0.theta);
            assert!(s1.phi_n.max_abs() == 0.0);
        }
    }

    #[test]
    fn etd1_matches_etdrk2_predictor() {
        let g = GridSpec::new(2, 16).unwrap();
        let p = ModelParams::baseline();
        let phi = ScalarField::from_fn(g, |x, y, _| (0.9 - 3.0 * (x * x + y * y)).clamp(0.0, 1.0));
        let s0 = state(g, phi, ScalarField::constant(g, 0.75), 1.0);
        let cfg = StepConfig {
            tau: 1e-3,
            scheme: Scheme::Etd1,
            nutrient_right_edge_source: false,
        };
        let st = Stepper::new(g, p.clone(), cfg).unwrap();
        let a = st.etd1_step(&s0, 0).unwrap();
        let pred = st.predict(&s0, 0, &mut Clock(None)).unwrap();
        assert_eq!(a.phi_t, model::cutoff(&pred.phi_t));
        assert_eq!(a.phi_m, model::phi_m_from_psi(&pred.psi_m_pred));
        assert_eq!(
            a.phi_sigma,
            model::phi_sigma_from_psi(&pred.psi_sigma_pred, 1.0).unwrap()
        );
    }

    #[test]
    fn right_edge_clamp_sets_only_the_last_layer() {
        let g = GridSpec::new(2, 4).unwrap();
        let mut f = ScalarField::zeros(g);
        clamp_right_edge(&mut f, 1.0);
        for idx in 0..g.len() {
            let [i, _, _] = g.unravel(idx);
            assert_eq!(f.data()[idx], if i == 4 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn invariant_checker_flags_injected_values() {
        let g = GridSpec::new(2, 4).unwrap();
        let p = ModelParams::baseline();
        let s = state(
            g,
            ScalarField::constant(g, 0.5),
            ScalarField::constant(g, 0.5),
            1.0,
        );
        assert!(check_state(&s, &p).is_empty());
        let mut bad = s.clone();
        bad.phi_sigma.data_mut()[3] = 1.25; // psi_sigma = 1.5
        bad.theta.data_mut()[4] = 0.6;
        let v = check_step(&s, &bad, &p);
        assert!(v.iter().any(|x| x.field == "psi_sigma" && x.node == 3));
        assert!(v
            .iter()
            .any(|x| x.rule.contains("theta^{n+1}") && x.node == 4));
    }
}
