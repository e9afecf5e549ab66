//! Browser bindings: a small 2D simulation, the Upsilon curves, and a fault
//! injector for the structure monitors.

use wasm_bindgen::prelude::*;

use tumor_etd::scenarios::{FaultInjection, MonitorRecord, Scenario};
use tumor_etd::spectral::upsilon;
use tumor_etd::stepper::{check_state, check_step};
use tumor_etd::{SimState, Stepper};

fn js_err(e: tumor_etd::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Simulation {
    scenario: Scenario,
    stepper: Stepper,
    state: SimState,
    steps: usize,
    breaches: Vec<String>,
}

#[wasm_bindgen]
impl Simulation {
    /// `scenario` is `tumor_ring_2d` or `nutrient_source_2d`; `preset` a parameter preset.
    #[wasm_bindgen(constructor)]
    pub fn new(scenario: &str, preset: &str, n: usize, tau: f64) -> Result<Simulation, JsError> {
        let base = Scenario::named(scenario, preset).map_err(js_err)?;
        if base.grid.dim() != 2 {
            return Err(JsError::new("the browser demo runs 2D scenarios only"));
        }
        let scenario = Scenario {
            tau,
            snapshot_times: Vec::new(),
            ..base.with_cells(n).map_err(js_err)?
        };
        let state = scenario.initial_state().map_err(js_err)?;
        let stepper = Stepper::new(
            scenario.grid,
            scenario.params.clone(),
            scenario.step_config(),
        )
        .map_err(js_err)?;
        Ok(Simulation {
            scenario,
            stepper,
            state,
            steps: 0,
            breaches: Vec::new(),
        })
    }

    /// Advances `k` steps, checking the structure bounds after each one.
    pub fn step(&mut self, k: usize) -> Result<(), JsError> {
        for _ in 0..k {
            let next = self.stepper.step(&self.state, self.steps).map_err(js_err)?;
            let found = check_step(&self.state, &next, self.stepper.params());
            self.steps += 1;
            if let Some(v) = found.first() {
                self.breaches.push(format!("step {}: {v}", self.steps));
            }
            self.state = next;
            self.state.t = self.steps as f64 * self.scenario.tau;
        }
        Ok(())
    }

    /// Overwrites the nutrient at the domain center with `psi_value` (in
    /// the `[-1, 1]` scaling) and returns the resulting bound violations.
    pub fn inject_nutrient(&mut self, psi_value: f64) -> Result<Vec<String>, JsError> {
        let g = self.scenario.grid;
        let c = g.cells() / 2;
        let fault = FaultInjection {
            step: self.steps,
            field: "psi_sigma".into(),
            node: g.index(&[c, c]),
            value: psi_value,
        };
        fault
            .apply(&mut self.state, self.stepper.params())
            .map_err(js_err)?;
        Ok(check_state(&self.state, self.stepper.params())
            .iter()
            .map(|v| v.to_string())
            .collect())
    }

    /// Field values in grid order (x fastest). Names as in the snapshot files.
    pub fn field(&self, name: &str) -> Result<Vec<f64>, JsError> {
        let p = self.stepper.params();
        let f = match name {
            "phi_T" => self.state.phi_t.clone(),
            "phi_N" => self.state.phi_n.clone(),
            "phi_sigma" => self.state.phi_sigma.clone(),
            "phi_M" => self.state.phi_m.clone(),
            "theta" => self.state.theta.clone(),
            "phi_V" => self.state.phi_v(),
            "psi_sigma" => self.state.psi_sigma(p.phi_sigma0_max).map_err(js_err)?,
            other => return Err(JsError::new(&format!("unknown field `{other}`"))),
        };
        Ok(f.data().to_vec())
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.scenario.grid.nodes_per_axis()
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    /// Monitor record of the current state plus recorded breaches, as JSON.
    pub fn stats(&self) -> String {
        let rec = MonitorRecord::of(self.steps, &self.state, self.stepper.params());
        serde_json::json!({ "monitor": rec, "breaches": self.breaches.len(), "recent": self.breaches.iter().rev().take(3).collect::<Vec<_>>() })
            .to_string()
    }
}

/// Samples `Upsilon_i(x)` on `count` points of `[0, x_max]`.
#[wasm_bindgen]
pub fn upsilon_curve(i: usize, x_max: f64, count: usize) -> Result<Vec<f64>, JsError> {
    let count = count.max(2);
    (0..count)
        .map(|k| upsilon(i, x_max * k as f64 / (count - 1) as f64).map_err(js_err))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_and_fields() {
        let mut s = Simulation::new("tumor_ring_2d", "baseline", 16, 0.01)
            .ok()
            .unwrap();
        s.step(3).ok().unwrap();
        assert!((s.time() - 0.03).abs() < 1e-15);
        assert_eq!(s.field("phi_T").ok().unwrap().len(), 17 * 17);
        let stats: serde_json::Value = serde_json::from_str(&s.stats()).unwrap();
        assert_eq!(stats["breaches"], 0);
        assert_eq!(stats["monitor"]["step"], 3);
    }

    #[test]
    fn injected_nutrient_is_reported() {
        let mut s = Simulation::new("nutrient_source_2d", "baseline", 16, 0.01)
            .ok()
            .unwrap();
        let v = s.inject_nutrient(1.5).ok().unwrap();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("psi_sigma"), "{}", v[0]);
        assert!(s.inject_nutrient(0.5).ok().unwrap().is_empty());
    }

    #[test]
    fn upsilon_curves_start_at_the_series_values() {
        assert_eq!(upsilon_curve(0, 2.0, 5).ok().unwrap()[0], 1.0);
        assert_eq!(upsilon_curve(1, 2.0, 5).ok().unwrap()[0], 1.0);
        assert_eq!(upsilon_curve(2, 2.0, 5).ok().unwrap()[0], 0.5);
    }
}
