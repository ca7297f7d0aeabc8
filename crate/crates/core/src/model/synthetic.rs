//! Built-in stratified transmission model.
//!
//! Each group g carries five compartments: susceptible S, on prophylaxis P,
//! undiagnosed I^U, diagnosed untreated I^D and treated I^T. Groups are
//! closed; they interact only through the mixing matrix in the force of
//! infection
//!
//! ```text
//! λ_g = β_g Σ_h M_gh (I^U_h + w_D I^D_h + w_T I^T_h) / N_h
//! ```
//!
//! Alongside the compartments the integrator carries cumulative infections
//! and usage counters (prophylaxis person-years, diagnosed and treated
//! person-years, tests, diagnoses) from which spending is priced.

use serde::{Deserialize, Serialize};

use super::config::{CostConfig, Lever, ModelConfig};
use super::ode::rk4;
use super::ParameterSpace;
use crate::error::{Error, Result};

/// Compartments per group: S, P, I^U, I^D, I^T.
pub const CARE_STAGES: usize = 5;
const USAGE: usize = 5;
const NEGATIVE_TOL: f64 = 1e-9;

const S: usize = 0;
const P: usize = 1;
const IU: usize = 2;
const ID: usize = 3;
const IT: usize = 4;

const U_PROPHYLAXIS: usize = 0;
const U_DIAGNOSED: usize = 1;
const U_TREATED: usize = 2;
const U_TESTS: usize = 3;
const U_DIAGNOSES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    /// Group-major: `[S, P, I^U, I^D, I^T]` for each group in turn.
    pub compartments: Vec<f64>,
    pub cumulative_infections: Vec<f64>,
    /// Per group: prophylaxis years, diagnosed years, treated years, tests, diagnoses.
    pub usage: Vec<[f64; USAGE]>,
}

impl ModelState {
    fn groups(&self) -> usize {
        self.cumulative_infections.len()
    }

    pub fn group_population(&self, g: usize) -> f64 {
        self.compartments[g * CARE_STAGES..(g + 1) * CARE_STAGES].iter().sum()
    }

    /// Spending accrued since t=0 under the given unit costs.
    pub fn cumulative_cost(&self, costs: &CostConfig) -> f64 {
        self.usage
            .iter()
            .map(|u| {
                costs.prophylaxis_year * u[U_PROPHYLAXIS]
                    + costs.diagnosed_year * u[U_DIAGNOSED]
                    + costs.treated_year * u[U_TREATED]
                    + costs.per_test * u[U_TESTS]
                    + costs.per_diagnosis * u[U_DIAGNOSES]
            })
            .sum()
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut v = self.compartments.clone();
        v.extend(&self.cumulative_infections);
        for u in &self.usage {
            v.extend(u);
        }
        v
    }

    fn from_flat(groups: usize, v: &[f64]) -> Self {
        let nc = groups * CARE_STAGES;
        let compartments = v[..nc].to_vec();
        let cumulative_infections = v[nc..nc + groups].to_vec();
        let usage = (0..groups)
            .map(|g| {
                let base = nc + groups + g * USAGE;
                let mut u = [0.0; USAGE];
                u.copy_from_slice(&v[base..base + USAGE]);
                u
            })
            .collect();
        Self {
            compartments,
            cumulative_infections,
            usage,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ModelState>,
    pub costs: CostConfig,
}

/// Outcome vector: new infections per group, total new infections, spending.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeVector {
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct GroupRates {
    prophylaxis: f64,
    treatment: f64,
    testing: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticModel {
    config: ModelConfig,
    space: ParameterSpace,
}

impl SyntheticModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate_builtin()?;
        let space = config.parameter_space()?;
        Ok(Self { config, space })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn output_labels(&self) -> Vec<String> {
        self.config.output_labels()
    }

    pub fn initial_state(&self) -> ModelState {
        let g = self.config.groups.len();
        let init = &self.config.initial;
        let mut compartments = vec![0.0; g * CARE_STAGES];
        for k in 0..g {
            let n = init.population[k];
            let infected = n * init.prevalence[k];
            let uninfected = n - infected;
            let on_prophylaxis = uninfected * init.prophylaxis_fraction[k];
            let c = &mut compartments[k * CARE_STAGES..(k + 1) * CARE_STAGES];
            c[S] = uninfected - on_prophylaxis;
            c[P] = on_prophylaxis;
            c[IU] = infected * init.care_split[0];
            c[ID] = infected * init.care_split[1];
            c[IT] = infected * init.care_split[2];
        }
        ModelState {
            compartments,
            cumulative_infections: vec![0.0; g],
            usage: vec![[0.0; USAGE]; g],
        }
    }

    fn rates(&self, theta_hat: &[f64]) -> Result<Vec<GroupRates>> {
        self.space.to_unit(theta_hat)?;
        let mut rates = vec![
            GroupRates {
                prophylaxis: 0.0,
                treatment: 0.0,
                testing: 0.0,
            };
            self.config.groups.len()
        ];
        for (p, &value) in self.config.parameters.iter().zip(theta_hat) {
            for gname in &p.groups {
                let r = &mut rates[self.config.group_index(gname)?];
                match p.lever {
                    Some(Lever::Prophylaxis) => r.prophylaxis = value,
                    Some(Lever::Treatment) => r.treatment = value,
                    Some(Lever::Testing) => r.testing = value,
                    None => {}
                }
            }
        }
        Ok(rates)
    }

    /// Integrates the model with fixed-step RK4 from t=0 to the horizon.
    pub fn simulate(&self, theta_hat: &[f64]) -> Result<Trajectory> {
        self.simulate_with(theta_hat, self.config.horizon, self.config.step)
    }

    pub fn simulate_with(&self, theta_hat: &[f64], horizon: f64, step: f64) -> Result<Trajectory> {
        let rates = self.rates(theta_hat)?;
        let groups = self.config.groups.len();
        let tr = &self.config.transmission;
        let population = self.config.initial.population.clone();
        let [w_u, w_d, w_t] = tr.infectiousness;
        let leak = 1.0 - tr.prophylaxis_efficacy;
        let omega = tr.prophylaxis_discontinuation;
        let nc = groups * CARE_STAGES;

        let rhs = |_t: f64, x: &[f64], dx: &mut [f64]| {
            let mut weighted = vec![0.0; groups];
            for h in 0..groups {
                let c = &x[h * CARE_STAGES..(h + 1) * CARE_STAGES];
                weighted[h] = (w_u * c[IU] + w_d * c[ID] + w_t * c[IT]) / population[h];
            }
            for g in 0..groups {
                let lambda = tr.beta[g] * tr.mixing[g].iter().zip(&weighted).map(|(m, w)| m * w).sum::<f64>();
                let r = rates[g];
                let c = &x[g * CARE_STAGES..(g + 1) * CARE_STAGES];
                let inf_s = lambda * c[S];
                let inf_p = leak * lambda * c[P];
                let start = r.prophylaxis * c[S];
                let stop = omega * c[P];
                let diagnosed = r.testing * c[IU];
                let treated = r.treatment * c[ID];

                let d = &mut dx[g * CARE_STAGES..(g + 1) * CARE_STAGES];
                d[S] = -inf_s - start + stop;
                d[P] = start - stop - inf_p;
                d[IU] = inf_s + inf_p - diagnosed;
                d[ID] = diagnosed - treated;
                d[IT] = treated;

                dx[nc + g] = inf_s + inf_p;
                let u = nc + groups + g * USAGE;
                dx[u + U_PROPHYLAXIS] = c[P];
                dx[u + U_DIAGNOSED] = c[ID];
                dx[u + U_TREATED] = c[IT];
                dx[u + U_TESTS] = r.testing * (c[S] + c[IU]);
                dx[u + U_DIAGNOSES] = diagnosed;
            }
        };

        let guard = |t: f64, x: &mut [f64]| -> Result<()> {
            for (i, v) in x.iter_mut().enumerate() {
                if *v < 0.0 {
                    if *v < -NEGATIVE_TOL {
                        return Err(Error::Integration {
                            time: t,
                            reason: format!("state component {i} went negative ({v}); step too large"),
                        });
                    }
                    *v = 0.0;
                }
            }
            Ok(())
        };

        let x0 = self.initial_state().to_flat();
        let (times, flat) = rk4(rhs, &x0, 0.0, horizon, step, guard)?;
        Ok(Trajectory {
            times,
            states: flat.iter().map(|v| ModelState::from_flat(groups, v)).collect(),
            costs: self.config.costs,
        })
    }

    pub fn evaluate(&self, theta_hat: &[f64]) -> Result<OutcomeVector> {
        let traj = self.simulate(theta_hat)?;
        let mut out = outcomes(&traj)?;
        out.labels = self.output_labels();
        Ok(out)
    }
}

/// Infections per group over the horizon, their total, and total spending.
pub fn outcomes(trajectory: &Trajectory) -> Result<OutcomeVector> {
    let (first, last) = match (trajectory.states.first(), trajectory.states.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::InvalidArgument("empty trajectory".into())),
    };
    let groups = first.groups();
    let mut values: Vec<f64> = (0..groups)
        .map(|g| (last.cumulative_infections[g] - first.cumulative_infections[g]).max(0.0))
        .collect();
    let total = values.iter().sum();
    values.push(total);
    let spending = last.cumulative_cost(&trajectory.costs) - first.cumulative_cost(&trajectory.costs);
    values.push(spending.max(0.0));
    let mut labels: Vec<String> = (0..groups).map(|g| format!("infections_{g}")).collect();
    labels.push("infections_total".into());
    labels.push("spending".into());
    Ok(OutcomeVector { labels, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::WorkflowConfig;

    fn model() -> SyntheticModel {
        SyntheticModel::new(WorkflowConfig::default().model).unwrap()
    }

    #[test]
    fn population_is_conserved() {
        let m = model();
        let traj = m.simulate(&m.space().upper.clone()).unwrap();
        let first = &traj.states[0];
        for s in &traj.states {
            for g in 0..4 {
                let rel = (s.group_population(g) - first.group_population(g)).abs() / first.group_population(g);
                assert!(rel < 1e-8);
            }
        }
    }

    #[test]
    fn zero_transmission_means_zero_infections() {
        let mut cfg = WorkflowConfig::default().model;
        cfg.transmission.beta = vec![0.0; 4];
        let m = SyntheticModel::new(cfg).unwrap();
        let traj = m.simulate(&m.space().lower.clone()).unwrap();
        for s in &traj.states {
            assert!(s.cumulative_infections.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn zero_infection_spending_is_prophylaxis_plus_testing() {
        let mut cfg = WorkflowConfig::default().model;
        cfg.transmission.beta = vec![0.0; 4];
        cfg.initial.prevalence = vec![0.0; 4];
        let m = SyntheticModel::new(cfg).unwrap();
        let traj = m.simulate(&m.space().lower.clone()).unwrap();
        let y = outcomes(&traj).unwrap();
        assert!(y.values[..5].iter().all(|v| *v == 0.0));
        let last = traj.states.last().unwrap();
        let expect: f64 = last
            .usage
            .iter()
            .map(|u| traj.costs.prophylaxis_year * u[U_PROPHYLAXIS] + traj.costs.per_test * u[U_TESTS])
            .sum();
        assert!(expect > 0.0);
        assert!((y.values[5] - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn outcome_sum_and_cost_linearity() {
        let m = model();
        let mut traj = m.simulate(&m.space().lower.clone()).unwrap();
        let y = outcomes(&traj).unwrap();
        let sum: f64 = y.values[..4].iter().sum();
        assert!((y.values[4] - sum).abs() <= 1e-10 * sum);
        assert!(y.values.iter().all(|v| *v >= 0.0));

        traj.costs = traj.costs.scaled(2.0);
        let y2 = outcomes(&traj).unwrap();
        assert_eq!(&y2.values[..5], &y.values[..5]);
        assert!((y2.values[5] - 2.0 * y.values[5]).abs() <= 1e-12 * y.values[5]);
    }

    #[test]
    fn trajectory_includes_endpoints() {
        let m = model();
        let traj = m.simulate(&m.space().lower.clone()).unwrap();
        assert_eq!(traj.times.len(), 801);
        assert_eq!(traj.times[0], 0.0);
        assert!((traj.times[800] - 8.0).abs() < 1e-12);
        assert_eq!(traj.states[0], m.initial_state());
    }

    #[test]
    fn rejects_out_of_box_parameters() {
        let m = model();
        let mut theta = m.space().lower.clone();
        theta[0] = -1.0;
        assert!(matches!(m.simulate(&theta), Err(Error::OutsideBox { .. })));
    }

    #[test]
    fn huge_step_trips_the_negativity_guard() {
        let m = model();
        let theta = m.space().upper.clone();
        let err = m.simulate_with(&theta, 8.0, 4.0).unwrap_err();
        assert!(matches!(err, Error::Integration { .. }), "{err}");
    }

    #[test]
    fn config_validation() {
        let mut cfg = WorkflowConfig::default().model;
        cfg.parameters.pop();
        assert!(SyntheticModel::new(cfg).is_err());
        let mut cfg = WorkflowConfig::default().model;
        cfg.transmission.mixing[0].pop();
        assert!(SyntheticModel::new(cfg).is_err());
        let mut cfg = WorkflowConfig::default().model;
        cfg.step = 0.03;
        assert!(SyntheticModel::new(cfg).is_err());
    }
}
