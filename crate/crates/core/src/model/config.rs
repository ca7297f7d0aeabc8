use serde::{Deserialize, Serialize};

use super::ParameterSpace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmissionConfig {
    /// Per-group transmission coefficient (per year).
    pub beta: Vec<f64>,
    pub mixing: Vec<Vec<f64>>,
    /// Relative infectiousness of undiagnosed, diagnosed and treated infections.
    pub infectiousness: [f64; 3],
    pub prophylaxis_efficacy: f64,
    #[serde(default)]
    pub prophylaxis_discontinuation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub population: Vec<f64>,
    pub prevalence: Vec<f64>,
    /// Fractions of prevalent infections that are undiagnosed, diagnosed, treated.
    pub care_split: [f64; 3],
    pub prophylaxis_fraction: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub prophylaxis_year: f64,
    pub diagnosed_year: f64,
    pub treated_year: f64,
    pub per_test: f64,
    pub per_diagnosis: f64,
}

impl CostConfig {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            prophylaxis_year: self.prophylaxis_year * factor,
            diagnosed_year: self.diagnosed_year * factor,
            treated_year: self.treated_year * factor,
            per_test: self.per_test * factor,
            per_diagnosis: self.per_diagnosis * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lever {
    /// Uptake rate S → P.
    Prophylaxis,
    /// Treatment uptake I^D → I^T.
    Treatment,
    /// Diagnosis rate I^U → I^D.
    Testing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterConfig {
    pub name: String,
    /// Which built-in rate this parameter drives; omitted for external models.
    #[serde(default)]
    pub lever: Option<Lever>,
    #[serde(default)]
    pub groups: Vec<String>,
    #[serde(default)]
    pub baseline: Option<f64>,
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default)]
    pub upper: Option<f64>,
}

impl ParameterConfig {
    /// Box defaults to `[baseline, 3 * baseline]`.
    pub fn bounds(&self) -> Result<(f64, f64)> {
        let lower = self.lower.or(self.baseline);
        let upper = self.upper.or(self.baseline.map(|b| 3.0 * b));
        match (lower, upper) {
            (Some(l), Some(u)) => Ok((l, u)),
            _ => Err(Error::Config(format!(
                "parameter {} needs a baseline or explicit lower/upper bounds",
                self.name
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub groups: Vec<String>,
    /// Output labels; derived from the groups for the built-in model.
    #[serde(default)]
    pub outputs: Option<Vec<String>>,
    pub horizon: f64,
    pub step: f64,
    pub transmission: TransmissionConfig,
    pub initial: InitialConfig,
    pub costs: CostConfig,
    pub parameters: Vec<ParameterConfig>,
}

impl ModelConfig {
    pub fn parameter_space(&self) -> Result<ParameterSpace> {
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for p in &self.parameters {
            let (l, u) = p.bounds()?;
            lower.push(l);
            upper.push(u);
        }
        ParameterSpace::new(self.parameters.iter().map(|p| p.name.clone()).collect(), lower, upper)
    }

    pub fn output_labels(&self) -> Vec<String> {
        if let Some(o) = &self.outputs {
            return o.clone();
        }
        let mut labels: Vec<String> = self.groups.iter().map(|g| format!("infections_{g}")).collect();
        labels.push("infections_total".into());
        labels.push("spending".into());
        labels
    }

    pub fn group_index(&self, name: &str) -> Result<usize> {
        self.groups
            .iter()
            .position(|g| g == name)
            .ok_or_else(|| Error::Config(format!("unknown group {name}")))
    }

    /// Checks shapes and that each group gets exactly one rate per lever.
    pub fn validate_builtin(&self) -> Result<()> {
        let g = self.groups.len();
        if g == 0 {
            return Err(Error::Config("model needs at least one group".into()));
        }
        let t = &self.transmission;
        let i = &self.initial;
        let lens = [
            ("transmission.beta", t.beta.len()),
            ("transmission.mixing", t.mixing.len()),
            ("initial.population", i.population.len()),
            ("initial.prevalence", i.prevalence.len()),
            ("initial.prophylaxis_fraction", i.prophylaxis_fraction.len()),
        ];
        for (name, len) in lens {
            if len != g {
                return Err(Error::Config(format!("{name} has {len} entries for {g} groups")));
            }
        }
        if t.mixing.iter().any(|r| r.len() != g) {
            return Err(Error::Config("mixing matrix must be square".into()));
        }
        let nonneg = t
            .beta
            .iter()
            .chain(t.mixing.iter().flatten())
            .chain(t.infectiousness.iter());
        if nonneg.clone().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::Config("transmission rates must be nonnegative".into()));
        }
        if i.population.iter().any(|n| n.is_nan() || *n <= 0.0) {
            return Err(Error::Config("group populations must be positive".into()));
        }
        let fracs = i
            .prevalence
            .iter()
            .chain(i.prophylaxis_fraction.iter())
            .chain(i.care_split.iter());
        if fracs.clone().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config("initial fractions must lie in [0, 1]".into()));
        }
        if (i.care_split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("initial.care_split must sum to 1".into()));
        }
        if !(0.0..=1.0).contains(&t.prophylaxis_efficacy) || t.prophylaxis_discontinuation < 0.0 {
            return Err(Error::Config(
                "prophylaxis efficacy/discontinuation out of range".into(),
            ));
        }
        super::ode::step_count(self.horizon, self.step)?;

        let mut covered = std::collections::HashMap::new();
        for p in &self.parameters {
            let lever = p
                .lever
                .ok_or_else(|| Error::Config(format!("parameter {} has no lever", p.name)))?;
            let (lo, _) = p.bounds()?;
            if lo < 0.0 {
                return Err(Error::Config(format!("parameter {} allows negative rates", p.name)));
            }
            for gname in &p.groups {
                let gi = self.group_index(gname)?;
                if covered.insert((lever, gi), p.name.clone()).is_some() {
                    return Err(Error::Config(format!("group {gname} has two {lever:?} parameters")));
                }
            }
        }
        for lever in [Lever::Prophylaxis, Lever::Treatment, Lever::Testing] {
            for (gi, gname) in self.groups.iter().enumerate() {
                if !covered.contains_key(&(lever, gi)) {
                    return Err(Error::Config(format!("group {gname} has no {lever:?} parameter")));
                }
            }
        }
        self.parameter_space()?;
        Ok(())
    }
}
