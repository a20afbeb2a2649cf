//! Run configuration: one TOML file of dotted keys plus `--set key=value`
//! overrides of the same names. Every key has a default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use confgames_core::{
    build_general_sum, build_pursuit_evasion, random_aq_game, ConfigGame, GeneralSumSpec, ParamBox, PursuitEvasionSpec,
    RandomGameSpec, SolverSettings,
};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    PursuitEvasion,
    GeneralSum,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub alpha: f64,
    pub epsilon: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub stationarity_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            alpha: s.step_size,
            epsilon: s.tolerance,
            max_outer: s.max_outer,
            max_inner: s.max_inner,
            stationarity_tol: s.stationarity_tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PursuitEvasionSection {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl Default for PursuitEvasionSection {
    fn default() -> Self {
        let s = PursuitEvasionSpec::default();
        Self {
            kappa1: s.kappa1,
            kappa2: s.kappa2,
            kappa3: s.kappa3,
            horizon: s.horizon,
            x0: s.x0,
            theta_min: s.theta_box.min,
            theta_max: s.theta_box.max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneralSumSection {
    pub q_v: f64,
    pub w_r: f64,
    pub control_weight: f64,
    pub q_h_level: f64,
    pub switch_time: f64,
    pub v_o: [f64; 2],
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub theta_min: [f64; 2],
    pub theta_max: [f64; 2],
}

impl Default for GeneralSumSection {
    fn default() -> Self {
        let s = GeneralSumSpec::default();
        Self {
            q_v: s.q_v,
            w_r: s.w_r,
            control_weight: s.control_weight,
            q_h_level: s.q_h_level,
            switch_time: s.switch_time,
            v_o: s.v_o,
            horizon: s.horizon,
            x0: s.x0,
            theta_min: [s.theta_box[0].min, s.theta_box[1].min],
            theta_max: [s.theta_box[0].max, s.theta_box[1].max],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomSection {
    pub seed: u64,
    pub players: usize,
    pub state_dim: usize,
    pub control_dim: usize,
    pub affine: bool,
    pub theta_dependent: bool,
}

impl Default for RandomSection {
    fn default() -> Self {
        let s = RandomGameSpec::new(0, 2, 4, 1);
        Self {
            seed: s.seed,
            players: s.players,
            state_dim: s.state_dim,
            control_dim: s.control_dim,
            affine: s.affine,
            theta_dependent: s.theta_dependent,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub grid_per_axis: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { grid_per_axis: 21 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckSection {
    pub samples: usize,
    pub seed: u64,
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Added to every ODE gradient component; fault injection for testing
    /// the checker itself.
    pub inject_offset: f64,
}

impl Default for GradCheckSection {
    fn default() -> Self {
        Self {
            samples: 10,
            seed: 0,
            step: 1e-5,
            tolerance: 1e-4,
            inject_offset: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    /// 1-based index of the player who ignores the opponent.
    pub naive_player: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self { naive_player: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: Scenario,
    /// Starting parameters; empty selects the scenario's default.
    pub theta0: Vec<f64>,
    pub grid_steps: usize,
    pub out_dir: String,
    pub solver: SolverSection,
    pub pursuit_evasion: PursuitEvasionSection,
    pub general_sum: GeneralSumSection,
    pub random: RandomSection,
    pub sweep: SweepSection,
    pub grad_check: GradCheckSection,
    pub baseline: BaselineSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::PursuitEvasion,
            theta0: Vec::new(),
            grid_steps: confgames_core::DEFAULT_STEPS,
            out_dir: "out".into(),
            solver: SolverSection::default(),
            pursuit_evasion: PursuitEvasionSection::default(),
            general_sum: GeneralSumSection::default(),
            random: RandomSection::default(),
            sweep: SweepSection::default(),
            grad_check: GradCheckSection::default(),
            baseline: BaselineSection::default(),
        }
    }
}

/// Flattens nested tables into dotted keys.
pub fn flatten(table: &Table) -> BTreeMap<String, Value> {
    fn walk(prefix: &str, table: &Table, out: &mut BTreeMap<String, Value>) {
        for (k, v) in table {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match v {
                Value::Table(t) => walk(&key, t, out),
                other => {
                    out.insert(key, other.clone());
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    walk("", table, &mut out);
    out
}

fn insert_dotted(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| CliError::usage(format!("empty key in `{key}`")))?;
    let mut cur = table;
    for part in parts {
        let entry = cur.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::usage(format!("`{part}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses the right-hand side of `--set`: any TOML value, or a bare word
/// taken as a string.
fn parse_override_value(raw: &str) -> Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

impl RunConfig {
    /// Loads an optional file, applies overrides, rejects unknown keys and
    /// fills scenario-dependent defaults.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_parts(&text, overrides)
    }

    pub fn from_parts(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::usage(format!("config parse error: {}", e.message())))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("override `{item}` is not key=value")))?;
            insert_dotted(&mut table, key.trim(), parse_override_value(raw.trim()))?;
        }
        let known = flatten(&default_table());
        if let Some(key) = flatten(&table).keys().find(|k| !known.contains_key(*k)) {
            return Err(CliError::usage(format!("unknown config key `{key}`")));
        }
        let mut config: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::usage(format!("config error: {}", e.message())))?;
        if config.theta0.is_empty() {
            config.theta0 = config.default_theta0();
        }
        Ok(config)
    }

    fn default_theta0(&self) -> Vec<f64> {
        match self.scenario {
            Scenario::PursuitEvasion => vec![0.2, 1.2],
            Scenario::GeneralSum => vec![0.6, 1.2],
            Scenario::Random => vec![1.0; self.random.players],
        }
    }

    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            step_size: self.solver.alpha,
            tolerance: self.solver.epsilon,
            max_outer: self.solver.max_outer,
            max_inner: self.solver.max_inner,
            stationarity_tol: self.solver.stationarity_tol,
            grid_steps: self.grid_steps,
        }
    }

    pub fn pursuit_evasion_spec(&self) -> Result<PursuitEvasionSpec, CliError> {
        let s = &self.pursuit_evasion;
        Ok(PursuitEvasionSpec {
            kappa1: s.kappa1,
            kappa2: s.kappa2,
            kappa3: s.kappa3,
            horizon: s.horizon,
            x0: s.x0.clone(),
            theta_box: ParamBox::new(s.theta_min, s.theta_max)?,
        })
    }

    pub fn general_sum_spec(&self) -> Result<GeneralSumSpec, CliError> {
        let s = &self.general_sum;
        Ok(GeneralSumSpec {
            q_v: s.q_v,
            w_r: s.w_r,
            control_weight: s.control_weight,
            q_h_level: s.q_h_level,
            switch_time: s.switch_time,
            v_o: s.v_o,
            horizon: s.horizon,
            x0: s.x0.clone(),
            theta_box: [
                ParamBox::new(s.theta_min[0], s.theta_max[0])?,
                ParamBox::new(s.theta_min[1], s.theta_max[1])?,
            ],
        })
    }

    pub fn random_spec(&self) -> RandomGameSpec {
        let s = &self.random;
        RandomGameSpec {
            seed: s.seed,
            players: s.players,
            state_dim: s.state_dim,
            control_dim: s.control_dim,
            affine: s.affine,
            theta_dependent: s.theta_dependent,
        }
    }

    /// Builds the configured game; invalid parameters are usage errors.
    pub fn build_game(&self) -> Result<ConfigGame, CliError> {
        let game = match self.scenario {
            Scenario::PursuitEvasion => build_pursuit_evasion(&self.pursuit_evasion_spec()?),
            Scenario::GeneralSum => build_general_sum(&self.general_sum_spec()?),
            Scenario::Random => random_aq_game(&self.random_spec()),
        };
        Ok(game?)
    }

    /// Validates settings and the starting point against the game.
    pub fn check(&self, game: &ConfigGame) -> Result<(), CliError> {
        self.settings().validate()?;
        game.check_theta(&self.theta0)?;
        Ok(())
    }

    /// Every key with its effective value, sorted.
    pub fn flattened(&self) -> BTreeMap<String, Value> {
        let table = Table::try_from(self).expect("config serializes to a table");
        flatten(&table)
    }
}

fn default_table() -> Table {
    Table::try_from(RunConfig::default()).expect("config serializes to a table")
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::PursuitEvasion => "pursuit_evasion",
            Scenario::GeneralSum => "general_sum",
            Scenario::Random => "random",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_every_default() {
        let c = RunConfig::from_parts("", &[]).unwrap();
        assert_eq!(c.scenario, Scenario::PursuitEvasion);
        assert_eq!(c.theta0, vec![0.2, 1.2]);
        assert_eq!(c.settings(), SolverSettings::default());
    }

    #[test]
    fn dotted_keys_and_overrides_share_names() {
        let text = "scenario = \"general_sum\"\nsolver.alpha = 1.0\n[general_sum]\nhorizon = 0.4\n";
        let c = RunConfig::from_parts(text, &["solver.max_outer=3".into(), "theta0=[1.2, 0.6]".into()]).unwrap();
        assert_eq!(c.scenario, Scenario::GeneralSum);
        assert_eq!(c.solver.alpha, 1.0);
        assert_eq!(c.solver.max_outer, 3);
        assert_eq!(c.general_sum.horizon, 0.4);
        assert_eq!(c.theta0, vec![1.2, 0.6]);
        let c = RunConfig::from_parts("", &["scenario=random".into()]).unwrap();
        assert_eq!(c.scenario, Scenario::Random);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::from_parts("solver.alpah = 0.1", &[]).unwrap_err();
        assert!(err.to_string().contains("solver.alpah"), "{err}");
        let err = RunConfig::from_parts("", &["general_sum.speed=2".into()]).unwrap_err();
        assert!(err.to_string().contains("general_sum.speed"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn flattened_echo_round_trips() {
        let c = RunConfig::from_parts("scenario = \"general_sum\"", &["grid_steps=500".into()]).unwrap();
        let overrides: Vec<String> = c.flattened().iter().map(|(k, v)| format!("{k}={v}")).collect();
        assert_eq!(RunConfig::from_parts("", &overrides).unwrap(), c);
    }
}
