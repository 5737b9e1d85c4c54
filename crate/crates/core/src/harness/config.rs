//! TOML experiment configuration.
//!
//! ```toml
//! name = "qr-mla"
//! method = "mla"
//! seed = 7
//!
//! [objective]
//! kind = "qr-surrogate"
//!
//! [budget]
//! tasks = 8
//! pilot = 12
//! per_task = 20
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{synthetic_family, CommandObjective, MachineCoefficients, Noisy, Objective, QrSurrogate, SyntheticKind};
use crate::spaces::{Configuration, ParameterSpace, PdgeqrfSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mla,
    Tla1,
    Tla2,
    Ego,
    Random,
    Grid,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mla => "mla",
            Method::Tla1 => "tla1",
            Method::Tla2 => "tla2",
            Method::Ego => "ego",
            Method::Random => "random",
            Method::Grid => "grid",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mla" => Ok(Method::Mla),
            "tla1" => Ok(Method::Tla1),
            "tla2" => Ok(Method::Tla2),
            "ego" => Ok(Method::Ego),
            "random" => Ok(Method::Random),
            "grid" => Ok(Method::Grid),
            other => Err(Error::config("method", format!("unknown method `{other}`"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which objective to tune.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveConfig {
    QrSurrogate {
        #[serde(default)]
        coeffs: Option<MachineCoefficients>,
        /// Multiplicative lognormal noise; 0 keeps it deterministic.
        #[serde(default)]
        noise: f64,
        #[serde(default = "single_node")]
        machine: String,
    },
    Synthetic {
        family: String,
        #[serde(default = "one")]
        task_dim: usize,
        #[serde(default = "two")]
        input_dim: usize,
        #[serde(default)]
        noise: f64,
    },
    Command {
        #[serde(flatten)]
        command: CommandObjective,
        task_space: PathBuf,
        input_space: PathBuf,
    },
}

fn single_node() -> String {
    "single-node".into()
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    /// Training tasks δ.
    #[serde(default = "default_tasks")]
    pub tasks: usize,
    /// Evaluations per task, counting the pilot.
    #[serde(default = "default_per_task")]
    pub per_task: usize,
    /// Pilot evaluations per task; defaults to three times the input dimension.
    #[serde(default)]
    pub pilot: Option<usize>,
    /// TLA2 evaluations around the predicted optimum.
    #[serde(default)]
    pub split: Option<usize>,
    /// Per-task budget of the training MLA run behind TLA1/TLA2.
    #[serde(default)]
    pub training_per_task: Option<usize>,
    /// Held-out tasks for TLA1/TLA2.
    #[serde(default = "default_new_tasks")]
    pub new_tasks: usize,
    #[serde(default)]
    pub latents: Option<usize>,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default = "default_resolution")]
    pub grid_resolution: usize,
    #[serde(default = "default_cap")]
    pub grid_cap: u64,
}

fn default_tasks() -> usize {
    8
}
fn default_per_task() -> usize {
    20
}
fn default_new_tasks() -> usize {
    1
}
fn default_reps() -> usize {
    3
}
fn default_resolution() -> usize {
    10
}
fn default_cap() -> u64 {
    1_000_000
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            tasks: default_tasks(),
            per_task: default_per_task(),
            pilot: None,
            split: None,
            training_per_task: None,
            new_tasks: default_new_tasks(),
            latents: None,
            repetitions: default_reps(),
            grid_resolution: default_resolution(),
            grid_cap: default_cap(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for results and plot data.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// History file; relative paths resolve against the history directory.
    #[serde(default)]
    pub history: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub budget: BudgetConfig,
    /// Explicit training tasks; sampled when empty.
    #[serde(default)]
    pub tasks: Vec<Configuration>,
    /// Explicit held-out tasks for TLA1/TLA2; sampled when empty.
    #[serde(default)]
    pub new_tasks: Vec<Configuration>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Spaces and objective built from a config.
pub struct Setup {
    pub task_space: ParameterSpace,
    pub input_space: ParameterSpace,
    pub objective: Box<dyn Objective>,
}

impl ExperimentConfig {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(src).map_err(|e| {
            let field = e.message().split('`').nth(1).unwrap_or("config").to_string();
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&src)?;
        // space files are relative to the config file
        if let (ObjectiveConfig::Command { task_space, input_space, .. }, Some(dir)) = (&mut cfg.objective, path.parent()) {
            for p in [task_space, input_space] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.budget;
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        if b.per_task == 0 {
            return Err(Error::config("budget.per_task", "must be at least 1"));
        }
        if let Some(p) = b.pilot {
            if p == 0 || p > b.per_task {
                return Err(Error::config("budget.pilot", format!("{p} must lie in [1, per_task = {}]", b.per_task)));
            }
        }
        if let Some(s) = b.split {
            if s == 0 || s > b.per_task {
                return Err(Error::config("budget.split", format!("{s} must lie in [1, per_task = {}]", b.per_task)));
            }
        }
        if b.tasks == 0 {
            return Err(Error::config("budget.tasks", "must be at least 1"));
        }
        if matches!(self.method, Method::Tla1 | Method::Tla2) && b.tasks < 2 && self.tasks.len() < 2 {
            return Err(Error::config("budget.tasks", "transfer methods need at least 2 training tasks"));
        }
        if b.latents == Some(0) {
            return Err(Error::config("budget.latents", "must be at least 1"));
        }
        if b.grid_resolution == 0 {
            return Err(Error::config("budget.grid_resolution", "must be at least 1"));
        }
        if let ObjectiveConfig::Command { task_space, input_space, .. } = &self.objective {
            for (field, p) in [("objective.task_space", task_space), ("objective.input_space", input_space)] {
                if !p.exists() {
                    return Err(Error::config(field, format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn setup(&self) -> Result<Setup> {
        match &self.objective {
            ObjectiveConfig::QrSurrogate { coeffs, noise, machine } => {
                let spec = match machine.as_str() {
                    "single-node" => PdgeqrfSpec::single_node(),
                    "edison" => PdgeqrfSpec::edison(),
                    other => return Err(Error::config("objective.machine", format!("unknown machine `{other}`"))),
                };
                let base = QrSurrogate {
                    coeffs: coeffs.unwrap_or_default(),
                };
                Ok(Setup {
                    task_space: spec.task_space()?,
                    input_space: spec.input_space()?,
                    objective: with_noise(base, *noise)?,
                })
            }
            ObjectiveConfig::Synthetic {
                family,
                task_dim,
                input_dim,
                noise,
            } => {
                let kind: SyntheticKind = family.parse()?;
                let f = synthetic_family(kind, *task_dim, *input_dim)?;
                Ok(Setup {
                    task_space: f.task_space(),
                    input_space: f.input_space(),
                    objective: with_noise(f, *noise)?,
                })
            }
            ObjectiveConfig::Command {
                command,
                task_space,
                input_space,
            } => Ok(Setup {
                task_space: ParameterSpace::from_toml_file(task_space)?,
                input_space: ParameterSpace::from_toml_file(input_space)?,
                objective: Box::new(command.clone()),
            }),
        }
    }
}

fn with_noise<O: Objective + 'static>(o: O, sigma: f64) -> Result<Box<dyn Objective>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::config("objective.noise", format!("{sigma} must be a finite non-negative number")));
    }
    Ok(if sigma > 0.0 { Box::new(Noisy::new(o, sigma)) } else { Box::new(o) })
}
