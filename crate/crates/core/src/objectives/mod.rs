//! Black-box objectives, the measurement policy, and desk-scale surrogates.

mod command;
mod qr;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, PortableRng, RngState};
use crate::spaces::{Configuration, Value};

pub use command::CommandObjective;
pub use qr::{
    comm_log, counts_for, fit_coefficients, fit_coefficients_from_counts, pearson, qr_factor_counts, qr_surrogate, CoefficientFit, FactorCounts,
    MachineCoefficients, QrSurrogate,
};
pub use synthetic::{synthetic_family, Synthetic, SyntheticKind};

/// A function `y(t, x)` to minimize. Tasks are passed with categorical
/// labels already resolved to numbers.
pub trait Objective: Send + Sync {
    fn id(&self) -> &str;

    fn evaluate(&self, task: &Configuration, x: &Configuration, rng: &mut PortableRng) -> Result<f64>;

    /// Identical inputs always give identical values.
    fn deterministic(&self) -> bool;

    /// Values are strictly positive (e.g. runtimes), so models may work on
    /// their logarithm.
    fn positive(&self) -> bool {
        false
    }

    /// Safe to call concurrently.
    fn reentrant(&self) -> bool {
        true
    }
}

/// Numeric value of `name` in a configuration.
pub(crate) fn num(c: &Configuration, name: &str) -> Result<f64> {
    match c.get(name) {
        Some(Value::Real(v)) => Ok(v),
        Some(Value::Int(v)) => Ok(v as f64),
        Some(Value::Cat(i)) => Ok(i as f64),
        None => Err(Error::MissingValue(name.to_string())),
    }
}

/// Multiplicative lognormal measurement noise around another objective.
pub struct Noisy<O> {
    pub inner: O,
    pub sigma: f64,
    id: String,
}

impl<O: Objective> Noisy<O> {
    pub fn new(inner: O, sigma: f64) -> Self {
        let id = format!("{}+lognormal({sigma})", inner.id());
        Noisy { inner, sigma, id }
    }
}

impl<O: Objective> Objective for Noisy<O> {
    fn id(&self) -> &str {
        &self.id
    }

    fn evaluate(&self, task: &Configuration, x: &Configuration, rng: &mut PortableRng) -> Result<f64> {
        let v = self.inner.evaluate(task, x, rng)?;
        Ok(v * (self.sigma * rng::standard_normal(rng)).exp())
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn positive(&self) -> bool {
        self.inner.positive()
    }
}

/// One measured evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// Minimum over the repetitions; `+∞` when the evaluation failed.
    #[serde(with = "finite_or_null")]
    pub value: f64,
    pub repetitions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Measurement {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    /// Objective time spent: the sum of all repetition values.
    pub fn cost(&self) -> f64 {
        self.repetitions.iter().sum()
    }
}

pub(crate) mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Measure `objective` at `(task, x)`: a single call for deterministic
/// objectives, otherwise the minimum of `repetitions` calls.
pub fn evaluate(objective: &dyn Objective, task: &Configuration, x: &Configuration, repetitions: usize, rng: &mut PortableRng) -> Measurement {
    let reps = if objective.deterministic() { 1 } else { repetitions.max(1) };
    let mut values = Vec::with_capacity(reps);
    for _ in 0..reps {
        match objective.evaluate(task, x, rng) {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(v) => {
                return Measurement {
                    value: f64::INFINITY,
                    repetitions: values,
                    error: Some(format!("non-finite value {v}")),
                }
            }
            Err(e) => {
                return Measurement {
                    value: f64::INFINITY,
                    repetitions: values,
                    error: Some(format!("{e} at {x}")),
                }
            }
        }
    }
    Measurement {
        value: values.iter().copied().fold(f64::INFINITY, f64::min),
        repetitions: values,
        error: None,
    }
}

/// One entry of an evaluation log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub task_index: usize,
    pub task: Configuration,
    pub config: Configuration,
    #[serde(flatten)]
    pub measurement: Measurement,
}

/// Counts calls, derives a noise stream per call and keeps every record.
pub struct Evaluator<'a> {
    objective: &'a dyn Objective,
    repetitions: usize,
    state: RngState,
    calls: u64,
    records: Vec<EvaluationRecord>,
}

impl<'a> Evaluator<'a> {
    pub fn new(objective: &'a dyn Objective, repetitions: usize, state: RngState) -> Self {
        Evaluator {
            objective,
            repetitions,
            state,
            calls: 0,
            records: Vec::new(),
        }
    }

    pub fn objective(&self) -> &dyn Objective {
        self.objective
    }

    pub fn evaluate(&mut self, task_index: usize, task: &Configuration, x: &Configuration) -> EvaluationRecord {
        let mut rng = self.state.derive(self.calls).rng();
        self.calls += 1;
        let m = evaluate(self.objective, task, x, self.repetitions, &mut rng);
        let rec = EvaluationRecord {
            task_index,
            task: task.clone(),
            config: x.clone(),
            measurement: m,
        };
        self.records.push(rec.clone());
        rec
    }

    pub fn records(&self) -> &[EvaluationRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<EvaluationRecord> {
        self.records
    }

    pub fn evaluations(&self) -> u64 {
        self.calls
    }
}
