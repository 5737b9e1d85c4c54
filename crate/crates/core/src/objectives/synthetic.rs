//! Synthetic multitask objectives on `[0, 1]^a × [0, 1]^b` with closed-form
//! optima.

use serde::{Deserialize, Serialize};

use super::{num, Objective};
use crate::error::{Error, Result};
use crate::rng::PortableRng;
use crate::spaces::{Configuration, ParameterSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// `f = Σ_j (x_j - x*_j(t))²` with `x*_j(t) = 0.2 + 0.6 t_{j mod a}`.
    ShiftedQuadratic,
    /// `f = (1 + mean(t)) Σ_j [(x_j - c_j)² + A (1 - cos(2π K (x_j - c_j)))]`
    /// with `c_j(t) = 0.3 + 0.4 t_{j mod a}`, `A = 0.02`, `K = 3`.
    TaskScaledMultimodal,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shifted-quadratic" => Ok(SyntheticKind::ShiftedQuadratic),
            "task-scaled-multimodal" | "multimodal" => Ok(SyntheticKind::TaskScaledMultimodal),
            other => Err(Error::config("objective", format!("unknown synthetic family `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Synthetic {
    pub kind: SyntheticKind,
    pub task_dim: usize,
    pub input_dim: usize,
    id: String,
}

const AMPLITUDE: f64 = 0.02;
const FREQUENCY: f64 = 3.0;

/// Build a synthetic family objective.
pub fn synthetic_family(kind: SyntheticKind, task_dim: usize, input_dim: usize) -> Result<Synthetic> {
    if task_dim == 0 || input_dim == 0 {
        return Err(Error::config("objective", "synthetic families need at least one task and one input dimension"));
    }
    let id = match kind {
        SyntheticKind::ShiftedQuadratic => "shifted-quadratic",
        SyntheticKind::TaskScaledMultimodal => "task-scaled-multimodal",
    };
    Ok(Synthetic {
        kind,
        task_dim,
        input_dim,
        id: id.to_string(),
    })
}

impl Synthetic {
    pub fn task_space(&self) -> ParameterSpace {
        let mut b = ParameterSpace::builder(&format!("{}-task", self.id));
        for i in 0..self.task_dim {
            b = b.real(&format!("t{i}"), 0.0, 1.0).expect("unit bounds");
        }
        b.build().expect("valid space")
    }

    pub fn input_space(&self) -> ParameterSpace {
        let mut b = ParameterSpace::builder(&format!("{}-input", self.id));
        for i in 0..self.input_dim {
            b = b.real(&format!("x{i}"), 0.0, 1.0).expect("unit bounds");
        }
        b.build().expect("valid space")
    }

    fn task_vec(&self, task: &Configuration) -> Result<Vec<f64>> {
        (0..self.task_dim).map(|i| num(task, &format!("t{i}"))).collect()
    }

    /// Optimal input for task `t` (as a unit vector) and the optimal value.
    pub fn optimum(&self, t: &[f64]) -> (Vec<f64>, f64) {
        let a = self.task_dim;
        let x = (0..self.input_dim)
            .map(|j| match self.kind {
                SyntheticKind::ShiftedQuadratic => 0.2 + 0.6 * t[j % a],
                SyntheticKind::TaskScaledMultimodal => 0.3 + 0.4 * t[j % a],
            })
            .collect();
        (x, 0.0)
    }

    pub fn value(&self, t: &[f64], x: &[f64]) -> f64 {
        let (opt, _) = self.optimum(t);
        match self.kind {
            SyntheticKind::ShiftedQuadratic => x.iter().zip(&opt).map(|(v, o)| (v - o).powi(2)).sum(),
            SyntheticKind::TaskScaledMultimodal => {
                let s = 1.0 + t.iter().sum::<f64>() / t.len() as f64;
                s * x
                    .iter()
                    .zip(&opt)
                    .map(|(v, o)| {
                        let d = v - o;
                        d * d + AMPLITUDE * (1.0 - (2.0 * std::f64::consts::PI * FREQUENCY * d).cos())
                    })
                    .sum::<f64>()
            }
        }
    }

    /// `f(t, x) - f(t, x*(t))`.
    pub fn regret(&self, task: &Configuration, x: &Configuration) -> Result<f64> {
        let t = self.task_vec(task)?;
        let xv: Vec<f64> = (0..self.input_dim).map(|i| num(x, &format!("x{i}"))).collect::<Result<_>>()?;
        Ok(self.value(&t, &xv) - self.optimum(&t).1)
    }
}

impl Objective for Synthetic {
    fn id(&self) -> &str {
        &self.id
    }

    fn evaluate(&self, task: &Configuration, x: &Configuration, _rng: &mut PortableRng) -> Result<f64> {
        let t = self.task_vec(task)?;
        let xv: Vec<f64> = (0..self.input_dim).map(|i| num(x, &format!("x{i}"))).collect::<Result<_>>()?;
        Ok(self.value(&t, &xv))
    }

    fn deterministic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, RngState};

    #[test]
    fn optimum_at_zero_task() {
        let f = synthetic_family(SyntheticKind::ShiftedQuadratic, 1, 2).unwrap();
        let (x, v) = f.optimum(&[0.0]);
        assert_eq!(x, vec![0.2, 0.2]);
        assert_eq!(f.value(&[0.0], &x), v);
    }

    #[test]
    fn regret_is_non_negative() {
        let mut rng = RngState::new(3).rng();
        for kind in [SyntheticKind::ShiftedQuadratic, SyntheticKind::TaskScaledMultimodal] {
            let f = synthetic_family(kind, 2, 3).unwrap();
            for _ in 0..500 {
                let t: Vec<f64> = (0..2).map(|_| rng::uniform(&mut rng)).collect();
                let x: Vec<f64> = (0..3).map(|_| rng::uniform(&mut rng)).collect();
                assert!(f.value(&t, &x) >= f.optimum(&t).1);
            }
        }
    }

    #[test]
    fn unknown_kind() {
        assert!("banana".parse::<SyntheticKind>().is_err());
    }
}
