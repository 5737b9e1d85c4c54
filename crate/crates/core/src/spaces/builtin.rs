//! Built-in spaces for the ScaLAPACK PDGEQRF (parallel QR) example.

use serde::{Deserialize, Serialize};

use super::ParameterSpace;
use crate::error::Result;

/// Machine and problem-size limits of a PDGEQRF tuning problem.
///
/// The task space is `(m, n, nodes, cores)`; `nodes` and `cores` are
/// categorical with numeric labels so a machine can offer a handful of
/// allocation sizes. The input space tunes `mb, nb, nproc, p`, with
/// `nth = nodes * cores / nproc` and `q = nproc / p` derived.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdgeqrfSpec {
    pub min_size: i64,
    pub max_size: i64,
    pub nodes: Vec<u32>,
    pub cores: Vec<u32>,
    pub max_block: i64,
}

impl PdgeqrfSpec {
    /// One 24-core node, matrices up to 2000. Small enough for desk runs.
    pub fn single_node() -> Self {
        PdgeqrfSpec {
            min_size: 1,
            max_size: 2000,
            nodes: vec![1],
            cores: vec![24],
            max_block: 512,
        }
    }

    /// Edison-like allocation: 1 or 128 nodes of 24 cores, matrices up to 20000.
    pub fn edison() -> Self {
        PdgeqrfSpec {
            min_size: 1,
            max_size: 20000,
            nodes: vec![1, 128],
            cores: vec![24],
            max_block: 512,
        }
    }

    pub fn max_procs(&self) -> i64 {
        let n = self.nodes.iter().max().copied().unwrap_or(1) as i64;
        let c = self.cores.iter().max().copied().unwrap_or(1) as i64;
        n * c
    }

    fn labels(v: &[u32]) -> Vec<String> {
        v.iter().map(u32::to_string).collect()
    }

    pub fn task_space(&self) -> Result<ParameterSpace> {
        ParameterSpace::builder("pdgeqrf-task")
            .integer("m", self.min_size, self.max_size)?
            .integer("n", self.min_size, self.max_size)?
            .categorical("nodes", &Self::labels(&self.nodes))?
            .categorical("cores", &Self::labels(&self.cores))?
            // the runtime model goes negative for very wide matrices
            .constraint("m >= n", "m >= n")
            .build()
    }

    pub fn input_space(&self) -> Result<ParameterSpace> {
        let procs = self.max_procs();
        let max_cores = self.cores.iter().max().copied().unwrap_or(1) as i64;
        ParameterSpace::builder("pdgeqrf-input")
            .integer("mb", 1, self.max_block)?
            .integer("nb", 1, self.max_block)?
            .integer("nth", 1, max_cores.max(2))?
            .integer("nproc", 1, procs)?
            .integer("p", 1, procs)?
            .integer("q", 1, procs)?
            .context(&["nodes", "cores"])
            .derived("nth", "nodes * cores / nproc")
            .derived("q", "nproc / p")
            .constraint("nproc == p * q", "nproc = p * q")
            .constraint("nproc * nth == nodes * cores", "nproc * nth = nodes * cores")
            .build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{numeric_context, Configuration, Value};

    fn task(space: &ParameterSpace, m: i64, n: i64, nodes: &str, cores: &str) -> Configuration {
        let idx = |dim: &str, label: &str| match &space.dim(dim).unwrap().kind {
            crate::spaces::DimKind::Categorical { categories } => categories.iter().position(|c| c == label).unwrap(),
            _ => unreachable!(),
        };
        Configuration::new()
            .with("m", Value::Int(m))
            .with("n", Value::Int(n))
            .with("nodes", Value::Cat(idx("nodes", nodes)))
            .with("cores", Value::Cat(idx("cores", cores)))
    }

    fn params(mb: i64, nb: i64, nproc: i64, p: i64) -> Configuration {
        Configuration::new()
            .with("mb", Value::Int(mb))
            .with("nb", Value::Int(nb))
            .with("nproc", Value::Int(nproc))
            .with("p", Value::Int(p))
    }

    #[test]
    fn derived_values_single_node() {
        let spec = PdgeqrfSpec::single_node();
        let (ts, is) = (spec.task_space().unwrap(), spec.input_space().unwrap());
        let ctx = numeric_context(&ts, &task(&ts, 2000, 2000, "1", "24"));
        let full = is.resolve_derived(&params(4, 8, 24, 2), &ctx).unwrap();
        assert_eq!((full.int("nth"), full.int("q")), (Some(1), Some(12)));
        let full = is.resolve_derived(&params(8, 500, 24, 1), &ctx).unwrap();
        assert_eq!((full.int("nth"), full.int("q")), (Some(1), Some(24)));
        assert!(is.resolve_derived(&params(8, 8, 7, 2), &ctx).is_err());
    }

    #[test]
    fn task_space_is_four_dimensional() {
        let ts = PdgeqrfSpec::edison().task_space().unwrap();
        assert_eq!(ts.encoded_dim(), 4);
        assert!(!ts.check(&task(&ts, 250, 950, "1", "24")).valid);
    }
}
