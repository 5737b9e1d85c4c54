//! Declarative space definition files (TOML).
//!
//! ```toml
//! name = "pdgeqrf-input"
//! context = ["nodes", "cores"]        # names supplied by the task
//!
//! [[dimension]]
//! name = "mb"
//! kind = "integer"                    # real | integer | categorical
//! low = 1
//! high = 512
//!
//! [[dimension]]
//! name = "q"
//! kind = "integer"
//! low = 1
//! high = 24
//! derived = "nproc / p"               # optional: computed, not tuned
//!
//! [[dimension]]
//! name = "algo"
//! kind = "categorical"
//! categories = ["left", "right"]
//!
//! [[constraint]]
//! expr = "nproc == p * q"
//! description = "nproc = p * q"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use super::{Constraint, DerivedRule, DimKind, Dimension, Expr, ParameterSpace};
use crate::error::{Error, Result};

/// Plain (span-free) form of a space definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceDef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context: Vec<String>,
    #[serde(rename = "dimension")]
    pub dimensions: Vec<DimensionDef>,
    #[serde(rename = "constraint", default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<ConstraintDef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionDef {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintDef {
    pub expr: String,
    pub description: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    name: Spanned<String>,
    #[serde(default)]
    context: Vec<Spanned<String>>,
    #[serde(default)]
    dimension: Vec<Spanned<RawDim>>,
    #[serde(default)]
    constraint: Vec<Spanned<RawConstraint>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDim {
    name: Spanned<String>,
    kind: Spanned<String>,
    low: Option<Spanned<toml::Value>>,
    high: Option<Spanned<toml::Value>>,
    categories: Option<Spanned<Vec<String>>>,
    derived: Option<Spanned<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    expr: Spanned<String>,
    description: Option<String>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

struct Ctx<'a> {
    path: &'a str,
    src: &'a str,
}

impl Ctx<'_> {
    fn err<T>(&self, span: std::ops::Range<usize>, field: &str, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            path: self.path.to_string(),
            line: line_of(self.src, span.start),
            field: field.to_string(),
            message: message.into(),
        })
    }
}

fn number(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Integer(i) => Some(*i as f64),
        toml::Value::Float(f) => Some(*f),
        _ => None,
    }
}

fn integer(v: &toml::Value) -> Option<i64> {
    match v {
        toml::Value::Integer(i) => Some(*i),
        toml::Value::Float(f) if f.fract() == 0.0 => Some(*f as i64),
        _ => None,
    }
}

impl ParameterSpace {
    /// Parse a TOML space definition. Errors carry the line and field.
    pub fn from_toml_str(src: &str, path: &str) -> Result<Self> {
        let cx = Ctx { path, src };
        let raw: RawSpace = match toml::from_str(src) {
            Ok(r) => r,
            Err(e) => {
                let line = e.span().map_or(0, |s| line_of(src, s.start));
                let msg = e.message().to_string();
                let field = msg
                    .split('`')
                    .nth(1)
                    .map(str::to_string)
                    .unwrap_or_else(|| "<document>".into());
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    field,
                    message: msg,
                });
            }
        };
        let mut dims = Vec::new();
        let mut derived = Vec::new();
        for d in &raw.dimension {
            let d = d.get_ref();
            let name = d.name.get_ref().clone();
            let kind = match d.kind.get_ref().as_str() {
                "real" => {
                    let (Some(lo), Some(hi)) = (&d.low, &d.high) else {
                        return cx.err(d.kind.span(), "low/high", format!("real dimension `{name}` needs low and high"));
                    };
                    let low = number(lo.get_ref()).map_or_else(|| cx.err(lo.span(), "low", "expected a number"), Ok)?;
                    let high = number(hi.get_ref()).map_or_else(|| cx.err(hi.span(), "high", "expected a number"), Ok)?;
                    DimKind::Real { low, high }
                }
                "integer" => {
                    let (Some(lo), Some(hi)) = (&d.low, &d.high) else {
                        return cx.err(d.kind.span(), "low/high", format!("integer dimension `{name}` needs low and high"));
                    };
                    let low = integer(lo.get_ref()).map_or_else(|| cx.err(lo.span(), "low", "expected an integer"), Ok)?;
                    let high = integer(hi.get_ref()).map_or_else(|| cx.err(hi.span(), "high", "expected an integer"), Ok)?;
                    DimKind::Integer { low, high }
                }
                "categorical" => {
                    let Some(cats) = &d.categories else {
                        return cx.err(d.kind.span(), "categories", format!("categorical dimension `{name}` needs categories"));
                    };
                    DimKind::Categorical {
                        categories: cats.get_ref().clone(),
                    }
                }
                other => return cx.err(d.kind.span(), "kind", format!("unknown kind `{other}` (real, integer, categorical)")),
            };
            let dim = Dimension { name: name.clone(), kind };
            if let Err(e) = dim.validate() {
                return cx.err(d.name.span(), "dimension", e.to_string());
            }
            dims.push(dim);
            if let Some(f) = &d.derived {
                match Expr::parse(f.get_ref()) {
                    Ok(formula) => derived.push(DerivedRule { target: name, formula }),
                    Err(e) => return cx.err(f.span(), "derived", e.to_string()),
                }
            }
        }
        let mut constraints = Vec::new();
        for c in &raw.constraint {
            let c = c.get_ref();
            let expr = match Expr::parse(c.expr.get_ref()) {
                Ok(e) => e,
                Err(e) => return cx.err(c.expr.span(), "expr", e.to_string()),
            };
            constraints.push(Constraint {
                description: c.description.clone().unwrap_or_else(|| expr.source().to_string()),
                expr,
            });
        }
        let context = raw.context.iter().map(|c| c.get_ref().clone()).collect();
        ParameterSpace::new(raw.name.get_ref().clone(), dims, constraints, derived, context).or_else(|e| cx.err(raw.name.span(), "name", e.to_string()))
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path)?;
        Self::from_toml_str(&src, &path.display().to_string())
    }

    pub fn to_def(&self) -> SpaceDef {
        SpaceDef {
            name: self.name.clone(),
            context: self.context.clone(),
            dimensions: self
                .dims
                .iter()
                .map(|d| {
                    let derived = self.derived.iter().find(|r| r.target == d.name).map(|r| r.formula.source().to_string());
                    let (kind, low, high, categories) = match &d.kind {
                        DimKind::Real { low, high } => ("real", Some(*low), Some(*high), None),
                        DimKind::Integer { low, high } => ("integer", Some(*low as f64), Some(*high as f64), None),
                        DimKind::Categorical { categories } => ("categorical", None, None, Some(categories.clone())),
                    };
                    DimensionDef {
                        name: d.name.clone(),
                        kind: kind.into(),
                        low,
                        high,
                        categories,
                        derived,
                    }
                })
                .collect(),
            constraints: self
                .constraints
                .iter()
                .map(|c| ConstraintDef {
                    expr: c.expr.source().to_string(),
                    description: c.description.clone(),
                })
                .collect(),
        }
    }

    pub fn to_toml_string(&self) -> String {
        let def = self.to_def();
        // integer bounds print as integers so the file reads naturally
        let mut doc = toml::Table::new();
        doc.insert("name".into(), toml::Value::String(def.name.clone()));
        if !def.context.is_empty() {
            doc.insert("context".into(), toml::Value::Array(def.context.iter().cloned().map(toml::Value::String).collect()));
        }
        let dims = def
            .dimensions
            .iter()
            .map(|d| {
                let mut t = toml::Table::new();
                t.insert("name".into(), toml::Value::String(d.name.clone()));
                t.insert("kind".into(), toml::Value::String(d.kind.clone()));
                let bound = |v: f64| {
                    if d.kind == "integer" {
                        toml::Value::Integer(v as i64)
                    } else {
                        toml::Value::Float(v)
                    }
                };
                if let Some(v) = d.low {
                    t.insert("low".into(), bound(v));
                }
                if let Some(v) = d.high {
                    t.insert("high".into(), bound(v));
                }
                if let Some(c) = &d.categories {
                    t.insert("categories".into(), toml::Value::Array(c.iter().cloned().map(toml::Value::String).collect()));
                }
                if let Some(f) = &d.derived {
                    t.insert("derived".into(), toml::Value::String(f.clone()));
                }
                toml::Value::Table(t)
            })
            .collect();
        doc.insert("dimension".into(), toml::Value::Array(dims));
        if !def.constraints.is_empty() {
            let cs = def
                .constraints
                .iter()
                .map(|c| {
                    let mut t = toml::Table::new();
                    t.insert("expr".into(), toml::Value::String(c.expr.clone()));
                    t.insert("description".into(), toml::Value::String(c.description.clone()));
                    toml::Value::Table(t)
                })
                .collect();
            doc.insert("constraint".into(), toml::Value::Array(cs));
        }
        toml::to_string(&doc).expect("space table serializes")
    }
}
