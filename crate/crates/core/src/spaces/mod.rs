//! Task, input and output spaces.
//!
//! A [`ParameterSpace`] is a list of typed [`Dimension`]s plus constraints and
//! derived-parameter rules. Configurations live in native units; the models
//! work in the unit cube over the *free* (non-derived) dimensions, reached
//! through [`ParameterSpace::encode`] and [`ParameterSpace::decode`].

mod builtin;
mod expr;
mod file;

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use builtin::PdgeqrfSpec;
pub use expr::Expr;
pub use file::{ConstraintDef, DimensionDef, SpaceDef};

#[derive(Clone, Debug, PartialEq)]
pub enum DimKind {
    Real { low: f64, high: f64 },
    Integer { low: i64, high: i64 },
    Categorical { categories: Vec<String> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dimension {
    pub name: String,
    pub kind: DimKind,
}

/// A single coordinate value in native units. Categorical values hold the
/// category index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Real(f64),
    Int(i64),
    Cat(usize),
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match *self {
            Value::Real(v) => s.serialize_f64(v),
            Value::Int(v) => s.serialize_i64(v),
            Value::Cat(i) => {
                let mut m = s.serialize_map(Some(1))?;
                m.serialize_entry("cat", &i)?;
                m.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Value;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an integer, a float, or {\"cat\": index}")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Value, E> {
                Ok(Value::Int(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Value, E> {
                i64::try_from(v).map(Value::Int).map_err(E::custom)
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Value, E> {
                Ok(Value::Real(v))
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Value, A::Error> {
                let (key, idx): (String, usize) = map.next_entry()?.ok_or_else(|| de::Error::custom("empty map"))?;
                if key != "cat" {
                    return Err(de::Error::unknown_field(&key, &["cat"]));
                }
                Ok(Value::Cat(idx))
            }
        }
        d.deserialize_any(V)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(v) => write!(f, "{v}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Cat(i) => write!(f, "#{i}"),
        }
    }
}

/// Named values, one per dimension.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    values: BTreeMap<String, Value>,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: Value) -> Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn insert(&mut self, name: &str, value: Value) {
        self.values.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<Value> {
        self.values.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Value)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Convenience for integer-valued dimensions.
    pub fn int(&self, name: &str) -> Option<i64> {
        match self.get(name)? {
            Value::Int(v) => Some(v),
            Value::Real(v) if v.fract() == 0.0 => Some(v as i64),
            _ => None,
        }
    }
}

impl<'a> FromIterator<(&'a str, Value)> for Configuration {
    fn from_iter<I: IntoIterator<Item = (&'a str, Value)>>(iter: I) -> Self {
        Configuration {
            values: iter.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.values.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

impl Dimension {
    pub fn real(name: &str, low: f64, high: f64) -> Result<Self> {
        Self::checked(name, DimKind::Real { low, high })
    }

    pub fn integer(name: &str, low: i64, high: i64) -> Result<Self> {
        Self::checked(name, DimKind::Integer { low, high })
    }

    pub fn categorical<S: AsRef<str>>(name: &str, categories: &[S]) -> Result<Self> {
        Self::checked(
            name,
            DimKind::Categorical {
                categories: categories.iter().map(|s| s.as_ref().to_string()).collect(),
            },
        )
    }

    fn checked(name: &str, kind: DimKind) -> Result<Self> {
        let d = Dimension {
            name: name.to_string(),
            kind,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpace(format!("dimension `{}`: {m}", self.name)));
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return bad("names must be non-empty identifiers".into());
        }
        match &self.kind {
            DimKind::Real { low, high } if !(low < high) || !low.is_finite() || !high.is_finite() => {
                bad(format!("bounds [{low}, {high}] must satisfy low < high"))
            }
            DimKind::Integer { low, high } if low >= high => bad(format!("bounds [{low}, {high}] must satisfy low < high")),
            DimKind::Categorical { categories } => {
                if categories.is_empty() {
                    return bad("categories must be non-empty".into());
                }
                let mut seen = std::collections::HashSet::new();
                if !categories.iter().all(|c| seen.insert(c)) {
                    return bad("categories must be unique".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn contains(&self, v: Value) -> bool {
        match (&self.kind, v) {
            (DimKind::Real { low, high }, Value::Real(x)) => x >= *low && x <= *high,
            (DimKind::Integer { low, high }, Value::Int(x)) => x >= *low && x <= *high,
            (DimKind::Categorical { categories }, Value::Cat(i)) => i < categories.len(),
            _ => false,
        }
    }

    /// Value used when the dimension appears in an expression. Categorical
    /// labels that parse as numbers evaluate to that number, others to their
    /// index.
    pub fn numeric(&self, v: Value) -> f64 {
        match (v, &self.kind) {
            (Value::Real(x), _) => x,
            (Value::Int(x), _) => x as f64,
            (Value::Cat(i), DimKind::Categorical { categories }) => categories
                .get(i)
                .and_then(|l| l.parse::<f64>().ok())
                .unwrap_or(i as f64),
            (Value::Cat(i), _) => i as f64,
        }
    }

    pub fn encode_value(&self, v: Value) -> Result<f64> {
        if !self.contains(v) {
            return Err(Error::OutOfBounds {
                name: self.name.clone(),
                value: v.to_string(),
            });
        }
        Ok(match (&self.kind, v) {
            (DimKind::Real { low, high }, Value::Real(x)) => (x - low) / (high - low),
            (DimKind::Integer { low, high }, Value::Int(x)) => (x - low) as f64 / (high - low) as f64,
            (DimKind::Categorical { categories }, Value::Cat(i)) => (i as f64 + 0.5) / categories.len() as f64,
            _ => unreachable!("contains() checked the kind"),
        })
    }

    pub fn decode_value(&self, p: f64) -> Value {
        let p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        match &self.kind {
            DimKind::Real { low, high } => Value::Real(low + p * (high - low)),
            DimKind::Integer { low, high } => {
                let v = *low + round_half_up(p * (high - low) as f64) as i64;
                Value::Int(v.clamp(*low, *high))
            }
            DimKind::Categorical { categories } => {
                let n = categories.len();
                Value::Cat(((p * n as f64).floor() as usize).min(n - 1))
            }
        }
    }

    /// Convert an expression result into a value of this dimension's kind.
    fn value_from_number(&self, x: f64) -> Result<Value> {
        let err = |m: &str| Error::InvalidConfiguration(format!("derived `{}` = {x}: {m}", self.name));
        if !x.is_finite() {
            return Err(err("not finite"));
        }
        let integral = |x: f64| {
            let r = x.round();
            if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
                Some(r)
            } else {
                None
            }
        };
        let v = match &self.kind {
            DimKind::Real { .. } => Value::Real(x),
            DimKind::Integer { .. } => Value::Int(integral(x).ok_or_else(|| err("not an integer"))? as i64),
            DimKind::Categorical { .. } => {
                let r = integral(x).ok_or_else(|| err("not a category index"))?;
                if r < 0.0 {
                    return Err(err("negative category index"));
                }
                Value::Cat(r as usize)
            }
        };
        if !self.contains(v) {
            return Err(err("out of bounds"));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub expr: Expr,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivedRule {
    pub target: String,
    pub formula: Expr,
}

/// Result of [`ParameterSpace::check`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub valid: bool,
    pub violations: Vec<String>,
}

/// Output space: one scalar metric, always minimized.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSpace {
    pub metric: String,
}

impl OutputSpace {
    pub fn new(metric: &str) -> Self {
        OutputSpace { metric: metric.into() }
    }

    pub fn dimensionality(&self) -> usize {
        1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSpace {
    name: String,
    dims: Vec<Dimension>,
    constraints: Vec<Constraint>,
    derived: Vec<DerivedRule>,
    context: Vec<String>,
    /// Indices into `dims` of the free dimensions, in declaration order.
    free: Vec<usize>,
    /// Indices into `derived` in dependency order.
    derived_order: Vec<usize>,
}

#[derive(Debug, Default)]
pub struct SpaceBuilder {
    name: String,
    dims: Vec<Dimension>,
    constraints: Vec<(String, String)>,
    derived: Vec<(String, String)>,
    context: Vec<String>,
}

impl SpaceBuilder {
    pub fn dim(mut self, d: Dimension) -> Self {
        self.dims.push(d);
        self
    }

    pub fn real(self, name: &str, low: f64, high: f64) -> Result<Self> {
        Ok(self.dim(Dimension::real(name, low, high)?))
    }

    pub fn integer(self, name: &str, low: i64, high: i64) -> Result<Self> {
        Ok(self.dim(Dimension::integer(name, low, high)?))
    }

    pub fn categorical<S: AsRef<str>>(self, name: &str, categories: &[S]) -> Result<Self> {
        Ok(self.dim(Dimension::categorical(name, categories)?))
    }

    pub fn constraint(mut self, expr: &str, description: &str) -> Self {
        self.constraints.push((expr.into(), description.into()));
        self
    }

    pub fn derived(mut self, target: &str, formula: &str) -> Self {
        self.derived.push((target.into(), formula.into()));
        self
    }

    /// Names supplied by an enclosing configuration (typically the task).
    pub fn context<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        self.context.extend(names.iter().map(|s| s.as_ref().to_string()));
        self
    }

    pub fn build(self) -> Result<ParameterSpace> {
        let constraints = self
            .constraints
            .into_iter()
            .map(|(e, d)| Ok(Constraint { expr: Expr::parse(&e)?, description: d }))
            .collect::<Result<Vec<_>>>()?;
        let derived = self
            .derived
            .into_iter()
            .map(|(t, f)| Ok(DerivedRule { target: t, formula: Expr::parse(&f)? }))
            .collect::<Result<Vec<_>>>()?;
        ParameterSpace::new(self.name, self.dims, constraints, derived, self.context)
    }
}

impl ParameterSpace {
    pub fn builder(name: &str) -> SpaceBuilder {
        SpaceBuilder {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn new(
        name: String,
        dims: Vec<Dimension>,
        constraints: Vec<Constraint>,
        derived: Vec<DerivedRule>,
        context: Vec<String>,
    ) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidSpace(format!("space `{name}` has no dimensions")));
        }
        let mut seen = std::collections::HashSet::new();
        for d in &dims {
            d.validate()?;
            if !seen.insert(d.name.as_str()) {
                return Err(Error::InvalidSpace(format!("duplicate dimension `{}`", d.name)));
            }
        }
        for c in &context {
            if seen.contains(c.as_str()) {
                return Err(Error::InvalidSpace(format!("context name `{c}` shadows a dimension")));
            }
        }
        let known = |n: &str| dims.iter().any(|d| d.name == n) || context.iter().any(|c| c == n);
        for c in &constraints {
            if let Some(v) = c.expr.variables().into_iter().find(|v| !known(v)) {
                return Err(Error::InvalidSpace(format!("constraint `{}` references unknown name `{v}`", c.expr.source())));
            }
        }
        let mut targets = std::collections::HashSet::new();
        for r in &derived {
            if !dims.iter().any(|d| d.name == r.target) {
                return Err(Error::InvalidSpace(format!("derived target `{}` is not a dimension", r.target)));
            }
            if !targets.insert(r.target.as_str()) {
                return Err(Error::InvalidSpace(format!("dimension `{}` derived twice", r.target)));
            }
            if let Some(v) = r.formula.variables().into_iter().find(|v| !known(v)) {
                return Err(Error::InvalidSpace(format!("formula for `{}` references unknown name `{v}`", r.target)));
            }
        }
        // topological order over derived targets
        let mut order = Vec::new();
        let mut done = std::collections::HashSet::new();
        while order.len() < derived.len() {
            let before = order.len();
            for (i, r) in derived.iter().enumerate() {
                if done.contains(&i) {
                    continue;
                }
                let ready = r
                    .formula
                    .variables()
                    .iter()
                    .all(|v| !targets.contains(v.as_str()) || derived.iter().enumerate().any(|(j, o)| &o.target == v && done.contains(&j)));
                if ready {
                    done.insert(i);
                    order.push(i);
                }
            }
            if order.len() == before {
                return Err(Error::InvalidSpace("cyclic derived rules".into()));
            }
        }
        let free: Vec<usize> = (0..dims.len()).filter(|&i| !targets.contains(dims[i].name.as_str())).collect();
        if free.is_empty() {
            return Err(Error::InvalidSpace(format!("space `{name}` has no free dimensions")));
        }
        Ok(ParameterSpace {
            name,
            dims,
            constraints,
            derived,
            context,
            free,
            derived_order: order,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn dim(&self, name: &str) -> Option<&Dimension> {
        self.dims.iter().find(|d| d.name == name)
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn derived(&self) -> &[DerivedRule] {
        &self.derived
    }

    pub fn context(&self) -> &[String] {
        &self.context
    }

    /// Free (non-derived) dimensions, in declaration order.
    pub fn free_dims(&self) -> impl Iterator<Item = &Dimension> {
        self.free.iter().map(|&i| &self.dims[i])
    }

    /// Effective dimension: the number of free dimensions.
    pub fn encoded_dim(&self) -> usize {
        self.free.len()
    }

    pub fn is_derived(&self, name: &str) -> bool {
        self.derived.iter().any(|r| r.target == name)
    }

    /// Map the free dimensions of `config` into `[0, 1]^d`.
    pub fn encode(&self, config: &Configuration) -> Result<Vec<f64>> {
        if let Some((name, _)) = config.iter().find(|(n, _)| self.dim(n).is_none()) {
            return Err(Error::UnknownDimension(name.to_string()));
        }
        self.free_dims()
            .map(|d| {
                let v = config.get(&d.name).ok_or_else(|| Error::MissingValue(d.name.clone()))?;
                d.encode_value(v)
            })
            .collect()
    }

    /// Map a unit point back onto the free dimensions (derived dims absent).
    pub fn decode(&self, point: &[f64]) -> Configuration {
        assert_eq!(point.len(), self.free.len(), "point dimension must match the free dimensions");
        self.free_dims().zip(point).map(|(d, &p)| (d.name.as_str(), d.decode_value(p))).collect()
    }

    /// Decode and then resolve derived dimensions against `context`.
    pub fn decode_resolved(&self, point: &[f64], context: &Configuration) -> Result<Configuration> {
        self.resolve_derived(&self.decode(point), context)
    }

    fn lookup<'a>(&'a self, config: &'a Configuration, context: &'a Configuration) -> impl Fn(&str) -> Option<f64> + 'a {
        move |name: &str| {
            if let Some(v) = config.get(name) {
                return Some(self.dim(name).map_or_else(|| Dimension::numeric_plain(v), |d| d.numeric(v)));
            }
            context.get(name).map(Dimension::numeric_plain)
        }
    }

    /// Compute derived dimensions from the free ones (and the context).
    pub fn resolve_derived(&self, partial: &Configuration, context: &Configuration) -> Result<Configuration> {
        for d in self.free_dims() {
            let v = partial.get(&d.name).ok_or_else(|| Error::MissingValue(d.name.clone()))?;
            if !d.contains(v) {
                return Err(Error::OutOfBounds {
                    name: d.name.clone(),
                    value: v.to_string(),
                });
            }
        }
        let mut out = partial.clone();
        for &i in &self.derived_order {
            let rule = &self.derived[i];
            let x = rule
                .formula
                .eval(&self.lookup(&out, context))
                .map_err(|e| Error::InvalidConfiguration(e.to_string()))?;
            let dim = self.dim(&rule.target).expect("validated at construction");
            let v = dim.value_from_number(x)?;
            out.insert(&rule.target, v);
        }
        Ok(out)
    }

    pub fn check(&self, config: &Configuration) -> ValidityReport {
        self.check_in(config, &Configuration::new())
    }

    /// Validate a complete configuration; `context` supplies task values.
    pub fn check_in(&self, config: &Configuration, context: &Configuration) -> ValidityReport {
        let mut violations = Vec::new();
        for d in &self.dims {
            match config.get(&d.name) {
                None => violations.push(format!("missing `{}`", d.name)),
                Some(v) if !d.contains(v) => violations.push(format!("`{}` = {v} out of bounds", d.name)),
                _ => {}
            }
        }
        for (name, _) in config.iter() {
            if self.dim(name).is_none() {
                violations.push(format!("unknown dimension `{name}`"));
            }
        }
        let lookup = self.lookup(config, context);
        for c in &self.constraints {
            match c.expr.eval_bool(&lookup) {
                Ok(true) => {}
                Ok(false) => violations.push(c.description.clone()),
                Err(e) => violations.push(format!("{} ({e})", c.description)),
            }
        }
        ValidityReport {
            valid: violations.is_empty(),
            violations,
        }
    }

    pub fn is_valid_in(&self, config: &Configuration, context: &Configuration) -> bool {
        self.check_in(config, context).valid
    }

    /// SHA-256 over the canonical JSON form of the definition.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(&self.to_def()).expect("space definition serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Look up a context value as a number (categorical labels by value).
    pub fn numeric_value(&self, config: &Configuration, name: &str) -> Option<f64> {
        let v = config.get(name)?;
        Some(self.dim(name).map_or_else(|| Dimension::numeric_plain(v), |d| d.numeric(v)))
    }
}

impl Dimension {
    fn numeric_plain(v: Value) -> f64 {
        match v {
            Value::Real(x) => x,
            Value::Int(x) => x as f64,
            Value::Cat(i) => i as f64,
        }
    }
}

/// Resolve categorical labels against a space so context lookups see the
/// numeric label value rather than the index.
pub fn numeric_context(space: &ParameterSpace, config: &Configuration) -> Configuration {
    config
        .iter()
        .map(|(k, v)| match (space.dim(k), v) {
            (Some(d), Value::Cat(_)) => (k, Value::Real(d.numeric(v))),
            _ => (k, v),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixed() -> ParameterSpace {
        ParameterSpace::builder("mixed")
            .real("r", 0.0, 10.0)
            .unwrap()
            .integer("i", 1, 5)
            .unwrap()
            .categorical("c", &["a", "b", "c", "d"])
            .unwrap()
            .build()
            .unwrap()
    }

    #[test]
    fn encode_examples() {
        let s = mixed();
        let c = Configuration::new().with("r", Value::Real(0.0)).with("i", Value::Int(1)).with("c", Value::Cat(2));
        assert_eq!(s.encode(&c).unwrap(), vec![0.0, 0.0, 0.625]);
        let c = c.with("r", Value::Real(10.0));
        assert_eq!(s.encode(&c).unwrap()[0], 1.0);
    }

    #[test]
    fn encode_errors() {
        let s = mixed();
        let c = Configuration::new()
            .with("r", Value::Real(11.0))
            .with("i", Value::Int(1))
            .with("c", Value::Cat(0));
        assert!(matches!(s.encode(&c), Err(Error::OutOfBounds { .. })));
        let c = c.with("r", Value::Real(1.0)).with("zzz", Value::Int(0));
        assert!(matches!(s.encode(&c), Err(Error::UnknownDimension(_))));
    }

    #[test]
    fn decode_examples() {
        let i = Dimension::integer("i", 1, 5).unwrap();
        assert_eq!(i.decode_value(0.5), Value::Int(3));
        let c = Dimension::categorical("c", &["x", "y", "z"]).unwrap();
        assert_eq!(c.decode_value(1.0), Value::Cat(2));
        let r = Dimension::real("r", 2.0, 8.0).unwrap();
        assert_eq!(r.decode_value(0.0), Value::Real(2.0));
    }

    #[test]
    fn integer_rounding_is_half_up() {
        let i = Dimension::integer("i", 0, 2).unwrap();
        assert_eq!(i.decode_value(0.25), Value::Int(1));
        assert_eq!(i.decode_value(0.75), Value::Int(2));
    }

    #[test]
    fn invalid_dimensions() {
        assert!(Dimension::real("r", 1.0, 1.0).is_err());
        assert!(Dimension::integer("i", 3, 2).is_err());
        assert!(Dimension::categorical::<&str>("c", &[]).is_err());
        assert!(Dimension::categorical("c", &["a", "a"]).is_err());
    }

    #[test]
    fn invalid_spaces() {
        let b = || ParameterSpace::builder("s").integer("a", 0, 10).unwrap().integer("b", 0, 10).unwrap();
        assert!(b().derived("b", "zz + 1").build().is_err());
        assert!(b().derived("nope", "a").build().is_err());
        assert!(b().constraint("a < zz", "bad").build().is_err());
        assert!(b().derived("a", "b").derived("b", "a").build().is_err());
        assert!(b().integer("a", 0, 1).unwrap().build().is_err());
    }

    #[test]
    fn derived_chain_resolves_in_order() {
        let s = ParameterSpace::builder("chain")
            .integer("a", 0, 100)
            .unwrap()
            .integer("c", 0, 100)
            .unwrap()
            .integer("b", 0, 100)
            .unwrap()
            .derived("c", "b + 1")
            .derived("b", "a * 2")
            .build()
            .unwrap();
        assert_eq!(s.encoded_dim(), 1);
        let out = s.resolve_derived(&Configuration::new().with("a", Value::Int(3)), &Configuration::new()).unwrap();
        assert_eq!(out.int("b"), Some(6));
        assert_eq!(out.int("c"), Some(7));
    }

    #[test]
    fn value_json_shapes() {
        let c = Configuration::new().with("a", Value::Int(3)).with("b", Value::Real(3.0)).with("c", Value::Cat(1));
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"a":3,"b":3.0,"c":{"cat":1}}"#);
        assert_eq!(serde_json::from_str::<Configuration>(&s).unwrap(), c);
    }
}
