//! User-supplied feedback laws written as expressions.
//!
//! File format (TOML):
//!
//! ```toml
//! u = ["beta_star * x1 / math::hypot(x1, x2)", "beta_star * x2 / math::hypot(x1, x2)"]
//! ```
//!
//! Expressions see the state as `x1..xn`, every plant parameter by name, and `pi`.

use std::collections::BTreeMap;
use std::path::Path;

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::numerics::Vector;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpressionFile {
    u: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExpressionController {
    exprs: Vec<Node<DefaultNumericTypes>>,
    constants: BTreeMap<String, f64>,
    n: usize,
}

impl ExpressionController {
    pub fn parse(text: &str, n: usize, m: usize, constants: BTreeMap<String, f64>) -> Result<Self> {
        let file: ExpressionFile = toml::from_str(text).map_err(|e| Error::Config(format!("controller file: {e}")))?;
        if file.u.len() != m {
            return Err(Error::Config(format!(
                "controller file: u has {} expressions, plant has {m} inputs",
                file.u.len()
            )));
        }
        let exprs = file
            .u
            .iter()
            .enumerate()
            .map(|(i, s)| build_operator_tree(s).map_err(|e| Error::Config(format!("controller file: u[{i}]: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let out = ExpressionController { exprs, constants, n };
        out.eval(&Vector::from_element(n, 0.5))?;
        Ok(out)
    }

    pub fn load(path: &Path, n: usize, m: usize, constants: BTreeMap<String, f64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, n, m, constants)
    }

    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!("state has {} entries, expected {}", x.len(), self.n)));
        }
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        let mut set = |name: String, v: f64| {
            ctx.set_value(name, Value::Float(v))
                .map_err(|e| Error::Controller(e.to_string()))
        };
        set("pi".into(), std::f64::consts::PI)?;
        for (k, v) in &self.constants {
            set(k.clone(), *v)?;
        }
        for (i, v) in x.iter().enumerate() {
            set(format!("x{}", i + 1), *v)?;
        }
        let values = self
            .exprs
            .iter()
            .map(|e| {
                e.eval_number_with_context(&ctx)
                    .map_err(|err| Error::Controller(format!("expression '{e}': {err}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Vector::from_vec(values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_with_state_and_constants() {
        let c = ExpressionController::parse(
            r#"u = ["k * x1 + math::sin(x2)", "2"]"#,
            2,
            2,
            BTreeMap::from([("k".to_string(), 3.0)]),
        )
        .unwrap();
        let u = c.eval(&Vector::from_vec(vec![1.0, pi_half()])).unwrap();
        assert_eq!(u.as_slice(), &[4.0, 2.0]);
    }

    fn pi_half() -> f64 {
        std::f64::consts::FRAC_PI_2
    }

    #[test]
    fn reports_bad_files() {
        let none = BTreeMap::new();
        assert!(ExpressionController::parse(r#"u = ["x1"]"#, 2, 2, none.clone()).is_err());
        assert!(ExpressionController::parse(r#"u = ["x1 +"]"#, 1, 1, none.clone()).is_err());
        assert!(ExpressionController::parse(r#"u = ["y"]"#, 1, 1, none).is_err());
    }
}
