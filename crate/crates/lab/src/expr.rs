//! Scalar expressions in the config, e.g. `f = "-3 + sin(pi * x)"`.
//!
//! Variables: `x`, `y` (node coordinates), `mu` (for the weight ω), and the
//! constants `pi`, `e`. The usual math functions can be written bare
//! (`sin`, `exp`, ...); they are mapped to evalexpr's `math::` builtins.

use std::fmt;

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};

const BARE_FUNCTIONS: &[&str] = &[
    "sin", "cos", "tan", "asin", "acos", "atan", "atan2", "sinh", "cosh", "tanh", "exp", "ln", "log10", "log2", "sqrt",
    "cbrt", "abs", "pow", "hypot",
];

/// A parsed expression. Cheap to evaluate repeatedly.
#[derive(Clone)]
pub struct Expr {
    src: String,
    node: Node<DefaultNumericTypes>,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.src)
    }
}

impl Expr {
    /// Parses `src`; only the listed variables may appear.
    pub fn parse(src: &str, allowed: &[&str]) -> Result<Self, String> {
        let mut node =
            build_operator_tree::<DefaultNumericTypes>(src).map_err(|e| format!("cannot parse {src:?}: {e}"))?;
        for name in node.iter_function_identifiers_mut() {
            if BARE_FUNCTIONS.contains(&name.as_str()) {
                *name = format!("math::{name}");
            }
        }
        if let Some(bad) = node
            .iter_variable_identifiers()
            .find(|v| !allowed.contains(v) && *v != "pi" && *v != "e")
        {
            return Err(format!(
                "unknown variable `{bad}` in {src:?} (allowed: {})",
                allowed.join(", ")
            ));
        }
        let expr = Expr {
            src: src.to_string(),
            node,
        };
        // catch type errors (e.g. boolean results) before any solve
        let probe: Vec<(&str, f64)> = allowed.iter().map(|&v| (v, 0.5)).collect();
        expr.eval(&probe)?;
        Ok(expr)
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    pub fn eval(&self, vars: &[(&str, f64)]) -> Result<f64, String> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        let consts = [("pi", std::f64::consts::PI), ("e", std::f64::consts::E)];
        for (k, v) in consts.iter().chain(vars) {
            ctx.set_value((*k).to_string(), Value::Float(*v))
                .map_err(|e| e.to_string())?;
        }
        let v = self
            .node
            .eval_number_with_context(&ctx)
            .map_err(|e| format!("evaluating {:?}: {e}", self.src))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{:?} is not finite at {vars:?}", self.src))
        }
    }

    pub fn eval_xy(&self, x: f64, y: f64) -> Result<f64, String> {
        self.eval(&[("x", x), ("y", y)])
    }
}
