//! Density expressions given as strings, e.g. `exp(-2.5*((x+1.5)^2+y^2))`.
//!
//! Variables are `x` and `y`; `pi` is predefined. Integer literals are read as
//! floats, so `1/2` is `0.5`. Besides the evalexpr builtins the functions
//! `exp, ln, sqrt, abs, sin, cos, tan, sinh, cosh, tanh, atan` and
//! `pow(a, b)` are available without the `math::` prefix.

use std::sync::Arc;

use evalexpr::error::EvalexprResultValue;
use evalexpr::{build_operator_tree, Context, DefaultNumericTypes, EvalexprError, EvalexprResult, Node, Value};

/// A parsed expression in `x` and `y`.
#[derive(Debug, Clone)]
pub struct DensityExpr {
    source: String,
    tree: Arc<Node>,
}

struct Point {
    x: Value,
    y: Value,
    pi: Value,
}

fn unary(name: &str) -> Option<fn(f64) -> f64> {
    Some(match name {
        "exp" => f64::exp,
        "ln" => f64::ln,
        "sqrt" => f64::sqrt,
        "abs" => f64::abs,
        "sin" => f64::sin,
        "cos" => f64::cos,
        "tan" => f64::tan,
        "sinh" => f64::sinh,
        "cosh" => f64::cosh,
        "tanh" => f64::tanh,
        "atan" => f64::atan,
        _ => return None,
    })
}

fn as_float(v: &Value) -> EvalexprResult<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Int(i) => Ok(*i as f64),
        other => Err(EvalexprError::expected_number(other.clone())),
    }
}

impl Context for Point {
    type NumericTypes = DefaultNumericTypes;

    fn get_value(&self, identifier: &str) -> Option<&Value> {
        match identifier {
            "x" => Some(&self.x),
            "y" => Some(&self.y),
            "pi" => Some(&self.pi),
            _ => None,
        }
    }

    fn call_function(&self, identifier: &str, argument: &Value) -> EvalexprResultValue {
        if let Some(f) = unary(identifier) {
            return Ok(Value::Float(f(as_float(argument)?)));
        }
        if identifier == "pow" {
            let t = argument.as_fixed_len_tuple(2)?;
            return Ok(Value::Float(as_float(&t[0])?.powf(as_float(&t[1])?)));
        }
        Err(EvalexprError::FunctionIdentifierNotFound(identifier.to_string()))
    }

    fn are_builtin_functions_disabled(&self) -> bool {
        false
    }

    fn set_builtin_functions_disabled(&mut self, _disabled: bool) -> EvalexprResult<()> {
        Err(EvalexprError::BuiltinFunctionsCannotBeDisabled)
    }
}

/// Appends `.0` to integer literals so that arithmetic stays in floating point.
fn floatify(src: &str) -> String {
    let b = src.as_bytes();
    let mut out = String::with_capacity(src.len() + 8);
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        let starts_number = c.is_ascii_digit() && (i == 0 || !(b[i - 1].is_ascii_alphanumeric() || b[i - 1] == b'_' || b[i - 1] == b'.'));
        if !starts_number {
            out.push(c as char);
            i += 1;
            continue;
        }
        let start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        let mut float = false;
        if i < b.len() && b[i] == b'.' {
            float = true;
            i += 1;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
        }
        if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
            let mut j = i + 1;
            if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                j += 1;
            }
            if j < b.len() && b[j].is_ascii_digit() {
                float = true;
                i = j;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
            }
        }
        let lit = &src[start..i];
        out.push_str(lit);
        if !float {
            out.push_str(".0");
        } else if lit.ends_with('.') {
            out.push('0');
        }
    }
    out
}

impl DensityExpr {
    /// Parses `source` and checks that it evaluates to a number at the origin.
    pub fn parse(source: &str) -> Result<Self, String> {
        let tree = build_operator_tree::<DefaultNumericTypes>(&floatify(source)).map_err(|e| e.to_string())?;
        let expr = Self {
            source: source.to_string(),
            tree: Arc::new(tree),
        };
        expr.try_eval(0.0, 0.0)?;
        Ok(expr)
    }

    /// The text as written.
    pub fn source(&self) -> &str {
        &self.source
    }

    /// Value at `(x, y)`, or the evaluation error.
    pub fn try_eval(&self, x: f64, y: f64) -> Result<f64, String> {
        let ctx = Point {
            x: Value::Float(x),
            y: Value::Float(y),
            pi: Value::Float(std::f64::consts::PI),
        };
        match self.tree.eval_with_context(&ctx).map_err(|e| e.to_string())? {
            Value::Float(f) => Ok(f),
            Value::Int(i) => Ok(i as f64),
            other => Err(format!("expression evaluates to {other}, not a number")),
        }
    }

    /// Value at `(x, y)`; evaluation errors give NaN, which the density checks reject.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.try_eval(x, y).unwrap_or(f64::NAN)
    }

    /// Closure suitable for a custom density profile.
    pub fn into_fn(self) -> Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> {
        Arc::new(move |x, y| self.eval(x, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_literals_become_floats() {
        assert_eq!(floatify("1/2 + x^2"), "1.0/2.0 + x^2.0");
        assert_eq!(floatify("1e-3*x2 + 2.5"), "1e-3*x2 + 2.5");
        assert_eq!(floatify("3."), "3.0");
    }

    #[test]
    fn evaluates_common_functions() {
        let e = DensityExpr::parse("exp(-x^2) + cos(pi*y) + 1/2").unwrap();
        let want = (-0.25f64).exp() + (std::f64::consts::PI * 0.3).cos() + 0.5;
        assert!((e.eval(0.5, 0.3) - want).abs() < 1e-15);
        let p = DensityExpr::parse("pow(x, 3) + math::sqrt(4)").unwrap();
        assert!((p.eval(2.0, 0.0) - 10.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_garbage() {
        assert!(DensityExpr::parse("exp(").is_err());
        assert!(DensityExpr::parse("z + 1").is_err());
    }
}
