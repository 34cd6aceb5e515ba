use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use super::store::PStore;
use super::value::{Value, ValueType};
use crate::rng;
use crate::syntax::{Expr, ExternDecl};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("function `{name}` expects {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("`{name}`: argument type mismatch ({args})")]
    TypeMismatch { name: String, args: String },
    #[error("division by zero")]
    DivByZero,
    #[error("function `{0}` is already registered")]
    Duplicate(String),
}

/// A local function callable from expressions. Implementations must be
/// total and deterministic.
pub trait Function: Send + Sync {
    fn name(&self) -> &str;
    fn arity(&self) -> usize;
    /// `strict` turns totalised corner cases (type mismatch, division by
    /// zero) into errors.
    fn apply(&self, args: &[Value], strict: bool) -> Result<Value, EvalError>;
}

type BuiltinFn = fn(&[Value], bool) -> Result<Value, EvalError>;

struct Builtin {
    name: &'static str,
    arity: usize,
    f: BuiltinFn,
}

impl Function for Builtin {
    fn name(&self) -> &str {
        self.name
    }

    fn arity(&self) -> usize {
        self.arity
    }

    fn apply(&self, args: &[Value], strict: bool) -> Result<Value, EvalError> {
        (self.f)(args, strict)
    }
}

fn mismatch(name: &str, args: &[Value], strict: bool, neutral: Value) -> Result<Value, EvalError> {
    if strict {
        let args = args.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ");
        Err(EvalError::TypeMismatch {
            name: name.into(),
            args,
        })
    } else {
        Ok(neutral)
    }
}

macro_rules! int_op {
    ($name:literal, $op:expr) => {
        Builtin {
            name: $name,
            arity: 2,
            f: |a, strict| match a {
                [Value::Int(x), Value::Int(y)] => Ok(Value::Int($op(*x, *y))),
                _ => mismatch($name, a, strict, Value::Int(0)),
            },
        }
    };
}

macro_rules! cmp_op {
    ($name:literal, $op:tt) => {
        Builtin {
            name: $name,
            arity: 2,
            f: |a, strict| match a {
                [Value::Int(x), Value::Int(y)] => Ok(Value::Bool(x $op y)),
                [Value::Str(x), Value::Str(y)] => Ok(Value::Bool(x $op y)),
                _ => mismatch($name, a, strict, Value::Bool(false)),
            },
        }
    };
}

macro_rules! bool_op {
    ($name:literal, $op:tt) => {
        Builtin {
            name: $name,
            arity: 2,
            f: |a, strict| match a {
                [Value::Bool(x), Value::Bool(y)] => Ok(Value::Bool(*x $op *y)),
                _ => mismatch($name, a, strict, Value::Bool(false)),
            },
        }
    };
}

fn builtins() -> Vec<Builtin> {
    vec![
        int_op!("add", i64::wrapping_add),
        int_op!("sub", i64::wrapping_sub),
        int_op!("mul", i64::wrapping_mul),
        Builtin {
            name: "div",
            arity: 2,
            f: |a, strict| match a {
                [Value::Int(_), Value::Int(0)] if strict => Err(EvalError::DivByZero),
                [Value::Int(_), Value::Int(0)] => Ok(Value::Int(0)),
                [Value::Int(x), Value::Int(y)] => Ok(Value::Int(x.wrapping_div(*y))),
                _ => mismatch("div", a, strict, Value::Int(0)),
            },
        },
        Builtin {
            name: "eq",
            arity: 2,
            f: |a, _| Ok(Value::Bool(a[0] == a[1])),
        },
        cmp_op!("lt", <),
        cmp_op!("le", <=),
        bool_op!("and", &&),
        bool_op!("or", ||),
        Builtin {
            name: "not",
            arity: 1,
            f: |a, strict| match a {
                [Value::Bool(x)] => Ok(Value::Bool(!x)),
                _ => mismatch("not", a, strict, Value::Bool(false)),
            },
        },
        Builtin {
            name: "concat",
            arity: 2,
            f: |a, strict| match a {
                [Value::Str(x), Value::Str(y)] => Ok(Value::Str(format!("{x}{y}"))),
                _ => mismatch("concat", a, strict, Value::Str(String::new())),
            },
        },
    ]
}

/// An uninterpreted function: a keyed hash of its name and canonical
/// argument text, projected into the declared result type.
#[derive(Debug, Clone)]
pub struct Extern {
    decl: ExternDecl,
    seed: u64,
}

impl Extern {
    pub fn new(decl: ExternDecl, seed: u64) -> Self {
        Self { decl, seed }
    }
}

impl Function for Extern {
    fn name(&self) -> &str {
        &self.decl.name
    }

    fn arity(&self) -> usize {
        self.decl.arity
    }

    fn apply(&self, args: &[Value], _strict: bool) -> Result<Value, EvalError> {
        let text = format!(
            "{}({})",
            self.decl.name,
            args.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",")
        );
        let h = rng::hash_bytes(self.seed, text.as_bytes());
        Ok(match self.decl.ret {
            ValueType::Bool => Value::Bool(h & 1 == 1),
            ValueType::Int => Value::Int((h & 0xff) as i64),
            ValueType::Str => Value::Str(format!("{:08x}", h as u32)),
        })
    }
}

/// Function environment: the builtin table plus declared externs, all
/// looked up by name.
#[derive(Clone)]
pub struct FunEnv {
    table: BTreeMap<String, Arc<dyn Function>>,
    strict: bool,
    seed: u64,
}

impl std::fmt::Debug for FunEnv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunEnv")
            .field("functions", &self.table.keys().collect::<Vec<_>>())
            .field("strict", &self.strict)
            .field("seed", &self.seed)
            .finish()
    }
}

impl FunEnv {
    pub fn builtins_only() -> Self {
        let mut table: BTreeMap<String, Arc<dyn Function>> = BTreeMap::new();
        for b in builtins() {
            table.insert(b.name.to_string(), Arc::new(b));
        }
        Self {
            table,
            strict: false,
            seed: 0,
        }
    }

    /// Builtins plus one [`Extern`] per declaration, keyed by `seed`.
    pub fn new(externs: &[ExternDecl], seed: u64) -> Result<Self, EvalError> {
        let mut env = Self::builtins_only();
        env.seed = seed;
        for d in externs {
            if let Some(prev) = env.table.get(&d.name) {
                // Identical redeclaration (program and policy) is fine.
                if prev.arity() == d.arity && !builtins().iter().any(|b| b.name == d.name) {
                    continue;
                }
                return Err(EvalError::Duplicate(d.name.clone()));
            }
            env.register(Arc::new(Extern::new(d.clone(), seed)))?;
        }
        Ok(env)
    }

    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn register(&mut self, f: Arc<dyn Function>) -> Result<(), EvalError> {
        let name = f.name().to_string();
        if self.table.contains_key(&name) {
            return Err(EvalError::Duplicate(name));
        }
        self.table.insert(name, f);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn Function>> {
        self.table.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.table.keys().map(String::as_str)
    }
}

/// `σ ⊢ e ↓ v`. An absent process store behaves as an empty one.
pub fn eval_expr(sigma: Option<&PStore>, e: &Expr, fe: &FunEnv) -> Result<Value, EvalError> {
    match e {
        Expr::Const(v) => Ok(v.clone()),
        Expr::Var(x) => sigma
            .and_then(|s| s.get(x))
            .cloned()
            .ok_or_else(|| EvalError::Unbound(x.clone())),
        Expr::Call(name, args) => {
            let f = fe
                .get(name)
                .ok_or_else(|| EvalError::UnknownFunction(name.clone()))?;
            if f.arity() != args.len() {
                return Err(EvalError::Arity {
                    name: name.clone(),
                    expected: f.arity(),
                    got: args.len(),
                });
            }
            let vals = args
                .iter()
                .map(|a| eval_expr(sigma, a, fe))
                .collect::<Result<Vec<_>, _>>()?;
            f.apply(&vals, fe.strict)
        }
    }
}
