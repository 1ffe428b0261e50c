//! Semantic deduplication key for genomes.
//!
//! Rewrites applied bottom-up:
//! - `0(t)` → `0` (the zero operator ignores its operand)
//! - `x(t)` → `t` for a composed identity
//! - `a + 0`, `0 + a`, `a − 0` → `a`
//! - operands of commutative operators sorted by term order
//!
//! The key is only used to share fitness results; it never changes the
//! genomes that evolve.

use std::fmt;

use serde::{Serialize, Serializer};

use super::genome::Genome;
use super::graph::Term;
use super::ops::{BinaryOp, UnaryOp};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalForm(Term);

impl CanonicalForm {
    pub fn term(&self) -> &Term {
        &self.0
    }
}

pub fn canonicalize(genome: &Genome) -> CanonicalForm {
    CanonicalForm(simplify(Term::from_genome(genome)))
}

fn zero() -> Term {
    Term::unary(UnaryOp::Zero, Term::X)
}

fn is_zero(t: &Term) -> bool {
    matches!(t, Term::Unary(UnaryOp::Zero, _))
}

fn simplify(term: Term) -> Term {
    match term {
        Term::X => Term::X,
        Term::Unary(op, arg) => {
            let arg = simplify(*arg);
            match op {
                UnaryOp::Zero => zero(),
                UnaryOp::Identity if arg != Term::X => arg,
                _ => Term::unary(op, arg),
            }
        }
        Term::Binary(op, lhs, rhs) => {
            let lhs = simplify(*lhs);
            let rhs = simplify(*rhs);
            match op {
                BinaryOp::Add if is_zero(&rhs) => lhs,
                BinaryOp::Add if is_zero(&lhs) => rhs,
                BinaryOp::Sub if is_zero(&rhs) => lhs,
                op if op.is_commutative() && rhs < lhs => Term::binary(op, rhs, lhs),
                op => Term::binary(op, lhs, rhs),
            }
        }
    }
}

impl fmt::Display for CanonicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(t: &Term, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match t {
                Term::X => f.write_str("x"),
                Term::Unary(op, arg) if **arg == Term::X => write!(f, "U{}", op.index()),
                Term::Unary(op, arg) => {
                    write!(f, "U{}(", op.index())?;
                    go(arg, f)?;
                    f.write_str(")")
                }
                Term::Binary(op, l, r) => {
                    write!(f, "B{}(", op.index())?;
                    go(l, f)?;
                    f.write_str(",")?;
                    go(r, f)?;
                    f.write_str(")")
                }
            }
        }
        go(&self.0, f)
    }
}

impl Serialize for CanonicalForm {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}
