//! Infix rendering of genomes, with `a` for `α` and `b` for `β`.

use crate::expr::{BinaryOp, Genome, Term, UnaryOp};

/// Binding strength of the outermost operator of a rendered fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Sum = 1,
    Product = 2,
    Prefix = 3,
    Atom = 4,
}

struct Frag {
    text: String,
    prec: Prec,
}

fn frag(text: String, prec: Prec) -> Frag {
    Frag { text, prec }
}

fn atom(text: String) -> Frag {
    frag(text, Prec::Atom)
}

impl Frag {
    /// Text parenthesized unless it binds at least as tightly as `min`.
    fn at(&self, min: Prec) -> String {
        if self.prec >= min {
            self.text.clone()
        } else {
            format!("({})", self.text)
        }
    }
}

fn unary(op: UnaryOp, s: Frag) -> Frag {
    use UnaryOp::*;
    let t = &s.text;
    match op {
        Identity => s,
        Abs => atom(format!("|{t}|")),
        Neg => frag(format!("-{}", s.at(Prec::Atom)), Prec::Prefix),
        Zero => atom("0".into()),
        Square => atom(format!("{}^2", s.at(Prec::Atom))),
        Cube => atom(format!("{}^3", s.at(Prec::Atom))),
        SignSqrt => frag(format!("sign({t})*sqrt(|{t}|)"), Prec::Product),
        LogAbs => atom(format!("log(|{t}|)")),
        Sigmoid => atom(format!("sigmoid({t})")),
        ExpNegAbs => atom(format!("exp(-|{t}|)")),
        Gaussian => atom(format!("exp(-{}^2)", s.at(Prec::Atom))),
        Sin => atom(format!("sin({t})")),
        Cos => atom(format!("cos({t})")),
        Tan => atom(format!("tan({t})")),
        Atan => atom(format!("atan({t})")),
        Erf => atom(format!("erf({t})")),
        Erfc => atom(format!("erfc({t})")),
        Relu => atom(format!("max({t}, 0)")),
        NegPart => atom(format!("min({t}, 0)")),
        Const => atom("a".into()),
        Scale => frag(format!("a*{}", s.at(Prec::Prefix)), Prec::Product),
        Shift => frag(format!("a + {}", s.at(Prec::Sum)), Prec::Sum),
    }
}

fn binary(op: BinaryOp, l: Frag, r: Frag) -> Frag {
    use BinaryOp::*;
    let (lt, rt) = (&l.text, &r.text);
    match op {
        Add => frag(format!("{} + {}", l.at(Prec::Sum), r.at(Prec::Sum)), Prec::Sum),
        Sub => frag(format!("{} - {}", l.at(Prec::Sum), r.at(Prec::Product)), Prec::Sum),
        Mul => frag(format!("{}*{}", l.at(Prec::Product), r.at(Prec::Prefix)), Prec::Product),
        Div => frag(format!("{}/{}", l.at(Prec::Product), r.at(Prec::Prefix)), Prec::Product),
        Ratio => frag(
            format!("{}/({} + {})", l.at(Prec::Product), l.at(Prec::Sum), r.at(Prec::Sum)),
            Prec::Product,
        ),
        Max => atom(format!("max({lt}, {rt})")),
        Min => atom(format!("min({lt}, {rt})")),
        Gate => frag(
            format!("{}/(1 + exp(-{}))", l.at(Prec::Product), r.at(Prec::Atom)),
            Prec::Product,
        ),
        ExpAbsDiff => atom(format!("exp(-|{} - {}|)", l.at(Prec::Sum), r.at(Prec::Product))),
        ExpSqDiff => atom(format!("exp(-({} - {})^2)", l.at(Prec::Sum), r.at(Prec::Product))),
        Lerp => frag(
            format!("b*{} + (1 - b)*{}", l.at(Prec::Prefix), r.at(Prec::Prefix)),
            Prec::Sum,
        ),
    }
}

fn render_term(t: &Term) -> Frag {
    match t {
        Term::X => atom("x".into()),
        Term::Unary(op, a) => unary(*op, render_term(a)),
        Term::Binary(op, l, r) => binary(*op, render_term(l), render_term(r)),
    }
}

/// Human-readable formula, e.g. `sin(x) - cos(x)` for `t1:U11-U12-B1`.
pub fn render_formula(genome: &Genome) -> String {
    render_term(&Term::from_genome(genome)).text
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn r(genes: &[u8]) -> String {
        render_formula(&Genome::from_genes(genes).unwrap())
    }

    #[test]
    fn examples() {
        assert_eq!(r(&[11, 12, 1]), "sin(x) - cos(x)");
        assert_eq!(r(&[19, 0, 0]), "a + x");
        assert_eq!(r(&[12, 14, 0]), "cos(x) + atan(x)");
        assert_eq!(r(&[2, 0, 2]), "-x*x");
        assert_eq!(r(&[11, 21, 2]), "sin(x)*(a + x)");
        assert_eq!(r(&[0, 21, 1]), "x - (a + x)");
        assert_eq!(r(&[14, 3, 0, 12, 7, 0]), "cos(atan(x)/(1 + exp(-0))) + x");
    }

    #[test]
    fn equal_renders_mean_equal_functions() {
        use crate::expr::{ActivationExpr, ChannelActivation};
        let xs = [-2.3, -0.7, 0.1, 0.9, 1.7, 3.1];
        let mut seen: HashMap<String, Genome> = HashMap::new();
        for g in Genome::all_type_i() {
            let text = render_formula(&g);
            assert!(!text.is_empty());
            if let Some(prev) = seen.insert(text.clone(), g.clone()) {
                let a = ActivationExpr::decode(&prev, 1).unwrap();
                let b = ActivationExpr::decode(&g, 1).unwrap();
                for &x in &xs {
                    let (va, vb) = (a.value(x, 0), b.value(x, 0));
                    assert!(
                        va == vb || (va.is_nan() && vb.is_nan()) || (va - vb).abs() <= 1e-12 * va.abs().max(1.0),
                        "`{text}` renders {prev} and {g}, which differ at {x}"
                    );
                }
            }
        }
    }
}
