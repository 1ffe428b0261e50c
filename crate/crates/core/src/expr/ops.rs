//! Scalar operator kernels for the unary and binary candidate tables.
//!
//! Kernels evaluate in `f64`. Tensor paths call them per element and round
//! the result to `f32`, which keeps one implementation for training,
//! threshold fusion and the finite-difference checks.

use serde::{Deserialize, Serialize};

/// Floor applied to `|x|` inside `log|x|`.
pub const EPS_LOG: f64 = 1e-12;
/// Minimum denominator magnitude for the division-family binary operators.
pub const EPS_DEN: f64 = 1e-8;

/// Number of unary operators in the standard table.
pub const UNARY_COUNT: usize = 22;
/// Number of binary operators in the standard table.
pub const BINARY_COUNT: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum UnaryOp {
    Identity = 0,
    Abs = 1,
    Neg = 2,
    Zero = 3,
    Square = 4,
    Cube = 5,
    SignSqrt = 6,
    LogAbs = 7,
    Sigmoid = 8,
    ExpNegAbs = 9,
    Gaussian = 10,
    Sin = 11,
    Cos = 12,
    Tan = 13,
    Atan = 14,
    Erf = 15,
    Erfc = 16,
    Relu = 17,
    NegPart = 18,
    Const = 19,
    Scale = 20,
    Shift = 21,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum BinaryOp {
    Add = 0,
    Sub = 1,
    Mul = 2,
    Div = 3,
    Ratio = 4,
    Max = 5,
    Min = 6,
    Gate = 7,
    ExpAbsDiff = 8,
    ExpSqDiff = 9,
    Lerp = 10,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; UNARY_COUNT] = [
        UnaryOp::Identity,
        UnaryOp::Abs,
        UnaryOp::Neg,
        UnaryOp::Zero,
        UnaryOp::Square,
        UnaryOp::Cube,
        UnaryOp::SignSqrt,
        UnaryOp::LogAbs,
        UnaryOp::Sigmoid,
        UnaryOp::ExpNegAbs,
        UnaryOp::Gaussian,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Tan,
        UnaryOp::Atan,
        UnaryOp::Erf,
        UnaryOp::Erfc,
        UnaryOp::Relu,
        UnaryOp::NegPart,
        UnaryOp::Const,
        UnaryOp::Scale,
        UnaryOp::Shift,
    ];

    pub fn from_index(index: usize) -> Option<UnaryOp> {
        Self::ALL.get(index).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether the operator carries a per-channel `α`.
    pub fn has_param(self) -> bool {
        matches!(self, UnaryOp::Const | UnaryOp::Scale | UnaryOp::Shift)
    }

    /// Initial value of `α`: neutral for the constant and shift, unit scale.
    pub fn param_init(self) -> f64 {
        match self {
            UnaryOp::Scale => 1.0,
            _ => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Identity => "x",
            UnaryOp::Abs => "|x|",
            UnaryOp::Neg => "-x",
            UnaryOp::Zero => "0",
            UnaryOp::Square => "x^2",
            UnaryOp::Cube => "x^3",
            UnaryOp::SignSqrt => "sign(x)*sqrt(|x|)",
            UnaryOp::LogAbs => "log(|x|)",
            UnaryOp::Sigmoid => "1/(1+exp(-x))",
            UnaryOp::ExpNegAbs => "exp(-|x|)",
            UnaryOp::Gaussian => "exp(-x^2)",
            UnaryOp::Sin => "sin(x)",
            UnaryOp::Cos => "cos(x)",
            UnaryOp::Tan => "tan(x)",
            UnaryOp::Atan => "atan(x)",
            UnaryOp::Erf => "erf(x)",
            UnaryOp::Erfc => "erfc(x)",
            UnaryOp::Relu => "max(x,0)",
            UnaryOp::NegPart => "min(x,0)",
            UnaryOp::Const => "a",
            UnaryOp::Scale => "a*x",
            UnaryOp::Shift => "a+x",
        }
    }

    /// Evaluates the operator at `x` with parameter `alpha` (ignored when the
    /// operator has none).
    pub fn apply(self, x: f64, alpha: f64) -> f64 {
        match self {
            UnaryOp::Identity => x,
            UnaryOp::Abs => x.abs(),
            UnaryOp::Neg => -x,
            UnaryOp::Zero => 0.0,
            UnaryOp::Square => x * x,
            UnaryOp::Cube => x * x * x,
            UnaryOp::SignSqrt => x.signum() * x.abs().sqrt(),
            UnaryOp::LogAbs => x.abs().max(EPS_LOG).ln(),
            UnaryOp::Sigmoid => sigmoid(x),
            UnaryOp::ExpNegAbs => (-x.abs()).exp(),
            UnaryOp::Gaussian => (-x * x).exp(),
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Tan => x.tan(),
            UnaryOp::Atan => x.atan(),
            UnaryOp::Erf => libm::erf(x),
            UnaryOp::Erfc => libm::erfc(x),
            UnaryOp::Relu => x.max(0.0),
            UnaryOp::NegPart => x.min(0.0),
            UnaryOp::Const => alpha,
            UnaryOp::Scale => alpha * x,
            UnaryOp::Shift => alpha + x,
        }
    }

    /// Returns `(∂f/∂x, ∂f/∂α)`. Kinks take the right-hand derivative
    /// except where noted.
    pub fn grad(self, x: f64, alpha: f64) -> (f64, f64) {
        match self {
            UnaryOp::Identity => (1.0, 0.0),
            UnaryOp::Abs => (if x >= 0.0 { 1.0 } else { -1.0 }, 0.0),
            UnaryOp::Neg => (-1.0, 0.0),
            UnaryOp::Zero => (0.0, 0.0),
            UnaryOp::Square => (2.0 * x, 0.0),
            UnaryOp::Cube => (3.0 * x * x, 0.0),
            UnaryOp::SignSqrt => {
                let a = x.abs();
                // Infinite slope at the origin; report zero rather than inf.
                if a == 0.0 {
                    (0.0, 0.0)
                } else {
                    (0.5 / a.sqrt(), 0.0)
                }
            }
            UnaryOp::LogAbs => {
                if x.abs() > EPS_LOG {
                    (1.0 / x, 0.0)
                } else {
                    (0.0, 0.0)
                }
            }
            UnaryOp::Sigmoid => {
                let s = sigmoid(x);
                (s * (1.0 - s), 0.0)
            }
            UnaryOp::ExpNegAbs => {
                let e = (-x.abs()).exp();
                (if x >= 0.0 { -e } else { e }, 0.0)
            }
            UnaryOp::Gaussian => (-2.0 * x * (-x * x).exp(), 0.0),
            UnaryOp::Sin => (x.cos(), 0.0),
            UnaryOp::Cos => (-x.sin(), 0.0),
            UnaryOp::Tan => {
                let t = x.tan();
                (1.0 + t * t, 0.0)
            }
            UnaryOp::Atan => (1.0 / (1.0 + x * x), 0.0),
            UnaryOp::Erf => (erf_slope(x), 0.0),
            UnaryOp::Erfc => (-erf_slope(x), 0.0),
            UnaryOp::Relu => (if x > 0.0 { 1.0 } else { 0.0 }, 0.0),
            UnaryOp::NegPart => (if x < 0.0 { 1.0 } else { 0.0 }, 0.0),
            UnaryOp::Const => (0.0, 1.0),
            UnaryOp::Scale => (alpha, x),
            UnaryOp::Shift => (1.0, 1.0),
        }
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; BINARY_COUNT] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Ratio,
        BinaryOp::Max,
        BinaryOp::Min,
        BinaryOp::Gate,
        BinaryOp::ExpAbsDiff,
        BinaryOp::ExpSqDiff,
        BinaryOp::Lerp,
    ];

    pub fn from_index(index: usize) -> Option<BinaryOp> {
        Self::ALL.get(index).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether the operator carries a per-channel `β`.
    pub fn has_param(self) -> bool {
        self == BinaryOp::Lerp
    }

    pub fn param_init(self) -> f64 {
        match self {
            BinaryOp::Lerp => 0.5,
            _ => 0.0,
        }
    }

    /// Operators whose operands may be swapped without changing the value.
    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            BinaryOp::Add
                | BinaryOp::Mul
                | BinaryOp::Max
                | BinaryOp::Min
                | BinaryOp::ExpAbsDiff
                | BinaryOp::ExpSqDiff
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "x+y",
            BinaryOp::Sub => "x-y",
            BinaryOp::Mul => "x*y",
            BinaryOp::Div => "x/y",
            BinaryOp::Ratio => "x/(x+y)",
            BinaryOp::Max => "max(x,y)",
            BinaryOp::Min => "min(x,y)",
            BinaryOp::Gate => "x/(1+exp(-y))",
            BinaryOp::ExpAbsDiff => "exp(-|x-y|)",
            BinaryOp::ExpSqDiff => "exp(-(x-y)^2)",
            BinaryOp::Lerp => "b*x+(1-b)*y",
        }
    }

    pub fn apply(self, x: f64, y: f64, beta: f64) -> f64 {
        match self {
            BinaryOp::Add => x + y,
            BinaryOp::Sub => x - y,
            BinaryOp::Mul => x * y,
            BinaryOp::Div => x / clamp_den(y).0,
            BinaryOp::Ratio => x / clamp_den(x + y).0,
            BinaryOp::Max => x.max(y),
            BinaryOp::Min => x.min(y),
            BinaryOp::Gate => x * sigmoid(y),
            BinaryOp::ExpAbsDiff => (-(x - y).abs()).exp(),
            BinaryOp::ExpSqDiff => {
                let d = x - y;
                (-d * d).exp()
            }
            BinaryOp::Lerp => beta * x + (1.0 - beta) * y,
        }
    }

    /// Returns `(∂f/∂x, ∂f/∂y, ∂f/∂β)`. Ties in max/min route to `x`.
    pub fn grad(self, x: f64, y: f64, beta: f64) -> (f64, f64, f64) {
        match self {
            BinaryOp::Add => (1.0, 1.0, 0.0),
            BinaryOp::Sub => (1.0, -1.0, 0.0),
            BinaryOp::Mul => (y, x, 0.0),
            BinaryOp::Div => {
                let (d, clamped) = clamp_den(y);
                if clamped {
                    (1.0 / d, 0.0, 0.0)
                } else {
                    (1.0 / d, -x / (d * d), 0.0)
                }
            }
            BinaryOp::Ratio => {
                let (d, clamped) = clamp_den(x + y);
                if clamped {
                    (1.0 / d, 0.0, 0.0)
                } else {
                    let d2 = d * d;
                    (y / d2, -x / d2, 0.0)
                }
            }
            BinaryOp::Max => {
                if x >= y {
                    (1.0, 0.0, 0.0)
                } else {
                    (0.0, 1.0, 0.0)
                }
            }
            BinaryOp::Min => {
                if x <= y {
                    (1.0, 0.0, 0.0)
                } else {
                    (0.0, 1.0, 0.0)
                }
            }
            BinaryOp::Gate => {
                let s = sigmoid(y);
                (s, x * s * (1.0 - s), 0.0)
            }
            BinaryOp::ExpAbsDiff => {
                let d = x - y;
                let e = (-d.abs()).exp();
                let s = if d >= 0.0 { -e } else { e };
                (s, -s, 0.0)
            }
            BinaryOp::ExpSqDiff => {
                let d = x - y;
                let g = -2.0 * d * (-d * d).exp();
                (g, -g, 0.0)
            }
            BinaryOp::Lerp => (beta, 1.0 - beta, x - y),
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn erf_slope(x: f64) -> f64 {
    std::f64::consts::FRAC_2_SQRT_PI * (-x * x).exp()
}

/// Clamps `|d|` to at least [`EPS_DEN`], keeping its sign (zero counts as
/// positive). The flag reports whether clamping happened.
fn clamp_den(d: f64) -> (f64, bool) {
    if d.abs() >= EPS_DEN {
        (d, false)
    } else if d.is_sign_negative() && d != 0.0 {
        (-EPS_DEN, true)
    } else {
        (EPS_DEN, true)
    }
}

/// Descriptor row of an [`OperatorTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorDescriptor {
    pub index: usize,
    pub arity: u8,
    pub param_slots: u8,
    pub name: &'static str,
}

/// Indexed candidate operators. [`OperatorTable::standard`] is the full
/// 22 + 11 table used by every genome; restricted tables only exist to size
/// toy search spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorTable {
    unary: Vec<UnaryOp>,
    binary: Vec<BinaryOp>,
}

impl OperatorTable {
    pub fn standard() -> Self {
        OperatorTable {
            unary: UnaryOp::ALL.to_vec(),
            binary: BinaryOp::ALL.to_vec(),
        }
    }

    pub fn restricted(unary: Vec<UnaryOp>, binary: Vec<BinaryOp>) -> Self {
        OperatorTable { unary, binary }
    }

    pub fn unary(&self) -> impl Iterator<Item = OperatorDescriptor> + '_ {
        self.unary.iter().enumerate().map(|(index, op)| OperatorDescriptor {
            index,
            arity: 1,
            param_slots: op.has_param() as u8,
            name: op.name(),
        })
    }

    pub fn binary(&self) -> impl Iterator<Item = OperatorDescriptor> + '_ {
        self.binary.iter().enumerate().map(|(index, op)| OperatorDescriptor {
            index,
            arity: 2,
            param_slots: op.has_param() as u8,
            name: op.name(),
        })
    }

    pub fn unary_len(&self) -> usize {
        self.unary.len()
    }

    pub fn binary_len(&self) -> usize {
        self.binary.len()
    }
}

impl Default for OperatorTable {
    fn default() -> Self {
        Self::standard()
    }
}
