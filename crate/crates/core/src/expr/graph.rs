use std::fmt;

use super::genome::{EncodingType, Genome};
use super::ops::{BinaryOp, UnaryOp};
use super::ExprError;
use crate::tensor::Tensor;

/// Operator tree over a single input `x`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    X,
    Unary(UnaryOp, Box<Term>),
    Binary(BinaryOp, Box<Term>, Box<Term>),
}

impl Term {
    pub fn unary(op: UnaryOp, arg: Term) -> Term {
        Term::Unary(op, Box::new(arg))
    }

    pub fn binary(op: BinaryOp, lhs: Term, rhs: Term) -> Term {
        Term::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Tree a genome denotes under its template.
    ///
    /// Type-I: `B1(U1(x), U2(x))`. Type-II: `B2(U4(B1(U1(x), U2(x))), U3(x))`,
    /// with genes laid out `[U1, U2, U3, U4, B1, B2]`.
    pub fn from_genome(genome: &Genome) -> Term {
        let leaf = |slot| Term::unary(genome.unary(slot), Term::X);
        let first = Term::binary(genome.binary(0), leaf(0), leaf(1));
        match genome.encoding() {
            EncodingType::TypeI => first,
            EncodingType::TypeII => Term::binary(
                genome.binary(1),
                Term::unary(genome.unary(3), first),
                leaf(2),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Input,
    Unary {
        op: UnaryOp,
        arg: usize,
        param: Option<usize>,
    },
    Binary {
        op: BinaryOp,
        lhs: usize,
        rhs: usize,
        param: Option<usize>,
    },
}

/// Largest node count any template produces (Type-II has 7).
const MAX_NODES: usize = 8;

/// Operator owning a learnable per-channel parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamOwner {
    Unary(UnaryOp),
    Binary(BinaryOp),
}

/// Decoded candidate activation: a topologically ordered node list plus one
/// per-channel parameter vector for every `α`/`β`-bearing node.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationExpr {
    genome: Option<Genome>,
    nodes: Vec<Node>,
    owners: Vec<ParamOwner>,
    params: Vec<Vec<f32>>,
    channels: usize,
}

impl ActivationExpr {
    pub fn decode(genome: &Genome, channels: usize) -> Result<Self, ExprError> {
        let mut expr = Self::from_term(&Term::from_genome(genome), channels)?;
        expr.genome = Some(genome.clone());
        Ok(expr)
    }

    /// Validates raw genes (length inferred from the count) and decodes.
    pub fn decode_genes(genes: &[u8], channels: usize) -> Result<Self, ExprError> {
        Self::decode(&Genome::from_genes(genes)?, channels)
    }

    pub fn from_term(term: &Term, channels: usize) -> Result<Self, ExprError> {
        if channels == 0 {
            return Err(ExprError::ZeroChannels);
        }
        let mut expr = ActivationExpr {
            genome: None,
            nodes: vec![Node::Input],
            owners: Vec::new(),
            params: Vec::new(),
            channels,
        };
        expr.push_term(term)?;
        Ok(expr)
    }

    fn push_term(&mut self, term: &Term) -> Result<usize, ExprError> {
        let node = match term {
            Term::X => return Ok(0),
            Term::Unary(op, arg) => {
                let arg = self.push_term(arg)?;
                let param = op
                    .has_param()
                    .then(|| self.new_param(ParamOwner::Unary(*op), op.param_init()));
                Node::Unary { op: *op, arg, param }
            }
            Term::Binary(op, lhs, rhs) => {
                let lhs = self.push_term(lhs)?;
                let rhs = self.push_term(rhs)?;
                let param = op
                    .has_param()
                    .then(|| self.new_param(ParamOwner::Binary(*op), op.param_init()));
                Node::Binary {
                    op: *op,
                    lhs,
                    rhs,
                    param,
                }
            }
        };
        if self.nodes.len() >= MAX_NODES {
            return Err(ExprError::TooDeep { limit: MAX_NODES });
        }
        self.nodes.push(node);
        Ok(self.nodes.len() - 1)
    }

    fn new_param(&mut self, owner: ParamOwner, init: f64) -> usize {
        self.owners.push(owner);
        self.params.push(vec![init as f32; self.channels]);
        self.params.len() - 1
    }

    pub fn genome(&self) -> Option<&Genome> {
        self.genome.as_ref()
    }

    pub fn param_owners(&self) -> &[ParamOwner] {
        &self.owners
    }

    /// Sets parameter `slot` to `value` on every channel.
    pub fn fill_param(&mut self, slot: usize, value: f32) {
        self.params[slot].fill(value);
    }

    /// Copy with parameters re-initialized for a new channel count.
    pub fn with_channels(&self, channels: usize) -> Result<Self, ExprError> {
        if channels == 0 {
            return Err(ExprError::ZeroChannels);
        }
        let mut out = self.clone();
        out.channels = channels;
        for (slot, owner) in self.owners.iter().enumerate() {
            let init = match owner {
                ParamOwner::Unary(op) => op.param_init(),
                ParamOwner::Binary(op) => op.param_init(),
            };
            out.params[slot] = vec![init as f32; channels];
        }
        Ok(out)
    }

    fn eval_nodes(&self, x: f64, channel: usize, vals: &mut [f64; MAX_NODES]) {
        for (k, node) in self.nodes.iter().enumerate() {
            vals[k] = match *node {
                Node::Input => x,
                Node::Unary { op, arg, param } => op.apply(vals[arg], self.param_at(param, channel)),
                Node::Binary { op, lhs, rhs, param } => {
                    op.apply(vals[lhs], vals[rhs], self.param_at(param, channel))
                }
            };
        }
    }

    fn param_at(&self, slot: Option<usize>, channel: usize) -> f64 {
        slot.map_or(0.0, |s| self.params[s][channel] as f64)
    }
}

impl fmt::Display for ActivationExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.genome {
            Some(g) => write!(f, "{g}"),
            None => write!(f, "expr[{} nodes]", self.nodes.len()),
        }
    }
}

/// Elementwise activation whose learnable parameters are per channel.
///
/// Implementors provide the scalar value and gradient; tensor-level
/// [`forward`] and [`backward`] are shared.
pub trait ChannelActivation {
    fn channels(&self) -> usize;

    /// Value at `x` using channel `channel`'s parameters.
    fn value(&self, x: f64, channel: usize) -> f64;

    /// Returns `gy · ∂f/∂x` and adds `gy · ∂f/∂p` into `param_grads[slot]`
    /// for every parameter slot.
    fn grad(&self, x: f64, channel: usize, gy: f64, param_grads: &mut [f64]) -> f64;

    /// Per-slot, per-channel parameter values.
    fn params(&self) -> &[Vec<f32>];

    fn params_mut(&mut self) -> &mut [Vec<f32>];

    fn param_slots(&self) -> usize {
        self.params().len()
    }
}

impl ChannelActivation for ActivationExpr {
    fn channels(&self) -> usize {
        self.channels
    }

    fn value(&self, x: f64, channel: usize) -> f64 {
        let mut vals = [0.0; MAX_NODES];
        self.eval_nodes(x, channel, &mut vals);
        vals[self.nodes.len() - 1]
    }

    fn grad(&self, x: f64, channel: usize, gy: f64, param_grads: &mut [f64]) -> f64 {
        let mut vals = [0.0; MAX_NODES];
        self.eval_nodes(x, channel, &mut vals);
        let mut adj = [0.0; MAX_NODES];
        let last = self.nodes.len() - 1;
        adj[last] = gy;
        for k in (1..=last).rev() {
            let a = adj[k];
            if a == 0.0 {
                continue;
            }
            match self.nodes[k] {
                Node::Input => {}
                Node::Unary { op, arg, param } => {
                    let (dx, dp) = op.grad(vals[arg], self.param_at(param, channel));
                    adj[arg] += a * dx;
                    if let Some(s) = param {
                        param_grads[s] += a * dp;
                    }
                }
                Node::Binary { op, lhs, rhs, param } => {
                    let (dl, dr, dp) = op.grad(vals[lhs], vals[rhs], self.param_at(param, channel));
                    adj[lhs] += a * dl;
                    adj[rhs] += a * dr;
                    if let Some(s) = param {
                        param_grads[s] += a * dp;
                    }
                }
            }
        }
        adj[0]
    }

    fn params(&self) -> &[Vec<f32>] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Vec<f32>] {
        &mut self.params
    }
}

/// What [`backward`] needs from a [`forward`] call. Node intermediates are
/// recomputed from the stored input in `f64`, so only the input is kept.
#[derive(Debug, Clone)]
pub struct Tape {
    input: Tensor,
    channels: usize,
    param_slots: usize,
}

impl Tape {
    pub fn input(&self) -> &Tensor {
        &self.input
    }
}

/// Applies `af` elementwise, returning the output and the tape.
pub fn forward<A: ChannelActivation + ?Sized>(af: &A, x: &Tensor) -> Result<(Tensor, Tape), ExprError> {
    let y = apply(af, x)?;
    Ok((
        y,
        Tape {
            input: x.clone(),
            channels: af.channels(),
            param_slots: af.param_slots(),
        },
    ))
}

/// Forward pass without recording a tape.
pub fn apply<A: ChannelActivation + ?Sized>(af: &A, x: &Tensor) -> Result<Tensor, ExprError> {
    check_channels(af, x)?;
    let inner = x.inner_len();
    let channels = x.channels();
    let mut y = x.clone();
    for (block, chunk) in y.data_mut().chunks_mut(inner).enumerate() {
        let c = block % channels;
        for v in chunk.iter_mut() {
            *v = af.value(*v as f64, c) as f32;
        }
    }
    Ok(y)
}

/// Gradient of the loss with respect to the input and every parameter
/// (reduced over all non-channel axes).
pub fn backward<A: ChannelActivation + ?Sized>(
    af: &A,
    tape: &Tape,
    grad_y: &Tensor,
) -> Result<(Tensor, Vec<Vec<f32>>), ExprError> {
    if tape.channels != af.channels() || tape.param_slots != af.param_slots() {
        return Err(ExprError::TapeMismatch);
    }
    tape.input.same_shape(grad_y)?;
    let x = &tape.input;
    let inner = x.inner_len();
    let channels = x.channels();
    let slots = af.param_slots();
    let mut acc = vec![vec![0.0f64; channels]; slots];
    let mut scratch = vec![0.0f64; slots];
    let mut grad_x = grad_y.clone();
    for (block, (gx, xs)) in grad_x
        .data_mut()
        .chunks_mut(inner)
        .zip(x.data().chunks(inner))
        .enumerate()
    {
        let c = block % channels;
        scratch.iter_mut().for_each(|v| *v = 0.0);
        for (g, &xv) in gx.iter_mut().zip(xs) {
            *g = af.grad(xv as f64, c, *g as f64, &mut scratch) as f32;
        }
        for (slot, s) in scratch.iter().enumerate() {
            acc[slot][c] += s;
        }
    }
    let grads = acc
        .into_iter()
        .map(|per_channel| per_channel.into_iter().map(|v| v as f32).collect())
        .collect();
    Ok((grad_x, grads))
}

fn check_channels<A: ChannelActivation + ?Sized>(af: &A, x: &Tensor) -> Result<(), ExprError> {
    if x.channels() != af.channels() {
        return Err(ExprError::ChannelMismatch {
            expected: af.channels(),
            actual: x.channels(),
        });
    }
    Ok(())
}

/// Applies unary operator `op_index` elementwise; `params` supplies α per
/// channel and must be present exactly for indices 19–21.
pub fn eval_unary(op_index: usize, x: &Tensor, params: Option<&[f32]>) -> Result<Tensor, ExprError> {
    let op = UnaryOp::from_index(op_index).ok_or(ExprError::GeneOutOfRange {
        position: 0,
        gene: op_index,
        limit: super::ops::UNARY_COUNT,
    })?;
    let alpha = param_vector(op.has_param(), params, x.channels())?;
    let mut y = x.clone();
    let inner = x.inner_len();
    let channels = x.channels();
    for (block, chunk) in y.data_mut().chunks_mut(inner).enumerate() {
        let a = alpha.map_or(0.0, |p| p[block % channels] as f64);
        for v in chunk.iter_mut() {
            *v = op.apply(*v as f64, a) as f32;
        }
    }
    Ok(y)
}

/// Applies binary operator `op_index` elementwise; `params` supplies β per
/// channel and must be present exactly for index 10.
pub fn eval_binary(
    op_index: usize,
    x: &Tensor,
    y: &Tensor,
    params: Option<&[f32]>,
) -> Result<Tensor, ExprError> {
    let op = BinaryOp::from_index(op_index).ok_or(ExprError::GeneOutOfRange {
        position: 0,
        gene: op_index,
        limit: super::ops::BINARY_COUNT,
    })?;
    x.same_shape(y)?;
    let beta = param_vector(op.has_param(), params, x.channels())?;
    let mut out = x.clone();
    let inner = x.inner_len();
    let channels = x.channels();
    for (block, (o, ys)) in out
        .data_mut()
        .chunks_mut(inner)
        .zip(y.data().chunks(inner))
        .enumerate()
    {
        let b = beta.map_or(0.0, |p| p[block % channels] as f64);
        for (v, &yv) in o.iter_mut().zip(ys) {
            *v = op.apply(*v as f64, yv as f64, b) as f32;
        }
    }
    Ok(out)
}

fn param_vector(
    wants: bool,
    params: Option<&[f32]>,
    channels: usize,
) -> Result<Option<&[f32]>, ExprError> {
    match (wants, params) {
        (true, Some(p)) if p.len() == channels => Ok(Some(p)),
        (true, Some(p)) => Err(ExprError::ChannelMismatch {
            expected: channels,
            actual: p.len(),
        }),
        (true, None) => Err(ExprError::ParamPresence { required: true }),
        (false, Some(_)) => Err(ExprError::ParamPresence { required: false }),
        (false, None) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f32) -> Tensor {
        Tensor::from_vec(&[1], vec![x]).unwrap()
    }

    #[test]
    fn decode_af1() {
        let af = ActivationExpr::decode_genes(&[11, 12, 1], 1).unwrap();
        for x in [-2.0, -0.3, 0.0, 0.7, 3.1] {
            assert_eq!(af.value(x, 0), x.sin() - x.cos());
        }
        assert_eq!(af.value(0.0, 0), -1.0);
    }

    #[test]
    fn zero_operand_is_identity() {
        let af = ActivationExpr::decode_genes(&[0, 3, 0], 1).unwrap();
        for x in [-5.0, 0.0, 1.25] {
            assert_eq!(af.value(x, 0), x);
        }
    }

    #[test]
    fn decode_type_ii_lerp() {
        let af = ActivationExpr::decode_genes(&[12, 14, 3, 0, 10, 0], 1).unwrap();
        assert_eq!(af.param_owners(), &[ParamOwner::Binary(BinaryOp::Lerp)]);
        for x in [-3.0f64, -0.5, 0.0, 2.0] {
            let want = 0.5 * x.cos() + 0.5 * x.atan() + 0.0;
            assert!((af.value(x, 0) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn decode_errors() {
        assert!(matches!(
            ActivationExpr::decode_genes(&[0, 0], 1),
            Err(ExprError::GenomeLength { .. })
        ));
        assert!(matches!(
            ActivationExpr::decode_genes(&[0, 0, 12], 1),
            Err(ExprError::GeneOutOfRange { .. })
        ));
        assert!(matches!(
            ActivationExpr::decode_genes(&[0, 0, 0], 0),
            Err(ExprError::ZeroChannels)
        ));
    }

    #[test]
    fn forward_examples() {
        let af15 = ActivationExpr::decode_genes(&[2, 3, 0, 12, 0, 0], 1).unwrap();
        assert_eq!(af15.value(0.0, 0), 1.0);
        let af13 = ActivationExpr::decode_genes(&[14, 3, 0, 12, 0, 0], 1).unwrap();
        for x in [-2.0f64, 0.0, 0.5] {
            let oracle = x + 1.0 / (1.0 + x * x).sqrt();
            assert!((af13.value(x, 0) - oracle).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_af1_at_zero() {
        let af = ActivationExpr::decode_genes(&[11, 12, 1], 1).unwrap();
        let (y, tape) = forward(&af, &scalar(0.0)).unwrap();
        assert_eq!(y.data(), &[-1.0]);
        let (gx, gp) = backward(&af, &tape, &scalar(1.0)).unwrap();
        assert_eq!(gx.data(), &[1.0]);
        assert!(gp.is_empty());
    }

    #[test]
    fn backward_reduces_params_per_channel() {
        // lerp(x, 0) = β·x; ∂/∂β = x summed over each channel's elements.
        let af = ActivationExpr::decode_genes(&[0, 3, 10], 2).unwrap();
        let x = Tensor::from_vec(&[2, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let (_, tape) = forward(&af, &x).unwrap();
        let (gx, gp) = backward(&af, &tape, &Tensor::full(&[2, 2, 2], 1.0)).unwrap();
        assert!(gx.data().iter().all(|&g| g == 0.5));
        assert_eq!(gp, vec![vec![1.0 + 2.0 + 5.0 + 6.0, 3.0 + 4.0 + 7.0 + 8.0]]);
    }

    #[test]
    fn mismatches_are_errors() {
        let af = ActivationExpr::decode_genes(&[11, 12, 1], 3).unwrap();
        let x = Tensor::zeros(&[2, 2]);
        assert!(matches!(forward(&af, &x), Err(ExprError::ChannelMismatch { .. })));
        let af2 = ActivationExpr::decode_genes(&[11, 12, 1], 2).unwrap();
        let (_, tape) = forward(&af2, &x).unwrap();
        assert!(matches!(backward(&af, &tape, &x), Err(ExprError::TapeMismatch)));
        assert!(backward(&af2, &tape, &Tensor::zeros(&[2, 3])).is_err());
    }

    #[test]
    fn tensor_level_ops() {
        let x = Tensor::from_vec(&[1, 2], vec![0.0, -4.0]).unwrap();
        let y = eval_unary(6, &x, None).unwrap();
        assert_eq!(y.data(), &[0.0, -2.0]);
        assert!(eval_unary(19, &x, None).is_err());
        assert!(eval_unary(11, &x, Some(&[0.0, 0.0])).is_err());
        let a = eval_unary(20, &x, Some(&[2.0, 3.0])).unwrap();
        assert_eq!(a.data(), &[0.0, -12.0]);
        let two = Tensor::from_vec(&[1, 1], vec![2.0]).unwrap();
        let four = Tensor::from_vec(&[1, 1], vec![4.0]).unwrap();
        let l = eval_binary(10, &two, &four, Some(&[0.5])).unwrap();
        assert_eq!(l.data(), &[3.0]);
        assert!(eval_binary(0, &two, &x, None).is_err());
    }
}
