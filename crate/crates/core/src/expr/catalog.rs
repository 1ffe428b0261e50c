//! Named activation functions: the fifteen discovered forms as genomes and
//! the two hand-crafted parametric baselines.

use std::fmt;
use std::str::FromStr;

use super::genome::Genome;
use super::graph::{ActivationExpr, ChannelActivation};
use super::ExprError;

/// Genes for `AF1`..`AF15`, in catalog order.
pub const CATALOG_GENES: [(&str, &[u8]); 15] = [
    ("AF1", &[11, 12, 1]),
    ("AF2", &[11, 12, 0]),
    ("AF3", &[17, 11, 0]),
    ("AF4", &[12, 0, 10]),
    ("AF5", &[18, 11, 0]),
    ("AF6", &[15, 17, 10]),
    ("AF7", &[10, 11, 1]),
    ("AF8", &[12, 14, 0]),
    ("AF9", &[12, 14, 10]),
    ("AF10", &[12, 14, 1]),
    // atan(x) gated by sigmoid(0) = 1/2, then cosine, plus x.
    ("AF11", &[14, 3, 0, 12, 7, 0]),
    ("AF12", &[21, 3, 0, 12, 0, 10]),
    ("AF13", &[14, 3, 0, 12, 0, 0]),
    ("AF14", &[15, 3, 0, 12, 0, 1]),
    ("AF15", &[2, 3, 0, 12, 0, 0]),
];

/// Shifted sign: binarizes at `x ≥ α`. As a complementary function it is
/// the shift `x − α`, so `sign(RSign(x)) = sign(x − α)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RSign {
    params: Vec<Vec<f32>>,
}

impl RSign {
    pub fn new(channels: usize) -> Self {
        RSign {
            params: vec![vec![0.0; channels]],
        }
    }

    pub fn alpha(&self) -> &[f32] {
        &self.params[0]
    }
}

impl ChannelActivation for RSign {
    fn channels(&self) -> usize {
        self.params[0].len()
    }

    fn value(&self, x: f64, channel: usize) -> f64 {
        x - self.params[0][channel] as f64
    }

    fn grad(&self, _x: f64, _channel: usize, gy: f64, param_grads: &mut [f64]) -> f64 {
        param_grads[0] -= gy;
        gy
    }

    fn params(&self) -> &[Vec<f32>] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Vec<f32>] {
        &mut self.params
    }
}

/// Parametric ReLU with learnable shifts `γ`, `ζ` and negative slope `β`:
/// `x − γ + ζ` for `x ≥ γ`, `β(x − γ) + ζ` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct RPReLU {
    // [γ, ζ, β]
    params: Vec<Vec<f32>>,
}

impl RPReLU {
    pub const GAMMA: usize = 0;
    pub const ZETA: usize = 1;
    pub const BETA: usize = 2;

    pub fn new(channels: usize) -> Self {
        RPReLU {
            params: vec![vec![0.0; channels], vec![0.0; channels], vec![0.25; channels]],
        }
    }

    fn coeffs(&self, channel: usize) -> (f64, f64, f64) {
        (
            self.params[Self::GAMMA][channel] as f64,
            self.params[Self::ZETA][channel] as f64,
            self.params[Self::BETA][channel] as f64,
        )
    }
}

impl ChannelActivation for RPReLU {
    fn channels(&self) -> usize {
        self.params[0].len()
    }

    fn value(&self, x: f64, channel: usize) -> f64 {
        let (gamma, zeta, beta) = self.coeffs(channel);
        if x >= gamma {
            x - gamma + zeta
        } else {
            beta * (x - gamma) + zeta
        }
    }

    fn grad(&self, x: f64, channel: usize, gy: f64, param_grads: &mut [f64]) -> f64 {
        let (gamma, _, beta) = self.coeffs(channel);
        param_grads[Self::ZETA] += gy;
        if x >= gamma {
            param_grads[Self::GAMMA] -= gy;
            gy
        } else {
            param_grads[Self::GAMMA] -= gy * beta;
            param_grads[Self::BETA] += gy * (x - gamma);
            gy * beta
        }
    }

    fn params(&self) -> &[Vec<f32>] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Vec<f32>] {
        &mut self.params
    }
}

/// Any complementary function a binary block can carry.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivationFn {
    Expr(ActivationExpr),
    RSign(RSign),
    RPReLU(RPReLU),
}

impl ActivationFn {
    /// Fresh copy with parameters re-initialized for `channels`.
    pub fn with_channels(&self, channels: usize) -> Result<Self, ExprError> {
        if channels == 0 {
            return Err(ExprError::ZeroChannels);
        }
        Ok(match self {
            ActivationFn::Expr(e) => ActivationFn::Expr(e.with_channels(channels)?),
            ActivationFn::RSign(_) => ActivationFn::RSign(RSign::new(channels)),
            ActivationFn::RPReLU(_) => ActivationFn::RPReLU(RPReLU::new(channels)),
        })
    }

    pub fn genome(&self) -> Option<&Genome> {
        match self {
            ActivationFn::Expr(e) => e.genome(),
            _ => None,
        }
    }

    fn inner(&self) -> &dyn ChannelActivation {
        match self {
            ActivationFn::Expr(e) => e,
            ActivationFn::RSign(r) => r,
            ActivationFn::RPReLU(r) => r,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn ChannelActivation {
        match self {
            ActivationFn::Expr(e) => e,
            ActivationFn::RSign(r) => r,
            ActivationFn::RPReLU(r) => r,
        }
    }
}

impl ChannelActivation for ActivationFn {
    fn channels(&self) -> usize {
        self.inner().channels()
    }

    fn value(&self, x: f64, channel: usize) -> f64 {
        self.inner().value(x, channel)
    }

    fn grad(&self, x: f64, channel: usize, gy: f64, param_grads: &mut [f64]) -> f64 {
        self.inner().grad(x, channel, gy, param_grads)
    }

    fn params(&self) -> &[Vec<f32>] {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut [Vec<f32>] {
        self.inner_mut().params_mut()
    }
}

impl fmt::Display for ActivationFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationFn::Expr(e) => write!(f, "{e}"),
            ActivationFn::RSign(_) => f.write_str("RSign"),
            ActivationFn::RPReLU(_) => f.write_str("RPReLU"),
        }
    }
}

/// Catalog entry names accepted by [`catalog_af`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatalogName {
    Af(usize),
    RSign,
    RPReLU,
}

impl FromStr for CatalogName {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.to_ascii_uppercase();
        match upper.as_str() {
            "RSIGN" => return Ok(CatalogName::RSign),
            "RPRELU" => return Ok(CatalogName::RPReLU),
            _ => {}
        }
        upper
            .strip_prefix("AF")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|n| (1..=15).contains(n) && !upper[2..].starts_with('0'))
            .map(CatalogName::Af)
            .ok_or_else(|| ExprError::UnknownCatalogName(s.to_string()))
    }
}

/// Genome of a catalog AF (`AF1`..`AF15`).
pub fn catalog_genome(n: usize) -> Option<Genome> {
    CATALOG_GENES
        .get(n.checked_sub(1)?)
        .map(|(_, genes)| Genome::from_genes(genes).expect("catalog genes are valid"))
}

/// Looks up a named function and instantiates it for `channels`.
pub fn catalog_af(name: &str, channels: usize) -> Result<ActivationFn, ExprError> {
    if channels == 0 {
        return Err(ExprError::ZeroChannels);
    }
    Ok(match name.parse::<CatalogName>()? {
        CatalogName::Af(n) => {
            let genome = catalog_genome(n).ok_or_else(|| ExprError::UnknownCatalogName(name.into()))?;
            ActivationFn::Expr(ActivationExpr::decode(&genome, channels)?)
        }
        CatalogName::RSign => ActivationFn::RSign(RSign::new(channels)),
        CatalogName::RPReLU => ActivationFn::RPReLU(RPReLU::new(channels)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::graph::{backward, forward};
    use crate::tensor::Tensor;

    #[test]
    fn names() {
        assert_eq!("AF4".parse::<CatalogName>().unwrap(), CatalogName::Af(4));
        assert_eq!("af15".parse::<CatalogName>().unwrap(), CatalogName::Af(15));
        assert_eq!("rsign".parse::<CatalogName>().unwrap(), CatalogName::RSign);
        for bad in ["AF0", "AF16", "AF01", "AF", "relu", ""] {
            assert!(bad.parse::<CatalogName>().is_err(), "{bad}");
        }
        assert!(matches!(
            catalog_af("AF99", 1),
            Err(ExprError::UnknownCatalogName(_))
        ));
    }

    #[test]
    fn af4_and_af12_forms() {
        let af4 = catalog_af("AF4", 1).unwrap();
        let af12 = catalog_af("AF12", 1).unwrap();
        for x in [-3.0f64, 0.0, 1.7] {
            let want = 0.5 * x.cos() + 0.5 * x;
            assert!((af4.value(x, 0) - want).abs() < 1e-15);
            // α = 0 at init, so AF12 matches AF4.
            assert!((af12.value(x, 0) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn rsign_zero_alpha_is_plain_shift_free() {
        let r = RSign::new(1);
        for x in [-1.0, 0.0, 2.0] {
            assert_eq!(r.value(x, 0), x);
        }
    }

    #[test]
    fn rprelu_gradients() {
        let mut r = RPReLU::new(1);
        r.params_mut()[RPReLU::GAMMA][0] = 0.5;
        r.params_mut()[RPReLU::ZETA][0] = 0.1;
        let x = Tensor::from_vec(&[1, 1, 2], vec![1.0, -1.0]).unwrap();
        let (y, tape) = forward(&r, &x).unwrap();
        assert!((y.data()[0] - 0.6).abs() < 1e-6);
        assert!((y.data()[1] - (0.25 * -1.5 + 0.1)).abs() < 1e-6);
        let (gx, gp) = backward(&r, &tape, &Tensor::full(&[1, 1, 2], 1.0)).unwrap();
        assert_eq!(gx.data(), &[1.0, 0.25]);
        assert_eq!(gp[RPReLU::GAMMA], vec![-1.25]);
        assert_eq!(gp[RPReLU::ZETA], vec![2.0]);
        assert_eq!(gp[RPReLU::BETA], vec![-1.5]);
    }

    #[test]
    fn with_channels_resets() {
        let af = catalog_af("AF12", 1).unwrap();
        let wide = af.with_channels(4).unwrap();
        assert_eq!(wide.channels(), 4);
        assert_eq!(wide.params()[0], vec![0.0; 4]);
        assert_eq!(wide.params()[1], vec![0.5; 4]);
    }
}
