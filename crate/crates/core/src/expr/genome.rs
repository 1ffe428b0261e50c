use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ops::{BinaryOp, OperatorTable, UnaryOp, BINARY_COUNT, UNARY_COUNT};
use super::ExprError;

/// Template an individual is decoded with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EncodingType {
    /// `B1(U1(x), U2(x))`
    #[serde(rename = "type1")]
    TypeI,
    /// `B2(U4(B1(U1(x), U2(x))), U3(x))`
    #[serde(rename = "type2")]
    TypeII,
}

impl EncodingType {
    pub fn unary_slots(self) -> usize {
        match self {
            EncodingType::TypeI => 2,
            EncodingType::TypeII => 4,
        }
    }

    pub fn binary_slots(self) -> usize {
        match self {
            EncodingType::TypeI => 1,
            EncodingType::TypeII => 2,
        }
    }

    pub fn len(self) -> usize {
        self.unary_slots() + self.binary_slots()
    }

    pub fn tag(self) -> &'static str {
        match self {
            EncodingType::TypeI => "t1",
            EncodingType::TypeII => "t2",
        }
    }

    /// Slot kind at `position`; unary slots always come first.
    pub fn slot(self, position: usize) -> SlotKind {
        if position < self.unary_slots() {
            SlotKind::Unary
        } else {
            SlotKind::Binary
        }
    }
}

impl fmt::Display for EncodingType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncodingType::TypeI => "type1",
            EncodingType::TypeII => "type2",
        })
    }
}

impl FromStr for EncodingType {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "type1" | "t1" | "type-i" | "i" | "1" => Ok(EncodingType::TypeI),
            "type2" | "t2" | "type-ii" | "ii" | "2" => Ok(EncodingType::TypeII),
            _ => Err(ExprError::Parse {
                token: s.to_string(),
                expected: "type1 or type2",
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Unary,
    Binary,
}

impl SlotKind {
    pub fn cardinality(self) -> usize {
        match self {
            SlotKind::Unary => UNARY_COUNT,
            SlotKind::Binary => BINARY_COUNT,
        }
    }
}

/// Fixed-length operator-index string. Construction validates slot ranges,
/// so every `Genome` value decodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Genome {
    encoding: EncodingType,
    genes: Vec<u8>,
}

impl Genome {
    pub fn new(encoding: EncodingType, genes: Vec<u8>) -> Result<Self, ExprError> {
        if genes.len() != encoding.len() {
            return Err(ExprError::GenomeLength {
                encoding,
                expected: encoding.len(),
                actual: genes.len(),
            });
        }
        for (position, &gene) in genes.iter().enumerate() {
            let kind = encoding.slot(position);
            if gene as usize >= kind.cardinality() {
                return Err(ExprError::GeneOutOfRange {
                    position,
                    gene: gene as usize,
                    limit: kind.cardinality(),
                });
            }
        }
        Ok(Genome { encoding, genes })
    }

    /// Infers the template from the gene count (3 or 6).
    pub fn from_genes(genes: &[u8]) -> Result<Self, ExprError> {
        let encoding = match genes.len() {
            3 => EncodingType::TypeI,
            6 => EncodingType::TypeII,
            n => {
                return Err(ExprError::GenomeLength {
                    encoding: EncodingType::TypeI,
                    expected: 3,
                    actual: n,
                })
            }
        };
        Genome::new(encoding, genes.to_vec())
    }

    pub fn encoding(&self) -> EncodingType {
        self.encoding
    }

    pub fn genes(&self) -> &[u8] {
        &self.genes
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn unary(&self, slot: usize) -> UnaryOp {
        debug_assert!(slot < self.encoding.unary_slots());
        UnaryOp::from_index(self.genes[slot] as usize).expect("validated gene")
    }

    pub fn binary(&self, slot: usize) -> BinaryOp {
        let position = self.encoding.unary_slots() + slot;
        BinaryOp::from_index(self.genes[position] as usize).expect("validated gene")
    }

    /// Replaces one gene, validating the slot range.
    pub fn with_gene(&self, position: usize, gene: u8) -> Result<Self, ExprError> {
        let mut genes = self.genes.clone();
        if position >= genes.len() {
            return Err(ExprError::GenomeLength {
                encoding: self.encoding,
                expected: self.encoding.len(),
                actual: position + 1,
            });
        }
        genes[position] = gene;
        Genome::new(self.encoding, genes)
    }

    /// Enumerates every Type-I genome in lexicographic gene order.
    pub fn all_type_i() -> impl Iterator<Item = Genome> {
        (0..UNARY_COUNT as u8).flat_map(|u1| {
            (0..UNARY_COUNT as u8).flat_map(move |u2| {
                (0..BINARY_COUNT as u8).map(move |b| Genome {
                    encoding: EncodingType::TypeI,
                    genes: vec![u1, u2, b],
                })
            })
        })
    }
}

impl fmt::Display for Genome {
    /// `t1:U11-U12-B1`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.encoding.tag())?;
        for (position, gene) in self.genes.iter().enumerate() {
            if position > 0 {
                f.write_str("-")?;
            }
            let prefix = match self.encoding.slot(position) {
                SlotKind::Unary => 'U',
                SlotKind::Binary => 'B',
            };
            write!(f, "{prefix}{gene}")?;
        }
        Ok(())
    }
}

const GRAMMAR: &str = "t1:U<0-21>-U<0-21>-B<0-10> or t2:U<0-21>-U<0-21>-U<0-21>-U<0-21>-B<0-10>-B<0-10>";

impl FromStr for Genome {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_err = |token: &str| ExprError::Parse {
            token: token.to_string(),
            expected: GRAMMAR,
        };
        let (tag, body) = s.split_once(':').ok_or_else(|| parse_err(s))?;
        let encoding = match tag {
            "t1" => EncodingType::TypeI,
            "t2" => EncodingType::TypeII,
            other => return Err(parse_err(other)),
        };
        let tokens: Vec<&str> = body.split('-').collect();
        if tokens.len() != encoding.len() {
            return Err(parse_err(body));
        }
        let mut genes = Vec::with_capacity(tokens.len());
        for (position, token) in tokens.iter().enumerate() {
            let kind = encoding.slot(position);
            let digits = match kind {
                SlotKind::Unary => token.strip_prefix('U'),
                SlotKind::Binary => token.strip_prefix('B'),
            }
            .ok_or_else(|| parse_err(token))?;
            // Reject signs, leading zeros and whitespace so print(parse(s)) == s.
            if digits.is_empty()
                || !digits.bytes().all(|b| b.is_ascii_digit())
                || (digits.len() > 1 && digits.starts_with('0'))
            {
                return Err(parse_err(token));
            }
            let value: usize = digits.parse().map_err(|_| parse_err(token))?;
            if value >= kind.cardinality() {
                return Err(parse_err(token));
            }
            genes.push(value as u8);
        }
        Genome::new(encoding, genes)
    }
}

impl Serialize for Genome {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Genome {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Cardinality of the genome space under the standard operator table.
pub fn search_space_size(encoding: EncodingType) -> u64 {
    search_space_size_with(&OperatorTable::standard(), encoding)
}

pub fn search_space_size_with(table: &OperatorTable, encoding: EncodingType) -> u64 {
    (table.unary_len() as u64).pow(encoding.unary_slots() as u32)
        * (table.binary_len() as u64).pow(encoding.binary_slots() as u32)
}
