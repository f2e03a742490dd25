//! Pairwise relation operators between two node embeddings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which pairwise feature of `(h_i, h_j)` is fed to the edge scorer.
///
/// `None` is the plain attention layer with no relation term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelationKind {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "diff")]
    Difference,
    #[serde(rename = "absdiff")]
    AbsDifference,
    #[serde(rename = "prod")]
    ElemProduct,
    #[serde(rename = "absdiff_prod")]
    AbsDiffAndProduct,
}

impl RelationKind {
    pub const ALL: [RelationKind; 5] = [
        RelationKind::None,
        RelationKind::Difference,
        RelationKind::AbsDifference,
        RelationKind::ElemProduct,
        RelationKind::AbsDiffAndProduct,
    ];

    /// Output width multiplier `r`: the relation of two `d`-vectors has `r·d` entries.
    /// Zero for `None`.
    pub fn width_factor(self) -> usize {
        match self {
            RelationKind::None => 0,
            RelationKind::AbsDiffAndProduct => 2,
            _ => 1,
        }
    }

    pub fn is_none(self) -> bool {
        self == RelationKind::None
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::None => "none",
            RelationKind::Difference => "diff",
            RelationKind::AbsDifference => "absdiff",
            RelationKind::ElemProduct => "prod",
            RelationKind::AbsDiffAndProduct => "absdiff_prod",
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RelationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown relation kind {s:?}")))
    }
}

/// Evaluates `relation(h_i, h_j)` on plain slices.
///
/// Calling this with [`RelationKind::None`] is a usage error: the caller
/// should skip the relation term entirely.
pub fn relation(h_i: &[f64], h_j: &[f64], kind: RelationKind) -> Result<Vec<f64>> {
    if h_i.len() != h_j.len() {
        return Err(Error::Shape {
            op: "relation",
            lhs: vec![h_i.len()],
            rhs: vec![h_j.len()],
        });
    }
    let pairs = h_i.iter().zip(h_j);
    Ok(match kind {
        RelationKind::None => {
            return Err(Error::Usage("relation() called with kind none".into()));
        }
        RelationKind::Difference => pairs.map(|(a, b)| a - b).collect(),
        RelationKind::AbsDifference => pairs.map(|(a, b)| (a - b).abs()).collect(),
        RelationKind::ElemProduct => pairs.map(|(a, b)| a * b).collect(),
        RelationKind::AbsDiffAndProduct => {
            let mut out: Vec<f64> = pairs.clone().map(|(a, b)| (a - b).abs()).collect();
            out.extend(pairs.map(|(a, b)| a * b));
            out
        }
    })
}
