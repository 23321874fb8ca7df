use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Mnemonic;

/// Processor configurations, each adding one extension group to the previous.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    V0,
    V1,
    V2,
    V3,
    V4,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::V0, Variant::V1, Variant::V2, Variant::V3, Variant::V4];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn description(self) -> &'static str {
        match self {
            Variant::V0 => "baseline RV32IM processor",
            Variant::V1 => "mac extension enabled on v0",
            Variant::V2 => "add2i extension enabled on v1",
            Variant::V3 => "fusedmac extension enabled on v2",
            Variant::V4 => "zero-overhead hardware loops (zol) enabled on v3",
        }
    }

    pub fn supports(self, m: Mnemonic) -> bool {
        m.min_variant() <= self
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.index())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "v0" => Ok(Variant::V0),
            "v1" => Ok(Variant::V1),
            "v2" => Ok(Variant::V2),
            "v3" => Ok(Variant::V3),
            "v4" => Ok(Variant::V4),
            _ => Err(format!("unknown variant `{s}` (expected v0..v4)")),
        }
    }
}

/// Custom instructions enabled on a variant.
pub fn extensions_of(variant: Variant) -> BTreeSet<Mnemonic> {
    Mnemonic::ALL.iter().copied().filter(|m| m.is_custom() && variant.supports(*m)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder() {
        assert!(extensions_of(Variant::V0).is_empty());
        assert_eq!(extensions_of(Variant::V2), [Mnemonic::Mac, Mnemonic::Add2i].into_iter().collect());
        let v4: BTreeSet<_> = [
            Mnemonic::Mac,
            Mnemonic::Add2i,
            Mnemonic::Fusedmac,
            Mnemonic::Dlp,
            Mnemonic::Dlpi,
            Mnemonic::Zlp,
            Mnemonic::SetZc,
            Mnemonic::SetZs,
            Mnemonic::SetZe,
        ]
        .into_iter()
        .collect();
        assert_eq!(extensions_of(Variant::V4), v4);
    }

    #[test]
    fn strictly_monotone() {
        for pair in Variant::ALL.windows(2) {
            let lo = extensions_of(pair[0]);
            let hi = extensions_of(pair[1]);
            assert!(lo.is_subset(&hi) && lo.len() < hi.len());
        }
    }

    #[test]
    fn parse_and_display() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("v5".parse::<Variant>().is_err());
    }
}
