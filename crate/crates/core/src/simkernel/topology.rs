// SPDX-License-Identifier: Apache-2.0

//! Consumer/provider role assignment from the 80:20 stub-AS ratio.

use serde::Serialize;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Split {
    pub consumers: u32,
    pub providers: u32,
}

impl Split {
    pub fn total(&self) -> u32 {
        self.consumers + self.providers
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("at least two systems are required, got {0}")]
pub struct TooFewSystems(pub u32);

/// Splits measured on the reference testbed.
const REFERENCE_SPLITS: [(u32, u32, u32); 5] = [(2, 1, 1), (10, 8, 2), (15, 12, 3), (25, 20, 5), (30, 24, 6)];

pub fn generate_topology(n_systems: u32) -> Result<Split, TooFewSystems> {
    if n_systems < 2 {
        return Err(TooFewSystems(n_systems));
    }
    if let Some(&(_, consumers, providers)) = REFERENCE_SPLITS.iter().find(|(n, _, _)| *n == n_systems) {
        return Ok(Split { consumers, providers });
    }
    let providers = ((0.2 * f64::from(n_systems)).round() as u32).max(1);
    Ok(Split { consumers: n_systems - providers, providers })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_splits() {
        assert_eq!(generate_topology(30), Ok(Split { consumers: 24, providers: 6 }));
        assert_eq!(generate_topology(2), Ok(Split { consumers: 1, providers: 1 }));
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(generate_topology(7), Ok(Split { consumers: 6, providers: 1 }));
        assert_eq!(generate_topology(3), Ok(Split { consumers: 2, providers: 1 }));
        assert_eq!(generate_topology(100), Ok(Split { consumers: 80, providers: 20 }));
    }

    #[test]
    fn too_few() {
        assert_eq!(generate_topology(1), Err(TooFewSystems(1)));
        assert_eq!(generate_topology(0), Err(TooFewSystems(0)));
    }

    #[test]
    fn every_split_has_both_roles() {
        for n in 2..200 {
            let s = generate_topology(n).unwrap();
            assert_eq!(s.total(), n);
            assert!(s.consumers >= 1 && s.providers >= 1, "n = {n}");
        }
    }
}
