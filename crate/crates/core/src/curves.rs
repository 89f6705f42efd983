//! Data behind the two figures: CPF vs CSF pay amounts over liquidity, and
//! the rarity factor ceiling over `p` for a few inflation factors.

use serde::Serialize;
use thiserror::Error;

use crate::amm::{self, AmmError, SlippagePoint};
use crate::fixed::{Fixed, SCALE};
use crate::rarity::{self, RarityError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CurveError {
    #[error("{0} grid is empty")]
    EmptyGrid(&'static str),
    #[error("{name} = {value} is outside {domain}")]
    Domain { name: &'static str, value: Fixed, domain: &'static str },
    #[error(transparent)]
    Amm(#[from] AmmError),
    #[error(transparent)]
    Rarity(#[from] RarityError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CeilingPoint {
    pub p: Fixed,
    #[serde(rename = "I")]
    pub inflation: Fixed,
    pub max_r: Fixed,
}

/// `p = 0.01, 0.02, ..., 0.99`.
pub fn default_p_grid() -> Vec<Fixed> {
    (1..100).map(|i| Fixed::from_raw(i * SCALE / 100)).collect()
}

pub fn default_inflations() -> Vec<Fixed> {
    vec![Fixed::from_raw(SCALE / 2), Fixed::ONE, Fixed::from_int(2)]
}

pub fn default_liquidity_grid() -> Vec<Fixed> {
    [2u64, 5, 10, 20, 50, 100, 200, 500, 1000, 10_000, 100_000].iter().map(|&n| Fixed::from_int(n)).collect()
}

/// CPF and CSF cost of buying `trade_size` from symmetric pools.
pub fn slippage(liquidity: &[Fixed], trade_size: Fixed) -> Result<Vec<SlippagePoint>, CurveError> {
    if liquidity.is_empty() {
        return Err(CurveError::EmptyGrid("liquidity"));
    }
    if let Some(&l) = liquidity.iter().find(|l| **l <= trade_size) {
        return Err(CurveError::Domain { name: "liquidity", value: l, domain: "(trade_size, inf)" });
    }
    Ok(amm::slippage_curve(liquidity, trade_size)?)
}

/// Ceiling on the rarity factor at each `(p, I)`, grouped by `I`.
pub fn rarity_ceiling(p_grid: &[Fixed], inflations: &[Fixed]) -> Result<Vec<CeilingPoint>, CurveError> {
    if p_grid.is_empty() {
        return Err(CurveError::EmptyGrid("p"));
    }
    if inflations.is_empty() {
        return Err(CurveError::EmptyGrid("I"));
    }
    if let Some(&p) = p_grid.iter().find(|p| p.is_zero() || **p >= Fixed::ONE) {
        return Err(CurveError::Domain { name: "p", value: p, domain: "(0, 1)" });
    }
    if let Some(&i) = inflations.iter().find(|i| i.is_zero()) {
        return Err(CurveError::Domain { name: "I", value: i, domain: "(0, inf)" });
    }
    let mut out = Vec::with_capacity(p_grid.len() * inflations.len());
    for &inflation in inflations {
        for &p in p_grid {
            out.push(CeilingPoint { p, inflation, max_r: rarity::max_rarity_factor(p, inflation)? });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fx(s: &str) -> Fixed {
        s.parse().unwrap()
    }

    #[test]
    fn slippage_worked_example() {
        let rows = slippage(&[fx("5")], Fixed::ONE).unwrap();
        assert_eq!(rows[0].cpf_pay, fx("1.25"));
        assert_eq!(rows[0].csf_pay, Fixed::ONE);
        assert_eq!(rows[0].deviation, fx("0.25"));
        assert!(slippage(&[], Fixed::ONE).is_err());
        assert!(slippage(&[Fixed::ONE], Fixed::ONE).is_err());
    }

    #[test]
    fn ceiling_rows() {
        let rows = rarity_ceiling(&[fx("0.5")], &default_inflations()).unwrap();
        let r: Vec<Fixed> = rows.iter().map(|r| r.max_r).collect();
        assert_eq!(r, vec![fx("1.6"), fx("1.333333333333333333"), Fixed::ONE]);
        assert_eq!(default_p_grid().len(), 99);
        assert_eq!(default_p_grid()[9], fx("0.1"));
        assert!(rarity_ceiling(&[Fixed::ONE], &[Fixed::ONE]).is_err());
        assert!(rarity_ceiling(&[fx("0.5")], &[]).is_err());
        assert!(rarity_ceiling(&[fx("0.5")], &[Fixed::ZERO]).is_err());
    }
}
