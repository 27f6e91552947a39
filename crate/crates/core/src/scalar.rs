//! Numeric abstractions shared by the retrieval and statistics code.
//!
//! Embedding vectors are generic over a floating-point element type, and the
//! exact tests are generic over the number type probabilities are computed in,
//! so the same enumeration runs in `f64` for reports and in exact rationals
//! when a result has to be checked to the last digit.

use std::fmt::Debug;

use num_bigint::BigInt;
use serde::de::DeserializeOwned;
use serde::Serialize;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Num, One, ToPrimitive, Zero};

/// Element type of an embedding vector: `f32` or `f64`.
pub trait VectorScalar:
    Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
}

impl VectorScalar for f32 {}
impl VectorScalar for f64 {}

/// Number type used for hypergeometric point probabilities and p-values.
///
/// Implemented for `f32`, `f64` (through log-factorials) and [`BigRational`]
/// (through exact factorials).
pub trait Probability: Num + Clone + PartialOrd + Debug + Send + Sync {
    /// Precomputed factorial table, sized for the grand total of a table.
    type Factorials: Send + Sync;

    fn factorials(max: u64) -> Self::Factorials;

    /// Probability of a contingency table given its margins:
    /// `prod(row!) * prod(col!) / (N! * prod(cell!))`.
    fn table_probability(
        factorials: &Self::Factorials,
        row_sums: &[u64],
        col_sums: &[u64],
        cells: &[u64],
    ) -> Self;

    /// Relative slack used when comparing point probabilities to the
    /// observed one.
    fn relative_tolerance() -> Self;

    fn to_f64(&self) -> f64;

    fn from_f64(value: f64) -> Self;
}

fn ln_factorials(max: u64) -> Vec<f64> {
    let mut table = Vec::with_capacity(max as usize + 1);
    table.push(0.0);
    let mut acc = 0.0f64;
    for k in 1..=max {
        acc += (k as f64).ln();
        table.push(acc);
    }
    table
}

fn ln_table_probability(lnf: &[f64], row_sums: &[u64], col_sums: &[u64], cells: &[u64]) -> f64 {
    let total: u64 = row_sums.iter().sum();
    let numerator: f64 = row_sums
        .iter()
        .chain(col_sums)
        .map(|&n| lnf[n as usize])
        .sum();
    let denominator: f64 = lnf[total as usize] + cells.iter().map(|&n| lnf[n as usize]).sum::<f64>();
    numerator - denominator
}

impl Probability for f64 {
    type Factorials = Vec<f64>;

    fn factorials(max: u64) -> Vec<f64> {
        ln_factorials(max)
    }

    fn table_probability(lnf: &Vec<f64>, row_sums: &[u64], col_sums: &[u64], cells: &[u64]) -> f64 {
        ln_table_probability(lnf, row_sums, col_sums, cells).exp()
    }

    fn relative_tolerance() -> f64 {
        1e-7
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_f64(value: f64) -> f64 {
        value
    }
}

impl Probability for f32 {
    type Factorials = Vec<f64>;

    fn factorials(max: u64) -> Vec<f64> {
        ln_factorials(max)
    }

    fn table_probability(lnf: &Vec<f64>, row_sums: &[u64], col_sums: &[u64], cells: &[u64]) -> f32 {
        ln_table_probability(lnf, row_sums, col_sums, cells).exp() as f32
    }

    fn relative_tolerance() -> f32 {
        1e-6
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }

    fn from_f64(value: f64) -> f32 {
        value as f32
    }
}

impl Probability for BigRational {
    type Factorials = Vec<BigInt>;

    fn factorials(max: u64) -> Vec<BigInt> {
        let mut table = Vec::with_capacity(max as usize + 1);
        let mut acc = BigInt::one();
        table.push(acc.clone());
        for k in 1..=max {
            acc *= BigInt::from(k);
            table.push(acc.clone());
        }
        table
    }

    fn table_probability(f: &Vec<BigInt>, row_sums: &[u64], col_sums: &[u64], cells: &[u64]) -> BigRational {
        let total: u64 = row_sums.iter().sum();
        let numerator = row_sums
            .iter()
            .chain(col_sums)
            .fold(BigInt::one(), |acc, &n| acc * &f[n as usize]);
        let denominator = cells
            .iter()
            .fold(f[total as usize].clone(), |acc, &n| acc * &f[n as usize]);
        BigRational::new(numerator, denominator)
    }

    fn relative_tolerance() -> BigRational {
        BigRational::new(BigInt::one(), BigInt::from(10_000_000u64))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn from_f64(value: f64) -> BigRational {
        BigRational::from_float(value).unwrap_or_else(BigRational::zero)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_and_exact_table_probabilities_agree() {
        // [[3,1],[1,3]]: 16/70
        let rows = [4, 4];
        let cols = [4, 4];
        let cells = [3, 1, 1, 3];
        let exact = BigRational::table_probability(&BigRational::factorials(8), &rows, &cols, &cells);
        assert_eq!(exact, BigRational::new(16.into(), 70.into()));
        let approx = f64::table_probability(&f64::factorials(8), &rows, &cols, &cells);
        assert!((approx - 16.0 / 70.0).abs() < 1e-14);
        let single = f32::table_probability(&f32::factorials(8), &rows, &cols, &cells);
        assert!((f64::from(single) - 16.0 / 70.0).abs() < 1e-6);
    }
}
