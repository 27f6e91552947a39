use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Probability;

pub const DEFAULT_MAX_TABLES: u64 = 10_000_000;
pub const DEFAULT_MC_DRAWS: u64 = 100_000;
pub const DEFAULT_MC_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FisherError {
    #[error("table must be at least 2x2 (got {rows}x{cols})")]
    TooSmall { rows: usize, cols: usize },
    #[error("row {row} has {found} cells, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("cannot parse table: {0}")]
    Parse(String),
    #[error("{0} label(s) given for {1} row(s) or column(s)")]
    Labels(usize, usize),
}

/// Labelled r x c table of non-negative counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub cells: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn new(row_labels: Vec<String>, col_labels: Vec<String>, cells: Vec<Vec<u64>>) -> Result<Self, FisherError> {
        check_shape(&cells)?;
        if row_labels.len() != cells.len() {
            return Err(FisherError::Labels(row_labels.len(), cells.len()));
        }
        if col_labels.len() != cells[0].len() {
            return Err(FisherError::Labels(col_labels.len(), cells[0].len()));
        }
        Ok(ContingencyTable { row_labels, col_labels, cells })
    }

    /// Unlabelled table with rows named r1.. and columns c1..
    pub fn unlabelled(cells: Vec<Vec<u64>>) -> Result<Self, FisherError> {
        check_shape(&cells)?;
        let rows = (1..=cells.len()).map(|i| format!("r{i}")).collect();
        let cols = (1..=cells[0].len()).map(|j| format!("c{j}")).collect();
        Self::new(rows, cols, cells)
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.cells.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.cells[0].len()).map(|j| self.cells.iter().map(|r| r[j]).sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }
}

/// Parses `"a,b;c,d"`: rows separated by `;`, cells by `,`.
impl FromStr for ContingencyTable {
    type Err = FisherError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let cells = s
            .split(';')
            .filter(|r| !r.trim().is_empty())
            .map(|row| {
                row.split(',')
                    .map(|c| c.trim().parse::<u64>().map_err(|e| FisherError::Parse(format!("{c:?}: {e}"))))
                    .collect::<Result<Vec<u64>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::unlabelled(cells)
    }
}

impl fmt::Display for ContingencyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> =
            self.cells.iter().map(|r| r.iter().map(u64::to_string).collect::<Vec<_>>().join(",")).collect();
        f.write_str(&rows.join(";"))
    }
}

fn check_shape(cells: &[Vec<u64>]) -> Result<(), FisherError> {
    let cols = cells.first().map_or(0, Vec::len);
    if cells.len() < 2 || cols < 2 {
        return Err(FisherError::TooSmall { rows: cells.len(), cols });
    }
    for (row, r) in cells.iter().enumerate() {
        if r.len() != cols {
            return Err(FisherError::Ragged { row, expected: cols, found: r.len() });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FisherMethod {
    /// Every table with the observed margins was enumerated.
    Exact { tables: u64 },
    MonteCarlo { draws: u64, seed: u64, std_error: f64 },
    /// A margin left fewer than two non-empty rows or columns.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherResult<P> {
    pub p_value: P,
    pub method: FisherMethod,
    /// Sum of all enumerated point probabilities; 1 up to rounding.
    pub total_mass: Option<P>,
}

impl<P> FisherResult<P> {
    pub fn is_degenerate(&self) -> bool {
        self.method == FisherMethod::Degenerate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FisherOptions {
    pub max_tables: u64,
    pub mc_draws: u64,
    pub seed: u64,
}

impl Default for FisherOptions {
    fn default() -> Self {
        FisherOptions { max_tables: DEFAULT_MAX_TABLES, mc_draws: DEFAULT_MC_DRAWS, seed: DEFAULT_MC_SEED }
    }
}

fn degenerate<P: Probability>() -> FisherResult<P> {
    FisherResult { p_value: P::one(), method: FisherMethod::Degenerate, total_mass: None }
}

fn at_most<P: Probability>(p: &P, observed: &P, slack: &P) -> bool {
    *p <= observed.clone() * slack.clone()
}

/// Two-sided Fisher exact test for a 2x2 table by hypergeometric
/// enumeration. Tables whose point probability is at most the observed one
/// (with a small relative slack) contribute to the p-value.
pub fn fisher_exact_2x2<P: Probability>(table: [[u64; 2]; 2]) -> FisherResult<P> {
    let [[a, b], [c, d]] = table;
    let (r1, r2, c1, c2) = (a + b, c + d, a + c, b + d);
    if r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0 {
        return degenerate();
    }
    let n = r1 + r2;
    let f = P::factorials(n);
    let rows = [r1, r2];
    let cols = [c1, c2];
    let prob = |x: u64| P::table_probability(&f, &rows, &cols, &[x, r1 - x, c1 - x, r2 + x - c1]);
    let observed = prob(a);
    let slack = P::one() + P::relative_tolerance();
    let lo = r1.saturating_sub(c2);
    let hi = r1.min(c1);
    let mut p = P::zero();
    let mut mass = P::zero();
    for x in lo..=hi {
        let px = prob(x);
        if at_most(&px, &observed, &slack) {
            p = p + px.clone();
        }
        mass = mass + px;
    }
    let p = if p > P::one() { P::one() } else { p };
    FisherResult { p_value: p, method: FisherMethod::Exact { tables: hi - lo + 1 }, total_mass: Some(mass) }
}

/// Drop all-zero rows and columns.
fn compact(cells: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let cols: Vec<usize> = (0..cells[0].len()).filter(|&j| cells.iter().any(|r| r[j] > 0)).collect();
    cells
        .iter()
        .filter(|r| r.iter().any(|&v| v > 0))
        .map(|r| cols.iter().map(|&j| r[j]).collect())
        .collect()
}

fn binomial_f64(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Upper bound on the number of tables with the given margins: each row
/// but the last is a composition of its sum into `c` parts.
pub fn table_count_bound(row_sums: &[u64], col_sums: &[u64]) -> f64 {
    let bound = |rows: &[u64], c: usize| -> f64 {
        let mut sorted = rows.to_vec();
        sorted.sort_unstable();
        // leave the largest row to be determined by the others
        sorted[..sorted.len() - 1].iter().map(|&r| binomial_f64(r + c as u64 - 1, c as u64 - 1)).product()
    };
    bound(row_sums, col_sums.len()).min(bound(col_sums, row_sums.len()))
}

/// Freeman-Halton generalization of the Fisher exact test to r x c tables.
/// Enumerates every same-margin table when their number is at most
/// `options.max_tables`; otherwise estimates the p-value by Monte Carlo.
pub fn fisher_exact_rxc<P: Probability>(cells: &[Vec<u64>], options: &FisherOptions) -> Result<FisherResult<P>, FisherError> {
    check_shape(cells)?;
    let cells = compact(cells);
    if cells.len() < 2 || cells[0].len() < 2 {
        return Ok(degenerate());
    }
    let rows: Vec<u64> = cells.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..cells[0].len()).map(|j| cells.iter().map(|r| r[j]).sum()).collect();
    if table_count_bound(&rows, &cols) > options.max_tables as f64 {
        return Ok(monte_carlo(&cells, &rows, &cols, options));
    }
    Ok(enumerate(&cells, &rows, &cols))
}

struct Enumeration<'a, P: Probability> {
    f: P::Factorials,
    rows: &'a [u64],
    cols: &'a [u64],
    observed: P,
    threshold: P,
    p: P,
    mass: P,
    tables: u64,
    buf: Vec<u64>,
}

impl<P: Probability> Enumeration<'_, P> {
    fn leaf(&mut self) {
        let prob = P::table_probability(&self.f, self.rows, self.cols, &self.buf);
        if prob <= self.threshold {
            self.p = self.p.clone() + prob.clone();
        }
        self.mass = self.mass.clone() + prob;
        self.tables += 1;
    }

    /// Fill cell (i, j) given what is left of row i and of every column.
    fn fill(&mut self, i: usize, j: usize, row_left: u64, col_left: &mut [u64]) {
        let (r, c) = (self.rows.len(), self.cols.len());
        if i == r - 1 {
            // last row is forced by the column remainders
            let start = self.buf.len();
            self.buf.extend_from_slice(col_left);
            self.leaf();
            self.buf.truncate(start);
            return;
        }
        if j == c - 1 {
            if row_left > col_left[j] {
                return;
            }
            col_left[j] -= row_left;
            self.buf.push(row_left);
            self.fill(i + 1, 0, self.rows[i + 1], col_left);
            self.buf.pop();
            col_left[j] += row_left;
            return;
        }
        let capacity_after: u64 = col_left[j + 1..].iter().sum();
        let lo = row_left.saturating_sub(capacity_after);
        let hi = row_left.min(col_left[j]);
        for v in lo..=hi {
            col_left[j] -= v;
            self.buf.push(v);
            self.fill(i, j + 1, row_left - v, col_left);
            self.buf.pop();
            col_left[j] += v;
        }
    }
}

fn enumerate<P: Probability>(cells: &[Vec<u64>], rows: &[u64], cols: &[u64]) -> FisherResult<P> {
    let n: u64 = rows.iter().sum();
    let f = P::factorials(n);
    let flat: Vec<u64> = cells.iter().flatten().copied().collect();
    let observed = P::table_probability(&f, rows, cols, &flat);
    let threshold = observed.clone() * (P::one() + P::relative_tolerance());
    let mut e = Enumeration {
        f,
        rows,
        cols,
        observed,
        threshold,
        p: P::zero(),
        mass: P::zero(),
        tables: 0,
        buf: Vec::with_capacity(flat.len()),
    };
    let mut col_left = cols.to_vec();
    e.fill(0, 0, rows[0], &mut col_left);
    debug_assert!(e.observed <= e.threshold);
    let p = if e.p > P::one() { P::one() } else { e.p };
    FisherResult { p_value: p, method: FisherMethod::Exact { tables: e.tables }, total_mass: Some(e.mass) }
}

/// Random tables with the observed margins, drawn by shuffling column
/// labels across the fixed row slots. p = (1 + hits) / (draws + 1).
fn monte_carlo<P: Probability>(cells: &[Vec<u64>], rows: &[u64], cols: &[u64], options: &FisherOptions) -> FisherResult<P> {
    let n: u64 = rows.iter().sum();
    let lnf = f64::factorials(n);
    let c = cols.len();
    let ln_fixed: f64 = rows.iter().chain(cols).map(|&v| lnf[v as usize]).sum::<f64>() - lnf[n as usize];
    let ln_prob = |flat: &[u64]| ln_fixed - flat.iter().map(|&v| lnf[v as usize]).sum::<f64>();
    let flat: Vec<u64> = cells.iter().flatten().copied().collect();
    let threshold = ln_prob(&flat) + (1.0 + f64::relative_tolerance()).ln();

    let mut labels: Vec<usize> = cols.iter().enumerate().flat_map(|(j, &m)| std::iter::repeat_n(j, m as usize)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let draws = options.mc_draws.max(1);
    let mut hits = 0u64;
    let mut table = vec![0u64; flat.len()];
    for _ in 0..draws {
        labels.shuffle(&mut rng);
        table.iter_mut().for_each(|v| *v = 0);
        let mut pos = 0;
        for (i, &r) in rows.iter().enumerate() {
            for &j in &labels[pos..pos + r as usize] {
                table[i * c + j] += 1;
            }
            pos += r as usize;
        }
        if ln_prob(&table) <= threshold {
            hits += 1;
        }
    }
    let p = (1 + hits) as f64 / (draws + 1) as f64;
    let std_error = (p * (1.0 - p) / draws as f64).sqrt();
    FisherResult {
        p_value: P::from_f64(p),
        method: FisherMethod::MonteCarlo { draws, seed: options.seed, std_error },
        total_mass: None,
    }
}
