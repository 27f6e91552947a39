use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::parse::{parse_statement, Branch, Query, Select, Source};
use super::token::{tokenize, Token, TokenKind};
use super::SqlError;

/// Counts extracted from a SELECT statement that feed the complexity score.
///
/// Counting rules:
/// - tables: distinct `(name, alias)` references in FROM/JOIN at any depth;
///   a derived table counts once.
/// - joins: explicit JOIN keywords plus `n - 1` for each comma-separated FROM
///   list of `n` items.
/// - where clauses: atomic predicates in WHERE clauses at any depth; ON
///   conditions are not counted.
/// - aggregation: a COUNT/SUM/AVG/MIN/MAX call anywhere outside literals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SqlFeatures {
    pub number_of_tables: u32,
    pub number_of_joins: u32,
    pub number_of_where_clauses: u32,
    pub has_group_by: bool,
    pub has_order: bool,
    pub has_aggregation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ComplexityInput {
    pub features: SqlFeatures,
    /// Analyst-estimated minutes to write the query by hand.
    pub time_to_create: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComplexityScore(pub u32);

impl ComplexityScore {
    pub fn value(self) -> u32 {
        self.0
    }
}

/// Sum of the estimated creation time, the three counts, and one point for
/// each of GROUP BY, ORDER BY and aggregation.
pub fn complexity_score(input: &ComplexityInput) -> ComplexityScore {
    let f = &input.features;
    let mut score = input.time_to_create;
    score += f.number_of_tables;
    score += f.number_of_joins;
    score += f.number_of_where_clauses;
    if f.has_group_by {
        score += 1;
    }
    if f.has_order {
        score += 1;
    }
    if f.has_aggregation {
        score += 1;
    }
    ComplexityScore(score)
}

/// A tokenized and parsed statement, shared by feature extraction and
/// schema validation.
#[derive(Debug, Clone)]
pub struct SqlAnalysis {
    pub tokens: Vec<Token>,
    pub query: Query,
}

impl SqlAnalysis {
    pub fn parse(sql: &str) -> Result<Self, SqlError> {
        let tokens = tokenize(sql)?;
        let query = parse_statement(&tokens)?;
        Ok(SqlAnalysis { tokens, query })
    }

    pub fn features(&self) -> SqlFeatures {
        let mut acc = Accumulator::default();
        acc.query(&self.query);
        SqlFeatures {
            number_of_tables: acc.table_refs.len() as u32 + acc.derived,
            number_of_joins: acc.joins,
            number_of_where_clauses: acc.predicates,
            has_group_by: acc.group_by,
            has_order: acc.order_by,
            has_aggregation: has_aggregate_call(&self.tokens),
        }
    }
}

pub fn extract_features(sql: &str) -> Result<SqlFeatures, SqlError> {
    Ok(SqlAnalysis::parse(sql)?.features())
}

#[derive(Default)]
struct Accumulator {
    table_refs: HashSet<(String, Option<String>)>,
    derived: u32,
    joins: u32,
    predicates: u32,
    group_by: bool,
    order_by: bool,
}

impl Accumulator {
    fn query(&mut self, q: &Query) {
        for cte in &q.ctes {
            self.query(&cte.query);
        }
        for branch in &q.branches {
            match branch {
                Branch::Select(s) => self.select(s),
                Branch::Nested(q) => self.query(q),
            }
        }
        self.order_by |= q.has_order_by;
    }

    fn select(&mut self, s: &Select) {
        for source in &s.sources {
            match source {
                Source::Table { name, alias } => {
                    self.table_refs.insert((name.clone(), alias.clone()));
                }
                Source::Function { name, alias } => {
                    self.table_refs.insert((format!("{name}()"), alias.clone()));
                }
                Source::Derived { query, .. } => {
                    self.derived += 1;
                    self.query(query);
                }
            }
        }
        self.joins += s.explicit_joins + s.implicit_joins;
        self.predicates += s.where_predicates;
        self.group_by |= s.has_group_by;
        self.order_by |= s.has_order_by;
        for nested in &s.nested {
            self.query(nested);
        }
    }
}

const AGGREGATES: &[&str] = &["AVG", "COUNT", "MAX", "MIN", "SUM"];

fn has_aggregate_call(tokens: &[Token]) -> bool {
    let significant: Vec<&Token> = tokens.iter().filter(|t| t.kind != TokenKind::Comment).collect();
    significant.iter().enumerate().any(|(i, t)| {
        t.kind == TokenKind::Identifier
            && AGGREGATES.contains(&t.name().as_str())
            && significant.get(i + 1).is_some_and(|n| n.is_punct("("))
            && !i
                .checked_sub(1)
                .and_then(|p| significant.get(p))
                .is_some_and(|p| p.is_punct("."))
    })
}
