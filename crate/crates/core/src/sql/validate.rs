use std::fmt;

use serde::{Deserialize, Serialize};

use super::features::SqlAnalysis;
use super::parse::{Branch, ColumnRef, Query, Select, Source};
use super::SqlError;
use crate::schema::{SchemaCatalog, TableDef};

/// A qualified column reference that does not resolve. `table` is the
/// catalog table the qualifier resolved to, or `None` when the qualifier
/// itself is unknown.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnknownColumn {
    pub qualifier: String,
    pub table: Option<String>,
    pub column: String,
}

impl fmt::Display for UnknownColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.table {
            Some(t) if *t != self.qualifier => write!(f, "{}→{}.{}", self.qualifier, t, self.column),
            Some(t) => write!(f, "{}.{}", t, self.column),
            None => write!(f, "{}.{} (unknown qualifier)", self.qualifier, self.column),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub unknown_tables: Vec<String>,
    pub unknown_columns: Vec<UnknownColumn>,
    pub notes: Vec<String>,
}

impl ValidationReport {
    fn push_table(&mut self, name: &str) {
        if !self.unknown_tables.iter().any(|t| t == name) {
            self.unknown_tables.push(name.to_string());
        }
    }

    fn push_column(&mut self, col: UnknownColumn) {
        if !self.unknown_columns.contains(&col) {
            self.unknown_columns.push(col);
        }
    }

    fn note(&mut self, note: String) {
        if !self.notes.contains(&note) {
            self.notes.push(note);
        }
    }
}

/// Check table and column references against a catalog.
///
/// Unknown tables and unresolvable qualified columns make the report fail.
/// Unqualified columns are resolved when exactly one in-scope table has
/// them; otherwise they are only noted.
pub fn validate_against_schema(sql: &str, catalog: &SchemaCatalog) -> Result<ValidationReport, SqlError> {
    let analysis = SqlAnalysis::parse(sql)?;
    Ok(analysis.validate(catalog))
}

impl SqlAnalysis {
    pub fn validate(&self, catalog: &SchemaCatalog) -> ValidationReport {
        let mut v = Validator { catalog, report: ValidationReport::default() };
        v.query(&self.query, &mut Vec::new(), &mut Vec::new());
        let mut report = v.report;
        report.ok = report.unknown_tables.is_empty() && report.unknown_columns.is_empty();
        report
    }
}

#[derive(Debug)]
enum Resolved<'c> {
    Catalog(&'c TableDef),
    /// CTE, derived table, table function or DUAL: columns not checked.
    Opaque,
    /// Already reported as an unknown table.
    Missing,
}

struct ScopeEntry<'c> {
    alias: Option<String>,
    name: Option<String>,
    resolved: Resolved<'c>,
}

type Scope<'c> = Vec<ScopeEntry<'c>>;

struct Validator<'c> {
    catalog: &'c SchemaCatalog,
    report: ValidationReport,
}

fn last_segment(name: &str) -> &str {
    name.rsplit('.').next().unwrap_or(name)
}

impl<'c> Validator<'c> {
    fn query(&mut self, q: &Query, scopes: &mut Vec<Scope<'c>>, ctes: &mut Vec<String>) {
        let visible_before = ctes.len();
        for cte in &q.ctes {
            // recursive CTEs may reference themselves
            ctes.push(cte.name.clone());
            self.query(&cte.query, scopes, ctes);
        }
        for branch in &q.branches {
            match branch {
                Branch::Select(s) => self.select(s, scopes, ctes),
                Branch::Nested(q) => self.query(q, scopes, ctes),
            }
        }
        ctes.truncate(visible_before);
    }

    fn select(&mut self, s: &Select, scopes: &mut Vec<Scope<'c>>, ctes: &mut Vec<String>) {
        let mut scope = Scope::new();
        for source in &s.sources {
            match source {
                Source::Table { name, alias } => {
                    let short = last_segment(name);
                    let resolved = if ctes.iter().any(|c| c == short) || short == "DUAL" {
                        Resolved::Opaque
                    } else if let Some(table) = self.catalog.table(short) {
                        Resolved::Catalog(table)
                    } else {
                        self.report.push_table(name);
                        Resolved::Missing
                    };
                    scope.push(ScopeEntry { alias: alias.clone(), name: Some(short.to_string()), resolved });
                }
                Source::Derived { alias, query } => {
                    // derived tables see the enclosing scopes, not their siblings
                    self.query(query, scopes, ctes);
                    scope.push(ScopeEntry { alias: alias.clone(), name: None, resolved: Resolved::Opaque });
                }
                Source::Function { name, alias } => {
                    scope.push(ScopeEntry { alias: alias.clone(), name: Some(name.clone()), resolved: Resolved::Opaque });
                }
            }
        }
        scopes.push(scope);
        for r in &s.column_refs {
            self.column(r, s, scopes);
        }
        for nested in &s.nested {
            self.query(nested, scopes, ctes);
        }
        scopes.pop();
    }

    fn column(&mut self, r: &ColumnRef, s: &Select, scopes: &[Scope<'c>]) {
        match &r.qualifier {
            Some(q) => self.qualified(q, &r.column, scopes),
            None => {
                if !s.output_aliases.contains(&r.column) {
                    self.unqualified(&r.column, scopes);
                }
            }
        }
    }

    fn qualified(&mut self, qualifier: &str, column: &str, scopes: &[Scope<'c>]) {
        let found = scopes.iter().rev().find_map(|scope| {
            scope
                .iter()
                .find(|e| e.alias.as_deref() == Some(qualifier))
                .or_else(|| scope.iter().find(|e| e.alias.is_none() && e.name.as_deref() == Some(qualifier)))
                .or_else(|| scope.iter().find(|e| e.name.as_deref() == Some(qualifier)))
        });
        match found.map(|e| &e.resolved) {
            Some(Resolved::Catalog(table)) => {
                if !table.has_column(column) {
                    self.report.push_column(UnknownColumn {
                        qualifier: qualifier.to_string(),
                        table: Some(table.name.clone()),
                        column: column.to_string(),
                    });
                }
            }
            Some(Resolved::Opaque | Resolved::Missing) => {}
            None => self.report.push_column(UnknownColumn {
                qualifier: qualifier.to_string(),
                table: None,
                column: column.to_string(),
            }),
        }
    }

    fn unqualified(&mut self, column: &str, scopes: &[Scope<'c>]) {
        for scope in scopes.iter().rev() {
            let owners: Vec<&str> = scope
                .iter()
                .filter_map(|e| match e.resolved {
                    Resolved::Catalog(t) if t.has_column(column) => Some(t.name.as_str()),
                    _ => None,
                })
                .collect();
            match owners.len() {
                1 => return,
                0 => {
                    if scope.iter().any(|e| !matches!(e.resolved, Resolved::Catalog(_))) {
                        // may come from a CTE, derived table or unknown table
                        return;
                    }
                }
                _ => {
                    self.report.note(format!("column {column} is ambiguous between {}", owners.join(", ")));
                    return;
                }
            }
        }
        self.report.note(format!("column {column} not found in any table in scope"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::tests::two_tables;

    fn check(sql: &str) -> ValidationReport {
        validate_against_schema(sql, &two_tables()).unwrap()
    }

    #[test]
    fn valid_join_passes() {
        let r = check(
            "SELECT p.NAME, COUNT(*) FROM PRODUCT_FAMILY p JOIN PRODUCT_GROUP g \
             ON p.PRODUCT_GROUP_ID = g.PRODUCT_GROUP_ID WHERE p.DELETED IS NULL GROUP BY p.NAME",
        );
        assert!(r.ok, "{r:?}");
        assert!(r.notes.is_empty(), "{r:?}");
    }

    #[test]
    fn unknown_table() {
        let r = check("SELECT X FROM NO_SUCH_TABLE");
        assert!(!r.ok);
        assert_eq!(r.unknown_tables, vec!["NO_SUCH_TABLE"]);
        assert!(r.unknown_columns.is_empty());
    }

    #[test]
    fn unknown_qualified_column() {
        let r = check("SELECT p.BOGUS FROM PRODUCT_FAMILY p");
        assert!(!r.ok);
        assert_eq!(
            r.unknown_columns,
            vec![UnknownColumn { qualifier: "P".into(), table: Some("PRODUCT_FAMILY".into()), column: "BOGUS".into() }]
        );
        assert_eq!(r.unknown_columns[0].to_string(), "P→PRODUCT_FAMILY.BOGUS");
    }

    #[test]
    fn lowercase_identifiers_resolve() {
        assert!(check("select name from product_family where deleted is null").ok);
        assert!(check("SELECT product_family.name FROM product_family").ok);
    }

    #[test]
    fn unqualified_problems_are_notes_only() {
        let r = check("SELECT BOGUS FROM PRODUCT_FAMILY");
        assert!(r.ok);
        assert_eq!(r.notes.len(), 1);
        let r = check("SELECT PRODUCT_GROUP_ID FROM PRODUCT_FAMILY, PRODUCT_GROUP");
        assert!(r.ok);
        assert!(r.notes[0].contains("ambiguous"));
    }

    #[test]
    fn unknown_qualifier_fails() {
        let r = check("SELECT x.NAME FROM PRODUCT_FAMILY p");
        assert!(!r.ok);
        assert_eq!(r.unknown_columns[0].table, None);
    }

    #[test]
    fn correlated_subquery_sees_outer_alias() {
        let r = check(
            "SELECT g.PRODUCT_GROUP_ID FROM PRODUCT_GROUP g WHERE EXISTS \
             (SELECT 1 FROM PRODUCT_FAMILY f WHERE f.PRODUCT_GROUP_ID = g.PRODUCT_GROUP_ID)",
        );
        assert!(r.ok, "{r:?}");
    }

    #[test]
    fn ctes_dual_and_derived_tables_are_not_unknown() {
        let r = check(
            "WITH live AS (SELECT FAMILY_ID, NAME FROM PRODUCT_FAMILY WHERE DELETED IS NULL) \
             SELECT l.NAME, d.n FROM live l, (SELECT COUNT(*) n FROM PRODUCT_GROUP) d",
        );
        assert!(r.ok, "{r:?}");
        assert!(check("SELECT SYSDATE FROM DUAL").ok);
    }

    #[test]
    fn output_aliases_are_not_columns() {
        let r = check("SELECT COUNT(*) AS n FROM PRODUCT_FAMILY ORDER BY n");
        assert!(r.ok && r.notes.is_empty(), "{r:?}");
    }
}
