//! Schema catalog: tables, columns and key relationships.
//!
//! Catalogs are loaded from a JSON document with a top-level `tables` list.
//! Identifiers are case-insensitive and stored uppercase. A loaded catalog is
//! immutable and checked: every key column exists, every foreign key resolves,
//! and no table or column name is duplicated.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("schema parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("empty catalog: at least one table is required")]
    EmptyCatalog,
    #[error("empty identifier in {context}")]
    EmptyName { context: String },
    #[error("duplicate table name {0}")]
    DuplicateTable(String),
    #[error("duplicate column {column} in table {table}")]
    DuplicateColumn { table: String, column: String },
    #[error("table {0} has no columns")]
    NoColumns(String),
    #[error("key column {column} is not a column of table {table}")]
    UnknownKeyColumn { table: String, column: String },
    #[error("dangling foreign key {table}.{column} -> {ref_table}.{ref_column}: {missing} does not exist")]
    DanglingForeignKey {
        table: String,
        column: String,
        ref_table: String,
        ref_column: String,
        missing: String,
    },
    #[error("unknown table {0} in keep list")]
    UnknownTable(String),
}

/// Canonical form of an identifier: trimmed, quotes removed, uppercase.
pub fn normalize_ident(name: &str) -> String {
    name.trim().trim_matches('"').to_uppercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    #[serde(rename = "type")]
    pub type_name: String,
    #[serde(default = "default_nullable")]
    pub nullable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

fn default_nullable() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ForeignKey {
    pub column: String,
    pub ref_table: String,
    pub ref_column: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub columns: Vec<ColumnDef>,
    #[serde(default)]
    pub primary_key: Vec<String>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKey>,
}

impl TableDef {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        let wanted = normalize_ident(name);
        self.columns.iter().find(|c| c.name == wanted)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.column(name).is_some()
    }

    fn is_primary_key(&self, column: &str) -> bool {
        self.primary_key.iter().any(|k| k == column)
    }

    fn foreign_key(&self, column: &str) -> Option<&ForeignKey> {
        self.foreign_keys.iter().find(|fk| fk.column == column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaCatalog {
    #[serde(default)]
    pub name: String,
    pub tables: Vec<TableDef>,
}

/// A foreign key removed by [`SchemaCatalog::narrow`] because its target
/// table was not kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedForeignKey {
    pub table: String,
    #[serde(flatten)]
    pub foreign_key: ForeignKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NarrowedCatalog {
    pub catalog: SchemaCatalog,
    pub dropped_foreign_keys: Vec<DroppedForeignKey>,
}

impl SchemaCatalog {
    /// Parse and check a schema document.
    pub fn load(source: &str) -> Result<Self, SchemaError> {
        let raw: SchemaCatalog = serde_json::from_str(source).map_err(|e| SchemaError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_tables(raw.name, raw.tables)
    }

    pub fn load_file(path: impl AsRef<std::path::Path>) -> Result<Self, SchemaError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SchemaError::Parse {
            line: 0,
            column: 0,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::load(&text)
    }

    /// Normalize identifiers and check every catalog invariant.
    pub fn from_tables(name: String, tables: Vec<TableDef>) -> Result<Self, SchemaError> {
        if tables.is_empty() {
            return Err(SchemaError::EmptyCatalog);
        }
        let mut normalized = Vec::with_capacity(tables.len());
        let mut seen_tables = HashSet::new();
        for table in tables {
            let table = normalize_table(table)?;
            if !seen_tables.insert(table.name.clone()) {
                return Err(SchemaError::DuplicateTable(table.name));
            }
            normalized.push(table);
        }
        let catalog = SchemaCatalog { name, tables: normalized };
        catalog.check_foreign_keys()?;
        Ok(catalog)
    }

    fn check_foreign_keys(&self) -> Result<(), SchemaError> {
        for table in &self.tables {
            for fk in &table.foreign_keys {
                let missing = match self.table(&fk.ref_table) {
                    None => Some(fk.ref_table.clone()),
                    Some(target) if !target.has_column(&fk.ref_column) => {
                        Some(format!("{}.{}", fk.ref_table, fk.ref_column))
                    }
                    Some(_) => None,
                };
                if let Some(missing) = missing {
                    return Err(SchemaError::DanglingForeignKey {
                        table: table.name.clone(),
                        column: fk.column.clone(),
                        ref_table: fk.ref_table.clone(),
                        ref_column: fk.ref_column.clone(),
                        missing,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        let wanted = normalize_ident(name);
        self.tables.iter().find(|t| t.name == wanted)
    }

    pub fn contains_table(&self, name: &str) -> bool {
        self.table(name).is_some()
    }

    pub fn table_names(&self) -> Vec<&str> {
        self.tables.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn foreign_key_count(&self) -> usize {
        self.tables.iter().map(|t| t.foreign_keys.len()).sum()
    }

    /// Keep only the named tables. Foreign keys pointing at dropped tables are
    /// removed and reported rather than treated as errors.
    pub fn narrow<S: AsRef<str>>(&self, keep: &[S]) -> Result<NarrowedCatalog, SchemaError> {
        let mut wanted = HashSet::new();
        for name in keep {
            let name = normalize_ident(name.as_ref());
            if !self.contains_table(&name) {
                return Err(SchemaError::UnknownTable(name));
            }
            wanted.insert(name);
        }
        let mut dropped = Vec::new();
        let tables = self
            .tables
            .iter()
            .filter(|t| wanted.contains(&t.name))
            .map(|t| {
                let mut table = t.clone();
                table.foreign_keys.retain(|fk| {
                    let kept = wanted.contains(&fk.ref_table);
                    if !kept {
                        dropped.push(DroppedForeignKey {
                            table: t.name.clone(),
                            foreign_key: fk.clone(),
                        });
                    }
                    kept
                });
                table
            })
            .collect();
        Ok(NarrowedCatalog {
            catalog: SchemaCatalog { name: self.name.clone(), tables },
            dropped_foreign_keys: dropped,
        })
    }

    /// Plain-text rendering used as a retrieval corpus: one block per table,
    /// tables sorted by name, columns in declaration order. Each column is
    /// defined on exactly one line.
    pub fn render_text(&self) -> String {
        let mut sorted: Vec<&TableDef> = self.tables.iter().collect();
        sorted.sort_by(|a, b| a.name.cmp(&b.name));
        let mut out = String::new();
        for table in sorted {
            let _ = writeln!(out, "TABLE {}", table.name);
            if let Some(desc) = &table.description {
                let _ = writeln!(out, "  Description: {}", desc.trim());
            }
            out.push_str("  Columns:\n");
            for col in &table.columns {
                let _ = write!(
                    out,
                    "    {} {} {}",
                    col.name,
                    col.type_name,
                    if col.nullable { "NULL" } else { "NOT NULL" }
                );
                if table.is_primary_key(&col.name) {
                    out.push_str(" [primary key]");
                }
                if let Some(fk) = table.foreign_key(&col.name) {
                    let _ = write!(out, " [foreign key to {}({})]", fk.ref_table, fk.ref_column);
                }
                if let Some(desc) = &col.description {
                    let _ = write!(out, " -- {}", desc.trim());
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }

    /// Serialize back to the schema document format.
    pub fn to_source(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    /// Number of foreign-key edges per target table, for diagnostics.
    pub fn inbound_references(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for fk in self.tables.iter().flat_map(|t| &t.foreign_keys) {
            *counts.entry(fk.ref_table.clone()).or_insert(0) += 1;
        }
        counts
    }
}

fn normalize_table(table: TableDef) -> Result<TableDef, SchemaError> {
    let name = normalize_ident(&table.name);
    if name.is_empty() {
        return Err(SchemaError::EmptyName { context: "table name".into() });
    }
    if table.columns.is_empty() {
        return Err(SchemaError::NoColumns(name));
    }
    let mut seen = HashSet::new();
    let mut columns = Vec::with_capacity(table.columns.len());
    for col in table.columns {
        let col_name = normalize_ident(&col.name);
        if col_name.is_empty() {
            return Err(SchemaError::EmptyName { context: format!("column of table {name}") });
        }
        if !seen.insert(col_name.clone()) {
            return Err(SchemaError::DuplicateColumn { table: name, column: col_name });
        }
        columns.push(ColumnDef { name: col_name, ..col });
    }
    let key_column = |raw: &str| -> Result<String, SchemaError> {
        let col = normalize_ident(raw);
        if seen.contains(&col) {
            Ok(col)
        } else {
            Err(SchemaError::UnknownKeyColumn { table: name.clone(), column: col })
        }
    };
    let primary_key = table
        .primary_key
        .iter()
        .map(|k| key_column(k))
        .collect::<Result<Vec<_>, _>>()?;
    let foreign_keys = table
        .foreign_keys
        .iter()
        .map(|fk| {
            Ok(ForeignKey {
                column: key_column(&fk.column)?,
                ref_table: normalize_ident(&fk.ref_table),
                ref_column: normalize_ident(&fk.ref_column),
            })
        })
        .collect::<Result<Vec<_>, SchemaError>>()?;
    Ok(TableDef {
        name,
        description: table.description,
        columns,
        primary_key,
        foreign_keys,
    })
}
