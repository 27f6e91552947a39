//! Pragmatic SELECT-statement structure.
//!
//! Tokens are first grouped into a tree by parentheses; any group that opens
//! with `SELECT` or `WITH` becomes a nested [`Query`]. The query parser then
//! splits each SELECT into its clauses and the FROM clause into sources and
//! joins. Expressions stay as token trees: only the pieces the complexity
//! counts and schema checks need are pulled out of them.

use super::token::{Token, TokenKind};
use super::SqlError;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Token(Token),
    Group { open: Token, children: Vec<Node> },
    Subquery { open: Token, query: Box<Query> },
}

impl Node {
    fn token(&self) -> Option<&Token> {
        match self {
            Node::Token(t) => Some(t),
            _ => None,
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        self.token().is_some_and(|t| t.is_keyword(kw))
    }

    fn is_punct(&self, p: &str) -> bool {
        self.token().is_some_and(|t| t.is_punct(p))
    }

    fn is_identifier(&self) -> bool {
        self.token().is_some_and(|t| t.kind == TokenKind::Identifier)
    }

    fn position_token(&self) -> &Token {
        match self {
            Node::Token(t) => t,
            Node::Group { open, .. } | Node::Subquery { open, .. } => open,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub ctes: Vec<Cte>,
    pub branches: Vec<Branch>,
    /// ORDER BY applied to a whole set operation, e.g. `(SELECT ..) UNION (SELECT ..) ORDER BY 1`.
    pub has_order_by: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cte {
    pub name: String,
    pub query: Query,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Branch {
    Select(Box<Select>),
    Nested(Box<Query>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Table { name: String, alias: Option<String> },
    Derived { alias: Option<String>, query: Box<Query> },
    /// Table-valued function such as `TABLE(...)`.
    Function { name: String, alias: Option<String> },
}

impl Source {
    pub fn alias(&self) -> Option<&str> {
        match self {
            Source::Table { alias, .. } | Source::Derived { alias, .. } | Source::Function { alias, .. } => {
                alias.as_deref()
            }
        }
    }
}

/// Column reference found in an expression. `qualifier` is the alias or
/// table name before the dot, when present.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnRef {
    pub qualifier: Option<String>,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Select {
    pub sources: Vec<Source>,
    pub explicit_joins: u32,
    pub implicit_joins: u32,
    pub where_predicates: u32,
    pub has_where: bool,
    pub has_group_by: bool,
    pub has_order_by: bool,
    pub column_refs: Vec<ColumnRef>,
    /// Names introduced by `expr AS alias` in the select list.
    pub output_aliases: Vec<String>,
    /// Subqueries outside the FROM clause (predicates, select list, ON, ...).
    pub nested: Vec<Query>,
}

/// Parse a complete statement. Only SELECT (optionally with a WITH prefix)
/// is accepted.
pub fn parse_statement(tokens: &[Token]) -> Result<Query, SqlError> {
    let significant: Vec<Token> = tokens
        .iter()
        .filter(|t| t.kind != TokenKind::Comment)
        .cloned()
        .collect();
    let first = significant.first().ok_or(SqlError::Empty)?;
    let starts_query = first.is_keyword("SELECT")
        || first.is_keyword("WITH")
        || (first.is_punct("(")
            && significant
                .iter()
                .find(|t| !t.is_punct("("))
                .is_some_and(|t| t.is_keyword("SELECT") || t.is_keyword("WITH")));
    if !starts_query {
        return Err(SqlError::NotSelect { found: first.text.clone(), at: first.position });
    }
    let mut pos = 0;
    let mut nodes = build_nodes(&significant, &mut pos, None)?;
    while nodes.last().is_some_and(|n| n.is_punct(";")) {
        nodes.pop();
    }
    if let Some(semi) = nodes.iter().find(|n| n.is_punct(";")) {
        let t = semi.position_token();
        return Err(SqlError::Syntax {
            message: "multiple statements are not supported".into(),
            at: t.position,
        });
    }
    parse_query(&nodes)
}

fn build_nodes(tokens: &[Token], pos: &mut usize, open: Option<&Token>) -> Result<Vec<Node>, SqlError> {
    let mut out = Vec::new();
    while *pos < tokens.len() {
        let tok = &tokens[*pos];
        *pos += 1;
        if tok.is_punct("(") {
            let children = build_nodes(tokens, pos, Some(tok))?;
            out.push(make_group(tok.clone(), children)?);
        } else if tok.is_punct(")") {
            return match open {
                Some(_) => Ok(out),
                None => Err(SqlError::Unbalanced(tok.position)),
            };
        } else {
            out.push(Node::Token(tok.clone()));
        }
    }
    match open {
        Some(open) => Err(SqlError::Unbalanced(open.position)),
        None => Ok(out),
    }
}

fn make_group(open: Token, children: Vec<Node>) -> Result<Node, SqlError> {
    let is_query = match children.first() {
        Some(first) if first.is_keyword("SELECT") || first.is_keyword("WITH") => true,
        // ((SELECT ..) UNION (SELECT ..))
        Some(Node::Subquery { .. }) => children.iter().skip(1).any(is_set_operator),
        _ => false,
    };
    if is_query {
        let query = parse_query(&children)?;
        Ok(Node::Subquery { open, query: Box::new(query) })
    } else {
        Ok(Node::Group { open, children })
    }
}

fn is_set_operator(node: &Node) -> bool {
    ["UNION", "INTERSECT", "MINUS", "EXCEPT"].iter().any(|kw| node.is_keyword(kw))
}

fn syntax(node: Option<&Node>, message: impl Into<String>) -> SqlError {
    SqlError::Syntax {
        message: message.into(),
        at: node.map(|n| n.position_token().position).unwrap_or_default(),
    }
}

fn parse_query(nodes: &[Node]) -> Result<Query, SqlError> {
    let mut i = 0;
    let mut ctes = Vec::new();
    if nodes.first().is_some_and(|n| n.is_keyword("WITH")) {
        i = 1;
        if nodes.get(i).is_some_and(|n| n.is_keyword("RECURSIVE")) {
            i += 1;
        }
        loop {
            let name = match nodes.get(i) {
                Some(Node::Token(t)) if t.kind == TokenKind::Identifier => t.name(),
                other => return Err(syntax(other, "expected common table expression name")),
            };
            i += 1;
            if matches!(nodes.get(i), Some(Node::Group { .. })) {
                i += 1;
            }
            if !nodes.get(i).is_some_and(|n| n.is_keyword("AS")) {
                return Err(syntax(nodes.get(i), "expected AS in WITH clause"));
            }
            i += 1;
            let query = match nodes.get(i) {
                Some(Node::Subquery { query, .. }) => (**query).clone(),
                other => return Err(syntax(other, "expected parenthesized query in WITH clause")),
            };
            i += 1;
            ctes.push(Cte { name, query });
            if nodes.get(i).is_some_and(|n| n.is_punct(",")) {
                i += 1;
            } else {
                break;
            }
        }
    }
    let body = &nodes[i..];
    if body.is_empty() {
        return Err(syntax(nodes.last(), "missing query body"));
    }
    let mut branches = Vec::new();
    let mut has_order_by = false;
    for part in split_set_operations(body) {
        match part.first() {
            Some(n) if n.is_keyword("SELECT") => branches.push(Branch::Select(Box::new(parse_select(part)?))),
            Some(Node::Subquery { query, .. }) => {
                branches.push(Branch::Nested(query.clone()));
                let tail = &part[1..];
                match tail.first().and_then(|_| clause_at(tail, 0)) {
                    None if tail.is_empty() => {}
                    Some((Clause::OrderBy, _)) => has_order_by = true,
                    Some((Clause::Tail, _)) => {}
                    _ => return Err(syntax(tail.first(), "unexpected tokens after parenthesized query")),
                }
            }
            other => return Err(syntax(other, "expected SELECT")),
        }
    }
    Ok(Query { ctes, branches, has_order_by })
}

fn split_set_operations(nodes: &[Node]) -> Vec<&[Node]> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < nodes.len() {
        if is_set_operator(&nodes[i]) {
            parts.push(&nodes[start..i]);
            i += 1;
            if nodes.get(i).is_some_and(|n| n.is_keyword("ALL") || n.is_keyword("DISTINCT")) {
                i += 1;
            }
            start = i;
        } else {
            i += 1;
        }
    }
    parts.push(&nodes[start..]);
    parts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Clause {
    Projection,
    From,
    Where,
    GroupBy,
    Having,
    OrderBy,
    ConnectBy,
    StartWith,
    Tail,
}

/// Identify a clause-opening keyword at `nodes[i]`; returns the clause and
/// the number of keyword nodes it spans.
fn clause_at(nodes: &[Node], i: usize) -> Option<(Clause, usize)> {
    let n = &nodes[i];
    let next_is = |kw: &str| nodes.get(i + 1).is_some_and(|m| m.is_keyword(kw));
    if n.is_keyword("FROM") {
        Some((Clause::From, 1))
    } else if n.is_keyword("WHERE") {
        Some((Clause::Where, 1))
    } else if n.is_keyword("GROUP") && next_is("BY") {
        Some((Clause::GroupBy, 2))
    } else if n.is_keyword("HAVING") {
        Some((Clause::Having, 1))
    } else if n.is_keyword("ORDER") && next_is("BY") {
        Some((Clause::OrderBy, 2))
    } else if n.is_keyword("ORDER") && next_is("SIBLINGS") {
        Some((Clause::OrderBy, 3))
    } else if n.is_keyword("CONNECT") && next_is("BY") {
        Some((Clause::ConnectBy, 2))
    } else if n.is_keyword("START") && next_is("WITH") {
        Some((Clause::StartWith, 2))
    } else if n.is_keyword("FETCH") || n.is_keyword("OFFSET") || n.is_keyword("LIMIT") || n.is_keyword("FOR") {
        Some((Clause::Tail, 1))
    } else {
        None
    }
}

fn parse_select(nodes: &[Node]) -> Result<Select, SqlError> {
    let mut clauses: Vec<(Clause, &[Node])> = Vec::new();
    let mut current = Clause::Projection;
    let mut start = 1;
    let mut i = 1;
    while i < nodes.len() {
        if let Some((clause, width)) = clause_at(nodes, i) {
            clauses.push((current, &nodes[start..i]));
            current = clause;
            i += width;
            start = i;
        } else {
            i += 1;
        }
    }
    clauses.push((current, &nodes[start..]));

    let mut select = Select::default();
    for (clause, body) in clauses {
        match clause {
            Clause::Projection => {
                let body = match body.first() {
                    Some(n) if n.is_keyword("DISTINCT") || n.is_keyword("ALL") => &body[1..],
                    _ => body,
                };
                for item in split_top_level(body, ",") {
                    let (expr, alias) = split_output_alias(item);
                    if let Some(alias) = alias {
                        select.output_aliases.push(alias);
                    }
                    collect_refs(expr, &mut select.column_refs);
                }
            }
            Clause::From => parse_from(body, &mut select)?,
            Clause::Where => {
                select.has_where = true;
                select.where_predicates += count_predicates(body);
                collect_refs(body, &mut select.column_refs);
            }
            Clause::GroupBy => {
                select.has_group_by = true;
                collect_refs(body, &mut select.column_refs);
            }
            Clause::OrderBy => {
                select.has_order_by = true;
                collect_refs(body, &mut select.column_refs);
            }
            Clause::Having | Clause::ConnectBy | Clause::StartWith => {
                collect_refs(body, &mut select.column_refs);
            }
            Clause::Tail => {}
        }
        if clause != Clause::From {
            collect_subqueries(body, &mut select.nested);
        }
    }
    Ok(select)
}

/// Split at top-level punctuation (commas, typically).
fn split_top_level<'a>(nodes: &'a [Node], punct: &str) -> Vec<&'a [Node]> {
    if nodes.is_empty() {
        return Vec::new();
    }
    nodes.split(|n| n.is_punct(punct)).collect()
}

/// Separate a trailing `AS alias` or bare alias from a select-list item.
fn split_output_alias(item: &[Node]) -> (&[Node], Option<String>) {
    let n = item.len();
    if n >= 2 && item[n - 1].is_identifier() {
        let before = &item[n - 2];
        if before.is_keyword("AS") {
            return (&item[..n - 2], item[n - 1].token().map(|t| t.name()));
        }
        let bare_alias = match before {
            Node::Token(t) => match t.kind {
                TokenKind::Operator | TokenKind::Punctuation => false,
                TokenKind::Keyword => t.is_keyword("END"),
                _ => true,
            },
            _ => true,
        };
        if bare_alias {
            return (&item[..n - 1], item[n - 1].token().map(|t| t.name()));
        }
    }
    (item, None)
}

fn is_join_start(node: &Node) -> bool {
    ["JOIN", "INNER", "LEFT", "RIGHT", "FULL", "CROSS", "NATURAL", "OUTER"]
        .iter()
        .any(|kw| node.is_keyword(kw))
}

fn parse_from(nodes: &[Node], select: &mut Select) -> Result<(), SqlError> {
    let items = split_top_level(nodes, ",");
    if items.is_empty() || items.iter().any(|i| i.is_empty()) {
        return Err(syntax(nodes.first(), "empty FROM item"));
    }
    select.implicit_joins += items.len() as u32 - 1;
    for item in items {
        parse_join_chain(item, select)?;
    }
    Ok(())
}

fn parse_join_chain(nodes: &[Node], select: &mut Select) -> Result<(), SqlError> {
    let mut i = 0;
    parse_source(nodes, &mut i, select)?;
    while i < nodes.len() {
        let node = &nodes[i];
        if node.is_keyword("JOIN") || is_join_start(node) {
            while i < nodes.len() && is_join_start(&nodes[i]) && !nodes[i].is_keyword("JOIN") {
                if (nodes[i].is_keyword("CROSS") || nodes[i].is_keyword("OUTER"))
                    && nodes.get(i + 1).is_some_and(|n| n.is_keyword("APPLY"))
                {
                    i += 1;
                    break;
                }
                i += 1;
            }
            match nodes.get(i) {
                Some(n) if n.is_keyword("JOIN") || n.is_keyword("APPLY") => i += 1,
                other => return Err(syntax(other, "expected JOIN")),
            }
            select.explicit_joins += 1;
            parse_source(nodes, &mut i, select)?;
            if nodes.get(i).is_some_and(|n| n.is_keyword("ON")) {
                i += 1;
                let start = i;
                while i < nodes.len() && !is_join_start(&nodes[i]) {
                    i += 1;
                }
                let condition = &nodes[start..i];
                if condition.is_empty() {
                    return Err(syntax(nodes.get(start - 1), "empty ON condition"));
                }
                collect_refs(condition, &mut select.column_refs);
                collect_subqueries(condition, &mut select.nested);
            } else if nodes.get(i).is_some_and(|n| n.is_keyword("USING")) {
                i += 1;
                match nodes.get(i) {
                    Some(Node::Group { .. }) => i += 1,
                    other => return Err(syntax(other, "expected column list after USING")),
                }
            }
        } else {
            return Err(syntax(Some(node), format!("unexpected {} in FROM clause", node.position_token().text)));
        }
    }
    Ok(())
}

fn take_alias(nodes: &[Node], i: &mut usize) -> Option<String> {
    if nodes.get(*i).is_some_and(|n| n.is_keyword("AS")) {
        if let Some(Node::Token(t)) = nodes.get(*i + 1) {
            if t.kind == TokenKind::Identifier {
                *i += 2;
                return Some(t.name());
            }
        }
        return None;
    }
    match nodes.get(*i) {
        Some(Node::Token(t)) if t.kind == TokenKind::Identifier => {
            *i += 1;
            Some(t.name())
        }
        _ => None,
    }
}

fn parse_source(nodes: &[Node], i: &mut usize, select: &mut Select) -> Result<(), SqlError> {
    if nodes.get(*i).is_some_and(|n| n.is_keyword("LATERAL")) {
        *i += 1;
    }
    match nodes.get(*i) {
        Some(Node::Subquery { query, .. }) => {
            *i += 1;
            let alias = take_alias(nodes, i);
            select.sources.push(Source::Derived { alias, query: query.clone() });
        }
        Some(Node::Group { children, .. }) => {
            *i += 1;
            parse_join_chain(children, select)?;
            // an alias on a parenthesized join has nothing to resolve to
            let _ = take_alias(nodes, i);
        }
        Some(Node::Token(t)) if t.kind == TokenKind::Identifier => {
            let mut parts = vec![t.name()];
            *i += 1;
            while nodes.get(*i).is_some_and(|n| n.is_punct(".")) {
                match nodes.get(*i + 1) {
                    Some(Node::Token(t)) if t.kind == TokenKind::Identifier => {
                        parts.push(t.name());
                        *i += 2;
                    }
                    other => return Err(syntax(other, "expected identifier after '.'")),
                }
            }
            if let Some(Node::Group { children, .. }) = nodes.get(*i) {
                collect_subqueries(children, &mut select.nested);
                *i += 1;
                let alias = take_alias(nodes, i);
                select.sources.push(Source::Function { name: parts.join("."), alias });
                return Ok(());
            }
            // database link
            if nodes.get(*i).is_some_and(|n| n.token().is_some_and(|t| t.is_operator("@"))) {
                *i += 2;
            }
            let alias = take_alias(nodes, i);
            select.sources.push(Source::Table { name: parts.join("."), alias });
        }
        other => return Err(syntax(other, "expected table reference")),
    }
    Ok(())
}

/// Atomic predicates in a boolean condition: split on top-level AND/OR,
/// recurse into parenthesized groups. The AND of `BETWEEN x AND y` and
/// anything inside `CASE ... END` do not split.
pub(crate) fn count_predicates(nodes: &[Node]) -> u32 {
    let mut total = 0;
    for part in split_boolean(nodes) {
        let mut rest = part;
        while rest.first().is_some_and(|n| n.is_keyword("NOT")) {
            rest = &rest[1..];
        }
        total += match rest {
            [] => 0,
            [Node::Group { children, .. }] => count_predicates(children),
            _ => 1,
        };
    }
    total
}

fn split_boolean(nodes: &[Node]) -> Vec<&[Node]> {
    let mut parts = Vec::new();
    let mut case_depth = 0usize;
    let mut pending_between = false;
    let mut start = 0;
    for (i, node) in nodes.iter().enumerate() {
        if node.is_keyword("CASE") {
            case_depth += 1;
        } else if node.is_keyword("END") && case_depth > 0 {
            case_depth -= 1;
        } else if case_depth == 0 && node.is_keyword("BETWEEN") {
            pending_between = true;
        } else if case_depth == 0 && node.is_keyword("AND") && pending_between {
            pending_between = false;
        } else if case_depth == 0 && (node.is_keyword("AND") || node.is_keyword("OR")) {
            parts.push(&nodes[start..i]);
            start = i + 1;
        }
    }
    parts.push(&nodes[start..]);
    parts.into_iter().filter(|p| !p.is_empty()).collect()
}

/// Identifiers that read like columns but are built-in values or units.
const PSEUDO_COLUMNS: &[&str] = &[
    "CURRENT_DATE", "CURRENT_TIMESTAMP", "DAY", "FALSE", "HOUR", "LEVEL", "LOCALTIMESTAMP",
    "MINUTE", "MONTH", "ROWID", "ROWNUM", "SECOND", "SESSIONTIMEZONE", "SYSDATE",
    "SYSTIMESTAMP", "TRUE", "UID", "USER", "YEAR",
];

const TYPED_LITERAL_PREFIXES: &[&str] = &["DATE", "TIMESTAMP", "INTERVAL", "N"];

fn collect_refs(nodes: &[Node], out: &mut Vec<ColumnRef>) {
    let mut i = 0;
    while i < nodes.len() {
        match &nodes[i] {
            Node::Group { children, .. } => {
                collect_refs(children, out);
                i += 1;
            }
            Node::Subquery { .. } => i += 1,
            Node::Token(t) if t.kind == TokenKind::Identifier => {
                let prev = i.checked_sub(1).and_then(|p| nodes.get(p));
                let after_as = prev.is_some_and(|p| p.is_keyword("AS"));
                let bind_var = prev.and_then(Node::token).is_some_and(|p| p.is_operator(":"));
                // dotted chain a.b or a.b.c
                let mut parts = vec![t.name()];
                let mut j = i + 1;
                let mut star = false;
                while nodes.get(j).is_some_and(|n| n.is_punct(".")) {
                    match nodes.get(j + 1) {
                        Some(Node::Token(n)) if n.kind == TokenKind::Identifier => {
                            parts.push(n.name());
                            j += 2;
                        }
                        Some(Node::Token(n)) if n.is_operator("*") => {
                            star = true;
                            j += 2;
                            break;
                        }
                        _ => break,
                    }
                }
                let is_call = matches!(nodes.get(j), Some(Node::Group { .. } | Node::Subquery { .. }));
                let typed_literal = parts.len() == 1
                    && TYPED_LITERAL_PREFIXES.contains(&parts[0].as_str())
                    && nodes.get(j).and_then(Node::token).is_some_and(|n| n.kind == TokenKind::String);
                if !(star || is_call || after_as || bind_var || typed_literal) {
                    match parts.len() {
                        1 if !PSEUDO_COLUMNS.contains(&parts[0].as_str()) => out.push(ColumnRef {
                            qualifier: None,
                            column: parts.pop().unwrap_or_default(),
                        }),
                        2 | 3 => {
                            let column = parts.pop().unwrap_or_default();
                            let qualifier = parts.pop();
                            if !matches!(column.as_str(), "NEXTVAL" | "CURRVAL") {
                                out.push(ColumnRef { qualifier, column });
                            }
                        }
                        _ => {}
                    }
                }
                i = j;
            }
            Node::Token(_) => i += 1,
        }
    }
}

fn collect_subqueries(nodes: &[Node], out: &mut Vec<Query>) {
    for node in nodes {
        match node {
            Node::Subquery { query, .. } => out.push((**query).clone()),
            Node::Group { children, .. } => collect_subqueries(children, out),
            Node::Token(_) => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::token::tokenize;
    use super::*;

    fn parse(sql: &str) -> Query {
        parse_statement(&tokenize(sql).unwrap()).unwrap()
    }

    fn only_select(q: &Query) -> &Select {
        match &q.branches[..] {
            [Branch::Select(s)] => s,
            other => panic!("expected one select, got {other:?}"),
        }
    }

    #[test]
    fn sources_and_aliases() {
        let q = parse("SELECT p.NAME FROM PRODUCT_FAMILY p JOIN PRODUCT_GROUP AS g ON p.X = g.X");
        let s = only_select(&q);
        assert_eq!(
            s.sources,
            vec![
                Source::Table { name: "PRODUCT_FAMILY".into(), alias: Some("P".into()) },
                Source::Table { name: "PRODUCT_GROUP".into(), alias: Some("G".into()) },
            ]
        );
        assert_eq!(s.explicit_joins, 1);
        assert_eq!(s.implicit_joins, 0);
    }

    #[test]
    fn join_variants() {
        let q = parse(
            "SELECT 1 FROM a LEFT OUTER JOIN b ON a.x = b.x INNER JOIN c USING (x) \
             CROSS JOIN d NATURAL JOIN e FULL JOIN f ON 1 = 1",
        );
        let s = only_select(&q);
        assert_eq!(s.explicit_joins, 5);
        assert_eq!(s.sources.len(), 6);
    }

    #[test]
    fn predicate_splitting() {
        let q = parse("SELECT 1 FROM t WHERE a = 1 AND (b = 2 OR NOT (c = 3 AND d BETWEEN 1 AND 5)) AND CASE WHEN e = 1 AND f = 2 THEN 1 END = 1");
        assert_eq!(only_select(&q).where_predicates, 5);
        let q = parse("SELECT 1 FROM t WHERE (a + b) * 2 > 3");
        assert_eq!(only_select(&q).where_predicates, 1);
    }

    #[test]
    fn subqueries_are_collected() {
        let q = parse("SELECT (SELECT MAX(x) FROM u) FROM t WHERE t.id IN (SELECT id FROM v WHERE v.k = 1)");
        let s = only_select(&q);
        assert_eq!(s.nested.len(), 2);
        let q = parse("SELECT * FROM (SELECT a FROM t) sub");
        let s = only_select(&q);
        assert!(matches!(&s.sources[0], Source::Derived { alias: Some(a), .. } if a == "SUB"));
        assert!(s.nested.is_empty());
    }

    #[test]
    fn ctes_and_set_operations() {
        let q = parse("WITH x AS (SELECT 1 a FROM t), y (b) AS (SELECT 2 FROM u) SELECT a FROM x UNION ALL SELECT b FROM y ORDER BY 1");
        assert_eq!(q.ctes.len(), 2);
        assert_eq!(q.ctes[1].name, "Y");
        assert_eq!(q.branches.len(), 2);
        let q = parse("(SELECT a FROM t) UNION (SELECT b FROM u) ORDER BY 1");
        assert_eq!(q.branches.len(), 2);
        assert!(q.has_order_by);
    }

    #[test]
    fn column_refs_skip_functions_aliases_and_literals() {
        let q = parse(
            "SELECT p.NAME, COUNT(*) AS cnt, upper(STATE_NAME) nm, DATE '2020-01-01', SYSDATE, s.* \
             FROM t p, s WHERE x = :bind AND CAST(y AS NUMBER) > 1",
        );
        let s = only_select(&q);
        let names: Vec<String> = s
            .column_refs
            .iter()
            .map(|r| match &r.qualifier {
                Some(q) => format!("{q}.{}", r.column),
                None => r.column.clone(),
            })
            .collect();
        assert_eq!(names, vec!["P.NAME", "STATE_NAME", "X", "Y"]);
        assert_eq!(s.output_aliases, vec!["CNT", "NM"]);
    }

    #[test]
    fn rejects_non_select_and_bad_structure() {
        let toks = tokenize("DELETE FROM t").unwrap();
        assert!(matches!(parse_statement(&toks), Err(SqlError::NotSelect { found, .. }) if found == "DELETE"));
        let toks = tokenize("SELECT (1 FROM t").unwrap();
        assert!(matches!(parse_statement(&toks), Err(SqlError::Unbalanced(_))));
        let toks = tokenize("SELECT 1 FROM t; SELECT 2 FROM u").unwrap();
        assert!(matches!(parse_statement(&toks), Err(SqlError::Syntax { .. })));
        let toks = tokenize("SELECT 1 FROM t;").unwrap();
        assert!(parse_statement(&toks).is_ok());
        let toks = tokenize("SELECT 1 FROM").unwrap();
        assert!(parse_statement(&toks).is_err());
    }
}
