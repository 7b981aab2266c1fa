//! SQL surface scanner: extracts base-table references from FROM/JOIN
//! clauses at every nesting level.
//!
//! This is a token scanner, not a grammar. It understands just enough of
//! the JOB/CEB/TPC-DS dialect (comma join lists, explicit `JOIN .. ON`,
//! derived tables, `WITH` lists, set operators, subqueries in any clause)
//! to count table references. Anything structurally surprising is an
//! error, never a guess.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    /// Identifier, lowercased. Keywords are identifiers classified at the
    /// use site.
    Ident(String),
    Number,
    Str,
    LParen,
    RParen,
    Comma,
    Dot,
    Semi,
    Op,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

/// All table references (one entry per occurrence, aliases counted
/// separately) plus the names defined by WITH clauses.
#[derive(Debug, Default)]
pub(crate) struct SqlRefs {
    pub refs: Vec<String>,
    pub cte_names: BTreeSet<String>,
}

pub(crate) fn extract_refs(sql: &str) -> Result<SqlRefs> {
    let tokens = tokenize(sql)?;
    let cte_names = collect_cte_names(&tokens, sql)?;
    let mut refs = Vec::new();
    scan_range(&tokens, 0, tokens.len(), &mut refs, sql)?;
    Ok(SqlRefs { refs, cte_names })
}

fn snippet(sql: &str, offset: usize) -> String {
    let start = offset.min(sql.len());
    let end = (start + 40).min(sql.len());
    // keep the span on valid char boundaries
    let mut s = start;
    while s > 0 && !sql.is_char_boundary(s) {
        s -= 1;
    }
    let mut e = end;
    while e < sql.len() && !sql.is_char_boundary(e) {
        e += 1;
    }
    sql[s..e].split_whitespace().collect::<Vec<_>>().join(" ")
}

fn err(sql: &str, offset: usize, detail: impl Into<String>) -> Error {
    Error::SqlAnalysis {
        span: snippet(sql, offset),
        detail: detail.into(),
    }
}

fn tokenize(sql: &str) -> Result<Vec<Token>> {
    let bytes = sql.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'-' if bytes.get(i + 1) == Some(&b'-') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let start = i;
                i += 2;
                loop {
                    if i + 1 >= bytes.len() {
                        return Err(err(sql, start, "unterminated block comment"));
                    }
                    if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                        i += 2;
                        break;
                    }
                    i += 1;
                }
            }
            b'\'' => {
                let start = i;
                i += 1;
                loop {
                    if i >= bytes.len() {
                        return Err(err(sql, start, "unterminated string literal"));
                    }
                    if bytes[i] == b'\'' {
                        // '' escapes a quote
                        if bytes.get(i + 1) == Some(&b'\'') {
                            i += 2;
                            continue;
                        }
                        i += 1;
                        break;
                    }
                    i += 1;
                }
                tokens.push(Token {
                    tok: Tok::Str,
                    offset: start,
                });
            }
            b'"' | b'`' => {
                let quote = b;
                let start = i;
                i += 1;
                let name_start = i;
                while i < bytes.len() && bytes[i] != quote {
                    i += 1;
                }
                if i >= bytes.len() {
                    return Err(err(sql, start, "unterminated quoted identifier"));
                }
                let name = sql[name_start..i].to_ascii_lowercase();
                i += 1;
                tokens.push(Token {
                    tok: Tok::Ident(name),
                    offset: start,
                });
            }
            b'(' => {
                tokens.push(Token {
                    tok: Tok::LParen,
                    offset: i,
                });
                i += 1;
            }
            b')' => {
                tokens.push(Token {
                    tok: Tok::RParen,
                    offset: i,
                });
                i += 1;
            }
            b',' => {
                tokens.push(Token {
                    tok: Tok::Comma,
                    offset: i,
                });
                i += 1;
            }
            b';' => {
                tokens.push(Token {
                    tok: Tok::Semi,
                    offset: i,
                });
                i += 1;
            }
            b'.' => {
                tokens.push(Token {
                    tok: Tok::Dot,
                    offset: i,
                });
                i += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'.' || bytes[i] == b'_')
                {
                    i += 1;
                }
                tokens.push(Token {
                    tok: Tok::Number,
                    offset: start,
                });
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$')
                {
                    i += 1;
                }
                let name = sql[start..i].to_ascii_lowercase();
                tokens.push(Token {
                    tok: Tok::Ident(name),
                    offset: start,
                });
            }
            _ => {
                tokens.push(Token {
                    tok: Tok::Op,
                    offset: i,
                });
                i += 1;
            }
        }
    }
    Ok(tokens)
}

fn is_ident(tokens: &[Token], i: usize, word: &str) -> bool {
    matches!(tokens.get(i), Some(Token { tok: Tok::Ident(w), .. }) if w == word)
}

fn ident_at(tokens: &[Token], i: usize) -> Option<&str> {
    match tokens.get(i) {
        Some(Token {
            tok: Tok::Ident(w), ..
        }) => Some(w.as_str()),
        _ => None,
    }
}

/// Keywords that end a FROM list.
const CLAUSE_ENDERS: &[&str] = &[
    "where",
    "group",
    "having",
    "order",
    "window",
    "limit",
    "offset",
    "fetch",
    "union",
    "intersect",
    "except",
];

/// Keywords that introduce an explicit join between table factors.
const JOIN_INTRO: &[&str] = &[
    "inner", "left", "right", "full", "cross", "natural", "outer",
];

/// Identifiers that can never be a table alias or a table name.
fn is_reserved(word: &str) -> bool {
    CLAUSE_ENDERS.contains(&word)
        || JOIN_INTRO.contains(&word)
        || matches!(
            word,
            "select"
                | "from"
                | "with"
                | "join"
                | "on"
                | "using"
                | "as"
                | "and"
                | "or"
                | "not"
                | "in"
                | "exists"
                | "between"
                | "like"
                | "case"
                | "when"
                | "then"
                | "else"
                | "end"
                | "by"
                | "asc"
                | "desc"
                | "all"
                | "distinct"
                | "is"
                | "null"
        )
}

/// Builtins whose parenthesized argument lists must not be scanned for
/// FROM (e.g. `extract(day from ts)` uses FROM as a separator).
const SKIP_CALLS: &[&str] = &["extract", "substring", "trim", "position", "overlay"];

fn matching_paren(tokens: &[Token], open: usize, sql: &str) -> Result<usize> {
    debug_assert!(matches!(tokens[open].tok, Tok::LParen));
    let mut depth = 0usize;
    for (i, t) in tokens.iter().enumerate().skip(open) {
        match t.tok {
            Tok::LParen => depth += 1,
            Tok::RParen => {
                depth -= 1;
                if depth == 0 {
                    return Ok(i);
                }
            }
            _ => {}
        }
    }
    Err(err(sql, tokens[open].offset, "unbalanced parentheses"))
}

/// Collect the names defined by WITH clauses anywhere in the statement.
fn collect_cte_names(tokens: &[Token], sql: &str) -> Result<BTreeSet<String>> {
    let mut names = BTreeSet::new();
    let mut i = 0;
    while i < tokens.len() {
        if !is_ident(tokens, i, "with") {
            i += 1;
            continue;
        }
        i += 1;
        if is_ident(tokens, i, "recursive") {
            i += 1;
        }
        loop {
            let Some(name) = ident_at(tokens, i) else {
                return Err(err(
                    sql,
                    tokens.get(i).map_or(sql.len(), |t| t.offset),
                    "expected a name after WITH",
                ));
            };
            names.insert(name.to_string());
            i += 1;
            // optional column list
            if matches!(tokens.get(i).map(|t| &t.tok), Some(Tok::LParen)) {
                i = matching_paren(tokens, i, sql)? + 1;
            }
            if !is_ident(tokens, i, "as") {
                return Err(err(
                    sql,
                    tokens.get(i).map_or(sql.len(), |t| t.offset),
                    "expected AS in WITH clause",
                ));
            }
            i += 1;
            if !matches!(tokens.get(i).map(|t| &t.tok), Some(Tok::LParen)) {
                return Err(err(
                    sql,
                    tokens.get(i).map_or(sql.len(), |t| t.offset),
                    "expected ( after AS in WITH clause",
                ));
            }
            i = matching_paren(tokens, i, sql)? + 1;
            if matches!(tokens.get(i).map(|t| &t.tok), Some(Tok::Comma)) {
                i += 1;
                continue;
            }
            break;
        }
    }
    Ok(names)
}

/// Scan `tokens[start..end]` for FROM lists, descending into parentheses.
fn scan_range(
    tokens: &[Token],
    start: usize,
    end: usize,
    refs: &mut Vec<String>,
    sql: &str,
) -> Result<()> {
    let mut i = start;
    while i < end {
        match &tokens[i].tok {
            Tok::Ident(w) if SKIP_CALLS.contains(&w.as_str()) => {
                if matches!(tokens.get(i + 1).map(|t| &t.tok), Some(Tok::LParen)) {
                    i = matching_paren(tokens, i + 1, sql)? + 1;
                } else {
                    i += 1;
                }
            }
            Tok::Ident(w) if w == "from" => {
                i = scan_from_list(tokens, i + 1, end, refs, sql)?;
            }
            Tok::LParen => {
                let close = matching_paren(tokens, i, sql)?;
                scan_range(tokens, i + 1, close, refs, sql)?;
                i = close + 1;
            }
            _ => i += 1,
        }
    }
    Ok(())
}

/// Parse one FROM list starting at `i`. Returns the index of the token
/// that ended the list (a clause keyword, `)`, `;`, or `end`).
fn scan_from_list(
    tokens: &[Token],
    mut i: usize,
    end: usize,
    refs: &mut Vec<String>,
    sql: &str,
) -> Result<usize> {
    loop {
        // --- one table factor ---
        match tokens.get(i).filter(|_| i < end).map(|t| &t.tok) {
            Some(Tok::LParen) => {
                let close = matching_paren(tokens, i, sql)?;
                // subquery vs. parenthesized join tree
                if is_ident(tokens, i + 1, "select") || is_ident(tokens, i + 1, "with") {
                    scan_range(tokens, i + 1, close, refs, sql)?;
                } else {
                    scan_from_list(tokens, i + 1, close, refs, sql)?;
                }
                i = close + 1;
            }
            Some(Tok::Ident(w)) if !is_reserved(w) => {
                let mut name = w.clone();
                let at = i;
                i += 1;
                while i < end && matches!(tokens[i].tok, Tok::Dot) {
                    let Some(part) = ident_at(tokens, i + 1) else {
                        return Err(err(sql, tokens[i].offset, "dangling `.` in table name"));
                    };
                    name.push('.');
                    name.push_str(part);
                    i += 2;
                }
                if i < end && matches!(tokens[i].tok, Tok::LParen) {
                    return Err(err(
                        sql,
                        tokens[at].offset,
                        "table functions are not supported",
                    ));
                }
                refs.push(name);
            }
            _ => {
                let offset = tokens.get(i).map_or(sql.len(), |t| t.offset);
                return Err(err(sql, offset, "expected a table reference in FROM"));
            }
        }

        // --- optional alias ---
        if i < end && is_ident(tokens, i, "as") {
            if ident_at(tokens, i + 1).is_none() {
                return Err(err(sql, tokens[i].offset, "expected alias after AS"));
            }
            i += 2;
        } else if let Some(w) = ident_at(tokens, i).filter(|_| i < end) {
            if !is_reserved(w) {
                i += 1;
            }
        }

        // --- connectors until the next factor or the end of the list ---
        loop {
            if i >= end {
                return Ok(i);
            }
            match &tokens[i].tok {
                Tok::Comma => {
                    i += 1;
                    break;
                }
                Tok::RParen | Tok::Semi => return Ok(i),
                Tok::Ident(w) if w == "join" => {
                    i += 1;
                    break;
                }
                Tok::Ident(w) if JOIN_INTRO.contains(&w.as_str()) => i += 1,
                Tok::Ident(w) if w == "on" => {
                    i = skip_condition(tokens, i + 1, end, refs, sql)?;
                }
                Tok::Ident(w) if w == "using" => {
                    if !matches!(tokens.get(i + 1).map(|t| &t.tok), Some(Tok::LParen)) {
                        return Err(err(sql, tokens[i].offset, "expected ( after USING"));
                    }
                    i = matching_paren(tokens, i + 1, sql)? + 1;
                }
                Tok::Ident(w) if CLAUSE_ENDERS.contains(&w.as_str()) => return Ok(i),
                _ => {
                    return Err(err(
                        sql,
                        tokens[i].offset,
                        "unexpected token in FROM clause",
                    ))
                }
            }
        }
    }
}

/// Skip an ON condition. Stops at (and returns the index of) the token
/// that terminates it: a comma or join keyword at depth zero, a clause
/// ender, `)`, `;`, or `end`. Parenthesized subexpressions are scanned
/// for nested FROMs.
fn skip_condition(
    tokens: &[Token],
    mut i: usize,
    end: usize,
    refs: &mut Vec<String>,
    sql: &str,
) -> Result<usize> {
    while i < end {
        match &tokens[i].tok {
            Tok::LParen => {
                let close = matching_paren(tokens, i, sql)?;
                scan_range(tokens, i + 1, close, refs, sql)?;
                i = close + 1;
            }
            Tok::Comma | Tok::RParen | Tok::Semi => return Ok(i),
            Tok::Ident(w)
                if w == "join"
                    || JOIN_INTRO.contains(&w.as_str())
                    || CLAUSE_ENDERS.contains(&w.as_str()) =>
            {
                return Ok(i)
            }
            _ => i += 1,
        }
    }
    Ok(i)
}
