//! Linear programs in the CPLEX LP text format (the subset with an
//! objective, named rows and explicit bounds for every variable).
//!
//! Output is deterministic: variables appear in index order in the bounds
//! section, rows in index order, and numbers use the shortest decimal form
//! that parses back to the same `f64`. Variable blocks are kept in
//! `\ block` comment lines so a parsed program matches the original.

use std::collections::HashMap;
use std::fmt::Write as _;

use mfbounds_core::lp::VarBlock;
use mfbounds_core::{LinearProgram, Relation, Sense};

const TERMS_PER_LINE: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn number(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

fn push_terms(out: &mut String, terms: impl Iterator<Item = (f64, String)>) {
    let mut count = 0;
    for (coef, name) in terms {
        if count > 0 && count % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if coef.is_sign_negative() { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {name}", number(coef.abs()));
        count += 1;
    }
    if count == 0 {
        out.push_str(" 0");
    }
}

/// Writes `lp`. Names must be LP identifiers (letters, digits, `_`, `.`,
/// not starting with a digit); zero coefficients are omitted.
pub fn write_lp(lp: &LinearProgram) -> Result<String, String> {
    for name in lp.var_names.iter().chain(&lp.row_names) {
        if !valid_name(name) {
            return Err(format!("`{name}` is not a valid LP identifier"));
        }
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.n_rows()];
    for (j, col) in lp.columns.iter().enumerate() {
        for &(r, a) in col {
            if a != 0.0 {
                rows[r].push((j, a));
            }
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "\\ {} variables, {} rows", lp.n_vars(), lp.n_rows());
    for b in &lp.blocks {
        let _ = writeln!(out, "\\ block {} {} {}", b.name, b.start, b.len);
    }
    out.push_str(match lp.sense {
        Sense::Minimize => "Minimize\n",
        Sense::Maximize => "Maximize\n",
    });
    out.push_str(" obj:");
    push_terms(
        &mut out,
        lp.costs.iter().enumerate().filter(|(_, &c)| c != 0.0).map(|(j, &c)| (c, lp.var_names[j].clone())),
    );
    out.push_str("\nSubject To\n");
    for (i, row) in rows.iter().enumerate() {
        let _ = write!(out, " {}:", lp.row_names[i]);
        push_terms(&mut out, row.iter().map(|&(j, a)| (a, lp.var_names[j].clone())));
        let rel = match lp.relations[i] {
            Relation::LessEq => "<=",
            Relation::Equal => "=",
            Relation::GreaterEq => ">=",
        };
        let _ = writeln!(out, " {rel} {}", number(lp.rhs[i]));
    }
    out.push_str("Bounds\n");
    for j in 0..lp.n_vars() {
        let _ = writeln!(out, " {} <= {} <= {}", number(lp.lower[j]), lp.var_names[j], number(lp.upper[j]));
    }
    out.push_str("End\n");
    Ok(out)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Preamble,
    Objective,
    Rows,
    Bounds,
    End,
}

struct Token<'a> {
    text: &'a str,
    line: usize,
}

fn parse_number(tok: &Token) -> Result<f64, ParseError> {
    let t = tok.text.to_ascii_lowercase();
    let v = match t.as_str() {
        "+inf" | "inf" | "+infinity" | "infinity" => f64::INFINITY,
        "-inf" | "-infinity" => f64::NEG_INFINITY,
        _ => t.parse::<f64>().map_err(|_| ParseError { line: tok.line, message: format!("expected a number, found `{}`", tok.text) })?,
    };
    Ok(v)
}

/// Parses `(sign coef name)*` up to a relation token or the end of the
/// slice; returns the terms and the index of the first unconsumed token.
fn parse_terms(toks: &[Token]) -> Result<(Vec<(f64, String)>, usize), ParseError> {
    let mut terms = Vec::new();
    let mut i = 0;
    while i < toks.len() && !matches!(toks[i].text, "<=" | ">=" | "=" | "<" | ">" | "=<" | "=>") {
        let mut sign = 1.0;
        if matches!(toks[i].text, "+" | "-") {
            if toks[i].text == "-" {
                sign = -1.0;
            }
            i += 1;
        }
        let tok = toks.get(i).ok_or_else(|| ParseError { line: toks[i - 1].line, message: "dangling sign".into() })?;
        let (coef, name) = if tok.text.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
            let c = parse_number(tok)?;
            i += 1;
            match toks.get(i) {
                Some(t) if valid_name(t.text) => {
                    i += 1;
                    (c, Some(t.text))
                }
                _ => (c, None),
            }
        } else if valid_name(tok.text) {
            i += 1;
            (1.0, Some(tok.text))
        } else {
            return Err(ParseError { line: tok.line, message: format!("unexpected `{}`", tok.text) });
        };
        match name {
            Some(n) => terms.push((sign * coef, n.to_string())),
            None if coef == 0.0 => {}
            None => return Err(ParseError { line: tok.line, message: "constant terms are not supported".into() }),
        }
    }
    Ok((terms, i))
}

fn split_label<'a>(toks: &'a [Token<'a>]) -> (Option<String>, &'a [Token<'a>]) {
    match toks.first() {
        Some(t) if t.text.ends_with(':') => (Some(t.text.trim_end_matches(':').to_string()), &toks[1..]),
        _ => (None, toks),
    }
}

/// A section keyword with its tokens and comment lines.
type Statement<'a> = (Section, Vec<Token<'a>>, Vec<(usize, String)>);

/// Name, terms, relation and right-hand side.
type Row = (String, Vec<(f64, String)>, Relation, f64);

/// Tokens of one statement: sections are keywords, rows end at their
/// right-hand side, bounds are one per line.
fn tokenize(text: &str) -> Vec<Statement<'_>> {
    let mut out: Vec<Statement> = vec![(Section::Preamble, Vec::new(), Vec::new())];
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let (body, comment) = match raw.find('\\') {
            Some(p) => (&raw[..p], Some(raw[p + 1..].trim())),
            None => (raw, None),
        };
        if let Some(c) = comment {
            out.last_mut().unwrap().2.push((line, c.to_string()));
        }
        let keyword = body.trim().to_ascii_lowercase();
        let section = match keyword.as_str() {
            "minimize" | "minimum" | "min" => Some(Section::Objective),
            "maximize" | "maximum" | "max" => Some(Section::Objective),
            "subject to" | "such that" | "st" | "s.t." => Some(Section::Rows),
            "bounds" | "bound" => Some(Section::Bounds),
            "end" => Some(Section::End),
            _ => None,
        };
        if let Some(s) = section {
            out.push((s, vec![Token { text: body.trim(), line }], Vec::new()));
            continue;
        }
        let current = out.last_mut().unwrap();
        for word in body.split_whitespace() {
            // Glue-free operators such as `x<=3` are split here.
            let mut rest = word;
            while !rest.is_empty() {
                let op = ["<=", ">=", "=<", "=>", "<", ">", "="].iter().find_map(|op| rest.find(op).map(|p| (p, op.len())));
                match op {
                    Some((0, len)) => {
                        current.1.push(Token { text: &rest[..len], line });
                        rest = &rest[len..];
                    }
                    Some((p, _)) => {
                        current.1.push(Token { text: &rest[..p], line });
                        rest = &rest[p..];
                    }
                    None => {
                        current.1.push(Token { text: rest, line });
                        rest = "";
                    }
                }
            }
        }
    }
    out
}

fn relation(tok: &Token) -> Result<Relation, ParseError> {
    match tok.text {
        "<=" | "<" | "=<" => Ok(Relation::LessEq),
        ">=" | ">" | "=>" => Ok(Relation::GreaterEq),
        "=" => Ok(Relation::Equal),
        other => Err(ParseError { line: tok.line, message: format!("expected a relation, found `{other}`") }),
    }
}

/// Parses the subset written by [`write_lp`]. Variables are numbered in
/// order of first appearance in the bounds section, then in the objective
/// and rows; a variable without a bound line gets `[0, +inf)`.
pub fn parse_lp(text: &str) -> Result<LinearProgram, ParseError> {
    let mut lp = LinearProgram::new(Sense::Minimize);
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut objective: Vec<(f64, String)> = Vec::new();
    let mut rows: Vec<Row> = Vec::new();
    let mut bounds: Vec<(String, f64, f64, usize)> = Vec::new();
    let mut blocks = Vec::new();
    let mut seen_sense = false;
    let mut ended = false;

    for (section, toks, comments) in tokenize(text) {
        for (line, c) in comments {
            let mut words = c.split_whitespace();
            if words.next() == Some("block") {
                let parts: Vec<&str> = words.collect();
                let bad = || ParseError { line, message: "malformed block comment".into() };
                if parts.len() != 3 {
                    return Err(bad());
                }
                blocks.push(VarBlock {
                    name: parts[0].to_string(),
                    start: parts[1].parse().map_err(|_| bad())?,
                    len: parts[2].parse().map_err(|_| bad())?,
                });
            }
        }
        if ended && !toks.is_empty() {
            return Err(ParseError { line: toks[0].line, message: "content after End".into() });
        }
        match section {
            Section::Preamble => {
                if let Some(t) = toks.first() {
                    return Err(ParseError { line: t.line, message: "expected Minimize or Maximize".into() });
                }
            }
            Section::Objective => {
                lp.sense = if toks[0].text.to_ascii_lowercase().starts_with("max") { Sense::Maximize } else { Sense::Minimize };
                seen_sense = true;
                let (_, body) = split_label(&toks[1..]);
                let (terms, used) = parse_terms(body)?;
                if used != body.len() {
                    return Err(ParseError { line: body[used].line, message: "relation in objective".into() });
                }
                objective = terms;
            }
            Section::Rows => {
                if !seen_sense {
                    return Err(ParseError { line: toks[0].line, message: "rows before objective".into() });
                }
                let mut rest = &toks[1..];
                while !rest.is_empty() {
                    let (label, body) = split_label(rest);
                    let line = rest[0].line;
                    let name = label.unwrap_or_else(|| format!("R{}", rows.len() + 1));
                    let (terms, used) = parse_terms(body)?;
                    let rel_tok = body.get(used).ok_or(ParseError { line, message: format!("row `{name}` has no relation") })?;
                    let rel = relation(rel_tok)?;
                    let rhs_tok = body.get(used + 1).ok_or(ParseError { line: rel_tok.line, message: format!("row `{name}` has no right-hand side") })?;
                    let rhs = parse_number(rhs_tok)?;
                    rows.push((name, terms, rel, rhs));
                    rest = &body[used + 2..];
                }
            }
            Section::Bounds => {
                let mut by_line: Vec<Vec<&Token>> = Vec::new();
                for t in &toks[1..] {
                    match by_line.last_mut() {
                        Some(v) if v[0].line == t.line => v.push(t),
                        _ => by_line.push(vec![t]),
                    }
                }
                for b in by_line {
                    let line = b[0].line;
                    let bad = || ParseError { line, message: "expected `lo <= name <= hi`, `name free` or a one-sided bound".into() };
                    let texts: Vec<&str> = b.iter().map(|t| t.text).collect();
                    let (name, lo, hi) = match texts.as_slice() {
                        [_, "<=", name, "<=", _] => (name.to_string(), parse_number(b[0])?, parse_number(b[4])?),
                        [name, free] if free.eq_ignore_ascii_case("free") => (name.to_string(), f64::NEG_INFINITY, f64::INFINITY),
                        [name, _, _] if valid_name(name) => {
                            let v = parse_number(b[2])?;
                            match relation(b[1])? {
                                Relation::LessEq => (name.to_string(), 0.0, v),
                                Relation::GreaterEq => (name.to_string(), v, f64::INFINITY),
                                Relation::Equal => (name.to_string(), v, v),
                            }
                        }
                        _ => return Err(bad()),
                    };
                    if !valid_name(&name) {
                        return Err(bad());
                    }
                    bounds.push((name, lo, hi, line));
                }
            }
            Section::End => ended = true,
        }
    }
    if !seen_sense {
        return Err(ParseError { line: 1, message: "no objective section".into() });
    }
    if !ended {
        return Err(ParseError { line: text.lines().count(), message: "missing End".into() });
    }

    fn var(lp: &mut LinearProgram, index: &mut HashMap<String, usize>, name: &str) -> usize {
        *index.entry(name.to_string()).or_insert_with(|| lp.add_var(name.to_string(), 0.0, 0.0, f64::INFINITY))
    }
    for (name, lo, hi, line) in &bounds {
        if index.contains_key(name) {
            return Err(ParseError { line: *line, message: format!("duplicate bound for `{name}`") });
        }
        let j = var(&mut lp, &mut index, name);
        lp.lower[j] = *lo;
        lp.upper[j] = *hi;
    }
    for (c, name) in &objective {
        let j = var(&mut lp, &mut index, name);
        lp.costs[j] += c;
    }
    for (name, terms, rel, rhs) in rows {
        let r = lp.add_row(name, rel, rhs);
        for (a, v) in terms {
            let j = var(&mut lp, &mut index, &v);
            match lp.columns[j].last_mut() {
                Some((row, coef)) if *row == r => *coef += a,
                _ => lp.columns[j].push((r, a)),
            }
        }
    }
    for col in &mut lp.columns {
        col.retain(|&(_, a)| a != 0.0);
    }
    lp.blocks = blocks;
    Ok(lp)
}
