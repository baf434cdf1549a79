//! Reader for the struct-style MATPOWER `.m` case subset.
//!
//! Only `mpc.<name> = ...;` assignments are interpreted. Numeric matrices
//! are collected by name; cell arrays, strings and everything outside an
//! `mpc.` assignment (the `function` line, comments) are skipped.

use std::collections::{HashMap, HashSet};

use super::{BusKind, CaseBranch, CaseBus, CaseGen, NetworkCase};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str,
    Sym(char),
    Newline,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    for (li, raw) in text.lines().enumerate() {
        let line = li + 1;
        let chars: Vec<char> = raw.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let column = i + 1;
            let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line, column });
            match c {
                '%' => break,
                c if c.is_whitespace() => i += 1,
                '\'' | '"' => {
                    let close = chars[i + 1..]
                        .iter()
                        .position(|&x| x == c)
                        .ok_or_else(|| Error::malformed(line, column, "unterminated string"))?;
                    push(&mut out, Tok::Str);
                    i += close + 2;
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let start = i;
                    while i < chars.len()
                        && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.')
                    {
                        i += 1;
                    }
                    push(&mut out, Tok::Ident(chars[start..i].iter().collect()));
                }
                c if c.is_ascii_digit()
                    || ((c == '-' || c == '+' || c == '.')
                        && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit() || *n == '.')) =>
                {
                    let start = i;
                    i += 1;
                    while i < chars.len() {
                        let d = chars[i];
                        let exp_sign = (d == '-' || d == '+')
                            && matches!(chars[i - 1], 'e' | 'E');
                        if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                            i += 1;
                        } else {
                            break;
                        }
                    }
                    let s: String = chars[start..i].iter().collect();
                    let v = s.parse::<f64>().map_err(|_| {
                        Error::malformed(line, column, format!("non-numeric cell '{s}'"))
                    })?;
                    push(&mut out, Tok::Num(v));
                }
                _ => {
                    push(&mut out, Tok::Sym(c));
                    i += 1;
                }
            }
        }
        out.push(Token {
            tok: Tok::Newline,
            line,
            column: chars.len() + 1,
        });
    }
    Ok(out)
}

struct Matrix {
    rows: Vec<(usize, usize, Vec<f64>)>,
}

enum Value {
    Scalar(f64),
    Matrix(Matrix),
    Other,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map_or(self.end, |t| (t.line, t.column))
    }

    fn skip_to_line_end(&mut self) {
        while let Some(t) = self.next() {
            if t.tok == Tok::Newline {
                break;
            }
        }
    }

    fn skip_newlines(&mut self) {
        while self.peek().is_some_and(|t| t.tok == Tok::Newline) {
            self.pos += 1;
        }
    }

    fn assignments(&mut self) -> Result<HashMap<String, (usize, usize, Value)>> {
        let mut out = HashMap::new();
        while let Some(t) = self.next() {
            let Tok::Ident(name) = &t.tok else {
                if t.tok != Tok::Newline {
                    self.skip_to_line_end();
                }
                continue;
            };
            let Some(field) = name.strip_prefix("mpc.") else {
                self.skip_to_line_end();
                continue;
            };
            if !self.peek().is_some_and(|t| t.tok == Tok::Sym('=')) {
                self.skip_to_line_end();
                continue;
            }
            self.pos += 1;
            let value = self.value()?;
            out.insert(field.to_string(), (t.line, t.column, value));
        }
        Ok(out)
    }

    fn value(&mut self) -> Result<Value> {
        self.skip_newlines();
        let Some(t) = self.next() else {
            let (l, c) = self.end;
            return Err(Error::malformed(l, c, "assignment without a value"));
        };
        match t.tok {
            Tok::Num(v) => {
                self.skip_to_line_end();
                Ok(Value::Scalar(v))
            }
            Tok::Sym('[') => self.matrix().map(Value::Matrix),
            Tok::Sym('{') => {
                let mut depth = 1;
                while depth > 0 {
                    match self.next() {
                        Some(Token { tok: Tok::Sym('{'), .. }) => depth += 1,
                        Some(Token { tok: Tok::Sym('}'), .. }) => depth -= 1,
                        Some(_) => {}
                        None => {
                            return Err(Error::malformed(t.line, t.column, "unterminated cell array"))
                        }
                    }
                }
                self.skip_to_line_end();
                Ok(Value::Other)
            }
            _ => {
                self.skip_to_line_end();
                Ok(Value::Other)
            }
        }
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let mut rows = Vec::new();
        let mut row: Vec<f64> = Vec::new();
        let mut row_start = self.here();
        loop {
            let Some(t) = self.next() else {
                let (l, c) = self.end;
                return Err(Error::malformed(l, c, "unterminated matrix"));
            };
            match t.tok {
                Tok::Num(v) => {
                    if row.is_empty() {
                        row_start = (t.line, t.column);
                    }
                    row.push(v);
                }
                Tok::Ident(ref s) if s.eq_ignore_ascii_case("inf") => {
                    if row.is_empty() {
                        row_start = (t.line, t.column);
                    }
                    row.push(f64::INFINITY);
                }
                Tok::Sym('-') if matches!(self.peek(), Some(Token { tok: Tok::Ident(s), .. }) if s.eq_ignore_ascii_case("inf")) => {
                    self.pos += 1;
                    if row.is_empty() {
                        row_start = (t.line, t.column);
                    }
                    row.push(f64::NEG_INFINITY);
                }
                Tok::Sym(';') | Tok::Newline => {
                    if !row.is_empty() {
                        rows.push((row_start.0, row_start.1, std::mem::take(&mut row)));
                    }
                }
                Tok::Sym(',') => {}
                Tok::Sym(']') => {
                    if !row.is_empty() {
                        rows.push((row_start.0, row_start.1, row));
                    }
                    self.skip_to_line_end();
                    return Ok(Matrix { rows });
                }
                Tok::Ident(s) => {
                    return Err(Error::malformed(t.line, t.column, format!("non-numeric cell '{s}'")))
                }
                Tok::Str => return Err(Error::malformed(t.line, t.column, "non-numeric cell (string)")),
                Tok::Sym(c) => {
                    return Err(Error::malformed(t.line, t.column, format!("non-numeric cell '{c}'")))
                }
            }
        }
    }
}

fn required<'a>(
    values: &'a HashMap<String, (usize, usize, Value)>,
    name: &str,
    end: (usize, usize),
) -> Result<(usize, usize, &'a Matrix)> {
    match values.get(name) {
        Some((l, c, Value::Matrix(m))) => Ok((*l, *c, m)),
        Some((l, c, _)) => Err(Error::malformed(*l, *c, format!("mpc.{name} must be a matrix"))),
        None => Err(Error::malformed(end.0, end.1, format!("missing mpc.{name}"))),
    }
}

fn check_columns(m: &Matrix, name: &str, min: usize) -> Result<()> {
    for (l, c, row) in &m.rows {
        if row.len() < min {
            return Err(Error::malformed(
                *l,
                *c,
                format!("mpc.{name} row has {} columns, at least {min} required", row.len()),
            ));
        }
    }
    Ok(())
}

fn as_id(v: f64, line: usize, column: usize) -> Result<usize> {
    if v.fract() != 0.0 || v < 0.0 || !v.is_finite() {
        return Err(Error::malformed(line, column, format!("invalid bus id {v}")));
    }
    Ok(v as usize)
}

/// Parses a MATPOWER case into per-unit quantities on the case base.
///
/// Out-of-service branches and generators are dropped, as are isolated
/// (type 4) buses together with anything attached to them.
pub fn parse_matpower(text: &str) -> Result<NetworkCase> {
    let toks = lex(text)?;
    let end = toks.last().map_or((1, 1), |t| (t.line, t.column));
    let values = Parser { toks, pos: 0, end }.assignments()?;

    let base_power = match values.get("baseMVA") {
        Some((_, _, Value::Scalar(v))) if *v > 0.0 && v.is_finite() => *v,
        Some((l, c, _)) => {
            return Err(Error::malformed(*l, *c, "mpc.baseMVA must be a positive scalar"))
        }
        None => return Err(Error::malformed(end.0, end.1, "missing mpc.baseMVA")),
    };

    let (_, _, bus_m) = required(&values, "bus", end)?;
    check_columns(bus_m, "bus", 13)?;
    let (_, _, branch_m) = required(&values, "branch", end)?;
    check_columns(branch_m, "branch", 13)?;
    let gen_m = match values.get("gen") {
        Some((_, _, Value::Matrix(m))) => {
            check_columns(m, "gen", 10)?;
            Some(m)
        }
        Some((l, c, _)) => return Err(Error::malformed(*l, *c, "mpc.gen must be a matrix")),
        None => None,
    };

    let mut buses = Vec::new();
    let mut seen = HashSet::new();
    let mut isolated = HashSet::new();
    let mut slack_at = None;
    for (l, c, r) in &bus_m.rows {
        let id = as_id(r[0], *l, *c)?;
        if !seen.insert(id) {
            return Err(Error::malformed(*l, *c, format!("duplicate bus id {id}")));
        }
        let kind = match r[1] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Slack,
            4 => {
                isolated.insert(id);
                continue;
            }
            t => return Err(Error::malformed(*l, *c, format!("unknown bus type {t}"))),
        };
        if kind == BusKind::Slack {
            if slack_at.is_some() {
                return Err(Error::malformed(*l, *c, "more than one slack bus"));
            }
            slack_at = Some((*l, *c));
        }
        buses.push(CaseBus {
            id,
            kind,
            p_load: r[2] / base_power,
            q_load: r[3] / base_power,
            shunt_g: r[4] / base_power,
            shunt_b: r[5] / base_power,
            vm: r[7],
            va: r[8],
        });
    }
    if slack_at.is_none() {
        return Err(Error::malformed(end.0, end.1, "no slack bus (type 3) in mpc.bus"));
    }

    let mut branches = Vec::new();
    for (l, c, r) in &branch_m.rows {
        if r[10] == 0.0 {
            continue;
        }
        let from = as_id(r[0], *l, *c)?;
        let to = as_id(r[1], *l, *c)?;
        if isolated.contains(&from) || isolated.contains(&to) {
            continue;
        }
        for id in [from, to] {
            if !seen.contains(&id) {
                return Err(Error::malformed(*l, *c, format!("branch references unknown bus {id}")));
            }
        }
        if r[2] < 0.0 {
            return Err(Error::malformed(*l, *c, "branch resistance is negative"));
        }
        if r[2] == 0.0 && r[3] == 0.0 {
            return Err(Error::malformed(*l, *c, "branch has zero impedance (r = x = 0)"));
        }
        branches.push(CaseBranch {
            from,
            to,
            r: r[2],
            x: r[3],
            total_charging_b: r[4],
            tap_ratio: (r[8] != 0.0).then_some(r[8]),
            phase_shift: r[9],
        });
    }

    let mut gens = Vec::new();
    for (l, c, r) in gen_m.map_or(&[][..], |m| &m.rows[..]) {
        if r[7] <= 0.0 {
            continue;
        }
        let bus = as_id(r[0], *l, *c)?;
        if isolated.contains(&bus) {
            continue;
        }
        if !seen.contains(&bus) {
            return Err(Error::malformed(*l, *c, format!("generator at unknown bus {bus}")));
        }
        gens.push(CaseGen {
            bus,
            pg: r[1] / base_power,
            qg: r[2] / base_power,
            qmax: r[3] / base_power,
            qmin: r[4] / base_power,
        });
    }

    Ok(NetworkCase {
        base_power,
        buses,
        branches,
        gens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "function mpc = tiny
% a comment with 'quotes'
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1.06\t0\t0\t1\t1.06\t0.94;
\t2\t1\t50\t20\t0\t10\t1\t1\t-3\t0\t1\t1.06\t0.94; % trailing
];
mpc.gen = [
\t1\t60\t5\t50\t-50\t1.06\t100\t1\t100\t0;
\t2\t10\t5\t50\t-50\t1\t100\t0\t100\t0;
];
mpc.branch = [
\t1\t2\t0.01\t0.1\t0.02\t0\t0\t0\t0\t0\t1\t-360\t360;
\t1\t2\t0.01\t0.1\t0.02\t0\t0\t0\t0\t0\t0\t-360\t360;
];
mpc.bus_name = {
\t'Alpha';
\t'Beta';
};
";

    #[test]
    fn parses_and_converts_to_per_unit() {
        let case = parse_matpower(TINY).unwrap();
        assert_eq!(case.base_power, 100.0);
        assert_eq!(case.buses.len(), 2);
        assert_eq!(case.buses[1].p_load, 0.5);
        assert_eq!(case.buses[1].shunt_b, 0.1);
        assert_eq!(case.buses[1].va, -3.0);
        assert_eq!(case.branches.len(), 1, "off-status branch is dropped");
        assert_eq!(case.branches[0].tap_ratio, None);
        assert_eq!(case.gens.len(), 1, "off-status generator is dropped");
        assert_eq!(case.gens[0].qmin, -0.5);
        assert_eq!(case.slack().id, 1);
    }

    #[test]
    fn empty_input_reports_missing_base() {
        match parse_matpower("") {
            Err(Error::MalformedCase { message, .. }) => assert_eq!(message, "missing mpc.baseMVA"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs_carry_positions() {
        let bad = TINY.replace("\t50\t20", "\tabc\t20");
        match parse_matpower(&bad) {
            Err(Error::MalformedCase { line, message, .. }) => {
                assert_eq!(line, 7);
                assert!(message.contains("non-numeric"));
            }
            other => panic!("unexpected {other:?}"),
        }

        let dup = TINY.replace("\t2\t1\t50", "\t1\t1\t50");
        assert!(matches!(parse_matpower(&dup), Err(Error::MalformedCase { line: 7, .. })));

        let no_slack = TINY.replace("\t1\t3\t0", "\t1\t1\t0");
        assert!(matches!(parse_matpower(&no_slack), Err(Error::MalformedCase { .. })));

        let no_branch = TINY.replace("mpc.branch", "mpc.branches");
        match parse_matpower(&no_branch) {
            Err(Error::MalformedCase { message, .. }) => assert_eq!(message, "missing mpc.branch"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_impedance_branch_is_rejected() {
        let jumper = TINY.replacen("0.01\t0.1", "0\t0", 1);
        match parse_matpower(&jumper) {
            Err(Error::MalformedCase { line, message, .. }) => {
                assert_eq!(line, 14);
                assert!(message.contains("zero impedance"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_rows_are_rejected() {
        let short = TINY.replace("\t1\t1.06\t0.94;\n\t2", "\t1;\n\t2");
        assert!(matches!(parse_matpower(&short), Err(Error::MalformedCase { line: 6, .. })));
    }
}
