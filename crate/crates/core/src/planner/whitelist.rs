//! Whitelist files: the query shapes an application is allowed to issue.
//!
//! ```text
//! # comments start with '#'
//! columns User Game Date:range:8
//! read  * $game $date
//! write $user $game $date
//! write $user * *
//! ```
//!
//! The `columns` line comes first and names every column; `name:range:W`
//! marks an integer column of width `W` bits (1 to 32). Each `read` or
//! `write` line holds one token per column: `*` leaves the column
//! unconstrained and `$name` binds it to a value supplied at run time. Slot
//! names are labels only; two slots may receive equal values.

use serde::{Deserialize, Serialize};

use super::trim::{PatternTemplate, TemplateToken};
use super::PlanError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range_bits: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Whitelist {
    pub columns: Vec<ColumnSpec>,
    pub reads: Vec<PatternTemplate>,
    pub writes: Vec<PatternTemplate>,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> PlanError {
    PlanError::Whitelist {
        line,
        column,
        message: message.into(),
    }
}

/// Whitespace-separated words with their 1-based starting columns.
fn words(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, &line[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, &line[s..]));
    }
    out.into_iter()
        .map(|(byte, w)| (line[..byte].chars().count() + 1, w))
        .collect()
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_column(line: usize, col: usize, word: &str) -> Result<ColumnSpec, PlanError> {
    let mut parts = word.split(':');
    let name = parts.next().unwrap_or_default();
    if !is_ident(name) {
        return Err(err(line, col, format!("invalid column name `{name}`")));
    }
    let range_bits = match (parts.next(), parts.next(), parts.next()) {
        (None, _, _) => None,
        (Some("range"), Some(w), None) => {
            let bits: u32 = w
                .parse()
                .map_err(|_| err(line, col, format!("invalid range width `{w}`")))?;
            if !(1..=32).contains(&bits) {
                return Err(err(line, col, format!("range width {bits} is outside 1..=32")));
            }
            Some(bits)
        }
        _ => return Err(err(line, col, format!("unknown column annotation in `{word}`"))),
    };
    Ok(ColumnSpec {
        name: name.to_owned(),
        range_bits,
    })
}

pub fn parse_whitelist(text: &str) -> Result<Whitelist, PlanError> {
    let mut wl = Whitelist::default();
    let mut have_columns = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or_default();
        let ws = words(content);
        let Some(&(col, directive)) = ws.first() else { continue };
        match directive {
            "columns" => {
                if have_columns {
                    return Err(err(line, col, "duplicate `columns` line"));
                }
                if ws.len() == 1 {
                    return Err(err(line, col + directive.len(), "`columns` needs at least one name"));
                }
                for &(c, w) in &ws[1..] {
                    let spec = parse_column(line, c, w)?;
                    if wl.columns.iter().any(|s| s.name == spec.name) {
                        return Err(err(line, c, format!("duplicate column `{}`", spec.name)));
                    }
                    wl.columns.push(spec);
                }
                have_columns = true;
            }
            "read" | "write" => {
                if !have_columns {
                    return Err(err(line, col, "templates must follow the `columns` line"));
                }
                let tokens = &ws[1..];
                if tokens.len() != wl.columns.len() {
                    let at = tokens
                        .get(wl.columns.len())
                        .map_or(content.chars().count() + 1, |t| t.0);
                    return Err(err(
                        line,
                        at,
                        format!("expected {} tokens, found {}", wl.columns.len(), tokens.len()),
                    ));
                }
                let template = tokens
                    .iter()
                    .map(|&(c, t)| match t {
                        "*" => Ok(TemplateToken::Star),
                        _ if t.starts_with('$') && is_ident(&t[1..]) => Ok(TemplateToken::Bound),
                        _ => Err(err(line, c, format!("expected `*` or `$name`, found `{t}`"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let template = PatternTemplate(template);
                if directive == "read" {
                    wl.reads.push(template);
                } else {
                    wl.writes.push(template);
                }
            }
            other => return Err(err(line, col, format!("unknown directive `{other}`"))),
        }
    }
    if !have_columns {
        return Err(err(1, 1, "missing `columns` line"));
    }
    Ok(wl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use TemplateToken::{Bound, Star};

    #[test]
    fn parses_played_whitelist() {
        let wl = parse_whitelist(
            "# played\ncolumns User Game Date:range:8\n\nread * $g $d   # by game\nwrite $u $g $d\nwrite $u * *\n",
        )
        .unwrap();
        assert_eq!(wl.columns[2].range_bits, Some(8));
        assert_eq!(wl.reads, vec![PatternTemplate(vec![Star, Bound, Bound])]);
        assert_eq!(wl.writes.len(), 2);
    }

    #[test]
    fn reports_positions() {
        let cases = [
            ("read * *", 1, 1),
            ("columns A B\nread * %x", 2, 8),
            ("columns A B\nwrite *", 2, 8),
            ("columns A B\nwrite * * *", 2, 11),
            ("columns A A", 1, 11),
            ("columns A B:range:40", 1, 11),
            ("columns A\nupdate *", 2, 1),
            ("", 1, 1),
        ];
        for (text, line, column) in cases {
            match parse_whitelist(text) {
                Err(PlanError::Whitelist { line: l, column: c, .. }) => {
                    assert_eq!((l, c), (line, column), "{text:?}")
                }
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }
}
