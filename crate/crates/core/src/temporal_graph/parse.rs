use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::temporal_graph::TemporalEdge;

/// Field delimiter of the edge-list input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Delimiter {
    #[default]
    Comma,
    Tab,
}

impl Delimiter {
    fn as_char(self) -> char {
        match self {
            Delimiter::Comma => ',',
            Delimiter::Tab => '\t',
        }
    }
}

/// Shape of one edge-list record: `sender,receiver,timestamp,value` with an
/// optional fifth `slice` column and an optional header row. Lines starting
/// with `#` are comments.
#[derive(Clone, Copy, Debug, Default)]
pub struct EdgeFormat {
    pub delimiter: Delimiter,
    pub has_header: bool,
    pub explicit_slice: bool,
}

/// Parse text records into edges, preserving input order.
///
/// Malformed records do not abort at the first problem: every offending
/// line is collected and reported together, each with its 1-based line
/// number. Empty input yields an empty list.
pub fn parse_edge_stream<I, S>(lines: I, format: EdgeFormat) -> Result<Vec<TemporalEdge>>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut edges = Vec::new();
    let mut issues = Vec::new();
    let mut header_pending = format.has_header;
    let expected_fields = if format.explicit_slice { 5 } else { 4 };

    for (idx, line) in lines.into_iter().enumerate() {
        let line_no = idx + 1;
        let text = line.as_ref().trim_end_matches(['\r', '\n']);
        let trimmed = text.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        match parse_record(text, format, expected_fields) {
            Ok(edge) => edges.push(edge),
            Err(msg) => issues.push(format!("line {line_no}: {msg}")),
        }
    }

    if issues.is_empty() {
        Ok(edges)
    } else {
        Err(Error::Parse(issues))
    }
}

fn parse_record(
    text: &str,
    format: EdgeFormat,
    expected_fields: usize,
) -> std::result::Result<TemporalEdge, String> {
    let fields: Vec<&str> = text.split(format.delimiter.as_char()).collect();
    if fields.len() != expected_fields {
        return Err(format!(
            "expected {expected_fields} fields, found {}",
            fields.len()
        ));
    }
    let sender = fields[0].trim();
    let receiver = fields[1].trim();
    if sender.is_empty() {
        return Err("empty sender identifier".into());
    }
    if receiver.is_empty() {
        return Err("empty receiver identifier".into());
    }
    let timestamp: i64 = fields[2]
        .trim()
        .parse()
        .map_err(|_| format!("non-numeric timestamp '{}'", fields[2].trim()))?;
    let value: f64 = fields[3]
        .trim()
        .parse()
        .map_err(|_| format!("non-numeric value '{}'", fields[3].trim()))?;
    if !value.is_finite() {
        return Err(format!("non-finite value '{}'", fields[3].trim()));
    }
    if value < 0.0 {
        return Err(format!("negative value {value}"));
    }
    let slice = if format.explicit_slice {
        let s: usize = fields[4]
            .trim()
            .parse()
            .map_err(|_| format!("non-numeric slice '{}'", fields[4].trim()))?;
        if s == 0 {
            return Err("slice indices are 1-based; found 0".into());
        }
        Some(s)
    } else {
        None
    };
    Ok(TemporalEdge {
        sender: sender.to_string(),
        receiver: receiver.to_string(),
        timestamp,
        value,
        slice,
    })
}
