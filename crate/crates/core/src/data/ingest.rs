use std::collections::HashMap;
use std::path::Path;

use serde_json::Value;

use super::{InteractionDataset, UserHistory};
use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionFormat {
    Jsonl,
    Csv,
}

impl InteractionFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "jsonl" | "json" => Some(Self::Jsonl),
            "csv" => Some(Self::Csv),
            _ => None,
        }
    }
}

struct RawRow {
    user: String,
    item: String,
    ts: i64,
}

/// Reads interaction rows and groups them per user in ascending timestamp order.
///
/// Users appear in order of first occurrence; equal timestamps keep file order.
pub fn ingest_interactions(path: &Path, format: InteractionFormat) -> Result<InteractionDataset> {
    let text = util::read_string(path)?;
    let rows = match format {
        InteractionFormat::Jsonl => parse_jsonl(&text)?,
        InteractionFormat::Csv => parse_csv(&text)?,
    };
    Ok(group_rows(rows))
}

fn group_rows(rows: Vec<RawRow>) -> InteractionDataset {
    let mut order: Vec<String> = Vec::new();
    let mut per_user: HashMap<String, Vec<(i64, String)>> = HashMap::new();
    for row in rows {
        let entry = per_user.entry(row.user.clone()).or_insert_with(|| {
            order.push(row.user.clone());
            Vec::new()
        });
        entry.push((row.ts, row.item));
    }
    let users = order
        .into_iter()
        .map(|user| {
            let mut events = per_user.remove(&user).unwrap_or_default();
            // stable: ties stay in file order
            events.sort_by_key(|(ts, _)| *ts);
            UserHistory {
                user,
                items: events.into_iter().map(|(_, item)| item).collect(),
            }
        })
        .collect();
    InteractionDataset::from_users(users)
}

fn key_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_jsonl(text: &str) -> Result<Vec<RawRow>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| Error::Row {
            line: line_no,
            msg: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Row {
            line: line_no,
            msg: "expected a JSON object".into(),
        })?;
        let field = |name: &str| {
            obj.get(name)
                .ok_or_else(|| Error::Schema(format!("line {line_no}: missing column `{name}`")))
        };
        let user = key_string(field("user")?).ok_or_else(|| Error::Row {
            line: line_no,
            msg: "`user` must be a string".into(),
        })?;
        let item = key_string(field("item")?).ok_or_else(|| Error::Row {
            line: line_no,
            msg: "`item` must be a string".into(),
        })?;
        let ts = match field("ts")? {
            Value::Number(n) => n.as_i64(),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        }
        .ok_or_else(|| Error::Row {
            line: line_no,
            msg: format!("unparsable timestamp {}", obj["ts"]),
        })?;
        rows.push(RawRow { user, item, ts });
    }
    Ok(rows)
}

fn parse_csv(text: &str) -> Result<Vec<RawRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let (user_col, item_col, ts_col) = (column("user")?, column("item")?, column("ts")?);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let cell = |col: usize| {
            record.get(col).ok_or_else(|| Error::Row {
                line,
                msg: format!("row has only {} fields", record.len()),
            })
        };
        let ts_text = cell(ts_col)?;
        let ts = ts_text.trim().parse::<i64>().map_err(|_| Error::Row {
            line,
            msg: format!("unparsable timestamp {ts_text:?}"),
        })?;
        rows.push(RawRow {
            user: cell(user_col)?.to_owned(),
            item: cell(item_col)?.to_owned(),
            ts,
        });
    }
    Ok(rows)
}
