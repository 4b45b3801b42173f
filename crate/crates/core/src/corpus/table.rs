//! Pipe-delimited table blocks.

use crate::error::{CoreError, Result};

pub const OPEN_TAG: &str = "<Table>";
pub const CLOSE_TAG: &str = "</Table>";
pub const SEPARATOR: &str = "----";
const CELL_SEP: &str = " | ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuredTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl StructuredTable {
    pub fn new(headers: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        let t = Self { headers, rows };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.headers.is_empty() {
            return Err(CoreError::Format("table has no header cells".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.headers.len() {
                return Err(CoreError::Format(format!(
                    "row {i} has {} cells, header has {}",
                    row.len(),
                    self.headers.len()
                )));
            }
        }
        for cell in self.headers.iter().chain(self.rows.iter().flatten()) {
            if cell.contains('\n') || cell.contains('\r') {
                return Err(CoreError::Format(format!("cell {cell:?} spans lines")));
            }
        }
        Ok(())
    }
}

fn escape(cell: &str) -> String {
    let mut out = String::with_capacity(cell.len());
    for c in cell.chars() {
        if c == '\\' || c == '|' {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

fn join_line(cells: &[String]) -> String {
    cells.iter().map(|c| escape(c)).collect::<Vec<_>>().join(CELL_SEP)
}

/// Renders a table as a `<Table>` block. Backslashes and pipes inside cells
/// are escaped with a backslash. No trailing newline.
pub fn serialize_table(table: &StructuredTable) -> Result<String> {
    table.validate()?;
    let mut lines = Vec::with_capacity(table.rows.len() + 4);
    lines.push(OPEN_TAG.to_string());
    lines.push(join_line(&table.headers));
    lines.push(SEPARATOR.to_string());
    lines.extend(table.rows.iter().map(|r| join_line(r)));
    lines.push(CLOSE_TAG.to_string());
    Ok(lines.join("\n"))
}

fn split_line(line: &str) -> Vec<String> {
    let chars: Vec<char> = line.chars().collect();
    let mut cells = Vec::new();
    let mut cur = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\\' && i + 1 < chars.len() {
            cur.push(chars[i + 1]);
            i += 2;
            continue;
        }
        if c == ' ' && chars.get(i + 1) == Some(&'|') && chars.get(i + 2) == Some(&' ') {
            cells.push(std::mem::take(&mut cur));
            i += 3;
            continue;
        }
        cur.push(c);
        i += 1;
    }
    cells.push(cur);
    cells
}

/// Inverse of [`serialize_table`].
pub fn parse_table(block: &str) -> Result<StructuredTable> {
    let lines: Vec<&str> = block.split('\n').collect();
    if lines.len() < 4 || lines[0] != OPEN_TAG || lines[lines.len() - 1] != CLOSE_TAG {
        return Err(CoreError::Format("not a <Table> block".into()));
    }
    if lines[2] != SEPARATOR {
        return Err(CoreError::Format("missing `----` header separator".into()));
    }
    let headers = split_line(lines[1]);
    let rows = lines[3..lines.len() - 1].iter().map(|l| split_line(l)).collect();
    StructuredTable::new(headers, rows)
}
