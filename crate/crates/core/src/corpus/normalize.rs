//! Conversion of raw release documents to unified text.
//!
//! HTML is walked depth first. Text nodes contribute their words, block
//! elements contribute line breaks, `<script>`/`<style>`/`<head>` are
//! dropped and every `<table>` is replaced by its pipe-delimited block.
//! Plain text and pre-extracted PDF text only go through
//! [`normalize_whitespace`].

use ego_tree::NodeRef;
use scraper::{Html, Node};

use super::table::{serialize_table, StructuredTable, CLOSE_TAG, OPEN_TAG};
use super::RawFormat;
use crate::error::{CoreError, Result};

pub fn normalize_document(blob: &[u8], format: RawFormat) -> Result<String> {
    if blob.is_empty() {
        return Err(CoreError::Ingest("empty document".into()));
    }
    let text = String::from_utf8_lossy(blob);
    match format {
        RawFormat::Html => html_to_text(&text),
        RawFormat::PdfText | RawFormat::Txt => Ok(normalize_whitespace(&text)),
    }
}

/// Line endings become LF, runs of horizontal whitespace collapse to one
/// space, lines are trimmed, blank-line runs collapse to a single blank line
/// and leading/trailing blank lines are removed.
///
/// Lines between an exact `<Table>` line and the next exact `</Table>` line
/// are kept verbatim so that serialized cells survive untouched.
pub fn normalize_whitespace(text: &str) -> String {
    let unified = text.replace("\r\n", "\n").replace('\r', "\n");
    let mut out: Vec<String> = Vec::new();
    let mut in_table = false;
    for line in unified.split('\n') {
        if in_table {
            out.push(line.to_string());
            if line == CLOSE_TAG {
                in_table = false;
            }
            continue;
        }
        if line == OPEN_TAG {
            in_table = true;
            out.push(line.to_string());
            continue;
        }
        let collapsed = line.split_whitespace().collect::<Vec<_>>().join(" ");
        if collapsed.is_empty() && out.last().map_or(true, |l| l.is_empty()) {
            continue;
        }
        out.push(collapsed);
    }
    while out.last().is_some_and(|l| l.is_empty()) {
        out.pop();
    }
    out.join("\n")
}

#[derive(Clone, Copy, PartialEq)]
enum Break {
    None,
    Line,
    Paragraph,
}

fn break_for(tag: &str) -> Break {
    match tag {
        "p" | "h1" | "h2" | "h3" | "h4" | "h5" | "h6" | "ul" | "ol" | "pre" | "blockquote"
        | "section" | "article" | "header" | "footer" | "main" | "nav" | "aside" | "figure"
        | "dl" | "hr" | "form" | "fieldset" | "address" | "details" => Break::Paragraph,
        "div" | "li" | "dt" | "dd" | "tr" | "caption" | "summary" | "figcaption" | "body"
        | "html" | "option" | "br" => Break::Line,
        _ => Break::None,
    }
}

fn skipped(tag: &str) -> bool {
    matches!(tag, "script" | "style" | "head" | "noscript" | "template" | "iframe")
}

/// Ends the current line; a paragraph break also leaves one blank line.
/// Adjacent breaks merge rather than stack.
fn push_break(out: &mut String, b: Break) {
    let want = match b {
        Break::None => return,
        Break::Line => 1,
        Break::Paragraph => 2,
    };
    while out.ends_with(' ') {
        out.pop();
    }
    let have = out.len() - out.trim_end_matches('\n').len();
    for _ in have..want {
        out.push('\n');
    }
}

fn push_words(out: &mut String, text: &str) {
    let at_boundary = out.is_empty() || out.ends_with(char::is_whitespace);
    let words = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if text.starts_with(char::is_whitespace) && !at_boundary {
        out.push(' ');
    }
    if words.is_empty() {
        return;
    }
    out.push_str(&words);
    if text.ends_with(char::is_whitespace) {
        out.push(' ');
    }
}

fn html_to_text(source: &str) -> Result<String> {
    let doc = Html::parse_document(source);
    let mut out = String::new();
    walk(doc.tree.root(), &mut out)?;
    Ok(normalize_whitespace(&out))
}

fn walk(node: NodeRef<'_, Node>, out: &mut String) -> Result<()> {
    match node.value() {
        Node::Text(t) => push_words(out, t),
        Node::Element(e) => {
            let tag = e.name();
            if skipped(tag) {
                return Ok(());
            }
            if tag == "table" {
                out.push_str("\n\n");
                if let Some(caption) = table_caption(node) {
                    out.push_str(&caption);
                    out.push('\n');
                }
                if let Some(table) = extract_table(node)? {
                    out.push('\n');
                    out.push_str(&serialize_table(&table)?);
                    out.push('\n');
                }
                out.push_str("\n\n");
                return Ok(());
            }
            let b = break_for(tag);
            push_break(out, b);
            for child in node.children() {
                walk(child, out)?;
            }
            push_break(out, b);
        }
        _ => {
            for child in node.children() {
                walk(child, out)?;
            }
        }
    }
    Ok(())
}

fn element_name<'a>(node: &NodeRef<'a, Node>) -> Option<&'a str> {
    match node.value() {
        Node::Element(e) => Some(e.name()),
        _ => None,
    }
}

/// Collapsed text of a subtree, nested tables flattened to their words.
fn inline_text(node: NodeRef<'_, Node>) -> String {
    let mut raw = String::new();
    collect_text(node, &mut raw);
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn collect_text(node: NodeRef<'_, Node>, out: &mut String) {
    match node.value() {
        Node::Text(t) => {
            out.push_str(t);
        }
        Node::Element(e) if skipped(e.name()) => {}
        Node::Element(e) => {
            let spaced = break_for(e.name()) != Break::None || matches!(e.name(), "td" | "th");
            if spaced {
                out.push(' ');
            }
            for child in node.children() {
                collect_text(child, out);
            }
            if spaced {
                out.push(' ');
            }
        }
        _ => {
            for child in node.children() {
                collect_text(child, out);
            }
        }
    }
}

fn table_caption(table: NodeRef<'_, Node>) -> Option<String> {
    let caption = table
        .children()
        .find(|c| element_name(c) == Some("caption"))?;
    let text = inline_text(caption);
    (!text.is_empty()).then_some(text)
}

/// Rows of `table` that belong to it rather than to a nested table.
fn own_rows<'a>(table: NodeRef<'a, Node>, rows: &mut Vec<NodeRef<'a, Node>>) {
    for child in table.children() {
        match element_name(&child) {
            Some("tr") => rows.push(child),
            Some("thead") | Some("tbody") | Some("tfoot") => own_rows(child, rows),
            _ => {}
        }
    }
}

fn extract_table(table: NodeRef<'_, Node>) -> Result<Option<StructuredTable>> {
    let mut row_nodes = Vec::new();
    own_rows(table, &mut row_nodes);
    let mut rows: Vec<Vec<String>> = row_nodes
        .into_iter()
        .map(|tr| {
            tr.children()
                .filter(|c| matches!(element_name(c), Some("td") | Some("th")))
                .map(inline_text)
                .collect::<Vec<_>>()
        })
        .filter(|cells| !cells.is_empty())
        .collect();
    if rows.is_empty() {
        return Ok(None);
    }
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    for row in &mut rows {
        row.resize(width, String::new());
    }
    let headers = rows.remove(0);
    StructuredTable::new(headers, rows).map(Some)
}
