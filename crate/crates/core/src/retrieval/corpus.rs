//! Corpus readers: TREC-style SGML and one-file-per-document directories.

use std::fs;
use std::path::Path;

use super::{Document, Result, RetrievalError};

/// Extracts `<DOC>` blocks. Each needs a `<DOCNO>`; `<TITLE>` is optional and
/// the body is the `<TEXT>` element when present, else the remaining content.
/// Tags inside fields are stripped. Tag names are matched case-insensitively.
pub fn parse_trec_sgml(text: &str) -> Result<Vec<Document>> {
    let upper = text.to_ascii_uppercase();
    let mut docs = Vec::new();
    let mut pos = 0;
    while let Some(start) = find_from(&upper, "<DOC>", pos) {
        let inner_start = start + "<DOC>".len();
        let end = find_from(&upper, "</DOC>", inner_start)
            .ok_or_else(|| RetrievalError::Corpus(format!("unterminated <DOC> at byte {start}")))?;
        let inner = &text[inner_start..end];
        let inner_upper = &upper[inner_start..end];
        let id = element(inner, inner_upper, "DOCNO")
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| RetrievalError::Corpus(format!("<DOC> at byte {start} has no DOCNO")))?;
        let title = element(inner, inner_upper, "TITLE").map(strip_tags).unwrap_or_default();
        let body = match element(inner, inner_upper, "TEXT") {
            Some(t) => strip_tags(t),
            None => strip_tags(&remove_element(inner, inner_upper, "DOCNO")),
        };
        docs.push(Document { id, title, body });
        pos = end + "</DOC>".len();
    }
    Ok(docs)
}

fn find_from(haystack: &str, needle: &str, from: usize) -> Option<usize> {
    haystack[from..].find(needle).map(|i| i + from)
}

fn element<'a>(inner: &'a str, upper: &str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let s = upper.find(&open)? + open.len();
    let e = find_from(upper, &close, s)?;
    Some(&inner[s..e])
}

fn remove_element(inner: &str, upper: &str, tag: &str) -> String {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    match (upper.find(&open), upper.find(&close)) {
        (Some(s), Some(e)) if e > s => format!("{}{}", &inner[..s], &inner[e + close.len()..]),
        _ => inner.to_string(),
    }
}

fn strip_tags(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_tag = false;
    for c in s.chars() {
        match c {
            '<' => {
                in_tag = true;
                out.push(' ');
            }
            '>' if in_tag => in_tag = false,
            _ if !in_tag => out.push(c),
            _ => {}
        }
    }
    out.trim().to_string()
}

pub fn read_trec_sgml(path: &Path) -> Result<Vec<Document>> {
    parse_trec_sgml(&fs::read_to_string(path)?)
}

/// One UTF-8 file per document, id = file name, in sorted order.
pub fn read_corpus_dir(dir: &Path) -> Result<Vec<Document>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            paths.push(entry.path());
        }
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| RetrievalError::Corpus(format!("non-UTF-8 file name {}", p.display())))?
                .to_string();
            Ok(Document::new(id, fs::read_to_string(&p)?))
        })
        .collect()
}

/// A directory is read file-per-document; any other path as SGML. A
/// directory of `.sgml`/`.xml`/`.trec` files is read as concatenated SGML.
pub fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    if !path.is_dir() {
        return read_trec_sgml(path);
    }
    let sgml = |p: &Path| {
        matches!(
            p.extension().and_then(|e| e.to_str()),
            Some("sgml" | "sgm" | "xml" | "trec")
        )
    };
    let mut entries: Vec<_> = fs::read_dir(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.retain(|p| p.is_file());
    entries.sort();
    if !entries.is_empty() && entries.iter().all(|p| sgml(p)) {
        let mut docs = Vec::new();
        for p in entries {
            docs.extend(read_trec_sgml(&p)?);
        }
        Ok(docs)
    } else {
        read_corpus_dir(path)
    }
}
