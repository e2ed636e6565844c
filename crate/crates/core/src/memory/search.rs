use std::cmp::Reverse;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{MemoryError, MemoryFileKind, MemoryFiles};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub score: usize,
    pub snippet: String,
    pub source: String,
}

/// Scores every bullet line of MEMORY.md then SOULS.md by the number of distinct
/// query terms it contains (case-insensitive substring). Ties go to the later line.
pub fn memory_search(files: &MemoryFiles, query: &str, top_k: usize) -> Result<Vec<SearchHit>, MemoryError> {
    let terms: BTreeSet<String> = query.split_whitespace().map(str::to_lowercase).collect();
    if terms.is_empty() {
        return Err(MemoryError::EmptyQuery);
    }
    let mut scored: Vec<(usize, usize, SearchHit)> = Vec::new();
    let mut position = 0usize;
    for kind in [MemoryFileKind::Memory, MemoryFileKind::Souls] {
        let text = files.read(kind)?;
        let mut heading = String::new();
        for line in text.lines() {
            position += 1;
            if let Some(h) = line.strip_prefix("## ") {
                heading = h.trim().to_string();
                continue;
            }
            if !line.starts_with("- ") {
                continue;
            }
            let lower = line.to_lowercase();
            let score = terms.iter().filter(|t| lower.contains(t.as_str())).count();
            if score == 0 {
                continue;
            }
            let source = if heading.is_empty() {
                kind.file_name().to_string()
            } else {
                format!("{} / {}", kind.file_name(), heading)
            };
            scored.push((score, position, SearchHit { score, snippet: line.to_string(), source }));
        }
    }
    scored.sort_by_key(|(score, pos, _)| (Reverse(*score), Reverse(*pos)));
    Ok(scored.into_iter().take(top_k).map(|(_, _, hit)| hit).collect())
}
