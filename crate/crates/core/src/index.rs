//! Per-keystroke prefix index over entity names.
//!
//! Every token of every indexed name is posted under each of its prefixes, so
//! a keystroke costs one hash lookup per query token plus the candidate check.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::catalog::{Catalog, EntityId};

/// Score multiplier for an entity whose final query token matched nothing.
pub const PARTIAL_PENALTY: f64 = 0.5;

/// Lowercases, folds diacritics, turns punctuation into separators and
/// collapses whitespace.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.nfd().filter(|c| !is_combining_mark(*c)) {
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(c.to_lowercase());
        } else {
            pending_space = true;
        }
    }
    out
}

pub fn tokenize(text: &str) -> Vec<String> {
    normalize(text).split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchMatch {
    pub entity: EntityId,
    pub lexical_score: f64,
    /// Every query token matched a distinct entity token.
    pub full_match: bool,
    pub matched_tokens: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Posting {
    doc: u32,
    position: u16,
}

/// One indexed name. An entity has one doc per title/alias/name/label.
#[derive(Debug, Clone)]
struct Doc {
    entity: EntityId,
    normalized: String,
    tokens: Vec<String>,
    char_len: usize,
    popularity: f64,
}

#[derive(Debug, Clone, Default)]
pub struct InstantIndex {
    docs: Vec<Doc>,
    postings: HashMap<String, Vec<Posting>>,
}

impl InstantIndex {
    pub fn build(catalog: &Catalog) -> Self {
        let mut named: Vec<(EntityId, String)> = Vec::new();
        for v in catalog.videos() {
            named.push((v.id, normalize(&v.title)));
            named.extend(v.aliases.iter().map(|a| (v.id, normalize(a))));
        }
        named.extend(catalog.talents().map(|t| (t.id, normalize(&t.name))));
        named.extend(catalog.collections().map(|c| (c.id, normalize(&c.label))));
        // Stable sort keeps title before aliases within an entity.
        named.sort_by_key(|(id, _)| *id);
        named.retain(|(_, n)| !n.is_empty());

        let mut index = InstantIndex::default();
        for (entity, normalized) in named {
            let doc = index.docs.len() as u32;
            let tokens: Vec<String> = normalized.split(' ').map(str::to_owned).collect();
            for (position, token) in tokens.iter().enumerate() {
                for (end, _) in token.char_indices().skip(1).chain([(token.len(), ' ')]) {
                    index
                        .postings
                        .entry(token[..end].to_owned())
                        .or_default()
                        .push(Posting { doc, position: position as u16 });
                }
            }
            index.docs.push(Doc {
                entity,
                char_len: tokens.iter().map(|t| t.chars().count()).sum(),
                tokens,
                normalized,
                popularity: catalog.popularity(entity),
            });
        }
        index
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn prefix_count(&self) -> usize {
        self.postings.len()
    }

    /// Entities posted under `prefix`, ascending and deduplicated.
    pub fn posted(&self, prefix: &str) -> Vec<EntityId> {
        let mut ids: Vec<EntityId> = self
            .postings
            .get(prefix)
            .into_iter()
            .flatten()
            .map(|p| self.docs[p.doc as usize].entity)
            .collect();
        ids.dedup();
        ids
    }

    fn docs_for(&self, token: &str) -> Vec<u32> {
        let mut docs: Vec<u32> = self
            .postings
            .get(token)
            .into_iter()
            .flatten()
            .map(|p| p.doc)
            .collect();
        docs.dedup();
        docs
    }

    /// Keyword matches for a (possibly partial) query, best first.
    pub fn match_prefix(&self, query: &str) -> Vec<SearchMatch> {
        let normalized = normalize(query);
        if normalized.is_empty() {
            return Vec::new();
        }
        let q_tokens: Vec<&str> = normalized.split(' ').collect();

        // Full matches need every token posted; partial ones need all but the last.
        let required = if q_tokens.len() == 1 { &q_tokens[..] } else { &q_tokens[..q_tokens.len() - 1] };
        let mut lists: Vec<Vec<u32>> = required.iter().map(|t| self.docs_for(t)).collect();
        lists.sort_by_key(Vec::len);
        let mut candidates = lists.first().cloned().unwrap_or_default();
        for list in &lists[1..] {
            candidates.retain(|d| list.binary_search(d).is_ok());
        }

        let mut best: Vec<(SearchMatch, f64)> = Vec::new();
        for doc_idx in candidates {
            let doc = &self.docs[doc_idx as usize];
            let Some(m) = score_name(&q_tokens, &normalized, doc) else { continue };
            match best.last_mut() {
                Some((prev, _)) if prev.entity == doc.entity => {
                    if (m.lexical_score, m.full_match) > (prev.lexical_score, prev.full_match) {
                        *prev = m;
                    }
                }
                _ => best.push((m, doc.popularity)),
            }
        }
        best.sort_by(|(a, pa), (b, pb)| rank_order(a, *pa, b, *pb));
        best.into_iter().map(|(m, _)| m).collect()
    }
}

/// Ordering of matches: score desc, popularity desc, id asc.
pub(crate) fn rank_order(a: &SearchMatch, pop_a: f64, b: &SearchMatch, pop_b: f64) -> Ordering {
    b.lexical_score
        .total_cmp(&a.lexical_score)
        .then(pop_b.total_cmp(&pop_a))
        .then(a.entity.cmp(&b.entity))
}

fn score_name(q_tokens: &[&str], normalized_query: &str, doc: &Doc) -> Option<SearchMatch> {
    let n = q_tokens.len();
    let (full_match, matched) = if assignable(q_tokens, &doc.tokens) {
        (true, n)
    } else if n >= 2
        && !doc.tokens.iter().any(|t| t.starts_with(q_tokens[n - 1]))
        && assignable(&q_tokens[..n - 1], &doc.tokens)
    {
        (false, n - 1)
    } else {
        return None;
    };
    let lexical_score = if normalized_query == doc.normalized {
        1.0
    } else {
        let matched_chars: usize = q_tokens[..matched].iter().map(|t| t.chars().count()).sum();
        let coverage = (matched_chars as f64 / doc.char_len as f64).min(1.0);
        coverage * if full_match { 1.0 } else { PARTIAL_PENALTY }
    };
    Some(SearchMatch { entity: doc.entity, lexical_score, full_match, matched_tokens: matched })
}

/// Whether each query token can be assigned a distinct name token it
/// prefixes (bipartite matching via augmenting paths).
fn assignable(query: &[&str], name: &[String]) -> bool {
    if query.len() > name.len() {
        return false;
    }
    let mut owner: Vec<Option<usize>> = vec![None; name.len()];
    for q in 0..query.len() {
        let mut visited = vec![false; name.len()];
        if !augment(q, query, name, &mut owner, &mut visited) {
            return false;
        }
    }
    true
}

fn augment(
    q: usize,
    query: &[&str],
    name: &[String],
    owner: &mut [Option<usize>],
    visited: &mut [bool],
) -> bool {
    for t in 0..name.len() {
        if visited[t] || !name[t].starts_with(query[q]) {
            continue;
        }
        visited[t] = true;
        let free = match owner[t] {
            None => true,
            Some(other) => augment(other, query, name, owner, visited),
        };
        if free {
            owner[t] = Some(q);
            return true;
        }
    }
    false
}
