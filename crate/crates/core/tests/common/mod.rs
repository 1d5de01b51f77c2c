//! Fixtures and brute-force oracles shared by the integration tests.
//!
//! Every oracle here recomputes its quantity directly from the definition,
//! without touching the index, co-play tables or greedy loop under test.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use shelf_core::behavior::{load_logs, InteractionLog, LogRecord, PlayEvent, SearchEvent};
use shelf_core::catalog::{load_catalog, Catalog, Collection, Entity, EntityId, Record, Talent, Video};
use shelf_core::index::{normalize, SearchMatch};
use shelf_core::organizer::{CandidateGroup, GroupKind, RankParams};

pub fn fixture_path(name: &str) -> PathBuf {
    // Resolves from either crate directory, since both live under `crates/`.
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

pub fn sonic_catalog() -> Catalog {
    load_catalog(std::fs::read(fixture_path("sonic_catalog.jsonl")).unwrap().as_slice()).unwrap()
}

pub fn sonic_logs(catalog: &Catalog) -> InteractionLog {
    load_logs(std::fs::read(fixture_path("sonic_logs.jsonl")).unwrap().as_slice(), catalog).unwrap()
}

pub const SONIC_X: EntityId = EntityId(1);
pub const HEDGEHOG: EntityId = EntityId(2);

// ---------------------------------------------------------------------------
// Random fixtures

const VOCAB: &[&str] = &[
    "sonic", "son", "sun", "sunset", "the", "then", "hedgehog", "hero", "heroes", "x", "t", "tale", "a",
    "ab", "abc", "mario", "mar", "pokémon", "poke", "night", "knight", "la", "las", "l",
];

fn random_name(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=4);
    let words: Vec<&str> = (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect();
    let mut name = words.join(" ");
    if rng.gen_bool(0.1) {
        name.push_str(": Part II!");
    }
    name
}

/// Catalog with heavily overlapping names, up to `max_entities` entities.
pub fn random_catalog(rng: &mut ChaCha8Rng, max_entities: usize) -> Catalog {
    let total = rng.gen_range(1..=max_entities);
    let videos = (total * 3 / 4).max(1);
    let mut records = Vec::new();
    for i in 0..videos {
        let aliases = if rng.gen_bool(0.2) { vec![random_name(rng)] } else { vec![] };
        let n_tags = rng.gen_range(0..=2);
        let mut tags: Vec<String> = ["Chases", "Goofy Movies", "Anime", "Drama"]
            .choose_multiple(rng, n_tags)
            .map(|t| t.to_string())
            .collect();
        tags.sort();
        records.push(Record::Video(Video {
            id: EntityId(i as u64 + 1),
            title: random_name(rng),
            aliases,
            available: rng.gen_bool(0.8),
            tags,
            release_year: 2000,
            // Coarse popularity so ties on score and popularity both occur.
            popularity: rng.gen_range(0..5) as f64 / 4.0,
        }));
    }
    let ids: Vec<EntityId> = (1..=videos as u64).map(EntityId).collect();
    for j in videos..total {
        let id = EntityId(j as u64 + 1);
        let n_members = rng.gen_range(0..=ids.len().min(5));
        let members: Vec<EntityId> = ids.choose_multiple(rng, n_members).copied().collect();
        if rng.gen_bool(0.5) {
            records.push(Record::Talent(Talent { id, name: random_name(rng), credits: members }));
        } else {
            records.push(Record::Collection(Collection { id, label: random_name(rng), members }));
        }
    }
    Catalog::from_records(records).unwrap()
}

/// Random play/search log over the catalog's videos.
pub fn random_log(rng: &mut ChaCha8Rng, catalog: &Catalog, profiles: usize, plays: usize, searches: usize) -> InteractionLog {
    let videos: Vec<&Video> = catalog.videos().collect();
    let mut log = InteractionLog::default();
    for t in 0..plays {
        let v = videos.choose(rng).unwrap();
        log.push(LogRecord::Play(PlayEvent {
            profile: format!("u{}", rng.gen_range(0..profiles)),
            video: v.id,
            timestamp: t as i64,
        }));
    }
    for _ in 0..searches {
        let v = videos.choose(rng).unwrap();
        let chars: Vec<char> = v.title.chars().collect();
        let n = rng.gen_range(1..=chars.len());
        log.push(LogRecord::Search(SearchEvent {
            profile: format!("u{}", rng.gen_range(0..profiles)),
            query: chars[..n].iter().collect(),
            selected: v.id,
            position: 0,
        }));
    }
    log
}

// ---------------------------------------------------------------------------
// Keyword matching oracle

fn names_of(entity: Entity<'_>) -> Vec<String> {
    match entity {
        Entity::Video(v) => std::iter::once(&v.title).chain(&v.aliases).cloned().collect(),
        Entity::Talent(t) => vec![t.name.clone()],
        Entity::Collection(c) => vec![c.label.clone()],
    }
}

/// Tries every injective assignment of query tokens to name tokens.
fn injective(query: &[&str], name: &[&str], used: &mut Vec<bool>) -> bool {
    let Some((first, rest)) = query.split_first() else { return true };
    for i in 0..name.len() {
        if !used[i] && name[i].starts_with(first) {
            used[i] = true;
            let ok = injective(rest, name, used);
            used[i] = false;
            if ok {
                return true;
            }
        }
    }
    false
}

fn brute_score(query: &str, name: &str) -> Option<(f64, bool, usize)> {
    let nq = normalize(query);
    let nn = normalize(name);
    if nq.is_empty() || nn.is_empty() {
        return None;
    }
    let q: Vec<&str> = nq.split(' ').collect();
    let t: Vec<&str> = nn.split(' ').collect();
    let full = injective(&q, &t, &mut vec![false; t.len()]);
    let partial = !full
        && q.len() >= 2
        && t.iter().all(|tok| !tok.starts_with(q[q.len() - 1]))
        && injective(&q[..q.len() - 1], &t, &mut vec![false; t.len()]);
    if !full && !partial {
        return None;
    }
    let matched = if full { q.len() } else { q.len() - 1 };
    if nq == nn {
        return Some((1.0, full, matched));
    }
    let matched_chars: usize = q[..matched].iter().map(|s| s.chars().count()).sum();
    let total: usize = t.iter().map(|s| s.chars().count()).sum();
    let coverage = (matched_chars as f64 / total as f64).min(1.0);
    Some((coverage * if full { 1.0 } else { 0.5 }, full, matched))
}

/// Scans every entity with the matching predicate and scoring rule.
pub fn brute_match(catalog: &Catalog, query: &str) -> Vec<SearchMatch> {
    let mut out: Vec<(SearchMatch, f64)> = Vec::new();
    for entity in catalog.entities() {
        let mut best: Option<(f64, bool, usize)> = None;
        for name in names_of(entity) {
            if let Some(s) = brute_score(query, &name) {
                if best.is_none_or(|b| (s.0, s.1) > (b.0, b.1)) {
                    best = Some(s);
                }
            }
        }
        if let Some((score, full, matched)) = best {
            let m = SearchMatch { entity: entity.id(), lexical_score: score, full_match: full, matched_tokens: matched };
            out.push((m, catalog.popularity(entity.id())));
        }
    }
    out.sort_by(|(a, pa), (b, pb)| {
        b.lexical_score
            .partial_cmp(&a.lexical_score)
            .unwrap()
            .then(pb.partial_cmp(pa).unwrap())
            .then(a.entity.cmp(&b.entity))
    });
    out.into_iter().map(|(m, _)| m).collect()
}

// ---------------------------------------------------------------------------
// Co-play oracle

/// c(i, j) by intersecting per-video audiences.
pub fn brute_counts(log: &InteractionLog) -> BTreeMap<EntityId, BTreeSet<String>> {
    let mut audience: BTreeMap<EntityId, BTreeSet<String>> = BTreeMap::new();
    for p in &log.plays {
        audience.entry(p.video).or_default().insert(p.profile.clone());
    }
    audience
}

pub fn brute_pair(audience: &BTreeMap<EntityId, BTreeSet<String>>, i: EntityId, j: EntityId, min_support: u32) -> u32 {
    let (Some(a), Some(b)) = (audience.get(&i), audience.get(&j)) else { return 0 };
    let c = a.intersection(b).count() as u32;
    if i != j && c < min_support { 0 } else { c }
}

/// Cosine of binary audience vectors; `None` when either item has no plays.
pub fn brute_cosine(
    audience: &BTreeMap<EntityId, BTreeSet<String>>,
    i: EntityId,
    j: EntityId,
    min_support: u32,
) -> Option<f64> {
    let ci = audience.get(&i)?.len() as f64;
    let cj = audience.get(&j)?.len() as f64;
    Some(brute_pair(audience, i, j, min_support) as f64 / (ci * cj).sqrt())
}

/// Recommendation scores evaluated for every available video.
pub fn brute_recommend(
    anchors: &[(EntityId, f64)],
    query: &str,
    log: &InteractionLog,
    min_support: u32,
    catalog: &Catalog,
    k: usize,
) -> Vec<(EntityId, f64, Vec<EntityId>)> {
    let audience = brute_counts(log);
    let key = normalize(query);
    let mut selections: BTreeMap<EntityId, f64> = BTreeMap::new();
    for s in log.searches.iter().filter(|s| !key.is_empty() && normalize(&s.query) == key) {
        *selections.entry(s.selected).or_default() += 1.0;
    }
    let max_sel = selections.values().copied().fold(0.0, f64::max);

    let mut out = Vec::new();
    for v in catalog.videos().filter(|v| v.available) {
        let mut cf = 0.0;
        let mut contributors = Vec::new();
        for &(a, w) in anchors {
            let (members, video_anchor): (Vec<EntityId>, bool) = match catalog.entity(a) {
                Some(Entity::Video(x)) => (vec![x.id], true),
                Some(Entity::Talent(t)) => (t.credits.clone(), false),
                Some(Entity::Collection(c)) => (c.members.clone(), false),
                None => (vec![], false),
            };
            if members.is_empty() || (video_anchor && a == v.id) || w <= 0.0 {
                continue;
            }
            let share = 1.0 / members.len() as f64;
            let mut contribution = 0.0;
            for e in members {
                let sim = if e == v.id { 1.0 } else { brute_cosine(&audience, e, v.id, min_support).unwrap_or(0.0) };
                contribution += w * share * sim;
            }
            if contribution > 0.0 {
                cf += contribution;
                contributors.push(a);
            }
        }
        let assoc = if max_sel > 0.0 { selections.get(&v.id).copied().unwrap_or(0.0) / max_sel } else { 0.0 };
        let score = cf.max(assoc).min(1.0);
        if score > 0.0 {
            contributors.sort();
            contributors.dedup();
            out.push((v.id, score, contributors));
        }
    }
    out.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then(catalog.popularity(b.0).partial_cmp(&catalog.popularity(a.0)).unwrap())
            .then(a.0.cmp(&b.0))
    });
    out.truncate(k);
    out
}

// ---------------------------------------------------------------------------
// Row selection oracle

fn oracle_jaccard(a: &[EntityId], b: &[EntityId]) -> f64 {
    let a: BTreeSet<_> = a.iter().collect();
    let b: BTreeSet<_> = b.iter().collect();
    let union = a.union(&b).count();
    if union == 0 { 0.0 } else { a.intersection(&b).count() as f64 / union as f64 }
}

fn oracle_value(
    c: &CandidateGroup,
    current: &[EntityId],
    picked: &[usize],
    candidates: &[CandidateGroup],
    scores: &HashMap<EntityId, f64>,
    params: RankParams,
) -> f64 {
    let mass: f64 = current.iter().map(|v| scores.get(v).copied().unwrap_or(0.0)).sum();
    let overlap = picked
        .iter()
        .map(|&p| oracle_jaccard(&c.members, &candidates[p].members))
        .fold(0.0, f64::max);
    let anchor_kind = !matches!(c.kind, GroupKind::TagRow(_));
    let narrow = params.specificity >= params.tau_narrow;
    let boost = if anchor_kind == narrow { 1.5 } else { 1.0 };
    c.priority * mass * (1.0 - params.lambda_div * overlap) * boost
}

/// Step key: higher value first, then lower definition id, then lower header.
type StepKey = (f64, std::cmp::Reverse<String>, std::cmp::Reverse<String>);

fn step_cmp(a: &[StepKey], b: &[StepKey]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.0.partial_cmp(&y.0).unwrap().then_with(|| x.1.cmp(&y.1)).then_with(|| x.2.cmp(&y.2));
        if o.is_ne() {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

/// Enumerates every selection order and returns the one whose sequence of
/// per-step values is lexicographically greatest. Each entry is
/// (candidate index, members emitted).
pub fn exhaustive_rank(
    candidates: &[CandidateGroup],
    scores: &HashMap<EntityId, f64>,
    params: RankParams,
) -> Vec<(usize, Vec<EntityId>)> {
    #[allow(clippy::too_many_arguments, clippy::type_complexity)]
    fn explore(
        candidates: &[CandidateGroup],
        scores: &HashMap<EntityId, f64>,
        params: RankParams,
        current: &BTreeMap<usize, Vec<EntityId>>,
        picked: &mut Vec<usize>,
        path: &mut Vec<(usize, Vec<EntityId>)>,
        keys: &mut Vec<StepKey>,
        best: &mut Option<(Vec<StepKey>, Vec<(usize, Vec<EntityId>)>)>,
    ) {
        let mut extended = false;
        if picked.len() < params.max_groups {
            for (&i, members) in current {
                let value = oracle_value(&candidates[i], members, picked, candidates, scores, params);
                if value <= 0.0 {
                    continue;
                }
                extended = true;
                let mut next: BTreeMap<usize, Vec<EntityId>> = BTreeMap::new();
                for (&j, other) in current {
                    if j == i {
                        continue;
                    }
                    let rest: Vec<EntityId> = other.iter().filter(|v| !members.contains(v)).copied().collect();
                    if rest.len() >= candidates[j].min_size {
                        next.insert(j, rest);
                    }
                }
                picked.push(i);
                path.push((i, members.clone()));
                keys.push((
                    value,
                    std::cmp::Reverse(candidates[i].definition.clone()),
                    std::cmp::Reverse(candidates[i].header.clone()),
                ));
                explore(candidates, scores, params, &next, picked, path, keys, best);
                keys.pop();
                path.pop();
                picked.pop();
            }
        }
        if !extended {
            let better = match best {
                None => true,
                Some((bk, _)) => step_cmp(keys, bk).is_gt(),
            };
            if better {
                *best = Some((keys.clone(), path.clone()));
            }
        }
    }

    let start: BTreeMap<usize, Vec<EntityId>> = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.members.len() >= c.min_size)
        .map(|(i, c)| (i, c.members.clone()))
        .collect();
    let mut best = None;
    explore(candidates, scores, params, &start, &mut Vec::new(), &mut Vec::new(), &mut Vec::new(), &mut best);
    best.map(|(_, p)| p).unwrap_or_default()
}
