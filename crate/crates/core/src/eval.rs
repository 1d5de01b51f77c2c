//! Offline replay of held-out sessions.
//!
//! Profiles are split into train and held-out sets. Models are built from the
//! train events only; every held-out search event is then replayed. Available
//! targets are replayed keystroke by keystroke to measure how soon they reach
//! the top-k; unavailable targets are replayed at the logged query to count
//! dead ends (pages with zero rows) under each policy.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::behavior::InteractionLog;
use crate::catalog::{Catalog, EntityId};
use crate::engine::{EngineConfig, EngineSnapshot, Policy, SearchOutcome};
use crate::organizer::GroupDefinition;
use crate::ranker::{Provenance, RelevanceModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Fraction of profiles held out, in (0, 1).
    pub holdout: f64,
    pub seed: u64,
    pub k: usize,
    /// Longest prefix replayed for fetch sessions.
    pub max_prefix: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { holdout: 0.2, seed: 7, k: 10, max_prefix: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadEndRates {
    pub matches_only: f64,
    pub full: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub pages: usize,
    pub mean_groups_per_page: f64,
    pub dedup_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportProvenance {
    pub seed: u64,
    pub holdout: f64,
    pub k: usize,
    pub max_prefix: usize,
    pub catalog_entities: usize,
    pub train_events: usize,
    pub heldout_profiles: usize,
    pub fetch_sessions: usize,
    pub unavailable_target_queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Keyed by prefix length in characters.
    pub fetch_success_at_k: BTreeMap<usize, f64>,
    pub dead_end_rate: DeadEndRates,
    /// Gini coefficient of recommendation exposure over available videos.
    pub recommendation_popularity_gini: f64,
    pub groups: GroupStats,
    pub provenance: ReportProvenance,
}

/// Deterministic profile split; returns (train, held-out).
pub fn split_profiles(log: &InteractionLog, holdout: f64, seed: u64) -> (InteractionLog, InteractionLog) {
    let profiles: BTreeSet<&str> = log
        .plays
        .iter()
        .map(|p| p.profile.as_str())
        .chain(log.searches.iter().map(|s| s.profile.as_str()))
        .collect();
    let mut profiles: Vec<&str> = profiles.into_iter().collect();
    profiles.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_held = ((profiles.len() as f64) * holdout.clamp(0.0, 1.0)).round() as usize;
    let held: BTreeSet<String> = profiles[..n_held].iter().map(|p| p.to_string()).collect();
    (log.filter_profiles(|p| !held.contains(p)), log.filter_profiles(|p| held.contains(p)))
}

/// First `n` characters of `text`.
pub fn char_prefix(text: &str, n: usize) -> String {
    text.chars().take(n).collect()
}

/// Gini coefficient of non-negative values; 0 for an all-zero vector.
pub fn gini(values: &[f64]) -> f64 {
    let total: f64 = values.iter().sum();
    if values.is_empty() || total <= 0.0 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let weighted: f64 = sorted.iter().enumerate().map(|(i, x)| (i as f64 + 1.0) * x).sum();
    (2.0 * weighted) / (n * total) - (n + 1.0) / n
}

/// Replays held-out sessions against an already-built snapshot.
pub fn evaluate_snapshot(
    snapshot: &EngineSnapshot,
    heldout: &InteractionLog,
    config: &EvalConfig,
    train_events: usize,
    heldout_profiles: usize,
) -> EvalReport {
    let catalog = &snapshot.catalog;
    let mut exposure: HashMap<EntityId, f64> = HashMap::new();
    let mut pages = 0usize;
    let mut group_total = 0usize;
    let mut dedup_violations = 0usize;
    let mut observe = |outcome: &SearchOutcome| {
        pages += 1;
        group_total += outcome.page.groups.len();
        dedup_violations += outcome.page.duplicate_videos();
        for r in &outcome.ranked {
            if r.provenance != Provenance::Match {
                *exposure.entry(r.video).or_default() += 1.0;
            }
        }
    };

    let mut successes = vec![0usize; config.max_prefix + 1];
    let mut fetch_sessions = 0usize;
    let mut dead_matches_only = 0usize;
    let mut dead_full = 0usize;
    let mut unavailable_queries = 0usize;

    for event in &heldout.searches {
        let Some(video) = catalog.video(event.selected) else { continue };
        if video.available {
            fetch_sessions += 1;
            for (p, hits) in successes.iter_mut().enumerate().skip(1) {
                let query = char_prefix(&video.title, p);
                let outcome = snapshot.search_with(&query, config.k, Policy::Full);
                if outcome.ranked.iter().any(|r| r.video == video.id) {
                    *hits += 1;
                }
                observe(&outcome);
            }
        } else {
            unavailable_queries += 1;
            let full = snapshot.search_with(&event.query, config.k, Policy::Full);
            let bare = snapshot.search_with(&event.query, config.k, Policy::MatchesOnly);
            dead_full += usize::from(full.page.groups.is_empty());
            dead_matches_only += usize::from(bare.page.groups.is_empty());
            observe(&full);
        }
    }

    let rate = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let exposures: Vec<f64> = catalog
        .videos()
        .filter(|v| v.available)
        .map(|v| exposure.get(&v.id).copied().unwrap_or(0.0))
        .collect();

    EvalReport {
        fetch_success_at_k: (1..=config.max_prefix).map(|p| (p, rate(successes[p], fetch_sessions))).collect(),
        dead_end_rate: DeadEndRates {
            matches_only: rate(dead_matches_only, unavailable_queries),
            full: rate(dead_full, unavailable_queries),
        },
        recommendation_popularity_gini: gini(&exposures),
        groups: GroupStats {
            pages,
            mean_groups_per_page: rate(group_total, pages),
            dedup_violations,
        },
        provenance: ReportProvenance {
            seed: config.seed,
            holdout: config.holdout,
            k: config.k,
            max_prefix: config.max_prefix,
            catalog_entities: catalog.len(),
            train_events,
            heldout_profiles,
            fetch_sessions,
            unavailable_target_queries: unavailable_queries,
        },
    }
}

/// Splits the log, builds a snapshot from the train part, and replays the rest.
pub fn evaluate(
    catalog: &Catalog,
    log: &InteractionLog,
    model: RelevanceModel,
    groups: Vec<GroupDefinition>,
    engine: EngineConfig,
    config: &EvalConfig,
) -> EvalReport {
    let (train, heldout) = split_profiles(log, config.holdout, config.seed);
    let heldout_profiles: BTreeSet<&str> = heldout
        .plays
        .iter()
        .map(|p| p.profile.as_str())
        .chain(heldout.searches.iter().map(|s| s.profile.as_str()))
        .collect();
    let snapshot = EngineSnapshot::build(catalog.clone(), &train, model, groups, engine, 1);
    evaluate_snapshot(&snapshot, &heldout, config, train.len(), heldout_profiles.len())
}
