//! The per-keystroke pipeline over an immutable snapshot of every model.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{
    load_logs, recommend_for_context, BehaviorError, CoPlayModel, InteractionLog, QueryAssociationModel,
};
use crate::catalog::{load_catalog, Catalog, CatalogError, EntityId};
use crate::facet::{detect_facet, estimate_intent, EvidenceWeights, Facet};
use crate::index::InstantIndex;
use crate::organizer::{
    compose_page, default_group_definitions, generate_candidates, load_group_definitions, make_pills, rank_groups,
    GroupDefinition, OrganizerError, RankParams, SearchPage,
};
use crate::ranker::{blend_and_rank, Provenance, RankerError, RelevanceModel, ScoredResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub min_support: u32,
    pub evidence: EvidenceWeights,
    /// Recommendations requested per query before blending.
    pub recommendations: usize,
    pub default_k: usize,
    pub max_pills: usize,
    pub max_groups: usize,
    pub lambda_div: f64,
    pub tau_narrow: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            min_support: 1,
            evidence: EvidenceWeights::default(),
            recommendations: 100,
            default_k: 40,
            max_pills: 4,
            max_groups: 10,
            lambda_div: 0.5,
            tau_narrow: 0.6,
        }
    }
}

/// Which result sources feed the page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Full,
    MatchesOnly,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("catalog")]
    Catalog(#[from] CatalogError),
    #[error("logs")]
    Logs(#[from] BehaviorError),
    #[error("model")]
    Model(#[from] RankerError),
    #[error("groups")]
    Groups(#[from] OrganizerError),
}

/// Input files a snapshot is built from. Optional inputs fall back to an
/// empty log, the prior model and the bundled group definitions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Sources {
    pub catalog: PathBuf,
    pub logs: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub groups: Option<PathBuf>,
}

fn open(path: &Path) -> Result<BufReader<File>, EngineError> {
    File::open(path).map(BufReader::new).map_err(|source| EngineError::Io { path: path.into(), source })
}

fn read(path: &Path) -> Result<String, EngineError> {
    std::fs::read_to_string(path).map_err(|source| EngineError::Io { path: path.into(), source })
}

pub fn load_group_file(path: &Path) -> Result<Vec<GroupDefinition>, EngineError> {
    Ok(load_group_definitions(&read(path)?)?)
}

pub fn load_model_file(path: &Path) -> Result<RelevanceModel, EngineError> {
    Ok(RelevanceModel::from_json(&read(path)?)?)
}

/// Everything a request needs, built once and never mutated.
#[derive(Debug)]
pub struct EngineSnapshot {
    pub version: u64,
    pub catalog: Catalog,
    pub index: InstantIndex,
    pub coplay: CoPlayModel,
    pub associations: QueryAssociationModel,
    pub model: RelevanceModel,
    pub groups: Vec<GroupDefinition>,
    pub config: EngineConfig,
}

/// Page plus the ranked list it was organized from.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub query: String,
    pub page: SearchPage,
    pub ranked: Vec<ScoredResult>,
}

impl EngineSnapshot {
    pub fn build(
        catalog: Catalog,
        log: &InteractionLog,
        model: RelevanceModel,
        groups: Vec<GroupDefinition>,
        config: EngineConfig,
        version: u64,
    ) -> Self {
        EngineSnapshot {
            version,
            index: InstantIndex::build(&catalog),
            coplay: CoPlayModel::build(log, config.min_support),
            associations: QueryAssociationModel::build(log),
            catalog,
            model,
            groups,
            config,
        }
    }

    /// Reads and validates every source; nothing is built unless all parse.
    pub fn load(sources: &Sources, config: EngineConfig, version: u64) -> Result<Self, EngineError> {
        let catalog = load_catalog(open(&sources.catalog)?)?;
        let log = match &sources.logs {
            Some(p) => load_logs(open(p)?, &catalog)?,
            None => InteractionLog::default(),
        };
        let model = match &sources.model {
            Some(p) => load_model_file(p)?,
            None => RelevanceModel::prior(),
        };
        let groups = match &sources.groups {
            Some(p) => load_group_file(p)?,
            None => default_group_definitions(),
        };
        Ok(EngineSnapshot::build(catalog, &log, model, groups, config, version))
    }

    pub fn search(&self, query: &str, k: usize) -> SearchOutcome {
        self.search_with(query, k, Policy::Full)
    }

    /// match -> facets -> recommendations -> blend -> rows -> page.
    pub fn search_with(&self, query: &str, k: usize, policy: Policy) -> SearchOutcome {
        let catalog = &self.catalog;
        let matches = self.index.match_prefix(query);
        let facets = detect_facet(query, &matches, &self.associations, catalog, self.config.evidence);
        let intent = estimate_intent(&facets);
        let recs = match policy {
            Policy::Full => recommend_for_context(
                &facets.weighted_anchors(),
                query,
                &self.coplay,
                &self.associations,
                catalog,
                self.config.recommendations,
            ),
            Policy::MatchesOnly => Vec::new(),
        };
        let ranked = blend_and_rank(&matches, &recs, &self.model, &facets, query, catalog, k);
        // Definitions are validated on load, so rendering can not fail here.
        let candidates = generate_candidates(&ranked, &facets, catalog, &self.groups).unwrap_or_default();
        let params = RankParams {
            max_groups: self.config.max_groups,
            lambda_div: self.config.lambda_div,
            specificity: facets.specificity,
            tau_narrow: self.config.tau_narrow,
        };
        let groups = rank_groups(&candidates, &ranked, params);
        let pills = match facets.argmax_anchor() {
            Some(anchor) if facets.argmax() == Facet::UnavailableVideo => {
                make_pills(anchor, catalog, &ranked, self.config.max_pills).unwrap_or_default()
            }
            _ => Vec::new(),
        };
        let page = compose_page(groups, facets, intent, pills);
        SearchOutcome { query: query.to_owned(), page, ranked }
    }

    /// Runs the pipeline and renders the wire response, timing included.
    pub fn handle_search(&self, query: &str, k: usize) -> SearchResponse {
        let start = Instant::now();
        let outcome = self.search(query, k);
        let mut response = SearchResponse::from_outcome(&outcome, self);
        response.timing_ms = start.elapsed().as_secs_f64() * 1e3;
        response
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetDiagnostics {
    pub distribution: BTreeMap<Facet, f64>,
    pub specificity: f64,
    pub fetch_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEvidence {
    pub definition: String,
    pub anchor: Option<EntityId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireVideo {
    pub id: EntityId,
    pub title: String,
    pub available: bool,
    pub score: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireGroup {
    pub header: String,
    pub evidence: GroupEvidence,
    pub videos: Vec<WireVideo>,
}

/// JSON body of `GET /search`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query: String,
    pub facets: FacetDiagnostics,
    pub groups: Vec<WireGroup>,
    pub pills: Vec<String>,
    pub timing_ms: f64,
    pub snapshot: u64,
}

impl SearchResponse {
    pub fn from_outcome(outcome: &SearchOutcome, snapshot: &EngineSnapshot) -> Self {
        let by_id: BTreeMap<EntityId, &ScoredResult> = outcome.ranked.iter().map(|r| (r.video, r)).collect();
        let page = &outcome.page;
        let groups = page
            .groups
            .iter()
            .map(|g| WireGroup {
                header: g.header.clone(),
                evidence: GroupEvidence { definition: g.definition.clone(), anchor: g.anchor },
                videos: g
                    .videos
                    .iter()
                    .filter_map(|id| {
                        let video = snapshot.catalog.video(*id)?;
                        let scored = by_id.get(id)?;
                        Some(WireVideo {
                            id: *id,
                            title: video.title.clone(),
                            available: video.available,
                            score: scored.score,
                            provenance: scored.provenance,
                        })
                    })
                    .collect(),
            })
            .collect();
        SearchResponse {
            query: outcome.query.clone(),
            facets: FacetDiagnostics {
                distribution: page.facets.distribution.clone(),
                specificity: page.facets.specificity,
                fetch_probability: page.intent.fetch_probability,
            },
            groups,
            pills: page.pills.clone(),
            timing_ms: 0.0,
            snapshot: snapshot.version,
        }
    }

    /// Serialized body with the timing field zeroed, for comparisons.
    pub fn body_without_timing(&self) -> String {
        let mut copy = self.clone();
        copy.timing_ms = 0.0;
        serde_json::to_string(&copy).expect("response serializes")
    }
}
