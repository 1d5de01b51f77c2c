//! Query facet detection and the specificity/intent estimates that steer
//! broad versus narrow organization.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::behavior::QueryAssociationModel;
use crate::catalog::{Catalog, Entity, EntityId};
use crate::index::{normalize, SearchMatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Facet {
    AvailableVideo,
    UnavailableVideo,
    Talent,
    Collection,
}

impl Facet {
    pub const ALL: [Facet; 4] = [Facet::AvailableVideo, Facet::UnavailableVideo, Facet::Talent, Facet::Collection];

    pub fn of(entity: Entity<'_>) -> Facet {
        match entity {
            Entity::Video(v) if v.available => Facet::AvailableVideo,
            Entity::Video(_) => Facet::UnavailableVideo,
            Entity::Talent(_) => Facet::Talent,
            Entity::Collection(_) => Facet::Collection,
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Facet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Facet::AvailableVideo => "available_video",
            Facet::UnavailableVideo => "unavailable_video",
            Facet::Talent => "talent",
            Facet::Collection => "collection",
        })
    }
}

/// Relative weight of lexical and behavioral evidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceWeights {
    pub lexical: f64,
    pub behavioral: f64,
}

impl Default for EvidenceWeights {
    fn default() -> Self {
        EvidenceWeights { lexical: 0.5, behavioral: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetEstimate {
    pub distribution: BTreeMap<Facet, f64>,
    pub anchors: BTreeMap<Facet, Option<EntityId>>,
    pub specificity: f64,
}

impl FacetEstimate {
    pub fn uniform(specificity: f64) -> Self {
        FacetEstimate {
            distribution: Facet::ALL.iter().map(|&f| (f, 0.25)).collect(),
            anchors: Facet::ALL.iter().map(|&f| (f, None)).collect(),
            specificity,
        }
    }

    pub fn probability(&self, facet: Facet) -> f64 {
        self.distribution.get(&facet).copied().unwrap_or(0.0)
    }

    pub fn anchor(&self, facet: Facet) -> Option<EntityId> {
        self.anchors.get(&facet).copied().flatten()
    }

    /// Most probable facet; ties resolve in `Facet::ALL` order.
    pub fn argmax(&self) -> Facet {
        let mut best = Facet::AvailableVideo;
        for f in Facet::ALL {
            if self.probability(f) > self.probability(best) {
                best = f;
            }
        }
        best
    }

    pub fn argmax_anchor(&self) -> Option<EntityId> {
        self.anchor(self.argmax())
    }

    /// Facet anchors weighted by their facet's probability, in facet order.
    pub fn weighted_anchors(&self) -> Vec<(EntityId, f64)> {
        Facet::ALL
            .iter()
            .filter_map(|&f| self.anchor(f).map(|a| (a, self.probability(f))))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntentEstimate {
    pub fetch_probability: f64,
}

/// Per-entity evidence before aggregation into facets.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityEvidence {
    pub entity: EntityId,
    pub facet: Facet,
    pub popularity: f64,
    pub lexical: f64,
    /// Max-normalized selection score of this entity for the query.
    pub behavioral: f64,
    /// Raw selection count, summed per facet for the facet-level mass.
    pub selections: f64,
}

/// Gathers lexical and behavioral evidence for every entity that has any.
pub fn collect_evidence(
    query: &str,
    matches: &[SearchMatch],
    assoc: &QueryAssociationModel,
    catalog: &Catalog,
) -> Vec<EntityEvidence> {
    fn slot<'m>(
        by_entity: &'m mut BTreeMap<EntityId, EntityEvidence>,
        catalog: &Catalog,
        id: EntityId,
    ) -> Option<&'m mut EntityEvidence> {
        let entity = catalog.entity(id)?;
        Some(by_entity.entry(id).or_insert_with(|| EntityEvidence {
            entity: id,
            facet: Facet::of(entity),
            popularity: catalog.popularity(id),
            lexical: 0.0,
            behavioral: 0.0,
            selections: 0.0,
        }))
    }
    let mut by_entity: BTreeMap<EntityId, EntityEvidence> = BTreeMap::new();
    for m in matches {
        if let Some(e) = slot(&mut by_entity, catalog, m.entity) {
            e.lexical = e.lexical.max(m.lexical_score);
        }
    }
    if let Some(raw) = assoc.raw(query) {
        let max = raw.values().copied().max().unwrap_or(0) as f64;
        for (&id, &count) in raw {
            if let Some(e) = slot(&mut by_entity, catalog, id) {
                e.selections = count as f64;
                e.behavioral = if max > 0.0 { count as f64 / max } else { 0.0 };
            }
        }
    }
    by_entity.into_values().collect()
}

/// Combines per-entity evidence into a facet distribution and per-facet anchors.
///
/// Facet evidence is `w_lex * best lexical score in the class` plus
/// `w_beh * class selection mass / largest class selection mass`.
pub fn aggregate_evidence(evidence: &[EntityEvidence], weights: EvidenceWeights, specificity: f64) -> FacetEstimate {
    let mut best_lexical = [0.0f64; 4];
    let mut mass = [0.0f64; 4];
    let mut anchors: [Option<(&EntityEvidence, f64)>; 4] = [None; 4];
    for e in evidence {
        let s = e.facet.slot();
        best_lexical[s] = best_lexical[s].max(e.lexical);
        mass[s] += e.selections;
        let score = weights.lexical * e.lexical + weights.behavioral * e.behavioral;
        if score <= 0.0 {
            continue;
        }
        let better = match anchors[s] {
            None => true,
            Some((cur, cur_score)) => score
                .total_cmp(&cur_score)
                .then(e.popularity.total_cmp(&cur.popularity))
                .then(cur.entity.cmp(&e.entity))
                .is_gt(),
        };
        if better {
            anchors[s] = Some((e, score));
        }
    }
    let max_mass = mass.iter().copied().fold(0.0, f64::max);
    let raw: Vec<f64> = (0..4)
        .map(|s| {
            let behavioral = if max_mass > 0.0 { mass[s] / max_mass } else { 0.0 };
            weights.lexical * best_lexical[s] + weights.behavioral * behavioral
        })
        .collect();
    let Some(distribution) = normalize_distribution(&raw) else {
        return FacetEstimate::uniform(specificity);
    };
    FacetEstimate {
        distribution,
        anchors: Facet::ALL.iter().map(|&f| (f, anchors[f.slot()].map(|(e, _)| e.entity))).collect(),
        specificity,
    }
}

/// Normalizes raw facet evidence (in `Facet::ALL` order) to sum to one.
/// `None` when there is no evidence at all.
pub fn normalize_distribution(raw: &[f64]) -> Option<BTreeMap<Facet, f64>> {
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return None;
    }
    Some(Facet::ALL.iter().zip(raw).map(|(&f, &r)| (f, r / total)).collect())
}

pub fn detect_facet(
    query: &str,
    matches: &[SearchMatch],
    assoc: &QueryAssociationModel,
    catalog: &Catalog,
    weights: EvidenceWeights,
) -> FacetEstimate {
    let evidence = collect_evidence(query, matches, assoc, catalog);
    aggregate_evidence(&evidence, weights, estimate_specificity(query, matches))
}

/// Half query length (saturating at 12 chars), half top-match margin.
pub fn estimate_specificity(query: &str, matches: &[SearchMatch]) -> f64 {
    let length = normalize(query).chars().count().min(12) as f64 / 12.0;
    let margin = match matches {
        [] => 0.0,
        [only] => only.lexical_score,
        [first, second, ..] => first.lexical_score - second.lexical_score,
    };
    (0.5 * length + 0.5 * margin).clamp(0.0, 1.0)
}

/// Fetch probability is a direct proxy of specificity.
pub fn estimate_intent(facets: &FacetEstimate) -> IntentEstimate {
    IntentEstimate { fetch_probability: facets.specificity.clamp(0.0, 1.0) }
}
