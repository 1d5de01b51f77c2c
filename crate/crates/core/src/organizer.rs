//! Turns a ranked result list into labeled rows.
//!
//! Candidate rows come from editorial group definitions applied to the
//! dominant query facet. Rows are then picked greedily: each pick takes the
//! candidate with the highest value, where value is the definition priority
//! times the score mass of its remaining members, discounted by its Jaccard
//! overlap with rows already picked. Picked members are removed from every
//! other candidate, so a video lands in at most one row.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, Entity, EntityId};
use crate::facet::{Facet, FacetEstimate, IntentEstimate};
use crate::ranker::ScoredResult;

/// Multiplier applied to the favored group family (anchor rows for narrow
/// queries, tag rows for broad ones).
pub const FOCUS_BOOST: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupKind {
    ExactMatch,
    SimilarToAnchor,
    /// One row per tag when `None`; a single fixed-tag row otherwise.
    TagRow(Option<String>),
    TalentCredits,
    CollectionMembers,
    FansOfUnavailable,
}

impl GroupKind {
    pub fn is_anchor_kind(&self) -> bool {
        !matches!(self, GroupKind::TagRow(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDefinition {
    pub id: String,
    pub kind: GroupKind,
    pub label_template: String,
    pub min_size: usize,
    pub max_size: usize,
    pub priority: f64,
    pub applicable_facets: BTreeSet<Facet>,
}

#[derive(Debug, Error, PartialEq)]
pub enum OrganizerError {
    #[error("group definition {id:?}: {reason}")]
    InvalidDefinition { id: String, reason: String },
    #[error("template {template:?}: unknown placeholder {{{name}}}")]
    UnknownPlaceholder { template: String, name: String },
    #[error("template {0:?}: unterminated placeholder")]
    Unterminated(String),
    #[error("invalid group definition file: {0}")]
    Parse(String),
    #[error("pill anchor {0} is not a video in the catalog")]
    NotAVideo(EntityId),
}

impl GroupDefinition {
    pub fn validate(&self) -> Result<(), OrganizerError> {
        let invalid = |reason: &str| OrganizerError::InvalidDefinition { id: self.id.clone(), reason: reason.into() };
        if self.id.is_empty() {
            return Err(invalid("empty id"));
        }
        if self.min_size < 1 || self.min_size > self.max_size {
            return Err(invalid("sizes must satisfy 1 <= min_size <= max_size"));
        }
        if !(self.priority > 0.0 && self.priority <= 1.0) {
            return Err(invalid("priority must lie in (0, 1]"));
        }
        let probe = render(&self.label_template, Some("x"), Some("x"))?;
        if probe.trim().is_empty() {
            return Err(invalid("label renders empty"));
        }
        Ok(())
    }
}

/// Substitutes `{anchor}` and `{tag}`; an absent value renders as empty.
fn render(template: &str, anchor: Option<&str>, tag: Option<&str>) -> Result<String, OrganizerError> {
    let mut out = String::with_capacity(template.len() + 16);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or_else(|| OrganizerError::Unterminated(template.into()))?;
        let name = &after[..close];
        let value = match name {
            "anchor" => anchor,
            "tag" => tag,
            _ => {
                return Err(OrganizerError::UnknownPlaceholder { template: template.into(), name: name.into() })
            }
        };
        out.push_str(value.unwrap_or_default());
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn uses_anchor(template: &str) -> bool {
    template.contains("{anchor}")
}

/// Parses and validates a JSON list of group definitions.
pub fn load_group_definitions(text: &str) -> Result<Vec<GroupDefinition>, OrganizerError> {
    let defs: Vec<GroupDefinition> = serde_json::from_str(text).map_err(|e| OrganizerError::Parse(e.to_string()))?;
    let mut ids = HashSet::new();
    for def in &defs {
        def.validate()?;
        if !ids.insert(def.id.as_str()) {
            return Err(OrganizerError::InvalidDefinition { id: def.id.clone(), reason: "duplicate id".into() });
        }
    }
    Ok(defs)
}

pub const DEFAULT_GROUPS_JSON: &str = include_str!("../data/groups.json");

pub fn default_group_definitions() -> Vec<GroupDefinition> {
    load_group_definitions(DEFAULT_GROUPS_JSON).expect("bundled group definitions are valid")
}

/// A row that may make it onto the page.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGroup {
    pub definition: String,
    pub kind: GroupKind,
    pub header: String,
    pub anchor: Option<EntityId>,
    /// In ranked order.
    pub members: Vec<EntityId>,
    pub priority: f64,
    pub min_size: usize,
    pub max_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultGroup {
    pub header: String,
    pub videos: Vec<EntityId>,
    pub definition: String,
    pub anchor: Option<EntityId>,
}

pub fn generate_candidates(
    ranked: &[ScoredResult],
    facets: &FacetEstimate,
    catalog: &Catalog,
    defs: &[GroupDefinition],
) -> Result<Vec<CandidateGroup>, OrganizerError> {
    let mut out = Vec::new();
    if ranked.is_empty() {
        return Ok(out);
    }
    let facet = facets.argmax();
    let anchor = facets.anchor(facet);
    let anchor_entity = anchor.and_then(|a| catalog.entity(a));
    let anchor_name = anchor_entity.map(|e| e.display_name());

    for def in defs.iter().filter(|d| d.applicable_facets.contains(&facet)) {
        let mut push = |members: Vec<EntityId>, tag: Option<&str>, anchor: Option<EntityId>| -> Result<(), OrganizerError> {
            let header = render(&def.label_template, anchor_name, tag)?;
            if members.len() < def.min_size || header.trim().is_empty() {
                return Ok(());
            }
            out.push(CandidateGroup {
                definition: def.id.clone(),
                kind: def.kind.clone(),
                header,
                anchor,
                members: members.into_iter().take(def.max_size).collect(),
                priority: def.priority,
                min_size: def.min_size,
                max_size: def.max_size,
            });
            Ok(())
        };
        let select = |keep: &dyn Fn(&ScoredResult) -> bool| -> Vec<EntityId> {
            ranked.iter().filter(|r| keep(r)).map(|r| r.video).collect()
        };
        if def.kind.is_anchor_kind() && uses_anchor(&def.label_template) && anchor_name.is_none() {
            // Validate the template even when no row can be built from it.
            render(&def.label_template, None, None)?;
            continue;
        }
        match &def.kind {
            GroupKind::ExactMatch => {
                push(select(&|r| r.features.full_match()), None, anchor)?;
            }
            GroupKind::SimilarToAnchor | GroupKind::FansOfUnavailable => {
                let Some(a) = anchor else { continue };
                push(select(&|r| r.anchors.contains(&a)), None, Some(a))?;
            }
            GroupKind::TalentCredits => {
                let Some(Entity::Talent(t)) = anchor_entity else { continue };
                push(select(&|r| t.credits.contains(&r.video)), None, anchor)?;
            }
            GroupKind::CollectionMembers => {
                let Some(Entity::Collection(c)) = anchor_entity else { continue };
                push(select(&|r| c.members.contains(&r.video)), None, anchor)?;
            }
            GroupKind::TagRow(Some(tag)) => {
                let has = |r: &ScoredResult| catalog.video(r.video).is_some_and(|v| v.tags.contains(tag));
                push(select(&has), Some(tag), None)?;
            }
            GroupKind::TagRow(None) => {
                let mut by_tag: BTreeMap<&str, Vec<EntityId>> = BTreeMap::new();
                for r in ranked {
                    for tag in catalog.video(r.video).map(|v| v.tags.as_slice()).unwrap_or_default() {
                        by_tag.entry(tag).or_default().push(r.video);
                    }
                }
                for (tag, members) in by_tag {
                    push(members, Some(tag), None)?;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankParams {
    pub max_groups: usize,
    pub lambda_div: f64,
    pub specificity: f64,
    pub tau_narrow: f64,
}

impl Default for RankParams {
    fn default() -> Self {
        RankParams { max_groups: 10, lambda_div: 0.5, specificity: 0.0, tau_narrow: 0.6 }
    }
}

pub fn jaccard(a: &[EntityId], b: &[EntityId]) -> f64 {
    let a: HashSet<_> = a.iter().collect();
    let b: HashSet<_> = b.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Value of picking `candidate` now, given its remaining members and the
/// original members of rows already picked.
pub fn group_value(
    candidate: &CandidateGroup,
    remaining_members: &[EntityId],
    picked_originals: &[&[EntityId]],
    scores: &HashMap<EntityId, f64>,
    params: RankParams,
) -> f64 {
    let mass: f64 = remaining_members.iter().map(|v| scores.get(v).copied().unwrap_or(0.0)).sum();
    let overlap = picked_originals
        .iter()
        .map(|p| jaccard(&candidate.members, p))
        .fold(0.0, f64::max);
    let narrow = params.specificity >= params.tau_narrow;
    let boost = if candidate.kind.is_anchor_kind() == narrow { FOCUS_BOOST } else { 1.0 };
    candidate.priority * mass * (1.0 - params.lambda_div * overlap) * boost
}

/// Greedy row selection with member removal and overlap discount.
pub fn rank_groups(candidates: &[CandidateGroup], ranked: &[ScoredResult], params: RankParams) -> Vec<ResultGroup> {
    let scores: HashMap<EntityId, f64> = ranked.iter().map(|r| (r.video, r.score)).collect();
    let mut remaining: Vec<(usize, Vec<EntityId>)> = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.members.len() >= c.min_size)
        .map(|(i, c)| (i, c.members.clone()))
        .collect();
    let mut picked: Vec<usize> = Vec::new();
    let mut out = Vec::new();

    while out.len() < params.max_groups.max(1) {
        let mut best: Option<(usize, f64)> = None;
        for (slot, (idx, members)) in remaining.iter().enumerate() {
            let c = &candidates[*idx];
            let originals: Vec<&[EntityId]> = picked.iter().map(|&p| candidates[p].members.as_slice()).collect();
            let value = group_value(c, members, &originals, &scores, params);
            if value <= 0.0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((b, bv)) => {
                    let bc = &candidates[remaining[b].0];
                    value
                        .total_cmp(&bv)
                        .then_with(|| bc.definition.cmp(&c.definition))
                        .then_with(|| bc.header.cmp(&c.header))
                        .is_gt()
                }
            };
            if better {
                best = Some((slot, value));
            }
        }
        let Some((slot, _)) = best else { break };
        let (idx, members) = remaining.swap_remove(slot);
        let taken: HashSet<EntityId> = members.iter().copied().collect();
        for (_, other_members) in remaining.iter_mut() {
            other_members.retain(|v| !taken.contains(v));
        }
        remaining.retain(|(i, m)| m.len() >= candidates[*i].min_size);
        // Keep candidate order stable for deterministic tie handling.
        remaining.sort_by_key(|(i, _)| *i);
        let c = &candidates[idx];
        picked.push(idx);
        out.push(ResultGroup {
            header: c.header.clone(),
            videos: members,
            definition: c.definition.clone(),
            anchor: c.anchor,
        });
    }
    out
}

/// Tags of an anchor video, most shared with the ranked results first.
pub fn make_pills(
    anchor: EntityId,
    catalog: &Catalog,
    ranked: &[ScoredResult],
    max_pills: usize,
) -> Result<Vec<String>, OrganizerError> {
    let video = catalog.video(anchor).ok_or(OrganizerError::NotAVideo(anchor))?;
    let mut pills: Vec<(usize, &String)> = video
        .tags
        .iter()
        .map(|tag| {
            let shared = ranked
                .iter()
                .filter(|r| catalog.video(r.video).is_some_and(|v| v.available && v.tags.contains(tag)))
                .count();
            (shared, tag)
        })
        .collect();
    pills.sort_by(|(ca, ta), (cb, tb)| cb.cmp(ca).then(ta.cmp(tb)));
    Ok(pills.into_iter().take(max_pills).map(|(_, t)| t.clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchPage {
    pub groups: Vec<ResultGroup>,
    pub pills: Vec<String>,
    pub facets: FacetEstimate,
    pub intent: IntentEstimate,
}

impl SearchPage {
    pub fn video_count(&self) -> usize {
        self.groups.iter().map(|g| g.videos.len()).sum()
    }

    /// Videos appearing in more than one row.
    pub fn duplicate_videos(&self) -> usize {
        let mut seen = HashSet::new();
        self.groups.iter().flat_map(|g| &g.videos).filter(|v| !seen.insert(**v)).count()
    }
}

pub fn compose_page(
    mut groups: Vec<ResultGroup>,
    facets: FacetEstimate,
    intent: IntentEstimate,
    pills: Vec<String>,
) -> SearchPage {
    let mut seen: HashSet<String> = HashSet::new();
    for g in groups.iter_mut() {
        if !seen.insert(g.header.clone()) {
            let base = g.header.clone();
            let mut n = 2;
            while !seen.insert(format!("{base} · {n}")) {
                n += 1;
            }
            g.header = format!("{base} · {n}");
        }
    }
    let pills = if facets.argmax() == Facet::UnavailableVideo { pills } else { Vec::new() };
    SearchPage { groups, pills, facets, intent }
}
