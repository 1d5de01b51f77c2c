//! Feature extraction, logistic relevance scoring and training, and the
//! blend of keyword matches with recommendations into one ranked list.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{InteractionLog, SearchRecommendation};
use crate::catalog::{Catalog, Entity, EntityId};
use crate::facet::FacetEstimate;
use crate::index::{normalize, SearchMatch};

pub const FEATURE_COUNT: usize = 8;
pub const SCHEMA_VERSION: u32 = 1;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "lexical_score",
    "full_match",
    "association_score",
    "popularity",
    "facet_alignment",
    "is_match",
    "is_recommendation",
    "query_length_norm",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn lexical_score(&self) -> f64 {
        self.0[0]
    }

    pub fn full_match(&self) -> bool {
        self.0[1] > 0.5
    }

    pub fn association_score(&self) -> f64 {
        self.0[2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceModel {
    pub weights: [f64; FEATURE_COUNT],
    pub bias: f64,
    #[serde(default = "schema_version")]
    pub schema_version: u32,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

impl Default for RelevanceModel {
    fn default() -> Self {
        RelevanceModel::zero()
    }
}

impl RelevanceModel {
    pub fn zero() -> Self {
        RelevanceModel { weights: [0.0; FEATURE_COUNT], bias: 0.0, schema_version: SCHEMA_VERSION }
    }

    /// Hand-set model used until one is trained.
    pub fn prior() -> Self {
        RelevanceModel {
            weights: [3.0, 1.0, 3.0, 0.5, 1.0, 0.5, 0.5, 0.0],
            bias: -3.0,
            schema_version: SCHEMA_VERSION,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, RankerError> {
        let model: RelevanceModel = serde_json::from_str(text).map_err(RankerError::Model)?;
        if model.schema_version != SCHEMA_VERSION {
            return Err(RankerError::Schema(model.schema_version));
        }
        if !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(RankerError::NonFinite);
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn logit(&self, f: &FeatureVector) -> f64 {
        self.bias + self.weights.iter().zip(f.0.iter()).map(|(w, x)| w * x).sum::<f64>()
    }

    /// Relevance in the open interval (0, 1).
    pub fn score(&self, f: &FeatureVector) -> f64 {
        sigmoid(self.logit(f)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Error)]
pub enum RankerError {
    #[error("video {0} is neither a match nor a recommendation")]
    UnknownCandidate(EntityId),
    #[error("training data needs both positive and negative examples")]
    SingleClass,
    #[error("invalid model file: {0}")]
    Model(#[source] serde_json::Error),
    #[error("unsupported feature schema version {0}")]
    Schema(u32),
    #[error("model contains non-finite values")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Match,
    Recommendation,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResult {
    pub video: EntityId,
    pub provenance: Provenance,
    pub features: FeatureVector,
    pub score: f64,
    /// Recommendation anchors that led to this video.
    pub anchors: Vec<EntityId>,
}

/// Whether `video` is, or is credited/membered by, the argmax-facet anchor.
fn aligned(video: EntityId, facets: &FacetEstimate, catalog: &Catalog) -> bool {
    let Some(anchor) = facets.argmax_anchor() else { return false };
    if anchor == video {
        return true;
    }
    match catalog.entity(anchor) {
        Some(Entity::Talent(t)) => t.credits.contains(&video),
        Some(Entity::Collection(c)) => c.members.contains(&video),
        _ => false,
    }
}

pub fn extract_features(
    video: EntityId,
    matches: &[SearchMatch],
    recs: &[SearchRecommendation],
    facets: &FacetEstimate,
    query: &str,
    catalog: &Catalog,
) -> Result<FeatureVector, RankerError> {
    let m = matches.iter().find(|m| m.entity == video);
    let r = recs.iter().find(|r| r.video == video);
    if m.is_none() && r.is_none() {
        return Err(RankerError::UnknownCandidate(video));
    }
    Ok(features_from(video, m, r, facets, query_length_norm(query), catalog))
}

fn query_length_norm(query: &str) -> f64 {
    normalize(query).chars().count().min(20) as f64 / 20.0
}

fn features_from(
    video: EntityId,
    m: Option<&SearchMatch>,
    r: Option<&SearchRecommendation>,
    facets: &FacetEstimate,
    query_len: f64,
    catalog: &Catalog,
) -> FeatureVector {
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    FeatureVector([
        m.map_or(0.0, |m| m.lexical_score),
        flag(m.is_some_and(|m| m.full_match)),
        r.map_or(0.0, |r| r.association_score),
        catalog.video(video).map_or(0.0, |v| v.popularity),
        flag(aligned(video, facets, catalog)),
        flag(m.is_some()),
        flag(r.is_some()),
        query_len,
    ])
}

/// Union of matched and recommended videos, scored and truncated to `k`.
pub fn blend_and_rank(
    matches: &[SearchMatch],
    recs: &[SearchRecommendation],
    model: &RelevanceModel,
    facets: &FacetEstimate,
    query: &str,
    catalog: &Catalog,
    k: usize,
) -> Vec<ScoredResult> {
    let mut pool: BTreeMap<EntityId, (Option<&SearchMatch>, Option<&SearchRecommendation>)> = BTreeMap::new();
    for m in matches.iter().filter(|m| catalog.is_available_video(m.entity)) {
        pool.entry(m.entity).or_default().0.get_or_insert(m);
    }
    for r in recs.iter().filter(|r| catalog.is_available_video(r.video)) {
        pool.entry(r.video).or_default().1.get_or_insert(r);
    }
    let query_len = query_length_norm(query);
    let results: Vec<ScoredResult> = pool
        .into_iter()
        .map(|(video, (m, r))| {
            let features = features_from(video, m, r, facets, query_len, catalog);
            let provenance = match (m, r) {
                (Some(_), Some(_)) => Provenance::Both,
                (Some(_), None) => Provenance::Match,
                _ => Provenance::Recommendation,
            };
            ScoredResult {
                video,
                provenance,
                score: model.score(&features),
                features,
                anchors: r.map(|r| r.anchors.clone()).unwrap_or_default(),
            }
        })
        .collect();
    let mut keyed: Vec<(f64, ScoredResult)> =
        results.into_iter().map(|r| (catalog.popularity(r.video), r)).collect();
    keyed.sort_by(|(pa, a), (pb, b)| {
        b.score.total_cmp(&a.score).then(pb.total_cmp(pa)).then(a.video.cmp(&b.video))
    });
    keyed.into_iter().take(k).map(|(_, r)| r).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.5, epochs: 500, l2: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: RelevanceModel,
    /// Objective before each epoch's update, followed by the final objective.
    pub losses: Vec<f64>,
    pub final_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example {
    pub features: FeatureVector,
    pub label: bool,
}

/// Gradient of the objective, weights first, bias last.
pub type Gradient = [f64; FEATURE_COUNT + 1];

/// Mean log-loss plus `l2 / 2 * |w|^2` (bias unregularized), and its gradient.
pub fn loss_and_gradient(model: &RelevanceModel, examples: &[Example], l2: f64) -> (f64, Gradient) {
    let n = examples.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = [0.0; FEATURE_COUNT + 1];
    for ex in examples {
        let z = model.logit(&ex.features);
        let y = if ex.label { 1.0 } else { 0.0 };
        // log(1 + e^z) - y z, computed stably.
        loss += softplus(z) - y * z;
        let residual = sigmoid(z) - y;
        for (g, x) in grad.iter_mut().zip(ex.features.0.iter()) {
            *g += residual * x;
        }
        grad[FEATURE_COUNT] += residual;
    }
    loss /= n;
    for g in grad.iter_mut() {
        *g /= n;
    }
    for (g, w) in grad.iter_mut().zip(model.weights.iter()) {
        *g += l2 * w;
    }
    loss += 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    (loss, grad)
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Full-batch gradient descent from the zero model.
pub fn train(examples: &[Example], config: TrainConfig) -> Result<TrainOutcome, RankerError> {
    let positives = examples.iter().filter(|e| e.label).count();
    if positives == 0 || positives == examples.len() {
        return Err(RankerError::SingleClass);
    }
    let mut model = RelevanceModel::zero();
    let mut losses = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        let (loss, grad) = loss_and_gradient(&model, examples, config.l2);
        losses.push(loss);
        for (w, g) in model.weights.iter_mut().zip(grad.iter()) {
            *w -= config.learning_rate * g;
        }
        model.bias -= config.learning_rate * grad[FEATURE_COUNT];
    }
    let (final_loss, _) = loss_and_gradient(&model, examples, config.l2);
    losses.push(final_loss);
    Ok(TrainOutcome { model, losses, final_loss })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledData {
    pub examples: Vec<Example>,
    pub positives: usize,
    pub negatives: usize,
    /// Search events whose selection was not among the replayed impressions.
    pub skipped: usize,
}

/// Turns logged selections into pointwise examples. `replay` reconstructs the
/// impressions shown for a logged query, in display order.
///
/// The selected result is a positive; every other impression at or above
/// `click + 2` is a negative.
pub fn label_from_logs<F>(log: &InteractionLog, mut replay: F) -> LabeledData
where
    F: FnMut(&str) -> Vec<(EntityId, FeatureVector)>,
{
    let mut data = LabeledData::default();
    for event in &log.searches {
        let shown = replay(&event.query);
        let Some(click) = shown.iter().position(|(id, _)| *id == event.selected) else {
            data.skipped += 1;
            continue;
        };
        for (pos, (_, features)) in shown.iter().enumerate().take(click + 3) {
            let label = pos == click;
            data.examples.push(Example { features: *features, label });
            if label {
                data.positives += 1;
            } else {
                data.negatives += 1;
            }
        }
    }
    data
}
