//! Interaction logs and the behavioral models built from them: binary
//! co-play cosine between videos, and query-prefix to selection counts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, Entity, EntityId};
use crate::index::normalize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayEvent {
    pub profile: String,
    pub video: EntityId,
    #[serde(rename = "ts")]
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchEvent {
    pub profile: String,
    pub query: String,
    pub selected: EntityId,
    pub position: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    Play(PlayEvent),
    Search(SearchEvent),
}

/// Validated events, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionLog {
    pub plays: Vec<PlayEvent>,
    pub searches: Vec<SearchEvent>,
    /// Interleaved order as read, for faithful re-serialization.
    order: Vec<LogRecordRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LogRecordRef {
    Play(usize),
    Search(usize),
}

impl InteractionLog {
    pub fn push(&mut self, record: LogRecord) {
        match record {
            LogRecord::Play(p) => {
                self.order.push(LogRecordRef::Play(self.plays.len()));
                self.plays.push(p);
            }
            LogRecord::Search(s) => {
                self.order.push(LogRecordRef::Search(self.searches.len()));
                self.searches.push(s);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.plays.len() + self.searches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> impl Iterator<Item = LogRecord> + '_ {
        self.order.iter().map(|r| match *r {
            LogRecordRef::Play(i) => LogRecord::Play(self.plays[i].clone()),
            LogRecordRef::Search(i) => LogRecord::Search(self.searches[i].clone()),
        })
    }

    /// Keeps only events whose profile satisfies `keep`, preserving order.
    pub fn filter_profiles(&self, mut keep: impl FnMut(&str) -> bool) -> InteractionLog {
        let mut out = InteractionLog::default();
        for record in self.records() {
            let profile = match &record {
                LogRecord::Play(p) => &p.profile,
                LogRecord::Search(s) => &s.profile,
            };
            if keep(profile) {
                out.push(record);
            }
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for record in self.records() {
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BehaviorError {
    #[error("line {line}: malformed log record")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: read failed")]
    Io {
        line: usize,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: unknown entity id {id}")]
    UnknownEntity { line: usize, id: EntityId },
    #[error("item {0} has no plays; similarity undefined")]
    UndefinedItem(EntityId),
}

pub fn load_logs<R: BufRead>(source: R, catalog: &Catalog) -> Result<InteractionLog, BehaviorError> {
    let mut log = InteractionLog::default();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| BehaviorError::Io { line: line_no, source })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LogRecord = serde_json::from_str(&line)
            .map_err(|source| BehaviorError::Malformed { line: line_no, source })?;
        let (id, ok) = match &record {
            LogRecord::Play(p) => (p.video, catalog.video(p.video).is_some()),
            LogRecord::Search(s) => (s.selected, catalog.entity(s.selected).is_some()),
        };
        if !ok {
            return Err(BehaviorError::UnknownEntity { line: line_no, id });
        }
        log.push(record);
    }
    Ok(log)
}

/// A co-played item with its pair count and cosine similarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub video: EntityId,
    pub count: u32,
    pub similarity: f64,
}

/// Distinct-profile co-play counts.
#[derive(Debug, Clone, Default)]
pub struct CoPlayModel {
    item_counts: HashMap<EntityId, u32>,
    pair_counts: HashMap<(EntityId, EntityId), u32>,
    neighbors: HashMap<EntityId, Vec<Neighbor>>,
    min_support: u32,
}

fn pair_key(i: EntityId, j: EntityId) -> (EntityId, EntityId) {
    if i <= j { (i, j) } else { (j, i) }
}

impl CoPlayModel {
    pub fn build(log: &InteractionLog, min_support: u32) -> Self {
        let min_support = min_support.max(1);
        let mut per_profile: HashMap<&str, BTreeSet<EntityId>> = HashMap::new();
        for play in &log.plays {
            per_profile.entry(play.profile.as_str()).or_default().insert(play.video);
        }
        let mut item_counts: HashMap<EntityId, u32> = HashMap::new();
        let mut pair_counts: HashMap<(EntityId, EntityId), u32> = HashMap::new();
        for videos in per_profile.values() {
            let videos: Vec<EntityId> = videos.iter().copied().collect();
            for (a, &i) in videos.iter().enumerate() {
                *item_counts.entry(i).or_default() += 1;
                for &j in &videos[a + 1..] {
                    *pair_counts.entry((i, j)).or_default() += 1;
                }
            }
        }
        pair_counts.retain(|_, c| *c >= min_support);

        let mut neighbors: HashMap<EntityId, Vec<Neighbor>> = HashMap::new();
        for (&(i, j), &count) in &pair_counts {
            let similarity = cosine(count, item_counts[&i], item_counts[&j]);
            neighbors.entry(i).or_default().push(Neighbor { video: j, count, similarity });
            neighbors.entry(j).or_default().push(Neighbor { video: i, count, similarity });
        }
        for list in neighbors.values_mut() {
            list.sort_unstable_by_key(|n| n.video);
        }
        CoPlayModel { item_counts, pair_counts, neighbors, min_support }
    }

    pub fn min_support(&self) -> u32 {
        self.min_support
    }

    /// c(i, j); for i == j the number of profiles that played i.
    pub fn count(&self, i: EntityId, j: EntityId) -> u32 {
        if i == j {
            self.item_counts.get(&i).copied().unwrap_or(0)
        } else {
            self.pair_counts.get(&pair_key(i, j)).copied().unwrap_or(0)
        }
    }

    pub fn pair_count(&self) -> usize {
        self.pair_counts.len()
    }

    pub fn item_count(&self) -> usize {
        self.item_counts.len()
    }

    /// Co-played items of `i` (support-filtered), ascending by id.
    pub fn neighbors(&self, i: EntityId) -> &[Neighbor] {
        self.neighbors.get(&i).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Cosine over binary co-play vectors: c(i,j) / sqrt(c(i,i) c(j,j)).
    pub fn similarity(&self, i: EntityId, j: EntityId) -> Result<f64, BehaviorError> {
        let ci = self.count(i, i);
        let cj = self.count(j, j);
        if ci == 0 {
            return Err(BehaviorError::UndefinedItem(i));
        }
        if cj == 0 {
            return Err(BehaviorError::UndefinedItem(j));
        }
        if i == j {
            return Ok(1.0);
        }
        let (lo, hi) = if i <= j { (ci, cj) } else { (cj, ci) };
        Ok(cosine(self.count(i, j), lo, hi))
    }

    /// Top-k available videos most similar to `anchor`, excluding itself.
    pub fn similar_videos(
        &self,
        anchor: EntityId,
        k: usize,
        catalog: &Catalog,
    ) -> Result<Vec<(EntityId, f64)>, BehaviorError> {
        if self.count(anchor, anchor) == 0 {
            return Err(BehaviorError::UndefinedItem(anchor));
        }
        let mut out = Vec::new();
        for n in self.neighbors(anchor) {
            if catalog.is_available_video(n.video) {
                out.push((n.video, n.similarity));
            }
        }
        sort_scored(&mut out, catalog);
        out.truncate(k);
        Ok(out)
    }
}

/// Symmetric in the two item counts so c(i,j) and c(j,i) agree bit for bit.
fn cosine(pair: u32, a: u32, b: u32) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    (pair as f64 / ((lo as f64) * (hi as f64)).sqrt()).min(1.0)
}

/// Sorts by (score desc, popularity desc, id asc).
pub(crate) fn sort_scored(items: &mut [(EntityId, f64)], catalog: &Catalog) {
    let mut keyed: Vec<(EntityId, f64, f64)> =
        items.iter().map(|&(id, score)| (id, score, catalog.popularity(id))).collect();
    keyed.sort_unstable_by(|(a, sa, pa), (b, sb, pb)| sb.total_cmp(sa).then(pb.total_cmp(pa)).then(a.cmp(b)));
    for (slot, (id, score, _)) in items.iter_mut().zip(keyed) {
        *slot = (id, score);
    }
}

/// Selection counts keyed by the normalized query as typed at selection time.
#[derive(Debug, Clone, Default)]
pub struct QueryAssociationModel {
    counts: HashMap<String, BTreeMap<EntityId, u32>>,
}

impl QueryAssociationModel {
    pub fn build(log: &InteractionLog) -> Self {
        let mut counts: HashMap<String, BTreeMap<EntityId, u32>> = HashMap::new();
        for s in &log.searches {
            let key = normalize(&s.query);
            if key.is_empty() {
                continue;
            }
            *counts.entry(key).or_default().entry(s.selected).or_default() += 1;
        }
        QueryAssociationModel { counts }
    }

    pub fn query_count(&self) -> usize {
        self.counts.len()
    }

    /// Raw selection counts for a query.
    pub fn raw(&self, query: &str) -> Option<&BTreeMap<EntityId, u32>> {
        self.counts.get(&normalize(query))
    }

    /// Max-normalized association scores, best first (ties by id).
    pub fn associations(&self, query: &str) -> Vec<(EntityId, f64)> {
        let Some(counts) = self.raw(query) else { return Vec::new() };
        let max = counts.values().copied().max().unwrap_or(0);
        if max == 0 {
            return Vec::new();
        }
        let mut out: Vec<(EntityId, f64)> =
            counts.iter().map(|(&e, &c)| (e, c as f64 / max as f64)).collect();
        out.sort_by(|(a, sa), (b, sb)| sb.total_cmp(sa).then(a.cmp(b)));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecommendation {
    pub video: EntityId,
    pub association_score: f64,
    /// Anchors whose co-play evidence contributed, ascending.
    pub anchors: Vec<EntityId>,
}

/// Videos an anchor stands for, each with its share of the anchor's weight.
/// Talent spreads uniformly over credits, collections over members.
pub fn expand_anchor(anchor: EntityId, catalog: &Catalog) -> Vec<(EntityId, f64)> {
    let spread = |ids: &[EntityId]| {
        let share = 1.0 / ids.len() as f64;
        ids.iter().map(|&v| (v, share)).collect()
    };
    match catalog.entity(anchor) {
        Some(Entity::Video(v)) => vec![(v.id, 1.0)],
        Some(Entity::Talent(t)) if !t.credits.is_empty() => spread(&t.credits),
        Some(Entity::Collection(c)) if !c.members.is_empty() => spread(&c.members),
        _ => Vec::new(),
    }
}

/// Search recommendations in a query context.
///
/// Co-play evidence for `v` is `sum_a weight(a) * sum_e share(e) * sim(e, v)`
/// over each anchor's expansion; a video anchor contributes nothing to itself,
/// while an expanded member counts its own share. The final score is the max
/// of that and the query-association score, clipped to [0, 1].
pub fn recommend_for_context(
    anchors: &[(EntityId, f64)],
    query: &str,
    coplay: &CoPlayModel,
    assoc: &QueryAssociationModel,
    catalog: &Catalog,
    k: usize,
) -> Vec<SearchRecommendation> {
    // Anchors are visited in turn, so a contributor list only needs to check
    // its last entry to stay duplicate-free.
    let mut scored: HashMap<EntityId, (f64, Vec<EntityId>)> = HashMap::new();
    let mut credit = |v: EntityId, amount: f64, anchor: EntityId| {
        let slot = scored.entry(v).or_default();
        slot.0 += amount;
        if slot.1.last() != Some(&anchor) {
            slot.1.push(anchor);
        }
    };
    for &(anchor, weight) in anchors {
        if weight <= 0.0 {
            continue;
        }
        let is_video_anchor = catalog.video(anchor).is_some();
        for (member, share) in expand_anchor(anchor, catalog) {
            let base = weight * share;
            if !is_video_anchor {
                credit(member, base, anchor);
            }
            for n in coplay.neighbors(member) {
                if n.similarity > 0.0 {
                    credit(n.video, base * n.similarity, anchor);
                }
            }
        }
    }
    for (v, score) in assoc.associations(query) {
        let slot = scored.entry(v).or_default();
        slot.0 = slot.0.max(score);
    }

    let mut ranked: Vec<(EntityId, f64)> = scored
        .iter()
        .filter(|(v, (s, _))| *s > 0.0 && catalog.is_available_video(**v))
        .map(|(v, (s, _))| (*v, s.min(1.0)))
        .collect();
    sort_scored(&mut ranked, catalog);
    ranked.truncate(k);
    ranked
        .into_iter()
        .map(|(video, association_score)| {
            let mut anchors = scored.remove(&video).map(|(_, a)| a).unwrap_or_default();
            anchors.sort_unstable();
            anchors.dedup();
            SearchRecommendation { video, association_score, anchors }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Record, Video};

    fn video(id: u64, available: bool, popularity: f64) -> Record {
        Record::Video(Video {
            id: EntityId(id),
            title: format!("Video {id}"),
            aliases: vec![],
            available,
            tags: vec![],
            release_year: 2000,
            popularity,
        })
    }

    fn play(profile: &str, video: u64) -> LogRecord {
        LogRecord::Play(PlayEvent { profile: profile.into(), video: EntityId(video), timestamp: 0 })
    }

    fn log_of(records: impl IntoIterator<Item = LogRecord>) -> InteractionLog {
        let mut log = InteractionLog::default();
        for r in records {
            log.push(r);
        }
        log
    }

    const A: EntityId = EntityId(1);
    const B: EntityId = EntityId(2);
    const C: EntityId = EntityId(3);

    fn abc_log() -> InteractionLog {
        log_of([play("P1", 1), play("P1", 2), play("P2", 1), play("P2", 2), play("P3", 1), play("P3", 3)])
    }

    #[test]
    fn coplay_counts() {
        let model = CoPlayModel::build(&abc_log(), 1);
        assert_eq!(model.count(A, A), 3);
        assert_eq!(model.count(B, B), 2);
        assert_eq!(model.count(A, B), 2);
        assert_eq!(model.count(B, A), 2);
        assert_eq!(model.count(A, C), 1);
        assert_eq!(model.count(B, C), 0);
    }

    #[test]
    fn min_support_drops_pairs() {
        let model = CoPlayModel::build(&abc_log(), 2);
        assert_eq!(model.count(A, C), 0);
        assert_eq!(model.count(A, B), 2);
        assert_eq!(model.count(C, C), 1);
    }

    #[test]
    fn single_play() {
        let model = CoPlayModel::build(&log_of([play("P", 1)]), 1);
        assert_eq!(model.count(A, A), 1);
        assert_eq!(model.pair_count(), 0);
    }

    #[test]
    fn repeated_plays_count_once() {
        let model = CoPlayModel::build(&log_of([play("P", 1), play("P", 1), play("P", 2)]), 1);
        assert_eq!(model.count(A, A), 1);
        assert_eq!(model.count(A, B), 1);
    }

    #[test]
    fn cosine_values() {
        let model = CoPlayModel::build(&abc_log(), 1);
        let sim = model.similarity(A, B).unwrap();
        assert!((sim - 2.0 / 6f64.sqrt()).abs() < 1e-12);
        assert!((sim - 0.8165).abs() < 1e-4);
        assert_eq!(model.similarity(A, A).unwrap(), 1.0);
        assert_eq!(model.similarity(B, C).unwrap(), 0.0);
        assert!(matches!(model.similarity(A, EntityId(9)), Err(BehaviorError::UndefinedItem(EntityId(9)))));
    }

    #[test]
    fn similar_videos_filters_and_orders() {
        let catalog = Catalog::from_records([video(1, false, 0.9), video(2, true, 0.1), video(3, true, 0.5)]).unwrap();
        let model = CoPlayModel::build(&abc_log(), 1);
        let sims = model.similar_videos(A, 5, &catalog).unwrap();
        assert_eq!(sims.iter().map(|s| s.0).collect::<Vec<_>>(), vec![B, C]);
        assert_eq!(model.similar_videos(A, 1, &catalog).unwrap().len(), 1);
        // C co-plays only with A, which is unavailable.
        assert!(model.similar_videos(C, 5, &catalog).unwrap().is_empty());
    }

    #[test]
    fn query_association_normalization() {
        let mut records = Vec::new();
        for i in 0..12 {
            records.push(LogRecord::Search(SearchEvent {
                profile: format!("p{i}"),
                query: "Sonic T".into(),
                selected: if i < 9 { B } else { A },
                position: 0,
            }));
        }
        let assoc = QueryAssociationModel::build(&log_of(records));
        let got = assoc.associations("sonic t");
        assert_eq!(got[0], (B, 1.0));
        assert_eq!(got[1].0, A);
        assert!((got[1].1 - 1.0 / 3.0).abs() < 1e-12);
        assert!(assoc.associations("nothing").is_empty());
    }

    #[test]
    fn single_selection_normalizes_to_one() {
        let assoc = QueryAssociationModel::build(&log_of([LogRecord::Search(SearchEvent {
            profile: "p".into(),
            query: "x".into(),
            selected: C,
            position: 2,
        })]));
        assert_eq!(assoc.associations("x"), vec![(C, 1.0)]);
    }

    #[test]
    fn no_anchors_no_history_no_recs() {
        let catalog = Catalog::from_records([video(1, true, 0.5)]).unwrap();
        let recs = recommend_for_context(
            &[],
            "zzz",
            &CoPlayModel::default(),
            &QueryAssociationModel::default(),
            &catalog,
            10,
        );
        assert!(recs.is_empty());
    }

    #[test]
    fn single_anchor_reduces_to_similar_videos() {
        let catalog = Catalog::from_records([video(1, false, 0.9), video(2, true, 0.1), video(3, true, 0.5)]).unwrap();
        let model = CoPlayModel::build(&abc_log(), 1);
        let recs = recommend_for_context(&[(A, 1.0)], "", &model, &QueryAssociationModel::default(), &catalog, 10);
        let sims = model.similar_videos(A, 10, &catalog).unwrap();
        assert_eq!(recs.len(), sims.len());
        for (r, (v, s)) in recs.iter().zip(&sims) {
            assert_eq!(r.video, *v);
            assert_eq!(r.association_score, *s);
            assert_eq!(r.anchors, vec![A]);
        }
    }

    #[test]
    fn logs_reject_unknown_video() {
        let catalog = Catalog::from_records([video(1, true, 0.5)]).unwrap();
        let src = r#"{"kind":"play","profile":"p","video":1,"ts":5}
{"kind":"play","profile":"p","video":42,"ts":6}"#;
        match load_logs(src.as_bytes(), &catalog).unwrap_err() {
            BehaviorError::UnknownEntity { line, id } => {
                assert_eq!(line, 2);
                assert_eq!(id, EntityId(42));
            }
            other => panic!("unexpected {other}"),
        }
        let one = load_logs(&src.as_bytes()[..src.find('\n').unwrap()], &catalog).unwrap();
        assert_eq!(one.plays.len(), 1);
        assert!(load_logs(&b""[..], &catalog).unwrap().is_empty());
    }

    #[test]
    fn logs_round_trip_preserves_interleaving() {
        let log = log_of([
            play("a", 1),
            LogRecord::Search(SearchEvent { profile: "a".into(), query: "v".into(), selected: A, position: 0 }),
            play("b", 1),
        ]);
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let catalog = Catalog::from_records([video(1, true, 0.5)]).unwrap();
        assert_eq!(load_logs(&buf[..], &catalog).unwrap(), log);
    }
}
