mod common;

use std::collections::{BTreeSet, HashMap, HashSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shelf_core::catalog::EntityId;
use shelf_core::engine::{EngineConfig, EngineSnapshot};
use shelf_core::facet::{Facet, FacetEstimate, IntentEstimate};
use shelf_core::organizer::{
    compose_page, default_group_definitions, load_group_definitions, rank_groups, CandidateGroup, GroupKind,
    RankParams, ResultGroup,
};
use shelf_core::ranker::{FeatureVector, Provenance, RelevanceModel, ScoredResult};
use shelf_core::sim::{simulate, synthetic_catalog, CatalogSpec, SimConfig};

use common::exhaustive_rank;

fn scored(video: u64, score: f64) -> ScoredResult {
    ScoredResult {
        video: EntityId(video),
        provenance: Provenance::Match,
        features: FeatureVector::default(),
        score,
        anchors: vec![],
    }
}

fn random_candidates(rng: &mut ChaCha8Rng, n: usize, pool: u64) -> Vec<CandidateGroup> {
    let ids: Vec<EntityId> = (1..=pool).map(EntityId).collect();
    (0..n)
        .map(|i| {
            let size = rng.gen_range(1..=ids.len().min(7));
            let mut members: Vec<EntityId> = ids.choose_multiple(rng, size).copied().collect();
            members.sort();
            let def = ["alpha", "beta", "gamma"].choose(rng).unwrap().to_string();
            let kind = match rng.gen_range(0..3) {
                0 => GroupKind::TagRow(None),
                1 => GroupKind::SimilarToAnchor,
                _ => GroupKind::ExactMatch,
            };
            CandidateGroup {
                header: format!("{def} {i}"),
                definition: def,
                kind,
                anchor: None,
                min_size: rng.gen_range(1..=size),
                max_size: 20,
                members,
                priority: [0.5, 0.8, 1.0][rng.gen_range(0..3)],
            }
        })
        .collect()
}

fn assert_matches_oracle(candidates: &[CandidateGroup], ranked: &[ScoredResult], params: RankParams) {
    let greedy = rank_groups(candidates, ranked, params);
    let scores: HashMap<EntityId, f64> = ranked.iter().map(|r| (r.video, r.score)).collect();
    let best = exhaustive_rank(candidates, &scores, params);
    let got: Vec<(&str, &[EntityId])> = greedy.iter().map(|g| (g.header.as_str(), g.videos.as_slice())).collect();
    let want: Vec<(&str, &[EntityId])> =
        best.iter().map(|(i, m)| (candidates[*i].header.as_str(), m.as_slice())).collect();
    assert_eq!(got, want, "{params:?}\n{candidates:#?}");
}

#[test]
fn greedy_equals_exhaustive_sequential_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..300 {
        let n = rng.gen_range(1..=6);
        let candidates = random_candidates(&mut rng, n, 10);
        let ranked: Vec<ScoredResult> = (1..=10).map(|v| scored(v, rng.gen_range(0.01..1.0))).collect();
        let params = RankParams {
            max_groups: rng.gen_range(1..=6),
            lambda_div: [0.0, 0.3, 0.5, 1.0][rng.gen_range(0..4)],
            specificity: rng.gen_range(0.0..1.0),
            tau_narrow: 0.6,
        };
        assert_matches_oracle(&candidates, &ranked, params);
    }
}

#[test]
fn ties_resolve_by_definition_then_header() {
    let make = |def: &str, header: &str, members: &[u64]| CandidateGroup {
        definition: def.into(),
        kind: GroupKind::TagRow(None),
        header: header.into(),
        anchor: None,
        members: members.iter().copied().map(EntityId).collect(),
        priority: 1.0,
        min_size: 1,
        max_size: 20,
    };
    let candidates = vec![make("b", "B", &[1, 2]), make("a", "Y", &[3, 4]), make("a", "X", &[5, 6])];
    let ranked: Vec<ScoredResult> = (1..=6).map(|v| scored(v, 0.5)).collect();
    let params = RankParams::default();
    let order: Vec<String> = rank_groups(&candidates, &ranked, params).into_iter().map(|g| g.header).collect();
    assert_eq!(order, ["X", "Y", "B"]);
    assert_matches_oracle(&candidates, &ranked, params);
}

#[test]
fn hand_worked_four_candidate_fixture() {
    // Scores: v1..v6 = 0.9, 0.8, 0.7, 0.6, 0.5, 0.4.
    let ranked: Vec<ScoredResult> = (1..=6).map(|v| scored(v, 1.0 - v as f64 / 10.0)).collect();
    let make = |def: &str, kind: GroupKind, members: &[u64], priority: f64, min_size: usize| CandidateGroup {
        definition: def.into(),
        kind,
        header: def.to_uppercase(),
        anchor: None,
        members: members.iter().copied().map(EntityId).collect(),
        priority,
        min_size,
        max_size: 20,
    };
    let candidates = vec![
        make("fans", GroupKind::FansOfUnavailable, &[1, 2, 3], 1.0, 2),
        make("tag", GroupKind::TagRow(None), &[1, 2, 4, 5], 0.5, 2),
        make("more", GroupKind::SimilarToAnchor, &[3, 4], 0.8, 2),
        make("tiny", GroupKind::TagRow(None), &[6], 0.5, 1),
    ];
    let params = RankParams { max_groups: 10, lambda_div: 0.5, specificity: 0.9, tau_narrow: 0.6 };
    // Step 1: fans = 1.0 * 2.4 * 1.5 = 3.6 beats tag (0.5 * 2.8 = 1.4) and more (0.8 * 1.3 * 1.5 = 1.56).
    // Step 2: tag keeps {4, 5}: 0.5 * 1.1 * (1 - 0.5 * 2/5) = 0.44;
    //         more keeps {4} and drops below its minimum size; tiny: 0.5 * 0.4 = 0.2.
    // Step 3: tiny has no overlap with fans or tag: 0.2.
    let groups = rank_groups(&candidates, &ranked, params);
    let summary: Vec<(&str, Vec<u64>)> =
        groups.iter().map(|g| (g.definition.as_str(), g.videos.iter().map(|v| v.0).collect())).collect();
    assert_eq!(summary, vec![("fans", vec![1, 2, 3]), ("tag", vec![4, 5]), ("tiny", vec![6])]);
    assert_matches_oracle(&candidates, &ranked, params);
}

fn check_page_invariants(groups: &[ResultGroup], ranked: &[ScoredResult], snapshot: &EngineSnapshot) {
    let mut seen = HashSet::new();
    let position: HashMap<EntityId, usize> = ranked.iter().enumerate().map(|(i, r)| (r.video, i)).collect();
    let defs: HashMap<&str, _> = snapshot.groups.iter().map(|d| (d.id.as_str(), d)).collect();
    for g in groups {
        let def = defs[g.definition.as_str()];
        assert!(g.videos.len() >= def.min_size && g.videos.len() <= def.max_size, "{g:?}");
        assert!(!g.header.trim().is_empty());
        for v in &g.videos {
            assert!(seen.insert(*v), "{v} appears twice");
            assert!(snapshot.catalog.is_available_video(*v));
        }
        let order: Vec<usize> = g.videos.iter().map(|v| position[v]).collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]), "row not in ranked order: {g:?}");
    }
    assert!(groups.len() <= snapshot.config.max_groups);
}

#[test]
fn randomized_pipeline_runs_never_repeat_a_video() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut runs = 0;
    let mut non_empty = 0;
    for world in 0..10u64 {
        let catalog = synthetic_catalog(&CatalogSpec::with_entities(rng.gen_range(40..400), world));
        let sim = SimConfig { n_profiles: 60, n_fetch_sessions: 200, n_explore_sessions: 200, seed: world, ..SimConfig::default() };
        let log = simulate(&sim, &catalog).unwrap();
        let config = EngineConfig {
            max_groups: rng.gen_range(1..=10),
            lambda_div: rng.gen_range(0.0..=1.0),
            min_support: rng.gen_range(1..=3),
            ..EngineConfig::default()
        };
        let titles: Vec<String> = catalog.entities().map(|e| e.display_name().to_owned()).collect();
        let snapshot = EngineSnapshot::build(catalog, &log, RelevanceModel::prior(), default_group_definitions(), config, 1);
        for _ in 0..100 {
            let title: Vec<char> = titles.choose(&mut rng).unwrap().chars().collect();
            let query: String = title[..rng.gen_range(1..=title.len())].iter().collect();
            let k = rng.gen_range(1..=60);
            let outcome = snapshot.search(&query, k);
            check_page_invariants(&outcome.page.groups, &outcome.ranked, &snapshot);
            assert_eq!(outcome.page.duplicate_videos(), 0);
            non_empty += usize::from(!outcome.page.groups.is_empty());
            runs += 1;
        }
    }
    assert_eq!(runs, 1000);
    assert!(non_empty > 500, "only {non_empty} pages had rows");
}

#[test]
fn duplicate_headers_get_suffixes() {
    let g = |h: &str| ResultGroup { header: h.into(), videos: vec![], definition: "d".into(), anchor: None };
    let page = compose_page(
        vec![g("Chases"), g("Chases"), g("Chases · 2"), g("Chases")],
        FacetEstimate::uniform(0.0),
        IntentEstimate { fetch_probability: 0.0 },
        vec!["Chases".into()],
    );
    let headers: Vec<&str> = page.groups.iter().map(|g| g.header.as_str()).collect();
    let unique: BTreeSet<&str> = headers.iter().copied().collect();
    assert_eq!(unique.len(), 4);
    assert_eq!(headers[0], "Chases");
    assert_eq!(headers[1], "Chases · 2");
    // Pills are only shown when the query looks like an unavailable title.
    assert!(page.pills.is_empty());
}

#[test]
fn pills_survive_for_unavailable_intent() {
    let mut facets = FacetEstimate::uniform(0.5);
    facets.distribution.insert(Facet::UnavailableVideo, 0.7);
    facets.distribution.insert(Facet::AvailableVideo, 0.1);
    let page = compose_page(vec![], facets, IntentEstimate { fetch_probability: 0.5 }, vec!["Chases".into()]);
    assert_eq!(page.pills, ["Chases"]);
}

#[test]
fn malformed_group_definitions_are_rejected() {
    let bad = [
        r#"[{"id":"x","kind":"ExactMatch","label_template":"{nope}","min_size":1,"max_size":3,"priority":1,"applicable_facets":["talent"]}]"#,
        r#"[{"id":"x","kind":"ExactMatch","label_template":"Top","min_size":4,"max_size":3,"priority":1,"applicable_facets":["talent"]}]"#,
        r#"[{"id":"x","kind":"ExactMatch","label_template":"Top","min_size":1,"max_size":3,"priority":-1,"applicable_facets":["talent"]}]"#,
        r#"[{"id":"x","kind":"Mystery","label_template":"Top","min_size":1,"max_size":3,"priority":1,"applicable_facets":[]}]"#,
        "not json",
    ];
    for text in bad {
        assert!(load_group_definitions(text).is_err(), "{text}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn emitted_rows_partition_a_subset_of_candidate_members(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let candidates = random_candidates(&mut rng, n, 12);
        let ranked: Vec<ScoredResult> = (1..=12).map(|v| scored(v, rng.gen_range(0.0..1.0))).collect();
        let groups = rank_groups(&candidates, &ranked, RankParams { specificity: rng.gen_range(0.0..1.0), ..RankParams::default() });
        let mut seen = HashSet::new();
        for g in &groups {
            let c = candidates.iter().find(|c| c.header == g.header).unwrap();
            prop_assert!(g.videos.len() >= c.min_size);
            for v in &g.videos {
                prop_assert!(c.members.contains(v));
                prop_assert!(seen.insert(*v));
            }
        }
    }

    #[test]
    fn full_overlap_penalty_blocks_identical_rows(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut candidates = random_candidates(&mut rng, 1, 8);
        let mut twin = candidates[0].clone();
        twin.header.push_str(" twin");
        twin.min_size = 1;
        candidates.push(twin);
        let ranked: Vec<ScoredResult> = (1..=8).map(|v| scored(v, 0.5)).collect();
        let groups = rank_groups(&candidates, &ranked, RankParams { lambda_div: 1.0, ..RankParams::default() });
        prop_assert_eq!(groups.len(), 1);
    }
}
