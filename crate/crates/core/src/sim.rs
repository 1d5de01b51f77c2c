//! Seeded synthetic catalogs and interaction logs.
//!
//! Fetch sessions type a prefix of one target title, select it, and play it.
//! Explore sessions play several videos drawn from one of the profile's
//! favorite tags. Both draw from all videos, including unavailable ones,
//! since logs reflect viewing from before a title left the catalog.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{InteractionLog, LogRecord, PlayEvent, SearchEvent};
use crate::catalog::{Catalog, Collection, EntityId, Record, Talent, Video};

const ADJECTIVES: &[&str] = &[
    "Silent", "Crimson", "Hidden", "Broken", "Golden", "Last", "Wild", "Dark", "Frozen", "Lucky", "Secret",
    "Burning", "Lost", "Electric", "Savage", "Gentle", "Hollow", "Iron", "Midnight", "Northern", "Quiet",
    "Rapid", "Scarlet", "Twisted", "Urban", "Velvet", "Wicked", "Young", "Ancient", "Bitter", "Cosmic",
    "Distant", "Eternal", "Fearless", "Glass", "Haunted", "Infinite", "Jagged", "Kind", "Lonely", "Mighty",
    "Neon", "Open", "Proud", "Restless", "Shining", "Tiny", "Untold", "Vivid", "Wandering",
];

const NOUNS: &[&str] = &[
    "Harbor", "Kingdom", "Signal", "Garden", "Frontier", "Detective", "Empire", "Voyage", "Island", "Legacy",
    "Mirror", "Orchard", "Paradise", "Quest", "River", "Shadow", "Summit", "Tower", "Valley", "Warrior",
    "Alley", "Bridge", "Canyon", "Diner", "Echo", "Falcon", "Glacier", "Horizon", "Inferno", "Jungle",
    "Knight", "Lantern", "Meadow", "Nomad", "Oasis", "Pirate", "Racer", "Saga", "Thief", "Uprising",
    "Vortex", "Whisper", "Wolf", "Dragon", "Hedgehog", "Robot", "Circus", "Galaxy", "Mansion", "Planet",
];

const TAGS: &[&str] = &[
    "Action", "Comedy", "Drama", "Thriller", "Romance", "Horror", "Documentary", "Anime", "Family",
    "Sci-Fi", "Fantasy", "Crime", "Mystery", "Musical", "Western", "War", "Sports", "Teen",
    "Based on a Video Game", "Goofy Movies", "Myths & Legends", "Chases", "Heists", "Space",
];

const FIRST_NAMES: &[&str] = &[
    "Ada", "Bruno", "Carla", "Dev", "Elena", "Farid", "Grace", "Hiro", "Iris", "Jonas", "Kira", "Luis",
    "Maya", "Noor", "Oscar", "Priya", "Quinn", "Rosa", "Sam", "Tomas", "Uma", "Victor", "Wen", "Yara",
];

const LAST_NAMES: &[&str] = &[
    "Abbott", "Bianchi", "Chen", "Dumas", "Eriksen", "Fischer", "Garcia", "Haddad", "Ito", "Jensen",
    "Kowalski", "Lopez", "Moreau", "Nakamura", "Okafor", "Petrov", "Quiroga", "Rossi", "Silva", "Tanaka",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatalogSpec {
    pub videos: usize,
    pub talents: usize,
    pub collections: usize,
    pub unavailable_fraction: f64,
    pub seed: u64,
}

impl CatalogSpec {
    /// Roughly 80% videos, 15% talent, 5% collections.
    pub fn with_entities(total: usize, seed: u64) -> Self {
        let talents = total * 15 / 100;
        let collections = total * 5 / 100;
        CatalogSpec { videos: total - talents - collections, talents, collections, unavailable_fraction: 0.15, seed }
    }
}

pub fn synthetic_catalog(spec: &CatalogSpec) -> Catalog {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.videos + spec.talents + spec.collections);

    // Zipf-like popularity shuffled over ids.
    let mut popularity: Vec<f64> = (0..spec.videos).map(|r| 1.0 / (1.0 + r as f64).powf(0.8)).collect();
    popularity.shuffle(&mut rng);

    for (i, &weight) in popularity.iter().enumerate() {
        let mut title = format!("{} {}", ADJECTIVES.choose(&mut rng).unwrap(), NOUNS.choose(&mut rng).unwrap());
        if rng.gen_bool(0.3) {
            title = format!("The {title}");
        }
        if rng.gen_bool(0.1) {
            title = format!("{title} {}", rng.gen_range(2..5));
        }
        let n_tags = rng.gen_range(1..=3);
        let tags: Vec<String> = TAGS.choose_multiple(&mut rng, n_tags).map(|t| t.to_string()).collect();
        records.push(Record::Video(Video {
            id: EntityId(i as u64 + 1),
            title,
            aliases: vec![],
            available: !rng.gen_bool(spec.unavailable_fraction),
            tags,
            release_year: rng.gen_range(1960..=2024),
            popularity: (weight * 1e6).round() / 1e6,
        }));
    }
    let video_ids: Vec<EntityId> = (1..=spec.videos as u64).map(EntityId).collect();
    let mut next = spec.videos as u64 + 1;
    for _ in 0..spec.talents {
        let n = rng.gen_range(3..=12).min(video_ids.len());
        records.push(Record::Talent(Talent {
            id: EntityId(next),
            name: format!("{} {}", FIRST_NAMES.choose(&mut rng).unwrap(), LAST_NAMES.choose(&mut rng).unwrap()),
            credits: video_ids.choose_multiple(&mut rng, n).copied().collect(),
        }));
        next += 1;
    }
    for _ in 0..spec.collections {
        let n = rng.gen_range(5..=30).min(video_ids.len());
        records.push(Record::Collection(Collection {
            id: EntityId(next),
            label: format!("{} {}", ADJECTIVES.choose(&mut rng).unwrap(), TAGS.choose(&mut rng).unwrap()),
            members: video_ids.choose_multiple(&mut rng, n).copied().collect(),
        }));
        next += 1;
    }
    Catalog::from_records(records).expect("synthetic catalog is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_profiles: usize,
    pub n_fetch_sessions: usize,
    pub n_explore_sessions: usize,
    pub explore_session_length: usize,
    /// Favorite tags per profile; explore sessions draw one of them.
    pub tags_per_profile: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_profiles: 100,
            n_fetch_sessions: 500,
            n_explore_sessions: 500,
            explore_session_length: 5,
            tags_per_profile: 2,
            seed: 7,
        }
    }
}

impl SimConfig {
    pub fn expected_searches(&self) -> usize {
        self.n_fetch_sessions
    }

    pub fn expected_plays(&self) -> usize {
        self.n_fetch_sessions + self.n_explore_sessions * self.explore_session_length
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("cannot simulate over a catalog without videos")]
    EmptyCatalog,
    #[error("n_profiles must be at least 1")]
    NoProfiles,
}

pub fn profile_name(i: usize) -> String {
    format!("p{i:05}")
}

pub fn simulate(config: &SimConfig, catalog: &Catalog) -> Result<InteractionLog, SimError> {
    let videos: Vec<&Video> = catalog.videos().collect();
    if videos.is_empty() {
        return Err(SimError::EmptyCatalog);
    }
    if config.n_profiles == 0 {
        return Err(SimError::NoProfiles);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut tag_names: Vec<&str> = videos.iter().flat_map(|v| v.tags.iter().map(String::as_str)).collect();
    tag_names.sort_unstable();
    tag_names.dedup();
    let by_tag: Vec<Vec<EntityId>> = tag_names
        .iter()
        .map(|t| videos.iter().filter(|v| v.tags.iter().any(|x| x == t)).map(|v| v.id).collect())
        .collect();

    let favorites: Vec<Vec<(usize, f64)>> = (0..config.n_profiles)
        .map(|_| {
            if tag_names.is_empty() {
                return Vec::new();
            }
            let n = config.tags_per_profile.clamp(1, tag_names.len());
            rand::seq::index::sample(&mut rng, tag_names.len(), n)
                .into_iter()
                .map(|t| (t, rng.gen_range(0.2..1.0)))
                .collect()
        })
        .collect();

    let fetch_weights =
        WeightedIndex::new(videos.iter().map(|v| v.popularity + 0.01)).expect("positive popularity weights");

    let mut kinds: Vec<bool> = std::iter::repeat_n(true, config.n_fetch_sessions)
        .chain(std::iter::repeat_n(false, config.n_explore_sessions))
        .collect();
    kinds.shuffle(&mut rng);

    let mut log = InteractionLog::default();
    for (session, is_fetch) in kinds.into_iter().enumerate() {
        let profile_idx = rng.gen_range(0..config.n_profiles);
        let profile = profile_name(profile_idx);
        let mut ts = session as i64 * 3600;
        if is_fetch {
            let target = videos[fetch_weights.sample(&mut rng)];
            let chars: Vec<char> = target.title.chars().collect();
            let min = chars.len().min(3);
            let stop = rng.gen_range(min..=chars.len());
            let query: String = chars[..stop].iter().collect();
            log.push(LogRecord::Search(SearchEvent {
                profile: profile.clone(),
                query,
                selected: target.id,
                position: 0,
            }));
            ts += 30;
            log.push(LogRecord::Play(PlayEvent { profile, video: target.id, timestamp: ts }));
        } else {
            let favs = &favorites[profile_idx];
            let pool: Vec<EntityId> = if favs.is_empty() {
                videos.iter().map(|v| v.id).collect()
            } else {
                let pick = WeightedIndex::new(favs.iter().map(|(_, w)| *w)).expect("positive tag weights");
                by_tag[favs[pick.sample(&mut rng)].0].clone()
            };
            for _ in 0..config.explore_session_length {
                ts += 60;
                let video = *pool.choose(&mut rng).expect("tag pools are non-empty");
                log.push(LogRecord::Play(PlayEvent { profile: profile.clone(), video, timestamp: ts }));
            }
        }
    }
    Ok(log)
}
