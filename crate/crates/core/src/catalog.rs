//! Entity catalog: videos (available or not), talent and collections.
//!
//! The catalog is loaded from JSONL, one entity per line, discriminated by a
//! `"kind"` field. Loading is all-or-nothing: either every record validates and
//! the cross references resolve, or an error is returned.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier shared by all entity kinds. Unique across the whole catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u64);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Video {
    pub id: EntityId,
    pub title: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub available: bool,
    #[serde(default)]
    pub tags: Vec<String>,
    pub release_year: i32,
    pub popularity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Talent {
    pub id: EntityId,
    pub name: String,
    #[serde(default)]
    pub credits: Vec<EntityId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collection {
    pub id: EntityId,
    pub label: String,
    #[serde(default)]
    pub members: Vec<EntityId>,
}

/// One line of the catalog JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Record {
    Video(Video),
    Talent(Talent),
    Collection(Collection),
}

impl Record {
    pub fn id(&self) -> EntityId {
        match self {
            Record::Video(v) => v.id,
            Record::Talent(t) => t.id,
            Record::Collection(c) => c.id,
        }
    }
}

/// Borrowed view of any catalog entity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Entity<'a> {
    Video(&'a Video),
    Talent(&'a Talent),
    Collection(&'a Collection),
}

impl<'a> Entity<'a> {
    pub fn id(&self) -> EntityId {
        match self {
            Entity::Video(v) => v.id,
            Entity::Talent(t) => t.id,
            Entity::Collection(c) => c.id,
        }
    }

    /// Title, name or label, whichever the entity carries.
    pub fn display_name(&self) -> &'a str {
        match self {
            Entity::Video(v) => &v.title,
            Entity::Talent(t) => &t.name,
            Entity::Collection(c) => &c.label,
        }
    }

    pub fn as_video(&self) -> Option<&'a Video> {
        match self {
            Entity::Video(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("line {line}: malformed record")]
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
    #[error("duplicate entity id {0}")]
    DuplicateId(EntityId),
    #[error("entity {owner} references {missing}, which is not a video in the catalog")]
    DanglingReference { owner: EntityId, missing: EntityId },
    #[error("video {id}: popularity {value} outside [0, 1]")]
    PopularityOutOfRange { id: EntityId, value: f64 },
    #[error("entity {0}: empty title, name or label")]
    EmptyName(EntityId),
    #[error("video {id}: invalid tag {tag:?} (empty or repeated)")]
    InvalidTag { id: EntityId, tag: String },
    #[error("collection {id}: member {member} listed twice")]
    DuplicateMember { id: EntityId, member: EntityId },
    #[error("entity {0} not found")]
    NotFound(EntityId),
}

/// Validated, immutable entity store.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    videos: BTreeMap<EntityId, Video>,
    talents: BTreeMap<EntityId, Talent>,
    collections: BTreeMap<EntityId, Collection>,
}

impl Catalog {
    /// Validates a set of records and builds a catalog from them.
    pub fn from_records<I>(records: I) -> Result<Self, CatalogError>
    where
        I: IntoIterator<Item = Record>,
    {
        let mut catalog = Catalog::default();
        let mut seen = HashSet::new();
        for record in records {
            if !seen.insert(record.id()) {
                return Err(CatalogError::DuplicateId(record.id()));
            }
            match record {
                Record::Video(v) => {
                    validate_video(&v)?;
                    catalog.videos.insert(v.id, v);
                }
                Record::Talent(t) => {
                    if t.name.trim().is_empty() {
                        return Err(CatalogError::EmptyName(t.id));
                    }
                    catalog.talents.insert(t.id, t);
                }
                Record::Collection(c) => {
                    if c.label.trim().is_empty() {
                        return Err(CatalogError::EmptyName(c.id));
                    }
                    let mut members = HashSet::new();
                    for &m in &c.members {
                        if !members.insert(m) {
                            return Err(CatalogError::DuplicateMember { id: c.id, member: m });
                        }
                    }
                    catalog.collections.insert(c.id, c);
                }
            }
        }
        catalog.check_references()?;
        Ok(catalog)
    }

    fn check_references(&self) -> Result<(), CatalogError> {
        let refs = self
            .talents
            .values()
            .flat_map(|t| t.credits.iter().map(move |&c| (t.id, c)))
            .chain(
                self.collections
                    .values()
                    .flat_map(|c| c.members.iter().map(move |&m| (c.id, m))),
            );
        for (owner, target) in refs {
            if !self.videos.contains_key(&target) {
                return Err(CatalogError::DanglingReference { owner, missing: target });
            }
        }
        Ok(())
    }

    pub fn get(&self, id: EntityId) -> Result<Entity<'_>, CatalogError> {
        self.entity(id).ok_or(CatalogError::NotFound(id))
    }

    pub fn entity(&self, id: EntityId) -> Option<Entity<'_>> {
        if let Some(v) = self.videos.get(&id) {
            return Some(Entity::Video(v));
        }
        if let Some(t) = self.talents.get(&id) {
            return Some(Entity::Talent(t));
        }
        self.collections.get(&id).map(Entity::Collection)
    }

    pub fn video(&self, id: EntityId) -> Option<&Video> {
        self.videos.get(&id)
    }

    pub fn talent(&self, id: EntityId) -> Option<&Talent> {
        self.talents.get(&id)
    }

    pub fn collection(&self, id: EntityId) -> Option<&Collection> {
        self.collections.get(&id)
    }

    pub fn is_available_video(&self, id: EntityId) -> bool {
        self.videos.get(&id).is_some_and(|v| v.available)
    }

    /// Videos in id order.
    pub fn videos(&self) -> impl Iterator<Item = &Video> {
        self.videos.values()
    }

    pub fn talents(&self) -> impl Iterator<Item = &Talent> {
        self.talents.values()
    }

    pub fn collections(&self) -> impl Iterator<Item = &Collection> {
        self.collections.values()
    }

    /// All entities, videos first, each kind in id order.
    pub fn entities(&self) -> impl Iterator<Item = Entity<'_>> {
        self.videos
            .values()
            .map(Entity::Video)
            .chain(self.talents.values().map(Entity::Talent))
            .chain(self.collections.values().map(Entity::Collection))
    }

    pub fn len(&self) -> usize {
        self.videos.len() + self.talents.len() + self.collections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn video_count(&self) -> usize {
        self.videos.len()
    }

    pub fn talent_count(&self) -> usize {
        self.talents.len()
    }

    pub fn collection_count(&self) -> usize {
        self.collections.len()
    }

    /// Popularity used for tie-breaking. Talent and collections inherit the
    /// most popular video they reference.
    pub fn popularity(&self, id: EntityId) -> f64 {
        let max_of = |ids: &[EntityId]| {
            ids.iter()
                .filter_map(|i| self.videos.get(i))
                .map(|v| v.popularity)
                .fold(0.0, f64::max)
        };
        match self.entity(id) {
            Some(Entity::Video(v)) => v.popularity,
            Some(Entity::Talent(t)) => max_of(&t.credits),
            Some(Entity::Collection(c)) => max_of(&c.members),
            None => 0.0,
        }
    }

    /// Records in the order `entities()` yields them.
    pub fn records(&self) -> impl Iterator<Item = Record> + '_ {
        self.entities().map(|e| match e {
            Entity::Video(v) => Record::Video(v.clone()),
            Entity::Talent(t) => Record::Talent(t.clone()),
            Entity::Collection(c) => Record::Collection(c.clone()),
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for record in self.records() {
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn validate_video(v: &Video) -> Result<(), CatalogError> {
    if v.title.trim().is_empty() {
        return Err(CatalogError::EmptyName(v.id));
    }
    if !(0.0..=1.0).contains(&v.popularity) {
        return Err(CatalogError::PopularityOutOfRange { id: v.id, value: v.popularity });
    }
    let mut tags = HashSet::new();
    for tag in &v.tags {
        if tag.trim().is_empty() || !tags.insert(tag.as_str()) {
            return Err(CatalogError::InvalidTag { id: v.id, tag: tag.clone() });
        }
    }
    Ok(())
}

/// Parses a JSONL catalog. Blank lines are ignored; line numbers in errors
/// are 1-based.
pub fn load_catalog<R: BufRead>(source: R) -> Result<Catalog, CatalogError> {
    let mut records = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line.map_err(|source| CatalogError::Io { line: idx + 1, source })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line)
            .map_err(|source| CatalogError::Malformed { line: idx + 1, source })?;
        records.push(record);
    }
    Catalog::from_records(records)
}
