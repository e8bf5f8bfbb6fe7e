//! Two-layer lexical model.
//!
//! Concepts live on a supra-lingual layer (shared across languages) or are
//! language-specific. Per-language lexicons hold entries that lexicalize
//! concepts and gap records asserting that a language has no word for a
//! concept. A language-specific concept is promoted to the supra-lingual
//! layer as soon as a second language lexicalizes it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num::rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::ids::{ConceptId, EntryId, LanguageCode};
use crate::text::{normalize_gloss, normalize_lemma};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexiconError {
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
    #[error("duplicate entry {existing} for ({language}, {word:?})")]
    DuplicateEntry {
        language: LanguageCode,
        word: String,
        existing: EntryId,
    },
    #[error("unknown entry {0}")]
    UnknownEntry(EntryId),
    #[error("unknown concept {0}")]
    UnknownConcept(ConceptId),
    #[error("unknown language {0}")]
    UnknownLanguage(LanguageCode),
    #[error("entries {0} and {1} belong to the same language")]
    SameLanguage(EntryId, EntryId),
    #[error("concept {concept} is already lexicalized in {language} by {entry}")]
    ConflictingLexicalization {
        concept: ConceptId,
        language: LanguageCode,
        entry: EntryId,
    },
    #[error("hypernym relation {from} -> {to} would create a cycle")]
    HypernymCycle { from: ConceptId, to: ConceptId },
    #[error("invalid overlap counts: shared={shared}, size_a={size_a}, size_b={size_b}")]
    InvalidCounts {
        shared: u64,
        size_a: u64,
        size_b: u64,
    },
    #[error("document conflicts with existing state: {0}")]
    ImportConflict(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryProvenance {
    Imported,
    CrowdNew,
    ExpertCorrected,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexicalEntry {
    pub id: EntryId,
    pub language: LanguageCode,
    pub word: String,
    pub gloss: String,
    pub provenance: EntryProvenance,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "language")]
pub enum ConceptLayer {
    SupraLingual,
    LanguageSpecific(LanguageCode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Hypernym,
    Hyponym,
    Meronym,
    Holonym,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relation {
    pub kind: RelationKind,
    pub concept: ConceptId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: ConceptId,
    pub layer: ConceptLayer,
    pub gloss: String,
    pub relations: Vec<Relation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapProvenance {
    Crowd,
    Expert,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexicalGap {
    pub concept: ConceptId,
    pub language: LanguageCode,
    pub provenance: GapProvenance,
    pub campaign: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Link {
    pub entry: EntryId,
    pub concept: ConceptId,
}

/// Record of a gap removed because a new equivalence contradicted it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditNote {
    pub removed_gap: LexicalGap,
    pub contradicted_by: EntryId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkOutcome {
    pub concept: ConceptId,
    pub promoted: bool,
    pub removed_gaps: Vec<LexicalGap>,
}

/// `shared / (size_a + size_b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapStat {
    pub shared: u64,
    pub size_a: u64,
    pub size_b: u64,
    pub ratio: f64,
}

impl OverlapStat {
    pub fn exact(&self) -> Ratio<u64> {
        Ratio::new(self.shared, self.size_a + self.size_b)
    }

    pub fn percent(&self) -> f64 {
        self.ratio * 100.0
    }
}

impl fmt::Display for OverlapStat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{} = {:.1}%",
            self.shared,
            self.size_a + self.size_b,
            self.percent()
        )
    }
}

pub fn overlap(shared: u64, size_a: u64, size_b: u64) -> Result<OverlapStat, LexiconError> {
    if size_a + size_b == 0 || shared > size_a.min(size_b) {
        return Err(LexiconError::InvalidCounts {
            shared,
            size_a,
            size_b,
        });
    }
    Ok(OverlapStat {
        shared,
        size_a,
        size_b,
        ratio: shared as f64 / (size_a + size_b) as f64,
    })
}

/// Serialized lexicon: the interchange document for export and import.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconDocument {
    pub entries: Vec<LexicalEntry>,
    pub concepts: Vec<Concept>,
    pub gaps: Vec<LexicalGap>,
    pub links: Vec<Link>,
}

impl LexiconDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lexicon document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Lexicon {
    entries: BTreeMap<EntryId, LexicalEntry>,
    concepts: BTreeMap<ConceptId, Concept>,
    /// concept -> language -> gap
    gaps: BTreeMap<ConceptId, BTreeMap<LanguageCode, LexicalGap>>,
    links: BTreeMap<EntryId, ConceptId>,
    /// uniqueness key -> entry
    keys: BTreeMap<String, EntryId>,
    next_entry: BTreeMap<LanguageCode, u64>,
    next_concept: u64,
    audit: Vec<AuditNote>,
}

impl PartialEq for Lexicon {
    /// Model equality: entries, concepts, gaps and links. Counters and the
    /// audit trail are bookkeeping.
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
            && self.concepts == other.concepts
            && self.gaps == other.gaps
            && self.links == other.links
    }
}

fn entry_key(language: &LanguageCode, word: &str, gloss: &str) -> String {
    format!("{}\u{1f}{}\u{1f}{}", language, word.trim(), normalize_gloss(gloss))
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entry(&self, id: &EntryId) -> Option<&LexicalEntry> {
        self.entries.get(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &LexicalEntry> {
        self.entries.values()
    }

    pub fn entries_of<'a>(
        &'a self,
        language: &'a LanguageCode,
    ) -> impl Iterator<Item = &'a LexicalEntry> + 'a {
        self.entries.values().filter(move |e| &e.language == language)
    }

    pub fn concept(&self, id: &ConceptId) -> Option<&Concept> {
        self.concepts.get(id)
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn concept_of(&self, entry: &EntryId) -> Option<&ConceptId> {
        self.links.get(entry)
    }

    pub fn gaps(&self) -> impl Iterator<Item = &LexicalGap> {
        self.gaps.values().flat_map(|m| m.values())
    }

    pub fn gap(&self, concept: &ConceptId, language: &LanguageCode) -> Option<&LexicalGap> {
        self.gaps.get(concept).and_then(|m| m.get(language))
    }

    pub fn audit_trail(&self) -> &[AuditNote] {
        &self.audit
    }

    pub fn find_entry(&self, language: &LanguageCode, word: &str, gloss: &str) -> Option<&EntryId> {
        self.keys.get(&entry_key(language, word, gloss))
    }

    /// Entries of `language` whose lemma normalizes to the same string as `word`.
    pub fn entries_with_lemma<'a>(
        &'a self,
        language: &'a LanguageCode,
        word: &str,
    ) -> impl Iterator<Item = &'a LexicalEntry> + 'a {
        let wanted = normalize_lemma(word);
        self.entries_of(language)
            .filter(move |e| normalize_lemma(&e.word) == wanted)
    }

    pub fn add_entry(
        &mut self,
        language: &LanguageCode,
        word: &str,
        gloss: &str,
        provenance: EntryProvenance,
    ) -> Result<EntryId, LexiconError> {
        let word = word.trim();
        let gloss = gloss.trim();
        if word.is_empty() {
            return Err(LexiconError::EmptyField("word"));
        }
        if gloss.is_empty() {
            return Err(LexiconError::EmptyField("gloss"));
        }
        let key = entry_key(language, word, gloss);
        if let Some(existing) = self.keys.get(&key) {
            return Err(LexiconError::DuplicateEntry {
                language: language.clone(),
                word: word.to_string(),
                existing: existing.clone(),
            });
        }
        let id = self.fresh_entry_id(language);
        self.keys.insert(key, id.clone());
        self.entries.insert(
            id.clone(),
            LexicalEntry {
                id: id.clone(),
                language: language.clone(),
                word: word.to_string(),
                gloss: gloss.to_string(),
                provenance,
            },
        );
        Ok(id)
    }

    /// Returns the existing entry for (language, word, normalized gloss) or adds one.
    pub fn find_or_add_entry(
        &mut self,
        language: &LanguageCode,
        word: &str,
        gloss: &str,
        provenance: EntryProvenance,
    ) -> Result<EntryId, LexiconError> {
        match self.add_entry(language, word, gloss, provenance) {
            Err(LexiconError::DuplicateEntry { existing, .. }) => Ok(existing),
            other => other,
        }
    }

    fn fresh_entry_id(&mut self, language: &LanguageCode) -> EntryId {
        let counter = self.next_entry.entry(language.clone()).or_insert(0);
        loop {
            *counter += 1;
            let id = EntryId::new(format!("{}-{}", language, counter));
            if !self.entries.contains_key(&id) {
                return id;
            }
        }
    }

    fn fresh_concept_id(&mut self) -> ConceptId {
        loop {
            self.next_concept += 1;
            let id = ConceptId::new(format!("c{}", self.next_concept));
            if !self.concepts.contains_key(&id) {
                return id;
            }
        }
    }

    pub fn add_concept(&mut self, layer: ConceptLayer, gloss: &str) -> ConceptId {
        let id = self.fresh_concept_id();
        self.concepts.insert(
            id.clone(),
            Concept {
                id: id.clone(),
                layer,
                gloss: gloss.trim().to_string(),
                relations: Vec::new(),
            },
        );
        id
    }

    /// The concept lexicalized by `entry`, creating a language-specific one if needed.
    pub fn ensure_concept(&mut self, entry: &EntryId) -> Result<ConceptId, LexiconError> {
        if let Some(c) = self.links.get(entry) {
            return Ok(c.clone());
        }
        let e = self
            .entries
            .get(entry)
            .ok_or_else(|| LexiconError::UnknownEntry(entry.clone()))?;
        let (language, gloss) = (e.language.clone(), e.gloss.clone());
        let id = self.add_concept(ConceptLayer::LanguageSpecific(language), &gloss);
        self.links.insert(entry.clone(), id.clone());
        Ok(id)
    }

    /// Languages with at least one entry lexicalizing `concept`.
    pub fn lexicalizing_languages(&self, concept: &ConceptId) -> BTreeSet<LanguageCode> {
        self.links
            .iter()
            .filter(|(_, c)| *c == concept)
            .filter_map(|(e, _)| self.entries.get(e).map(|e| e.language.clone()))
            .collect()
    }

    fn lexicalizer_in(&self, concept: &ConceptId, language: &LanguageCode) -> Option<EntryId> {
        self.links
            .iter()
            .filter(|(_, c)| *c == concept)
            .find(|(e, _)| {
                self.entries
                    .get(*e)
                    .is_some_and(|entry| &entry.language == language)
            })
            .map(|(e, _)| e.clone())
    }

    pub fn assert_gap(
        &mut self,
        concept: &ConceptId,
        language: &LanguageCode,
        provenance: GapProvenance,
        campaign: Option<String>,
    ) -> Result<LexicalGap, LexiconError> {
        if !self.concepts.contains_key(concept) {
            return Err(LexiconError::UnknownConcept(concept.clone()));
        }
        if let Some(entry) = self.lexicalizer_in(concept, language) {
            return Err(LexiconError::ConflictingLexicalization {
                concept: concept.clone(),
                language: language.clone(),
                entry,
            });
        }
        let gap = self
            .gaps
            .entry(concept.clone())
            .or_default()
            .entry(language.clone())
            .or_insert_with(|| LexicalGap {
                concept: concept.clone(),
                language: language.clone(),
                provenance,
                campaign,
            });
        Ok(gap.clone())
    }

    /// Attaches two entries of different languages to one shared concept.
    pub fn link_equivalent(
        &mut self,
        entry_a: &EntryId,
        entry_b: &EntryId,
    ) -> Result<LinkOutcome, LexiconError> {
        let lang_a = self
            .entries
            .get(entry_a)
            .ok_or_else(|| LexiconError::UnknownEntry(entry_a.clone()))?
            .language
            .clone();
        let lang_b = self
            .entries
            .get(entry_b)
            .ok_or_else(|| LexiconError::UnknownEntry(entry_b.clone()))?
            .language
            .clone();
        if lang_a == lang_b {
            return Err(LexiconError::SameLanguage(entry_a.clone(), entry_b.clone()));
        }

        // Work on a copy so a rejected merge leaves the model untouched.
        let mut next = self.clone();
        let target = next.ensure_concept(entry_a)?;
        match next.links.get(entry_b).cloned() {
            None => {
                next.links.insert(entry_b.clone(), target.clone());
            }
            Some(existing) if existing == target => {}
            Some(existing) => next.merge_concepts(&target, &existing)?,
        }

        let languages = next.lexicalizing_languages(&target);
        let concept = next.concepts.get_mut(&target).expect("target concept exists");
        let promoted = languages.len() >= 2 && concept.layer != ConceptLayer::SupraLingual;
        if promoted {
            concept.layer = ConceptLayer::SupraLingual;
        }

        let mut removed_gaps = Vec::new();
        if let Some(per_lang) = next.gaps.get_mut(&target) {
            for language in &languages {
                if let Some(gap) = per_lang.remove(language) {
                    removed_gaps.push(gap);
                }
            }
            if per_lang.is_empty() {
                next.gaps.remove(&target);
            }
        }
        for gap in &removed_gaps {
            let contradicted_by = if gap.language == lang_a {
                entry_a.clone()
            } else {
                entry_b.clone()
            };
            next.audit.push(AuditNote {
                removed_gap: gap.clone(),
                contradicted_by,
            });
        }
        *self = next;
        Ok(LinkOutcome {
            concept: target,
            promoted,
            removed_gaps,
        })
    }

    /// Folds `absorbed` into `kept`: links, relations and gaps move over.
    fn merge_concepts(&mut self, kept: &ConceptId, absorbed: &ConceptId) -> Result<(), LexiconError> {
        let old = self
            .concepts
            .remove(absorbed)
            .ok_or_else(|| LexiconError::UnknownConcept(absorbed.clone()))?;
        for c in self.links.values_mut() {
            if c == absorbed {
                *c = kept.clone();
            }
        }
        for concept in self.concepts.values_mut() {
            for rel in &mut concept.relations {
                if &rel.concept == absorbed {
                    rel.concept = kept.clone();
                }
            }
        }
        let kept_concept = self.concepts.get_mut(kept).expect("kept concept exists");
        if old.layer == ConceptLayer::SupraLingual {
            kept_concept.layer = ConceptLayer::SupraLingual;
        }
        kept_concept.relations.extend(old.relations);
        kept_concept.relations.retain(|r| &r.concept != kept);
        kept_concept.relations.sort();
        kept_concept.relations.dedup();
        if let Some(moved) = self.gaps.remove(absorbed) {
            let slot = self.gaps.entry(kept.clone()).or_default();
            for (lang, mut gap) in moved {
                gap.concept = kept.clone();
                slot.entry(lang).or_insert(gap);
            }
        }
        if let Some((from, to)) = self.find_hypernym_cycle() {
            return Err(LexiconError::HypernymCycle { from, to });
        }
        Ok(())
    }

    pub fn add_relation(
        &mut self,
        from: &ConceptId,
        kind: RelationKind,
        to: &ConceptId,
    ) -> Result<(), LexiconError> {
        for id in [from, to] {
            if !self.concepts.contains_key(id) {
                return Err(LexiconError::UnknownConcept(id.clone()));
            }
        }
        let relation = Relation {
            kind,
            concept: to.clone(),
        };
        let concept = self.concepts.get_mut(from).expect("checked above");
        if concept.relations.contains(&relation) {
            return Ok(());
        }
        concept.relations.push(relation);
        if self.find_hypernym_cycle().is_some() {
            self.concepts
                .get_mut(from)
                .expect("checked above")
                .relations
                .pop();
            return Err(LexiconError::HypernymCycle {
                from: from.clone(),
                to: to.clone(),
            });
        }
        Ok(())
    }

    /// Directed "is-a" edges child -> parent, from both hypernym and hyponym relations.
    fn isa_edges(&self) -> BTreeMap<&ConceptId, Vec<&ConceptId>> {
        let mut edges: BTreeMap<&ConceptId, Vec<&ConceptId>> = BTreeMap::new();
        for concept in self.concepts.values() {
            for rel in &concept.relations {
                match rel.kind {
                    RelationKind::Hypernym => edges.entry(&concept.id).or_default().push(&rel.concept),
                    RelationKind::Hyponym => edges.entry(&rel.concept).or_default().push(&concept.id),
                    _ => {}
                }
            }
        }
        edges
    }

    fn find_hypernym_cycle(&self) -> Option<(ConceptId, ConceptId)> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Active,
            Done,
        }
        let edges = self.isa_edges();
        let mut marks: BTreeMap<&ConceptId, Mark> = BTreeMap::new();
        for &start in edges.keys() {
            if marks.contains_key(start) {
                continue;
            }
            let mut stack: Vec<(&ConceptId, usize)> = vec![(start, 0)];
            marks.insert(start, Mark::Active);
            while let Some((node, idx)) = stack.pop() {
                let children = edges.get(node).map(Vec::as_slice).unwrap_or(&[]);
                if idx < children.len() {
                    stack.push((node, idx + 1));
                    let child = children[idx];
                    match marks.get(child) {
                        Some(Mark::Active) => return Some((node.clone(), child.clone())),
                        Some(Mark::Done) => {}
                        None => {
                            marks.insert(child, Mark::Active);
                            stack.push((child, 0));
                        }
                    }
                } else {
                    marks.insert(node, Mark::Done);
                }
            }
        }
        None
    }

    pub fn languages(&self) -> BTreeSet<LanguageCode> {
        self.entries
            .values()
            .map(|e| e.language.clone())
            .chain(self.gaps().map(|g| g.language.clone()))
            .collect()
    }

    /// Concepts lexicalized by at least one entry of `language`.
    pub fn lexicalized_concepts(&self, language: &LanguageCode) -> BTreeSet<ConceptId> {
        self.links
            .iter()
            .filter(|(e, _)| {
                self.entries
                    .get(*e)
                    .is_some_and(|entry| &entry.language == language)
            })
            .map(|(_, c)| c.clone())
            .collect()
    }

    /// Overlap of lexicalized concepts between two languages.
    ///
    /// Entries without a concept link count as their own (unshared) meaning.
    pub fn overlap_between(
        &self,
        lang_a: &LanguageCode,
        lang_b: &LanguageCode,
    ) -> Result<OverlapStat, LexiconError> {
        let count = |language: &LanguageCode| {
            let concepts = self.lexicalized_concepts(language);
            let unlinked = self
                .entries_of(language)
                .filter(|e| !self.links.contains_key(&e.id))
                .count();
            (concepts, unlinked as u64)
        };
        let (a, a_unlinked) = count(lang_a);
        let (b, b_unlinked) = count(lang_b);
        let shared = a.intersection(&b).count() as u64;
        overlap(shared, a.len() as u64 + a_unlinked, b.len() as u64 + b_unlinked)
    }

    pub fn export_lexicon(&self, language: &LanguageCode) -> Result<LexiconDocument, LexiconError> {
        if !self.languages().contains(language) {
            return Err(LexiconError::UnknownLanguage(language.clone()));
        }
        let entries: Vec<LexicalEntry> = self.entries_of(language).cloned().collect();
        let links: Vec<Link> = entries
            .iter()
            .filter_map(|e| {
                self.links.get(&e.id).map(|c| Link {
                    entry: e.id.clone(),
                    concept: c.clone(),
                })
            })
            .collect();
        let gaps: Vec<LexicalGap> = self
            .gaps()
            .filter(|g| &g.language == language)
            .cloned()
            .collect();
        let concept_ids: BTreeSet<&ConceptId> = links
            .iter()
            .map(|l| &l.concept)
            .chain(gaps.iter().map(|g| &g.concept))
            .collect();
        let concepts = concept_ids
            .into_iter()
            .filter_map(|id| self.concepts.get(id).cloned())
            .collect();
        Ok(LexiconDocument {
            entries,
            concepts,
            gaps,
            links,
        })
    }

    pub fn export_all(&self) -> LexiconDocument {
        LexiconDocument {
            entries: self.entries.values().cloned().collect(),
            concepts: self.concepts.values().cloned().collect(),
            gaps: self.gaps().cloned().collect(),
            links: self
                .links
                .iter()
                .map(|(e, c)| Link {
                    entry: e.clone(),
                    concept: c.clone(),
                })
                .collect(),
        }
    }

    /// Merges a document into this lexicon. Records already present must be identical.
    ///
    /// Relation targets outside the document are kept as external references.
    pub fn import(&mut self, doc: &LexiconDocument) -> Result<(), LexiconError> {
        let mut next = self.clone();
        for entry in &doc.entries {
            if entry.word.trim().is_empty() {
                return Err(LexiconError::EmptyField("word"));
            }
            if entry.gloss.trim().is_empty() {
                return Err(LexiconError::EmptyField("gloss"));
            }
            match next.entries.get(&entry.id) {
                Some(existing) if existing == entry => continue,
                Some(_) => {
                    return Err(LexiconError::ImportConflict(format!(
                        "entry {} differs from the stored one",
                        entry.id
                    )))
                }
                None => {}
            }
            let key = entry_key(&entry.language, &entry.word, &entry.gloss);
            if let Some(existing) = next.keys.get(&key) {
                return Err(LexiconError::DuplicateEntry {
                    language: entry.language.clone(),
                    word: entry.word.clone(),
                    existing: existing.clone(),
                });
            }
            next.keys.insert(key, entry.id.clone());
            next.bump_entry_counter(&entry.language, &entry.id);
            next.entries.insert(entry.id.clone(), entry.clone());
        }
        for concept in &doc.concepts {
            match next.concepts.get(&concept.id) {
                Some(existing) if existing == concept => continue,
                Some(_) => {
                    return Err(LexiconError::ImportConflict(format!(
                        "concept {} differs from the stored one",
                        concept.id
                    )))
                }
                None => {}
            }
            if let Some(n) = concept
                .id
                .as_str()
                .strip_prefix('c')
                .and_then(|n| n.parse::<u64>().ok())
            {
                next.next_concept = next.next_concept.max(n);
            }
            next.concepts.insert(concept.id.clone(), concept.clone());
        }
        for link in &doc.links {
            if !next.entries.contains_key(&link.entry) {
                return Err(LexiconError::UnknownEntry(link.entry.clone()));
            }
            if !next.concepts.contains_key(&link.concept) {
                return Err(LexiconError::UnknownConcept(link.concept.clone()));
            }
            match next.links.get(&link.entry) {
                Some(c) if c == &link.concept => {}
                Some(_) => {
                    return Err(LexiconError::ImportConflict(format!(
                        "entry {} is linked to a different concept",
                        link.entry
                    )))
                }
                None => {
                    next.links.insert(link.entry.clone(), link.concept.clone());
                }
            }
        }
        for gap in &doc.gaps {
            if !next.concepts.contains_key(&gap.concept) {
                return Err(LexiconError::UnknownConcept(gap.concept.clone()));
            }
            if let Some(entry) = next.lexicalizer_in(&gap.concept, &gap.language) {
                return Err(LexiconError::ConflictingLexicalization {
                    concept: gap.concept.clone(),
                    language: gap.language.clone(),
                    entry,
                });
            }
            match next.gap(&gap.concept, &gap.language) {
                Some(existing) if existing == gap => {}
                Some(_) => {
                    return Err(LexiconError::ImportConflict(format!(
                        "gap ({}, {}) differs from the stored one",
                        gap.concept, gap.language
                    )))
                }
                None => {
                    next.gaps
                        .entry(gap.concept.clone())
                        .or_default()
                        .insert(gap.language.clone(), gap.clone());
                }
            }
        }
        if let Some((from, to)) = next.find_hypernym_cycle() {
            return Err(LexiconError::HypernymCycle { from, to });
        }
        *self = next;
        Ok(())
    }

    fn bump_entry_counter(&mut self, language: &LanguageCode, id: &EntryId) {
        let prefix = format!("{}-", language);
        if let Some(n) = id
            .as_str()
            .strip_prefix(&prefix)
            .and_then(|n| n.parse::<u64>().ok())
        {
            let counter = self.next_entry.entry(language.clone()).or_insert(0);
            *counter = (*counter).max(n);
        }
    }

    pub fn from_document(doc: &LexiconDocument) -> Result<Self, LexiconError> {
        let mut lexicon = Self::new();
        lexicon.import(doc)?;
        Ok(lexicon)
    }
}
