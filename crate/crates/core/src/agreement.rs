//! Krippendorff's alpha (nominal metric) with missing data, and per-item
//! percent agreement.
//!
//! Responses are encoded into a dense items x annotators reliability matrix.
//! `DontKnow` answers are abstentions and encode as missing cells. For each
//! item with `m_u >= 2` values, every ordered pair of values from distinct
//! annotators adds `1 / (m_u - 1)` to the coincidence matrix `o`; then
//!
//! ```text
//! D_o = sum_{c != k} o[c][k] / n
//! D_e = sum_{c != k} n_c * n_k / (n * (n - 1))
//! alpha = 1 - D_o / D_e
//! ```
//!
//! With `D_e = 0` (a single category across all pairable values) alpha is
//! undefined and reported as [`Alpha::Indeterminate`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use num::{BigInt, BigRational, One, Zero};
use serde::{Deserialize, Serialize};

use crate::ids::{EntryId, WorkerId};
use crate::text::normalize_lemma;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgreementError {
    #[error("duplicate response for item {item} by {annotator}")]
    DuplicateResponse { item: String, annotator: String },
    #[error("a reliability matrix needs at least 2 annotators, got {0}")]
    TooFewAnnotators(usize),
    #[error("no item has two or more non-missing values")]
    NoPairableItems,
    #[error("all responses are missing")]
    AllMissing,
    #[error("malformed matrix: {0}")]
    MalformedMatrix(String),
    #[error("malformed answer {0:?}")]
    MalformedAnswer(String),
}

/// One worker's judgment for one source entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnswerCategory {
    Gap,
    Equivalent { targets: BTreeSet<EntryId> },
    NewWord { lemma: String, gloss: String },
    DontKnow,
}

/// The equality class of an answer. Two answers agree iff their keys match.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CategoryKey {
    Gap,
    Equivalent(BTreeSet<EntryId>),
    NewWord(String),
}

impl AnswerCategory {
    pub fn equivalent(targets: impl IntoIterator<Item = EntryId>) -> Self {
        AnswerCategory::Equivalent {
            targets: targets.into_iter().collect(),
        }
    }

    pub fn new_word(lemma: impl Into<String>, gloss: impl Into<String>) -> Self {
        AnswerCategory::NewWord {
            lemma: lemma.into(),
            gloss: gloss.into(),
        }
    }

    /// `None` for `DontKnow`, which is treated as missing data.
    pub fn key(&self) -> Option<CategoryKey> {
        match self {
            AnswerCategory::Gap => Some(CategoryKey::Gap),
            AnswerCategory::Equivalent { targets } => Some(CategoryKey::Equivalent(targets.clone())),
            AnswerCategory::NewWord { lemma, .. } => Some(CategoryKey::NewWord(normalize_lemma(lemma))),
            AnswerCategory::DontKnow => None,
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            AnswerCategory::Equivalent { targets } => !targets.is_empty(),
            AnswerCategory::NewWord { lemma, .. } => !lemma.trim().is_empty(),
            _ => true,
        }
    }

    /// Sheet encoding: `GAP`, `EQ:<id>[;<id>...]`, `NEW:<lemma>|<gloss>`, `DK`.
    pub fn encode(&self) -> String {
        match self {
            AnswerCategory::Gap => "GAP".into(),
            AnswerCategory::DontKnow => "DK".into(),
            AnswerCategory::Equivalent { targets } => format!(
                "EQ:{}",
                targets.iter().map(EntryId::as_str).collect::<Vec<_>>().join(";")
            ),
            AnswerCategory::NewWord { lemma, gloss } => format!("NEW:{lemma}|{gloss}"),
        }
    }

    pub fn decode(text: &str) -> Result<Self, AgreementError> {
        let text = text.trim();
        let bad = || AgreementError::MalformedAnswer(text.to_string());
        match text {
            "GAP" => return Ok(AnswerCategory::Gap),
            "DK" => return Ok(AnswerCategory::DontKnow),
            _ => {}
        }
        if let Some(ids) = text.strip_prefix("EQ:") {
            let targets: BTreeSet<EntryId> = ids
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(EntryId::from)
                .collect();
            if targets.is_empty() {
                return Err(bad());
            }
            return Ok(AnswerCategory::Equivalent { targets });
        }
        if let Some(rest) = text.strip_prefix("NEW:") {
            let (lemma, gloss) = rest.split_once('|').unwrap_or((rest, ""));
            if lemma.trim().is_empty() {
                return Err(bad());
            }
            return Ok(AnswerCategory::new_word(lemma.trim(), gloss.trim()));
        }
        Err(bad())
    }
}

impl fmt::Display for AnswerCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

/// Items x annotators matrix of dense category ids; `None` is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityMatrix {
    pub items: Vec<String>,
    pub annotators: Vec<String>,
    /// `cells[item][annotator]`
    pub cells: Vec<Vec<Option<usize>>>,
    /// Category label per dense id.
    pub labels: Vec<String>,
}

impl ReliabilityMatrix {
    pub fn from_cells(
        items: Vec<String>,
        annotators: Vec<String>,
        cells: Vec<Vec<Option<usize>>>,
        labels: Vec<String>,
    ) -> Result<Self, AgreementError> {
        if annotators.len() < 2 {
            return Err(AgreementError::TooFewAnnotators(annotators.len()));
        }
        if cells.len() != items.len() || cells.iter().any(|r| r.len() != annotators.len()) {
            return Err(AgreementError::MalformedMatrix("cell grid does not match dimensions".into()));
        }
        if cells.iter().flatten().flatten().any(|&c| c >= labels.len()) {
            return Err(AgreementError::MalformedMatrix("category id out of range".into()));
        }
        Ok(Self {
            items,
            annotators,
            cells,
            labels,
        })
    }

    /// Number of non-missing values per item.
    pub fn values_per_item(&self) -> Vec<usize> {
        self.cells.iter().map(|r| r.iter().flatten().count()).collect()
    }

    pub fn unpairable_items(&self) -> Vec<&str> {
        self.items
            .iter()
            .zip(self.values_per_item())
            .filter(|(_, m)| *m < 2)
            .map(|(i, _)| i.as_str())
            .collect()
    }

    pub fn category_count(&self) -> usize {
        self.labels.len()
    }

    /// Parses the CSV matrix format: a header row (first cell is the item
    /// column, the rest are annotator ids), then one row per item. Empty cells
    /// are missing; any other cell text is a category label.
    pub fn from_csv(text: &str) -> Result<Self, AgreementError> {
        let bad = |e: String| AgreementError::MalformedMatrix(e);
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        let annotators: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
        let mut labels: Vec<String> = Vec::new();
        let mut ids: HashMap<String, usize> = HashMap::new();
        let mut items = Vec::new();
        let mut cells = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            items.push(record.get(0).unwrap_or("").trim().to_string());
            let row = record
                .iter()
                .skip(1)
                .map(|cell| {
                    let cell = cell.trim();
                    if cell.is_empty() {
                        return None;
                    }
                    let next = ids.len();
                    let id = *ids.entry(cell.to_string()).or_insert_with(|| {
                        labels.push(cell.to_string());
                        next
                    });
                    Some(id)
                })
                .collect();
            cells.push(row);
        }
        Self::from_cells(items, annotators, cells, labels)
    }
}

/// Builds the reliability matrix. Items and annotators keep first-appearance order.
pub fn encode_responses(
    responses: &[(EntryId, WorkerId, AnswerCategory)],
) -> Result<ReliabilityMatrix, AgreementError> {
    let mut items: Vec<String> = Vec::new();
    let mut item_idx: HashMap<&str, usize> = HashMap::new();
    let mut annotators: Vec<String> = Vec::new();
    let mut ann_idx: HashMap<&str, usize> = HashMap::new();
    for (item, worker, _) in responses {
        item_idx.entry(item.as_str()).or_insert_with(|| {
            items.push(item.to_string());
            items.len() - 1
        });
        ann_idx.entry(worker.as_str()).or_insert_with(|| {
            annotators.push(worker.to_string());
            annotators.len() - 1
        });
    }
    let mut cells = vec![vec![None; annotators.len()]; items.len()];
    let mut seen = vec![vec![false; annotators.len()]; items.len()];
    let mut labels = Vec::new();
    let mut keys: HashMap<CategoryKey, usize> = HashMap::new();
    for (item, worker, answer) in responses {
        let (i, a) = (item_idx[item.as_str()], ann_idx[worker.as_str()]);
        if std::mem::replace(&mut seen[i][a], true) {
            return Err(AgreementError::DuplicateResponse {
                item: item.to_string(),
                annotator: worker.to_string(),
            });
        }
        if let Some(key) = answer.key() {
            let next = keys.len();
            let id = *keys.entry(key).or_insert_with(|| {
                labels.push(answer.encode());
                next
            });
            cells[i][a] = Some(id);
        }
    }
    ReliabilityMatrix::from_cells(items, annotators, cells, labels)
}

/// Arithmetic needed by the alpha computation, shared by the float and the exact path.
trait Scalar:
    Clone + PartialEq + Zero + One + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self>
{
    fn from_count(n: usize) -> Self;
}

impl Scalar for f64 {
    fn from_count(n: usize) -> Self {
        n as f64
    }
}

impl Scalar for BigRational {
    fn from_count(n: usize) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
}

fn coincidences<T: Scalar>(m: &ReliabilityMatrix) -> Result<Vec<Vec<T>>, AgreementError> {
    let k = m.category_count();
    let mut o = vec![vec![T::zero(); k]; k];
    let mut pairable = false;
    for row in &m.cells {
        let values: Vec<usize> = row.iter().flatten().copied().collect();
        let m_u = values.len();
        if m_u < 2 {
            continue;
        }
        pairable = true;
        let weight = T::one() / T::from_count(m_u - 1);
        // Count pairs per (c, k) first so each item contributes count * weight.
        let mut counts = vec![0usize; k];
        for &v in &values {
            counts[v] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            for d in 0..k {
                let pairs = if c == d {
                    counts[c] * (counts[c] - 1)
                } else {
                    counts[c] * counts[d]
                };
                if pairs > 0 {
                    o[c][d] = o[c][d].clone() + T::from_count(pairs) * weight.clone();
                }
            }
        }
    }
    if !pairable {
        return Err(AgreementError::NoPairableItems);
    }
    Ok(o)
}

fn alpha_from_coincidences<T: Scalar>(o: &[Vec<T>]) -> Option<T> {
    let k = o.len();
    let marginals: Vec<T> = o
        .iter()
        .map(|row| row.iter().fold(T::zero(), |acc, x| acc + x.clone()))
        .collect();
    let n = marginals.iter().fold(T::zero(), |acc, x| acc + x.clone());
    let mut observed = T::zero();
    let mut expected = T::zero();
    for c in 0..k {
        for d in 0..k {
            if c != d {
                observed = observed + o[c][d].clone();
                expected = expected + marginals[c].clone() * marginals[d].clone();
            }
        }
    }
    if expected.is_zero() {
        return None;
    }
    let d_o = observed / n.clone();
    let d_e = expected / (n.clone() * (n - T::one()));
    Some(T::one() - d_o / d_e)
}

/// The symmetric coincidence matrix `o[c][k]`.
pub fn coincidence_matrix(m: &ReliabilityMatrix) -> Result<Vec<Vec<f64>>, AgreementError> {
    coincidences::<f64>(m)
}

pub fn coincidence_matrix_exact(m: &ReliabilityMatrix) -> Result<Vec<Vec<BigRational>>, AgreementError> {
    coincidences::<BigRational>(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Alpha {
    Value(f64),
    /// Expected disagreement is zero: every pairable value is one category.
    Indeterminate,
}

/// Absolute slack when comparing alpha against a threshold.
pub const THRESHOLD_EPSILON: f64 = 1e-12;

impl Alpha {
    pub fn value(self) -> Option<f64> {
        match self {
            Alpha::Value(v) => Some(v),
            Alpha::Indeterminate => None,
        }
    }

    /// `Indeterminate` only arises with perfect agreement, so it passes.
    pub fn meets(self, threshold: f64) -> bool {
        match self {
            Alpha::Value(v) => v >= threshold - THRESHOLD_EPSILON,
            Alpha::Indeterminate => true,
        }
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Alpha::Value(v) => write!(f, "{v:.4}"),
            Alpha::Indeterminate => f.write_str("indeterminate"),
        }
    }
}

pub fn krippendorff_alpha(m: &ReliabilityMatrix) -> Result<Alpha, AgreementError> {
    let o = coincidences::<f64>(m)?;
    Ok(match alpha_from_coincidences(&o) {
        Some(a) => Alpha::Value(a),
        None => Alpha::Indeterminate,
    })
}

/// Exact rational alpha; `None` when indeterminate.
pub fn krippendorff_alpha_exact(m: &ReliabilityMatrix) -> Result<Option<BigRational>, AgreementError> {
    let o = coincidences::<BigRational>(m)?;
    Ok(alpha_from_coincidences(&o))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modal<K> {
    Category(K),
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemAgreement {
    pub iaa_percent: f64,
    /// `None` when no unique modal category exists.
    pub modal: Option<String>,
}

impl ItemAgreement {
    pub fn is_unanimous(&self) -> bool {
        self.iaa_percent >= 100.0
    }
}

/// Percent agreement on one item: share of non-missing responses that match
/// the most frequent category.
pub fn item_iaa<K: Eq + std::hash::Hash + Clone + Ord>(
    values: impl IntoIterator<Item = Option<K>>,
) -> Result<(f64, Modal<K>), AgreementError> {
    let mut counts: BTreeMap<K, usize> = BTreeMap::new();
    let mut total = 0usize;
    for v in values.into_iter().flatten() {
        *counts.entry(v).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(AgreementError::AllMissing);
    }
    let best = *counts.values().max().expect("non-empty");
    let mut modal: Vec<&K> = counts.iter().filter(|(_, c)| **c == best).map(|(k, _)| k).collect();
    let iaa = 100.0 * best as f64 / total as f64;
    let modal = if modal.len() == 1 {
        Modal::Category(modal.pop().unwrap().clone())
    } else {
        Modal::Tie
    };
    Ok((iaa, modal))
}

pub fn item_iaa_answers(answers: &[AnswerCategory]) -> Result<(f64, Modal<CategoryKey>), AgreementError> {
    item_iaa(answers.iter().map(AnswerCategory::key))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub alpha: Alpha,
    /// `n`: total pairable values.
    pub pairable_values: usize,
    pub per_item: BTreeMap<String, ItemAgreement>,
}

pub fn agreement_report(m: &ReliabilityMatrix) -> Result<AgreementReport, AgreementError> {
    let alpha = krippendorff_alpha(m)?;
    let pairable_values = m.values_per_item().into_iter().filter(|&v| v >= 2).sum();
    let mut per_item = BTreeMap::new();
    for (item, row) in m.items.iter().zip(&m.cells) {
        if let Ok((iaa_percent, modal)) = item_iaa(row.iter().copied()) {
            let modal = match modal {
                Modal::Category(c) => Some(m.labels[c].clone()),
                Modal::Tie => None,
            };
            per_item.insert(item.clone(), ItemAgreement { iaa_percent, modal });
        }
    }
    Ok(AgreementReport {
        alpha,
        pairable_values,
        per_item,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::ToPrimitive;

    fn e(id: &str) -> EntryId {
        EntryId::new(id)
    }

    fn w(id: &str) -> WorkerId {
        WorkerId::new(id)
    }

    fn two_annotators(rows: &[(&str, &str)]) -> ReliabilityMatrix {
        let mut csv = String::from("item,a,b\n");
        for (i, (x, y)) in rows.iter().enumerate() {
            csv.push_str(&format!("i{i},{x},{y}\n"));
        }
        ReliabilityMatrix::from_csv(&csv).unwrap()
    }

    #[test]
    fn answer_codec() {
        for a in [
            AnswerCategory::Gap,
            AnswerCategory::DontKnow,
            AnswerCategory::equivalent([e("arb-2"), e("arb-10")]),
            AnswerCategory::new_word("khubz shrak", "thin flat bread"),
        ] {
            assert_eq!(AnswerCategory::decode(&a.encode()).unwrap(), a);
        }
        assert_eq!(
            AnswerCategory::equivalent([e("b"), e("a")]).encode(),
            "EQ:a;b"
        );
        assert!(AnswerCategory::decode("EQ:").is_err());
        assert!(AnswerCategory::decode("NEW:|x").is_err());
        assert!(AnswerCategory::decode("maybe").is_err());
    }

    #[test]
    fn category_equality_rules() {
        let r = vec![
            (e("i1"), w("w1"), AnswerCategory::equivalent([e("e1")])),
            (e("i1"), w("w2"), AnswerCategory::equivalent([e("e1")])),
            (e("i2"), w("w1"), AnswerCategory::equivalent([e("e1")])),
            (e("i2"), w("w2"), AnswerCategory::equivalent([e("e1"), e("e2")])),
            (e("i3"), w("w1"), AnswerCategory::new_word("Khubz  Shrak", "a")),
            (e("i3"), w("w2"), AnswerCategory::new_word("khubz shrak", "b")),
        ];
        let m = encode_responses(&r).unwrap();
        assert_eq!(m.cells[0][0], m.cells[0][1]);
        assert_ne!(m.cells[1][0], m.cells[1][1]);
        assert_eq!(m.cells[2][0], m.cells[2][1]);
        assert_eq!(m.category_count(), 3);
    }

    #[test]
    fn dont_know_is_missing() {
        let r = vec![
            (e("i1"), w("w1"), AnswerCategory::Gap),
            (e("i1"), w("w2"), AnswerCategory::DontKnow),
            (e("i1"), w("w3"), AnswerCategory::Gap),
        ];
        let m = encode_responses(&r).unwrap();
        assert_eq!(m.cells, vec![vec![Some(0), None, Some(0)]]);
        assert_eq!(m.values_per_item(), vec![2]);
    }

    #[test]
    fn duplicate_and_size_errors() {
        let r = vec![
            (e("i1"), w("w1"), AnswerCategory::Gap),
            (e("i1"), w("w1"), AnswerCategory::DontKnow),
        ];
        assert!(matches!(encode_responses(&r), Err(AgreementError::DuplicateResponse { .. })));
        let r = vec![(e("i1"), w("w1"), AnswerCategory::Gap)];
        assert_eq!(encode_responses(&r), Err(AgreementError::TooFewAnnotators(1)));
    }

    #[test]
    fn coincidence_small_cases() {
        let m = two_annotators(&[("A", "A")]);
        assert_eq!(coincidence_matrix(&m).unwrap(), vec![vec![2.0]]);
        let m = two_annotators(&[("A", "B")]);
        assert_eq!(coincidence_matrix(&m).unwrap(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        // (A, A, B) with weight 1/2: AA pairs = 2, AB pairs = 2, BA pairs = 2
        let m = ReliabilityMatrix::from_csv("item,x,y,z\ni,A,A,B\n").unwrap();
        assert_eq!(coincidence_matrix(&m).unwrap(), vec![vec![1.0, 1.0], vec![1.0, 0.0]]);
        let m = ReliabilityMatrix::from_csv("item,x,y\ni,A,\n").unwrap();
        assert_eq!(coincidence_matrix(&m), Err(AgreementError::NoPairableItems));
    }

    #[test]
    fn alpha_fixtures() {
        let m = two_annotators(&[("A", "A"), ("A", "A"), ("B", "B"), ("A", "B")]);
        let exact = krippendorff_alpha_exact(&m).unwrap().unwrap();
        assert_eq!(exact, BigRational::new(8.into(), 15.into()));
        let Alpha::Value(a) = krippendorff_alpha(&m).unwrap() else { panic!() };
        assert!((a - exact.to_f64().unwrap()).abs() < 1e-15);

        let m = two_annotators(&[("A", "B"), ("B", "A")]);
        assert_eq!(
            krippendorff_alpha_exact(&m).unwrap().unwrap(),
            BigRational::new((-1).into(), 2.into())
        );

        let m = two_annotators(&[("A", "A"), ("B", "B"), ("C", "C")]);
        assert_eq!(krippendorff_alpha(&m).unwrap(), Alpha::Value(1.0));

        let m = two_annotators(&[("A", "A"), ("A", "A")]);
        assert_eq!(krippendorff_alpha(&m).unwrap(), Alpha::Indeterminate);
        assert!(Alpha::Indeterminate.meets(1.0));
        assert!(!Alpha::Value(0.69).meets(0.70));
        assert!(Alpha::Value(0.70).meets(0.70));
    }

    #[test]
    fn item_level_agreement() {
        let gap = AnswerCategory::Gap;
        let eq = AnswerCategory::equivalent([e("e1")]);
        let new = AnswerCategory::new_word("x", "");
        let (iaa, modal) = item_iaa_answers(&[gap.clone(), gap.clone(), gap.clone()]).unwrap();
        assert_eq!((iaa, modal), (100.0, Modal::Category(CategoryKey::Gap)));
        let (iaa, modal) = item_iaa_answers(&[gap.clone(), gap.clone(), eq.clone()]).unwrap();
        assert!((iaa - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(modal, Modal::Category(CategoryKey::Gap));
        let (iaa, modal) = item_iaa_answers(&[gap.clone(), eq, new]).unwrap();
        assert!((iaa - 100.0 / 3.0).abs() < 1e-9);
        assert_eq!(modal, Modal::Tie);
        assert_eq!(
            item_iaa_answers(&[AnswerCategory::DontKnow]),
            Err(AgreementError::AllMissing)
        );
    }

    #[test]
    fn report_lists_items() {
        let m = two_annotators(&[("A", "A"), ("A", "B")]);
        let report = agreement_report(&m).unwrap();
        assert_eq!(report.pairable_values, 4);
        assert!(report.per_item["i0"].is_unanimous());
        assert_eq!(report.per_item["i1"].iaa_percent, 50.0);
        assert_eq!(report.per_item["i1"].modal, None);
    }

    #[test]
    fn csv_matrix_errors() {
        assert!(matches!(
            ReliabilityMatrix::from_csv("item,a\ni,A\n"),
            Err(AgreementError::TooFewAnnotators(1))
        ));
        assert!(matches!(
            ReliabilityMatrix::from_csv("item,a,b\ni,A\n"),
            Err(AgreementError::MalformedMatrix(_))
        ));
    }
}
