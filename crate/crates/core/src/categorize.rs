//! Unchanged / Changed categorization of recent-snapshot facts.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::diff::thread_pool;
use crate::error::Result;
use crate::ingest::{escape, FactTriple, Record};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Unchanged,
    Changed,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Unchanged => "Unchanged",
            Category::Changed => "Changed",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "Unchanged" => Ok(Category::Unchanged),
            "Changed" => Ok(Category::Changed),
            other => Err(format!("unknown category {other:?}")),
        }
    }
}

/// Why a fact landed in its category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reason {
    NewSubject,
    NewRelation,
    NewObject,
    Same,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::NewSubject => "NewSubject",
            Reason::NewRelation => "NewRelation",
            Reason::NewObject => "NewObject",
            Reason::Same => "Same",
        }
    }

    pub fn category(self) -> Category {
        match self {
            Reason::Same => Category::Unchanged,
            _ => Category::Changed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategorizedFact {
    pub triple: FactTriple,
    pub category: Category,
    pub reason: Reason,
}

impl Record for CategorizedFact {
    fn write_record(&self, sink: &mut dyn Write) -> io::Result<()> {
        let t = &self.triple;
        escape::write_line(
            sink,
            &[
                self.category.as_str(),
                &t.subject_id,
                &t.subject_label,
                &t.relation_id,
                &t.relation_label,
                &t.object_id,
                &t.object_label,
                self.reason.as_str(),
            ],
        )
    }
}

/// Sorts by (subject_id, relation_id, object_label) and drops exact repeats of
/// that key, keeping the first occurrence.
pub fn dedup_triples(mut triples: Vec<FactTriple>) -> Vec<FactTriple> {
    triples.sort_by(|a, b| a.key().cmp(&b.key()));
    triples.dedup_by(|later, earlier| later.key() == earlier.key());
    triples
}

/// Object equality: ids when both sides carry one, labels otherwise.
pub fn same_object(a_id: &str, a_label: &str, b_id: &str, b_label: &str) -> bool {
    if !a_id.is_empty() && !b_id.is_empty() {
        a_id == b_id
    } else {
        a_label == b_label
    }
}

struct PrevFact {
    relation_id: String,
    object_id: String,
    object_label: String,
}

/// Previous knowledge-base snapshot keyed by subject id.
pub struct PreviousFacts {
    by_subject: HashMap<String, Vec<PrevFact>>,
}

impl PreviousFacts {
    pub fn build<I>(facts: I) -> Result<Self>
    where
        I: IntoIterator<Item = Result<FactTriple>>,
    {
        let mut by_subject: HashMap<String, Vec<PrevFact>> = HashMap::new();
        for fact in facts {
            let fact = fact?;
            by_subject.entry(fact.subject_id).or_default().push(PrevFact {
                relation_id: fact.relation_id,
                object_id: fact.object_id,
                object_label: fact.object_label,
            });
        }
        Ok(PreviousFacts { by_subject })
    }

    pub fn reason_for(&self, fact: &FactTriple) -> Reason {
        let Some(history) = self.by_subject.get(&fact.subject_id) else {
            return Reason::NewSubject;
        };
        let mut relation_seen = false;
        for prev in history.iter().filter(|p| p.relation_id == fact.relation_id) {
            relation_seen = true;
            if same_object(&prev.object_id, &prev.object_label, &fact.object_id, &fact.object_label) {
                return Reason::Same;
            }
        }
        if relation_seen {
            Reason::NewObject
        } else {
            Reason::NewRelation
        }
    }
}

/// Categorizes every (deduplicated) recent fact against the previous snapshot.
///
/// Output is in canonical (subject_id, relation_id, object_label) order for
/// any worker count.
pub fn categorize<P, R>(prev: P, recent: R, workers: usize) -> Result<Vec<CategorizedFact>>
where
    P: IntoIterator<Item = Result<FactTriple>>,
    R: IntoIterator<Item = Result<FactTriple>>,
{
    let index = PreviousFacts::build(prev)?;
    let recent = dedup_triples(recent.into_iter().collect::<Result<Vec<_>>>()?);
    categorize_with(&index, recent, workers)
}

/// Like [`categorize`], over an already built index and deduplicated facts.
pub fn categorize_with(
    index: &PreviousFacts,
    recent: Vec<FactTriple>,
    workers: usize,
) -> Result<Vec<CategorizedFact>> {
    let pool = thread_pool(workers)?;
    Ok(pool.install(|| {
        recent
            .into_par_iter()
            .map(|triple| {
                let reason = index.reason_for(&triple);
                CategorizedFact {
                    triple,
                    category: reason.category(),
                    reason,
                }
            })
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fact(s: &str, r: &str, o_id: &str, o: &str) -> FactTriple {
        FactTriple {
            subject_id: s.into(),
            subject_label: format!("label {s}"),
            relation_id: r.into(),
            relation_label: format!("label {r}"),
            object_id: o_id.into(),
            object_label: o.into(),
            snapshot_tag: String::new(),
        }
    }

    fn run(prev: Vec<FactTriple>, recent: Vec<FactTriple>) -> Vec<(String, Reason)> {
        categorize(prev.into_iter().map(Ok), recent.into_iter().map(Ok), 2)
            .unwrap()
            .into_iter()
            .map(|c| (c.triple.object_label, c.reason))
            .collect()
    }

    #[test]
    fn new_object_for_known_relation() {
        let prev = vec![fact("Q5", "P39", "", "Senator")];
        let recent = vec![fact("Q5", "P39", "", "President")];
        assert_eq!(run(prev, recent), [("President".into(), Reason::NewObject)]);
    }

    #[test]
    fn new_subject_and_new_relation() {
        let prev = vec![fact("Q5", "P39", "", "Senator")];
        let recent = vec![fact("Q6", "P39", "", "Senator"), fact("Q5", "P19", "", "Hawaii")];
        let got = run(prev, recent);
        assert!(got.contains(&("Senator".into(), Reason::NewSubject)));
        assert!(got.contains(&("Hawaii".into(), Reason::NewRelation)));
    }

    #[test]
    fn identical_snapshots_are_all_unchanged() {
        let facts = vec![
            fact("Q1", "P1", "Q9", "Nine"),
            fact("Q1", "P1", "Q8", "Eight"),
            fact("Q2", "P3", "", "1999"),
        ];
        let result = categorize(facts.clone().into_iter().map(Ok), facts.into_iter().map(Ok), 1).unwrap();
        assert!(result.iter().all(|c| c.category == Category::Unchanged && c.reason == Reason::Same));
    }

    #[test]
    fn multi_valued_relation_matches_any_object() {
        let prev = vec![fact("Q1", "P1", "", "A"), fact("Q1", "P1", "", "B")];
        let recent = vec![fact("Q1", "P1", "", "B")];
        assert_eq!(run(prev, recent), [("B".into(), Reason::Same)]);
    }

    #[test]
    fn object_ids_override_labels_when_both_present() {
        // relabelled entity keeps its id
        let prev = vec![fact("Q1", "P1", "Q7", "Old name")];
        let recent = vec![fact("Q1", "P1", "Q7", "New name")];
        assert_eq!(run(prev, recent), [("New name".into(), Reason::Same)]);
        // same label, different entity
        let prev = vec![fact("Q1", "P1", "Q7", "Paris")];
        let recent = vec![fact("Q1", "P1", "Q8", "Paris")];
        assert_eq!(run(prev, recent), [("Paris".into(), Reason::NewObject)]);
        // one side literal: label decides
        let prev = vec![fact("Q1", "P1", "", "Paris")];
        let recent = vec![fact("Q1", "P1", "Q8", "Paris")];
        assert_eq!(run(prev, recent), [("Paris".into(), Reason::Same)]);
    }

    #[test]
    fn duplicates_collapse_and_order_is_canonical() {
        let recent = vec![
            fact("Q2", "P1", "", "b"),
            fact("Q1", "P2", "", "a"),
            fact("Q1", "P1", "", "z"),
            fact("Q1", "P1", "", "z"),
        ];
        let result = categorize(std::iter::empty(), recent.into_iter().map(Ok), 3).unwrap();
        let keys: Vec<_> = result
            .iter()
            .map(|c| (c.triple.subject_id.as_str(), c.triple.relation_id.as_str(), c.triple.object_label.as_str()))
            .collect();
        assert_eq!(keys, [("Q1", "P1", "z"), ("Q1", "P2", "a"), ("Q2", "P1", "b")]);
    }

    #[test]
    fn categorized_record_layout() {
        let c = CategorizedFact {
            triple: fact("Q1", "P20", "Q220", "Rome"),
            category: Category::Changed,
            reason: Reason::NewObject,
        };
        let mut buf = Vec::new();
        c.write_record(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "Changed\tQ1\tlabel Q1\tP20\tlabel P20\tQ220\tRome\tNewObject\n"
        );
    }
}
