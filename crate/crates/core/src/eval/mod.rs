//! Question-answering benchmark: answer normalization, containment accuracy,
//! token F1 and the benchmark driver.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MultipartiteGraph;
use crate::providers::{CostReport, Providers};
use crate::retrieval::{generate_answer, retrieve, RetrievalParams};

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Answer normalizer: lowercase, delete punctuation, collapse whitespace,
/// and optionally drop the articles a/an/the (off by default).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Normalizer {
    pub drop_articles: bool,
}

impl Normalizer {
    pub fn tokens(&self, s: &str) -> Vec<String> {
        let lowered: String = s
            .to_lowercase()
            .chars()
            .filter(|c| c.is_alphanumeric() || c.is_whitespace())
            .collect();
        lowered
            .split_whitespace()
            .filter(|t| !(self.drop_articles && ARTICLES.contains(t)))
            .map(str::to_string)
            .collect()
    }

    pub fn normalize(&self, s: &str) -> String {
        self.tokens(s).join(" ")
    }

    /// 1.0 when some normalized gold answer occurs inside the normalized
    /// generation.
    pub fn accuracy<S: AsRef<str>>(&self, gold: &[S], generated: &str) -> f64 {
        let padded = format!(" {} ", self.normalize(generated));
        let hit = gold.iter().any(|a| {
            let a = self.normalize(a.as_ref());
            // an answer that normalizes away matches nothing; matches must
            // sit on token boundaries so "at" is not found inside "cat"
            !a.is_empty() && padded.contains(&format!(" {a} "))
        });
        if hit {
            1.0
        } else {
            0.0
        }
    }

    /// Best bag-of-tokens F1 over the gold answers.
    pub fn f1<S: AsRef<str>>(&self, gold: &[S], generated: &str) -> f64 {
        let g = self.tokens(generated);
        gold.iter()
            .map(|a| token_f1(&self.tokens(a.as_ref()), &g))
            .fold(0.0, f64::max)
    }
}

fn token_f1(gold: &[String], generated: &[String]) -> f64 {
    if gold.is_empty() || generated.is_empty() {
        return if gold.is_empty() && generated.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in generated {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / generated.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn normalize_answer(s: &str) -> String {
    Normalizer::default().normalize(s)
}

pub fn accuracy<S: AsRef<str>>(gold: &[S], generated: &str) -> f64 {
    Normalizer::default().accuracy(gold, generated)
}

pub fn f1<S: AsRef<str>>(gold: &[S], generated: &str) -> f64 {
    Normalizer::default().f1(gold, generated)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    pub question: String,
    #[serde(alias = "golden_answers")]
    pub answers: Vec<String>,
    /// Passage ids supporting the answer; kept for analysis only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub supporting: Vec<String>,
}

/// Reads a JSONL question set. Every item needs a unique id and at least one
/// answer.
pub fn load_qa(path: &Path) -> Result<Vec<QaItem>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut items = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let item: QaItem = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if item.answers.is_empty() {
            return Err(bad(format!("item `{}` has no answers", item.id)));
        }
        if !seen.insert(item.id.clone()) {
            return Err(Error::DuplicateId(item.id));
        }
        items.push(item);
    }
    Ok(items)
}

/// One line of `per-item.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: String,
    pub question: String,
    pub answers: Vec<String>,
    pub generated: String,
    pub chunks: Vec<String>,
    pub accuracy: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub items: usize,
    pub scored: usize,
    pub errors: usize,
    /// Mean accuracy over scored items, in percent.
    pub accuracy: f64,
    /// Mean F1 over scored items, in percent.
    pub f1: f64,
    pub params: RetrievalParams,
    pub normalizer: Normalizer,
    pub cost: CostReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    /// Ordered by item id.
    pub per_item: Vec<ItemResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchmarkOptions {
    pub workers: usize,
    pub normalizer: Normalizer,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            workers: 4,
            normalizer: Normalizer::default(),
        }
    }
}

fn run_item(
    g: &MultipartiteGraph,
    providers: &Providers,
    params: &RetrievalParams,
    item: &QaItem,
    norm: &Normalizer,
) -> ItemResult {
    let outcome = retrieve(g, providers, &item.question, params).and_then(|r| {
        let texts: Vec<&str> = r.chunks.iter().map(|c| c.text.as_str()).collect();
        let answer = generate_answer(&item.question, &texts, &providers.llm)?;
        Ok((r.chunks.iter().map(|c| c.chunk_id.clone()).collect(), answer.text))
    });
    let (chunks, generated, error) = match outcome {
        Ok((chunks, text)) => (chunks, text, None),
        Err(e) => {
            log::warn!("item `{}` failed: {e}", item.id);
            (Vec::new(), String::new(), Some(e.to_string()))
        }
    };
    let (accuracy, f1) = if error.is_some() {
        (0.0, 0.0)
    } else {
        (
            norm.accuracy(&item.answers, &generated),
            norm.f1(&item.answers, &generated),
        )
    };
    ItemResult {
        id: item.id.clone(),
        question: item.question.clone(),
        answers: item.answers.clone(),
        generated,
        chunks,
        accuracy,
        f1,
        error,
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Retrieves, answers and scores every item. Items that fail are reported
/// with their error and left out of the means.
pub fn run_benchmark(
    g: &MultipartiteGraph,
    items: &[QaItem],
    params: &RetrievalParams,
    providers: &Providers,
    opts: &BenchmarkOptions,
) -> Result<Evaluation> {
    params.validate()?;
    if opts.workers == 0 {
        return Err(Error::InvalidArgument("workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start benchmark workers: {e}")))?;
    let mut per_item: Vec<ItemResult> = pool.install(|| {
        items
            .par_iter()
            .map(|item| run_item(g, providers, params, item, &opts.normalizer))
            .collect()
    });
    per_item.sort_by(|a, b| a.id.cmp(&b.id));

    let scored: Vec<&ItemResult> = per_item.iter().filter(|r| r.error.is_none()).collect();
    let report = EvalReport {
        items: per_item.len(),
        scored: scored.len(),
        errors: per_item.len() - scored.len(),
        accuracy: 100.0 * mean(scored.iter().map(|r| r.accuracy)),
        f1: 100.0 * mean(scored.iter().map(|r| r.f1)),
        params: *params,
        normalizer: opts.normalizer,
        cost: providers.ledger.report(),
    };
    Ok(Evaluation { report, per_item })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&["Paris"], "The capital is Paris."), 1.0);
        assert_eq!(accuracy(&["Paris"], "London."), 0.0);
        assert_eq!(accuracy(&["U.S."], "the us won"), 1.0);
        assert_eq!(accuracy(&["London", "Paris"], "paris!"), 1.0);
        assert_eq!(accuracy(&["..."], "anything"), 0.0);
        assert_eq!(accuracy(&["at"], "the cat sat"), 0.0);
        assert_eq!(accuracy(&["cat sat"], "the cat sat down"), 1.0);
    }

    #[test]
    fn f1_cases() {
        assert_eq!(f1(&["Paris"], "Paris"), 1.0);
        // precision 2/3, recall 1
        assert!((f1(&["cat sat"], "the cat sat") - 0.8).abs() < 1e-12);
        assert_eq!(f1(&["dog"], "cat"), 0.0);
        assert_eq!(f1(&["!!"], "..."), 1.0);
        assert_eq!(f1(&["!!"], "cat"), 0.0);
        // overlap 1: precision 1/2, recall 1/3
        assert!((f1(&["big red cat"], "red dog") - 0.4).abs() < 1e-12);
    }

    #[test]
    fn f1_with_articles_dropped() {
        let n = Normalizer { drop_articles: true };
        assert_eq!(n.f1(&["cat sat"], "the cat sat"), 1.0);
        assert_eq!(n.f1(&["the"], "a"), 1.0);
        assert_eq!(n.accuracy(&["the"], "the"), 0.0);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_answer("  The  U.S.\tArmy!! "), "the us army");
        let n = Normalizer { drop_articles: true };
        assert_eq!(n.normalize("An apple a day"), "apple day");
    }

    #[test]
    fn qa_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("qa.jsonl");
        std::fs::write(
            &p,
            "{\"id\":\"q1\",\"question\":\"Who?\",\"answers\":[\"Ann\"]}\n\n{\"id\":\"q2\",\"question\":\"Where?\",\"golden_answers\":[\"Rome\"],\"supporting\":[\"d1\"]}\n",
        )
        .unwrap();
        let items = load_qa(&p).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[1].answers, vec!["Rome"]);

        std::fs::write(&p, "{\"id\":\"q1\",\"question\":\"Who?\",\"answers\":[]}\n").unwrap();
        assert!(matches!(load_qa(&p), Err(Error::MalformedRecord { line: 1, .. })));
        std::fs::write(
            &p,
            "{\"id\":\"q\",\"question\":\"a\",\"answers\":[\"x\"]}\n{\"id\":\"q\",\"question\":\"b\",\"answers\":[\"y\"]}\n",
        )
        .unwrap();
        assert!(matches!(load_qa(&p), Err(Error::DuplicateId(_))));
    }
}
