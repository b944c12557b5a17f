//! Synthetic "dataset" for the simulator.
//!
//! Queries come in families. Each query has a pool of candidate responses;
//! a few are correct and sit in a tight cluster around the query's solution
//! direction, the rest are wrong answers with graded alignment to that
//! direction (near misses through to unrelated). Candidate texts carry an
//! answer in the usual `<think>/<answer>` layout so the verifier decides
//! correctness exactly as it would for real generations.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::encoder::{dot, Embedding};
use crate::error::{Error, Result};
use crate::verifier::{correctness_reward, extract_answer, integer_reward, xml_reward, AnswerFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSpec {
    pub dimension: usize,
    pub queries: usize,
    pub candidates: usize,
    /// Fraction of correct candidates per query; rounded up.
    pub sparsity: f64,
    pub families: usize,
    /// Minimum pairwise cosine among one query's correct candidates.
    pub cluster_tightness: f64,
    /// Cosine between a query and its family centre.
    pub query_affinity: f64,
    /// Cosine between a query's solution direction and its family's.
    pub solution_affinity: f64,
    /// Range of cosine between wrong candidates and the solution direction.
    pub wrong_alignment: (f64, f64),
    pub max_length: usize,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            dimension: 96,
            queries: 32,
            candidates: 100,
            sparsity: 0.02,
            families: 4,
            cluster_tightness: 0.9,
            query_affinity: 0.8,
            solution_affinity: 0.8,
            wrong_alignment: (-0.2, 0.75),
            max_length: 200,
            seed: 7,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.into()));
        if self.dimension < 2 {
            return bad("dimension must be >= 2");
        }
        if self.queries == 0 || self.candidates == 0 || self.families == 0 {
            return bad("queries, candidates and families must be >= 1");
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return bad("sparsity must lie in (0, 1]");
        }
        if !(-1.0..=1.0).contains(&self.cluster_tightness) {
            return bad("cluster_tightness must lie in [-1, 1]");
        }
        for a in [self.query_affinity, self.solution_affinity, self.wrong_alignment.0, self.wrong_alignment.1] {
            if !(-1.0..=1.0).contains(&a) {
                return bad("affinities and alignments must lie in [-1, 1]");
            }
        }
        if self.wrong_alignment.0 > self.wrong_alignment.1 {
            return bad("wrong_alignment range is inverted");
        }
        if self.max_length < 16 {
            return bad("max_length must be >= 16");
        }
        Ok(())
    }

    pub fn correct_per_query(&self) -> usize {
        // guard against 0.02 * 100 = 2.0000000000000004
        let raw = self.sparsity * self.candidates as f64;
        ((raw - 1e-9).ceil() as usize).clamp(1, self.candidates)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub embedding: Embedding,
    pub text: String,
    pub is_correct: bool,
    pub token_length: usize,
    /// Verifier outputs, cached at generation time.
    pub outcome: f64,
    pub xml_reward: f64,
    pub integer_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskQuery {
    pub embedding: Embedding,
    pub text: String,
    pub gold: String,
    pub family: usize,
    pub candidates: Vec<Candidate>,
    /// Row-major copy of the candidate embeddings (`candidates × dimension`).
    #[serde(skip)]
    pub(crate) matrix: Vec<f64>,
}

impl TaskQuery {
    pub fn candidate_matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn correct_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.candidates.iter().enumerate().filter(|(_, c)| c.is_correct).map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub spec: TaskSpec,
    pub queries: Vec<TaskQuery>,
}

impl SyntheticTask {
    pub fn dimension(&self) -> usize {
        self.spec.dimension
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

fn random_unit<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = dot(&v, &v).sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Unit vector with cosine exactly `alpha` to the unit vector `base`.
fn with_cosine<R: Rng>(base: &[f64], alpha: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let mut u = random_unit(base.len(), rng);
        let proj = dot(&u, base);
        u.iter_mut().zip(base).for_each(|(x, b)| *x -= proj * b);
        let n = dot(&u, &u).sqrt();
        if n < 1e-9 {
            continue;
        }
        let s = (1.0 - alpha * alpha).max(0.0).sqrt();
        let v: Vec<f64> = base.iter().zip(&u).map(|(b, x)| alpha * b + s * x / n).collect();
        let norm = dot(&v, &v).sqrt();
        return v.into_iter().map(|x| x / norm).collect();
    }
}

const VOCAB: usize = 400;

fn words<R: Rng>(base: &[u32], keep: f64, len: usize, rng: &mut R) -> Vec<u32> {
    (0..len)
        .map(|i| {
            if !base.is_empty() && rng.random::<f64>() < keep {
                base[i % base.len()]
            } else {
                rng.random_range(0..VOCAB as u32)
            }
        })
        .collect()
}

fn render(tokens: &[u32]) -> String {
    let mut s = String::with_capacity(tokens.len() * 5);
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push('w');
        s.push_str(&t.to_string());
    }
    s
}

#[derive(Clone, Copy)]
enum WrongStyle {
    WrongNumber,
    NoThink,
    Symbolic,
    Unformatted,
}

/// Builds a task deterministically from `spec.seed`.
pub fn generate_task(spec: &TaskSpec) -> Result<SyntheticTask> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dimension;
    let n_correct = spec.correct_per_query();
    let rho = ((1.0 + spec.cluster_tightness) / 2.0).sqrt();
    let format = AnswerFormat::default();

    let family_queries: Vec<Vec<f64>> = (0..spec.families).map(|_| random_unit(d, &mut rng)).collect();
    let family_solutions: Vec<Vec<f64>> = (0..spec.families).map(|_| random_unit(d, &mut rng)).collect();
    let family_words: Vec<Vec<u32>> = (0..spec.families)
        .map(|_| (0..24).map(|_| rng.random_range(0..VOCAB as u32)).collect())
        .collect();

    let mut queries = Vec::with_capacity(spec.queries);
    for qi in 0..spec.queries {
        let family = qi % spec.families;
        let q = with_cosine(&family_queries[family], spec.query_affinity, &mut rng);
        let solution = with_cosine(&family_solutions[family], spec.solution_affinity, &mut rng);
        let gold: i64 = rng.random_range(2..1000);
        let solution_words = words(&family_words[family], 0.5, 24, &mut rng);

        let mut correct_slots: Vec<usize> = (0..spec.candidates).collect();
        // first n_correct of a random permutation
        for i in 0..n_correct {
            let j = rng.random_range(i..spec.candidates);
            correct_slots.swap(i, j);
        }
        let mut is_correct = vec![false; spec.candidates];
        for &s in &correct_slots[..n_correct] {
            is_correct[s] = true;
        }

        let styles = [
            WrongStyle::WrongNumber,
            WrongStyle::WrongNumber,
            WrongStyle::WrongNumber,
            WrongStyle::NoThink,
            WrongStyle::Symbolic,
            WrongStyle::Unformatted,
        ];
        let mut candidates = Vec::with_capacity(spec.candidates);
        for &correct in &is_correct {
            let (emb, text, len) = if correct {
                let emb = with_cosine(&solution, rho, &mut rng);
                let len = rng.random_range(40..=120usize).min(spec.max_length - 4);
                let body = render(&words(&solution_words, 0.9, len, &mut rng));
                (emb, format!("<think>{body}</think><answer>{gold}</answer>"), len + 4)
            } else {
                let (lo, hi) = spec.wrong_alignment;
                let alpha = if hi > lo { rng.random_range(lo..hi) } else { lo };
                let emb = with_cosine(&solution, alpha, &mut rng);
                let len = rng.random_range(8..=spec.max_length - 4);
                let keep = alpha.clamp(0.0, 1.0) * 0.8;
                let body = render(&words(&solution_words, keep, len, &mut rng));
                let wrong = gold + rng.random_range(1..50) * if rng.random::<bool>() { 1 } else { -1 };
                let text = match *styles.choose(&mut rng).unwrap() {
                    WrongStyle::WrongNumber => format!("<think>{body}</think><answer>{wrong}</answer>"),
                    WrongStyle::NoThink => format!("{body} <answer>{wrong}</answer>"),
                    WrongStyle::Symbolic => format!("<think>{body}</think><answer>x + {wrong}</answer>"),
                    WrongStyle::Unformatted => format!("{body} so the answer is {gold}"),
                };
                (emb, text, len + 4)
            };
            let extracted = extract_answer(&text, &format);
            let outcome = correctness_reward(extracted.as_deref(), &gold.to_string(), format.comparison);
            candidates.push(Candidate {
                embedding: Embedding::normalized(emb)?,
                xml_reward: xml_reward(&text),
                integer_reward: integer_reward(&text, &format),
                text,
                is_correct: correct,
                token_length: len,
                outcome,
            });
        }
        let matrix = candidates.iter().flat_map(|c| c.embedding.iter().copied()).collect();
        queries.push(TaskQuery {
            embedding: Embedding::normalized(q)?,
            text: format!("query-{qi}"),
            gold: gold.to_string(),
            family,
            candidates,
            matrix,
        });
    }
    Ok(SyntheticTask {
        spec: spec.clone(),
        queries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::cosine_similarity;

    #[test]
    fn same_seed_same_task() {
        let spec = TaskSpec::default();
        assert_eq!(generate_task(&spec).unwrap(), generate_task(&spec).unwrap());
        let other = TaskSpec { seed: 8, ..spec.clone() };
        assert_ne!(generate_task(&spec).unwrap(), generate_task(&other).unwrap());
    }

    #[test]
    fn full_sparsity_means_all_correct() {
        let spec = TaskSpec {
            sparsity: 1.0,
            queries: 3,
            candidates: 10,
            ..Default::default()
        };
        let task = generate_task(&spec).unwrap();
        assert!(task.queries.iter().all(|q| q.candidates.iter().all(|c| c.is_correct)));
    }

    #[test]
    fn two_percent_of_hundred_is_two() {
        let task = generate_task(&TaskSpec::default()).unwrap();
        for q in &task.queries {
            assert_eq!(q.correct_indices().count(), 2);
        }
        let spec = TaskSpec {
            sparsity: 0.015,
            ..Default::default()
        };
        assert_eq!(spec.correct_per_query(), 2);
    }

    #[test]
    fn correctness_agrees_with_verifier_and_geometry() {
        let spec = TaskSpec::default();
        let task = generate_task(&spec).unwrap();
        for q in &task.queries {
            assert!(q.embedding.is_unit(1e-9));
            assert_eq!(q.candidate_matrix().len(), spec.candidates * spec.dimension);
            for c in &q.candidates {
                assert!(c.embedding.is_unit(1e-9));
                assert_eq!(c.embedding.dim(), spec.dimension);
                assert_eq!(c.outcome == 1.0, c.is_correct, "{}", c.text);
                assert!(c.token_length <= spec.max_length);
            }
            let correct: Vec<_> = q.correct_indices().collect();
            for &a in &correct {
                for &b in &correct {
                    let cs = cosine_similarity(&q.candidates[a].embedding, &q.candidates[b].embedding).unwrap();
                    assert!(cs >= spec.cluster_tightness - 1e-9);
                }
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        for spec in [
            TaskSpec { sparsity: 0.0, ..Default::default() },
            TaskSpec { sparsity: 1.5, ..Default::default() },
            TaskSpec { queries: 0, ..Default::default() },
            TaskSpec { candidates: 0, ..Default::default() },
            TaskSpec { wrong_alignment: (0.5, 0.1), ..Default::default() },
        ] {
            assert!(matches!(generate_task(&spec), Err(Error::InvalidSpec(_))));
        }
    }
}
