use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::IdentificationError;

/// Verbal likelihood scale used to answer attribute questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnswerLevel {
    Yes,
    Usually,
    Sometimes,
    Rarely,
    Doubtful,
    No,
    Unknown,
}

impl AnswerLevel {
    pub const ALL: [AnswerLevel; 7] = [
        AnswerLevel::Yes,
        AnswerLevel::Usually,
        AnswerLevel::Sometimes,
        AnswerLevel::Rarely,
        AnswerLevel::Doubtful,
        AnswerLevel::No,
        AnswerLevel::Unknown,
    ];

    /// Strength with which the answer affirms the attribute. `None` means the
    /// answer carries no evidence.
    pub fn weight(self) -> Option<f64> {
        match self {
            AnswerLevel::Yes => Some(0.95),
            AnswerLevel::Usually => Some(0.8),
            AnswerLevel::Sometimes => Some(0.5),
            AnswerLevel::Rarely => Some(0.2),
            AnswerLevel::Doubtful => Some(0.1),
            AnswerLevel::No => Some(0.05),
            AnswerLevel::Unknown => None,
        }
    }

    /// Probability of observing this answer from a class whose attribute
    /// likelihood is `likelihood`.
    pub fn observation_likelihood(self, likelihood: f64) -> Option<f64> {
        self.weight()
            .map(|w| w * likelihood + (1.0 - w) * (1.0 - likelihood))
    }
}

impl fmt::Display for AnswerLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for AnswerLevel {
    type Err = IdentificationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        AnswerLevel::ALL
            .into_iter()
            .find(|l| l.to_string().eq_ignore_ascii_case(t))
            .ok_or_else(|| IdentificationError::UnknownAnswer(t.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeAnswer {
    pub question_id: String,
    pub answer: AnswerLevel,
}

impl AttributeAnswer {
    pub fn new(question_id: impl Into<String>, answer: AnswerLevel) -> Self {
        AttributeAnswer {
            question_id: question_id.into(),
            answer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub label: String,
    /// One likelihood per catalog question, in question order.
    pub likelihoods: Vec<f64>,
}

/// Classes and the attribute likelihood matrix used by [`classify`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCatalog {
    questions: Vec<Question>,
    classes: Vec<ClassEntry>,
    index: HashMap<String, usize>,
}

impl ClassCatalog {
    pub fn new(questions: Vec<Question>, classes: Vec<ClassEntry>) -> Result<Self, IdentificationError> {
        let mut index = HashMap::new();
        for (i, q) in questions.iter().enumerate() {
            if index.insert(q.id.clone(), i).is_some() {
                return Err(IdentificationError::InvalidCatalog(format!(
                    "duplicate question id `{}`",
                    q.id
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for c in &classes {
            if !seen.insert(c.label.as_str()) {
                return Err(IdentificationError::InvalidCatalog(format!(
                    "duplicate class `{}`",
                    c.label
                )));
            }
            if c.likelihoods.len() != questions.len() {
                return Err(IdentificationError::InvalidCatalog(format!(
                    "class `{}` has {} likelihoods for {} questions",
                    c.label,
                    c.likelihoods.len(),
                    questions.len()
                )));
            }
            if let Some(l) = c.likelihoods.iter().find(|l| !(0.0..=1.0).contains(*l)) {
                return Err(IdentificationError::InvalidCatalog(format!(
                    "class `{}` has likelihood {l} outside [0, 1]",
                    c.label
                )));
            }
        }
        Ok(ClassCatalog {
            questions,
            classes,
            index,
        })
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn classes(&self) -> &[ClassEntry] {
        &self.classes
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn question_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Looks a question up by id, falling back to its exact text.
    pub fn find_question(&self, id_or_text: &str) -> Option<&Question> {
        self.question_index(id_or_text)
            .map(|i| &self.questions[i])
            .or_else(|| self.questions.iter().find(|q| q.text == id_or_text))
    }
}

/// Posterior over classes, sorted by descending probability then label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPosterior {
    entries: Vec<(String, f64)>,
}

impl ClassPosterior {
    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn top(&self) -> (&str, f64) {
        let (l, p) = &self.entries[0];
        (l, *p)
    }

    pub fn probability(&self, label: &str) -> Option<f64> {
        self.entries.iter().find(|(l, _)| l == label).map(|(_, p)| *p)
    }

    pub fn rank(&self, label: &str) -> Option<usize> {
        self.entries.iter().position(|(l, _)| l == label)
    }

    /// True when the top class is strictly more probable than every other.
    pub fn has_unique_top(&self) -> bool {
        self.entries.len() < 2 || self.entries[0].1 > self.entries[1].1
    }
}

/// Naive-Bayes posterior from a uniform prior. `Unknown` answers are skipped.
pub fn classify(answers: &[AttributeAnswer], catalog: &ClassCatalog) -> Result<ClassPosterior, IdentificationError> {
    if catalog.is_empty() {
        return Err(IdentificationError::EmptyCatalog);
    }
    let mut evidence = Vec::with_capacity(answers.len());
    for a in answers {
        let qi = catalog
            .question_index(&a.question_id)
            .ok_or_else(|| IdentificationError::UnknownQuestion(a.question_id.clone()))?;
        if a.answer.weight().is_some() {
            evidence.push((qi, a.answer));
        }
    }
    // canonical order makes the floating-point sum independent of input order
    evidence.sort_unstable();

    let log_scores: Vec<f64> = catalog
        .classes
        .iter()
        .map(|c| {
            evidence
                .iter()
                .map(|&(qi, level)| {
                    level
                        .observation_likelihood(c.likelihoods[qi])
                        .expect("unknown answers filtered")
                        .ln()
                })
                .sum()
        })
        .collect();

    let max = log_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = log_scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();

    let mut entries: Vec<(String, f64)> = catalog
        .classes
        .iter()
        .zip(unnorm)
        .map(|(c, u)| (c.label.clone(), u / total))
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ClassPosterior { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(id: &str) -> Question {
        Question {
            id: id.into(),
            text: format!("{id}?"),
        }
    }

    fn small_catalog() -> ClassCatalog {
        ClassCatalog::new(
            vec![q("hard"), q("round")],
            vec![
                ClassEntry { label: "a".into(), likelihoods: vec![0.9, 0.2] },
                ClassEntry { label: "b".into(), likelihoods: vec![0.3, 0.7] },
                ClassEntry { label: "c".into(), likelihoods: vec![0.5, 0.5] },
            ],
        )
        .unwrap()
    }

    /// Enumerates joint probabilities P(class, answers) directly from the
    /// likelihood table and the verbal-scale weights.
    fn brute_force(answers: &[(usize, f64)], table: &[[f64; 2]; 3]) -> [f64; 3] {
        let mut joint = [0.0; 3];
        for (k, row) in table.iter().enumerate() {
            let mut p = 1.0 / 3.0;
            for &(qi, w) in answers {
                let l = row[qi];
                p *= w * l + (1.0 - w) * (1.0 - l);
            }
            joint[k] = p;
        }
        let z: f64 = joint.iter().sum();
        joint.map(|j| j / z)
    }

    #[test]
    fn matches_exhaustive_bayes() {
        let cat = small_catalog();
        let table = [[0.9, 0.2], [0.3, 0.7], [0.5, 0.5]];
        let answers = vec![
            AttributeAnswer::new("hard", AnswerLevel::Yes),
            AttributeAnswer::new("round", AnswerLevel::Rarely),
        ];
        let expected = brute_force(&[(0, 0.95), (1, 0.2)], &table);
        let post = classify(&answers, &cat).unwrap();
        for (label, want) in ["a", "b", "c"].iter().zip(expected) {
            assert!((post.probability(label).unwrap() - want).abs() < 1e-12);
        }
        assert_eq!(post.top().0, "a");
    }

    #[test]
    fn no_evidence_is_uniform() {
        let cat = small_catalog();
        let post = classify(&[], &cat).unwrap();
        for (_, p) in post.entries() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        // ties broken by label
        let labels: Vec<_> = post.entries().iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(labels, ["a", "b", "c"]);
    }

    #[test]
    fn unknown_answers_are_skipped() {
        let cat = small_catalog();
        let post = classify(&[AttributeAnswer::new("hard", AnswerLevel::Unknown)], &cat).unwrap();
        assert!((post.probability("b").unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sometimes_is_uninformative() {
        assert_eq!(AnswerLevel::Sometimes.observation_likelihood(0.9), Some(0.5));
        assert_eq!(AnswerLevel::Sometimes.observation_likelihood(0.0), Some(0.5));
    }

    #[test]
    fn errors() {
        let cat = small_catalog();
        let err = classify(&[AttributeAnswer::new("nope", AnswerLevel::Yes)], &cat).unwrap_err();
        assert_eq!(err, IdentificationError::UnknownQuestion("nope".into()));

        let empty = ClassCatalog::new(vec![q("hard")], vec![]).unwrap();
        assert_eq!(classify(&[], &empty).unwrap_err(), IdentificationError::EmptyCatalog);

        let bad = ClassCatalog::new(
            vec![q("hard")],
            vec![ClassEntry { label: "x".into(), likelihoods: vec![1.2] }],
        );
        assert!(matches!(bad, Err(IdentificationError::InvalidCatalog(_))));
        let short = ClassCatalog::new(
            vec![q("hard"), q("round")],
            vec![ClassEntry { label: "x".into(), likelihoods: vec![0.2] }],
        );
        assert!(matches!(short, Err(IdentificationError::InvalidCatalog(_))));
    }

    #[test]
    fn parses_levels() {
        assert_eq!("usually".parse::<AnswerLevel>().unwrap(), AnswerLevel::Usually);
        assert_eq!(" No ".parse::<AnswerLevel>().unwrap(), AnswerLevel::No);
        assert!("maybe".parse::<AnswerLevel>().is_err());
    }
}
