use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::corpus::CorpusEntry;
use super::parser::parse;
use super::question::{parse_question, program_to_question, question_to_program, question_tokens};
use super::DslError;

/// Edit distance with unit insert, delete and substitute costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// d / max(|a|, |b|)
    #[default]
    MaxLength,
    /// 2d / (|a| + |b| + d), a metric on strings (Yujian and Bo).
    YujianBo,
}

pub fn normalized_levenshtein<T: PartialEq>(a: &[T], b: &[T], norm: Normalization) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let d = levenshtein(a, b) as f64;
    match norm {
        Normalization::MaxLength => d / a.len().max(b.len()) as f64,
        Normalization::YujianBo => 2.0 * d / (a.len() as f64 + b.len() as f64 + d),
    }
}

/// Character-level normalized distance.
pub fn normalized_levenshtein_str(a: &str, b: &str, norm: Normalization) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    normalized_levenshtein(&a, &b, norm)
}

/// Position-wise matches over the longer length.
pub fn token_accuracy<T: PartialEq>(predicted: &[T], reference: &[T]) -> f64 {
    let n = predicted.len().max(reference.len());
    if n == 0 {
        return 1.0;
    }
    predicted.iter().zip(reference).filter(|(p, r)| p == r).count() as f64 / n as f64
}

/// Question ↔ program translation backend.
pub trait Translator {
    fn to_program(&self, question: &str) -> Result<String, DslError>;
    fn to_question(&self, program: &str, horizon_years: f64) -> Result<String, DslError>;
}

/// Rule-based translator over the template family.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeterministicTranslator;

impl Translator for DeterministicTranslator {
    fn to_program(&self, question: &str) -> Result<String, DslError> {
        Ok(question_to_program(&parse_question(question)?).to_string())
    }

    fn to_question(&self, program: &str, horizon_years: f64) -> Result<String, DslError> {
        Ok(program_to_question(&parse(program)?, horizon_years).to_string())
    }
}

fn program_tokens(text: &str) -> Vec<String> {
    match parse(text) {
        Ok(ast) => ast.tokens(),
        // Unparseable output is still scored, on a raw split.
        Err(_) => {
            let mut t = vec![super::ast::BOS.to_string()];
            let mut word = String::new();
            for c in text.chars() {
                if matches!(c, '(' | ')' | ',') {
                    if !word.is_empty() {
                        t.push(std::mem::take(&mut word));
                    }
                    t.push(c.to_string());
                } else if !c.is_whitespace() {
                    word.push(c);
                }
            }
            if !word.is_empty() {
                t.push(word);
            }
            t.push(super::ast::EOS.to_string());
            t
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowScore {
    pub index: usize,
    pub reference_length: usize,
    pub exact: bool,
    pub token_accuracy: f64,
    pub normalized_levenshtein: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBucket {
    pub length: usize,
    pub n: usize,
    pub mean_token_accuracy: f64,
    pub mean_normalized_levenshtein: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub distance: f64,
    pub cumulative_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub n: usize,
    pub exact_match: f64,
    pub token_accuracy: f64,
    pub normalized_levenshtein: f64,
    pub per_length: Vec<LengthBucket>,
    pub cdf: Vec<CdfPoint>,
    pub rows: Vec<RowScore>,
}

impl DirectionReport {
    fn from_rows(rows: Vec<RowScore>) -> Self {
        let n = rows.len();
        let mean = |f: &dyn Fn(&RowScore) -> f64| if n == 0 { 0.0 } else { rows.iter().map(f).sum::<f64>() / n as f64 };
        let exact_match = mean(&|r| f64::from(u8::from(r.exact)));
        let token_accuracy = mean(&|r| r.token_accuracy);
        let normalized_levenshtein = mean(&|r| r.normalized_levenshtein);

        let mut by_len: BTreeMap<usize, Vec<&RowScore>> = BTreeMap::new();
        for r in &rows {
            by_len.entry(r.reference_length).or_default().push(r);
        }
        let per_length = by_len
            .into_iter()
            .map(|(length, rs)| LengthBucket {
                length,
                n: rs.len(),
                mean_token_accuracy: rs.iter().map(|r| r.token_accuracy).sum::<f64>() / rs.len() as f64,
                mean_normalized_levenshtein: rs.iter().map(|r| r.normalized_levenshtein).sum::<f64>() / rs.len() as f64,
            })
            .collect();

        let mut d: Vec<f64> = rows.iter().map(|r| r.normalized_levenshtein).collect();
        d.sort_by(f64::total_cmp);
        let mut cdf: Vec<CdfPoint> = Vec::new();
        for (i, &x) in d.iter().enumerate() {
            let frac = (i + 1) as f64 / n as f64;
            match cdf.last_mut() {
                Some(last) if last.distance == x => last.cumulative_fraction = frac,
                _ => cdf.push(CdfPoint { distance: x, cumulative_fraction: frac }),
            }
        }
        if let Some(last) = cdf.last_mut() {
            last.cumulative_fraction = 1.0;
        }
        Self { n, exact_match, token_accuracy, normalized_levenshtein, per_length, cdf, rows }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationReport {
    pub normalization: Normalization,
    pub question_to_program: DirectionReport,
    pub program_to_question: DirectionReport,
}

impl TranslationReport {
    /// `direction,distance,cumulative_fraction`
    pub fn cdf_csv(&self) -> String {
        let mut out = String::from("direction,distance,cumulative_fraction\n");
        for (name, rep) in [("question_to_program", &self.question_to_program), ("program_to_question", &self.program_to_question)] {
            for p in &rep.cdf {
                out.push_str(&format!("{name},{},{}\n", p.distance, p.cumulative_fraction));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn score(index: usize, pred: Result<Vec<String>, DslError>, reference: &[String], exact_pred: Option<&str>, exact_ref: &str, norm: Normalization) -> RowScore {
    match pred {
        Ok(p) => RowScore {
            index,
            reference_length: reference.len(),
            exact: exact_pred == Some(exact_ref),
            token_accuracy: token_accuracy(&p, reference),
            normalized_levenshtein: normalized_levenshtein(&p, reference, norm),
            error: None,
        },
        Err(e) => RowScore {
            index,
            reference_length: reference.len(),
            exact: false,
            token_accuracy: 0.0,
            normalized_levenshtein: 1.0,
            error: Some(e.to_string()),
        },
    }
}

/// Translate every entry in both directions and score against the stored references.
pub fn evaluate_translations(translator: &dyn Translator, corpus: &[CorpusEntry], norm: Normalization) -> TranslationReport {
    let mut q2p = Vec::with_capacity(corpus.len());
    let mut p2q = Vec::with_capacity(corpus.len());
    for (i, e) in corpus.iter().enumerate() {
        let pred = translator.to_program(&e.question);
        let ref_toks = program_tokens(&e.program);
        let text = pred.as_ref().ok().cloned();
        q2p.push(score(i, pred.map(|p| program_tokens(&p)), &ref_toks, text.as_deref(), &e.program, norm));

        // Programs go back to questions from the reference program, not the prediction.
        let pred = translator.to_question(&e.program, e.horizon_years);
        let ref_toks = question_tokens(&e.question);
        let text = pred.as_ref().ok().cloned();
        p2q.push(score(i, pred.map(|q| question_tokens(&q)), &ref_toks, text.as_deref(), &e.question, norm));
    }
    TranslationReport {
        normalization: norm,
        question_to_program: DirectionReport::from_rows(q2p),
        program_to_question: DirectionReport::from_rows(p2q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kitten_sitting() {
        assert!((normalized_levenshtein_str("kitten", "sitting", Normalization::MaxLength) - 3.0 / 7.0).abs() < 1e-15);
        assert_eq!(levenshtein(&[1, 2, 3], &[1, 2, 3]), 0);
    }

    #[test]
    fn empty_conventions() {
        let e: [u8; 0] = [];
        assert_eq!(token_accuracy(&e, &e), 1.0);
        assert_eq!(normalized_levenshtein(&e, &e, Normalization::MaxLength), 0.0);
        assert_eq!(normalized_levenshtein_str("", "abc", Normalization::MaxLength), 1.0);
        assert_eq!(normalized_levenshtein_str("", "abc", Normalization::YujianBo), 1.0);
    }
}
