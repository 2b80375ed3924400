use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ast::{ParamName, ProgramAst, SetTo};
use super::question::program_to_question;
use super::DslError;
use crate::fourbox::TABLE1_BOUNDS;

/// Horizons (years) drawn for generated questions.
pub const CORPUS_HORIZONS: [f64; 6] = [100.0, 250.0, 500.0, 1000.0, 2000.0, 3000.0];

const SAMPLED: [ParamName; 3] = [ParamName::MEk, ParamName::Fwn, ParamName::DLow0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub question: String,
    pub program: String,
    pub horizon_years: f64,
}

fn draw_value(rng: &mut ChaCha8Rng, p: ParamName) -> f64 {
    let (lo, hi) = match p {
        ParamName::MEk => TABLE1_BOUNDS.m_ek,
        ParamName::Fwn => TABLE1_BOUNDS.fw_n,
        ParamName::DLow0 => TABLE1_BOUNDS.d_low0,
        ParamName::Fws => unreachable!("not sampled"),
    };
    // Integer SI values, kept inside the box after rounding.
    let si_lo = p.from_model_units(lo).ceil();
    let si_hi = p.from_model_units(hi).floor();
    rng.gen_range(si_lo..=si_hi).round()
}

/// `n` distinct question/program pairs with 1-3 perturbed parameters in random order.
pub fn generate_corpus(n: usize, seed: u64) -> Result<Vec<CorpusEntry>, DslError> {
    if n == 0 {
        return Err(DslError::InvalidValue("corpus size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let k = rng.gen_range(1..=SAMPLED.len());
        let mut params = SAMPLED.to_vec();
        params.shuffle(&mut rng);
        params.truncate(k);
        let settings = params.iter().map(|&p| SetTo { param: p, value: draw_value(&mut rng, p) }).collect();
        let ast = ProgramAst::new(settings);
        let horizon_years = *CORPUS_HORIZONS.choose(&mut rng).unwrap();
        let question = program_to_question(&ast, horizon_years).to_string();
        if seen.insert(question.clone()) {
            out.push(CorpusEntry { question, program: ast.to_string(), horizon_years });
        }
    }
    Ok(out)
}

pub fn write_corpus_jsonl<W: Write>(entries: &[CorpusEntry], mut out: W) -> std::io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_corpus_jsonl<R: BufRead>(input: R) -> Result<Vec<CorpusEntry>, DslError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| DslError::InvalidValue(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DslError::InvalidValue(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
