use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{format_number, ParamName, ProgramAst, SetTo, BOS, EOS};
use super::parser::unknown_parameter;
use super::DslError;

pub const QUESTION_TEMPLATE: &str =
    "If <parameter> is set to value <number>[ and <parameter> is set to value <number>...], does the AMOC collapse within <t> years?";

const HORIZON_MARKER: &str = ", does the AMOC collapse within ";
const BINDING_MARKER: &str = " is set to value ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    SetToWithin,
}

/// Unit written after a value; `Si` means none (m³/s or m).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Si,
    Sv,
    Meters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub param: ParamName,
    pub value: f64,
    pub unit: Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub template: TemplateId,
    pub bindings: Vec<Binding>,
    pub horizon_years: f64,
}

impl fmt::Display for Question {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("If ")?;
        for (i, b) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str(" and ")?;
            }
            write!(f, "{}{BINDING_MARKER}{}", b.param, format_number(b.value))?;
            match b.unit {
                Unit::Si => {}
                Unit::Sv => f.write_str(" Sv")?,
                Unit::Meters => f.write_str(" m")?,
            }
        }
        write!(f, "{HORIZON_MARKER}{} years?", format_number(self.horizon_years))
    }
}

fn unrecognized(detail: impl Into<String>) -> DslError {
    DslError::UnrecognizedTemplate { nearest: QUESTION_TEMPLATE.to_string(), detail: detail.into() }
}

fn parse_value(text: &str, what: &str) -> Result<f64, DslError> {
    let ok = !text.is_empty()
        && text.chars().all(|c| c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || c == '+' || c == '-')
        && text.starts_with(|c: char| c.is_ascii_digit() || c == '.');
    let v: f64 = if ok { text.parse().map_err(|_| unrecognized(format!("{what} {text:?} is not a number")))? } else {
        return Err(unrecognized(format!("{what} {text:?} is not a number")));
    };
    if !v.is_finite() || v < 0.0 {
        return Err(DslError::InvalidValue(format!("{what} {text} must be finite and non-negative")));
    }
    Ok(v)
}

/// Parse a question of the template family; runs of whitespace count as one space.
pub fn parse_question(text: &str) -> Result<Question, DslError> {
    let norm = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let body = norm.strip_prefix("If ").ok_or_else(|| unrecognized("question must start with \"If \""))?;
    let body = body.strip_suffix('?').ok_or_else(|| unrecognized("question must end with \"?\""))?;
    let (lhs, rhs) = body
        .rsplit_once(HORIZON_MARKER)
        .ok_or_else(|| unrecognized("missing \", does the AMOC collapse within <t> years\""))?;
    let horizon_text = rhs.strip_suffix(" years").ok_or_else(|| unrecognized("horizon must be given in years"))?;
    let horizon_years = parse_value(horizon_text, "horizon")?;
    if horizon_years <= 0.0 {
        return Err(DslError::InvalidValue("horizon must be positive".into()));
    }

    let mut bindings: Vec<Binding> = Vec::new();
    let mut offset = "If ".len();
    for clause in lhs.split(" and ") {
        let (name, rest) = clause
            .split_once(BINDING_MARKER)
            .ok_or_else(|| unrecognized(format!("clause {clause:?} is not \"<parameter> is set to value <number>\"")))?;
        let param = ParamName::from_name(name).ok_or_else(|| unknown_parameter(name, offset))?;
        if bindings.iter().any(|b| b.param == param) {
            return Err(DslError::DuplicateParameter { name: name.to_string(), position: offset });
        }
        let (value_text, unit) = match rest.split_once(' ') {
            None => (rest, Unit::Si),
            Some((v, "Sv")) => (v, Unit::Sv),
            Some((v, "m")) => (v, Unit::Meters),
            Some((_, u)) => return Err(unrecognized(format!("unknown unit {u:?}"))),
        };
        match (unit, param.is_flux()) {
            (Unit::Sv, false) | (Unit::Meters, true) => {
                return Err(DslError::InvalidValue(format!("unit does not apply to {param}")));
            }
            _ => {}
        }
        let value = parse_value(value_text, param.as_str())?;
        bindings.push(Binding { param, value, unit });
        offset += clause.len() + " and ".len();
    }
    Ok(Question { template: TemplateId::SetToWithin, bindings, horizon_years })
}

/// Move the decimal point of a plain decimal literal `shift` places right.
fn shift_decimal(text: &str, shift: usize) -> String {
    let (int, frac) = text.split_once('.').unwrap_or((text, ""));
    let mut digits = format!("{int}{frac}");
    let point = int.len() + shift;
    while digits.len() < point {
        digits.push('0');
    }
    let (i, f) = digits.split_at(point);
    let i = i.trim_start_matches('0');
    let f = f.trim_end_matches('0');
    match (i.is_empty(), f.is_empty()) {
        (true, true) => "0".into(),
        (true, false) => format!("0.{f}"),
        (false, true) => i.to_string(),
        (false, false) => format!("{i}.{f}"),
    }
}

fn sv_to_si(v: f64) -> f64 {
    // Decimal shift keeps e.g. 28.496768 Sv at exactly 28496768 m³/s.
    shift_decimal(&format_number(v), 6).parse().unwrap_or(v * crate::fourbox::SV)
}

/// Program for a question; the horizon stays outside the program.
pub fn question_to_program(q: &Question) -> ProgramAst {
    let settings = q
        .bindings
        .iter()
        .map(|b| SetTo { param: b.param, value: if b.unit == Unit::Sv { sv_to_si(b.value) } else { b.value } })
        .collect();
    ProgramAst::new(settings)
}

/// Question for a program in SI units; `Within(t)` in the program overrides `horizon_years`.
pub fn program_to_question(ast: &ProgramAst, horizon_years: f64) -> Question {
    Question {
        template: TemplateId::SetToWithin,
        bindings: ast.settings().iter().map(|s| Binding { param: s.param, value: s.value, unit: Unit::Si }).collect(),
        horizon_years: ast.within_years.unwrap_or(horizon_years),
    }
}

/// Word tokens with `,` and `?` split off, framed by BOS/EOS.
pub fn question_tokens(text: &str) -> Vec<String> {
    let mut out = vec![BOS.to_string()];
    for word in text.split_whitespace() {
        let mut w = word;
        let mut tail = Vec::new();
        while let Some(stripped) = w.strip_suffix([',', '?']) {
            tail.push(w[stripped.len()..].to_string());
            w = stripped;
        }
        if !w.is_empty() {
            out.push(w.to_string());
        }
        out.extend(tail.into_iter().rev());
    }
    out.push(EOS.to_string());
    out
}
