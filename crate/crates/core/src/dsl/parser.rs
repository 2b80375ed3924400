use super::ast::{BoxModelCall, ParamName, ProgramAst, SetTo, Variable};
use super::metrics::levenshtein;
use super::DslError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64, String),
    LParen,
    RParen,
    Comma,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("{s:?}"),
            Tok::Number(_, s) => format!("number {s}"),
            Tok::LParen => "\"(\"".into(),
            Tok::RParen => "\")\"".into(),
            Tok::Comma => "\",\"".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, DslError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'(' => {
                out.push((Tok::LParen, i));
                i += 1;
            }
            b')' => {
                out.push((Tok::RParen, i));
                i += 1;
            }
            b',' => {
                out.push((Tok::Comma, i));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let s = &text[start..i];
                let v: f64 = s.parse().map_err(|_| DslError::ParseError {
                    position: start,
                    expected: vec!["number".into()],
                    found: format!("{s:?}"),
                })?;
                if !v.is_finite() {
                    return Err(DslError::InvalidValue(format!("{s} is not finite")));
                }
                out.push((Tok::Number(v, s.to_string()), start));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
            }
            _ => {
                let ch = text[i..].chars().next().unwrap();
                return Err(DslError::ParseError {
                    position: i,
                    expected: vec!["identifier".into(), "number".into(), "\"(\"".into(), "\")\"".into(), "\",\"".into()],
                    found: format!("{ch:?}"),
                });
            }
        }
    }
    out.push((Tok::Eof, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

fn suggest_param(name: &str) -> Option<String> {
    let lower = name.to_ascii_lowercase();
    ParamName::ALL
        .iter()
        .map(|p| (levenshtein(&lower.chars().collect::<Vec<_>>(), &p.as_str().to_ascii_lowercase().chars().collect::<Vec<_>>()), p))
        .filter(|(d, p)| *d <= p.as_str().len().max(3) / 2 + 1)
        .min_by_key(|(d, _)| *d)
        .map(|(_, p)| p.as_str().to_string())
}

pub(crate) fn unknown_parameter(name: &str, position: usize) -> DslError {
    DslError::UnknownParameter { name: name.to_string(), position, suggestion: suggest_param(name) }
}

impl Parser {
    fn peek(&self) -> &(Tok, usize) {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> DslError {
        let (tok, position) = self.peek();
        DslError::ParseError { position: *position, expected: expected.iter().map(|s| s.to_string()).collect(), found: tok.describe() }
    }

    fn expect(&mut self, want: Tok, label: &str) -> Result<usize, DslError> {
        if self.peek().0 == want {
            Ok(self.next().1)
        } else {
            Err(self.error(&[label]))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<usize, DslError> {
        match self.peek() {
            (Tok::Ident(s), p) if s == kw => {
                let p = *p;
                self.next();
                Ok(p)
            }
            _ => Err(self.error(&[kw])),
        }
    }

    fn number(&mut self) -> Result<f64, DslError> {
        match self.peek() {
            (Tok::Number(v, _), _) => {
                let v = *v;
                self.next();
                Ok(v)
            }
            _ => Err(self.error(&["number"])),
        }
    }

    fn program(&mut self) -> Result<ProgramAst, DslError> {
        self.keyword("ChangeSign")?;
        self.expect(Tok::LParen, "\"(\"")?;
        let box_pos = self.keyword("box_model")?;
        self.expect(Tok::LParen, "\"(\"")?;
        let mut settings: Vec<SetTo> = Vec::new();
        if self.peek().0 != Tok::RParen {
            loop {
                settings.push(self.set_to(&settings)?);
                match self.peek().0 {
                    Tok::Comma => {
                        self.next();
                    }
                    Tok::RParen => break,
                    _ => return Err(self.error(&["\",\"", "\")\""])),
                }
            }
        }
        self.expect(Tok::RParen, "\")\"")?;
        self.expect(Tok::Comma, "\",\"")?;
        let monitored = match self.peek() {
            (Tok::Ident(s), _) if s == "M_n" => {
                self.next();
                Variable::MN
            }
            _ => return Err(self.error(&["M_n"])),
        };
        let mut within_years = None;
        if self.peek().0 == Tok::Comma {
            self.next();
            self.keyword("Within")?;
            self.expect(Tok::LParen, "\"(\"")?;
            within_years = Some(self.number()?);
            self.expect(Tok::RParen, "\")\"")?;
        }
        self.expect(Tok::RParen, if within_years.is_some() { "\")\"" } else { "\",\" | \")\"" })?;
        if self.peek().0 != Tok::Eof {
            return Err(self.error(&["end of input"]));
        }
        if settings.is_empty() {
            return Err(DslError::ParseError { position: box_pos, expected: vec!["SetTo".into()], found: "empty box_model()".into() });
        }
        Ok(ProgramAst { inner: BoxModelCall { settings }, monitored, within_years })
    }

    fn set_to(&mut self, earlier: &[SetTo]) -> Result<SetTo, DslError> {
        self.keyword("SetTo")?;
        self.expect(Tok::LParen, "\"(\"")?;
        let (tok, position) = self.next();
        let param = match tok {
            Tok::Ident(name) => ParamName::from_name(&name).ok_or_else(|| unknown_parameter(&name, position))?,
            other => {
                return Err(DslError::ParseError {
                    position,
                    expected: ParamName::ALL.iter().map(|p| p.as_str().to_string()).collect(),
                    found: other.describe(),
                })
            }
        };
        if earlier.iter().any(|s| s.param == param) {
            return Err(DslError::DuplicateParameter { name: param.as_str().into(), position });
        }
        self.expect(Tok::Comma, "\",\"")?;
        let value = self.number()?;
        self.expect(Tok::RParen, "\")\"")?;
        Ok(SetTo { param, value })
    }
}

/// Parse a program; whitespace between tokens is ignored.
pub fn parse(text: &str) -> Result<ProgramAst, DslError> {
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.program()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unclosed_call_reports_end_of_input() {
        match parse("ChangeSign(box_model()") {
            Err(DslError::ParseError { position, .. }) => assert_eq!(position, 22),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_box_model_is_rejected() {
        assert!(matches!(parse("ChangeSign(box_model(),M_n)"), Err(DslError::ParseError { position: 11, .. })));
    }

    #[test]
    fn negative_values_do_not_lex_as_numbers() {
        assert!(matches!(parse("ChangeSign(box_model(SetTo(Fwn,-5)),M_n)"), Err(DslError::ParseError { position: 31, .. })));
    }

    #[test]
    fn suggestion_for_misspelled_parameter() {
        match parse("ChangeSign(box_model(SetTo(Mek,1)),M_n)") {
            Err(DslError::UnknownParameter { suggestion, position, .. }) => {
                assert_eq!(suggestion.as_deref(), Some("M_ek"));
                assert_eq!(position, 27);
            }
            other => panic!("{other:?}"),
        }
    }
}
