use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fourbox::{ModelParams, SV};

pub const BOS: &str = "<BOS>";
pub const EOS: &str = "<EOS>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamName {
    #[serde(rename = "M_ek")]
    MEk,
    #[serde(rename = "Fwn")]
    Fwn,
    #[serde(rename = "Fws")]
    Fws,
    #[serde(rename = "D_low0")]
    DLow0,
}

impl ParamName {
    pub const ALL: [ParamName; 4] = [ParamName::MEk, ParamName::Fwn, ParamName::Fws, ParamName::DLow0];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::MEk => "M_ek",
            ParamName::Fwn => "Fwn",
            ParamName::Fws => "Fws",
            ParamName::DLow0 => "D_low0",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }

    pub fn is_flux(self) -> bool {
        !matches!(self, ParamName::DLow0)
    }

    /// Program value (m³/s or m) to the model's unit (Sv or m).
    pub fn to_model_units(self, si: f64) -> f64 {
        if self.is_flux() {
            si / SV
        } else {
            si
        }
    }

    pub fn from_model_units(self, v: f64) -> f64 {
        if self.is_flux() {
            v * SV
        } else {
            v
        }
    }

    pub fn apply(self, params: &mut ModelParams, model_value: f64) {
        match self {
            ParamName::MEk => params.m_ek = model_value,
            ParamName::Fwn => params.fw_n = model_value,
            ParamName::Fws => params.fw_s = model_value,
            ParamName::DLow0 => params.d_low0 = model_value,
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variable {
    #[serde(rename = "M_n")]
    MN,
}

impl Variable {
    pub fn as_str(self) -> &'static str {
        "M_n"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetTo {
    pub param: ParamName,
    /// SI value: m³/s for fluxes, m for depths.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxModelCall {
    pub settings: Vec<SetTo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramAst {
    pub inner: BoxModelCall,
    pub monitored: Variable,
    /// Extended form `ChangeSign(...,M_n,Within(t))`.
    pub within_years: Option<f64>,
}

/// Shortest round-trip decimal without exponent notation.
pub(crate) fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    format!("{v}")
}

impl ProgramAst {
    pub fn new(settings: Vec<SetTo>) -> Self {
        Self { inner: BoxModelCall { settings }, monitored: Variable::MN, within_years: None }
    }

    pub fn settings(&self) -> &[SetTo] {
        &self.inner.settings
    }

    pub fn get(&self, param: ParamName) -> Option<f64> {
        self.settings().iter().find(|s| s.param == param).map(|s| s.value)
    }

    /// Canonical token stream framed by BOS/EOS.
    pub fn tokens(&self) -> Vec<String> {
        let mut t: Vec<String> = vec![BOS.into(), "ChangeSign".into(), "(".into(), "box_model".into(), "(".into()];
        for (i, s) in self.settings().iter().enumerate() {
            if i > 0 {
                t.push(",".into());
            }
            t.extend(["SetTo".into(), "(".into(), s.param.as_str().into(), ",".into(), format_number(s.value), ")".into()]);
        }
        t.extend([")".into(), ",".into(), self.monitored.as_str().into()]);
        if let Some(w) = self.within_years {
            t.extend([",".into(), "Within".into(), "(".into(), format_number(w), ")".into()]);
        }
        t.extend([")".into(), EOS.into()]);
        t
    }
}

impl fmt::Display for ProgramAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let toks = self.tokens();
        for t in &toks[1..toks.len() - 1] {
            f.write_str(t)?;
        }
        Ok(())
    }
}
