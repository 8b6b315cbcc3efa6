//! Run configuration, read from JSON.
//!
//! ```json
//! {
//!   "signature": "lorentzian",
//!   "gamma": 0.7,
//!   "Lambda": 0.3,
//!   "grid_n": [8, 16],
//!   "seed": 1,
//!   "suites": ["algebra", "eh"],
//!   "tolerances": { "reduction.structural": 1e-10 }
//! }
//! ```
//!
//! `gamma` is a nonzero number or the string `"infinity"`. `grid_n` entries are
//! even and at least 4; the `halfshell` suite always runs at `n = 2`.
//! `Lambda`, `seed`, `suites` and `tolerances` may be omitted (defaults 0, 0, every
//! suite, no overrides). Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use holst_core::algebra::{Gamma, Signature};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Algebra,
    Kernels,
    Reduction,
    Constraints,
    Brackets,
    Eh,
    Halfshell,
}

impl Suite {
    pub const ALL: [Suite; 7] =
        [Suite::Algebra, Suite::Kernels, Suite::Reduction, Suite::Constraints, Suite::Brackets, Suite::Eh, Suite::Halfshell];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Algebra => "algebra",
            Suite::Kernels => "kernels",
            Suite::Reduction => "reduction",
            Suite::Constraints => "constraints",
            Suite::Brackets => "brackets",
            Suite::Eh => "eh",
            Suite::Halfshell => "halfshell",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignatureName {
    Euclidean,
    Lorentzian,
}

impl From<SignatureName> for Signature {
    fn from(s: SignatureName) -> Self {
        match s {
            SignatureName::Euclidean => Signature::Euclidean,
            SignatureName::Lorentzian => Signature::Lorentzian,
        }
    }
}

/// `γ` as written in the config: a number or `"infinity"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaValue(pub Gamma);

impl Serialize for GammaValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Gamma::Infinite => s.serialize_str("infinity"),
            Gamma::Finite(g) => s.serialize_f64(g),
        }
    }
}

impl<'de> Deserialize<'de> for GammaValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = GammaValue;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a nonzero number or \"infinity\"")
            }

            fn visit_f64<E: de::Error>(self, g: f64) -> Result<GammaValue, E> {
                Gamma::new(g).map(GammaValue).map_err(|e| E::custom(e))
            }

            fn visit_i64<E: de::Error>(self, g: i64) -> Result<GammaValue, E> {
                self.visit_f64(g as f64)
            }

            fn visit_u64<E: de::Error>(self, g: u64) -> Result<GammaValue, E> {
                self.visit_f64(g as f64)
            }

            fn visit_str<E: de::Error>(self, s: &str) -> Result<GammaValue, E> {
                match s {
                    "infinity" | "inf" => Ok(GammaValue(Gamma::Infinite)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(s), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub signature: SignatureName,
    pub gamma: GammaValue,
    #[serde(rename = "Lambda", default)]
    pub lambda: f64,
    pub grid_n: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "all_suites")]
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

fn all_suites() -> Vec<Suite> {
    Suite::ALL.to_vec()
}

impl RunConfig {
    pub fn sig(&self) -> Signature {
        self.signature.into()
    }

    pub fn gamma(&self) -> Gamma {
        self.gamma.0
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |path: String, msg: &str| Err(CliError::Config(format!("{path}: {msg}")));
        if !self.lambda.is_finite() {
            return bad("Lambda".into(), "must be finite");
        }
        if self.grid_n.is_empty() && self.suites.iter().any(|s| *s != Suite::Algebra && *s != Suite::Kernels && *s != Suite::Halfshell) {
            return bad("grid_n".into(), "at least one size is required by the selected suites");
        }
        for (i, &n) in self.grid_n.iter().enumerate() {
            if n < 4 || n % 2 != 0 {
                return bad(format!("grid_n[{i}]"), "must be even and at least 4");
            }
        }
        for (i, s) in self.suites.iter().enumerate() {
            if self.suites[..i].contains(s) {
                return bad(format!("suites[{i}]"), "listed twice");
            }
        }
        for (k, v) in &self.tolerances {
            if !crate::suites::TOLERANCE_KEYS.contains(&k.as_str()) {
                return bad(format!("tolerances.{k}"), "unknown check");
            }
            if !(v.is_finite() && *v > 0.0) {
                return bad(format!("tolerances.{k}"), "must be positive");
            }
        }
        Ok(())
    }

    pub fn tolerance(&self, key: &str, default: f64) -> f64 {
        self.tolerances.get(key).copied().unwrap_or(default)
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = parse_config(r#"{"signature":"lorentzian","gamma":1,"Lambda":0,"grid_n":[8],"seed":1,"suites":["algebra"]}"#)
            .unwrap();
        assert_eq!(c.gamma(), Gamma::Finite(1.0));
        assert_eq!(c.suites, vec![Suite::Algebra]);
    }

    #[test]
    fn defaults() {
        let c = parse_config(r#"{"signature":"euclidean","gamma":"infinity","grid_n":[4]}"#).unwrap();
        assert_eq!(c.gamma(), Gamma::Infinite);
        assert_eq!(c.lambda, 0.0);
        assert_eq!(c.suites.len(), 7);
    }

    #[test]
    fn zero_gamma_rejected() {
        let e = parse_config(r#"{"signature":"lorentzian","gamma":0,"grid_n":[8]}"#).unwrap_err();
        assert!(e.to_string().contains("gamma"), "{e}");
    }

    #[test]
    fn unknown_key_rejected_with_path() {
        let e = parse_config(r#"{"signature":"lorentzian","gamma":1,"grid_n":[8],"extra":2}"#).unwrap_err();
        assert!(e.to_string().contains("extra"), "{e}");
        let e = parse_config(r#"{"signature":"lorentzian","gamma":1,"grid_n":[8],"tolerances":{"nope":1}}"#).unwrap_err();
        assert!(e.to_string().contains("tolerances.nope"), "{e}");
    }

    #[test]
    fn grid_sizes_checked() {
        for bad in ["[3]", "[2]", "[8, 9]"] {
            let text = format!(r#"{{"signature":"lorentzian","gamma":1,"grid_n":{bad}}}"#);
            assert!(matches!(parse_config(&text), Err(CliError::Config(_))));
        }
    }

    #[test]
    fn gamma_round_trips() {
        for g in [GammaValue(Gamma::Infinite), GammaValue(Gamma::Finite(-2.5))] {
            let s = serde_json::to_string(&g).unwrap();
            assert_eq!(serde_json::from_str::<GammaValue>(&s).unwrap(), g);
        }
    }
}
