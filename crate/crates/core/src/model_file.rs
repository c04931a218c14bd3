//! JSON model documents.
//!
//! ```json
//! {
//!   "input_alphabet": 2,
//!   "output_alphabet": ["0", "1", "2"],
//!   "states": [{"label": "s0", "family": "both"}, {"label": "s1", "family": 1}],
//!   "kernel": [[[1, 0, 0], [0, 1, 0]], [[0, 1, 0], [0, 0, 1]]]
//! }
//! ```
//!
//! Kernel entries keep their decimal text, so a parsed document writes back
//! unchanged.

use crate::channel::{Alphabet, CavcModel, ChannelKernel, Family};
use crate::error::{CavcError, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Number;

/// An alphabet given either by its size or by its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphabetSpec {
    Size(usize),
    Labels(Vec<String>),
}

impl AlphabetSpec {
    fn to_alphabet(&self) -> Result<Alphabet> {
        match self {
            AlphabetSpec::Size(n) => Alphabet::new(*n),
            AlphabetSpec::Labels(l) => Alphabet::with_labels(l.clone()),
        }
    }

    fn from_alphabet(a: &Alphabet) -> Self {
        match a.labels() {
            Some(l) => AlphabetSpec::Labels(l.to_vec()),
            None => AlphabetSpec::Size(a.size()),
        }
    }
}

/// Family membership of one state: `1`, `2` or `"both"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    One,
    Two,
    Both,
}

impl Membership {
    pub fn contains(self, k: Family) -> bool {
        matches!((self, k), (Membership::Both, _) | (Membership::One, Family::One) | (Membership::Two, Family::Two))
    }
}

impl Serialize for Membership {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Membership::One => s.serialize_u8(1),
            Membership::Two => s.serialize_u8(2),
            Membership::Both => s.serialize_str("both"),
        }
    }
}

impl<'de> Deserialize<'de> for Membership {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(1) => Ok(Membership::One),
            Raw::Num(2) => Ok(Membership::Two),
            Raw::Text(t) if t == "both" => Ok(Membership::Both),
            Raw::Text(t) if t == "1" => Ok(Membership::One),
            Raw::Text(t) if t == "2" => Ok(Membership::Two),
            Raw::Num(v) => Err(serde::de::Error::custom(format!("family must be 1, 2 or \"both\", got {v}"))),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("family must be 1, 2 or \"both\", got {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub label: String,
    pub family: Membership,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub input_alphabet: AlphabetSpec,
    pub output_alphabet: AlphabetSpec,
    pub states: Vec<StateSpec>,
    /// `kernel[x][s][y]`.
    pub kernel: Vec<Vec<Vec<Number>>>,
}

impl ModelDocument {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CavcError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model documents serialize")
    }

    /// Builds the model, naming the offending cell when the kernel is
    /// malformed.
    pub fn to_model(&self) -> Result<CavcModel> {
        let input = self.input_alphabet.to_alphabet()?;
        let output = self.output_alphabet.to_alphabet()?;
        let labels: Vec<String> = self.states.iter().map(|s| s.label.clone()).collect();
        let state = Alphabet::with_labels(labels)?;
        let (nx, ns, ny) = (input.size(), state.size(), output.size());
        if self.kernel.len() != nx {
            return Err(CavcError::Parse(format!("kernel has {} input rows, expected {nx}", self.kernel.len())));
        }
        let mut table = vec![vec![vec![0.0; ny]; ns]; nx];
        for (x, per_state) in self.kernel.iter().enumerate() {
            if per_state.len() != ns {
                return Err(CavcError::Parse(format!("kernel[{x}] has {} state rows, expected {ns}", per_state.len())));
            }
            for (s, row) in per_state.iter().enumerate() {
                if row.len() != ny {
                    return Err(CavcError::Parse(format!("kernel[{x}][{s}] has {} entries, expected {ny}", row.len())));
                }
                for (y, v) in row.iter().enumerate() {
                    table[x][s][y] = v
                        .as_f64()
                        .filter(|p| p.is_finite())
                        .ok_or_else(|| CavcError::Parse(format!("kernel[{x}][{s}][{y}] = {v} is not a finite number")))?;
                }
            }
        }
        let kernel = ChannelKernel::new(input, state, output, &table).map_err(|e| match e {
            CavcError::NotStochastic { x, s, sum } => {
                CavcError::Parse(format!("kernel[{x}][{s}] sums to {sum}, expected 1 (input {x}, state {s})"))
            }
            CavcError::EntryOutOfRange { x, s, y, value } => {
                CavcError::Parse(format!("kernel[{x}][{s}][{y}] = {value} is outside [0, 1]"))
            }
            other => other,
        })?;
        let members = |k: Family| -> Vec<usize> {
            self.states.iter().enumerate().filter(|(_, st)| st.family.contains(k)).map(|(i, _)| i).collect()
        };
        CavcModel::new(kernel, members(Family::One), members(Family::Two))
    }

    /// Document for an in-memory model. States without labels are named
    /// `s0`, `s1`, …; probabilities are written as shortest round-trip
    /// decimals.
    pub fn from_model(model: &CavcModel) -> Self {
        let k = model.kernel();
        let states = (0..k.ns())
            .map(|s| {
                let (one, two) = (model.family(Family::One).contains(&s), model.family(Family::Two).contains(&s));
                StateSpec {
                    label: k.state().labels().map_or_else(|| format!("s{s}"), |l| l[s].clone()),
                    family: match (one, two) {
                        (true, true) => Membership::Both,
                        (true, false) => Membership::One,
                        _ => Membership::Two,
                    },
                }
            })
            .collect();
        let kernel = (0..k.nx())
            .map(|x| {
                (0..k.ns())
                    .map(|s| k.row(x, s).iter().map(|&p| decimal(p)).collect())
                    .collect()
            })
            .collect();
        ModelDocument {
            input_alphabet: AlphabetSpec::from_alphabet(k.input()),
            output_alphabet: AlphabetSpec::from_alphabet(k.output()),
            states,
            kernel,
        }
    }
}

fn decimal(p: f64) -> Number {
    if p == p.trunc() && p.abs() < 1e15 {
        Number::from(p as i64)
    } else {
        Number::from_f64(p).expect("kernel entries are finite")
    }
}

pub fn parse_model(text: &str) -> Result<CavcModel> {
    ModelDocument::parse(text)?.to_model()
}

pub fn model_to_json(model: &CavcModel) -> String {
    ModelDocument::from_model(model).to_json()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    const ADDER: &str = r#"{
  "input_alphabet": 2,
  "output_alphabet": ["0", "1", "2"],
  "states": [
    {"label": "zero", "family": "both"},
    {"label": "one", "family": "both"}
  ],
  "kernel": [
    [[1, 0, 0], [0, 1, 0]],
    [[0, 1, 0], [0, 0, 1]]
  ]
}"#;

    #[test]
    fn parses_an_adder_avc() {
        let m = parse_model(ADDER).unwrap();
        assert_eq!(m.family(Family::One), &[0, 1]);
        assert_eq!(m.family(Family::Two), &[0, 1]);
        assert_eq!(m.kernel().prob(1, 1, 2), 1.0);
        assert_eq!(m.kernel().output().label(2), "2");
    }

    #[test]
    fn decimal_text_survives_round_trip() {
        let text = r#"{"input_alphabet":2,"output_alphabet":2,"states":[{"label":"a","family":1},{"label":"b","family":2}],
            "kernel":[[[0.90000000000000000001,0.1],[0.7,0.3]],[[0.1,0.90000000000000000001],[0.3,0.7]]]}"#;
        let doc = ModelDocument::parse(text).unwrap();
        let again = ModelDocument::parse(&doc.to_json()).unwrap();
        assert_eq!(doc, again);
        assert!(doc.to_json().contains("0.90000000000000000001"));
        assert_eq!(doc.to_model().unwrap(), again.to_model().unwrap());
    }

    #[test]
    fn in_memory_models_round_trip() {
        for m in [catalog::example_one(2), catalog::bsc_family_model(&[0.1, 0.3], &[0.2]), catalog::adder_avc()] {
            let back = parse_model(&model_to_json(&m)).unwrap();
            assert_eq!(back.kernel().to_table(), m.kernel().to_table());
            assert_eq!(back.family(Family::One), m.family(Family::One));
            assert_eq!(back.family(Family::Two), m.family(Family::Two));
        }
    }

    #[test]
    fn bad_rows_name_their_cell() {
        let text = ADDER.replace("[[0, 1, 0], [0, 0, 1]]", "[[0, 0.9, 0], [0, 0, 1]]");
        let err = parse_model(&text).unwrap_err().to_string();
        assert!(err.contains("kernel[1][0]"), "{err}");
        let text = ADDER.replace("[0, 0, 1]]", "[0, 1]]");
        assert!(parse_model(&text).unwrap_err().to_string().contains("kernel[1][1]"));
        let text = ADDER.replace("\"both\"}\n  ]", "3}\n  ]");
        assert!(matches!(parse_model(&text), Err(CavcError::Parse(_))));
    }

    #[test]
    fn every_state_needs_a_family() {
        let text = r#"{"input_alphabet":1,"output_alphabet":1,"states":[{"label":"a","family":1}],"kernel":[[[1]]]}"#;
        assert!(matches!(parse_model(text), Err(CavcError::ModelMismatch(_))));
    }
}
