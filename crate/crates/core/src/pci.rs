//! Physical Cell Identity assignment problems and their pairwise MRF form.
//!
//! A problem lists devices with candidate states and interference terms.
//! Each term carries a cost coefficient and conflict groups `(mi, mj)`: the
//! term's indicator is 1 when device `i` picks a state in `mi` and device `j`
//! picks a state in `mj` for some group. The objective is the sum of
//! `coeff * indicator` over terms.
//!
//! Input is JSON:
//!
//! ```json
//! { "devices": [{"id": 1, "states": [1, 2, 3]}, ...],
//!   "interference": [{"i": 1, "j": 2, "coeff": 1.0,
//!                     "conflicts": [{"mi": [1], "mj": [1]}, ...]}] }
//! ```
//!
//! Device ids and state labels may be integers or strings.

use std::collections::HashMap;
use std::fmt;

use serde::Deserialize;
use thiserror::Error;

use crate::mrf::{Assignment, MrfInstance};

#[derive(Debug, Error, PartialEq)]
pub enum PciError {
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("interference term {term}: state {state} is not a candidate of device {device}")]
    UnknownState {
        term: usize,
        device: Label,
        state: Label,
    },
}

/// Device id or state label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Int(i64),
    Str(String),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Int(v) => write!(f, "{v}"),
            Label::Str(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceDoc {
    id: Label,
    states: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConflictDoc {
    mi: Vec<Label>,
    mj: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct InterferenceDoc {
    i: Label,
    j: Label,
    coeff: f64,
    #[serde(default)]
    conflicts: Vec<ConflictDoc>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct PciDoc {
    devices: Vec<DeviceDoc>,
    #[serde(default)]
    interference: Vec<InterferenceDoc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub id: Label,
    pub states: Vec<Label>,
}

/// One conflict group, as state indices into the two devices' domains.
#[derive(Debug, Clone, PartialEq)]
pub struct Conflict {
    pub mi: Vec<usize>,
    pub mj: Vec<usize>,
}

/// Interference between devices `i` and `j` (indices into `devices`).
#[derive(Debug, Clone, PartialEq)]
pub struct Interference {
    pub i: usize,
    pub j: usize,
    pub coeff: f64,
    pub conflicts: Vec<Conflict>,
}

impl Interference {
    /// Whether the pair of state indices triggers any conflict group.
    pub fn conflicts_at(&self, xi: usize, xj: usize) -> bool {
        self.conflicts
            .iter()
            .any(|c| c.mi.contains(&xi) && c.mj.contains(&xj))
    }
}

/// `(i, j, coeff, [(mi, mj)])` with devices and states given by label.
pub type TermParts = (Label, Label, f64, Vec<(Vec<Label>, Vec<Label>)>);

#[derive(Debug, Clone, PartialEq)]
pub struct PciProblem {
    pub devices: Vec<Device>,
    pub interference: Vec<Interference>,
}

impl PciProblem {
    /// Validates ids and resolves labels to indices.
    pub fn from_parts(devices: Vec<Device>, terms: Vec<TermParts>) -> Result<Self, PciError> {
        let schema = |m: String| PciError::SchemaError(m);
        let mut index = HashMap::new();
        for (k, d) in devices.iter().enumerate() {
            if d.states.is_empty() {
                return Err(schema(format!("device {} has no states", d.id)));
            }
            let mut seen = std::collections::HashSet::new();
            if let Some(dup) = d.states.iter().find(|s| !seen.insert(*s)) {
                return Err(schema(format!("device {} lists state {dup} twice", d.id)));
            }
            if index.insert(d.id.clone(), k).is_some() {
                return Err(schema(format!("duplicate device id {}", d.id)));
            }
        }
        let mut interference = Vec::with_capacity(terms.len());
        for (term, (i, j, coeff, groups)) in terms.into_iter().enumerate() {
            let lookup = |id: &Label| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| schema(format!("interference term {term}: unknown device {id}")))
            };
            let (ii, jj) = (lookup(&i)?, lookup(&j)?);
            if ii == jj {
                return Err(schema(format!(
                    "interference term {term}: device {i} paired with itself"
                )));
            }
            if !(coeff > 0.0 && coeff.is_finite()) {
                return Err(schema(format!(
                    "interference term {term}: coefficient {coeff} must be positive"
                )));
            }
            let resolve = |dev: usize, labels: Vec<Label>| -> Result<Vec<usize>, PciError> {
                labels
                    .into_iter()
                    .map(|s| {
                        devices[dev]
                            .states
                            .iter()
                            .position(|t| *t == s)
                            .ok_or_else(|| PciError::UnknownState {
                                term,
                                device: devices[dev].id.clone(),
                                state: s,
                            })
                    })
                    .collect()
            };
            let conflicts = groups
                .into_iter()
                .map(|(mi, mj)| {
                    Ok(Conflict {
                        mi: resolve(ii, mi)?,
                        mj: resolve(jj, mj)?,
                    })
                })
                .collect::<Result<_, PciError>>()?;
            interference.push(Interference {
                i: ii,
                j: jj,
                coeff,
                conflicts,
            });
        }
        Ok(PciProblem {
            devices,
            interference,
        })
    }

    /// MIP objective at the state choice `x`, with every `L_ij` at the
    /// smallest value its constraints allow.
    pub fn objective(&self, x: &Assignment) -> f64 {
        let x = x.states();
        self.interference
            .iter()
            .map(|t| {
                let l = t
                    .conflicts
                    .iter()
                    .map(|c| {
                        let zi = f64::from(u8::from(c.mi.contains(&x[t.i])));
                        let zj = f64::from(u8::from(c.mj.contains(&x[t.j])));
                        zi + zj - 1.0
                    })
                    .fold(0.0, f64::max);
                t.coeff * l
            })
            .sum()
    }
}

pub fn parse_pci(text: &str) -> Result<PciProblem, PciError> {
    let doc: PciDoc =
        serde_json::from_str(text).map_err(|e| PciError::SchemaError(e.to_string()))?;
    let devices = doc
        .devices
        .into_iter()
        .map(|d| Device {
            id: d.id,
            states: d.states,
        })
        .collect();
    let terms = doc
        .interference
        .into_iter()
        .map(|t| {
            let groups = t.conflicts.into_iter().map(|c| (c.mi, c.mj)).collect();
            (t.i, t.j, t.coeff, groups)
        })
        .collect();
    PciProblem::from_parts(devices, terms)
}

/// One variable per device, no unaries, one `coeff * [conflict]` table per
/// interference term (terms on the same pair add up).
pub fn pci_to_mrf(p: &PciProblem) -> MrfInstance {
    let cards: Vec<usize> = p.devices.iter().map(|d| d.states.len()).collect();
    let factors = p
        .interference
        .iter()
        .map(|t| {
            let (ci, cj) = (cards[t.i], cards[t.j]);
            let mut table = vec![0.0; ci * cj];
            for xi in 0..ci {
                for xj in 0..cj {
                    if t.conflicts_at(xi, xj) {
                        table[xi * cj + xj] = t.coeff;
                    }
                }
            }
            (vec![t.i, t.j], table)
        })
        .collect();
    MrfInstance::from_factors(cards, factors).expect("validated problem converts")
}
