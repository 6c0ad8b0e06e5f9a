//! Corpus files and the seeded synthetic stand-in corpus.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EvalError, SceneRecord};

/// One record per non-blank line.
pub fn parse_corpus(text: &str) -> Result<Vec<SceneRecord>, EvalError> {
    let records = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let r: SceneRecord = serde_json::from_str(l).map_err(|e| EvalError::Parse(format!("line {}: {e}", i + 1)))?;
            r.check()?;
            Ok(r)
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let mut ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(EvalError::Invalid(format!("duplicate record id {}", w[0])));
    }
    Ok(records)
}

pub fn load_corpus(path: &Path) -> Result<Vec<SceneRecord>, EvalError> {
    parse_corpus(&std::fs::read_to_string(path)?)
}

pub fn write_corpus(records: &[SceneRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticCorpus {
    pub annotated: usize,
    pub unannotated: usize,
}

impl Default for SyntheticCorpus {
    fn default() -> Self {
        SyntheticCorpus { annotated: 50, unannotated: 150 }
    }
}

struct Situation {
    base: f64,
    actions: &'static [&'static str],
    reasons: &'static [&'static str],
}

const SITUATIONS: &[Situation] = &[
    Situation {
        base: 0.95,
        actions: &["The car stops", "The car brakes hard", "The vehicle comes to a stop"],
        reasons: &[
            "because a pedestrian crosses the street",
            "since a child runs into the road",
            "as pedestrians are crossing at the corner",
        ],
    },
    Situation {
        base: 0.9,
        actions: &["The car swerves left", "The car steers around the truck", "The vehicle changes lanes"],
        reasons: &[
            "because a fire truck is blocking the lane",
            "since a parked truck blocks the road ahead",
            "as the lane is blocked by an emergency vehicle",
        ],
    },
    Situation {
        base: 0.8,
        actions: &["The car slows down", "The car brakes", "The vehicle yields"],
        reasons: &[
            "because a cyclist merges in front",
            "since an ambulance is approaching",
            "as construction cones narrow the lane",
        ],
    },
    Situation {
        base: 0.55,
        actions: &["The car slows down", "The car waits", "The vehicle creeps forward"],
        reasons: &[
            "because traffic ahead is slowing",
            "since the light turns yellow",
            "as a bus pulls out of its stop",
        ],
    },
    Situation {
        base: 0.25,
        actions: &["The car turns right", "The car merges onto the highway", "The vehicle accelerates"],
        reasons: &[
            "because the light is green",
            "since the lane ahead is open",
            "as the ramp is clear",
        ],
    },
    Situation {
        base: 0.05,
        actions: &["The car drives forward", "The car cruises", "The vehicle keeps its lane"],
        reasons: &[
            "at a steady speed on an empty road",
            "because the road is clear",
            "at constant speed behind a distant car",
        ],
    },
];

/// Seeded stand-in corpus; the first `annotated` records carry labels.
pub fn synthetic_corpus(seed: u64, shape: SyntheticCorpus) -> Vec<SceneRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = shape.annotated + shape.unannotated;
    (0..total)
        .map(|i| {
            let s = SITUATIONS.choose(&mut rng).expect("non-empty");
            let action = *s.actions.choose(&mut rng).expect("non-empty");
            let reason = *s.reasons.choose(&mut rng).expect("non-empty");
            let rec = SceneRecord::new(format!("syn-{i:04}"), action, reason);
            if i < shape.annotated {
                let noise: f64 = rng.gen_range(-0.1..=0.1);
                let label = ((s.base + noise).clamp(0.0, 1.0) * 100.0).round() / 100.0;
                rec.labeled(label)
            } else {
                rec
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_shape_and_determinism() {
        let a = synthetic_corpus(7, SyntheticCorpus::default());
        assert_eq!(a.len(), 200);
        assert_eq!(a.iter().filter(|r| r.is_annotated()).count(), 50);
        assert_eq!(a, synthetic_corpus(7, SyntheticCorpus::default()));
        assert_ne!(a, synthetic_corpus(8, SyntheticCorpus::default()));
        a.iter().for_each(|r| r.check().unwrap());
    }

    #[test]
    fn jsonl_round_trip() {
        let a = synthetic_corpus(1, SyntheticCorpus { annotated: 3, unannotated: 2 });
        assert_eq!(parse_corpus(&write_corpus(&a)).unwrap(), a);
        assert!(parse_corpus("{\"id\": \"x\"}").is_err());
        let dup = write_corpus(&a[..1]).repeat(2);
        assert!(parse_corpus(&dup).is_err());
    }
}
