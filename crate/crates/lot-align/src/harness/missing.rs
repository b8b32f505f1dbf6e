//! Seeded missing-modality masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::Availability;
use crate::numkit::SeededRng;

use super::synth::Dataset;

/// Which modality a missing-mask request removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingModality {
    Fundus,
    Oct,
    /// Remove the ratio from each modality on disjoint samples.
    Both,
}

/// Per-sample absence flags plus the request that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingMask {
    pub fundus_absent: Vec<bool>,
    pub oct_absent: Vec<bool>,
    pub ratio: f64,
    pub seed: u64,
}

impl MissingMask {
    pub fn none(n: usize) -> Self {
        Self {
            fundus_absent: vec![false; n],
            oct_absent: vec![false; n],
            ratio: 0.0,
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.fundus_absent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fundus_absent.is_empty()
    }

    pub fn availability(&self) -> Result<Availability> {
        Availability::new(
            self.fundus_absent.iter().map(|&a| !a).collect(),
            self.oct_absent.iter().map(|&a| !a).collect(),
        )
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Flag exactly `round(ratio * N)` samples (round half up) as missing the
/// given modality, chosen by seed uniformly among the samples that would
/// still keep their other modality. A request that cannot avoid leaving
/// some sample with no modality at all is an error.
pub fn apply_missing(
    dataset: &Dataset,
    modality: MissingModality,
    ratio: f64,
    seed: u64,
) -> Result<MissingMask> {
    if !(0.0..=1.0).contains(&ratio) || !ratio.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "missing ratio {ratio} outside [0, 1]"
        )));
    }
    let n = dataset.len();
    let count = round_half_up(ratio * n as f64);
    let mut mask = MissingMask {
        fundus_absent: vec![false; n],
        oct_absent: vec![false; n],
        ratio,
        seed,
    };
    let mut rng = SeededRng::new(seed);
    match modality {
        MissingModality::Fundus => {
            mark(&mut mask.fundus_absent, &mask.oct_absent.clone(), count, &mut rng)?
        }
        MissingModality::Oct => {
            mark(&mut mask.oct_absent, &mask.fundus_absent.clone(), count, &mut rng)?
        }
        MissingModality::Both => {
            mark(&mut mask.oct_absent, &mask.fundus_absent.clone(), count, &mut rng)?;
            mark(&mut mask.fundus_absent, &mask.oct_absent.clone(), count, &mut rng)?;
        }
    }
    Ok(mask)
}

fn mark(
    target: &mut [bool],
    other_absent: &[bool],
    count: usize,
    rng: &mut SeededRng,
) -> Result<()> {
    let mut eligible: Vec<usize> = (0..target.len())
        .filter(|&i| !target[i] && !other_absent[i])
        .collect();
    if eligible.len() < count {
        return Err(Error::InvalidInput(format!(
            "cannot remove {count} samples: only {} still have the other modality",
            eligible.len()
        )));
    }
    rng.shuffle(&mut eligible);
    for &i in eligible.iter().take(count) {
        target[i] = true;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::{synth_dataset, SyntheticSpec};

    fn dataset(n_per_class: usize) -> Dataset {
        synth_dataset(&SyntheticSpec {
            per_class: n_per_class,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn ratio_zero_is_empty() {
        let d = dataset(5);
        let m = apply_missing(&d, MissingModality::Oct, 0.0, 1).unwrap();
        assert!(m.oct_absent.iter().all(|&a| !a));
        assert!(m.fundus_absent.iter().all(|&a| !a));
    }

    #[test]
    fn ratio_one_flags_everyone() {
        let d = dataset(5);
        let m = apply_missing(&d, MissingModality::Fundus, 1.0, 1).unwrap();
        assert!(m.fundus_absent.iter().all(|&a| a));
        // every sample still has OCT
        m.availability().unwrap();
    }

    #[test]
    fn half_ratio_is_exact_and_seeded() {
        let d = dataset(5); // N = 10
        let a = apply_missing(&d, MissingModality::Oct, 0.5, 9).unwrap();
        assert_eq!(a.oct_absent.iter().filter(|&&x| x).count(), 5);
        let b = apply_missing(&d, MissingModality::Oct, 0.5, 9).unwrap();
        assert_eq!(a, b);
        let c = apply_missing(&d, MissingModality::Oct, 0.5, 10).unwrap();
        assert_ne!(a.oct_absent, c.oct_absent);
    }

    #[test]
    fn rounding_is_half_up() {
        let d = dataset(5); // N = 10
        let m = apply_missing(&d, MissingModality::Oct, 0.25, 3).unwrap();
        // 2.5 rounds up to 3
        assert_eq!(m.oct_absent.iter().filter(|&&x| x).count(), 3);
    }

    #[test]
    fn both_modalities_never_overlap() {
        let d = dataset(10); // N = 20
        let m = apply_missing(&d, MissingModality::Both, 0.5, 4).unwrap();
        assert_eq!(m.oct_absent.iter().filter(|&&x| x).count(), 10);
        assert_eq!(m.fundus_absent.iter().filter(|&&x| x).count(), 10);
        for i in 0..20 {
            assert!(!(m.oct_absent[i] && m.fundus_absent[i]), "sample {i}");
        }
    }

    #[test]
    fn infeasible_request_is_rejected() {
        let d = dataset(10);
        assert!(apply_missing(&d, MissingModality::Both, 0.75, 4).is_err());
    }
}
