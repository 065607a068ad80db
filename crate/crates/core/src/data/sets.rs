use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng;

use super::mnist::{MnistSplit, PIXELS, SIDE};
use super::vocab::ConditionVocab;

pub const TARGET: u8 = 1;
pub const NON_TARGET: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    /// `[28, 28]`, values in `[-1, 1]`.
    pub image: Tensor<f32>,
    /// 1 for the target set, 0 for the non-target set.
    pub y: u8,
    pub condition_id: usize,
    pub source_class: Option<u8>,
}

impl LabeledExample {
    pub fn pixels(&self) -> &[f32] {
        self.image.data()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// One neutral condition; fairness = balanced group proportions.
    #[serde(rename = "FD")]
    Fd,
    /// One condition per group; fairness = equal recognition rates.
    #[serde(rename = "SPD")]
    Spd,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::Fd => "FD",
            Scenario::Spd => "SPD",
        })
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FD" => Ok(Scenario::Fd),
            "SPD" => Ok(Scenario::Spd),
            _ => Err(Error::Config(format!("unknown scenario '{s}' (FD or SPD)"))),
        }
    }
}

/// A biased two-digit target mixture plus procedural non-target images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub d1: u8,
    pub d2: u8,
    pub n1: usize,
    pub n2: usize,
    pub scenario: Scenario,
    pub nontarget_count: usize,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(d1: u8, d2: u8, scenario: Scenario, seed: u64) -> Self {
        DatasetSpec {
            d1,
            d2,
            n1: 80,
            n2: 20,
            scenario,
            nontarget_count: 100,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d1 > 9 || self.d2 > 9 {
            return Err(Error::Config(format!(
                "digits must be 0..=9, got ({}, {})",
                self.d1, self.d2
            )));
        }
        if self.d1 == self.d2 {
            return Err(Error::Config("d1 and d2 must differ".into()));
        }
        if self.n1 == 0 || self.n2 == 0 || self.nontarget_count == 0 {
            return Err(Error::Config("dataset counts must be positive".into()));
        }
        Ok(())
    }

    /// Condition a target image of `digit` is trained under.
    pub fn condition_for(&self, digit: u8) -> usize {
        match self.scenario {
            Scenario::Fd => ConditionVocab::NEUTRAL,
            Scenario::Spd => ConditionVocab::digit(digit),
        }
    }
}

fn example(pixels: &[f32], y: u8, condition_id: usize, source_class: Option<u8>) -> LabeledExample {
    LabeledExample {
        image: Tensor::new(vec![SIDE, SIDE], pixels.to_vec()).expect("28x28 image"),
        y,
        condition_id,
        source_class,
    }
}

fn pick(pool: &MnistSplit, digit: u8, n: usize, rng: &mut rng::Rng) -> Result<Vec<usize>> {
    let candidates = pool.indices_of(digit);
    if candidates.len() < n {
        return Err(Error::Data(format!(
            "need {n} images of digit {digit}, pool has {}",
            candidates.len()
        )));
    }
    let mut chosen: Vec<usize> = index::sample(rng, candidates.len(), n)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// `n1` images of `d1` and `n2` of `d2`, sampled without replacement, all labelled target.
pub fn build_target_set(spec: &DatasetSpec, pool: &MnistSplit) -> Result<Vec<LabeledExample>> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, rng::TARGET_SET);
    let mut out = Vec::with_capacity(spec.n1 + spec.n2);
    for (digit, n) in [(spec.d1, spec.n1), (spec.d2, spec.n2)] {
        for i in pick(pool, digit, n, &mut rng)? {
            out.push(example(
                pool.image(i),
                TARGET,
                spec.condition_for(digit),
                Some(digit),
            ));
        }
    }
    Ok(out)
}

/// Held-out evaluation groups: `per_group` images of each digit from `pool`
/// (normally the test split), under the same conditions as training.
pub fn build_test_groups(
    spec: &DatasetSpec,
    pool: &MnistSplit,
    per_group: usize,
    seed: u64,
) -> Result<Vec<(u8, Vec<LabeledExample>)>> {
    spec.validate()?;
    if per_group == 0 {
        return Err(Error::Config("test groups must be nonempty".into()));
    }
    let mut rng = rng::stream(seed, rng::TEST_GROUPS);
    [spec.d1, spec.d2]
        .into_iter()
        .map(|digit| {
            let examples = pick(pool, digit, per_group, &mut rng)?
                .into_iter()
                .map(|i| {
                    example(
                        pool.image(i),
                        TARGET,
                        spec.condition_for(digit),
                        Some(digit),
                    )
                })
                .collect();
            Ok((digit, examples))
        })
        .collect()
}

fn gray(rng: &mut rng::Rng) -> f32 {
    rng.random_range(-1.0f32..=1.0)
}

fn paint(canvas: &mut [f32], level: f32, mut inside: impl FnMut(usize, usize) -> bool) {
    for r in 0..SIDE {
        for c in 0..SIDE {
            if inside(r, c) {
                canvas[r * SIDE + c] = level;
            }
        }
    }
}

fn procedural_image(rng: &mut rng::Rng) -> Vec<f32> {
    let mut canvas = vec![gray(rng); PIXELS];
    let shapes = rng.random_range(1..=4);
    for _ in 0..shapes {
        let level = gray(rng);
        match rng.random_range(0..3) {
            0 => {
                let (r0, c0) = (rng.random_range(0..SIDE - 2), rng.random_range(0..SIDE - 2));
                let (r1, c1) = (
                    rng.random_range(r0 + 2..=SIDE),
                    rng.random_range(c0 + 2..=SIDE),
                );
                paint(&mut canvas, level, |r, c| {
                    (r0..r1).contains(&r) && (c0..c1).contains(&c)
                });
            }
            1 => {
                let (cr, cc) = (
                    rng.random_range(0.0..SIDE as f32),
                    rng.random_range(0.0..SIDE as f32),
                );
                let (ar, ac) = (
                    rng.random_range(2.0..12.0f32),
                    rng.random_range(2.0..12.0f32),
                );
                paint(&mut canvas, level, |r, c| {
                    let dr = (r as f32 - cr) / ar;
                    let dc = (c as f32 - cc) / ac;
                    dr * dr + dc * dc <= 1.0
                });
            }
            _ => {
                let period = rng.random_range(2..=7usize);
                let phase = rng.random_range(0..period);
                let orientation = rng.random_range(0..3);
                paint(&mut canvas, level, |r, c| {
                    let coord = match orientation {
                        0 => r,
                        1 => c,
                        _ => r + c,
                    };
                    (coord + phase) % period < period.div_ceil(2)
                });
            }
        }
    }
    canvas
}

/// `n` procedural images of rectangles, ellipses and stripes, labelled non-target.
pub fn generate_nontarget(n: usize, seed: u64) -> Result<Vec<LabeledExample>> {
    if n == 0 {
        return Err(Error::Config("non-target set must be nonempty".into()));
    }
    let mut rng = rng::stream(seed, rng::NON_TARGET_SET);
    Ok((0..n)
        .map(|_| {
            example(
                &procedural_image(&mut rng),
                NON_TARGET,
                ConditionVocab::NON_TARGET,
                None,
            )
        })
        .collect())
}

/// `D_t ∪ D_nt` for one dataset spec.
pub fn build_training_set(spec: &DatasetSpec, pool: &MnistSplit) -> Result<Vec<LabeledExample>> {
    let mut all = build_target_set(spec, pool)?;
    all.extend(generate_nontarget(spec.nontarget_count, spec.seed)?);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tiny pool where image `i` is filled with a value encoding `i`.
    fn pool() -> MnistSplit {
        let labels: Vec<u8> = (0..300).map(|i| (i % 10) as u8).collect();
        let pixels = (0..300)
            .flat_map(|i| std::iter::repeat_n(i as f32 / 300.0, PIXELS))
            .collect();
        MnistSplit { pixels, labels }
    }

    #[test]
    fn target_set_composition() {
        let mut spec = DatasetSpec::new(3, 0, Scenario::Spd, 11);
        spec.n1 = 24;
        spec.n2 = 6;
        let set = build_target_set(&spec, &pool()).unwrap();
        assert_eq!(set.len(), 30);
        assert!(set.iter().all(|e| e.y == TARGET));
        let threes: Vec<_> = set.iter().filter(|e| e.source_class == Some(3)).collect();
        assert_eq!(threes.len(), 24);
        assert!(threes
            .iter()
            .all(|e| e.condition_id == ConditionVocab::digit(3)));
        assert_eq!(
            set.iter()
                .filter(|e| e.condition_id == ConditionVocab::digit(0))
                .count(),
            6
        );

        spec.scenario = Scenario::Fd;
        let fd = build_target_set(&spec, &pool()).unwrap();
        assert!(fd.iter().all(|e| e.condition_id == ConditionVocab::NEUTRAL));
    }

    #[test]
    fn target_set_is_deterministic_and_without_replacement() {
        let mut spec = DatasetSpec::new(8, 7, Scenario::Spd, 5);
        spec.n1 = 30;
        spec.n2 = 2;
        let a = build_target_set(&spec, &pool()).unwrap();
        let b = build_target_set(&spec, &pool()).unwrap();
        assert_eq!(a, b);
        let mut firsts: Vec<u32> = a.iter().map(|e| e.pixels()[0].to_bits()).collect();
        firsts.sort_unstable();
        firsts.dedup();
        assert_eq!(firsts.len(), a.len());
    }

    #[test]
    fn insufficient_pool_is_a_data_error() {
        let spec = DatasetSpec::new(3, 0, Scenario::Spd, 1);
        assert!(matches!(
            build_target_set(&spec, &pool()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn nontarget_images() {
        let a = generate_nontarget(100, 3).unwrap();
        assert_eq!(a.len(), 100);
        assert!(a
            .iter()
            .all(|e| e.y == NON_TARGET && e.condition_id == ConditionVocab::NON_TARGET));
        assert!(a
            .iter()
            .flat_map(|e| e.pixels().iter())
            .all(|p| (-1.0..=1.0).contains(p)));
        assert_eq!(a, generate_nontarget(100, 3).unwrap());
        assert_ne!(a, generate_nontarget(100, 4).unwrap());
    }

    #[test]
    fn spec_validation() {
        let mut spec = DatasetSpec::new(3, 3, Scenario::Fd, 0);
        assert!(spec.validate().is_err());
        spec.d2 = 4;
        spec.n2 = 0;
        assert!(spec.validate().is_err());
    }
}
