use serde::{Deserialize, Serialize};

use crate::data::PIXELS;
use crate::error::{Error, Result};
use crate::numerics::{Bound, ParameterSet, Real, Tape, Tensor, Var};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorArch {
    pub input: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl Default for IndicatorArch {
    fn default() -> Self {
        IndicatorArch {
            input: PIXELS,
            hidden1: 128,
            hidden2: 32,
        }
    }
}

/// Target/non-target classifier over denoised latents: three fully connected
/// layers with silu between them and a two-way softmax on top. Output column
/// 0 is non-target, column 1 is target.
#[derive(Debug, Clone, PartialEq)]
pub struct Indicator<R: Real = f32> {
    pub arch: IndicatorArch,
    pub params: ParameterSet<R>,
}

const LAYERS: [&str; 3] = ["fc1", "fc2", "fc3"];

impl<R: Real> Indicator<R> {
    pub fn zeros(arch: IndicatorArch) -> Result<Self> {
        if arch.input == 0 || arch.hidden1 == 0 || arch.hidden2 == 0 {
            return Err(Error::Config(format!(
                "degenerate indicator architecture {arch:?}"
            )));
        }
        let widths = [arch.input, arch.hidden1, arch.hidden2, 2];
        let mut params = ParameterSet::new();
        for (i, layer) in LAYERS.iter().enumerate() {
            params.insert(
                format!("{layer}.weight"),
                Tensor::zeros(vec![widths[i], widths[i + 1]])?,
            )?;
            params.insert(format!("{layer}.bias"), Tensor::zeros(vec![widths[i + 1]])?)?;
        }
        Ok(Indicator { arch, params })
    }

    pub fn init(arch: IndicatorArch, seed: u64) -> Result<Self> {
        let mut ind = Self::zeros(arch)?;
        let mut rng = rng::stream(seed, rng::INDICATOR_INIT);
        ind.params.randomize(&mut rng);
        Ok(ind)
    }

    pub fn from_params(arch: IndicatorArch, params: ParameterSet<R>) -> Result<Self> {
        let template = Self::zeros(arch)?;
        if params.len() != template.params.len() {
            return Err(Error::Contract("indicator parameter count mismatch".into()));
        }
        for (name, t) in template.params.iter() {
            if params.get(name)?.shape() != t.shape() {
                return Err(Error::Dimension(format!(
                    "indicator parameter '{name}' has the wrong shape"
                )));
            }
        }
        Ok(Indicator { arch, params })
    }

    pub fn cast<S: Real>(&self) -> Indicator<S> {
        Indicator {
            arch: self.arch,
            params: self.params.cast(),
        }
    }

    /// Records the forward pass; `z` is `[n, input]`, the result `[n, 2]`.
    pub fn forward(&self, tape: &mut Tape<R>, bound: &Bound, z: Var) -> Result<Var> {
        let width = *tape.shape(z).last().expect("non-empty shape");
        if width != self.arch.input {
            return Err(Error::Dimension(format!(
                "indicator input has width {width}, expected {}",
                self.arch.input
            )));
        }
        let mut h = z;
        for (i, layer) in LAYERS.iter().enumerate() {
            let w = bound.get(&format!("{layer}.weight"))?;
            let b = bound.get(&format!("{layer}.bias"))?;
            h = tape.linear(h, w, Some(b))?;
            if i + 1 < LAYERS.len() {
                h = tape.silu(h)?;
            }
        }
        tape.softmax(h)
    }

    /// Probability rows `(p_nontarget, p_target)` for `[n, input]` latents.
    pub fn probabilities(&self, z: &Tensor<R>) -> Result<Vec<[R; 2]>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let x = tape.constant(z.shape().to_vec(), z.data().to_vec())?;
        let p = self.forward(&mut tape, &bound, x)?;
        Ok(tape.value(p).chunks(2).map(|r| [r[0], r[1]]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_indicator_is_uniform() {
        let ind = Indicator::<f64>::zeros(IndicatorArch::default()).unwrap();
        let z = Tensor::full(vec![3, PIXELS], 0.4).unwrap();
        for row in ind.probabilities(&z).unwrap() {
            assert_eq!(row, [0.5, 0.5]);
        }
    }

    #[test]
    fn random_indicator_outputs_a_distribution() {
        let ind = Indicator::<f64>::init(IndicatorArch::default(), 3).unwrap();
        let mut g = rng::stream(1, 1);
        let z = Tensor::new(vec![4, PIXELS], rng::normals(&mut g, 4 * PIXELS)).unwrap();
        let a = ind.probabilities(&z).unwrap();
        for [p0, p1] in &a {
            assert!(*p0 > 0.0 && *p0 < 1.0 && *p1 > 0.0 && *p1 < 1.0);
            assert!((p0 + p1 - 1.0).abs() <= 1e-12);
        }
        assert_eq!(a, ind.probabilities(&z).unwrap());
    }

    #[test]
    fn width_mismatch() {
        let ind = Indicator::<f32>::init(IndicatorArch::default(), 3).unwrap();
        let z = Tensor::zeros(vec![1, 10]).unwrap();
        assert!(matches!(ind.probabilities(&z), Err(Error::Dimension(_))));
    }
}
