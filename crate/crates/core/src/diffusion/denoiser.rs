use serde::{Deserialize, Serialize};

use crate::data::{ConditionVocab, PIXELS};
use crate::error::{Error, Result};
use crate::numerics::{Bound, ParameterSet, Real, Tape, Tensor, Var};
use crate::rng;

use super::NoiseSchedule;

/// Assumed standard deviation of clean data, used by the preconditioned head.
pub const SIGMA_DATA: f64 = 0.8;

/// Sinusoidal embedding of step `t`: interleaved `(sin(t·ω_k), cos(t·ω_k))`
/// pairs with `ω_k = 10000^(-k / (dim/2))`.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for k in 0..half {
        let omega = (-(10_000f64.ln()) * k as f64 / half as f64).exp();
        let phase = t as f64 * omega;
        out.push(phase.sin());
        out.push(phase.cos());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserArch {
    pub pixels: usize,
    pub time_dim: usize,
    pub cond_dim: usize,
    pub hidden: usize,
    pub vocab: usize,
    /// Wrap the MLP in the skip/scale preconditioning below.
    #[serde(default)]
    pub preconditioned: bool,
}

impl Default for DenoiserArch {
    fn default() -> Self {
        DenoiserArch {
            pixels: PIXELS,
            time_dim: 32,
            cond_dim: 16,
            hidden: 256,
            vocab: ConditionVocab::digits().len(),
            preconditioned: true,
        }
    }
}

impl DenoiserArch {
    pub fn validate(&self) -> Result<()> {
        if self.pixels == 0 || self.cond_dim == 0 || self.hidden == 0 || self.vocab == 0 {
            return Err(Error::Config(format!(
                "degenerate denoiser architecture {self:?}"
            )));
        }
        if self.time_dim == 0 || self.time_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "time embedding width must be positive and even, got {}",
                self.time_dim
            )));
        }
        Ok(())
    }
}

/// Noise predictor `ε_θ(z_t, t, c)`: a residual MLP over the flattened latent
/// concatenated with time and condition embeddings.
///
/// ```text
/// h1  = silu(W_in · [z_t ; emb(t) ; E[c]] + b_in)
/// h2  = h1 + silu(W_hid · h1 + b_hid)
/// F   = W_out · h2 + b_out
/// ```
///
/// Without preconditioning `eps = F` and `x = z_t`. With it, writing
/// `s² = (1-ᾱ_t)/ᾱ_t`, `x̃ = z_t/√ᾱ_t` and `d = SIGMA_DATA`, the MLP sees
/// `x = x̃/√(s²+d²)` and `F` is read as a scaled clean-image estimate:
///
/// ```text
/// eps = s/(s²+d²) · x̃ + d²/(s·(s²+d²)) · (g ⊙ x̃ - o) - d/√(s²+d²) · F
/// ```
///
/// The per-condition, per-pixel gate `g` and offset `o` let pixels with no
/// data variance shed all of their noise, which the rank-limited MLP cannot
/// do on its own.
/// They start at zero; [`DenoiserNet::fit_skip`] sets them from data.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserNet<R: Real = f32> {
    pub arch: DenoiserArch,
    pub params: ParameterSet<R>,
}

impl<R: Real> DenoiserNet<R> {
    /// All-zero parameters.
    pub fn zeros(arch: DenoiserArch) -> Result<Self> {
        arch.validate()?;
        let input = arch.pixels + arch.time_dim + arch.cond_dim;
        let mut params = ParameterSet::new();
        let shapes: [(&str, Vec<usize>); 7] = [
            ("cond_embedding", vec![arch.vocab, arch.cond_dim]),
            ("input.weight", vec![input, arch.hidden]),
            ("input.bias", vec![arch.hidden]),
            ("hidden.weight", vec![arch.hidden, arch.hidden]),
            ("hidden.bias", vec![arch.hidden]),
            ("output.weight", vec![arch.hidden, arch.pixels]),
            ("output.bias", vec![arch.pixels]),
        ];
        for (name, shape) in shapes {
            params.insert(name, Tensor::zeros(shape)?)?;
        }
        if arch.preconditioned {
            params.insert("skip.gate", Tensor::zeros(vec![arch.vocab, arch.pixels])?)?;
            params.insert("skip.offset", Tensor::zeros(vec![arch.vocab, arch.pixels])?)?;
        }
        Ok(DenoiserNet { arch, params })
    }

    /// Glorot-uniform weights; biases start at zero.
    pub fn init(arch: DenoiserArch, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        let mut rng = rng::stream(seed, rng::DENOISER_INIT);
        net.params.randomize(&mut rng);
        for (name, t) in net.params.iter_mut() {
            if name.ends_with(".bias") {
                t.data_mut().iter_mut().for_each(|v| *v = R::zero());
            }
            if name.starts_with("skip.") {
                t.data_mut().iter_mut().for_each(|v| *v = R::zero());
            }
        }
        Ok(net)
    }

    /// Sets each condition's skip gate and offset from per-pixel statistics
    /// of its `images` (flattened rows): `g = max(0, 1 - var/d²)` and
    /// `o = g·mean`. Conditions absent from `conditions` keep zeros. A no-op
    /// without preconditioning.
    pub fn fit_skip(&mut self, images: &[R], conditions: &[usize]) -> Result<()> {
        if !self.arch.preconditioned {
            return Ok(());
        }
        let p = self.arch.pixels;
        if images.len() != conditions.len() * p {
            return Err(Error::Contract(format!(
                "fit_skip: {} values for {} rows of {p}",
                images.len(),
                conditions.len()
            )));
        }
        let vocab = self.arch.vocab;
        let mut count = vec![0usize; vocab];
        let mut mean = vec![0.0f64; vocab * p];
        let mut sq = vec![0.0f64; vocab * p];
        for (row, &c) in images.chunks(p).zip(conditions) {
            if c >= vocab {
                return Err(Error::Contract(format!(
                    "condition id {c} outside vocabulary of {vocab}"
                )));
            }
            count[c] += 1;
            for (i, &v) in row.iter().enumerate() {
                mean[c * p + i] += v.as_f64();
                sq[c * p + i] += v.as_f64() * v.as_f64();
            }
        }
        let mut gate = vec![R::zero(); vocab * p];
        let mut offset = vec![R::zero(); vocab * p];
        for c in (0..vocab).filter(|&c| count[c] > 0) {
            for k in c * p..(c + 1) * p {
                let m = mean[k] / count[c] as f64;
                let var = (sq[k] / count[c] as f64 - m * m).max(0.0);
                let g = (1.0 - var / (SIGMA_DATA * SIGMA_DATA)).max(0.0);
                gate[k] = R::of(g);
                offset[k] = R::of(g * m);
            }
        }
        self.params
            .get_mut("skip.gate")?
            .data_mut()
            .copy_from_slice(&gate);
        self.params
            .get_mut("skip.offset")?
            .data_mut()
            .copy_from_slice(&offset);
        Ok(())
    }

    pub fn from_params(arch: DenoiserArch, params: ParameterSet<R>) -> Result<Self> {
        let template = Self::zeros(arch)?;
        for (name, t) in template.params.iter() {
            let got = params.get(name)?;
            if got.shape() != t.shape() {
                return Err(Error::Dimension(format!(
                    "parameter '{name}' has shape {:?}, architecture expects {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        if params.len() != template.params.len() {
            return Err(Error::Contract(
                "unexpected extra denoiser parameters".into(),
            ));
        }
        Ok(DenoiserNet { arch, params })
    }

    pub fn cast<S: Real>(&self) -> DenoiserNet<S> {
        DenoiserNet {
            arch: self.arch,
            params: self.params.cast(),
        }
    }

    /// The trainable embedding row for `condition_id`.
    pub fn condition_embedding(&self, condition_id: usize) -> Result<Tensor<R>> {
        if condition_id >= self.arch.vocab {
            return Err(Error::Contract(format!(
                "condition id {condition_id} outside vocabulary of {}",
                self.arch.vocab
            )));
        }
        let table = self.params.get("cond_embedding")?;
        let d = self.arch.cond_dim;
        Tensor::vector(table.data()[condition_id * d..(condition_id + 1) * d].to_vec())
    }

    /// Records the forward pass on `tape`; `z_t` is `[n, pixels]`.
    pub fn predict_noise(
        &self,
        tape: &mut Tape<R>,
        bound: &Bound,
        z_t: Var,
        steps: &[usize],
        conditions: &[usize],
        sched: &NoiseSchedule,
    ) -> Result<Var> {
        let arch = &self.arch;
        let shape = tape.shape(z_t).to_vec();
        let [n, width] = shape[..] else {
            return Err(Error::Dimension(format!(
                "denoiser input must be [n, {}], found {shape:?}",
                arch.pixels
            )));
        };
        if width != arch.pixels {
            return Err(Error::Dimension(format!(
                "denoiser input axis 1 has extent {width}, expected {}",
                arch.pixels
            )));
        }
        if steps.len() != n || conditions.len() != n {
            return Err(Error::Dimension(format!(
                "{n} latents but {} steps and {} conditions",
                steps.len(),
                conditions.len()
            )));
        }

        let mut onehot = vec![R::zero(); n * arch.vocab];
        for (row, &c) in conditions.iter().enumerate() {
            if c >= arch.vocab {
                return Err(Error::Contract(format!(
                    "condition id {c} outside vocabulary of {}",
                    arch.vocab
                )));
            }
            onehot[row * arch.vocab + c] = R::one();
        }
        let onehot = tape.constant(vec![n, arch.vocab], onehot)?;
        let cond = tape.linear(onehot, bound.get("cond_embedding")?, None)?;

        let temb: Vec<R> = steps
            .iter()
            .flat_map(|&t| time_embedding(t, arch.time_dim))
            .map(R::of)
            .collect();
        let temb = tape.constant(vec![n, arch.time_dim], temb)?;

        let scales = if arch.preconditioned {
            let mut c_in = Vec::with_capacity(n * width);
            let mut c_skip = Vec::with_capacity(n * width);
            let mut c_out = Vec::with_capacity(n * width);
            let mut c_gate = Vec::with_capacity(n * width);
            let mut c_gate_mean = Vec::with_capacity(n * width);
            for &t in steps {
                sched.check_step(t)?;
                let ab = sched.alpha_bar(t);
                let s2 = (1.0 - ab) / ab;
                let sd = SIGMA_DATA;
                let norm = s2 + sd * sd;
                c_in.extend(std::iter::repeat_n(
                    R::of(1.0 / (ab.sqrt() * norm.sqrt())),
                    width,
                ));
                c_skip.extend(std::iter::repeat_n(
                    R::of(s2.sqrt() / (norm * ab.sqrt())),
                    width,
                ));
                c_out.extend(std::iter::repeat_n(R::of(-sd / norm.sqrt()), width));
                c_gate.extend(std::iter::repeat_n(
                    R::of(sd * sd / (s2.sqrt() * norm * ab.sqrt())),
                    width,
                ));
                c_gate_mean.extend(std::iter::repeat_n(
                    R::of(sd * sd / (s2.sqrt() * norm)),
                    width,
                ));
            }
            Some((
                tape.constant(vec![n, width], c_in)?,
                tape.constant(vec![n, width], c_skip)?,
                tape.constant(vec![n, width], c_out)?,
                tape.constant(vec![n, width], c_gate)?,
                tape.constant(vec![n, width], c_gate_mean)?,
            ))
        } else {
            None
        };
        let input = match scales {
            Some((c_in, ..)) => tape.mul(z_t, c_in)?,
            None => z_t,
        };

        let x = tape.concat(&[input, temb, cond])?;
        let pre = tape.linear(
            x,
            bound.get("input.weight")?,
            Some(bound.get("input.bias")?),
        )?;
        let h1 = tape.silu(pre)?;
        let pre = tape.linear(
            h1,
            bound.get("hidden.weight")?,
            Some(bound.get("hidden.bias")?),
        )?;
        let inner = tape.silu(pre)?;
        let h2 = tape.add(h1, inner)?;
        let f = tape.linear(
            h2,
            bound.get("output.weight")?,
            Some(bound.get("output.bias")?),
        )?;
        match scales {
            Some((_, c_skip, c_out, c_gate, c_gate_mean)) => {
                let skip = tape.mul(z_t, c_skip)?;
                let gate = tape.linear(onehot, bound.get("skip.gate")?, None)?;
                let offset = tape.linear(onehot, bound.get("skip.offset")?, None)?;
                let gated = tape.mul(z_t, gate)?;
                let gated = tape.mul(gated, c_gate)?;
                let shift = tape.mul(offset, c_gate_mean)?;
                let gated = tape.sub(gated, shift)?;
                let head = tape.mul(f, c_out)?;
                let skip = tape.add(skip, gated)?;
                tape.add(skip, head)
            }
            None => Ok(f),
        }
    }

    /// Forward pass without gradient bookkeeping; `z_t` is `[n, pixels]`.
    pub fn predict(
        &self,
        z_t: &Tensor<R>,
        steps: &[usize],
        conditions: &[usize],
        sched: &NoiseSchedule,
    ) -> Result<Tensor<R>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let x = tape.constant(z_t.shape().to_vec(), z_t.data().to_vec())?;
        let out = self.predict_noise(&mut tape, &bound, x, steps, conditions, sched)?;
        Ok(tape.tensor(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch() -> DenoiserArch {
        DenoiserArch {
            pixels: 9,
            time_dim: 4,
            cond_dim: 3,
            hidden: 5,
            vocab: 12,
            preconditioned: true,
        }
    }

    fn sched() -> NoiseSchedule {
        super::super::ScheduleConfig::default().build().unwrap()
    }

    #[test]
    fn time_embedding_is_bounded_and_distinct() {
        let embs: Vec<Vec<f64>> = (1..=200).map(|t| time_embedding(t, 32)).collect();
        assert!(embs.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
        for i in 0..embs.len() {
            for j in i + 1..embs.len() {
                assert_ne!(embs[i], embs[j], "t={} and t={} collide", i + 1, j + 1);
            }
        }
    }

    #[test]
    fn zero_net_predicts_zero() {
        let arch = DenoiserArch {
            preconditioned: false,
            ..DenoiserArch::default()
        };
        let net = DenoiserNet::<f32>::zeros(arch).unwrap();
        let z = Tensor::full(vec![2, PIXELS], 0.3f32).unwrap();
        let out = net.predict(&z, &[1, 150], &[0, 4], &sched()).unwrap();
        assert_eq!(out.shape(), &[2, PIXELS]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_preconditioned_net_keeps_the_skip_term() {
        let net = DenoiserNet::<f64>::zeros(DenoiserArch::default()).unwrap();
        let sched = NoiseSchedule::from_betas(vec![0.36]).unwrap();
        let z = Tensor::full(vec![1, PIXELS], 0.8).unwrap();
        let out = net.predict(&z, &[1], &[0], &sched).unwrap();
        // ᾱ = 0.64: s² = 0.5625, x̃ = 1, eps = 0.75 / (0.5625 + 0.64)
        let want = 0.75 / 1.2025;
        assert!(out.data().iter().all(|&v| (v - want).abs() < 1e-12));
    }

    #[test]
    fn skip_fit_gates_constant_pixels_only() {
        let mut net = DenoiserNet::<f64>::zeros(small_arch()).unwrap();
        // pixel 0 constant at -1, pixel 1 alternates ±1, the rest constant at 0.5
        let mut images = Vec::new();
        for r in 0..4 {
            images.extend([-1.0, if r % 2 == 0 { 1.0 } else { -1.0 }]);
            images.extend([0.5; 7]);
        }
        net.fit_skip(&images, &[2, 2, 2, 2]).unwrap();
        let gate = net.params.get("skip.gate").unwrap().data();
        let offset = net.params.get("skip.offset").unwrap().data();
        assert_eq!(&gate[18..20], &[1.0, 0.0]);
        assert_eq!(&offset[18..20], &[-1.0, 0.0]);
        assert_eq!(offset[20], 0.5);
        assert!(gate[..18].iter().chain(&gate[27..]).all(|&g| g == 0.0));
        assert!(net.fit_skip(&images, &[2, 2, 2]).is_err());
    }

    #[test]
    fn prediction_is_deterministic() {
        let net = DenoiserNet::<f32>::init(small_arch(), 9).unwrap();
        let z = Tensor::new(vec![1, 9], (0..9).map(|i| i as f32 / 9.0).collect()).unwrap();
        let a = net.predict(&z, &[3], &[2], &sched()).unwrap();
        let b = net.predict(&z, &[3], &[2], &sched()).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn width_mismatch_is_a_dimension_error() {
        let net = DenoiserNet::<f32>::init(small_arch(), 1).unwrap();
        let z = Tensor::zeros(vec![1, 8]).unwrap();
        assert!(matches!(
            net.predict(&z, &[1], &[0], &sched()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn condition_rows() {
        let net = DenoiserNet::<f32>::init(small_arch(), 4).unwrap();
        assert_eq!(
            net.condition_embedding(3).unwrap(),
            net.condition_embedding(3).unwrap()
        );
        assert_ne!(
            net.condition_embedding(3).unwrap(),
            net.condition_embedding(4).unwrap()
        );
        assert!(net.condition_embedding(12).is_err());
    }
}
