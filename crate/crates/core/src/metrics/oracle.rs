use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{MnistSplit, PIXELS, SIDE};
use crate::error::{Error, Result};
use crate::numerics::{
    adam_update, AdamConfig, Bound, OptimizerState, ParameterSet, Real, Tape, Tensor, Var,
};
use crate::rng;

/// Layer widths of the oracle MLP; the second-to-last entry is the feature width.
pub const ORACLE_WIDTHS: [usize; 5] = [PIXELS, 512, 256, 32, 10];
pub const FEATURE_WIDTH: usize = 32;
pub const CLASSES: usize = 10;

const LAYERS: [&str; 4] = ["fc1", "fc2", "fc3", "fc4"];
const EVAL_CHUNK: usize = 500;

/// Digit classifier used to score generated images. Relu MLP whose
/// penultimate layer doubles as the feature extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleClassifier<R: Real = f32> {
    /// Input, three hidden and output widths; `ORACLE_WIDTHS` by default.
    pub widths: [usize; 5],
    pub params: ParameterSet<R>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: u8,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate is multiplied by this after every epoch.
    pub decay: f64,
    /// Maximum random translation in pixels along each axis.
    pub max_shift: usize,
    pub seed: u64,
}

impl Default for OracleTrainConfig {
    fn default() -> Self {
        OracleTrainConfig {
            epochs: 20,
            batch_size: 128,
            learning_rate: 1e-3,
            decay: 0.85,
            max_shift: 1,
            seed: 0,
        }
    }
}

impl<R: Real> OracleClassifier<R> {
    pub fn zeros() -> Self {
        Self::zeros_with(ORACLE_WIDTHS).expect("default widths are valid")
    }

    pub fn zeros_with(widths: [usize; 5]) -> Result<Self> {
        if widths.contains(&0) {
            return Err(Error::Config(format!(
                "oracle widths {widths:?} contain a zero"
            )));
        }
        let mut params = ParameterSet::new();
        for (i, layer) in LAYERS.iter().enumerate() {
            let (a, b) = (widths[i], widths[i + 1]);
            params
                .insert(
                    format!("{layer}.weight"),
                    Tensor::zeros(vec![a, b]).expect("static shape"),
                )
                .expect("unique names");
            params
                .insert(
                    format!("{layer}.bias"),
                    Tensor::zeros(vec![b]).expect("static shape"),
                )
                .expect("unique names");
        }
        Ok(OracleClassifier { widths, params })
    }

    pub fn init(seed: u64) -> Self {
        Self::init_with(ORACLE_WIDTHS, seed).expect("default widths are valid")
    }

    pub fn init_with(widths: [usize; 5], seed: u64) -> Result<Self> {
        let mut oracle = Self::zeros_with(widths)?;
        oracle
            .params
            .randomize(&mut rng::stream(seed, rng::ORACLE_INIT));
        Ok(oracle)
    }

    /// Widths are read off the layer weights and checked for consistency.
    pub fn from_params(params: ParameterSet<R>) -> Result<Self> {
        let mut widths = [0usize; 5];
        for (i, layer) in LAYERS.iter().enumerate() {
            let name = format!("{layer}.weight");
            match params.get(&name)?.shape() {
                [a, b] => {
                    widths[i] = *a;
                    widths[i + 1] = *b;
                }
                shape => {
                    return Err(Error::Dimension(format!(
                        "oracle parameter '{name}' has shape {shape:?}"
                    )))
                }
            }
        }
        if widths[4] != CLASSES {
            return Err(Error::Dimension(format!(
                "oracle output width {} is not {CLASSES}",
                widths[4]
            )));
        }
        let template = Self::zeros_with(widths)?;
        if params.len() != template.params.len() {
            return Err(Error::Contract("oracle parameter count mismatch".into()));
        }
        for (name, t) in template.params.iter() {
            if params.get(name)?.shape() != t.shape() {
                return Err(Error::Dimension(format!(
                    "oracle parameter '{name}' has the wrong shape"
                )));
            }
        }
        Ok(OracleClassifier { widths, params })
    }

    pub fn cast<S: Real>(&self) -> OracleClassifier<S> {
        OracleClassifier {
            widths: self.widths,
            params: self.params.cast(),
        }
    }

    /// Records the forward pass; returns `(features, probabilities)`.
    pub fn forward(&self, tape: &mut Tape<R>, bound: &Bound, x: Var) -> Result<(Var, Var)> {
        let mut h = x;
        let mut features = x;
        for (i, layer) in LAYERS.iter().enumerate() {
            h = tape.linear(
                h,
                bound.get(&format!("{layer}.weight"))?,
                Some(bound.get(&format!("{layer}.bias"))?),
            )?;
            if i + 1 < LAYERS.len() {
                h = tape.relu(h)?;
                features = h;
            }
        }
        Ok((features, tape.softmax(h)?))
    }

    fn run(&self, images: &[R], want_features: bool) -> Result<Vec<R>> {
        let input = self.widths[0];
        if images.is_empty() || images.len() % input != 0 {
            return Err(Error::Contract(format!(
                "expected whole images of {input} values, got {} values",
                images.len()
            )));
        }
        let width = if want_features {
            self.widths[3]
        } else {
            CLASSES
        };
        let mut out = Vec::with_capacity(images.len() / input * width);
        for chunk in images.chunks(EVAL_CHUNK * input) {
            let mut tape = Tape::new();
            let bound = self.params.bind(&mut tape);
            let x = tape.constant(vec![chunk.len() / input, input], chunk.to_vec())?;
            let (f, p) = self.forward(&mut tape, &bound, x)?;
            out.extend_from_slice(tape.value(if want_features { f } else { p }));
        }
        Ok(out)
    }

    /// Class probabilities, one row of 10 per image.
    pub fn probabilities(&self, images: &[R]) -> Result<Vec<R>> {
        self.run(images, false)
    }

    /// Penultimate-layer activations, one row of `widths[3]` per image.
    pub fn extract_features(&self, images: &[R]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .run(images, true)?
            .chunks(self.widths[3])
            .map(|r| r.iter().map(|v| v.as_f64()).collect())
            .collect())
    }

    /// Argmax class (lowest index wins ties) and the full probability row.
    pub fn classify(&self, images: &[R]) -> Result<Vec<Prediction>> {
        Ok(self
            .probabilities(images)?
            .chunks(CLASSES)
            .map(|row| {
                let probs: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
                let mut best = 0;
                for (k, &p) in probs.iter().enumerate() {
                    if p > probs[best] {
                        best = k;
                    }
                }
                Prediction {
                    class: best as u8,
                    probs,
                }
            })
            .collect())
    }

    pub fn accuracy(&self, split: &MnistSplit) -> Result<f64> {
        let images: Vec<R> = split.pixels.iter().map(|&v| R::of(v as f64)).collect();
        let preds = self.classify(&images)?;
        let hits = preds
            .iter()
            .zip(&split.labels)
            .filter(|(p, &y)| p.class == y)
            .count();
        Ok(hits as f64 / split.len() as f64)
    }
}

/// Translates a 28×28 image by `(dx, dy)`, filling with background `-1`.
pub fn shift_image(src: &[f32], dx: isize, dy: isize, dst: &mut [f32]) {
    let side = SIDE as isize;
    for y in 0..side {
        for x in 0..side {
            let (sx, sy) = (x - dx, y - dy);
            dst[(y * side + x) as usize] = if (0..side).contains(&sx) && (0..side).contains(&sy) {
                src[(sy * side + sx) as usize]
            } else {
                -1.0
            };
        }
    }
}

/// Mean cross-entropy of `probs` (`[n, 10]`) against integer labels.
pub fn cross_entropy<R: Real>(tape: &mut Tape<R>, probs: Var, labels: &[u8]) -> Result<Var> {
    let n = labels.len();
    if n == 0 || tape.shape(probs) != [n, CLASSES] {
        return Err(Error::Dimension(format!(
            "{n} labels for probabilities of shape {:?}",
            tape.shape(probs)
        )));
    }
    let mut onehot = vec![R::zero(); n * CLASSES];
    for (i, &y) in labels.iter().enumerate() {
        if y as usize >= CLASSES {
            return Err(Error::Contract(format!("label {y} outside 0..{CLASSES}")));
        }
        onehot[i * CLASSES + y as usize] = R::one();
    }
    let onehot = tape.constant(vec![n, CLASSES], onehot)?;
    let logp = tape.ln_floor(probs, R::of(1e-12))?;
    let picked = tape.mul(onehot, logp)?;
    let total = tape.sum(picked)?;
    tape.scale(total, R::of(-1.0 / n as f64))
}

/// Trains the oracle with Adam on shuffled, randomly shifted batches and
/// returns it with its accuracy on `test`.
pub fn train_oracle(
    train: &MnistSplit,
    test: &MnistSplit,
    config: &OracleTrainConfig,
) -> Result<(OracleClassifier<f32>, f64)> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config(
            "oracle training needs non-empty splits".into(),
        ));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut oracle = OracleClassifier::<f32>::init(config.seed);
    let mut opt = OptimizerState::new(
        &oracle.params,
        AdamConfig::with_learning_rate(config.learning_rate),
    );
    let mut rng = rng::stream(config.seed, rng::ORACLE_TRAINING);
    let shift = config.max_shift as i64;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let mut x = vec![0.0f32; chunk.len() * PIXELS];
            for (row, &i) in chunk.iter().enumerate() {
                let dx = rng.random_range(-shift..=shift) as isize;
                let dy = rng.random_range(-shift..=shift) as isize;
                shift_image(
                    train.image(i),
                    dx,
                    dy,
                    &mut x[row * PIXELS..(row + 1) * PIXELS],
                );
            }
            let labels: Vec<u8> = chunk.iter().map(|&i| train.labels[i]).collect();

            let mut tape = Tape::new();
            let bound = oracle.params.bind(&mut tape);
            let input = tape.constant(vec![chunk.len(), PIXELS], x)?;
            let (_, probs) = oracle.forward(&mut tape, &bound, input)?;
            let loss = cross_entropy(&mut tape, probs, &labels)?;
            let mut grads = tape.backward(loss)?;
            oracle.params.store_grads(&bound, &mut grads)?;
            adam_update(&mut oracle.params, &mut opt)?;
            oracle.params.clear_grads();
        }
        opt.config.learning_rate *= config.decay;
    }
    let accuracy = oracle.cast::<f64>().accuracy(test)?;
    Ok((oracle, accuracy))
}
