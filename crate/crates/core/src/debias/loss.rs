use crate::error::{Error, Result};
use crate::numerics::{Real, Tape, Var};

/// Probabilities are floored here before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Cross-entropy `Σ_i y_i·ln(1/ŷ_i)` for a one-hot `y`.
pub fn indicator_loss(y: [f64; 2], yhat: [f64; 2]) -> Result<f64> {
    let one_hot = matches!(y, [1.0, 0.0] | [0.0, 1.0]);
    if !one_hot {
        return Err(Error::Contract(format!("label {y:?} is not one-hot")));
    }
    if yhat.iter().any(|p| !(*p >= 0.0 && *p <= 1.0)) {
        return Err(Error::Contract(format!(
            "prediction {yhat:?} is not a probability pair"
        )));
    }
    Ok(y.iter()
        .zip(yhat)
        .map(|(&yi, pi)| {
            if yi == 0.0 {
                0.0
            } else {
                -yi * pi.max(PROB_FLOOR).ln()
            }
        })
        .sum())
}

/// Batch mean of the indicator cross-entropy; `labels[i]` is 1 for target.
pub fn indicator_loss_on<R: Real>(tape: &mut Tape<R>, yhat: Var, labels: &[u8]) -> Result<Var> {
    let n = labels.len();
    if tape.shape(yhat) != [n, 2] {
        return Err(Error::Dimension(format!(
            "indicator output {:?} does not match {n} labels",
            tape.shape(yhat)
        )));
    }
    let mut onehot = vec![R::zero(); 2 * n];
    for (i, &y) in labels.iter().enumerate() {
        if y > 1 {
            return Err(Error::Contract(format!("label {y} is not binary")));
        }
        onehot[2 * i + y as usize] = R::one();
    }
    let onehot = tape.constant(vec![n, 2], onehot)?;
    let logp = tape.ln_floor(yhat, R::of(PROB_FLOOR))?;
    let picked = tape.mul(onehot, logp)?;
    let total = tape.sum(picked)?;
    tape.scale(total, R::of(-1.0 / n as f64))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha {alpha} outside [0, 1]")))
    }
}

/// `(1 - α)·L_sdm + α·L_indicator`.
pub fn ddm_loss(l_sdm: f64, l_ind: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !l_sdm.is_finite() || !l_ind.is_finite() {
        return Err(Error::Numeric(format!(
            "losses must be finite: {l_sdm}, {l_ind}"
        )));
    }
    Ok((1.0 - alpha) * l_sdm + alpha * l_ind)
}

pub fn ddm_loss_on<R: Real>(tape: &mut Tape<R>, l_sdm: Var, l_ind: Var, alpha: f64) -> Result<Var> {
    check_alpha(alpha)?;
    let a = tape.scale(l_sdm, R::of(1.0 - alpha))?;
    let b = tape.scale(l_ind, R::of(alpha))?;
    tape.add(a, b)
}

/// Shannon entropy in nats with `0·ln 0 = 0`.
pub fn entropy(yhat: &[f64]) -> Result<f64> {
    if let Some(p) = yhat.iter().find(|p| !(**p >= 0.0)) {
        return Err(Error::Contract(format!("negative probability {p}")));
    }
    let total: f64 = yhat.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    Ok(yhat
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum())
}
