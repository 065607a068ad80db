use crate::error::{Error, Result};

use super::{Bound, ParameterSet, Tape, Var};

/// Compares reverse-mode gradients of `f` with central differences.
///
/// `f` builds a scalar loss on a fresh tape from the bound parameters. The
/// return value is the largest `|analytic - numeric| / max(1, |numeric|)` over
/// every parameter entry.
pub fn finite_difference_check<F>(mut f: F, params: &ParameterSet<f64>, h: f64) -> Result<f64>
where
    F: FnMut(&mut Tape<f64>, &Bound) -> Result<Var>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Contract(format!(
            "step size must be positive, got {h}"
        )));
    }

    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let loss = f(&mut tape, &bound)?;
    let mut grads = tape.backward(loss)?;
    let mut analytic = params.clone();
    analytic.store_grads(&bound, &mut grads)?;

    let mut eval = |p: &ParameterSet<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let loss = f(&mut tape, &bound)?;
        let value = tape.scalar(loss)?;
        if !value.is_finite() {
            return Err(Error::Numeric("objective is not finite".into()));
        }
        Ok(value)
    };

    let mut probe = params.clone();
    let mut worst = 0.0f64;
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        let grad = analytic.get(name)?.grad().expect("stored above").to_vec();
        for (i, &g) in grad.iter().enumerate() {
            let orig = probe.get(name)?.data()[i];
            probe.get_mut(name)?.data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = (g - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn quadratic_is_nearly_exact() {
        let mut p = ParameterSet::new();
        p.insert("x", Tensor::vector(vec![2.0]).unwrap()).unwrap();
        let err = finite_difference_check(
            |tape, b| {
                let x = b.get("x")?;
                let sq = tape.mul(x, x)?;
                tape.sum(sq)
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn rejects_bad_step() {
        let p = ParameterSet::<f64>::new();
        assert!(
            finite_difference_check(|tape, _| tape.constant(vec![1], vec![0.0]), &p, 0.0).is_err()
        );
    }
}
