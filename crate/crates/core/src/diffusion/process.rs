use crate::error::{Error, Result};
use crate::numerics::{Real, Tape, Tensor, Var};

use super::NoiseSchedule;

fn same_shape<R: Real>(what: &str, a: &Tensor<R>, b: &Tensor<R>) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )))
    }
}

/// `√ᾱ·z0 + √(1-ᾱ)·eps` with explicit coefficients.
pub fn mix<R: Real>(z0: &[R], eps: &[R], signal: R, noise: R) -> Vec<R> {
    z0.iter()
        .zip(eps)
        .map(|(&z, &e)| signal * z + noise * e)
        .collect()
}

/// Forward noising `z_t = √ᾱ_t·z0 + √(1-ᾱ_t)·eps` at step `t` in `1..=T`.
pub fn add_noise<R: Real>(
    z0: &Tensor<R>,
    eps: &Tensor<R>,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<Tensor<R>> {
    same_shape("add_noise", z0, eps)?;
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    let data = mix(
        z0.data(),
        eps.data(),
        R::of(ab.sqrt()),
        R::of((1.0 - ab).sqrt()),
    );
    Tensor::new(z0.shape().to_vec(), data)
}

/// Row-wise forward noising of `[n, width]` data, one step per row.
pub fn add_noise_rows<R: Real>(
    z0: &[R],
    eps: &[R],
    steps: &[usize],
    sched: &NoiseSchedule,
) -> Result<Vec<R>> {
    if z0.len() != eps.len() || steps.is_empty() || z0.len() % steps.len() != 0 {
        return Err(Error::Contract(format!(
            "add_noise_rows: {} values, {} noise values, {} steps",
            z0.len(),
            eps.len(),
            steps.len()
        )));
    }
    let width = z0.len() / steps.len();
    let mut out = Vec::with_capacity(z0.len());
    for (row, &t) in steps.iter().enumerate() {
        sched.check_step(t)?;
        let ab = sched.alpha_bar(t);
        let span = row * width..(row + 1) * width;
        out.extend(mix(
            &z0[span.clone()],
            &eps[span],
            R::of(ab.sqrt()),
            R::of((1.0 - ab).sqrt()),
        ));
    }
    Ok(out)
}

/// `z0 + (eps - eps_hat)`: the denoised latent handed to the indicator.
pub fn reconstruct_z0<R: Real>(
    z0: &Tensor<R>,
    eps: &Tensor<R>,
    eps_hat: &Tensor<R>,
) -> Result<Tensor<R>> {
    same_shape("reconstruct_z0", z0, eps)?;
    same_shape("reconstruct_z0", z0, eps_hat)?;
    let data = z0
        .data()
        .iter()
        .zip(eps.data())
        .zip(eps_hat.data())
        .map(|((&z, &e), &h)| z + (e - h))
        .collect();
    Tensor::new(z0.shape().to_vec(), data)
}

/// Mean over all elements of `(eps - eps_hat)²`.
pub fn sdm_loss<R: Real>(eps: &Tensor<R>, eps_hat: &Tensor<R>) -> Result<R> {
    same_shape("sdm_loss", eps, eps_hat)?;
    let total = eps
        .data()
        .iter()
        .zip(eps_hat.data())
        .fold(R::zero(), |acc, (&e, &h)| acc + (e - h) * (e - h));
    Ok(total / R::of(eps.numel() as f64))
}

/// Tape version of [`reconstruct_z0`].
pub fn reconstruct_z0_on<R: Real>(
    tape: &mut Tape<R>,
    z0: Var,
    eps: Var,
    eps_hat: Var,
) -> Result<Var> {
    let residual = tape.sub(eps, eps_hat)?;
    tape.add(z0, residual)
}

/// Tape version of [`sdm_loss`].
pub fn sdm_loss_on<R: Real>(tape: &mut Tape<R>, eps: Var, eps_hat: Var) -> Result<Var> {
    let diff = tape.sub(eps, eps_hat)?;
    let sq = tape.mul(diff, diff)?;
    tape.mean(sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn v(data: &[f64]) -> Tensor<f64> {
        Tensor::vector(data.to_vec()).unwrap()
    }

    #[test]
    fn noising_limits() {
        let z0 = v(&[0.3, -0.7]);
        let eps = v(&[1.1, 0.2]);
        assert_eq!(mix(z0.data(), eps.data(), 1.0, 0.0), z0.data());
        assert_eq!(mix(z0.data(), eps.data(), 0.0, 1.0), eps.data());
        let sched = NoiseSchedule::from_betas(vec![0.36]).unwrap();
        let zt = add_noise(&v(&[1.0]), &v(&[0.0]), 1, &sched).unwrap();
        assert!((zt.data()[0] - 0.8).abs() < 1e-15);
        assert!(add_noise(&v(&[1.0]), &v(&[0.0]), 2, &sched).is_err());
        assert!(add_noise(&v(&[1.0]), &v(&[0.0, 1.0]), 1, &sched).is_err());
    }

    #[test]
    fn noising_preserves_unit_variance() {
        let sched = super::super::ScheduleConfig::default().build().unwrap();
        let mut g = rng::stream(0, 99);
        let n = 200_000;
        let z0 = Tensor::vector(rng::normals::<f64>(&mut g, n)).unwrap();
        let eps = Tensor::vector(rng::normals::<f64>(&mut g, n)).unwrap();
        for t in [1, 50, 100, 200] {
            let zt = add_noise(&z0, &eps, t, &sched).unwrap();
            let mean = zt.data().iter().sum::<f64>() / n as f64;
            let var = zt.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            assert!((var - 1.0).abs() < 0.02, "t={t}: variance {var}");
        }
    }

    #[test]
    fn reconstruction_examples() {
        let z0 = v(&[1.0, 2.0]);
        let eps = v(&[0.5, -0.5]);
        assert_eq!(reconstruct_z0(&z0, &eps, &eps).unwrap(), z0);
        let zero = v(&[0.0, 0.0]);
        assert_eq!(
            reconstruct_z0(&z0, &eps, &zero).unwrap().data(),
            &[1.5, 1.5]
        );
        let out = reconstruct_z0(&z0, &eps, &v(&[0.1, 0.1])).unwrap();
        assert!((out.data()[0] - 1.4).abs() < 1e-15 && (out.data()[1] - 1.4).abs() < 1e-15);
        assert!(reconstruct_z0(&z0, &eps, &v(&[0.0])).is_err());
    }

    #[test]
    fn sdm_loss_examples() {
        let eps = v(&[1.0, 0.0]);
        assert_eq!(sdm_loss(&eps, &eps).unwrap(), 0.0);
        assert_eq!(sdm_loss(&eps, &v(&[0.0, 0.0])).unwrap(), 0.5);
        let ones = Tensor::<f64>::full(vec![3, 4], 1.0).unwrap();
        let zeros = Tensor::<f64>::zeros(vec![3, 4]).unwrap();
        assert_eq!(sdm_loss(&ones, &zeros).unwrap(), 1.0);
        assert!(sdm_loss(&ones, &eps).is_err());
    }

    #[test]
    fn tape_versions_agree() {
        let z0 = v(&[1.0, 2.0, -3.0]);
        let eps = v(&[0.5, -0.5, 0.25]);
        let hat = v(&[0.1, 0.3, -0.2]);
        let mut tape = Tape::new();
        let (a, b, c) = (tape.leaf(&z0), tape.leaf(&eps), tape.leaf(&hat));
        let r = reconstruct_z0_on(&mut tape, a, b, c).unwrap();
        assert_eq!(tape.tensor(r), reconstruct_z0(&z0, &eps, &hat).unwrap());
        let l = sdm_loss_on(&mut tape, b, c).unwrap();
        assert_eq!(tape.scalar(l).unwrap(), sdm_loss(&eps, &hat).unwrap());
    }
}
