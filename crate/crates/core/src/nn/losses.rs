use candle_core::{DType, Tensor, D};

use crate::error::{bail_dim, Error, Result};

/// Hinge loss for the discriminator: `E[relu(1 - D(real))] + E[relu(1 + D(fake))]`.
pub fn hinge_discriminator(real_logits: &Tensor, fake_logits: &Tensor) -> Result<Tensor> {
    let real = (1.0 - real_logits)?.relu()?.mean_all()?;
    let fake = (fake_logits + 1.0)?.relu()?.mean_all()?;
    Ok((real + fake)?)
}

/// Generator side of the hinge objective: `-E[D(fake)]`.
pub fn hinge_generator(fake_logits: &Tensor) -> Result<Tensor> {
    Ok(fake_logits.mean_all()?.neg()?)
}

/// Least-squares discriminator loss: `½(E[(D(real) − 1)²] + E[D(fake)²])`.
pub fn lsgan_discriminator(real_logits: &Tensor, fake_logits: &Tensor) -> Result<Tensor> {
    let real = (real_logits - 1.0)?.sqr()?.mean_all()?;
    let fake = fake_logits.sqr()?.mean_all()?;
    Ok(((real + fake)? * 0.5)?)
}

/// Least-squares generator loss: `E[(D(fake) − 1)²]`.
pub fn lsgan_generator(fake_logits: &Tensor) -> Result<Tensor> {
    Ok((fake_logits - 1.0)?.sqr()?.mean_all()?)
}

pub fn l1(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    Ok((a - b)?.abs()?.mean_all()?)
}

/// Mean L1 distance between matching discriminator activations; the real
/// activations are treated as constants.
pub fn feature_matching(fake: &[Tensor], real: &[Tensor]) -> Result<Tensor> {
    if fake.len() != real.len() || fake.is_empty() {
        bail_dim!(
            "feature lists differ in length ({} vs {})",
            fake.len(),
            real.len()
        );
    }
    let mut total = l1(&fake[0], &real[0].detach())?;
    for (f, r) in fake.iter().zip(real).skip(1) {
        total = (total + l1(f, &r.detach())?)?;
    }
    Ok(total)
}

/// Patch contrastive (InfoNCE) loss.
///
/// `feats_src` and `feats_out` are `N×D` sets where row `i` of each comes
/// from the same spatial location. Each output feature must pick out its
/// source feature among all `N` source features; logits are cosine
/// similarities over `temperature`, and the loss is the mean cross-entropy.
pub fn patch_contrastive_loss(
    feats_src: &Tensor,
    feats_out: &Tensor,
    temperature: f64,
) -> Result<Tensor> {
    let (n, d) = feats_src.dims2()?;
    if feats_out.dims2()? != (n, d) {
        bail_dim!(
            "patch sets differ: {:?} vs {:?}",
            feats_src.dims(),
            feats_out.dims()
        );
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "contrastive loss needs at least 2 patches, got {n}"
        )));
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let src = l2_normalize_rows(feats_src)?;
    let out = l2_normalize_rows(feats_out)?;
    contrastive_cross_entropy(&src, &out, temperature)
}

/// Training-time variant: rows are scaled by `1 / sqrt(‖row‖² + 1e-14)`, so
/// an all-zero projection contributes uniform logits (and finite gradients)
/// instead of failing.
pub fn patch_contrastive_loss_eps(
    feats_src: &Tensor,
    feats_out: &Tensor,
    temperature: f64,
) -> Result<Tensor> {
    let (n, d) = feats_src.dims2()?;
    if feats_out.dims2()? != (n, d) || n < 2 {
        bail_dim!(
            "patch sets must share shape N×D with N ≥ 2: {:?} vs {:?}",
            feats_src.dims(),
            feats_out.dims()
        );
    }
    let norm = |x: &Tensor| -> Result<Tensor> {
        let n = (x.sqr()?.sum_keepdim(D::Minus1)? + 1e-14)?.sqrt()?;
        Ok(x.broadcast_div(&n)?)
    };
    contrastive_cross_entropy(&norm(feats_src)?, &norm(feats_out)?, temperature)
}

fn contrastive_cross_entropy(src: &Tensor, out: &Tensor, temperature: f64) -> Result<Tensor> {
    let n = src.dim(0)?;
    let logits = (out.matmul(&src.t()?)? / temperature)?;
    let eye = Tensor::eye(n, logits.dtype(), logits.device())?;
    let positive = (&logits * eye)?.sum(D::Minus1)?;
    let lse = logits.log_sum_exp(D::Minus1)?;
    Ok((lse - positive)?.mean_all()?)
}

fn l2_normalize_rows(x: &Tensor) -> Result<Tensor> {
    let norms = x.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?;
    let min = norms
        .flatten_all()?
        .to_dtype(DType::F64)?
        .to_vec1::<f64>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if !(min > 1e-12) {
        return Err(Error::Degenerate("zero-norm patch feature".into()));
    }
    Ok(x.broadcast_div(&norms)?)
}

/// Scalar tensor → `f64`.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    fn t(rows: &[&[f64]]) -> Tensor {
        let d = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::from_vec(flat, (rows.len(), d), &Device::Cpu).unwrap()
    }

    #[test]
    fn hinge_values() {
        let real = t(&[&[2.0, 0.5]]);
        let fake = t(&[&[-0.5, 0.0]]);
        // real: relu(1-2)=0, relu(0.5)=0.5 -> 0.25; fake: relu(0.5)=0.5, relu(1)=1 -> 0.75
        assert!((scalar(&hinge_discriminator(&real, &fake).unwrap()).unwrap() - 1.0).abs() < 1e-12);
        assert!((scalar(&hinge_generator(&fake).unwrap()).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn contrastive_rejects_degenerate_inputs() {
        let one = t(&[&[1.0, 0.0]]);
        assert!(patch_contrastive_loss(&one, &one, 0.07).is_err());
        let zero = t(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let ok = t(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(
            patch_contrastive_loss(&zero, &ok, 0.07),
            Err(Error::Degenerate(_))
        ));
        assert!(
            patch_contrastive_loss(&ok, &t(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]), 0.07).is_err()
        );
    }

    #[test]
    fn orthogonal_negatives_give_small_loss() {
        let a = t(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let loss = scalar(&patch_contrastive_loss(&a, &a, 0.07).unwrap()).unwrap();
        let expected = (1.0 + 2.0 * (-1.0f64 / 0.07).exp()).ln();
        assert!((loss - expected).abs() < 1e-12);
        assert!(loss < 1e-5);
    }
}
