use super::ModelError;
use crate::scalar::Scalar;
use crate::text::LABEL_COUNT;

/// Mean of `-ln p[gold]` over positions where `loss_mask` is set. `probs`
/// holds one 15-way distribution per position.
pub fn loss<T: Scalar>(probs: &[T], label_ids: &[u32], loss_mask: &[bool]) -> Result<T, ModelError> {
    if probs.len() != label_ids.len() * LABEL_COUNT || label_ids.len() != loss_mask.len() {
        return Err(ModelError::Shape(format!(
            "{} probabilities for {} labels and {} mask entries",
            probs.len(),
            label_ids.len(),
            loss_mask.len()
        )));
    }
    let mut total = T::zero();
    let mut count = 0usize;
    for ((p, &y), &m) in probs.chunks_exact(LABEL_COUNT).zip(label_ids).zip(loss_mask) {
        if m {
            let y = y as usize;
            if y >= LABEL_COUNT {
                return Err(ModelError::Shape(format!("label id {y} out of range")));
            }
            total -= p[y].ln();
            count += 1;
        }
    }
    if count == 0 {
        return Err(ModelError::AllMasked);
    }
    Ok(total / T::of(count as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_gives_ln_15() {
        let probs = vec![1.0 / 15.0; 3 * LABEL_COUNT];
        let l: f64 = loss(&probs, &[0, 4, 14], &[true; 3]).unwrap();
        assert!((l - 15f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn one_hot_correct_is_zero() {
        let mut probs = vec![0.0f64; 2 * LABEL_COUNT];
        probs[3] = 1.0;
        probs[LABEL_COUNT + 7] = 1.0;
        assert_eq!(loss(&probs, &[3, 7], &[true, true]).unwrap(), 0.0);
    }

    #[test]
    fn masked_positions_do_not_count() {
        let mut probs = vec![1.0 / 15.0; 2 * LABEL_COUNT];
        probs[LABEL_COUNT..].fill(0.0);
        probs[LABEL_COUNT + 2] = 1e-30;
        let l: f64 = loss(&probs, &[0, 2], &[true, false]).unwrap();
        assert!((l - 15f64.ln()).abs() < 1e-12);
        assert!(matches!(loss(&probs, &[0, 2], &[false, false]), Err(ModelError::AllMasked)));
    }
}
