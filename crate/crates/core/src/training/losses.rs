use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// Scores are clamped to `[SCORE_CLAMP, 1 - SCORE_CLAMP]` before taking logs.
pub const SCORE_CLAMP: f64 = 1e-12;

fn check_dims(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { context, expected, got });
    }
    Ok(())
}

pub(crate) fn distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

/// `max(0, ‖a − p‖ − ‖a − n‖ + ε)` with Euclidean norms.
pub fn triplet_loss<T: Scalar>(anchor: &[T], positive: &[T], negative: &[T], margin: T) -> Result<T> {
    check_dims("triplet positive", anchor.len(), positive.len())?;
    check_dims("triplet negative", anchor.len(), negative.len())?;
    let s = distance(anchor, positive) - distance(anchor, negative) + margin;
    Ok(s.max(T::zero()))
}

/// Linear map from `u ⊕ v ⊕ |v − u|` (length `3d`) to one logit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead<T> {
    pub weights: Vec<T>,
}

impl<T: Scalar> ClassifierHead<T> {
    pub fn zeros(dim: usize) -> Self {
        ClassifierHead {
            weights: vec![T::zero(); 3 * dim],
        }
    }

    /// Uniform in `±1/√(3d)`.
    pub fn random(dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((3 * dim) as f64).sqrt();
        ClassifierHead {
            weights: (0..3 * dim).map(|_| T::lit(rng.random_range(-bound..bound))).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len() / 3
    }

    pub(crate) fn logit(&self, u: &[T], v: &[T]) -> T {
        let d = self.dim();
        let (w1, rest) = self.weights.split_at(d);
        let (w2, w3) = rest.split_at(d);
        let mut z = T::zero();
        for k in 0..d {
            z += w1[k] * u[k] + w2[k] * v[k] + w3[k] * (v[k] - u[k]).abs();
        }
        z
    }

    fn check(&self, u: &[T], v: &[T]) -> Result<()> {
        if !self.weights.len().is_multiple_of(3) {
            return Err(Error::InvalidConfig(
                "classifier head length is not a multiple of 3".into(),
            ));
        }
        check_dims("pair_score u", self.dim(), u.len())?;
        check_dims("pair_score v", self.dim(), v.len())
    }

    pub fn to_json(&self) -> String {
        let w: Vec<f64> = self.weights.iter().map(|w| w.to_f64().expect("finite")).collect();
        serde_json::json!({ "format": "relemb-head", "version": 1, "weights": w }).to_string()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Dto {
            format: String,
            version: u32,
            weights: Vec<f64>,
        }
        let dto: Dto = serde_json::from_str(text)?;
        if dto.format != "relemb-head" || dto.version != 1 || !dto.weights.len().is_multiple_of(3) {
            return Err(Error::InvalidConfig("unsupported classifier head file".into()));
        }
        Ok(ClassifierHead {
            weights: dto.weights.into_iter().map(T::lit).collect(),
        })
    }
}

pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `sigmoid(W · (u ⊕ v ⊕ |v − u|))`.
pub fn pair_score<T: Scalar>(u: &[T], v: &[T], head: &ClassifierHead<T>) -> Result<T> {
    head.check(u, v)?;
    Ok(sigmoid(head.logit(u, v)))
}

pub(crate) fn clamp_score<T: Scalar>(g: T) -> T {
    let lo = T::lit(SCORE_CLAMP);
    g.max(lo).min(T::one() - lo)
}

/// `−ln g(a, p) − ln(1 − g(a, n))`.
pub fn classification_loss<T: Scalar>(
    anchor: &[T],
    positive: &[T],
    negative: &[T],
    head: &ClassifierHead<T>,
) -> Result<T> {
    let gp = pair_score(anchor, positive, head)?;
    let gn = pair_score(anchor, negative, head)?;
    Ok(nll_from_scores(gp, gn))
}

/// `−ln g⁺ − ln(1 − g⁻)` after clamping both scores.
pub fn nll_from_scores<T: Scalar>(positive_score: T, negative_score: T) -> T {
    -clamp_score(positive_score).ln() - (T::one() - clamp_score(negative_score)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn triplet_worked_examples() {
        let l = triplet_loss(&[0.0, 0.0], &[3.0, 4.0], &[6.0, 8.0], 1.0).unwrap();
        assert_eq!(l, 0.0);
        let l = triplet_loss(&[0.0, 0.0], &[3.0, 4.0], &[0.0, 1.0], 0.5).unwrap();
        assert_abs_diff_eq!(l, 4.5, epsilon = 1e-12);
        let l = triplet_loss(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 3.0], 1.0).unwrap();
        assert_eq!(l, 0.0);
        assert!(triplet_loss(&[0.0], &[0.0, 1.0], &[0.0], 1.0).is_err());
    }

    #[test]
    fn pair_score_worked_examples() {
        let head = ClassifierHead {
            weights: vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        };
        let g = pair_score(&[1.0, 0.0], &[0.0, 1.0], &head).unwrap();
        assert_abs_diff_eq!(g, 0.982_013_790_037_908_4, epsilon = 1e-12);
        assert_eq!(
            pair_score(&[0.3, -2.0], &[1.0, 1.0], &ClassifierHead::zeros(2)).unwrap(),
            0.5
        );
        let only_diff = ClassifierHead {
            weights: vec![0.0, 0.0, 0.0, 0.0, 5.0, -3.0],
        };
        assert_eq!(pair_score(&[0.7, 0.2], &[0.7, 0.2], &only_diff).unwrap(), 0.5);
    }

    #[test]
    fn classification_worked_examples() {
        let zero = ClassifierHead::zeros(2);
        let l = classification_loss(&[1.0, 2.0], &[0.0, 1.0], &[5.0, 5.0], &zero).unwrap();
        assert_abs_diff_eq!(l, 2.0 * 2f64.ln(), epsilon = 1e-12);

        // Scores of the pair_score example: sigmoid(4) for the positive, 0.5 for the negative.
        let head = ClassifierHead {
            weights: vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        };
        let gp = pair_score(&[1.0, 0.0], &[0.0, 1.0], &head).unwrap();
        let l = nll_from_scores(gp, 0.5);
        assert_abs_diff_eq!(l, (1.0 + (-4f64).exp()).ln() + 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(l, 0.711_297, epsilon = 1e-6);
        assert_eq!(nll_from_scores(1.0, 0.0), -2.0 * (1.0 - SCORE_CLAMP).ln());
    }

    #[test]
    fn perfect_separation_tends_to_zero() {
        let head = ClassifierHead {
            weights: vec![0.0, 100.0, 0.0],
        };
        let l = classification_loss(&[0.0], &[1.0], &[-1.0], &head).unwrap();
        assert!(l < 1e-11);
        let extreme = ClassifierHead {
            weights: vec![0.0f64, 1e6, 0.0],
        };
        let l = classification_loss(&[0.0], &[-1.0], &[1.0], &extreme).unwrap();
        assert!(l.is_finite());
    }

    #[test]
    fn head_json_round_trip() {
        let h = ClassifierHead {
            weights: vec![0.25f32, -1.0, 3.5],
        };
        assert_eq!(ClassifierHead::from_json(&h.to_json()).unwrap(), h);
    }
}
