use std::collections::BTreeSet;

use ndarray::{Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::f1::f1_scores_for;
use crate::dataset::derive_rng;
use crate::error::{Error, Result};
use crate::lm_backend::{Adam, AdamConfig};
use crate::tape::Matrix;
use crate::Scalar;

pub const HIDDEN_SIZES: [usize; 3] = [100, 150, 200];
pub const LEARNING_RATES: [f64; 3] = [1e-3, 1e-4, 1e-5];

/// One hidden ReLU layer of `hidden` units, softmax output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub hidden: usize,
    pub learning_rate: f64,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec {
            hidden: 100,
            learning_rate: 1e-3,
        }
    }
}

/// The nine grid points, hidden size major.
pub fn classifier_grid() -> Vec<ClassifierSpec> {
    HIDDEN_SIZES
        .iter()
        .flat_map(|&hidden| {
            LEARNING_RATES
                .iter()
                .map(move |&learning_rate| ClassifierSpec { hidden, learning_rate })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub max_epochs: usize,
    /// Epochs without improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            max_epochs: 200,
            patience: 10,
            batch_size: 200,
            seed: 0,
        }
    }
}

/// Row-per-example feature matrix with string labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledVectors<T> {
    pub vectors: Matrix<T>,
    pub labels: Vec<String>,
}

impl<T: Scalar> LabeledVectors<T> {
    pub fn new(rows: &[Vec<T>], labels: Vec<String>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "vectors vs labels",
                expected: labels.len(),
                got: rows.len(),
            });
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut m = Matrix::zeros((rows.len(), dim));
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "feature vector",
                    expected: dim,
                    got: r.len(),
                });
            }
            m.row_mut(i).iter_mut().zip(r).for_each(|(d, &s)| *d = s);
        }
        Ok(LabeledVectors { vectors: m, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub classes: Vec<String>,
    params: [Matrix<T>; 4],
}

impl<T: Scalar> Mlp<T> {
    fn new(input: usize, hidden: usize, classes: Vec<String>, rng: &mut impl Rng) -> Self {
        let mut glorot = |r: usize, c: usize| {
            let b = (6.0 / (r + c) as f64).sqrt();
            Matrix::from_shape_fn((r, c), |_| T::lit(rng.random_range(-b..b)))
        };
        let n = classes.len();
        let w1 = glorot(input, hidden);
        let w2 = glorot(hidden, n);
        Mlp {
            classes,
            params: [w1, Matrix::zeros((1, hidden)), w2, Matrix::zeros((1, n))],
        }
    }

    fn hidden(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut h = x.dot(&self.params[0]) + &self.params[1];
        h.mapv_inplace(|v| v.max(T::zero()));
        h
    }

    fn probabilities(&self, h: &Matrix<T>) -> Matrix<T> {
        let mut z = h.dot(&self.params[2]) + &self.params[3];
        for mut row in z.rows_mut() {
            let m = row.fold(T::neg_infinity(), |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        z
    }

    /// Class index per row; ties go to the lower index.
    pub fn predict(&self, x: &Matrix<T>) -> Vec<usize> {
        let p = self.probabilities(&self.hidden(x));
        p.rows()
            .into_iter()
            .map(|r| {
                let v: Vec<T> = r.to_vec();
                super::analogy::argmax_first(&v).unwrap_or(0)
            })
            .collect()
    }

    pub fn predict_labels(&self, x: &Matrix<T>) -> Vec<String> {
        self.predict(x).into_iter().map(|i| self.classes[i].clone()).collect()
    }

    /// Mean cross-entropy and its gradients on one minibatch.
    fn gradients(&self, x: &Matrix<T>, y: &[usize]) -> (T, [Matrix<T>; 4]) {
        let h = self.hidden(x);
        let mut dz = self.probabilities(&h);
        let n = T::from_usize_lossy(y.len());
        let mut loss = T::zero();
        for (i, &c) in y.iter().enumerate() {
            loss -= dz[[i, c]].max(T::min_positive_value()).ln();
            dz[[i, c]] -= T::one();
        }
        dz.mapv_inplace(|v| v / n);
        let dw2 = h.t().dot(&dz);
        let db2 = dz.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut dh = dz.dot(&self.params[2].t());
        Zip::from(&mut dh).and(&h).for_each(|g, &a| {
            if a <= T::zero() {
                *g = T::zero();
            }
        });
        let dw1 = x.t().dot(&dh);
        let db1 = dh.sum_axis(Axis(0)).insert_axis(Axis(0));
        (loss / n, [dw1, db1, dw2, db2])
    }
}

fn class_indices(labels: &[String], classes: &[String]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| {
            classes
                .binary_search(l)
                .map_err(|_| Error::InvalidConfig(format!("label `{l}` not seen in training")))
        })
        .collect()
}

/// Trains one MLP with Adam on shuffled minibatches. With a validation set
/// it keeps the weights of the best validation macro F1 and stops after
/// `patience` epochs without improvement; otherwise it stops when the
/// training loss has not improved by 1e-4 for `patience` epochs.
pub fn fit_mlp<T: Scalar>(
    train: &LabeledVectors<T>,
    validation: Option<&LabeledVectors<T>>,
    spec: ClassifierSpec,
    config: &MlpConfig,
) -> Result<(Mlp<T>, Option<f64>)> {
    let classes: Vec<String> = train
        .labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(Error::InsufficientData(
            "the classifier needs at least two classes".into(),
        ));
    }
    if spec.hidden == 0 || spec.learning_rate.is_nan() || spec.learning_rate <= 0.0 {
        return Err(Error::InvalidConfig(
            "classifier needs hidden ≥ 1 and a positive learning rate".into(),
        ));
    }
    let y = class_indices(&train.labels, &classes)?;
    let label = format!("{}/{}", spec.hidden, spec.learning_rate);
    let mut rng = derive_rng(config.seed, &["mlp", &label]);
    let mut mlp = Mlp::new(train.vectors.ncols(), spec.hidden, classes.clone(), &mut rng);
    let mut opt = Adam::new(AdamConfig::with_learning_rate(spec.learning_rate));
    let mut best: Option<(f64, Mlp<T>)> = None;
    let mut best_loss = f64::INFINITY;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for _ in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let x = train.vectors.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let (loss, grads) = mlp.gradients(&x, &yb);
            epoch_loss += loss.to_f64().unwrap_or(f64::NAN) * chunk.len() as f64;
            let mut ps: Vec<&mut [T]> = mlp
                .params
                .iter_mut()
                .map(|p| p.as_slice_mut().expect("contiguous"))
                .collect();
            let gs: Vec<&[T]> = grads.iter().map(|g| g.as_slice().expect("contiguous")).collect();
            opt.step(&mut ps, &gs)?;
        }
        epoch_loss /= train.len() as f64;
        let improved = match validation {
            Some(v) => {
                let f1 = f1_scores_for(&mlp.predict_labels(&v.vectors), &v.labels, &classes)?.macro_f1;
                let better = best.as_ref().is_none_or(|(b, _)| f1 > *b);
                if better {
                    best = Some((f1, mlp.clone()));
                }
                better
            }
            None => {
                let better = epoch_loss < best_loss - 1e-4;
                best_loss = best_loss.min(epoch_loss);
                better
            }
        };
        stale = if improved { 0 } else { stale + 1 };
        if stale >= config.patience {
            break;
        }
    }
    Ok(match best {
        Some((f1, m)) => (m, Some(f1)),
        None => (mlp, None),
    })
}

#[derive(Clone, Debug)]
pub struct TrainedClassifier<T> {
    pub mlp: Mlp<T>,
    pub spec: ClassifierSpec,
    pub validation_macro_f1: Option<f64>,
    /// Validation macro F1 of every grid point; empty on the default path.
    pub grid: Vec<(ClassifierSpec, f64)>,
}

/// Tunes hidden size and learning rate on validation macro F1 (ties go
/// to the earlier grid point). Without validation data the default
/// configuration is trained directly.
pub fn train_relation_classifier<T: Scalar>(
    train: &LabeledVectors<T>,
    validation: Option<&LabeledVectors<T>>,
    config: &MlpConfig,
) -> Result<TrainedClassifier<T>> {
    let validation = validation.filter(|v| !v.is_empty());
    let Some(v) = validation else {
        log::info!("no validation split; using the default classifier configuration");
        let spec = ClassifierSpec::default();
        let (mlp, _) = fit_mlp(train, None, spec, config)?;
        return Ok(TrainedClassifier {
            mlp,
            spec,
            validation_macro_f1: None,
            grid: Vec::new(),
        });
    };
    let fitted = classifier_grid()
        .into_par_iter()
        .map(|spec| fit_mlp(train, Some(v), spec, config).map(|(m, f1)| (spec, m, f1.unwrap_or(0.0))))
        .collect::<Result<Vec<_>>>()?;
    let grid: Vec<(ClassifierSpec, f64)> = fitted.iter().map(|(s, _, f)| (*s, *f)).collect();
    let best = fitted
        .iter()
        .enumerate()
        .fold(0, |b, (i, (_, _, f))| if *f > fitted[b].2 { i } else { b });
    let (spec, mlp, f1) = fitted.into_iter().nth(best).expect("non-empty grid");
    Ok(TrainedClassifier {
        mlp,
        spec,
        validation_macro_f1: Some(f1),
        grid,
    })
}
