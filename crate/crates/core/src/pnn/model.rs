use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{posterior_from_densities, ClassProbabilities, PnnError, Prediction};
use crate::exec::Execution;
use crate::featurize::FeatureVector;
use crate::label::{ClassLabel, NUM_CLASSES};
use crate::metrics::{confusion, macro_f1};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    Uniform,
    #[default]
    Empirical,
}

/// Immutable trained model. Exemplars of each class are stored row-major and
/// sorted, so the model (and its id) does not depend on insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct PnnModel {
    model_id: String,
    schema_version: u64,
    sigma: f64,
    priors: [f64; NUM_CLASSES],
    dim: usize,
    exemplars: [Vec<f64>; NUM_CLASSES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSearch {
    pub best_sigma: f64,
    /// `(sigma, validation macro-F1)` for every grid point, in grid order.
    pub scores: Vec<(f64, f64)>,
}

impl PnnModel {
    pub fn train(
        labeled: &[(&FeatureVector, ClassLabel)],
        sigma: f64,
        prior_mode: PriorMode,
    ) -> Result<PnnModel, PnnError> {
        let rows: Vec<(&[f64], ClassLabel)> =
            labeled.iter().map(|(fv, c)| (fv.values.as_slice(), *c)).collect();
        let schema_version = match labeled.first() {
            Some((fv, _)) => fv.schema_version,
            None => return Err(PnnError::MissingClass(ClassLabel::ALL[0])),
        };
        if let Some((fv, _)) = labeled.iter().find(|(fv, _)| fv.schema_version != schema_version) {
            return Err(PnnError::MixedSchema(schema_version, fv.schema_version));
        }
        Self::train_raw(&rows, sigma, prior_mode, schema_version)
    }

    /// Trains from bare rows; used where no feature schema is involved.
    pub fn train_raw(
        rows: &[(&[f64], ClassLabel)],
        sigma: f64,
        prior_mode: PriorMode,
        schema_version: u64,
    ) -> Result<PnnModel, PnnError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(PnnError::InvalidSigma(sigma));
        }
        let dim = match rows.first() {
            Some((x, _)) => x.len(),
            None => return Err(PnnError::MissingClass(ClassLabel::ALL[0])),
        };
        if dim == 0 {
            return Err(PnnError::InvalidModel("feature vectors are empty".into()));
        }
        let mut per_class: [Vec<&[f64]>; NUM_CLASSES] = Default::default();
        for (x, c) in rows {
            if x.len() != dim {
                return Err(PnnError::InconsistentLength {
                    expected: dim,
                    found: x.len(),
                });
            }
            per_class[c.index()].push(x);
        }
        if let Some(c) = ClassLabel::ALL
            .into_iter()
            .find(|c| per_class[c.index()].is_empty())
        {
            return Err(PnnError::MissingClass(c));
        }

        let priors = match prior_mode {
            PriorMode::Uniform => [1.0 / NUM_CLASSES as f64; NUM_CLASSES],
            PriorMode::Empirical => {
                let n = rows.len() as f64;
                std::array::from_fn(|k| per_class[k].len() as f64 / n)
            }
        };
        let exemplars = per_class.map(|mut xs| {
            xs.sort_by(|a, b| lexicographic(a, b));
            xs.concat()
        });
        Ok(Self::assemble(schema_version, sigma, priors, dim, exemplars))
    }

    fn assemble(
        schema_version: u64,
        sigma: f64,
        priors: [f64; NUM_CLASSES],
        dim: usize,
        exemplars: [Vec<f64>; NUM_CLASSES],
    ) -> PnnModel {
        let mut h = Sha256::new();
        h.update(schema_version.to_le_bytes());
        h.update(sigma.to_bits().to_le_bytes());
        h.update((dim as u64).to_le_bytes());
        for p in priors {
            h.update(p.to_bits().to_le_bytes());
        }
        for class in &exemplars {
            h.update((class.len() as u64).to_le_bytes());
            for v in class {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        let digest = h.finalize();
        let model_id = format!(
            "pnn-{}",
            digest[..8].iter().map(|b| format!("{b:02x}")).collect::<String>()
        );
        PnnModel {
            model_id,
            schema_version,
            sigma,
            priors,
            dim,
            exemplars,
        }
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn schema_version(&self) -> u64 {
        self.schema_version
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn priors(&self) -> &[f64; NUM_CLASSES] {
        &self.priors
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn exemplar_count(&self, class: ClassLabel) -> usize {
        self.exemplars[class.index()].len() / self.dim
    }

    pub fn exemplars(&self, class: ClassLabel) -> impl Iterator<Item = &[f64]> {
        self.exemplars[class.index()].chunks_exact(self.dim)
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), PnnError> {
        if x.len() != self.dim {
            return Err(PnnError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Summation-layer output: the mean Gaussian kernel value per class.
    pub fn class_densities(&self, x: &[f64]) -> Result<[f64; NUM_CLASSES], PnnError> {
        self.check_dim(x)?;
        let scale = 1.0 / (2.0 * self.sigma * self.sigma);
        let mut out = [0.0; NUM_CLASSES];
        for (k, rows) in self.exemplars.iter().enumerate() {
            let mut sum = 0.0;
            let mut n = 0usize;
            for row in rows.chunks_exact(self.dim) {
                let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                sum += (-d2 * scale).exp();
                n += 1;
            }
            out[k] = sum / n as f64;
        }
        Ok(out)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<ClassProbabilities, PnnError> {
        let densities = self.class_densities(x)?;
        Ok(posterior_from_densities(&densities, &self.priors))
    }

    pub fn predict(&self, x: &[f64]) -> Result<ClassLabel, PnnError> {
        Ok(self.predict_proba(x)?.argmax())
    }

    pub fn predict_vector(&self, fv: &FeatureVector) -> Result<Prediction, PnnError> {
        let probabilities = self.predict_proba(&fv.values)?;
        Ok(Prediction {
            sha: fv.sha.clone(),
            final_class: probabilities.argmax(),
            probabilities,
            model_id: self.model_id.clone(),
        })
    }

    pub fn predict_batch(
        &self,
        vectors: &[FeatureVector],
        exec: Execution,
    ) -> Result<Vec<Prediction>, PnnError> {
        exec.map(vectors, |fv| self.predict_vector(fv))
            .into_iter()
            .collect()
    }

    /// Final classes for bare rows.
    pub fn predict_rows(&self, rows: &[&[f64]], exec: Execution) -> Result<Vec<ClassLabel>, PnnError> {
        exec.map(rows, |x| self.predict(x)).into_iter().collect()
    }

    /// Trains one model per grid point on `train` and keeps the sigma with the
    /// best macro-F1 on `validation`. Ties go to the earlier grid point.
    pub fn select_sigma(
        train: &[(&FeatureVector, ClassLabel)],
        validation: &[(&FeatureVector, ClassLabel)],
        grid: &[f64],
        prior_mode: PriorMode,
        exec: Execution,
    ) -> Result<SigmaSearch, PnnError> {
        if grid.is_empty() || validation.is_empty() {
            return Err(PnnError::EmptySearch);
        }
        let rows: Vec<&[f64]> = validation.iter().map(|(fv, _)| fv.values.as_slice()).collect();
        let mut scores = Vec::with_capacity(grid.len());
        for &sigma in grid {
            let model = Self::train(train, sigma, prior_mode)?;
            let predicted = model.predict_rows(&rows, exec)?;
            let cm = confusion(validation.iter().map(|(_, c)| *c).zip(predicted));
            scores.push((sigma, macro_f1(&cm)));
        }
        let best_sigma = scores
            .iter()
            .fold(None::<(f64, f64)>, |best, &(s, f)| match best {
                Some((_, bf)) if bf >= f => best,
                _ => Some((s, f)),
            })
            .map(|(s, _)| s)
            .expect("non-empty grid");
        Ok(SigmaSearch { best_sigma, scores })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelDocument::from(self)).expect("model serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<PnnModel, PnnError> {
        let doc: ModelDocument =
            serde_json::from_slice(bytes).map_err(|e| PnnError::InvalidModel(e.to_string()))?;
        doc.try_into()
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    model_id: String,
    schema_version: u64,
    sigma: f64,
    priors: ClassProbabilities,
    exemplars: BTreeMap<ClassLabel, Vec<Vec<f64>>>,
}

impl From<&PnnModel> for ModelDocument {
    fn from(m: &PnnModel) -> Self {
        ModelDocument {
            model_id: m.model_id.clone(),
            schema_version: m.schema_version,
            sigma: m.sigma,
            priors: ClassProbabilities(m.priors),
            exemplars: ClassLabel::ALL
                .into_iter()
                .map(|c| (c, m.exemplars(c).map(<[f64]>::to_vec).collect()))
                .collect(),
        }
    }
}

impl TryFrom<ModelDocument> for PnnModel {
    type Error = PnnError;

    fn try_from(doc: ModelDocument) -> Result<Self, Self::Error> {
        let bad = |m: String| Err(PnnError::InvalidModel(m));
        if !(doc.sigma > 0.0 && doc.sigma.is_finite()) {
            return Err(PnnError::InvalidSigma(doc.sigma));
        }
        let priors = doc.priors.0;
        if priors.iter().any(|p| *p < 0.0) || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("priors must be non-negative and sum to 1".into());
        }
        let mut dim = None;
        let mut exemplars: [Vec<f64>; NUM_CLASSES] = Default::default();
        for c in ClassLabel::ALL {
            let rows = doc.exemplars.get(&c).map(Vec::as_slice).unwrap_or_default();
            if rows.is_empty() {
                return Err(PnnError::MissingClass(c));
            }
            for r in rows {
                let d = *dim.get_or_insert(r.len());
                if d == 0 {
                    return bad("exemplar rows are empty".into());
                }
                if r.len() != d {
                    return Err(PnnError::InconsistentLength {
                        expected: d,
                        found: r.len(),
                    });
                }
                exemplars[c.index()].extend_from_slice(r);
            }
        }
        let model = PnnModel::assemble(doc.schema_version, doc.sigma, priors, dim.unwrap_or(0), exemplars);
        if model.model_id != doc.model_id {
            return bad(format!(
                "model_id {} does not match content ({})",
                doc.model_id, model.model_id
            ));
        }
        Ok(model)
    }
}
