//! Semantic bank of skinned models: key/value memory queried by cosine
//! similarity, blending a small set of base-shape offset fields over a shared
//! template.

use crate::autodiff::Real;
use crate::geometry::{mirror_pairing, symmetrize_with, Mesh, VertexField};
use crate::harness::fts::{read_fts, write_fts, Tensor};
use crate::harness::rng::Rng;
use std::path::Path;

pub const KEY_DIM: usize = 384;
pub const VAL_DIM: usize = 128;
pub const DEFAULT_TOP_M: usize = 10;

#[derive(Debug)]
pub enum BankError {
    Empty,
    TopMExceedsK { top_m: usize, k: usize },
    BadDimension { what: &'static str, expected: usize, got: usize },
    WeightsNotNormalized { sum: f64 },
    NegativeWeight { index: usize },
    ZeroEmbedding,
    Io(std::io::Error),
    Format(String),
}

impl std::fmt::Display for BankError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BankError::Empty => write!(f, "bank needs at least one entry"),
            BankError::TopMExceedsK { top_m, k } => write!(f, "top_m {} exceeds K {}", top_m, k),
            BankError::BadDimension { what, expected, got } => {
                write!(f, "{} has dimension {}, expected {}", what, got, expected)
            }
            BankError::WeightsNotNormalized { sum } => {
                write!(f, "weights sum to {}, expected 1 within 1e-9", sum)
            }
            BankError::NegativeWeight { index } => write!(f, "weight {} is negative", index),
            BankError::ZeroEmbedding => write!(f, "query embedding must be nonzero"),
            BankError::Io(e) => write!(f, "bank io error: {}", e),
            BankError::Format(m) => write!(f, "bank format error: {}", m),
        }
    }
}

impl std::error::Error for BankError {}

impl From<std::io::Error> for BankError {
    fn from(e: std::io::Error) -> Self {
        BankError::Io(e)
    }
}

/// K key vectors (unit norm), K value embeddings, K base-shape offset fields
/// over one shared template mesh.
#[derive(Clone, Debug)]
pub struct SemanticBank {
    keys: Vec<f64>,   // K x KEY_DIM
    values: Vec<f64>, // K x VAL_DIM
    offsets: Vec<VertexField<f64>>,
    pub template: Mesh<f64>,
    pub top_m: usize,
}

/// Result of a bank query: one weight per slot (zeros outside the top-m
/// support) plus the blended latent embedding.
#[derive(Clone, Debug)]
pub struct QueryResult {
    pub weights: Vec<f64>,
    pub phi_tilde: Vec<f64>,
    /// Set when every surviving similarity was <= 0 and the uniform fallback
    /// was used.
    pub degenerate: bool,
}

impl SemanticBank {
    pub fn new(
        keys: Vec<f64>,
        values: Vec<f64>,
        offsets: Vec<VertexField<f64>>,
        template: Mesh<f64>,
        top_m: usize,
    ) -> Result<Self, BankError> {
        let k = offsets.len();
        if k == 0 {
            return Err(BankError::Empty);
        }
        if keys.len() != k * KEY_DIM {
            return Err(BankError::BadDimension {
                what: "keys",
                expected: k * KEY_DIM,
                got: keys.len(),
            });
        }
        if values.len() != k * VAL_DIM {
            return Err(BankError::BadDimension {
                what: "values",
                expected: k * VAL_DIM,
                got: values.len(),
            });
        }
        if top_m == 0 || top_m > k {
            return Err(BankError::TopMExceedsK { top_m, k });
        }
        for of in &offsets {
            if of.len() != template.vertex_count() || of.dim != 3 {
                return Err(BankError::BadDimension {
                    what: "offset field",
                    expected: template.vertex_count() * 3,
                    got: of.len() * of.dim,
                });
            }
        }
        let mut bank = SemanticBank {
            keys,
            values,
            offsets,
            template,
            top_m,
        };
        bank.normalize_keys();
        bank.symmetrize_offsets()?;
        Ok(bank)
    }

    /// Random unit keys and small values, zero offsets: the bank that exactly
    /// represents its template.
    pub fn with_zero_offsets(template: Mesh<f64>, k: usize, top_m: usize, seed: u64) -> Self {
        let mut rng = Rng::substream(seed, 0xBA4E);
        let mut keys = Vec::with_capacity(k * KEY_DIM);
        for _ in 0..k {
            keys.extend(rng.unit_vector(KEY_DIM));
        }
        let values: Vec<f64> = (0..k * VAL_DIM).map(|_| rng.normal_scaled(0.1)).collect();
        let offsets = (0..k)
            .map(|_| VertexField::zeros(3, template.vertex_count()))
            .collect();
        SemanticBank::new(keys, values, offsets, template, top_m.min(k)).unwrap()
    }

    /// Random symmetric offset fields (for the sampling/interpolation demos).
    pub fn with_random_offsets(
        template: Mesh<f64>,
        k: usize,
        top_m: usize,
        amplitude: f64,
        seed: u64,
    ) -> Self {
        let mut bank = Self::with_zero_offsets(template, k, top_m, seed);
        let mut rng = Rng::substream(seed, 0x0FF5);
        let n = bank.template.vertex_count();
        for of in &mut bank.offsets {
            for i in 0..n {
                let row = of.row_mut(i);
                for c in row.iter_mut() {
                    *c = rng.normal_scaled(amplitude);
                }
            }
        }
        bank.symmetrize_offsets().unwrap();
        bank
    }

    fn normalize_keys(&mut self) {
        for k in 0..self.len() {
            let row = &mut self.keys[k * KEY_DIM..(k + 1) * KEY_DIM];
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-12 {
                for x in row {
                    *x /= n;
                }
            }
        }
    }

    fn symmetrize_offsets(&mut self) -> Result<(), BankError> {
        let pairing = mirror_pairing(&self.template)
            .map_err(|e| BankError::Format(format!("template not mirror-symmetric: {}", e)))?;
        for of in &mut self.offsets {
            *of = symmetrize_with(of, &pairing);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn key(&self, k: usize) -> &[f64] {
        &self.keys[k * KEY_DIM..(k + 1) * KEY_DIM]
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * VAL_DIM..(k + 1) * VAL_DIM]
    }

    pub fn offsets(&self, k: usize) -> &VertexField<f64> {
        &self.offsets[k]
    }

    pub fn offsets_mut(&mut self) -> &mut Vec<VertexField<f64>> {
        &mut self.offsets
    }

    /// Cosine-similarity query with top-m truncation: similarities outside
    /// the top-m are dropped, survivors are clamped below at zero and
    /// renormalized to sum one; phi_tilde is the weighted value blend.
    pub fn query(&self, phi: &[f64]) -> Result<QueryResult, BankError> {
        if phi.len() != KEY_DIM {
            return Err(BankError::BadDimension {
                what: "phi",
                expected: KEY_DIM,
                got: phi.len(),
            });
        }
        let phi_norm = phi.iter().map(|x| x * x).sum::<f64>().sqrt();
        if phi_norm <= 1e-12 {
            return Err(BankError::ZeroEmbedding);
        }
        let k = self.len();
        let sims: Vec<f64> = (0..k)
            .map(|i| {
                let key = self.key(i);
                key.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>() / phi_norm
            })
            .collect();
        // top-m selection, ties to the lower index
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| sims[b].partial_cmp(&sims[a]).unwrap().then(a.cmp(&b)));
        let support = &order[..self.top_m];
        let mut weights = vec![0.0; k];
        let mut degenerate = false;
        let clamped_sum: f64 = support.iter().map(|&i| sims[i].max(0.0)).sum();
        if clamped_sum <= 0.0 {
            degenerate = true;
            for &i in support {
                weights[i] = 1.0 / self.top_m as f64;
            }
        } else {
            for &i in support {
                weights[i] = sims[i].max(0.0) / clamped_sum;
            }
        }
        let mut phi_tilde = vec![0.0; VAL_DIM];
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (t, v) in phi_tilde.iter_mut().zip(self.value(i)) {
                *t += w * v;
            }
        }
        Ok(QueryResult {
            weights,
            phi_tilde,
            degenerate,
        })
    }

    /// Query at the arithmetic mean of a batch of embeddings. Note the
    /// nonlinearity: the mean of per-image queries is not the query of the
    /// mean in general; the fit uses one query per batch.
    pub fn batch_mean_embedding(&self, phis: &[Vec<f64>]) -> Result<QueryResult, BankError> {
        if phis.is_empty() {
            return Err(BankError::ZeroEmbedding);
        }
        let mut mean = vec![0.0; KEY_DIM];
        for phi in phis {
            if phi.len() != KEY_DIM {
                return Err(BankError::BadDimension {
                    what: "phi",
                    expected: KEY_DIM,
                    got: phi.len(),
                });
            }
            for (m, x) in mean.iter_mut().zip(phi) {
                *m += x / phis.len() as f64;
            }
        }
        self.query(&mean)
    }

    /// Blended latent embedding for arbitrary weights (slots outside the
    /// support contribute nothing by carrying zero weight).
    pub fn blend_values(&self, weights: &[f64]) -> Vec<f64> {
        let mut phi_tilde = vec![0.0; VAL_DIM];
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (t, v) in phi_tilde.iter_mut().zip(self.value(i)) {
                *t += w * v;
            }
        }
        phi_tilde
    }

    /// V_base = template + sum_k w_k offsets_k. Weights must be nonnegative
    /// and sum to one within 1e-9.
    pub fn synthesize_base(&self, weights: &[f64]) -> Result<Mesh<f64>, BankError> {
        check_weights(weights, self.len())?;
        let lifted: Vec<&VertexField<f64>> = self.offsets.iter().collect();
        Ok(blend_base(&self.template, &lifted, weights))
    }

    pub fn save(&self, fts_path: &Path, manifest_path: &Path, template_path: &Path) -> Result<(), BankError> {
        crate::geometry::save_obj(&self.template, template_path)
            .map_err(|e| BankError::Format(e.to_string()))?;
        let k = self.len();
        let nv = self.template.vertex_count();
        let mut flat = Vec::with_capacity(k * (KEY_DIM + VAL_DIM + nv * 3));
        flat.extend_from_slice(&self.keys);
        flat.extend_from_slice(&self.values);
        for of in &self.offsets {
            flat.extend_from_slice(of.raw());
        }
        write_fts(fts_path, &Tensor::from_vec(vec![flat.len()], flat))?;
        let manifest = serde_json::json!({
            "K": k,
            "dims": { "key": KEY_DIM, "value": VAL_DIM },
            "top_m": self.top_m,
            "template": template_path.file_name().and_then(|s| s.to_str()),
        });
        std::fs::write(manifest_path, serde_json::to_string_pretty(&manifest).unwrap())?;
        Ok(())
    }

    pub fn load(fts_path: &Path, manifest_path: &Path) -> Result<Self, BankError> {
        let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(manifest_path)?)
            .map_err(|e| BankError::Format(e.to_string()))?;
        let k = manifest["K"].as_u64().ok_or_else(|| BankError::Format("missing K".into()))? as usize;
        let top_m = manifest["top_m"].as_u64().ok_or_else(|| BankError::Format("missing top_m".into()))?
            as usize;
        let template_name = manifest["template"]
            .as_str()
            .ok_or_else(|| BankError::Format("missing template".into()))?;
        let template_path = manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(template_name);
        let template =
            crate::geometry::load_obj(&template_path).map_err(|e| BankError::Format(e.to_string()))?;
        let tensor = read_fts(fts_path).map_err(BankError::Io)?;
        let nv = template.vertex_count();
        let expected = k * (KEY_DIM + VAL_DIM + nv * 3);
        if tensor.data.len() != expected {
            return Err(BankError::BadDimension {
                what: "bank tensor",
                expected,
                got: tensor.data.len(),
            });
        }
        let keys = tensor.data[..k * KEY_DIM].to_vec();
        let values = tensor.data[k * KEY_DIM..k * (KEY_DIM + VAL_DIM)].to_vec();
        let mut offsets = Vec::with_capacity(k);
        let mut at = k * (KEY_DIM + VAL_DIM);
        for _ in 0..k {
            offsets.push(VertexField::from_rows(3, tensor.data[at..at + nv * 3].to_vec()));
            at += nv * 3;
        }
        SemanticBank::new(keys, values, offsets, template, top_m)
    }
}

pub fn check_weights(weights: &[f64], k: usize) -> Result<(), BankError> {
    if weights.len() != k {
        return Err(BankError::BadDimension {
            what: "weights",
            expected: k,
            got: weights.len(),
        });
    }
    let mut sum = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if w < 0.0 {
            return Err(BankError::NegativeWeight { index: i });
        }
        sum += w;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(BankError::WeightsNotNormalized { sum });
    }
    Ok(())
}

/// Generic base synthesis over lifted offsets; used by the fit loop where the
/// offsets and weights carry gradients.
pub fn blend_base<R: Real>(
    template: &Mesh<f64>,
    offsets: &[&VertexField<R>],
    weights: &[R],
) -> Mesh<R> {
    let mut out = Mesh::<R>::lift(template);
    for (of, &w) in offsets.iter().zip(weights) {
        for i in 0..out.vertices.len() {
            let o = of.vec3_row(i);
            out.vertices[i] = out.vertices[i] + o * w;
        }
    }
    out
}
