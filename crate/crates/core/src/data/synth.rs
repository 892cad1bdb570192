//! Multi-view synthetic data: a Gaussian latent face, attributes as signs of
//! random linear projections, and one noisy linear view per feature kind.

use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;
use crate::{Error, Result};

use super::attr::AttributeTable;
use super::bank::FeatureBank;
use super::split::SplitTag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub name: String,
    pub dim: usize,
    pub mixing_seed: u64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub latent_dim: usize,
    pub views: Vec<ViewSpec>,
    pub attributes: usize,
    pub projection_seed: u64,
    pub sample_seed: u64,
    /// Train, val and test example counts.
    pub counts: [usize; 3],
}

impl Default for SyntheticSpec {
    /// Three 16-d views of a 16-d latent with increasing noise, eight attributes.
    fn default() -> Self {
        let view = |name: &str, seed, noise| ViewSpec {
            name: name.into(),
            dim: 16,
            mixing_seed: seed,
            noise,
        };
        Self {
            latent_dim: 16,
            views: vec![view("fv", 11, 0.1), view("cnn", 12, 0.2), view("lbp", 13, 0.4)],
            attributes: 8,
            projection_seed: 21,
            sample_seed: 31,
            counts: [8000, 1000, 1000],
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.attributes == 0 {
            return Err(Error::Config("latent dim and attribute count must be positive".into()));
        }
        if self.views.is_empty() {
            return Err(Error::Empty("synthetic views"));
        }
        for v in &self.views {
            if v.dim == 0 || !(v.noise >= 0.0) || !v.noise.is_finite() {
                return Err(Error::Config(format!("view `{}` needs dim > 0 and finite noise >= 0", v.name)));
            }
            crate::model::validate_name(&v.name)?;
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

const LATENT_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 0x100;

/// Labels `[z . p_a > 0]`; view `k` is `M_k z + noise_k * e` with `M_k`
/// entries drawn from N(0, 1/latent_dim). Rows are split train, val, test in order.
pub fn synth_generate(spec: &SyntheticSpec) -> Result<(AttributeTable, Vec<FeatureBank>)> {
    spec.validate()?;
    let d = spec.latent_dim;
    let mut proj_rng = SeededRng::new(spec.projection_seed);
    let projections: Vec<Vec<f64>> = (0..spec.attributes)
        .map(|_| (0..d).map(|_| proj_rng.normal()).collect())
        .collect();
    let scale = 1.0 / (d as f64).sqrt();
    let mixings: Vec<Vec<f64>> = spec
        .views
        .iter()
        .map(|v| {
            let mut r = SeededRng::new(v.mixing_seed);
            (0..v.dim * d).map(|_| r.normal() * scale).collect()
        })
        .collect();

    let n = spec.total();
    let mut latent_rng = SeededRng::with_stream(spec.sample_seed, LATENT_STREAM);
    let mut noise_rngs: Vec<SeededRng> = (0..spec.views.len())
        .map(|k| SeededRng::with_stream(spec.sample_seed, NOISE_STREAM + k as u64))
        .collect();
    let mut banks: Vec<FeatureBank> = spec.views.iter().map(|v| FeatureBank::new(&v.name, v.dim)).collect();
    let mut ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n * spec.attributes);
    let mut z = vec![0.0; d];
    let mut obs = Vec::new();
    for i in 0..n {
        let id = format!("{:06}", i + 1);
        z.iter_mut().for_each(|v| *v = latent_rng.normal());
        for p in &projections {
            let dot: f64 = p.iter().zip(&z).map(|(a, b)| a * b).sum();
            labels.push(u8::from(dot > 0.0));
        }
        for (k, view) in spec.views.iter().enumerate() {
            obs.clear();
            for row in mixings[k].chunks_exact(d) {
                let clean: f64 = row.iter().zip(&z).map(|(a, b)| a * b).sum();
                obs.push((clean + view.noise * noise_rngs[k].normal()) as f32);
            }
            banks[k].insert(&id, &obs)?;
        }
        ids.push(id);
    }
    let names = (0..spec.attributes).map(|a| format!("attr{a:02}")).collect();
    let mut table = AttributeTable::new(names, ids, labels)?;
    let [n_train, n_val, _] = spec.counts;
    for (i, s) in table.splits.iter_mut().enumerate() {
        *s = if i < n_train {
            SplitTag::Train
        } else if i < n_train + n_val {
            SplitTag::Val
        } else {
            SplitTag::Test
        };
    }
    Ok((table, banks))
}
