//! Hybrid fusion network: one dense branch per feature kind, an additive
//! merge into the signature, and a shared trunk ending in sigmoid outputs.

mod backward;
mod io;
mod mask;

pub use backward::{net_backward, ExampleRef, NetGrad, TrunkGrad, BranchGrad};
pub use io::{load_encoder, load_net, read_encoder, read_net, save_encoder, save_net, write_encoder, write_net, HNET_MAGIC, HNET_VERSION};
pub use mask::FeatureMask;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::nn::{relu_in_place, sigmoid_scalar, DenseLayer};
use crate::rng::SeededRng;
use crate::{Error, Result, Scalar};

/// Most kinds a net may carry; masks travel as one byte.
pub const MAX_KINDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureKind {
    pub id: usize,
    pub name: String,
    pub input_dim: usize,
}

/// One feature instance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    pub kind: String,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub branch_hidden: usize,
    pub signature_dim: usize,
    pub trunk_hidden: [usize; 2],
    pub outputs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 4096/1024 branches, 1024/1024 trunk, 40 outputs.
    Paper,
    /// 64/32 branches, 32/32 trunk.
    Desk,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(Error::Config(format!("unknown profile `{other}` (paper|desk)"))),
        }
    }

    pub fn architecture(self, outputs: usize) -> Architecture {
        match self {
            Profile::Paper => Architecture {
                branch_hidden: 4096,
                signature_dim: 1024,
                trunk_hidden: [1024, 1024],
                outputs,
            },
            Profile::Desk => Architecture {
                branch_hidden: 64,
                signature_dim: 32,
                trunk_hidden: [32, 32],
                outputs,
            },
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.branch_hidden,
            self.signature_dim,
            self.trunk_hidden[0],
            self.trunk_hidden[1],
            self.outputs,
        ];
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("all layer widths must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchParams<T> {
    pub kind: FeatureKind,
    pub layer1: DenseLayer<T>,
    pub layer2: DenseLayer<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrunkParams<T> {
    pub layer3: DenseLayer<T>,
    pub layer4: DenseLayer<T>,
    pub out: DenseLayer<T>,
}

/// Post-merge vector sent from client to server.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature<T> {
    pub values: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    Branch(usize),
    Trunk,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Branch(k) => write!(f, "branch:{k}"),
            Group::Trunk => f.write_str("trunk"),
        }
    }
}

// Stream ids for parameter initialization; branch k uses BRANCH_INIT_STREAM + k.
const TRUNK_INIT_STREAM: u64 = 0x7472_756e_6b00_0000;
const BRANCH_INIT_STREAM: u64 = 0x6272_616e_6368_0000;

impl<T: Scalar> BranchParams<T> {
    pub fn init(kind: FeatureKind, arch: &Architecture, seed: u64) -> Self {
        let mut rng = SeededRng::with_stream(seed, BRANCH_INIT_STREAM + kind.id as u64);
        let layer1 = DenseLayer::glorot(kind.input_dim, arch.branch_hidden, &mut rng);
        let layer2 = DenseLayer::glorot(arch.branch_hidden, arch.signature_dim, &mut rng);
        Self { kind, layer1, layer2 }
    }

    pub fn signature_dim(&self) -> usize {
        self.layer2.out_dim()
    }

    pub(crate) fn layers(&self) -> [&DenseLayer<T>; 2] {
        [&self.layer1, &self.layer2]
    }

    pub(crate) fn layers_mut(&mut self) -> [&mut DenseLayer<T>; 2] {
        [&mut self.layer1, &mut self.layer2]
    }

    /// Hidden activations of both layers.
    pub(crate) fn forward_trace(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        let mut h1 = vec![T::zero(); self.layer1.out_dim()];
        self.layer1.forward_into(x, &mut h1);
        relu_in_place(&mut h1);
        let mut h2 = vec![T::zero(); self.layer2.out_dim()];
        self.layer2.forward_into(&h1, &mut h2);
        relu_in_place(&mut h2);
        (h1, h2)
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.kind.input_dim || x.len() != self.layer1.in_dim() {
            return Err(Error::shape("branch input", self.kind.input_dim, x.len()));
        }
        Ok(self.forward_trace(x).1)
    }
}

/// `relu(relu(x W1 + b1) W2 + b2)`, after checking the vector's kind.
pub fn branch_forward<T: Scalar>(x: &FeatureVector<T>, branch: &BranchParams<T>) -> Result<Vec<T>> {
    if x.kind != branch.kind.name {
        return Err(Error::KindMismatch {
            expected: branch.kind.name.clone(),
            actual: x.kind.clone(),
        });
    }
    branch.forward(&x.values)
}

/// Elementwise sum of branch outputs.
///
/// Each coordinate is accumulated in ascending value order, so the result is
/// bit-identical under any permutation of `hs`.
pub fn merge_sum<T: Scalar>(hs: &[&[T]]) -> Result<Signature<T>> {
    let first = hs.first().ok_or(Error::Empty("merge input"))?;
    let dim = first.len();
    if let Some(bad) = hs.iter().find(|h| h.len() != dim) {
        return Err(Error::shape("merge_sum", dim, bad.len()));
    }
    if hs.len() == 1 {
        return Ok(Signature { values: first.to_vec() });
    }
    let mut column = Vec::with_capacity(hs.len());
    let values = (0..dim)
        .map(|i| {
            column.clear();
            column.extend(hs.iter().map(|h| h[i]));
            column.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            column.iter().fold(T::zero(), |acc, v| acc + *v)
        })
        .collect();
    Ok(Signature { values })
}

pub(crate) struct TrunkTrace<T> {
    pub a3: Vec<T>,
    pub a4: Vec<T>,
    pub scores: Vec<T>,
}

impl<T: Scalar> TrunkParams<T> {
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let mut rng = SeededRng::with_stream(seed, TRUNK_INIT_STREAM);
        Self {
            layer3: DenseLayer::glorot(arch.signature_dim, arch.trunk_hidden[0], &mut rng),
            layer4: DenseLayer::glorot(arch.trunk_hidden[0], arch.trunk_hidden[1], &mut rng),
            out: DenseLayer::glorot(arch.trunk_hidden[1], arch.outputs, &mut rng),
        }
    }

    pub fn signature_dim(&self) -> usize {
        self.layer3.in_dim()
    }

    pub fn outputs(&self) -> usize {
        self.out.out_dim()
    }

    pub(crate) fn layers(&self) -> [&DenseLayer<T>; 3] {
        [&self.layer3, &self.layer4, &self.out]
    }

    pub(crate) fn layers_mut(&mut self) -> [&mut DenseLayer<T>; 3] {
        [&mut self.layer3, &mut self.layer4, &mut self.out]
    }

    pub(crate) fn forward_trace(&self, sig: &[T]) -> TrunkTrace<T> {
        let mut a3 = vec![T::zero(); self.layer3.out_dim()];
        self.layer3.forward_into(sig, &mut a3);
        relu_in_place(&mut a3);
        let mut a4 = vec![T::zero(); self.layer4.out_dim()];
        self.layer4.forward_into(&a3, &mut a4);
        relu_in_place(&mut a4);
        let mut scores = vec![T::zero(); self.out.out_dim()];
        self.out.forward_into(&a4, &mut scores);
        for s in &mut scores {
            *s = sigmoid_scalar(*s);
        }
        TrunkTrace { a3, a4, scores }
    }
}

/// Attribute scores in (0, 1) for one signature.
pub fn trunk_forward<T: Scalar>(sig: &Signature<T>, trunk: &TrunkParams<T>) -> Result<Vec<T>> {
    if sig.values.len() != trunk.signature_dim() {
        return Err(Error::shape("trunk signature", trunk.signature_dim(), sig.values.len()));
    }
    Ok(trunk.forward_trace(&sig.values).scores)
}

/// Client half: the feature-specific branches.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    pub arch: Architecture,
    pub profile: String,
    pub branches: Vec<BranchParams<T>>,
}

/// Feature inputs indexed by kind id; `None` for kinds not supplied.
pub type FeatureSet<'a, T> = [Option<&'a [T]>];

impl<T: Scalar> Encoder<T> {
    pub fn kinds(&self) -> impl Iterator<Item = &FeatureKind> {
        self.branches.iter().map(|b| &b.kind)
    }

    pub fn kind_count(&self) -> usize {
        self.branches.len()
    }

    pub fn kind_id(&self, name: &str) -> Result<usize> {
        self.branches
            .iter()
            .position(|b| b.kind.name == name)
            .ok_or_else(|| Error::UnknownKind(name.to_string()))
    }

    pub fn branch(&self, kind: usize) -> Result<&BranchParams<T>> {
        self.branches
            .get(kind)
            .ok_or_else(|| Error::UnknownKind(format!("#{kind}")))
    }

    /// Parses a comma-separated kind list into a mask.
    pub fn parse_mask(&self, list: &str) -> Result<FeatureMask> {
        let mut mask = FeatureMask::EMPTY;
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            mask = mask.with(self.kind_id(name)?);
        }
        if mask.is_empty() {
            return Err(Error::Empty("feature mask"));
        }
        Ok(mask)
    }

    /// Label like `FxL`: first letter of each kind, `x` where absent.
    pub fn mask_label(&self, mask: FeatureMask) -> String {
        self.branches
            .iter()
            .map(|b| {
                if mask.contains(b.kind.id) {
                    b.kind.name.chars().next().map_or('?', |c| c.to_ascii_uppercase())
                } else {
                    'x'
                }
            })
            .collect()
    }

    pub(crate) fn check_mask(&self, mask: FeatureMask) -> Result<()> {
        if mask.is_empty() {
            return Err(Error::Empty("feature mask"));
        }
        if let Some(bad) = mask.iter().find(|&k| k >= self.kind_count()) {
            return Err(Error::UnknownKind(format!("#{bad}")));
        }
        Ok(())
    }

    pub(crate) fn masked_input<'a>(
        &self,
        features: &FeatureSet<'a, T>,
        kind: usize,
    ) -> Result<&'a [T]> {
        let b = &self.branches[kind];
        let x = features
            .get(kind)
            .copied()
            .flatten()
            .ok_or_else(|| Error::MissingFeatures {
                kind: b.kind.name.clone(),
                id: "<input>".into(),
            })?;
        if x.len() != b.kind.input_dim {
            return Err(Error::shape("branch input", b.kind.input_dim, x.len()));
        }
        Ok(x)
    }

    /// Branch outputs for the masked kinds, merged.
    pub fn encode(&self, features: &FeatureSet<'_, T>, mask: FeatureMask) -> Result<Signature<T>> {
        self.check_mask(mask)?;
        let mut hs = Vec::with_capacity(mask.len());
        for k in mask.iter() {
            hs.push(self.branches[k].forward_trace(self.masked_input(features, k)?).1);
        }
        let refs: Vec<&[T]> = hs.iter().map(Vec::as_slice).collect();
        merge_sum(&refs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridNet<T> {
    pub encoder: Encoder<T>,
    pub trunk: TrunkParams<T>,
    pub attributes: Vec<String>,
    trainable: Vec<bool>,
}

impl<T: Scalar> HybridNet<T> {
    /// Fresh network. Kind ids are assigned in order.
    pub fn new(
        profile: &str,
        arch: Architecture,
        kinds: &[(String, usize)],
        attributes: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        arch.validate()?;
        if kinds.is_empty() {
            return Err(Error::Empty("feature kinds"));
        }
        if kinds.len() > MAX_KINDS {
            return Err(Error::Config(format!("at most {MAX_KINDS} feature kinds")));
        }
        if attributes.len() != arch.outputs {
            return Err(Error::shape("attribute names", arch.outputs, attributes.len()));
        }
        let mut branches = Vec::with_capacity(kinds.len());
        for (id, (name, dim)) in kinds.iter().enumerate() {
            validate_name(name)?;
            if *dim == 0 {
                return Err(Error::Config(format!("kind `{name}` has zero input dim")));
            }
            if kinds[..id].iter().any(|(n, _)| n == name) {
                return Err(Error::Config(format!("duplicate kind `{name}`")));
            }
            let kind = FeatureKind {
                id,
                name: name.clone(),
                input_dim: *dim,
            };
            branches.push(BranchParams::init(kind, &arch, seed));
        }
        let trunk = TrunkParams::init(&arch, seed);
        Ok(Self {
            trainable: vec![true; branches.len() + 1],
            encoder: Encoder {
                arch,
                profile: profile.to_string(),
                branches,
            },
            trunk,
            attributes,
        })
    }

    pub fn from_parts(encoder: Encoder<T>, trunk: TrunkParams<T>, attributes: Vec<String>) -> Result<Self> {
        let s = trunk.signature_dim();
        for b in &encoder.branches {
            if b.signature_dim() != s {
                return Err(Error::shape("branch signature dim", s, b.signature_dim()));
            }
        }
        if attributes.len() != trunk.outputs() {
            return Err(Error::shape("attribute names", trunk.outputs(), attributes.len()));
        }
        Ok(Self {
            trainable: vec![true; encoder.branches.len() + 1],
            encoder,
            trunk,
            attributes,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.encoder.arch
    }

    pub fn kinds(&self) -> impl Iterator<Item = &FeatureKind> {
        self.encoder.kinds()
    }

    pub fn kind_count(&self) -> usize {
        self.encoder.kind_count()
    }

    pub fn kind_id(&self, name: &str) -> Result<usize> {
        self.encoder.kind_id(name)
    }

    pub fn full_mask(&self) -> FeatureMask {
        FeatureMask::all(self.kind_count())
    }

    pub fn mask_label(&self, mask: FeatureMask) -> String {
        self.encoder.mask_label(mask)
    }

    pub fn signature_dim(&self) -> usize {
        self.trunk.signature_dim()
    }

    /// Appends a freshly initialized branch for a new kind; existing groups are untouched.
    pub fn add_kind(&mut self, name: &str, input_dim: usize, seed: u64) -> Result<usize> {
        validate_name(name)?;
        if self.encoder.kind_id(name).is_ok() {
            return Err(Error::Config(format!("duplicate kind `{name}`")));
        }
        if self.kind_count() >= MAX_KINDS {
            return Err(Error::Config(format!("at most {MAX_KINDS} feature kinds")));
        }
        if input_dim == 0 {
            return Err(Error::Config(format!("kind `{name}` has zero input dim")));
        }
        let id = self.kind_count();
        let kind = FeatureKind {
            id,
            name: name.to_string(),
            input_dim,
        };
        let arch = self.encoder.arch;
        self.encoder.branches.push(BranchParams::init(kind, &arch, seed));
        self.trainable.insert(id, true);
        Ok(id)
    }

    fn group_index(&self, group: Group) -> Result<usize> {
        match group {
            Group::Branch(k) if k < self.kind_count() => Ok(k),
            Group::Trunk => Ok(self.kind_count()),
            other => Err(Error::UnknownGroup(other.to_string())),
        }
    }

    /// Parses `trunk`, `branch:<kind>` or a bare kind name.
    pub fn parse_group(&self, s: &str) -> Result<Group> {
        if s == "trunk" {
            return Ok(Group::Trunk);
        }
        let name = s.strip_prefix("branch:").unwrap_or(s);
        self.encoder
            .kind_id(name)
            .map(Group::Branch)
            .map_err(|_| Error::UnknownGroup(s.to_string()))
    }

    pub fn groups(&self) -> impl Iterator<Item = Group> {
        (0..self.kind_count()).map(Group::Branch).chain(std::iter::once(Group::Trunk))
    }

    pub fn set_trainable(&mut self, group: Group, flag: bool) -> Result<()> {
        let i = self.group_index(group)?;
        self.trainable[i] = flag;
        Ok(())
    }

    pub fn is_trainable(&self, group: Group) -> bool {
        self.group_index(group).map(|i| self.trainable[i]).unwrap_or(false)
    }

    /// Marks exactly `groups` trainable.
    pub fn train_only(&mut self, groups: &[Group]) -> Result<()> {
        for g in groups {
            self.group_index(*g)?;
        }
        for g in self.groups().collect::<Vec<_>>() {
            self.set_trainable(g, groups.contains(&g))?;
        }
        Ok(())
    }

    pub fn any_trainable(&self) -> bool {
        self.trainable.iter().any(|&t| t)
    }

    pub fn forward(&self, features: &FeatureSet<'_, T>, mask: FeatureMask) -> Result<(Signature<T>, Vec<T>)> {
        let sig = self.encoder.encode(features, mask)?;
        let scores = self.trunk.forward_trace(&sig.values).scores;
        Ok((sig, scores))
    }

    /// All parameters in serialization order (branches by kind id, then trunk).
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::new();
        for b in &self.encoder.branches {
            for l in b.layers() {
                out.extend(l.params().copied());
            }
        }
        for l in self.trunk.layers() {
            out.extend(l.params().copied());
        }
        out
    }

    pub fn set_params(&mut self, values: &[T]) -> Result<()> {
        let total: usize = self.params_len();
        if values.len() != total {
            return Err(Error::shape("set_params", total, values.len()));
        }
        let mut it = values.iter();
        for b in &mut self.encoder.branches {
            for l in b.layers_mut() {
                for p in l.params_mut() {
                    *p = *it.next().expect("length checked");
                }
            }
        }
        for l in self.trunk.layers_mut() {
            for p in l.params_mut() {
                *p = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn params_len(&self) -> usize {
        self.encoder
            .branches
            .iter()
            .flat_map(|b| b.layers())
            .chain(self.trunk.layers())
            .map(DenseLayer::param_count)
            .sum()
    }

    /// Copies one group's parameters from `other`, which must have the same shapes.
    pub fn copy_group_from(&mut self, other: &HybridNet<T>, group: Group) -> Result<()> {
        match group {
            Group::Branch(k) => {
                let src = other.encoder.branch(k)?;
                let dst = self
                    .encoder
                    .branches
                    .get_mut(k)
                    .ok_or_else(|| Error::UnknownGroup(group.to_string()))?;
                if dst.kind != src.kind {
                    return Err(Error::KindMismatch {
                        expected: dst.kind.name.clone(),
                        actual: src.kind.name.clone(),
                    });
                }
                *dst = src.clone();
            }
            Group::Trunk => self.trunk = other.trunk.clone(),
        }
        Ok(())
    }
}

/// Masked branch outputs, merged, through the trunk.
pub fn net_forward<T: Scalar>(
    features: &FeatureSet<'_, T>,
    mask: FeatureMask,
    net: &HybridNet<T>,
) -> Result<(Signature<T>, Vec<T>)> {
    net.forward(features, mask)
}

pub(crate) fn validate_name(name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(|c| c == ',' || c == ':' || c == '=' || c.is_whitespace()) {
        return Err(Error::Config(format!("invalid kind name `{name}`")));
    }
    Ok(())
}
