//! `HNET` model files.
//!
//! ```text
//! "HNET"  u16 version  u32 meta_len  meta (UTF-8, key=value lines)
//! then per dense layer: weights matrix, bias matrix (1 x out)
//! matrix := u32 rows  u32 cols  rows*cols f32 (little-endian, row-major)
//! ```
//!
//! Layers appear in declaration order: each branch (layer1, layer2) by kind
//! id, then the trunk (layer3, layer4, out) when `part=full`. Encoder files
//! (`part=encoder`) stop after the branches and are what clients load.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::codec::{ByteReader, ByteWriter};
use crate::nn::DenseLayer;
use crate::{Error, Result, Scalar};

use super::{validate_name, Architecture, BranchParams, Encoder, FeatureKind, HybridNet, TrunkParams};

pub const HNET_MAGIC: &[u8; 4] = b"HNET";
pub const HNET_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Full,
    Encoder,
}

struct Meta {
    part: Part,
    profile: String,
    arch: Architecture,
    kinds: Vec<(String, usize)>,
    attributes: Vec<String>,
}

fn render_meta(meta: &Meta) -> String {
    let mut s = String::new();
    let part = match meta.part {
        Part::Full => "full",
        Part::Encoder => "encoder",
    };
    s.push_str(&format!("part={part}\n"));
    s.push_str(&format!("profile={}\n", meta.profile));
    s.push_str(&format!("branch_hidden={}\n", meta.arch.branch_hidden));
    s.push_str(&format!("signature_dim={}\n", meta.arch.signature_dim));
    s.push_str(&format!(
        "trunk_hidden={},{}\n",
        meta.arch.trunk_hidden[0], meta.arch.trunk_hidden[1]
    ));
    s.push_str(&format!("outputs={}\n", meta.arch.outputs));
    for (name, dim) in &meta.kinds {
        s.push_str(&format!("kind={name}:{dim}\n"));
    }
    for a in &meta.attributes {
        s.push_str(&format!("attribute={a}\n"));
    }
    s
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::Format(format!("HNET meta `{key}`: bad integer `{v}`")))
}

fn parse_meta(text: &str) -> Result<Meta> {
    let mut part = None;
    let mut profile = None;
    let mut arch = Architecture {
        branch_hidden: 0,
        signature_dim: 0,
        trunk_hidden: [0, 0],
        outputs: 0,
    };
    let mut kinds = Vec::new();
    let mut attributes = Vec::new();
    for line in text.lines() {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("HNET meta line `{line}`")))?;
        match key {
            "part" => {
                part = Some(match value {
                    "full" => Part::Full,
                    "encoder" => Part::Encoder,
                    other => return Err(Error::Format(format!("HNET part `{other}`"))),
                })
            }
            "profile" => profile = Some(value.to_string()),
            "branch_hidden" => arch.branch_hidden = parse_usize(key, value)?,
            "signature_dim" => arch.signature_dim = parse_usize(key, value)?,
            "trunk_hidden" => {
                let (a, b) = value
                    .split_once(',')
                    .ok_or_else(|| Error::Format("HNET trunk_hidden".into()))?;
                arch.trunk_hidden = [parse_usize(key, a)?, parse_usize(key, b)?];
            }
            "outputs" => arch.outputs = parse_usize(key, value)?,
            "kind" => {
                let (name, dim) = value
                    .rsplit_once(':')
                    .ok_or_else(|| Error::Format(format!("HNET kind `{value}`")))?;
                kinds.push((name.to_string(), parse_usize(key, dim)?));
            }
            "attribute" => attributes.push(value.to_string()),
            other => return Err(Error::Format(format!("HNET meta key `{other}`"))),
        }
    }
    arch.validate().map_err(|e| Error::Format(e.to_string()))?;
    Ok(Meta {
        part: part.ok_or_else(|| Error::Format("HNET meta lacks `part`".into()))?,
        profile: profile.ok_or_else(|| Error::Format("HNET meta lacks `profile`".into()))?,
        arch,
        kinds,
        attributes,
    })
}

fn write_layer<T: Scalar>(w: &mut ByteWriter, layer: &DenseLayer<T>) {
    w.u32(layer.in_dim() as u32);
    w.u32(layer.out_dim() as u32);
    for v in layer.weights() {
        w.f32(v.as_f32());
    }
    w.u32(1);
    w.u32(layer.out_dim() as u32);
    for v in layer.bias() {
        w.f32(v.as_f32());
    }
}

fn read_matrix<T: Scalar>(r: &mut ByteReader<'_>, rows: usize, cols: usize) -> Result<Vec<T>> {
    let got_rows = r.u32()? as usize;
    let got_cols = r.u32()? as usize;
    if (got_rows, got_cols) != (rows, cols) {
        return Err(Error::Format(format!(
            "HNET matrix is {got_rows}x{got_cols}, expected {rows}x{cols}"
        )));
    }
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("HNET matrix size overflow".into()))?;
    r.ensure(n.saturating_mul(4))?;
    (0..n).map(|_| r.f32().map(T::of_f32)).collect()
}

fn read_layer<T: Scalar>(r: &mut ByteReader<'_>, in_dim: usize, out_dim: usize) -> Result<DenseLayer<T>> {
    let w = read_matrix(r, in_dim, out_dim)?;
    let b = read_matrix(r, 1, out_dim)?;
    DenseLayer::from_parts(in_dim, out_dim, w, b).map_err(|e| Error::Format(e.to_string()))
}

fn encode<T: Scalar>(encoder: &Encoder<T>, trunk: Option<(&TrunkParams<T>, &[String])>) -> Result<Vec<u8>> {
    for a in trunk.map(|t| t.1).unwrap_or(&[]) {
        if a.contains('\n') || a.is_empty() {
            return Err(Error::Config(format!("attribute name `{a}` cannot be stored")));
        }
    }
    let meta = Meta {
        part: if trunk.is_some() { Part::Full } else { Part::Encoder },
        profile: encoder.profile.clone(),
        arch: encoder.arch,
        kinds: encoder
            .kinds()
            .map(|k| (k.name.clone(), k.input_dim))
            .collect(),
        attributes: trunk.map(|t| t.1.to_vec()).unwrap_or_default(),
    };
    let text = render_meta(&meta);
    let mut w = ByteWriter::new();
    w.bytes(HNET_MAGIC);
    w.u16(HNET_VERSION);
    w.str(&text);
    for b in &encoder.branches {
        write_layer(&mut w, &b.layer1);
        write_layer(&mut w, &b.layer2);
    }
    if let Some((t, _)) = trunk {
        write_layer(&mut w, &t.layer3);
        write_layer(&mut w, &t.layer4);
        write_layer(&mut w, &t.out);
    }
    Ok(w.into_inner())
}

fn decode<T: Scalar>(bytes: &[u8]) -> Result<(Encoder<T>, Option<(TrunkParams<T>, Vec<String>)>)> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != HNET_MAGIC {
        return Err(Error::Format("bad HNET magic".into()));
    }
    let version = r.u16()?;
    if version != HNET_VERSION {
        return Err(Error::Format(format!("unsupported HNET version {version}")));
    }
    let meta = parse_meta(&r.str()?)?;
    if meta.kinds.is_empty() {
        return Err(Error::Format("HNET file has no feature kinds".into()));
    }
    let arch = meta.arch;
    let mut branches = Vec::with_capacity(meta.kinds.len());
    for (id, (name, dim)) in meta.kinds.into_iter().enumerate() {
        validate_name(&name).map_err(|e| Error::Format(e.to_string()))?;
        let layer1 = read_layer(&mut r, dim, arch.branch_hidden)?;
        let layer2 = read_layer(&mut r, arch.branch_hidden, arch.signature_dim)?;
        branches.push(BranchParams {
            kind: FeatureKind {
                id,
                name,
                input_dim: dim,
            },
            layer1,
            layer2,
        });
    }
    let encoder = Encoder {
        arch,
        profile: meta.profile,
        branches,
    };
    let trunk = match meta.part {
        Part::Encoder => None,
        Part::Full => {
            if meta.attributes.len() != arch.outputs {
                return Err(Error::Format(format!(
                    "HNET declares {} outputs but {} attribute names",
                    arch.outputs,
                    meta.attributes.len()
                )));
            }
            let trunk = TrunkParams {
                layer3: read_layer(&mut r, arch.signature_dim, arch.trunk_hidden[0])?,
                layer4: read_layer(&mut r, arch.trunk_hidden[0], arch.trunk_hidden[1])?,
                out: read_layer(&mut r, arch.trunk_hidden[1], arch.outputs)?,
            };
            Some((trunk, meta.attributes))
        }
    };
    r.finish()?;
    Ok((encoder, trunk))
}

pub fn write_net<T: Scalar>(net: &HybridNet<T>) -> Result<Vec<u8>> {
    encode(&net.encoder, Some((&net.trunk, &net.attributes)))
}

/// Parses a full model. All groups come back trainable.
pub fn read_net<T: Scalar>(bytes: &[u8]) -> Result<HybridNet<T>> {
    match decode(bytes)? {
        (encoder, Some((trunk, attributes))) => HybridNet::from_parts(encoder, trunk, attributes),
        (_, None) => Err(Error::Format("HNET file holds only branches, not a full model".into())),
    }
}

/// Branch-only file holding the kinds listed (all kinds when `kinds` is `None`).
pub fn write_encoder<T: Scalar>(net: &HybridNet<T>, kinds: Option<&[&str]>) -> Result<Vec<u8>> {
    let mut enc = net.encoder.clone();
    if let Some(names) = kinds {
        for n in names {
            net.kind_id(n)?;
        }
        enc.branches.retain(|b| names.contains(&b.kind.name.as_str()));
        for (i, b) in enc.branches.iter_mut().enumerate() {
            b.kind.id = i;
        }
    }
    if enc.branches.is_empty() {
        return Err(Error::Empty("encoder kinds"));
    }
    encode(&enc, None)
}

/// Reads the branch half of either a full model or an encoder file.
pub fn read_encoder<T: Scalar>(bytes: &[u8]) -> Result<Encoder<T>> {
    decode(bytes).map(|(enc, _)| enc)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp~");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

pub fn save_net<T: Scalar>(net: &HybridNet<T>, path: &Path) -> Result<()> {
    write_atomic(path, &write_net(net)?)
}

pub fn load_net<T: Scalar>(path: &Path) -> Result<HybridNet<T>> {
    read_net(&read_file(path)?)
}

pub fn save_encoder<T: Scalar>(net: &HybridNet<T>, kinds: Option<&[&str]>, path: &Path) -> Result<()> {
    write_atomic(path, &write_encoder(net, kinds)?)
}

pub fn load_encoder<T: Scalar>(path: &Path) -> Result<Encoder<T>> {
    read_encoder(&read_file(path)?)
}

