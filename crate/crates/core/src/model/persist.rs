//! Bundle persistence: one directory per group holding the encoder and
//! head parameters, the training configuration as key=value lines, and the
//! tokenizer fingerprint; a manifest lists the groups and regime, and the
//! vocabulary rides along so prediction can reconstruct the tokenizer.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{
    Encoder, GroupKey, ModelBundle, ModelError, ReferenceEncoder, ReferenceEncoderConfig, Regime,
    RelationHead, ReprScheme, Strategy, TrainConfig, TrainedModel,
};
use crate::encoding::{ClsPlacement, Tokenizer, WordTokenizer};

const ENCODER_MAGIC: u64 = 0x5245_4c58_4545_4e43; // "RELXE ENC"
const HEAD_MAGIC: u64 = 0x5245_4c58_4548_4544; // "RELXE HED"

fn io_err(path: &Path, e: std::io::Error) -> ModelError {
    ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn corrupt(path: &Path, reason: impl Into<String>) -> ModelError {
    ModelError::CorruptBundle {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Persist a trained bundle and its tokenizer under `dir`.
pub fn save_bundle(
    bundle: &ModelBundle<ReferenceEncoder>,
    tokenizer: &WordTokenizer,
    dir: &Path,
) -> Result<(), ModelError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let group_list = bundle
        .groups
        .keys()
        .map(GroupKey::to_string)
        .collect::<Vec<_>>()
        .join(",");
    let manifest = format!(
        "format=1\nregime={}\ngroups={}\ntokenizer_lowercase={}\ntokenizer_cls={}\ntokenizer_fingerprint={}\n",
        bundle.regime,
        group_list,
        tokenizer.lowercase(),
        match tokenizer.cls_placement() {
            ClsPlacement::Start => "start",
            ClsPlacement::End => "end",
        },
        tokenizer.fingerprint(),
    );
    let manifest_path = dir.join("manifest.txt");
    std::fs::write(&manifest_path, manifest).map_err(|e| io_err(&manifest_path, e))?;
    let vocab_path = dir.join("vocab.txt");
    std::fs::write(&vocab_path, tokenizer.vocab_lines()).map_err(|e| io_err(&vocab_path, e))?;

    for (key, model) in &bundle.groups {
        let group_dir = dir.join(format!("group-{key}"));
        std::fs::create_dir_all(&group_dir).map_err(|e| io_err(&group_dir, e))?;
        write_config(&group_dir.join("config.txt"), model)?;
        write_encoder(&group_dir.join("encoder.bin"), &model.encoder)?;
        write_head(&group_dir.join("head.bin"), &model.head)?;
    }
    Ok(())
}

/// Load a bundle and its tokenizer from `dir`.
pub fn load_bundle(
    dir: &Path,
) -> Result<(ModelBundle<ReferenceEncoder>, WordTokenizer), ModelError> {
    let manifest_path = dir.join("manifest.txt");
    let manifest_text =
        std::fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let manifest = parse_kv(&manifest_text);
    let fetch = |key: &str| -> Result<&String, ModelError> {
        manifest
            .get(key)
            .ok_or_else(|| corrupt(&manifest_path, format!("missing key {key}")))
    };

    let regime = Regime::parse(fetch("regime")?)
        .ok_or_else(|| corrupt(&manifest_path, "bad regime"))?;
    let lowercase = fetch("tokenizer_lowercase")? == "true";
    let placement = if fetch("tokenizer_cls")? == "end" {
        ClsPlacement::End
    } else {
        ClsPlacement::Start
    };
    let vocab_path = dir.join("vocab.txt");
    let vocab = std::fs::read_to_string(&vocab_path).map_err(|e| io_err(&vocab_path, e))?;
    let tokenizer =
        WordTokenizer::from_vocab_lines(&vocab, lowercase).with_cls_placement(placement);
    if &tokenizer.fingerprint() != fetch("tokenizer_fingerprint")? {
        return Err(corrupt(&vocab_path, "vocabulary does not match manifest fingerprint"));
    }

    let mut groups = BTreeMap::new();
    let group_list = fetch("groups")?;
    for name in group_list.split(',').filter(|s| !s.is_empty()) {
        let key = GroupKey::parse(name)
            .ok_or_else(|| corrupt(&manifest_path, format!("bad group key {name}")))?;
        let group_dir = dir.join(format!("group-{name}"));
        let (config, fingerprint, classes) = read_config(&group_dir.join("config.txt"))?;
        let encoder = read_encoder(&group_dir.join("encoder.bin"))?;
        let head = read_head(&group_dir.join("head.bin"), config.scheme, classes)?;
        groups.insert(
            key,
            TrainedModel {
                encoder,
                head,
                config,
                tokenizer_fingerprint: fingerprint,
            },
        );
    }
    Ok((ModelBundle { regime, groups }, tokenizer))
}

fn write_config(path: &Path, model: &TrainedModel<ReferenceEncoder>) -> Result<(), ModelError> {
    let c = &model.config;
    let mut out = String::new();
    out.push_str(&format!("strategy={}\n", c.strategy));
    out.push_str(&format!("scheme={}\n", c.scheme));
    out.push_str(&format!("regime={}\n", c.regime));
    out.push_str(&format!("learning_rate={}\n", c.learning_rate));
    out.push_str(&format!("seed={}\n", c.seed));
    out.push_str(&format!("epochs={}\n", c.epochs));
    out.push_str(&format!("batch_size={}\n", c.batch_size));
    out.push_str(&format!("folds={}\n", c.folds));
    out.push_str(&format!("max_csd={}\n", c.max_csd));
    out.push_str(&format!("max_len={}\n", c.max_len));
    out.push_str(&format!("class_weighting={}\n", c.class_weighting));
    out.push_str(&format!("train_empty_strata={}\n", c.train_empty_strata));
    out.push_str(&format!("tokenizer_fingerprint={}\n", model.tokenizer_fingerprint));
    for class in model.head.classes() {
        out.push_str(&format!("class={class}\n"));
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

#[allow(clippy::type_complexity)]
fn read_config(path: &Path) -> Result<(TrainConfig, String, Vec<String>), ModelError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let kv = parse_kv(&text);
    let classes: Vec<String> = text
        .lines()
        .filter_map(|l| l.strip_prefix("class="))
        .map(str::to_string)
        .collect();
    let get = |key: &str| -> Result<&String, ModelError> {
        kv.get(key).ok_or_else(|| corrupt(path, format!("missing key {key}")))
    };
    let parse_num = |key: &str| -> Result<usize, ModelError> {
        get(key)?.parse().map_err(|_| corrupt(path, format!("bad number for {key}")))
    };
    let config = TrainConfig {
        strategy: Strategy::parse(get("strategy")?)
            .ok_or_else(|| corrupt(path, "bad strategy"))?,
        scheme: ReprScheme::parse(get("scheme")?).ok_or_else(|| corrupt(path, "bad scheme"))?,
        regime: Regime::parse(get("regime")?).ok_or_else(|| corrupt(path, "bad regime"))?,
        learning_rate: get("learning_rate")?
            .parse()
            .map_err(|_| corrupt(path, "bad learning_rate"))?,
        seed: get("seed")?.parse().map_err(|_| corrupt(path, "bad seed"))?,
        epochs: parse_num("epochs")?,
        batch_size: parse_num("batch_size")?,
        folds: parse_num("folds")?,
        max_csd: parse_num("max_csd")?,
        max_len: parse_num("max_len")?,
        class_weighting: get("class_weighting")? == "true",
        train_empty_strata: get("train_empty_strata")? == "true",
    };
    if classes.is_empty() {
        return Err(corrupt(path, "no classes listed"));
    }
    Ok((config, get("tokenizer_fingerprint")?.clone(), classes))
}

fn parse_kv(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|line| {
            let (k, v) = line.split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn write_u64s(out: &mut impl Write, values: &[u64]) -> std::io::Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_f64s(out: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

fn read_u64(input: &mut impl Read) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64s(input: &mut impl Read, count: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    input.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn write_encoder(path: &Path, encoder: &ReferenceEncoder) -> Result<(), ModelError> {
    let c = encoder.config();
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let params = encoder.parameters();
    write_u64s(
        &mut out,
        &[
            ENCODER_MAGIC,
            c.layers as u64,
            c.heads as u64,
            c.hidden as u64,
            c.feed_forward as u64,
            c.vocab_size as u64,
            c.max_positions as u64,
            c.seed,
            params.len() as u64,
        ],
    )
    .and_then(|_| write_f64s(&mut out, &params))
    .map_err(|e| io_err(path, e))
}

fn read_encoder(path: &Path) -> Result<ReferenceEncoder, ModelError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut input = std::io::BufReader::new(file);
    let mut next = || read_u64(&mut input).map_err(|e| io_err(path, e));
    if next()? != ENCODER_MAGIC {
        return Err(corrupt(path, "bad encoder magic"));
    }
    let config = ReferenceEncoderConfig {
        layers: next()? as usize,
        heads: next()? as usize,
        hidden: next()? as usize,
        feed_forward: next()? as usize,
        vocab_size: next()? as usize,
        max_positions: next()? as usize,
        seed: next()?,
    };
    let count = next()? as usize;
    let params = read_f64s(&mut input, count).map_err(|e| io_err(path, e))?;
    let mut encoder = ReferenceEncoder::new(config)?;
    if count != encoder.num_parameters() {
        return Err(corrupt(path, "parameter count does not match shape"));
    }
    encoder.set_parameters(&params)?;
    Ok(encoder)
}

fn write_head(path: &Path, head: &RelationHead) -> Result<(), ModelError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_u64s(
        &mut out,
        &[HEAD_MAGIC, head.input_dim() as u64, head.num_classes() as u64],
    )
    .and_then(|_| write_f64s(&mut out, &head.parameters()))
    .map_err(|e| io_err(path, e))
}

fn read_head(
    path: &Path,
    scheme: ReprScheme,
    classes: Vec<String>,
) -> Result<RelationHead, ModelError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut input = std::io::BufReader::new(file);
    let mut next = || read_u64(&mut input).map_err(|e| io_err(path, e));
    if next()? != HEAD_MAGIC {
        return Err(corrupt(path, "bad head magic"));
    }
    let dim = next()? as usize;
    let ncls = next()? as usize;
    if ncls != classes.len() {
        return Err(corrupt(path, "class count does not match config"));
    }
    let flat = read_f64s(&mut input, dim * ncls + ncls).map_err(|e| io_err(path, e))?;
    let weight = Array2::from_shape_vec((dim, ncls), flat[..dim * ncls].to_vec())
        .map_err(|_| corrupt(path, "bad weight shape"))?;
    let bias = Array1::from_vec(flat[dim * ncls..].to_vec());
    RelationHead::from_parts(scheme, classes, weight, bias)
}
