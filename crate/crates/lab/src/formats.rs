//! PGM previews, lossless DPLF rasters and DPLW parameter checkpoints.

use std::fs;
use std::path::Path;

use dpl_core::dpl::{DplModel, ModelKind, CONTEXT_PREFIX, NOISE_PREFIX};
use dpl_core::nn::{AdamConfig, ParamStore, Shape, Tensor};
use dpl_core::Image;

use crate::error::{LabError, LabResult};

pub const DPLF_MAGIC: &[u8; 4] = b"DPLF";
pub const DPLW_MAGIC: &[u8; 4] = b"DPLW";
pub const FORMAT_VERSION: u8 = 1;
pub const DPLF_HEADER_LEN: usize = 13;

/// Format error without a path; callers attach one.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct FormatError(pub String);

type FmtResult<T> = Result<T, FormatError>;

fn ferr<T>(msg: impl Into<String>) -> FmtResult<T> {
    Err(FormatError(msg.into()))
}

fn read_file(path: &Path) -> LabResult<Vec<u8>> {
    fs::read(path).map_err(|e| LabError::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> LabResult<()> {
    fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}

/// 8-bit quantization, rounding half away from zero.
pub fn quantize(v: f32) -> u8 {
    (v as f64 * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v)));
    out
}

/// Binary PGM with maxval 255; comments after `#` are skipped.
pub fn decode_pgm(bytes: &[u8]) -> FmtResult<Image> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return ferr("not a binary PGM (expected P5 magic)");
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return ferr("malformed PGM header");
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError("PGM header number out of range".into()))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return ferr(format!("unsupported PGM maxval {maxval}"));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return ferr("malformed PGM header");
    }
    pos += 1;
    let need = w.checked_mul(h).ok_or_else(|| FormatError("PGM too large".into()))?;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return ferr(format!("truncated PGM payload: {} of {} bytes", payload.len(), need));
    }
    let data = payload[..need].iter().map(|&b| b as f32 / 255.0).collect();
    Image::new(w, h, data).map_err(|e| FormatError(e.to_string()))
}

pub fn save_pgm(img: &Image, path: &Path) -> LabResult<()> {
    write_file(path, &encode_pgm(img))
}

pub fn load_pgm(path: &Path) -> LabResult<Image> {
    decode_pgm(&read_file(path)?).map_err(|e| LabError::format(path, e.0))
}

pub fn encode_dplf(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(DPLF_HEADER_LEN + 4 * img.len());
    out.extend_from_slice(DPLF_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    for v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], pos: usize) -> u32 {
    u32::from_le_bytes(bytes[pos..pos + 4].try_into().expect("four bytes"))
}

pub fn decode_dplf(bytes: &[u8]) -> FmtResult<Image> {
    if bytes.len() < DPLF_HEADER_LEN {
        return ferr("file shorter than the DPLF header");
    }
    if &bytes[..4] != DPLF_MAGIC {
        return ferr("bad magic (expected DPLF)");
    }
    if bytes[4] != FORMAT_VERSION {
        return ferr(format!("unsupported DPLF version {}", bytes[4]));
    }
    let (w, h) = (u32_at(bytes, 5) as usize, u32_at(bytes, 9) as usize);
    let payload = &bytes[DPLF_HEADER_LEN..];
    if Some(payload.len()) != w.checked_mul(h).and_then(|n| n.checked_mul(4)) {
        return ferr(format!("payload of {} bytes does not match {}x{}", payload.len(), w, h));
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Image::new(w, h, data).map_err(|e| FormatError(e.to_string()))
}

pub fn save_raw(img: &Image, path: &Path) -> LabResult<()> {
    write_file(path, &encode_dplf(img))
}

pub fn load_raw(path: &Path) -> LabResult<Image> {
    decode_dplf(&read_file(path)?).map_err(|e| LabError::format(path, e.0))
}

/// Loads `.pgm` or DPLF by extension.
pub fn load_image(path: &Path) -> LabResult<Image> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => load_pgm(path),
        _ => load_raw(path),
    }
}

fn logical_dims(name: &str, s: Shape) -> Vec<usize> {
    if name.ends_with(".bias") {
        vec![s.n]
    } else {
        s.dims().to_vec()
    }
}

/// `DPLW`, version, u32 entry count, then per entry: u32 name length, name,
/// u32 rank, rank × u32 dims, f32 payload. All little-endian.
pub fn encode_dplw(params: &ParamStore<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(DPLW_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let dims = logical_dims(name, t.shape());
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> FmtResult<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return ferr("truncated DPLW file");
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> FmtResult<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn decode_dplw(bytes: &[u8]) -> FmtResult<ParamStore<f32>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != DPLW_MAGIC {
        return ferr("bad magic (expected DPLW)");
    }
    let version = c.take(1)?[0];
    if version != FORMAT_VERSION {
        return ferr(format!("unsupported DPLW version {version}"));
    }
    let count = c.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = c.u32()?;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| FormatError("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = c.u32()?;
        if rank == 0 || rank > 4 {
            return ferr(format!("parameter {name} has unsupported rank {rank}"));
        }
        let mut dims = [1usize; 4];
        for d in dims.iter_mut().take(rank) {
            *d = c.u32()?;
        }
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let n = shape.numel();
        let raw = c.take(n.checked_mul(4).ok_or_else(|| FormatError("tensor too large".into()))?)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        let tensor = Tensor::new(shape, data).map_err(|e| FormatError(e.to_string()))?;
        store.register(name, tensor).map_err(|e| FormatError(e.to_string()))?;
    }
    if c.pos != bytes.len() {
        return ferr("trailing bytes after the last DPLW entry");
    }
    Ok(store)
}

/// Model kind, depth and base width implied by a parameter set.
pub fn infer_architecture(params: &ParamStore<f32>) -> FmtResult<(ModelKind, usize, usize)> {
    let kind = if params.iter().any(|(n, _)| n.starts_with(NOISE_PREFIX)) {
        ModelKind::Dpl
    } else {
        ModelKind::UnetBaseline
    };
    let depth = (0..)
        .take_while(|i| params.get_id(&format!("{CONTEXT_PREFIX}enc{i}.conv1.weight")).is_some())
        .count();
    let Some(first) = params.get_id(&format!("{CONTEXT_PREFIX}enc0.conv1.weight")) else {
        return ferr("checkpoint has no context network");
    };
    Ok((kind, depth, params.value(first).shape().n))
}

pub fn save_model(model: &DplModel<f32>, path: &Path) -> LabResult<()> {
    write_file(path, &encode_dplw(model.params()))
}

pub fn load_model(path: &Path) -> LabResult<DplModel<f32>> {
    let bytes = read_file(path)?;
    let params = decode_dplw(&bytes).map_err(|e| LabError::format(path, e.0))?;
    let (kind, depth, base) = infer_architecture(&params).map_err(|e| LabError::format(path, e.0))?;
    DplModel::from_params(kind, depth, base, params, AdamConfig::default())
        .map_err(|e| LabError::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pgm_bytes_map_to_unit_interval() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0u8, 255, 128, 64]);
        let img = decode_pgm(&bytes).unwrap();
        let expected = [0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0];
        for (a, b) in img.data().iter().zip(expected) {
            assert_eq!(*a, b as f32);
        }
        assert!((img.data()[2] - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn pgm_rejects_ascii_and_truncation() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00\x01").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }

    #[test]
    fn pgm_encoding() {
        let img = Image::new(2, 1, vec![0.0, 1.0]).unwrap();
        let bytes = encode_pgm(&img);
        assert_eq!(&bytes[..11], b"P5\n2 1\n255\n");
        assert_eq!(&bytes[11..], &[0, 255]);
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(-0.2), 0);
        assert_eq!(quantize(1.7), 255);
    }

    #[test]
    fn pgm_skips_comments() {
        let img = decode_pgm(b"P5\n# made by hand\n1 1\n255\n\x80").unwrap();
        assert_eq!(img.data(), &[128.0 / 255.0]);
    }

    #[test]
    fn dplf_header_layout() {
        let img = Image::filled(256, 256, 0.25).unwrap();
        let bytes = encode_dplf(&img);
        assert_eq!(bytes.len(), 13 + 262_144);
        assert_eq!(&bytes[..5], b"DPLF\x01");
        assert_eq!(u32_at(&bytes, 5), 256);
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"DPLX");
        assert!(decode_dplf(&bad).is_err());
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(decode_dplf(&v2).is_err());
        assert!(decode_dplf(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn dplw_round_trip_and_inference() {
        let model = DplModel::<f32>::new(ModelKind::Dpl, 2, 4, 3, AdamConfig::default()).unwrap();
        let bytes = encode_dplw(model.params());
        let back = decode_dplw(&bytes).unwrap();
        assert_eq!(back.len(), model.params().len());
        for ((na, ta), (nb, tb)) in model.params().iter().zip(back.iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta, tb);
        }
        assert_eq!(infer_architecture(&back).unwrap(), (ModelKind::Dpl, 2, 4));
        assert_eq!(encode_dplw(&back), bytes);
        assert!(decode_dplw(&bytes[..bytes.len() - 2]).is_err());
        let base = DplModel::<f32>::new(ModelKind::UnetBaseline, 1, 8, 3, AdamConfig::default()).unwrap();
        let back = decode_dplw(&encode_dplw(base.params())).unwrap();
        assert_eq!(infer_architecture(&back).unwrap(), (ModelKind::UnetBaseline, 1, 8));
    }

    #[test]
    fn dplw_bias_entries_are_rank_one() {
        let model = DplModel::<f32>::new(ModelKind::UnetBaseline, 1, 2, 0, AdamConfig::default()).unwrap();
        let bytes = encode_dplw(model.params());
        let name = b"context.enc0.conv1.weight";
        // entry 0 starts after magic, version and count
        assert_eq!(u32_at(&bytes, 9) as usize, name.len());
        assert_eq!(&bytes[13..13 + name.len()], name);
        let rank_at = 13 + name.len();
        assert_eq!(u32_at(&bytes, rank_at), 4);
        let bias_at = rank_at + 4 + 16 + 4 * 2 * 9;
        assert_eq!(u32_at(&bytes, bias_at) as usize, "context.enc0.conv1.bias".len());
        let bias_rank = bias_at + 4 + "context.enc0.conv1.bias".len();
        assert_eq!(u32_at(&bytes, bias_rank), 1);
        assert_eq!(u32_at(&bytes, bias_rank + 4), 2);
    }

    proptest! {
        #[test]
        fn pgm_round_trip_of_8bit_images(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            let mut rng = dpl_core::Rng::new(seed);
            let data = (0..w * h).map(|_| rng.index(256) as f32 / 255.0).collect();
            let img = Image::new(w, h, data).unwrap();
            let back = decode_pgm(&encode_pgm(&img)).unwrap();
            prop_assert_eq!(back, img);
        }

        #[test]
        fn pgm_quantization_bound(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            let mut rng = dpl_core::Rng::new(seed);
            let data = (0..w * h).map(|_| rng.uniform() as f32).collect();
            let img = Image::new(w, h, data).unwrap();
            let back = decode_pgm(&encode_pgm(&img)).unwrap();
            for (a, b) in img.data().iter().zip(back.data()) {
                prop_assert!(((a - b).abs() as f64) <= 1.0 / 510.0 + 1e-7);
            }
        }

        #[test]
        fn dplf_round_trip_is_bitwise(w in 1usize..16, h in 1usize..16, seed in any::<u64>()) {
            let mut rng = dpl_core::Rng::new(seed);
            let data = (0..w * h).map(|_| (rng.normal() * 3.0) as f32).collect();
            let img = Image::new(w, h, data).unwrap();
            let back = decode_dplf(&encode_dplf(&img)).unwrap();
            prop_assert!(back.data().iter().zip(img.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!((back.width(), back.height()), (w, h));
        }
    }
}
