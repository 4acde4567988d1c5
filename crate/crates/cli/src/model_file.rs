//! Self-describing little-endian model file.
//!
//! Layout, in order:
//!
//! | field | encoding |
//! |---|---|
//! | magic | `b"DBN1"` |
//! | version | `u32` |
//! | layer count `L` | `u32` |
//! | layer sizes | `L + 1` × `u32` |
//! | per layer: `W` (row-major), visible bias, hidden bias | `f64` |
//! | normalizer width `d` | `u32` |
//! | normalizer min, max | `2d` × `f64` |
//! | class count `C` | `u32` |
//! | head weights `(top, C)` row-major, head bias | `f64` |
//! | class names | `C` × (`u32` byte length + UTF-8) |
//!
//! Floats are stored as raw IEEE-754 bits, so save → load → save is
//! byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use beliefnet_core::{DbnError, DbnStack, Normalizer, RbmParams, SoftmaxHead};
use ndarray::{Array1, Array2};

pub const MAGIC: &[u8; 4] = b"DBN1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    /// Stack with a trained head.
    pub stack: DbnStack,
    pub normalizer: Normalizer,
    pub class_names: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
#[error("malformed model file: {0}")]
pub struct FormatError(pub String);

impl From<FormatError> for DbnError {
    fn from(e: FormatError) -> Self {
        DbnError::Validation(e.to_string())
    }
}

impl ModelFile {
    pub fn new(stack: DbnStack, normalizer: Normalizer, class_names: Vec<String>) -> Result<Self, DbnError> {
        let head = stack
            .head
            .as_ref()
            .ok_or_else(|| DbnError::Contract("model file needs a trained head".into()))?;
        if normalizer.dim() != stack.input_size() {
            return Err(DbnError::Validation(format!(
                "normalizer width {} does not match input size {}",
                normalizer.dim(),
                stack.input_size()
            )));
        }
        if class_names.len() != head.n_classes() {
            return Err(DbnError::Validation(format!(
                "{} class names for a {}-class head",
                class_names.len(),
                head.n_classes()
            )));
        }
        Ok(ModelFile {
            stack,
            normalizer,
            class_names,
        })
    }

    pub fn head(&self) -> &SoftmaxHead {
        self.stack.head.as_ref().expect("checked at construction")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        let sizes = self.stack.layer_sizes();
        put_u32(&mut out, self.stack.layers.len() as u32);
        for s in &sizes {
            put_u32(&mut out, *s as u32);
        }
        for layer in &self.stack.layers {
            put_f64s(&mut out, layer.w.iter());
            put_f64s(&mut out, layer.a.iter());
            put_f64s(&mut out, layer.b.iter());
        }
        put_u32(&mut out, self.normalizer.dim() as u32);
        put_f64s(&mut out, self.normalizer.min.iter());
        put_f64s(&mut out, self.normalizer.max.iter());
        let head = self.head();
        put_u32(&mut out, head.n_classes() as u32);
        put_f64s(&mut out, head.w_out.iter());
        put_f64s(&mut out, head.b_out.iter());
        for name in &self.class_names {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DbnError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(FormatError("bad magic".into()).into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(FormatError(format!("unsupported version {version}")).into());
        }
        let n_layers = r.u32()? as usize;
        if n_layers == 0 {
            return Err(FormatError("no layers".into()).into());
        }
        let sizes = (0..=n_layers)
            .map(|_| r.u32().map(|x| x as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let mut layers = Vec::with_capacity(n_layers);
        for k in 0..n_layers {
            let (gv, gh) = (sizes[k], sizes[k + 1]);
            let w = Array2::from_shape_vec((gv, gh), r.f64s(gv * gh)?).map_err(|e| FormatError(e.to_string()))?;
            let a = Array1::from(r.f64s(gv)?);
            let b = Array1::from(r.f64s(gh)?);
            layers.push(RbmParams::new(w, a, b)?);
        }
        let d = r.u32()? as usize;
        let normalizer = Normalizer::new(Array1::from(r.f64s(d)?), Array1::from(r.f64s(d)?))?;
        let n_classes = r.u32()? as usize;
        let top = sizes[n_layers];
        let w_out = Array2::from_shape_vec((top, n_classes), r.f64s(top * n_classes)?)
            .map_err(|e| FormatError(e.to_string()))?;
        let head = SoftmaxHead::new(w_out, Array1::from(r.f64s(n_classes)?))?;
        let mut class_names = Vec::with_capacity(n_classes);
        for _ in 0..n_classes {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|e| FormatError(e.to_string()))?;
            class_names.push(name.to_string());
        }
        if r.pos != bytes.len() {
            return Err(FormatError(format!("{} trailing bytes", bytes.len() - r.pos)).into());
        }
        let stack = DbnStack::new(layers)?.with_head(head)?;
        ModelFile::new(stack, normalizer, class_names)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DbnError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| DbnError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DbnError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| DbnError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_bytes(&bytes)
    }

    /// Human-readable dump. Values use the shortest round-trip decimal form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "format DBN1 version {VERSION}").unwrap();
        writeln!(s, "layer_sizes {:?}", self.stack.layer_sizes()).unwrap();
        for (k, layer) in self.stack.layers.iter().enumerate() {
            writeln!(s, "\n[layer {}] {}x{}", k + 1, layer.n_visible(), layer.n_hidden()).unwrap();
            for row in layer.w.rows() {
                writeln!(s, "w {}", join(row.iter())).unwrap();
            }
            writeln!(s, "visible_bias {}", join(layer.a.iter())).unwrap();
            writeln!(s, "hidden_bias {}", join(layer.b.iter())).unwrap();
        }
        writeln!(s, "\n[normalizer]").unwrap();
        writeln!(s, "min {}", join(self.normalizer.min.iter())).unwrap();
        writeln!(s, "max {}", join(self.normalizer.max.iter())).unwrap();
        let head = self.head();
        writeln!(s, "\n[head] {}x{}", head.top_size(), head.n_classes()).unwrap();
        for row in head.w_out.rows() {
            writeln!(s, "w {}", join(row.iter())).unwrap();
        }
        writeln!(s, "bias {}", join(head.b_out.iter())).unwrap();
        writeln!(s, "\n[classes]").unwrap();
        for (k, name) in self.class_names.iter().enumerate() {
            writeln!(s, "{} {name}", k + 1).unwrap();
        }
        s
    }
}

fn join<'a>(xs: impl Iterator<Item = &'a f64>) -> String {
    xs.map(f64::to_string).collect::<Vec<_>>().join(" ")
}

fn put_u32(out: &mut Vec<u8>, x: u32) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_f64s<'a>(out: &mut Vec<u8>, xs: impl Iterator<Item = &'a f64>) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| FormatError(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| FormatError("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use beliefnet_core::data::activity_names;
    use beliefnet_core::rng::seeded;
    use proptest::prelude::*;

    fn sample(seed: u64) -> ModelFile {
        let mut rng = seeded(seed);
        let layers = vec![
            RbmParams::random(12, 5, 0.3, &mut rng),
            RbmParams::random(5, 3, 0.3, &mut rng),
        ];
        let head = SoftmaxHead::new(
            Array2::from_elem((3, 12), 0.1 * seed as f64),
            Array1::from_elem(12, -1.5),
        )
        .unwrap();
        let stack = DbnStack::new(layers).unwrap().with_head(head).unwrap();
        let norm = Normalizer::new(Array1::from_elem(12, -1.0), Array1::from_elem(12, 2.0)).unwrap();
        ModelFile::new(stack, norm, activity_names()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn bytes_round_trip(seed in 0u64..1000) {
            let m = sample(seed);
            let bytes = m.to_bytes();
            let back = ModelFile::from_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn header_layout() {
        let bytes = sample(1).to_bytes();
        assert_eq!(&bytes[..4], b"DBN1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 12);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample(2).to_bytes();
        assert!(ModelFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ModelFile::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(ModelFile::from_bytes(&extra).is_err());
    }

    #[test]
    fn text_dump_mentions_every_class() {
        let text = sample(3).to_text();
        assert!(text.starts_with("format DBN1"));
        assert!(text.contains("12 LIE_TO_STAND"));
    }
}
