//! File formats: tensors, JSON sidecars, PGM images and the CSV log.
//!
//! A tensor file is one line of JSON
//! `{"magic":"IRT1","dtype":"f64"|"c128","shape":[..],"order":"row-major","endian":"little"}`
//! followed by a newline and the raw little-endian values (complex numbers as
//! interleaved real and imaginary parts).

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisIndex, CoefficientVector, Selection, SteerableBasis};
use crate::error::{Error, Result};
use crate::invariant::{InvariantTensor, Scale, Space, TensorData};
use crate::simulate::{Micrograph, Placement};

pub const MAGIC: &str = "IRT1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    C128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    magic: String,
    dtype: Dtype,
    shape: Vec<usize>,
    order: String,
    endian: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    F64(Vec<f64>),
    C128(Vec<Complex64>),
}

impl Payload {
    fn len(&self) -> usize {
        match self {
            Payload::F64(v) => v.len(),
            Payload::C128(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorFile {
    pub shape: Vec<usize>,
    pub payload: Payload,
}

impl TensorFile {
    pub fn new(shape: Vec<usize>, payload: Payload) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != payload.len() {
            return Err(Error::SizeMismatch(format!(
                "shape {shape:?} holds {count} values, payload has {}",
                payload.len()
            )));
        }
        Ok(TensorFile { shape, payload })
    }

    pub fn dtype(&self) -> Dtype {
        match self.payload {
            Payload::F64(_) => Dtype::F64,
            Payload::C128(_) => Dtype::C128,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            magic: MAGIC.into(),
            dtype: self.dtype(),
            shape: self.shape.clone(),
            order: "row-major".into(),
            endian: "little".into(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        match &self.payload {
            Payload::F64(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            Payload::C128(v) => {
                for x in v {
                    w.write_all(&x.re.to_le_bytes())?;
                    w.write_all(&x.im.to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = Vec::new();
        r.read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(Error::Format("missing tensor header line".into()));
        }
        let header: Header = serde_json::from_slice(&line[..line.len() - 1])
            .map_err(|e| Error::Format(format!("bad tensor header: {e}")))?;
        if header.magic != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", header.magic)));
        }
        if header.order != "row-major" || header.endian != "little" {
            return Err(Error::Format(format!(
                "unsupported layout {}/{}",
                header.order, header.endian
            )));
        }
        let count: usize = header.shape.iter().product();
        let width = match header.dtype {
            Dtype::F64 => 8,
            Dtype::C128 => 16,
        };
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != count * width {
            return Err(Error::Format(format!(
                "payload has {} bytes, expected {}",
                bytes.len(),
                count * width
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let payload = match header.dtype {
            Dtype::F64 => Payload::F64(values),
            Dtype::C128 => Payload::C128(
                values
                    .chunks_exact(2)
                    .map(|c| Complex64::new(c[0], c[1]))
                    .collect(),
            ),
        };
        TensorFile::new(header.shape, payload)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        TensorFile::read_from(BufReader::new(File::open(path)?))
    }

    pub fn into_f64(self) -> Result<Vec<f64>> {
        match self.payload {
            Payload::F64(v) => Ok(v),
            Payload::C128(_) => Err(Error::Format("expected f64 tensor, found c128".into())),
        }
    }

    pub fn into_c128(self) -> Result<Vec<Complex64>> {
        match self.payload {
            Payload::C128(v) => Ok(v),
            Payload::F64(_) => Err(Error::Format("expected c128 tensor, found f64".into())),
        }
    }
}

/// `<path>.json`, where the metadata of a tensor file lives.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// `<path>.irt`, the exact-value copy stored next to a rendered image.
pub fn tensor_copy_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".irt");
    PathBuf::from(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicrographMeta {
    pub m: usize,
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
    pub placements: Vec<Placement>,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantMeta {
    pub n: usize,
    pub space: Space,
    pub scale: Scale,
    /// Hash of the source micrograph, or `"forward-model"`.
    pub provenance: String,
    pub sigma2_hat: Option<f64>,
    pub mean_hat: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisManifest {
    pub n: usize,
    pub selection: Selection,
    pub lambda_max: f64,
    pub nu_max: u32,
    pub indices: Vec<BasisIndex>,
}

impl BasisManifest {
    pub fn of(basis: &SteerableBasis, selection: Selection) -> Self {
        BasisManifest {
            n: basis.n(),
            selection,
            lambda_max: basis.lambda_max,
            nu_max: basis.nu_max,
            indices: basis.indices.clone(),
        }
    }

    /// Rebuild the basis and check that it reproduces the recorded indices.
    pub fn build(&self) -> Result<SteerableBasis> {
        let basis = SteerableBasis::build(self.n, self.selection)?;
        let same = basis.indices.len() == self.indices.len()
            && basis
                .indices
                .iter()
                .zip(&self.indices)
                .all(|(a, b)| a.nu == b.nu && a.q == b.q);
        if !same {
            return Err(Error::BasisMismatch(
                "manifest indices do not match the rebuilt basis".into(),
            ));
        }
        Ok(basis)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMeta {
    /// Path of the basis manifest these coefficients refer to.
    pub basis: String,
    pub len: usize,
}

pub fn tensor_of_invariant(t: &InvariantTensor) -> TensorFile {
    let shape = t.shape().to_vec();
    let payload = match &t.data {
        TensorData::Real(v) => Payload::F64(v.clone()),
        TensorData::Complex(v) => Payload::C128(v.clone()),
    };
    TensorFile { shape, payload }
}

pub fn invariant_of_tensor(file: TensorFile, meta: &InvariantMeta) -> Result<InvariantTensor> {
    let side = 4 * meta.n;
    if file.shape != vec![side; 4] {
        return Err(Error::SizeMismatch(format!(
            "invariant for n={} needs shape [{side}; 4], found {:?}",
            meta.n, file.shape
        )));
    }
    match (meta.space, file.payload) {
        (Space::RealOffsets, Payload::F64(v)) => InvariantTensor::from_real(meta.n, meta.scale, v),
        (Space::Frequency, Payload::C128(v)) => {
            InvariantTensor::from_frequency(meta.n, meta.scale, v)
        }
        _ => Err(Error::Format(
            "tensor dtype does not match the recorded domain".into(),
        )),
    }
}

pub fn tensor_of_micrograph(mg: &Micrograph) -> TensorFile {
    TensorFile {
        shape: vec![mg.m, mg.m],
        payload: Payload::F64(mg.pixels.clone()),
    }
}

pub fn micrograph_of_tensor(file: TensorFile) -> Result<Micrograph> {
    if file.shape.len() != 2 || file.shape[0] != file.shape[1] {
        return Err(Error::SizeMismatch(format!(
            "micrograph must be square, found shape {:?}",
            file.shape
        )));
    }
    let m = file.shape[0];
    Micrograph::from_pixels(m, file.into_f64()?)
}

pub fn tensor_of_coefficients(z: &CoefficientVector) -> TensorFile {
    TensorFile {
        shape: vec![z.len()],
        payload: Payload::C128(z.values.clone()),
    }
}

pub fn coefficients_of_tensor(file: TensorFile) -> Result<CoefficientVector> {
    if file.shape.len() != 1 {
        return Err(Error::SizeMismatch(
            "coefficients must be one-dimensional".into(),
        ));
    }
    Ok(CoefficientVector {
        values: file.into_c128()?,
    })
}

/// Hex SHA-256 of the little-endian pixel values.
pub fn micrograph_hash(mg: &Micrograph) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update((mg.m as u64).to_le_bytes());
    for v in &mg.pixels {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// 16-bit binary PGM. Values map linearly from `[min, max]` onto
/// `[0, 65535]`; a constant image maps to all zeros.
pub fn write_pgm<W: Write>(mut w: W, width: usize, height: usize, values: &[f64]) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::SizeMismatch(format!(
            "{width}x{height} image needs {} values, got {}",
            width * height,
            values.len()
        )));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    write!(w, "P5\n{width} {height}\n65535\n")?;
    for &v in values {
        let level = if span > 0.0 {
            ((v - lo) / span * 65535.0).round() as u16
        } else {
            0
        };
        w.write_all(&level.to_be_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_pgm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    write_pgm(BufWriter::new(File::create(path)?), width, height, values)
}

pub const CSV_HEADER: &str = "label,error_s3,error_recon,best_phi,seed";

#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub label: String,
    pub error_s3: Option<f64>,
    pub error_recon: Option<f64>,
    pub best_phi: Option<f64>,
    pub seed: u64,
}

impl CsvRow {
    /// Empty fields stand for values that were not computed.
    pub fn render(&self) -> Result<String> {
        if self.label.contains([',', '\n', '"']) {
            return Err(Error::InvalidArgument(format!(
                "label {:?} may not contain commas, quotes or newlines",
                self.label
            )));
        }
        let f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        Ok(format!(
            "{},{},{},{},{}",
            self.label,
            f(self.error_s3),
            f(self.error_recon),
            f(self.best_phi),
            self.seed
        ))
    }
}

/// Append a row, writing the header first if the file is new or empty.
pub fn append_csv(path: &Path, row: &CsvRow) -> Result<()> {
    let line = row.render()?;
    let fresh = std::fs::metadata(path)
        .map(|m| m.len() == 0)
        .unwrap_or(true);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{CSV_HEADER}")?;
    }
    writeln!(f, "{line}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn round_trip(t: &TensorFile) -> TensorFile {
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        TensorFile::read_from(&buf[..]).unwrap()
    }

    proptest! {
        #[test]
        fn f64_round_trip_is_bitwise(values in proptest::collection::vec(any::<f64>(), 0..64)) {
            let t = TensorFile::new(vec![values.len()], Payload::F64(values.clone())).unwrap();
            let back = round_trip(&t).into_f64().unwrap();
            prop_assert_eq!(back.len(), values.len());
            for (a, b) in back.iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn c128_round_trip_is_bitwise(pairs in proptest::collection::vec((any::<f64>(), any::<f64>()), 1..32)) {
            let values: Vec<Complex64> = pairs.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
            let t = TensorFile::new(vec![1, values.len()], Payload::C128(values.clone())).unwrap();
            let back = round_trip(&t).into_c128().unwrap();
            for (a, b) in back.iter().zip(&values) {
                prop_assert_eq!(a.re.to_bits(), b.re.to_bits());
                prop_assert_eq!(a.im.to_bits(), b.im.to_bits());
            }
        }
    }

    #[test]
    fn header_is_one_json_line() {
        let t = TensorFile::new(vec![2, 3], Payload::F64(vec![0.0; 6])).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let end = buf.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&buf[..end]).unwrap();
        assert_eq!(header["magic"], "IRT1");
        assert_eq!(header["dtype"], "f64");
        assert_eq!(header["shape"], serde_json::json!([2, 3]));
        assert_eq!(header["order"], "row-major");
        assert_eq!(header["endian"], "little");
        assert_eq!(buf.len() - end - 1, 48);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let t = TensorFile::new(vec![2], Payload::F64(vec![1.0, 2.0])).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert!(TensorFile::read_from(&buf[..buf.len() - 1]).is_err());
        let bad = String::from_utf8(buf.clone())
            .unwrap_or_default()
            .replace("IRT1", "IRT2");
        if !bad.is_empty() {
            assert!(TensorFile::read_from(bad.as_bytes()).is_err());
        }
        assert!(TensorFile::read_from(&b"no header"[..]).is_err());
        assert!(TensorFile::new(vec![3], Payload::F64(vec![1.0])).is_err());
    }

    #[test]
    fn pgm_layout_and_scaling() {
        let mut buf = Vec::new();
        write_pgm(&mut buf, 2, 1, &[-1.0, 3.0]).unwrap();
        let head = b"P5\n2 1\n65535\n";
        assert_eq!(&buf[..head.len()], head);
        assert_eq!(&buf[head.len()..], &[0, 0, 0xff, 0xff]);
        let mut flat = Vec::new();
        write_pgm(&mut flat, 2, 2, &[5.0; 4]).unwrap();
        assert!(flat[head.len()..].iter().all(|&b| b == 0));
    }

    #[test]
    fn csv_rows() {
        let row = CsvRow {
            label: "run".into(),
            error_s3: Some(0.0),
            error_recon: Some(1.5e-3),
            best_phi: None,
            seed: 7,
        };
        assert_eq!(row.render().unwrap(), "run,0e0,1.5e-3,,7");
        let bad = CsvRow {
            label: "a,b".into(),
            ..row
        };
        assert!(bad.render().is_err());
    }
}
