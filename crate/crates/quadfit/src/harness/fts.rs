//! FTS binary tensor file: magic "FTEN", u32 version=1, u32 ndim,
//! ndim x u32 dims, then f32 data, all little-endian.

use std::io::{Read, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn from_vec(dims: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(dims.iter().product::<usize>(), data.len());
        Tensor { dims, data }
    }
}

pub fn write_fts(path: impl AsRef<Path>, t: &Tensor) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(b"FTEN")?;
    out.write_all(&1u32.to_le_bytes())?;
    out.write_all(&(t.dims.len() as u32).to_le_bytes())?;
    for &d in &t.dims {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for &x in &t.data {
        out.write_all(&(x as f32).to_le_bytes())?;
    }
    out.flush()
}

pub fn read_fts(path: impl AsRef<Path>) -> std::io::Result<Tensor> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    if &magic != b"FTEN" {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "bad FTS magic",
        ));
    }
    let mut u32buf = [0u8; 4];
    file.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != 1 {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unsupported FTS version {}", version),
        ));
    }
    file.read_exact(&mut u32buf)?;
    let ndim = u32::from_le_bytes(u32buf) as usize;
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        file.read_exact(&mut u32buf)?;
        dims.push(u32::from_le_bytes(u32buf) as usize);
    }
    let count: usize = dims.iter().product();
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        file.read_exact(&mut u32buf)?;
        data.push(f32::from_le_bytes(u32buf) as f64);
    }
    Ok(Tensor { dims, data })
}
