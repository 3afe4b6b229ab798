//! `EQM1` binary arrays: magic, u32 rank, rank × u64 dims, then f64 values
//! row-major, all little-endian. Complex arrays carry a trailing dimension
//! of 2 holding (re, im). A file may hold several arrays back to back.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EQM1";

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Array {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Format(format!("dims {dims:?} need {n} values, got {}", data.len())));
        }
        Ok(Array { dims, data })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Array { dims: vec![data.len()], data }
    }

    pub fn from_complex(dims: &[usize], z: &[Complex64]) -> Result<Self> {
        let mut d = dims.to_vec();
        d.push(2);
        Self::new(d, z.iter().flat_map(|c| [c.re, c.im]).collect())
    }

    /// Leading dims and values of a complex array.
    pub fn to_complex(&self) -> Result<(Vec<usize>, Vec<Complex64>)> {
        if self.dims.last() != Some(&2) {
            return Err(Error::Format(format!("dims {:?} do not end in a (re, im) pair", self.dims)));
        }
        let z = self.data.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
        Ok((self.dims[..self.dims.len() - 1].to_vec(), z))
    }

    /// (rows, cols) of a rank-2 array.
    pub fn shape2(&self) -> Result<(usize, usize)> {
        match self.dims[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Format(format!("expected a matrix, got dims {:?}", self.dims))),
        }
    }
}

pub fn write_array<W: Write>(w: &mut W, a: &Array) -> Result<()> {
    let rank = u32::try_from(a.dims.len()).map_err(|_| Error::Format("rank too large".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&rank.to_le_bytes())?;
    for &d in &a.dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in &a.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) if got == 0 => return Ok(false),
            Ok(0) => return Err(Error::Format("truncated array header".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}

/// Next array, or `None` at a clean end of input.
pub fn read_array<R: Read>(r: &mut R) -> Result<Option<Array>> {
    let mut magic = [0u8; 4];
    if !read_exact_or_eof(r, &mut magic)? {
        return Ok(None);
    }
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected EQM1")));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(|_| Error::Format("truncated rank".into()))?;
    let rank = u32::from_le_bytes(b4) as usize;
    if rank > 16 {
        return Err(Error::Format(format!("rank {rank} is implausible")));
    }
    let mut dims = Vec::with_capacity(rank);
    let mut b8 = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut b8).map_err(|_| Error::Format("truncated dims".into()))?;
        dims.push(usize::try_from(u64::from_le_bytes(b8)).map_err(|_| Error::Format("dimension overflows usize".into()))?);
    }
    let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| Error::Format("element count overflows".into()))?;
    let mut data = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        r.read_exact(&mut b8).map_err(|_| Error::Format(format!("truncated data: expected {n} values")))?;
        data.push(f64::from_le_bytes(b8));
    }
    Ok(Some(Array { dims, data }))
}

pub fn save_arrays(path: &Path, arrays: &[Array]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for a in arrays {
        write_array(&mut w, a)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_arrays(path: &Path) -> Result<Vec<Array>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    while let Some(a) = read_array(&mut r)? {
        out.push(a);
    }
    Ok(out)
}
