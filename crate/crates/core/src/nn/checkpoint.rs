//! Checkpoint files: magic string, architecture hash, parameter blobs in
//! declaration order, little-endian f32.

use super::params::ParamStore;
use super::NnError;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 5] = b"PSCK1";

/// Serialize a parameter store.
pub fn write_checkpoint(params: &ParamStore, path: &Path) -> Result<(), NnError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.write_u64::<LittleEndian>(params.spec_hash())?;
    buf.write_u32::<LittleEndian>(params.len() as u32)?;
    for (_, t) in params.iter() {
        buf.write_u32::<LittleEndian>(t.rows as u32)?;
        buf.write_u32::<LittleEndian>(t.cols as u32)?;
        for v in &t.data {
            buf.write_f32::<LittleEndian>(*v)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Load parameter values into an existing store of the same architecture.
pub fn read_checkpoint(params: &mut ParamStore, path: &Path) -> Result<(), NnError> {
    let data = std::fs::read(path)?;
    let mut cur = std::io::Cursor::new(&data);
    let mut magic = [0u8; 5];
    cur.read_exact(&mut magic).map_err(|_| NnError::Truncated {
        expected: 5,
        got: data.len(),
    })?;
    if &magic != MAGIC {
        return Err(NnError::BadMagic);
    }
    let hash = cur.read_u64::<LittleEndian>().map_err(truncated(&data))?;
    if hash != params.spec_hash() {
        return Err(NnError::SpecHashMismatch {
            expected: params.spec_hash(),
            got: hash,
        });
    }
    let n = cur.read_u32::<LittleEndian>().map_err(truncated(&data))? as usize;
    if n != params.len() {
        return Err(NnError::SpecHashMismatch {
            expected: params.spec_hash(),
            got: hash,
        });
    }
    for i in 0..n {
        let rows = cur.read_u32::<LittleEndian>().map_err(truncated(&data))? as usize;
        let cols = cur.read_u32::<LittleEndian>().map_err(truncated(&data))? as usize;
        let t = params.get_mut(super::params::ParamId(i));
        if rows != t.rows || cols != t.cols {
            return Err(NnError::ShapeMismatch {
                index: i,
                expected: (t.rows, t.cols),
                got: (rows, cols),
            });
        }
        for v in t.data.iter_mut() {
            *v = cur.read_f32::<LittleEndian>().map_err(truncated(&data))?;
        }
    }
    Ok(())
}

fn truncated(data: &[u8]) -> impl Fn(std::io::Error) -> NnError + '_ {
    move |_| NnError::Truncated {
        expected: data.len() + 1,
        got: data.len(),
    }
}
