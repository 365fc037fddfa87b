//! Binary checkpoints for a [`ParameterStore`].
//!
//! Layout (little-endian): magic `DEMEA\0`, format version u32, then per
//! parameter: name length u32, UTF-8 name, rank u32, dims u32 each, f32
//! data. Adam moments go to a sibling `<path>.moments` file with the same
//! layout, holding `<name>.m` / `<name>.v` tensors plus a scalar
//! `adam.step`.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{real, NnError, ParameterStore, Real};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"DEMEA\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> NnError + '_ {
    move |source| NnError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn moments_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".moments");
    PathBuf::from(os)
}

struct Entry {
    name: String,
    shape: Vec<usize>,
    data: Vec<f32>,
}

fn write_entries(path: &Path, entries: &[Entry]) -> Result<(), NnError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let err = io_err(path);
    w.write_all(CHECKPOINT_MAGIC).map_err(&err)?;
    w.write_u32::<LittleEndian>(CHECKPOINT_VERSION).map_err(&err)?;
    for e in entries {
        w.write_u32::<LittleEndian>(e.name.len() as u32).map_err(&err)?;
        w.write_all(e.name.as_bytes()).map_err(&err)?;
        w.write_u32::<LittleEndian>(e.shape.len() as u32).map_err(&err)?;
        for &d in &e.shape {
            w.write_u32::<LittleEndian>(d as u32).map_err(&err)?;
        }
        for &v in &e.data {
            w.write_f32::<LittleEndian>(v).map_err(&err)?;
        }
    }
    w.flush().map_err(&err)
}

fn read_entries(path: &Path) -> Result<Vec<Entry>, NnError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::new(file);
    let err = io_err(path);
    let bad = |msg: String| NnError::Checkpoint {
        path: path.to_path_buf(),
        msg,
    };

    let mut magic = [0u8; 6];
    r.read_exact(&mut magic).map_err(&err)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad(format!("bad magic {magic:?}")));
    }
    let version = r.read_u32::<LittleEndian>().map_err(&err)?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }

    let mut entries = Vec::new();
    loop {
        let name_len = match r.read_u32::<LittleEndian>() {
            Ok(n) => n as usize,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(err(e)),
        };
        if name_len > 4096 {
            return Err(bad(format!("implausible name length {name_len}")));
        }
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(&err)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| bad("parameter name is not UTF-8".into()))?;
        let rank = r.read_u32::<LittleEndian>().map_err(&err)? as usize;
        if rank > 8 {
            return Err(bad(format!("implausible rank {rank} for {name:?}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.read_u32::<LittleEndian>().map_err(&err)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = vec![0.0f32; len];
        r.read_f32_into::<LittleEndian>(&mut data).map_err(&err)?;
        entries.push(Entry { name, shape, data });
    }
    Ok(entries)
}

/// Writes parameter values plus a sibling moments file.
pub fn save_checkpoint<T: Real, P: AsRef<Path>>(
    store: &ParameterStore<T>,
    path: P,
) -> Result<(), NnError> {
    let path = path.as_ref();
    let values: Vec<Entry> = store
        .params()
        .iter()
        .map(|p| Entry {
            name: p.name.clone(),
            shape: p.shape.clone(),
            data: p.value.iter().map(|v| v.to_f64_val() as f32).collect(),
        })
        .collect();
    write_entries(path, &values)?;

    let mut moments = Vec::with_capacity(store.len() * 2 + 1);
    for p in store.params() {
        moments.push(Entry {
            name: format!("{}.m", p.name),
            shape: p.shape.clone(),
            data: p.m.iter().map(|v| v.to_f64_val() as f32).collect(),
        });
        moments.push(Entry {
            name: format!("{}.v", p.name),
            shape: p.shape.clone(),
            data: p.v.iter().map(|v| v.to_f64_val() as f32).collect(),
        });
    }
    moments.push(Entry {
        name: "adam.step".into(),
        shape: vec![1],
        data: vec![store.step() as f32],
    });
    write_entries(&moments_path(path), &moments)
}

/// Loads values (and moments, when the sibling file exists) into a store
/// whose parameters were already registered. Names and shapes must match
/// exactly.
pub fn load_checkpoint<T: Real, P: AsRef<Path>>(
    store: &mut ParameterStore<T>,
    path: P,
) -> Result<(), NnError> {
    let path = path.as_ref();
    let entries = read_entries(path)?;
    let bad = |msg: String| NnError::Checkpoint {
        path: path.to_path_buf(),
        msg,
    };
    if entries.len() != store.len() {
        return Err(bad(format!(
            "checkpoint has {} parameters, model has {}",
            entries.len(),
            store.len()
        )));
    }
    for (e, p) in entries.iter().zip(store.params_mut()) {
        if e.name != p.name || e.shape != p.shape {
            return Err(bad(format!(
                "parameter mismatch: checkpoint {:?}{:?} vs model {:?}{:?}",
                e.name, e.shape, p.name, p.shape
            )));
        }
        for (slot, &v) in p.value.iter_mut().zip(&e.data) {
            *slot = real::<T>(v as f64);
        }
    }

    let mpath = moments_path(path);
    if mpath.exists() {
        let moments = read_entries(&mpath)?;
        let mut step = 0u64;
        for e in &moments {
            if e.name == "adam.step" {
                step = e.data.first().copied().unwrap_or(0.0) as u64;
                continue;
            }
            let (base, kind) = match e.name.rsplit_once('.') {
                Some(split) => split,
                None => {
                    return Err(bad(format!("unrecognized moments entry {:?}", e.name)));
                }
            };
            let p = store
                .params_mut()
                .iter_mut()
                .find(|p| p.name == base)
                .ok_or_else(|| bad(format!("moments entry {:?} has no parameter", e.name)))?;
            let dst = match kind {
                "m" => &mut p.m,
                "v" => &mut p.v,
                _ => return Err(bad(format!("unrecognized moments entry {:?}", e.name))),
            };
            if e.data.len() != dst.len() {
                return Err(bad(format!("moments entry {:?} has wrong size", e.name)));
            }
            for (slot, &v) in dst.iter_mut().zip(&e.data) {
                *slot = real::<T>(v as f64);
            }
        }
        store.set_step(step);
    }
    Ok(())
}
