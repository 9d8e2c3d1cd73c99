//! Module traces and their binary container.
//!
//! A trace file is the 8-byte magic `FLTRACE1` followed by records until end
//! of file. Each record is
//!
//! | field  | type                  |
//! |--------|-----------------------|
//! | name   | u16 length + UTF-8    |
//! | kind   | u8 (0 outputs, 1 parameters, 2 gradients) |
//! | step   | u32, 1-based          |
//! | length | u32 element count     |
//! | values | `length` × f32        |
//!
//! All integers and floats are little-endian. Tensors are flattened
//! row-major, concatenated in the module's declared parameter order.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NumericsError;

pub const MAGIC: &[u8; 8] = b"FLTRACE1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    Outputs,
    Parameters,
    Gradients,
}

impl TraceKind {
    pub const ALL: [TraceKind; 3] = [TraceKind::Outputs, TraceKind::Parameters, TraceKind::Gradients];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TraceKind::Outputs => "outputs",
            TraceKind::Parameters => "parameters",
            TraceKind::Gradients => "gradients",
        }
    }
}

/// Per-step vectors of one (module, kind) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleTrace {
    pub module: String,
    pub kind: TraceKind,
    /// `steps[i]` holds step `i + 1`.
    pub steps: Vec<Vec<f32>>,
}

impl ModuleTrace {
    pub fn len(&self) -> usize {
        self.steps.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Traces of one backend, keyed by module and kind. Modules keep the order
/// in which they were first inserted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceSet {
    order: Vec<String>,
    traces: BTreeMap<(String, TraceKind), ModuleTrace>,
}

impl TraceSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds step `step` (1-based) of `module`/`kind`. Steps must arrive in
    /// order and every step must have the same length.
    pub fn push(&mut self, module: &str, kind: TraceKind, step: u32, values: Vec<f32>) -> Result<(), NumericsError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite(format!("{module}/{} step {step} index {i}", kind.name())));
        }
        if !self.order.iter().any(|m| m == module) {
            self.order.push(module.to_string());
        }
        let t = self.traces.entry((module.to_string(), kind)).or_insert_with(|| ModuleTrace {
            module: module.to_string(),
            kind,
            steps: Vec::new(),
        });
        if step as usize != t.steps.len() + 1 {
            return Err(NumericsError::Format(format!(
                "{module}/{}: step {step} follows step {}",
                kind.name(),
                t.steps.len()
            )));
        }
        if !t.steps.is_empty() && t.len() != values.len() {
            return Err(NumericsError::LengthMismatch { left: t.len(), right: values.len() });
        }
        t.steps.push(values);
        Ok(())
    }

    pub fn modules(&self) -> &[String] {
        &self.order
    }

    pub fn get(&self, module: &str, kind: TraceKind) -> Option<&ModuleTrace> {
        self.traces.get(&(module.to_string(), kind))
    }

    pub fn get_mut(&mut self, module: &str, kind: TraceKind) -> Option<&mut ModuleTrace> {
        self.traces.get_mut(&(module.to_string(), kind))
    }

    /// Traces in module order, then kind order.
    pub fn iter(&self) -> impl Iterator<Item = &ModuleTrace> {
        self.order.iter().flat_map(move |m| TraceKind::ALL.into_iter().filter_map(move |k| self.get(m, k)))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), NumericsError> {
        w.write_all(MAGIC)?;
        for t in self.iter() {
            let name = t.module.as_bytes();
            let name_len = u16::try_from(name.len())
                .map_err(|_| NumericsError::Format(format!("module name too long: {}", t.module)))?;
            for (i, values) in t.steps.iter().enumerate() {
                w.write_all(&name_len.to_le_bytes())?;
                w.write_all(name)?;
                w.write_all(&[t.kind.code()])?;
                w.write_all(&(i as u32 + 1).to_le_bytes())?;
                w.write_all(&(values.len() as u32).to_le_bytes())?;
                for v in values {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, NumericsError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| NumericsError::Format("missing header".into()))?;
        if &magic != MAGIC {
            return Err(NumericsError::Format("bad magic".into()));
        }
        let mut set = TraceSet::new();
        loop {
            let mut len = [0u8; 2];
            match r.read_exact(&mut len) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            }
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            let mut kind = [0u8; 1];
            let mut step = [0u8; 4];
            let mut count = [0u8; 4];
            let truncated = |_| NumericsError::Format("truncated record".into());
            r.read_exact(&mut name).map_err(truncated)?;
            r.read_exact(&mut kind).map_err(truncated)?;
            r.read_exact(&mut step).map_err(truncated)?;
            r.read_exact(&mut count).map_err(truncated)?;
            let name = String::from_utf8(name).map_err(|_| NumericsError::Format("module name is not UTF-8".into()))?;
            let kind = TraceKind::from_code(kind[0])
                .ok_or_else(|| NumericsError::Format(format!("unknown kind code {}", kind[0])))?;
            let n = u32::from_le_bytes(count) as usize;
            let mut raw = vec![0u8; n * 4];
            r.read_exact(&mut raw).map_err(truncated)?;
            let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            set.push(&name, kind, u32::from_le_bytes(step), values)?;
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<(), NumericsError> {
        let mut w = io::BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NumericsError> {
        Self::read_from(&mut io::BufReader::new(fs::File::open(path)?))
    }
}
