//! Named parameter tensors, Adam state, and the binary checkpoint format.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! "MSLB" | version: u32 | count: u32
//! per tensor: name_len: u32 | name: UTF-8 | rank: u32 | dims: u64 × rank | data: f64 × Π dims
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{NnError, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MSLB";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Ordered, named parameter tensors with Adam moment estimates.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParameterStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
    step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter and returns its index.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.first_moment.push(Tensor::zeros(value.shape()));
        self.second_moment.push(Tensor::zeros(value.shape()));
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn value(&self, i: usize) -> &Tensor {
        &self.values[i]
    }

    pub fn value_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.values[i]
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// One bias-corrected Adam update. Nothing is modified if any gradient is
    /// non-finite or mis-shaped.
    pub fn adam_step(&mut self, grads: &[Tensor], cfg: &AdamConfig) -> Result<(), NnError> {
        if grads.len() != self.values.len() {
            return Err(NnError::GradientCount {
                expected: self.values.len(),
                got: grads.len(),
            });
        }
        for (i, g) in grads.iter().enumerate() {
            if g.shape() != self.values[i].shape() {
                return Err(NnError::ShapeMismatch {
                    op: "adam_step",
                    detail: format!(
                        "`{}` is {:?}, gradient is {:?}",
                        self.names[i],
                        self.values[i].shape(),
                        g.shape()
                    ),
                });
            }
            if !g.is_finite() {
                return Err(NnError::NonFiniteGradient {
                    name: self.names[i].clone(),
                });
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        for (i, g) in grads.iter().enumerate() {
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            let p = self.values[i].data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                p[j] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }

    /// Writes parameter values (not optimizer state) in checkpoint format.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.values.len() as u32).to_le_bytes())?;
        for (name, t) in self.iter() {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.rank() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a checkpoint. Optimizer state starts fresh.
    pub fn read_from<R: Read>(r: R) -> Result<Self, NnError> {
        let mut r = CountingReader {
            inner: r,
            offset: 0,
        };
        let mut magic = [0u8; 4];
        r.fill(&mut magic, "magic")?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(NnError::Format(format!("bad magic {magic:?}")));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(NnError::Format(format!("unsupported version {version}")));
        }
        let count = r.u32("tensor count")?;
        let mut store = Self::new();
        for _ in 0..count {
            let name_len = r.u32("name length")? as usize;
            let mut name = vec![0u8; name_len];
            r.fill(&mut name, "name")?;
            let name = String::from_utf8(name)
                .map_err(|e| NnError::Format(format!("tensor name is not UTF-8: {e}")))?;
            let rank = r.u32("rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64("dim")? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            let mut buf = [0u8; 8];
            for _ in 0..numel {
                r.fill(&mut buf, "tensor data")?;
                data.push(f64::from_le_bytes(buf));
            }
            store.push(name, Tensor::new(shape, data)?);
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<(), NnError> {
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                NnError::Format(format!("truncated at byte {} reading {what}", self.offset))
            } else {
                NnError::Io(e)
            }
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32, NnError> {
        let mut b = [0u8; 4];
        self.fill(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, what: &str) -> Result<u64, NnError> {
        let mut b = [0u8; 8];
        self.fill(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(p: f64) -> ParameterStore {
        let mut s = ParameterStore::new();
        s.push("p", Tensor::vector(vec![p]));
        s
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..Default::default()
        };
        for g in [3.0, -0.2] {
            let mut s = scalar_store(1.0);
            s.adam_step(&[Tensor::vector(vec![g])], &cfg).unwrap();
            let moved = s.value(0).data()[0] - 1.0;
            assert!(
                (moved + 0.01 * f64::signum(g)).abs() < 1e-8,
                "moved {moved}"
            );
            assert_eq!(s.step(), 1);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = scalar_store(0.7);
        s.adam_step(&[Tensor::vector(vec![0.0])], &AdamConfig::default())
            .unwrap();
        assert_eq!(s.value(0).data(), &[0.7]);
    }

    #[test]
    fn two_constant_steps() {
        // m̂ = g and v̂ = g² after both steps, so each step moves lr·g/(|g|+ε).
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..Default::default()
        };
        let g = 2.0;
        let mut s = scalar_store(0.0);
        s.adam_step(&[Tensor::vector(vec![g])], &cfg).unwrap();
        let p1 = s.value(0).data()[0];
        s.adam_step(&[Tensor::vector(vec![g])], &cfg).unwrap();
        let p2 = s.value(0).data()[0];
        let per_step = 0.1 * g / (g + 1e-8);
        assert!(p2 < p1 && p1 < 0.0);
        assert!((p1 + per_step).abs() < 1e-12);
        assert!((p2 + 2.0 * per_step).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_gradients_without_mutation() {
        let mut s = scalar_store(1.0);
        let before = s.clone();
        let err = s
            .adam_step(
                &[Tensor::from_parts(vec![1], vec![f64::NAN])],
                &AdamConfig::default(),
            )
            .unwrap_err();
        assert!(matches!(err, NnError::NonFiniteGradient { .. }));
        assert!(s
            .adam_step(&[Tensor::zeros(&[2])], &AdamConfig::default())
            .is_err());
        assert!(s.adam_step(&[], &AdamConfig::default()).is_err());
        assert_eq!(s, before);
    }

    #[test]
    fn adam_is_deterministic() {
        let mut a = scalar_store(0.3);
        a.push("w", Tensor::from_rows(&[[1.0, -2.0], [0.5, 0.25]]).unwrap());
        let mut b = a.clone();
        let grads = [
            Tensor::vector(vec![0.1]),
            Tensor::from_rows(&[[-0.3, 0.0], [1e-3, 7.0]]).unwrap(),
        ];
        for _ in 0..5 {
            a.adam_step(&grads, &AdamConfig::default()).unwrap();
            b.adam_step(&grads, &AdamConfig::default()).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_layout() {
        let mut s = ParameterStore::new();
        s.push("b", Tensor::vector(vec![1.5]));
        let mut bytes = Vec::new();
        s.write_to(&mut bytes).unwrap();
        let mut expected = Vec::new();
        expected.extend_from_slice(b"MSLB");
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(b"b");
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&1.5f64.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let mut s = scalar_store(0.25);
        s.push("layer.w", Tensor::from_rows(&[[1.0, 2.0, 3.0]]).unwrap());
        let mut bytes = Vec::new();
        s.write_to(&mut bytes).unwrap();
        let back = ParameterStore::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.values(), s.values());
        assert_eq!(back.name(1), "layer.w");

        let err = ParameterStore::read_from(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ParameterStore::read_from(bad.as_slice()).is_err());
    }
}
