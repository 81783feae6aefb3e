use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// Named parameter tensors, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, ParamId>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, t: Tensor) -> Result<ParamId> {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!("invalid parameter name `{name}`")));
        }
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("parameter `{name}` registered twice")));
        }
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_string());
        self.tensors.push(t);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("no parameter `{name}`")))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Text archive: `TENSOR <name> <rows> <cols>` followed by one line of values.
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "PARAMS {}", self.tensors.len())?;
        for (name, t) in self.names.iter().zip(&self.tensors) {
            writeln!(out, "TENSOR {name} {} {}", t.rows(), t.cols())?;
            let mut first = true;
            for v in t.data() {
                if !first {
                    out.write_all(b" ")?;
                }
                write!(out, "{v:?}")?;
                first = false;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Reads an archive written by [`ParameterStore::write_to`], advancing `lines`.
    pub fn read_from<I>(lines: &mut I) -> Result<ParameterStore>
    where
        I: Iterator<Item = (usize, String)>,
    {
        let (n, header) = lines.next().ok_or_else(|| Error::parse(0, "missing PARAMS header"))?;
        let count: usize = header
            .strip_prefix("PARAMS ")
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| Error::parse(n, "expected `PARAMS <count>`"))?;
        let mut store = ParameterStore::new();
        for _ in 0..count {
            let (n, head) = lines.next().ok_or_else(|| Error::parse(n, "truncated archive"))?;
            let fields: Vec<&str> = head.split_whitespace().collect();
            if fields.len() != 4 || fields[0] != "TENSOR" {
                return Err(Error::parse(n, "expected `TENSOR <name> <rows> <cols>`"));
            }
            let rows: usize = fields[2].parse().map_err(|_| Error::parse(n, "bad row count"))?;
            let cols: usize = fields[3].parse().map_err(|_| Error::parse(n, "bad column count"))?;
            let (m, body) = lines.next().ok_or_else(|| Error::parse(n, "missing tensor values"))?;
            let data = body
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| Error::parse(m, format!("bad float `{v}`"))))
                .collect::<Result<Vec<_>>>()?;
            let t = Tensor::new(rows, cols, data).map_err(|_| Error::parse(m, "value count does not match shape"))?;
            store.add(fields[1], t)?;
        }
        Ok(store)
    }

    pub fn read<R: BufRead>(input: R) -> Result<ParameterStore> {
        let mut lines = input
            .lines()
            .enumerate()
            .map(|(i, l)| l.map(|l| (i + 1, l)))
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter();
        Self::read_from(&mut lines)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn archive_round_trip_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut store = ParameterStore::new();
        store.add("enc.w_z", Tensor::uniform(3, 4, 1.0, &mut rng)).unwrap();
        store.add("w_g", Tensor::new(1, 2, vec![1e-300, -0.1 + 0.2]).unwrap()).unwrap();
        let mut buf = Vec::new();
        store.write_to(&mut buf).unwrap();
        let back = ParameterStore::read(buf.as_slice()).unwrap();
        assert_eq!(back, store);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParameterStore::new();
        store.add("w", Tensor::zeros(1, 1)).unwrap();
        assert!(store.add("w", Tensor::zeros(1, 1)).is_err());
        assert!(store.add("a b", Tensor::zeros(1, 1)).is_err());
        assert!(store.id("missing").is_err());
    }
}
