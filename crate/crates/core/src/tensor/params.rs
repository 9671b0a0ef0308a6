use serde::{Deserialize, Serialize};
use std::ops::Index;

use super::{Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Location of one named tensor inside a store's flat value vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat parameter vector for one sub-network, split into named segments.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    name: String,
    values: Vec<f64>,
    segments: Vec<Segment>,
}

/// Tape handles for every segment of a store, indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}

impl ParamStore {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            values: Vec::new(),
            segments: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> ParamId {
        let seg = Segment {
            name: name.into(),
            offset: self.values.len(),
            shape,
        };
        assert_eq!(seg.len(), values.len(), "segment {} size", seg.name);
        self.values.extend(values);
        self.segments.push(seg);
        ParamId(self.segments.len() - 1)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, id: ParamId) -> &Segment {
        &self.segments[id.0]
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        let s = &self.segments[id.0];
        &self.values[s.offset..s.offset + s.len()]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        let s = &self.segments[id.0];
        let (a, b) = (s.offset, s.offset + s.len());
        &mut self.values[a..b]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Replaces all values; the layout must be unchanged.
    pub fn load_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::dim(
                format!("parameter store {}", self.name),
                &[self.values.len()],
                &[values.len()],
            ));
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    fn bind_with(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .segments
            .iter()
            .map(|s| {
                let data = self.values[s.offset..s.offset + s.len()].to_vec();
                let mut t = Tensor::new(s.shape.clone(), data).expect("segment shape");
                t.requires_grad = trainable;
                tape.leaf(t)
            })
            .collect();
        Bound { vars }
    }

    /// Binds every segment as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        self.bind_with(tape, true)
    }

    /// Binds every segment as a constant (no gradient flows into it).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        self.bind_with(tape, false)
    }

    /// Flat gradient in store layout; segments the loss never reached get zeros.
    pub fn flat_grad(&self, tape: &Tape, bound: &Bound) -> Vec<f64> {
        let mut out = vec![0.0; self.values.len()];
        for (seg, var) in self.segments.iter().zip(&bound.vars) {
            if let Some(g) = tape.grad(*var) {
                out[seg.offset..seg.offset + seg.len()].copy_from_slice(g);
            }
        }
        out
    }
}
