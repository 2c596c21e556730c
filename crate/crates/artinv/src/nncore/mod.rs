//! Minimal sequence-model engine: dense, (B)LSTM and TDNN layers, statistics
//! pooling, masked losses, reverse-mode gradients, Adam, and an early-stopping
//! train loop. All parameters of a network live in one flat `f64` vector so
//! that optimization, checkpointing, and finite-difference verification act on
//! a single representation.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod train;

pub use adam::{clip_grad_norm, AdamState};
pub use gradcheck::{check_gradients, relative_error};
pub use layers::{Activation, Blstm, Dense, Lstm, StatsPool, Tdnn};
pub use train::{fit, EpochStats, History, TrainConfig};

use ndarray::{Array2, Array3, ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};

/// Handle to one named parameter block inside a [`Layout`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockId(usize);

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl BlockSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Declaration-ordered parameter blocks of one network. The order is also the
/// checkpoint serialization order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Layout {
    blocks: Vec<BlockSpec>,
    total: usize,
}

impl Layout {
    pub fn builder() -> LayoutBuilder {
        LayoutBuilder::default()
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn spec(&self, id: BlockId) -> &BlockSpec {
        &self.blocks[id.0]
    }
}

#[derive(Default)]
pub struct LayoutBuilder {
    blocks: Vec<BlockSpec>,
    total: usize,
}

impl LayoutBuilder {
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize]) -> BlockId {
        let spec = BlockSpec {
            name: name.into(),
            shape: shape.to_vec(),
            offset: self.total,
        };
        self.total += spec.len();
        self.blocks.push(spec);
        BlockId(self.blocks.len() - 1)
    }

    pub fn finish(self) -> Layout {
        Layout {
            blocks: self.blocks,
            total: self.total,
        }
    }
}

/// Flat parameter (or gradient) storage for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub data: Vec<f64>,
}

impl Params {
    pub fn zeros(layout: &Layout) -> Self {
        Params {
            data: vec![0.0; layout.len()],
        }
    }

    pub fn mat<'a>(&'a self, layout: &Layout, id: BlockId) -> ArrayView2<'a, f64> {
        let spec = layout.spec(id);
        debug_assert_eq!(spec.shape.len(), 2);
        ArrayView2::from_shape(
            (spec.shape[0], spec.shape[1]),
            &self.data[spec.offset..spec.offset + spec.len()],
        )
        .expect("layout shape matches storage")
    }

    pub fn mat_mut<'a>(&'a mut self, layout: &Layout, id: BlockId) -> ArrayViewMut2<'a, f64> {
        let spec = layout.spec(id);
        debug_assert_eq!(spec.shape.len(), 2);
        ArrayViewMut2::from_shape(
            (spec.shape[0], spec.shape[1]),
            &mut self.data[spec.offset..spec.offset + spec.len()],
        )
        .expect("layout shape matches storage")
    }

    pub fn slice<'a>(&'a self, layout: &Layout, id: BlockId) -> &'a [f64] {
        let spec = layout.spec(id);
        &self.data[spec.offset..spec.offset + spec.len()]
    }

    pub fn slice_mut<'a>(&'a mut self, layout: &Layout, id: BlockId) -> &'a mut [f64] {
        let spec = layout.spec(id);
        &mut self.data[spec.offset..spec.offset + spec.len()]
    }

    pub fn add_assign(&mut self, other: &Params) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Round every value to f32 precision so checkpoints round-trip
    /// bit-exactly.
    pub fn quantize_f32(&mut self) {
        for v in self.data.iter_mut() {
            *v = crate::io::quantize(*v);
        }
    }

    pub fn assert_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite values in {context}")));
        }
        Ok(())
    }
}

/// A padded batch of variable-length sequences. Per-item valid lengths mask
/// the padding out of every forward pass and loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBatch {
    /// B x T_max x D.
    pub data: Array3<f64>,
    pub lengths: Vec<usize>,
}

impl SeqBatch {
    pub fn from_items(items: &[Array2<f64>]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Shape("batch must contain at least one item".into()));
        }
        let dims = items[0].ncols();
        if items.iter().any(|m| m.ncols() != dims) {
            return Err(Error::Shape("batch items disagree on feature dim".into()));
        }
        let t_max = items.iter().map(|m| m.nrows()).max().unwrap_or(0);
        if t_max == 0 {
            return Err(Error::Shape("batch items must have T >= 1".into()));
        }
        let mut data = Array3::zeros((items.len(), t_max, dims));
        let mut lengths = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            data.slice_mut(ndarray::s![i, ..item.nrows(), ..])
                .assign(item);
            lengths.push(item.nrows());
        }
        Ok(SeqBatch { data, lengths })
    }

    pub fn n_items(&self) -> usize {
        self.data.dim().0
    }

    pub fn dims(&self) -> usize {
        self.data.dim().2
    }

    /// Valid (unpadded) frames of one item.
    pub fn item(&self, i: usize) -> ArrayView2<'_, f64> {
        self.data.slice(ndarray::s![i, ..self.lengths[i], ..])
    }

    pub fn to_items(&self) -> Vec<Array2<f64>> {
        (0..self.n_items()).map(|i| self.item(i).to_owned()).collect()
    }
}

/// Time-distributed dense layer over every item of a batch.
pub fn dense_forward(
    batch: &SeqBatch,
    layout: &Layout,
    params: &Params,
    dense: &Dense,
) -> Result<SeqBatch> {
    if batch.dims() != dense.d_in {
        return Err(Error::Shape(format!(
            "dense expects input dim {}, batch has {}",
            dense.d_in,
            batch.dims()
        )));
    }
    let items: Vec<Array2<f64>> = batch
        .to_items()
        .iter()
        .map(|x| dense.forward(layout, params, x).output)
        .collect();
    SeqBatch::from_items(&items)
}

/// Stacked bidirectional LSTM over every item of a batch.
pub fn blstm_forward(
    batch: &SeqBatch,
    layout: &Layout,
    params: &Params,
    layers: &[Blstm],
) -> Result<SeqBatch> {
    let mut items = batch.to_items();
    for (li, layer) in layers.iter().enumerate() {
        let mut next = Vec::with_capacity(items.len());
        for x in &items {
            let out = layer.forward(layout, params, x);
            if out.output.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "NaN in BLSTM forward pass at layer {li}"
                )));
            }
            next.push(out.output);
        }
        items = next;
    }
    SeqBatch::from_items(&items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn seq_batch_pads_and_masks() {
        let a = arr2(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let b = arr2(&[[7.0, 8.0]]);
        let batch = SeqBatch::from_items(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(batch.data.dim(), (2, 3, 2));
        assert_eq!(batch.lengths, vec![3, 1]);
        assert_eq!(batch.item(0), a);
        assert_eq!(batch.item(1), b);
        assert_eq!(batch.data[[1, 2, 0]], 0.0);
    }

    #[test]
    fn mismatched_dims_rejected() {
        let a = arr2(&[[1.0, 2.0]]);
        let b = arr2(&[[1.0, 2.0, 3.0]]);
        assert!(SeqBatch::from_items(&[a, b]).is_err());
    }
}
