//! Dense row-major `f64` arrays of rank 1 to 4.

use thiserror::Error;

pub const MAX_RANK: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("tensor shape must have at least one dimension")]
    EmptyShape,
    #[error("tensor rank {0} exceeds the maximum of {MAX_RANK}")]
    RankTooHigh(usize),
    #[error("tensor dimension {axis} is zero")]
    ZeroDimension { axis: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Elementwise binary operations supported by [`elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
}

/// A dense tensor. The last index varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(TensorError::EmptyShape);
    }
    if shape.len() > MAX_RANK {
        return Err(TensorError::RankTooHigh(shape.len()));
    }
    if let Some(axis) = shape.iter().position(|&d| d == 0) {
        return Err(TensorError::ZeroDimension { axis });
    }
    Ok(shape.iter().product())
}

impl Tensor {
    /// Creates a tensor with every element set to `fill`.
    pub fn new(shape: &[usize], fill: f64) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![fill; len],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::new(shape, 0.0)
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Builds a tensor element by element from its multi-index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = check_shape(shape)?;
        let mut index = vec![0; shape.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&index));
            for axis in (0..shape.len()).rev() {
                index[axis] += 1;
                if index[axis] < shape[axis] {
                    break;
                }
                index[axis] = 0;
            }
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Flat offset of a multi-index. Panics when out of bounds.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                assert!(i < d, "index {i} out of bounds for dimension {d}");
                acc * d + i
            })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    /// Returns a copy with one element replaced.
    pub fn with_value(&self, index: &[usize], value: f64) -> Self {
        let mut out = self.clone();
        let at = out.offset(index);
        out.data[at] = value;
        out
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::from_vec(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|x| x * factor)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Shape `[n, ...]` sliced to the rows in `rows`, concatenated along axis 0.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(TensorError::EmptyShape);
        }
        let stride = self.data.len() / self.shape[0];
        let mut data = Vec::with_capacity(rows.len() * stride);
        for &r in rows {
            if r >= self.shape[0] {
                return Err(TensorError::ShapeMismatch(format!(
                    "row {r} out of range for leading dimension {}",
                    self.shape[0]
                )));
            }
            data.extend_from_slice(&self.data[r * stride..(r + 1) * stride]);
        }
        let mut shape = self.shape.clone();
        shape[0] = rows.len();
        Self::from_vec(&shape, data)
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[&Tensor]) -> Result<Self> {
        let first = items.first().ok_or(TensorError::EmptyShape)?;
        let mut shape = Vec::with_capacity(first.rank() + 1);
        shape.push(items.len());
        shape.extend_from_slice(&first.shape);
        let mut data = Vec::with_capacity(items.len() * first.len());
        for t in items {
            if t.shape != first.shape {
                return Err(TensorError::ShapeMismatch(format!(
                    "cannot stack {:?} with {:?}",
                    t.shape, first.shape
                )));
            }
            data.extend_from_slice(&t.data);
        }
        Self::from_vec(&shape, data)
    }
}

pub(crate) fn ensure_same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape != b.shape {
        return Err(TensorError::ShapeMismatch(format!(
            "{what}: {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    Ok(())
}

/// Matrix product of `[m, k]` and `[k, n]`.
///
/// Each output element accumulates its `k` products in increasing index
/// order, so results are bit-reproducible.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(TensorError::ShapeMismatch(format!(
            "matmul needs rank-2 operands, got {:?} and {:?}",
            a.shape, b.shape
        )));
    }
    let (m, k) = (a.shape[0], a.shape[1]);
    let (k2, n) = (b.shape[0], b.shape[1]);
    if k != k2 {
        return Err(TensorError::ShapeMismatch(format!(
            "matmul inner dimensions {k} and {k2} differ"
        )));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let lhs = a.data[i * k + p];
            let rhs = &b.data[p * n..(p + 1) * n];
            for (o, &r) in row.iter_mut().zip(rhs) {
                *o += lhs * r;
            }
        }
    }
    Tensor::from_vec(&[m, n], out)
}

/// Transpose of a rank-2 tensor.
pub fn transpose(a: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 {
        return Err(TensorError::ShapeMismatch(format!(
            "transpose needs a rank-2 tensor, got {:?}",
            a.shape
        )));
    }
    let (m, n) = (a.shape[0], a.shape[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data[i * n + j];
        }
    }
    Tensor::from_vec(&[n, m], out)
}

pub fn elementwise(a: &Tensor, b: &Tensor, op: ElementwiseOp) -> Result<Tensor> {
    ensure_same_shape(a, b, "elementwise")?;
    let f = match op {
        ElementwiseOp::Add => |x: f64, y: f64| x + y,
        ElementwiseOp::Sub => |x: f64, y: f64| x - y,
        ElementwiseOp::Mul => |x: f64, y: f64| x * y,
    };
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    })
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    elementwise(a, b, ElementwiseOp::Add)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    elementwise(a, b, ElementwiseOp::Sub)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    elementwise(a, b, ElementwiseOp::Mul)
}
