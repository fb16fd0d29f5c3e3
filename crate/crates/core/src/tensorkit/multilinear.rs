use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// A dense array `T[o, i₁, …, i_p]` read as a multilinear map from
/// `ℝ^{d₁} × ⋯ × ℝ^{d_p}` into `ℝ^{d₀}`.
///
/// Index 0 is the output slot; the remaining indices are input slots,
/// numbered from 0 in [`contract`](MultilinearMap::contract).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultilinearMap {
    dims: Vec<usize>,
    data: Vec<f64>,
}

/// One argument of a contraction.
#[derive(Clone, Copy, Debug)]
pub enum Slot<'a> {
    Vector(&'a [f64]),
    /// Left open; evaluated columnwise against unit vectors.
    Identity,
}

impl MultilinearMap {
    pub fn zeros(output_dim: usize, input_dims: &[usize]) -> Self {
        let mut dims = vec![output_dim];
        dims.extend_from_slice(input_dims);
        let len = dims.iter().product();
        Self {
            dims,
            data: vec![0.0; len],
        }
    }

    pub fn from_data(output_dim: usize, input_dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let mut dims = vec![output_dim];
        dims.extend_from_slice(input_dims);
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::dim(format!(
                "{} entries for dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_matrix(m: &DenseMatrix) -> Self {
        Self {
            dims: vec![m.rows(), m.cols()],
            data: m.as_slice().to_vec(),
        }
    }

    /// Total number of indices, output included.
    pub fn arity(&self) -> usize {
        self.dims.len()
    }

    pub fn output_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.dims[1..]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.dims[k + 1];
        }
        strides
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    pub fn add_at(&mut self, idx: &[usize], value: f64) {
        let o = self.offset(idx);
        self.data[o] += value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn norm_max(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn abs(&self) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|x| x.abs()).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::dim("shape mismatch in map difference"));
        }
        Ok(Self {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Contracts every input slot with either a vector or the identity.
    ///
    /// Vector slots are summed out; identity slots stay open, in order,
    /// after the output index. The result has arity
    /// `arity − (number of vector slots)`.
    pub fn contract(&self, slots: &[Slot<'_>]) -> Result<MultilinearMap> {
        let inputs = self.input_dims();
        if slots.len() != inputs.len() {
            return Err(Error::dim(format!(
                "{} slots supplied for a map with {} inputs",
                slots.len(),
                inputs.len()
            )));
        }
        for (k, slot) in slots.iter().enumerate() {
            if let Slot::Vector(v) = slot {
                if v.len() != inputs[k] {
                    return Err(Error::dim(format!(
                        "slot {k} expects length {}, got {}",
                        inputs[k],
                        v.len()
                    )));
                }
            }
        }

        let open: Vec<usize> = slots
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, Slot::Identity))
            .map(|(k, _)| k)
            .collect();
        let open_dims: Vec<usize> = open.iter().map(|&k| inputs[k]).collect();
        let mut out = MultilinearMap::zeros(self.output_dim(), &open_dims);

        let mut idx = vec![0usize; self.dims.len()];
        let mut out_idx = vec![0usize; out.dims.len()];
        for (flat, &value) in self.data.iter().enumerate() {
            if value == 0.0 {
                continue;
            }
            let mut rem = flat;
            for k in (0..self.dims.len()).rev() {
                idx[k] = rem % self.dims[k];
                rem /= self.dims[k];
            }
            let mut weight = value;
            for (k, slot) in slots.iter().enumerate() {
                if let Slot::Vector(v) = slot {
                    weight *= v[idx[k + 1]];
                }
            }
            if weight == 0.0 {
                continue;
            }
            out_idx[0] = idx[0];
            for (p, &k) in open.iter().enumerate() {
                out_idx[p + 1] = idx[k + 1];
            }
            out.add_at(&out_idx, weight);
        }
        Ok(out)
    }

    /// Full contraction with one vector per input slot.
    pub fn apply(&self, args: &[&[f64]]) -> Result<Vec<f64>> {
        let slots: Vec<Slot<'_>> = args.iter().map(|v| Slot::Vector(v)).collect();
        Ok(self.contract(&slots)?.data)
    }

    /// Reinterprets an arity-1 map as a vector.
    pub fn into_vector(self) -> Result<Vec<f64>> {
        if self.dims.len() != 1 {
            return Err(Error::dim(format!(
                "arity {} is not a vector",
                self.dims.len()
            )));
        }
        Ok(self.data)
    }

    /// Reinterprets an arity-2 map as a matrix (output index = row).
    pub fn into_matrix(self) -> Result<DenseMatrix> {
        if self.dims.len() != 2 {
            return Err(Error::dim(format!(
                "arity {} is not a matrix",
                self.dims.len()
            )));
        }
        DenseMatrix::from_row_slice(self.dims[0], self.dims[1], &self.data)
    }

    /// Replaces input slot `slot` by its composition with the linear map `a`:
    /// `T'(…, v, …) = T(…, a v, …)`.
    pub fn pull_back_input(&self, slot: usize, a: &DenseMatrix) -> Result<Self> {
        let axis = slot + 1;
        if axis >= self.dims.len() || a.rows() != self.dims[axis] {
            return Err(Error::dim("pull-back shape mismatch"));
        }
        self.mix_axis(axis, a.cols(), |new, old| a[(old, new)])
    }

    /// Post-composes the output with `b`: `T'(…) = b · T(…)`.
    pub fn push_output(&self, b: &DenseMatrix) -> Result<Self> {
        if b.cols() != self.dims[0] {
            return Err(Error::dim("push-forward shape mismatch"));
        }
        self.mix_axis(0, b.rows(), |new, old| b[(new, old)])
    }

    fn mix_axis(
        &self,
        axis: usize,
        new_len: usize,
        coeff: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut dims = self.dims.clone();
        dims[axis] = new_len;
        let len: usize = dims.iter().product();
        let mut out = Self {
            dims,
            data: vec![0.0; len],
        };
        let mut idx = vec![0usize; self.dims.len()];
        for (flat, &value) in self.data.iter().enumerate() {
            if value == 0.0 {
                continue;
            }
            let mut rem = flat;
            for k in (0..self.dims.len()).rev() {
                idx[k] = rem % self.dims[k];
                rem /= self.dims[k];
            }
            let old = idx[axis];
            for new in 0..new_len {
                let c = coeff(new, old);
                if c != 0.0 {
                    let mut j = idx.clone();
                    j[axis] = new;
                    out.add_at(&j, c * value);
                }
            }
        }
        Ok(out)
    }

    /// Averages over all permutations of input slots `a` and `b`.
    pub fn symmetrize_pair(&mut self, a: usize, b: usize) {
        let (ia, ib) = (a + 1, b + 1);
        if self.dims[ia] != self.dims[ib] {
            return;
        }
        let snapshot = self.clone();
        let mut idx = vec![0usize; self.dims.len()];
        for flat in 0..self.data.len() {
            let mut rem = flat;
            for k in (0..self.dims.len()).rev() {
                idx[k] = rem % self.dims[k];
                rem /= self.dims[k];
            }
            let mut swapped = idx.clone();
            swapped.swap(ia, ib);
            self.data[flat] = 0.5 * (snapshot.get(&idx) + snapshot.get(&swapped));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arity_two_contraction_is_matvec() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0, 0.0], vec![0.0, -1.0, 3.0]]).unwrap();
        let map = MultilinearMap::from_matrix(&m);
        let v = [1.0, 2.0, 3.0];
        let out = map
            .contract(&[Slot::Vector(&v)])
            .unwrap()
            .into_vector()
            .unwrap();
        assert_eq!(out, m.matvec(&v).unwrap());
    }

    #[test]
    fn identity_slot_gives_columnwise_matrix() {
        // T[0, i, j] = i + 10 j on 2×3 inputs
        let mut t = MultilinearMap::zeros(1, &[2, 3]);
        for i in 0..2 {
            for j in 0..3 {
                t.set(&[0, i, j], (i + 10 * j) as f64);
            }
        }
        let u = [1.0, -1.0];
        let m = t
            .contract(&[Slot::Vector(&u), Slot::Identity])
            .unwrap()
            .into_matrix()
            .unwrap();
        assert_eq!(m.rows(), 1);
        assert_eq!(m.cols(), 3);
        for j in 0..3 {
            let mut e = [0.0; 3];
            e[j] = 1.0;
            let col = t.apply(&[&u, &e]).unwrap()[0];
            assert_eq!(m[(0, j)], col);
        }
    }

    #[test]
    fn cusp_normal_form_hessian_along_fiber() {
        // D²f of x + yz + z³ at z = 0
        let h = MultilinearMap::from_data(
            1,
            &[3, 3],
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0],
        )
        .unwrap();
        let n = [0.0, 0.0, 1.0];
        assert_eq!(h.apply(&[&n, &n]).unwrap(), vec![0.0]);
    }

    #[test]
    fn mismatched_slot_is_dimension_error() {
        let t = MultilinearMap::zeros(2, &[3]);
        assert!(matches!(
            t.contract(&[Slot::Vector(&[1.0, 2.0])]),
            Err(Error::Dimension(_))
        ));
        assert!(t.contract(&[]).is_err());
    }

    #[test]
    fn pull_back_matches_direct_evaluation() {
        let mut t = MultilinearMap::zeros(2, &[2, 2]);
        let vals = [1.0, 2.0, -3.0, 0.5, 4.0, 0.0, 1.5, -2.0];
        for (k, v) in vals.iter().enumerate() {
            t.data[k] = *v;
        }
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let p = t.pull_back_input(1, &a).unwrap();
        let u = [0.3, -0.7];
        let v = [1.1, 0.4];
        let av = a.matvec(&v).unwrap();
        assert_eq!(p.apply(&[&u, &v]).unwrap(), t.apply(&[&u, &av]).unwrap());
    }
}
