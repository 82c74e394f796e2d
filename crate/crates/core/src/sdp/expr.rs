use std::collections::BTreeMap;

use nalgebra::DMatrix;

/// Matrix-valued affine function `C + Σ_v y_v · M_v` of the decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    constant: DMatrix<f64>,
    terms: BTreeMap<usize, DMatrix<f64>>,
}

impl AffineExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { constant: DMatrix::zeros(rows, cols), terms: BTreeMap::new() }
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        Self { constant: m, terms: BTreeMap::new() }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn constant_part(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (&usize, &DMatrix<f64>)> {
        self.terms.iter()
    }

    /// Adds `y_var · coeff`.
    pub fn add_term(&mut self, var: usize, coeff: DMatrix<f64>) {
        assert_eq!(coeff.shape(), self.shape(), "coefficient shape mismatch");
        match self.terms.get_mut(&var) {
            Some(existing) => *existing += coeff,
            None => {
                self.terms.insert(var, coeff);
            }
        }
    }

    fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        Self {
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(k, v)| (*k, f(v))).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "affine add shape mismatch");
        let mut out = self.clone();
        out.constant += &other.constant;
        for (k, v) in &other.terms {
            out.add_term(*k, v.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|m| m * s)
    }

    pub fn transpose(&self) -> Self {
        self.map(|m| m.transpose())
    }

    /// `self · m`
    pub fn mul_right(&self, m: &DMatrix<f64>) -> Self {
        self.map(|c| c * m)
    }

    /// `m · self`
    pub fn mul_left(&self, m: &DMatrix<f64>) -> Self {
        self.map(|c| m * c)
    }

    /// `X + Xᵀ`
    pub fn sym(&self) -> Self {
        self.map(|m| m + m.transpose())
    }

    /// `I_k ⊗ X`
    pub fn kron_identity(&self, k: usize) -> Self {
        self.map(|m| DMatrix::<f64>::identity(k, k).kronecker(m))
    }

    /// Value at the given variable assignment.
    pub fn eval(&self, values: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (k, v) in &self.terms {
            out += v * values[*k];
        }
        out
    }

    /// Stacks expressions vertically; all must share a column count.
    pub fn vstack(parts: &[AffineExpr]) -> Self {
        let cols = parts.first().map_or(0, |p| p.shape().1);
        let rows: usize = parts.iter().map(|p| p.shape().0).sum();
        let mut out = Self::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            assert_eq!(p.shape().1, cols, "vstack column mismatch");
            let h = p.shape().0;
            out.constant.view_mut((offset, 0), (h, cols)).copy_from(&p.constant);
            for (k, v) in &p.terms {
                let mut coeff = DMatrix::zeros(rows, cols);
                coeff.view_mut((offset, 0), (h, cols)).copy_from(v);
                out.add_term(*k, coeff);
            }
            offset += h;
        }
        out
    }

    /// Arranges a rectangular grid of equally sized blocks.
    pub fn from_grid(grid: &[Vec<AffineExpr>]) -> Self {
        let rows: Vec<AffineExpr> = grid
            .iter()
            .map(|row| Self::vstack(&row.iter().map(|e| e.transpose()).collect::<Vec<_>>()).transpose())
            .collect();
        Self::vstack(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algebra_matches_dense_evaluation() {
        let mut x = AffineExpr::constant(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        x.add_term(0, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        x.add_term(1, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        let vals = [0.5, -2.0];
        let dense = x.eval(&vals);
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, -1.0, 1.0, 0.0]);
        assert_eq!(x.mul_right(&m).eval(&vals), &dense * &m);
        assert_eq!(x.sym().eval(&vals), &dense + dense.transpose());
        assert_eq!(x.kron_identity(2).eval(&vals), DMatrix::<f64>::identity(2, 2).kronecker(&dense));
        let grid = AffineExpr::from_grid(&[vec![x.clone(), x.scale(2.0)], vec![x.transpose(), x.clone()]]);
        let g = grid.eval(&vals);
        assert_eq!(g.view((0, 2), (2, 2)).clone_owned(), &dense * 2.0);
        assert_eq!(g.view((2, 0), (2, 2)).clone_owned(), dense.transpose());
    }
}
