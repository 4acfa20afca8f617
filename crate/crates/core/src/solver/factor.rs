//! Product-form basis inverse: B⁻¹ = Eₖ⋯E₁, each E an elementary column
//! transformation ("eta").

#[derive(Debug, Clone, Copy)]
struct Eta {
    row: usize,
    pivot: f64,
    start: usize,
    end: usize,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct EtaFile {
    etas: Vec<Eta>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

const DROP_TOL: f64 = 1e-14;

impl EtaFile {
    pub fn clear(&mut self) {
        self.etas.clear();
        self.idx.clear();
        self.val.clear();
    }

    pub fn len(&self) -> usize {
        self.etas.len()
    }

    /// Append the transformation pivoting dense column `col` on `row`.
    pub fn push(&mut self, row: usize, col: &[f64]) {
        let start = self.idx.len();
        for (i, &v) in col.iter().enumerate() {
            if i != row && v.abs() > DROP_TOL {
                self.idx.push(i);
                self.val.push(v);
            }
        }
        self.etas.push(Eta {
            row,
            pivot: col[row],
            start,
            end: self.idx.len(),
        });
    }

    /// x ← B⁻¹x.
    pub fn ftran(&self, x: &mut [f64]) {
        for e in &self.etas {
            let xr = x[e.row];
            if xr == 0.0 {
                continue;
            }
            let xr = xr / e.pivot;
            x[e.row] = xr;
            for k in e.start..e.end {
                x[self.idx[k]] -= self.val[k] * xr;
            }
        }
    }

    /// yᵀ ← yᵀB⁻¹.
    pub fn btran(&self, y: &mut [f64]) {
        for e in self.etas.iter().rev() {
            let mut s = y[e.row];
            for k in e.start..e.end {
                s -= self.val[k] * y[self.idx[k]];
            }
            y[e.row] = s / e.pivot;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_small_matrix() {
        // B = [[2, 1], [1, 3]] built by pivoting column 0 on row 0, then column 1 on row 1.
        let mut f = EtaFile::default();
        f.push(0, &[2.0, 1.0]);
        let mut c1 = vec![1.0, 3.0];
        f.ftran(&mut c1);
        f.push(1, &c1);
        let mut e0 = vec![1.0, 0.0];
        f.ftran(&mut e0);
        // B⁻¹ = 1/5 [[3, -1], [-1, 2]]
        assert!((e0[0] - 0.6).abs() < 1e-12 && (e0[1] + 0.2).abs() < 1e-12);
        let mut y = vec![0.0, 1.0];
        f.btran(&mut y);
        assert!((y[0] + 0.2).abs() < 1e-12 && (y[1] - 0.4).abs() < 1e-12);
    }
}
