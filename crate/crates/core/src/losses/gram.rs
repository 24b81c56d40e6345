use serde::{Deserialize, Serialize};

use super::{sign, TapGrid};
use crate::error::{invalid, Result};
use crate::model::linalg::{gemm, MatMut, MatRef};

/// How tap rows are grouped before forming Gram matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramBlocking {
    /// Consecutive groups of this many rows; the last group may be shorter.
    Rows(usize),
    /// One block holding every row.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GramOptions {
    pub blocking: GramBlocking,
    /// Scale every row to unit length before the product.
    #[serde(default)]
    pub normalize_rows: bool,
}

impl GramOptions {
    /// One block per STFT frame.
    pub fn per_frame(bins: usize) -> Self {
        Self {
            blocking: GramBlocking::Rows(bins),
            normalize_rows: false,
        }
    }

    pub fn full() -> Self {
        Self {
            blocking: GramBlocking::Full,
            normalize_rows: false,
        }
    }

    fn ranges(&self, rows: usize) -> Result<Vec<(usize, usize)>> {
        let size = match self.blocking {
            GramBlocking::Full => rows,
            GramBlocking::Rows(0) => return Err(invalid!("Gram block size must be positive")),
            GramBlocking::Rows(n) => n,
        };
        Ok((0..rows)
            .step_by(size)
            .map(|start| (start, (start + size).min(rows)))
            .collect())
    }
}

/// Symmetric `size x size` matrix of row inner products, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub size: usize,
    pub data: Vec<f64>,
}

impl GramMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }
}

fn normalized(z: &TapGrid) -> (TapGrid, Vec<f64>) {
    let mut out = z.clone();
    let norms = out
        .data
        .chunks_exact_mut(z.cols.max(1))
        .map(|r| {
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                r.iter_mut().for_each(|v| *v /= n);
            }
            n
        })
        .collect();
    (out, norms)
}

fn block_gram(z: &TapGrid, start: usize, end: usize) -> GramMatrix {
    let r = end - start;
    let mut data = vec![0.0; r * r];
    let block = &z.data[start * z.cols..end * z.cols];
    gemm(
        1.0,
        MatRef::dense(block, r, z.cols),
        MatRef::dense(block, r, z.cols).t(),
        0.0,
        MatMut::dense(&mut data, r, r),
    );
    GramMatrix { size: r, data }
}

/// Per-block Gram matrices `Z_B Z_B^T`.
pub fn gram(z: &TapGrid, opts: &GramOptions) -> Result<Vec<GramMatrix>> {
    if z.rows == 0 || z.cols == 0 {
        return Err(invalid!("Gram matrix of an empty tap"));
    }
    let z = if opts.normalize_rows { normalized(z).0 } else { z.clone() };
    Ok(opts
        .ranges(z.rows)?
        .into_iter()
        .map(|(a, b)| block_gram(&z, a, b))
        .collect())
}

/// Mean absolute difference between teacher and student Gram matrices,
/// averaged over blocks. Column counts may differ.
pub fn soft_loss_selfsim(z_t: &TapGrid, z_s: &TapGrid, opts: &GramOptions) -> Result<f64> {
    Ok(soft_loss_selfsim_grad(z_t, z_s, opts)?.0)
}

/// [`soft_loss_selfsim`] and its gradient with respect to the student tap.
pub fn soft_loss_selfsim_grad(z_t: &TapGrid, z_s: &TapGrid, opts: &GramOptions) -> Result<(f64, TapGrid)> {
    if z_t.rows != z_s.rows {
        return Err(invalid!(
            "self-similarity needs equal row counts, teacher {} vs student {}",
            z_t.rows,
            z_s.rows
        ));
    }
    if z_t.rows == 0 || z_t.cols == 0 || z_s.cols == 0 {
        return Err(invalid!("self-similarity of an empty tap"));
    }
    z_t.check_finite("teacher tap")?;
    z_s.check_finite("student tap")?;
    let (t, _) = if opts.normalize_rows { normalized(z_t) } else { (z_t.clone(), vec![]) };
    let (s, s_norms) = if opts.normalize_rows { normalized(z_s) } else { (z_s.clone(), vec![]) };
    let ranges = opts.ranges(z_s.rows)?;
    let nblocks = ranges.len() as f64;
    let mut total = 0.0;
    let mut grad = TapGrid::zeros(s.rows, s.cols);
    for (a, b) in ranges {
        let r = b - a;
        let gt = block_gram(&t, a, b);
        let gs = block_gram(&s, a, b);
        let scale = 1.0 / ((r * r) as f64 * nblocks);
        let mut d = vec![0.0; r * r];
        let mut block_sum = 0.0;
        for ((dv, x), y) in d.iter_mut().zip(&gs.data).zip(&gt.data) {
            block_sum += (x - y).abs();
            *dv = 2.0 * sign(x - y) * scale;
        }
        total += block_sum * scale;
        let zs = &s.data[a * s.cols..b * s.cols];
        gemm(
            1.0,
            MatRef::dense(&d, r, r),
            MatRef::dense(zs, r, s.cols),
            0.0,
            MatMut::dense(&mut grad.data[a * s.cols..b * s.cols], r, s.cols),
        );
    }
    if opts.normalize_rows {
        for ((g, zn), n) in grad
            .data
            .chunks_exact_mut(s.cols)
            .zip(s.data.chunks_exact(s.cols))
            .zip(&s_norms)
        {
            if *n > 0.0 {
                let dot: f64 = g.iter().zip(zn).map(|(a, b)| a * b).sum();
                for (gv, zv) in g.iter_mut().zip(zn) {
                    *gv = (*gv - zv * dot) / n;
                }
            }
        }
    }
    Ok((total, grad))
}
