//! Assembly of the block-sparse prior covariance over
//! `(theta_train, theta_test, f_train, delta)`.
//!
//! Regions carry mutually independent effect and baseline processes, so all
//! theta/f blocks are block-diagonal by region. The boundary differences
//! `delta_b = theta^b - theta^{b+1}` evaluated at boundary `b`'s pseudo
//! points couple only the two adjacent regions, which makes the
//! delta cross blocks banded and the delta square block tridiagonal.

use nalgebra::DMatrix;

use crate::data::{Dataset, Partition, RegionHyperParams};
use crate::error::{Error, Result};
use crate::kernel::gram;
use crate::linalg::{add_diagonal, BASE_JITTER};
use crate::num::Real;
use crate::pseudo::PseudoSet;

/// Region membership of training and test rows, preserving original order
/// inside each region. The engine works in region-major order and maps back
/// through this layout.
#[derive(Debug, Clone)]
pub struct RegionLayout {
    train: Vec<Vec<usize>>,
    test: Vec<Vec<usize>>,
}

impl RegionLayout {
    pub fn new(train: Vec<Vec<usize>>, test: Vec<Vec<usize>>) -> Self {
        debug_assert_eq!(train.len(), test.len());
        Self { train, test }
    }

    pub fn regions(&self) -> usize {
        self.train.len()
    }

    pub fn train_indices(&self, k: usize) -> &[usize] {
        &self.train[k]
    }

    pub fn test_indices(&self, k: usize) -> &[usize] {
        &self.test[k]
    }

    pub fn n(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn m(&self) -> usize {
        self.test.iter().map(Vec::len).sum()
    }

    /// Original train index at each region-major position.
    pub fn train_order(&self) -> Vec<usize> {
        self.train.iter().flatten().copied().collect()
    }

    /// Original test index at each region-major position.
    pub fn test_order(&self) -> Vec<usize> {
        self.test.iter().flatten().copied().collect()
    }
}

/// Covariance of one boundary's difference process against inputs living in
/// region `j`: `+c_lower` when `j` is the boundary's lower region,
/// `-c_upper` when it is the upper one, and zero otherwise.
pub fn delta_cross_cov<R: Real>(
    inputs: &DMatrix<R>,
    boundary_points: &DMatrix<R>,
    lower: usize,
    j: usize,
    gamma_lower: R,
    gamma_upper: R,
) -> Result<DMatrix<R>> {
    let upper = lower + 1;
    if j == lower {
        gram(inputs, boundary_points, gamma_lower)
    } else if j == upper {
        Ok(-gram(inputs, boundary_points, gamma_upper)?)
    } else {
        Ok(DMatrix::zeros(inputs.nrows(), boundary_points.nrows()))
    }
}

/// Covariance between the difference processes of two boundaries in a chain.
/// Identical boundaries sum the two adjacent kernels; boundaries sharing one
/// region contribute the shared region's kernel with a negative sign; all
/// other pairs are zero.
pub fn delta_delta_cov<R: Real>(
    points_a: &DMatrix<R>,
    lower_a: usize,
    points_b: &DMatrix<R>,
    lower_b: usize,
    gamma_theta: &[R],
) -> Result<DMatrix<R>> {
    if lower_a == lower_b {
        let g1 = gram(points_a, points_b, gamma_theta[lower_a])?;
        let g2 = gram(points_a, points_b, gamma_theta[lower_a + 1])?;
        Ok(g1 + g2)
    } else if lower_b == lower_a + 1 {
        // upper region of a == lower region of b
        Ok(-gram(points_a, points_b, gamma_theta[lower_a + 1])?)
    } else if lower_a == lower_b + 1 {
        Ok(-gram(points_a, points_b, gamma_theta[lower_a])?)
    } else {
        Ok(DMatrix::zeros(points_a.nrows(), points_b.nrows()))
    }
}

/// The assembled prior covariance blocks. Square self blocks carry the base
/// diagonal jitter; cross blocks never do.
#[derive(Debug, Clone)]
pub struct BlockPriorCovariance<R: Real> {
    /// Per-region train effect Grams (block diagonal).
    pub theta_nn: Vec<DMatrix<R>>,
    /// Per-region train-by-test effect Grams.
    pub theta_nm: Vec<DMatrix<R>>,
    /// Per-region test effect Grams (block diagonal).
    pub theta_mm: Vec<DMatrix<R>>,
    /// Per-region train baseline Grams (block diagonal).
    pub f_nn: Vec<DMatrix<R>>,
    /// Train-by-delta cross covariance, region-major rows, boundary-major
    /// columns; banded (two adjacent region blocks per boundary).
    pub theta_n_delta: DMatrix<R>,
    /// Test-by-delta cross covariance with the same structure.
    pub theta_m_delta: DMatrix<R>,
    /// Delta self covariance, block tridiagonal.
    pub delta_delta: DMatrix<R>,
    pub layout: RegionLayout,
}

impl<R: Real> BlockPriorCovariance<R> {
    pub fn n(&self) -> usize {
        self.layout.n()
    }

    pub fn m(&self) -> usize {
        self.layout.m()
    }

    pub fn d(&self) -> usize {
        self.delta_delta.nrows()
    }

    fn block_diag(parts: &[DMatrix<R>]) -> DMatrix<R> {
        let total: usize = parts.iter().map(|b| b.nrows()).sum();
        let mut out = DMatrix::zeros(total, total);
        let mut off = 0;
        for b in parts {
            out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
            off += b.nrows();
        }
        out
    }

    /// Dense train effect covariance (region-major).
    pub fn theta_nn_dense(&self) -> DMatrix<R> {
        Self::block_diag(&self.theta_nn)
    }

    /// Dense test effect covariance (region-major).
    pub fn theta_mm_dense(&self) -> DMatrix<R> {
        Self::block_diag(&self.theta_mm)
    }

    /// Dense baseline covariance (region-major).
    pub fn f_nn_dense(&self) -> DMatrix<R> {
        Self::block_diag(&self.f_nn)
    }

    /// Dense train-by-test effect covariance (region-major).
    pub fn theta_nm_dense(&self) -> DMatrix<R> {
        let mut out = DMatrix::zeros(self.n(), self.m());
        let mut row = 0;
        let mut col = 0;
        for b in &self.theta_nm {
            out.view_mut((row, col), b.shape()).copy_from(b);
            row += b.nrows();
            col += b.ncols();
        }
        out
    }

    /// Dense prior over `(theta_n, theta_m, f_n, delta)` in region-major
    /// order; test-scale helper.
    pub fn assemble_dense(&self) -> DMatrix<R> {
        let (n, m, d) = (self.n(), self.m(), self.d());
        let total = n + m + n + d;
        let mut out = DMatrix::zeros(total, total);
        let tnn = self.theta_nn_dense();
        let tnm = self.theta_nm_dense();
        let tmm = self.theta_mm_dense();
        let fnn = self.f_nn_dense();

        out.view_mut((0, 0), (n, n)).copy_from(&tnn);
        out.view_mut((0, n), (n, m)).copy_from(&tnm);
        out.view_mut((n, 0), (m, n)).copy_from(&tnm.transpose());
        out.view_mut((n, n), (m, m)).copy_from(&tmm);
        out.view_mut((n + m, n + m), (n, n)).copy_from(&fnn);
        out.view_mut((0, n + m + n), (n, d)).copy_from(&self.theta_n_delta);
        out.view_mut((n + m + n, 0), (d, n)).copy_from(&self.theta_n_delta.transpose());
        out.view_mut((n, n + m + n), (m, d)).copy_from(&self.theta_m_delta);
        out.view_mut((n + m + n, n), (d, m)).copy_from(&self.theta_m_delta.transpose());
        out.view_mut((n + m + n, n + m + n), (d, d)).copy_from(&self.delta_delta);
        out
    }
}

/// Assemble the prior covariance blocks for a partitioned dataset, a set of
/// test inputs with known region assignment, tuned per-region
/// hyperparameters, and the boundary pseudo points.
pub fn build_prior<R: Real>(
    train: &Dataset<R>,
    test_x: &DMatrix<R>,
    test_assignment: &[usize],
    partition: &Partition<R>,
    hyperparams: &[RegionHyperParams<R>],
    pseudo: &PseudoSet<R>,
) -> Result<BlockPriorCovariance<R>> {
    let k = partition.k();
    if hyperparams.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} hyperparameter sets for {k} regions",
            hyperparams.len()
        )));
    }
    if test_x.nrows() != test_assignment.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} test rows but {} assignments",
            test_x.nrows(),
            test_assignment.len()
        )));
    }
    if test_x.ncols() != train.p() || (pseudo.len() > 0 && pseudo.points.ncols() != train.p()) {
        return Err(Error::DimensionMismatch(
            "train, test, and pseudo inputs must share the covariate dimension".into(),
        ));
    }
    let boundaries = k - 1;
    if pseudo.len() != boundaries * pseudo.b && !(boundaries == 0 && pseudo.is_empty()) {
        return Err(Error::DimensionMismatch(format!(
            "pseudo set holds {} rows, expected B={} per {boundaries} boundaries",
            pseudo.len(),
            pseudo.b
        )));
    }

    let mut test_regions = vec![Vec::new(); k];
    for (i, &r) in test_assignment.iter().enumerate() {
        if r >= k {
            return Err(Error::Invalid(format!("test row {i} assigned to region {r} >= K")));
        }
        test_regions[r].push(i);
    }
    let layout = RegionLayout::new(
        (0..k).map(|r| partition.region(r).to_vec()).collect(),
        test_regions,
    );

    let gamma_theta: Vec<R> = hyperparams.iter().map(|h| h.gamma_theta).collect();
    let jitter = R::of(BASE_JITTER);

    let mut theta_nn = Vec::with_capacity(k);
    let mut theta_nm = Vec::with_capacity(k);
    let mut theta_mm = Vec::with_capacity(k);
    let mut f_nn = Vec::with_capacity(k);
    let mut x_train_regions = Vec::with_capacity(k);
    let mut x_test_regions = Vec::with_capacity(k);
    for r in 0..k {
        let xr = train.x.select_rows(layout.train_indices(r).iter());
        let xt = test_x.select_rows(layout.test_indices(r).iter());
        let mut tnn = gram(&xr, &xr, gamma_theta[r])?;
        add_diagonal(&mut tnn, jitter);
        let mut tmm = gram(&xt, &xt, gamma_theta[r])?;
        add_diagonal(&mut tmm, jitter);
        let mut fr = gram(&xr, &xr, hyperparams[r].gamma_f)?;
        add_diagonal(&mut fr, jitter);
        theta_nn.push(tnn);
        theta_nm.push(gram(&xr, &xt, gamma_theta[r])?);
        theta_mm.push(tmm);
        f_nn.push(fr);
        x_train_regions.push(xr);
        x_test_regions.push(xt);
    }

    let n = layout.n();
    let m = layout.m();
    let d = boundaries * pseudo.b;
    let mut theta_n_delta = DMatrix::zeros(n, d);
    let mut theta_m_delta = DMatrix::zeros(m, d);
    let mut delta_delta = DMatrix::zeros(d, d);

    let train_offsets: Vec<usize> = {
        let mut acc = 0;
        (0..k)
            .map(|r| {
                let o = acc;
                acc += layout.train_indices(r).len();
                o
            })
            .collect()
    };
    let test_offsets: Vec<usize> = {
        let mut acc = 0;
        (0..k)
            .map(|r| {
                let o = acc;
                acc += layout.test_indices(r).len();
                o
            })
            .collect()
    };

    for b in 0..boundaries {
        let pts = pseudo.boundary_rows(b);
        let col = b * pseudo.b;
        for r in [b, b + 1] {
            let cross = delta_cross_cov(
                &x_train_regions[r],
                &pts,
                b,
                r,
                gamma_theta[b],
                gamma_theta[b + 1],
            )?;
            theta_n_delta
                .view_mut((train_offsets[r], col), cross.shape())
                .copy_from(&cross);
            let cross_m = delta_cross_cov(
                &x_test_regions[r],
                &pts,
                b,
                r,
                gamma_theta[b],
                gamma_theta[b + 1],
            )?;
            theta_m_delta
                .view_mut((test_offsets[r], col), cross_m.shape())
                .copy_from(&cross_m);
        }
        for u in 0..boundaries {
            let block =
                delta_delta_cov(&pts, b, &pseudo.boundary_rows(u), u, &gamma_theta)?;
            delta_delta
                .view_mut((col, u * pseudo.b), block.shape())
                .copy_from(&block);
        }
    }
    add_diagonal(&mut delta_delta, jitter);

    Ok(BlockPriorCovariance {
        theta_nn,
        theta_nm,
        theta_mm,
        f_nn,
        theta_n_delta,
        theta_m_delta,
        delta_delta,
        layout,
    })
}
