//! Weighted-least-squares edge-preserving smoothing.
//!
//! The filter output `u` minimizes
//!
//! ```text
//! sum_p (u_p - g_p)^2 + lambda * (ax_p (d_x u)_p^2 + ay_p (d_y u)_p^2)
//! ```
//!
//! with smoothness weights `a = (|d l|^alpha + epsilon)^-1` taken from the
//! log of a guidance image. Setting the gradient to zero gives the sparse
//! symmetric system `(I + lambda L_a) u = g`, where `L_a` is the weighted
//! graph Laplacian of the 4-neighbour pixel grid. That system is solved with
//! Jacobi-preconditioned conjugate gradients.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::image::Plane;

/// Relative residual at which the conjugate-gradient solve stops.
pub const CG_TOLERANCE: f64 = 1e-6;
/// Iteration cap for the conjugate-gradient solve.
pub const CG_MAX_ITERATIONS: usize = 2000;
/// Largest pixel count accepted by [`dense_oracle_solve`].
pub const DENSE_ORACLE_MAX_PIXELS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WlsParams {
    /// Smoothness strength.
    pub lambda: f64,
    /// Gradient sensitivity exponent.
    pub alpha: f64,
    /// Regularizer preventing division by zero in flat regions.
    pub epsilon: f64,
}

impl Default for WlsParams {
    fn default() -> Self {
        Self { lambda: 2.0, alpha: 2.0, epsilon: 1e-4 }
    }
}

impl WlsParams {
    pub fn new(lambda: f64, alpha: f64, epsilon: f64) -> Result<Self> {
        let p = Self { lambda, alpha, epsilon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Parameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Parameter(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Parameter(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Horizontal and vertical smoothness weights from the log of `guidance`.
///
/// Forward differences are used. The last column of `ax` and last row of `ay`
/// have no edge; they hold `1 / epsilon` and are ignored by assembly.
pub fn compute_smoothness_weights(guidance: &Plane, params: &WlsParams) -> Result<(Plane, Plane)> {
    params.validate()?;
    if let Some(v) = guidance.data().iter().find(|&&v| v <= 0.0) {
        return Err(Error::Range(format!("guidance must be positive, found {v}")));
    }
    let log = guidance.map(f64::ln);
    let (h, w) = (guidance.height(), guidance.width());
    let weight = |d: f64| 1.0 / (d.abs().powf(params.alpha) + params.epsilon);
    let ax = Plane::from_fn(h, w, |y, x| {
        if x + 1 < w {
            weight(log.get(y, x + 1) - log.get(y, x))
        } else {
            weight(0.0)
        }
    });
    let ay = Plane::from_fn(h, w, |y, x| {
        if y + 1 < h {
            weight(log.get(y + 1, x) - log.get(y, x))
        } else {
            weight(0.0)
        }
    });
    Ok((ax, ay))
}

/// Sparse symmetric five-point system `(I + lambda L_a)`.
///
/// Each off-diagonal coefficient is stored once: `east[y * (w - 1) + x]`
/// couples `(y, x)` with `(y, x + 1)` and `south[y * w + x]` couples `(y, x)`
/// with `(y + 1, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFivePointSystem {
    height: usize,
    width: usize,
    diagonal: Vec<f64>,
    east: Vec<f64>,
    south: Vec<f64>,
}

impl SparseFivePointSystem {
    pub fn n(&self) -> usize {
        self.diagonal.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn east_weights(&self) -> &[f64] {
        &self.east
    }

    pub fn south_weights(&self) -> &[f64] {
        &self.south
    }

    /// Off-diagonal coefficients coupling pixel `p` to its neighbours.
    fn incident(&self, p: usize) -> impl Iterator<Item = f64> + '_ {
        let (y, x) = (p / self.width, p % self.width);
        let w = self.width;
        let east = (x + 1 < w).then(|| self.east[y * (w - 1) + x]);
        let west = (x > 0).then(|| self.east[y * (w - 1) + x - 1]);
        let south = (y + 1 < self.height).then(|| self.south[y * w + x]);
        let north = (y > 0).then(|| self.south[(y - 1) * w + x]);
        [east, west, south, north].into_iter().flatten()
    }

    /// Sum of the off-diagonal coefficients in row `p`.
    pub fn off_diagonal_row_sum(&self, p: usize) -> f64 {
        self.incident(p).sum()
    }

    /// `out = A x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        let (h, w) = (self.height, self.width);
        for (o, (d, v)) in out.iter_mut().zip(self.diagonal.iter().zip(x)) {
            *o = d * v;
        }
        for y in 0..h {
            for xx in 0..w.saturating_sub(1) {
                let c = self.east[y * (w - 1) + xx];
                let (p, q) = (y * w + xx, y * w + xx + 1);
                out[p] += c * x[q];
                out[q] += c * x[p];
            }
        }
        for y in 0..h.saturating_sub(1) {
            for xx in 0..w {
                let c = self.south[y * w + xx];
                let (p, q) = (y * w + xx, (y + 1) * w + xx);
                out[p] += c * x[q];
                out[q] += c * x[p];
            }
        }
    }

    /// Positive diagonal and strict diagonal dominance, which together with
    /// symmetric storage make the matrix positive definite.
    pub fn check_spd(&self) -> Result<()> {
        for p in 0..self.n() {
            let d = self.diagonal[p];
            let off: f64 = self.incident(p).map(f64::abs).sum();
            if !(d > 0.0 && d > off) {
                return Err(Error::Numerical(format!(
                    "row {p} is not strictly diagonally dominant (diag {d}, off {off})"
                )));
            }
        }
        Ok(())
    }
}

/// Builds `I + lambda L_a` from smoothness weights.
pub fn assemble_system(ax: &Plane, ay: &Plane, lambda: f64) -> Result<SparseFivePointSystem> {
    ax.check_same_shape(ay, "smoothness weights")?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let (h, w) = (ax.height(), ax.width());
    let mut diagonal = vec![1.0; h * w];
    let mut east = vec![0.0; h * w.saturating_sub(1)];
    let mut south = vec![0.0; h.saturating_sub(1) * w];
    for y in 0..h {
        for x in 0..w.saturating_sub(1) {
            let c = -lambda * ax.get(y, x);
            east[y * (w - 1) + x] = c;
            diagonal[y * w + x] -= c;
            diagonal[y * w + x + 1] -= c;
        }
    }
    for y in 0..h.saturating_sub(1) {
        for x in 0..w {
            let c = -lambda * ay.get(y, x);
            south[y * w + x] = c;
            diagonal[y * w + x] -= c;
            diagonal[(y + 1) * w + x] -= c;
        }
    }
    let system = SparseFivePointSystem { height: h, width: w, diagonal, east, south };
    system.check_spd()?;
    Ok(system)
}

/// Convergence record of one conjugate-gradient solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final relative residual `|b - A u| / |b|`.
    pub relative_residual: f64,
    /// `r^T M^-1 r` after every iteration, starting with the initial guess.
    pub preconditioned_residuals: Vec<f64>,
    /// Quadratic energy `x^T A x / 2 - b^T x` after every iteration, starting
    /// with the initial guess. Conjugate gradients never increase it.
    pub energies: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients on `system u = b` from `x0`.
pub fn pcg_solve(
    system: &SparseFivePointSystem,
    b: &[f64],
    x0: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = system.n();
    if b.len() != n || x0.len() != n {
        return Err(Error::Shape(format!(
            "system has {n} unknowns, rhs {} and guess {}",
            b.len(),
            x0.len()
        )));
    }
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
                preconditioned_residuals: vec![0.0],
                energies: vec![0.0],
            },
        ));
    }
    let inv_diag: Vec<f64> = system.diagonal.iter().map(|d| 1.0 / d).collect();

    let mut x = x0.to_vec();
    let mut ap = vec![0.0; n];
    system.matvec(&x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    // with r = b - A x, x^T A x / 2 - b^T x = -x^T (b + r) / 2
    let energy = |x: &[f64], r: &[f64]| -0.5 * x.iter().zip(b).zip(r).map(|((xi, bi), ri)| xi * (bi + ri)).sum::<f64>();
    let mut history = vec![rz];
    let mut energies = vec![energy(&x, &r)];
    let mut residual = dot(&r, &r).sqrt() / b_norm;

    let mut iterations = 0;
    while residual > tolerance {
        if iterations == max_iterations {
            return Err(Error::Solver { iterations, residual });
        }
        system.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Numerical(format!("non-positive curvature {pap} in CG")));
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_next;
        history.push(rz);
        energies.push(energy(&x, &r));
        residual = dot(&r, &r).sqrt() / b_norm;
        iterations += 1;
    }
    Ok((
        x,
        SolveStats { iterations, relative_residual: residual, preconditioned_residuals: history, energies },
    ))
}

/// Smooths `input` with weights from `guidance`, returning solver statistics.
pub fn solve_wls_with_stats(
    input: &Plane,
    guidance: &Plane,
    params: &WlsParams,
) -> Result<(Plane, SolveStats)> {
    input.check_same_shape(guidance, "WLS input/guidance")?;
    params.validate()?;
    let (ax, ay) = compute_smoothness_weights(guidance, params)?;
    if params.lambda == 0.0 {
        let stats = SolveStats {
            iterations: 0,
            relative_residual: 0.0,
            preconditioned_residuals: vec![],
            energies: vec![],
        };
        return Ok((input.clone(), stats));
    }
    let system = assemble_system(&ax, &ay, params.lambda)?;
    let (u, stats) = pcg_solve(&system, input.data(), input.data(), CG_TOLERANCE, CG_MAX_ITERATIONS)?;
    Ok((Plane::new(input.height(), input.width(), u)?, stats))
}

/// Edge-preserving WLS smoothing of `input` guided by `guidance` (> 0).
pub fn solve_wls(input: &Plane, guidance: &Plane, params: &WlsParams) -> Result<Plane> {
    solve_wls_with_stats(input, guidance, params).map(|(u, _)| u)
}

/// Reference solve: materializes the dense matrix of the quadratic form edge
/// by edge and factors it with Cholesky. Only meant for small test inputs.
pub fn dense_oracle_solve(input: &Plane, guidance: &Plane, params: &WlsParams) -> Result<Plane> {
    input.check_same_shape(guidance, "WLS input/guidance")?;
    let n = input.len();
    if n > DENSE_ORACLE_MAX_PIXELS {
        return Err(Error::Size(format!(
            "dense oracle limited to {DENSE_ORACLE_MAX_PIXELS} pixels, got {n}"
        )));
    }
    let (ax, ay) = compute_smoothness_weights(guidance, params)?;
    let (h, w) = (input.height(), input.width());
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut add_edge = |p: usize, q: usize, weight: f64| {
        let c = params.lambda * weight;
        a[(p, p)] += c;
        a[(q, q)] += c;
        a[(p, q)] -= c;
        a[(q, p)] -= c;
    };
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                add_edge(p, p + 1, ax.get(y, x));
            }
            if y + 1 < h {
                add_edge(p, p + w, ay.get(y, x));
            }
        }
    }
    let b = DVector::from_column_slice(input.data());
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Numerical("dense WLS matrix is not positive definite".into()))?;
    let u = chol.solve(&b);
    Plane::new(h, w, u.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(rng: &mut impl Rng, h: usize, w: usize) -> Plane {
        Plane::from_fn(h, w, |_, _| rng.random_range(0.01..1.0))
    }

    #[test]
    fn constant_guidance_weights() {
        let g = Plane::filled(3, 4, 0.3);
        let (ax, ay) = compute_smoothness_weights(&g, &WlsParams::default()).unwrap();
        for &v in ax.data().iter().chain(ay.data()) {
            assert!((v - 10_000.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unit_log_gradient_weight() {
        let g = Plane::new(1, 2, vec![1.0, std::f64::consts::E]).unwrap();
        let (ax, _) = compute_smoothness_weights(&g, &WlsParams::default()).unwrap();
        assert!((ax.get(0, 0) - 0.999_900_009_999).abs() < 1e-9);
    }

    #[test]
    fn weights_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_plane(&mut rng, 6, 6);
        let params = WlsParams::default();
        let (ax, ay) = compute_smoothness_weights(&g, &params).unwrap();
        for &v in ax.data().iter().chain(ay.data()) {
            assert!(v > 0.0 && v <= 1.0 / params.epsilon);
        }
    }

    #[test]
    fn nonpositive_guidance_rejected() {
        let g = Plane::new(1, 2, vec![0.5, 0.0]).unwrap();
        assert!(matches!(
            compute_smoothness_weights(&g, &WlsParams::default()),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn lambda_zero_is_identity_system() {
        let ax = Plane::filled(3, 3, 5.0);
        let s = assemble_system(&ax, &ax, 0.0).unwrap();
        assert!(s.diagonal().iter().all(|&d| d == 1.0));
        assert!(s.east_weights().iter().chain(s.south_weights()).all(|&c| c == 0.0));
    }

    #[test]
    fn two_pixel_system() {
        let w = 0.75;
        let lambda = 2.0;
        let ax = Plane::new(1, 2, vec![w, 123.0]).unwrap();
        let ay = Plane::new(1, 2, vec![9.0, 9.0]).unwrap();
        let s = assemble_system(&ax, &ay, lambda).unwrap();
        assert_eq!(s.diagonal(), &[1.0 + lambda * w, 1.0 + lambda * w]);
        assert_eq!(s.east_weights(), &[-lambda * w]);
        assert!(s.south_weights().is_empty());
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_plane(&mut rng, 5, 7);
        let (ax, ay) = compute_smoothness_weights(&g, &WlsParams::default()).unwrap();
        let s = assemble_system(&ax, &ay, 2.0).unwrap();
        for p in 0..s.n() {
            let row = s.diagonal()[p] - 1.0 + s.off_diagonal_row_sum(p);
            assert!(row.abs() <= 1e-9 * s.diagonal()[p], "row {p}: {row}");
        }
    }

    #[test]
    fn shape_mismatch() {
        let a = Plane::filled(2, 2, 1.0);
        let b = Plane::filled(2, 3, 1.0);
        assert!(matches!(assemble_system(&a, &b, 1.0), Err(Error::Shape(_))));
        assert!(matches!(solve_wls(&a, &b, &WlsParams::default()), Err(Error::Shape(_))));
    }

    #[test]
    fn constant_input_is_fixed_point() {
        let p = Plane::filled(6, 5, 0.42);
        for lambda in [0.5, 2.0, 50.0] {
            let params = WlsParams { lambda, ..Default::default() };
            let u = solve_wls(&p, &p, &params).unwrap();
            assert!(u.data().iter().all(|&v| (v - 0.42).abs() < 1e-12));
        }
    }

    #[test]
    fn lambda_zero_returns_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_plane(&mut rng, 4, 4);
        let params = WlsParams { lambda: 0.0, ..Default::default() };
        assert_eq!(solve_wls(&p, &p, &params).unwrap(), p);
        assert_eq!(dense_oracle_solve(&p, &p, &params).unwrap(), p);
    }

    #[test]
    fn agrees_with_dense_oracle_4x4() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let p = random_plane(&mut rng, 4, 4);
            let params = WlsParams::default();
            let u = solve_wls(&p, &p, &params).unwrap();
            let v = dense_oracle_solve(&p, &p, &params).unwrap();
            for (a, b) in u.data().iter().zip(v.data()) {
                assert!((a - b).abs() < 1e-6);
            }
            assert!((v.mean() - p.mean()).abs() < 1e-9);
        }
    }

    #[test]
    fn dense_oracle_size_limit() {
        let p = Plane::filled(65, 64, 0.5);
        assert!(matches!(
            dense_oracle_solve(&p, &p, &WlsParams::default()),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_plane(&mut rng, 16, 16);
        let (ax, ay) = compute_smoothness_weights(&p, &WlsParams::default()).unwrap();
        let s = assemble_system(&ax, &ay, 2.0).unwrap();
        match pcg_solve(&s, p.data(), p.data(), 1e-14, 2) {
            Err(Error::Solver { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-14);
            }
            other => panic!("expected solver error, got {other:?}"),
        }
    }
}
