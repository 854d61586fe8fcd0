//! Parabolic semijets on lattices, the two-sided 3α matrix inequality, and a
//! checker for the conclusion of the theorem of sums at the terminal time.

use rand::Rng;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::fields::GridFunction;
use crate::linalg::{least_squares, Mat, Vector};
use crate::operators::{random_symmetric, uniform};
use crate::scalar::{smax, smin, Scalar};

/// A parabolic jet `(b, p, X)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Jet<S> {
    pub b: S,
    pub p: Vector<S>,
    #[serde(rename = "X")]
    pub x: Mat<S>,
}

impl<S: Scalar> Jet<S> {
    pub fn new(b: S, p: Vector<S>, x: Mat<S>) -> Self {
        Self {
            b,
            p,
            x: x.symmetrize(),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(S::zero(), Vector::zeros(dim), Mat::zeros(dim))
    }

    /// Second-order expansion increment at displacement `(τ, d)`.
    pub fn expansion(&self, tau: S, d: &Vector<S>) -> S {
        self.b * tau + self.p.dot(d) + S::half() * self.x.quad_form(d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JetKind {
    /// `P^{2,+}`: the expansion bounds `u` from above.
    Super,
    /// `P^{2,−}`: the expansion bounds `u` from below.
    Sub,
}

#[derive(Clone, Copy, Debug)]
pub struct MembershipOptions<S> {
    pub radius: S,
    /// Defaults to `10·(Δx + Δt)` when `None`.
    pub tol: Option<S>,
    /// Restrict to the relative-to-`Q` jet, allowing the base point at `t = T`.
    pub relative_to_q: bool,
    pub kind: JetKind,
}

impl<S: Scalar> MembershipOptions<S> {
    pub fn superjet(radius: S) -> Self {
        Self {
            radius,
            tol: None,
            relative_to_q: false,
            kind: JetKind::Super,
        }
    }

    pub fn subjet(radius: S) -> Self {
        Self {
            kind: JetKind::Sub,
            ..Self::superjet(radius)
        }
    }

    pub fn relative_to_q(mut self) -> Self {
        self.relative_to_q = true;
        self
    }

    pub fn with_tol(mut self, tol: S) -> Self {
        self.tol = Some(tol);
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MembershipReport<S> {
    pub pass: bool,
    /// Largest `±(u − expansion) − tol·(|t−s| + |x−z|²)` over the scan.
    pub max_violation: S,
    pub worst_slice: usize,
    pub worst_index: usize,
    pub tol: S,
}

/// Default membership tolerance `10·(Δx + Δt)`.
pub fn default_jet_tol<S: Scalar>(u: &GridFunction<S>) -> S {
    S::lit(10.0) * (u.dx() + u.dt())
}

/// Tests whether `jet` is a (discrete) semijet of `u` at `(slice, index)`.
pub fn jet_membership<S: Scalar>(
    u: &GridFunction<S>,
    slice: usize,
    index: usize,
    jet: &Jet<S>,
    opts: &MembershipOptions<S>,
) -> Result<MembershipReport<S>> {
    let last = u.n_slices() - 1;
    if slice > last || index >= u.lattice().len() {
        return Err(LabError::OffLattice(format!("({slice}, {index}) outside the lattice")));
    }
    if !opts.relative_to_q && (slice == 0 || slice == last) {
        return Err(LabError::OffLattice(format!(
            "slice {slice} has no two-sided time neighbourhood; use the relative-to-Q variant at t = T"
        )));
    }
    if opts.relative_to_q && slice == 0 {
        return Err(LabError::OffLattice("t = 0 is not in (0, T]".into()));
    }
    let tol = opts.tol.unwrap_or_else(|| default_jet_tol(u));
    let lat = u.lattice();
    let dt = u.dt();
    let dx = lat.dx();
    let offsets = lat.offsets_within(opts.radius);
    let kr = (opts.radius / dt + S::lit(1e-9)).floor().to_usize().unwrap_or(0);
    let k_lo = slice.saturating_sub(kr).max(if opts.relative_to_q { 1 } else { 0 });
    let k_hi = (slice + kr).min(last);
    let sign = match opts.kind {
        JetKind::Super => S::one(),
        JetKind::Sub => -S::one(),
    };
    let base = u.get(slice, index);
    let slack = S::epsilon() * S::lit(256.0) * smax(S::one(), u.sup_norm());
    let mut worst = (S::zero(), slice, index);
    for k in k_lo..=k_hi {
        let tau = dt * (S::from_usize_lossy(k) - S::from_usize_lossy(slice));
        for off in &offsets {
            let Some(j) = lat.shift(index, *off) else { continue };
            let mut d = Vector::zeros(lat.dim());
            for a in 0..lat.dim() {
                d[a] = dx * S::from_isize(off[a]).unwrap_or(S::zero());
            }
            let excess = sign * (u.get(k, j) - base - jet.expansion(tau, &d));
            let v = excess - tol * (tau.abs() + d.norm_sq());
            if v > worst.0 {
                worst = (v, k, j);
            }
        }
    }
    Ok(MembershipReport {
        pass: worst.0 <= slack,
        max_violation: worst.0,
        worst_slice: worst.1,
        worst_index: worst.2,
        tol,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TerminalMonotonicityReport<S> {
    pub pass: bool,
    /// `(b′, max violation)` for every lowered slope tested.
    pub steps: Vec<(S, S)>,
}

/// Checks that lowering the time slope of a terminal superjet relative to
/// `Q` keeps it a superjet.
pub fn terminal_monotonicity_check<S: Scalar>(
    u: &GridFunction<S>,
    index: usize,
    jet: &Jet<S>,
    b_steps: usize,
    delta: S,
    radius: S,
) -> Result<TerminalMonotonicityReport<S>> {
    let last = u.n_slices() - 1;
    let opts = MembershipOptions::superjet(radius).relative_to_q();
    let base = jet_membership(u, last, index, jet, &opts)?;
    if !base.pass {
        return Err(LabError::PreconditionFailed(format!(
            "base jet is not a member (violation {:.3e})",
            base.max_violation.as_f64()
        )));
    }
    let mut steps = Vec::with_capacity(b_steps);
    let mut pass = true;
    for k in 1..=b_steps {
        let lowered = Jet {
            b: jet.b - delta * S::from_usize_lossy(k),
            ..*jet
        };
        let r = jet_membership(u, last, index, &lowered, &opts)?;
        pass &= r.pass;
        steps.push((lowered.b, r.max_violation));
    }
    Ok(TerminalMonotonicityReport { pass, steps })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MatrixPairReport<S> {
    pub pass: bool,
    /// `λ_min(diag(X, −Y) + 3αI)`.
    pub left_margin: S,
    /// `λ_min(3α[[I, −I], [−I, I]] − diag(X, −Y))`.
    pub right_margin: S,
    /// `λ_min(Y − X)`, implied by the right inequality.
    pub order_margin: S,
}

/// `3α[[I, −I], [−I, I]]`.
pub fn coupling_block<S: Scalar>(alpha: S, dim: usize) -> Mat<S> {
    let i = Mat::scalar(dim, S::lit(3.0) * alpha);
    Mat::blocks(&i, &(-i), &(-i), &i)
}

/// Validates `−3α diag(I, I) ≤ diag(X, −Y) ≤ 3α [[I, −I], [−I, I]]`.
pub fn validate_matrix_pair<S: Scalar>(x: &Mat<S>, y: &Mat<S>, alpha: S) -> MatrixPairReport<S> {
    let n = x.dim();
    let three_a = S::lit(3.0) * alpha;
    let left_margin = smin(x.min_eigenvalue(), -y.max_eigenvalue()) + three_a;
    let d = Mat::block_diag(x, &(-*y));
    let right_margin = (coupling_block(alpha, n) - d).min_eigenvalue();
    let order_margin = (*y - *x).min_eigenvalue();
    let tol = S::eig_tol();
    MatrixPairReport {
        pass: left_margin >= -tol && right_margin >= -tol,
        left_margin,
        right_margin,
        order_margin,
    }
}

pub const MAX_PAIR_REJECTIONS: usize = 1000;

/// Random PSD matrix with spectral norm one, conjugated by a random rotation.
fn unit_psd<S: Scalar>(dim: usize, rng: &mut impl Rng) -> Mat<S> {
    if dim == 1 {
        return Mat::identity(1);
    }
    let (_, v) = random_symmetric::<S>(rng, dim, S::one()).sym_eigen();
    let mut q = Mat::zeros(dim);
    let top = rng.gen_range(0..dim);
    for k in 0..dim {
        let lam = if k == top {
            S::one()
        } else {
            uniform(rng, S::zero(), S::one())
        };
        for i in 0..dim {
            for j in 0..dim {
                q.set(i, j, q.get(i, j) + lam * v.get(i, k) * v.get(j, k));
            }
        }
    }
    q.symmetrize()
}

/// Samples `X = −sQ`, `Y = (β − s)Q` with `s ∈ [0, α]`, `β ∈ [0, 3α]` and
/// keeps the first pair passing [`validate_matrix_pair`].
pub fn generate_matrix_pair<S: Scalar>(alpha: S, dim: usize, rng: &mut impl Rng) -> Result<(Mat<S>, Mat<S>)> {
    if !(alpha > S::zero()) {
        return Err(LabError::PreconditionFailed(format!("α must be positive, got {alpha}")));
    }
    for _ in 0..MAX_PAIR_REJECTIONS {
        let q = unit_psd::<S>(dim, rng);
        let s = uniform(rng, S::zero(), alpha);
        let beta = uniform(rng, S::zero(), S::lit(3.0) * alpha);
        let x = q.scale(-s);
        let y = q.scale(beta - s);
        if validate_matrix_pair(&x, &y, alpha).pass {
            return Ok((x, y));
        }
    }
    Err(LabError::SamplingExhausted(MAX_PAIR_REJECTIONS))
}

/// Least-squares quadratic jet of `u` at `(slice, index)` from the slices
/// `slice − window + 1 ..= slice` (one-sided in time) and lattice points
/// within `radius_cells` cells.
pub fn fit_jet<S: Scalar>(
    u: &GridFunction<S>,
    slice: usize,
    index: usize,
    window: usize,
    radius_cells: usize,
) -> Result<Jet<S>> {
    let lat = u.lattice();
    let n = lat.dim();
    if slice >= u.n_slices() || index >= lat.len() {
        return Err(LabError::OffLattice(format!("({slice}, {index}) outside the lattice")));
    }
    let k_lo = (slice + 1).saturating_sub(window.max(1));
    let with_time = slice > k_lo;
    let offsets = lat.offsets_within(lat.dx() * S::from_usize_lossy(radius_cells));
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for k in k_lo..=slice {
        let tau = S::from_usize_lossy(k) - S::from_usize_lossy(slice);
        for off in &offsets {
            let Some(j) = lat.shift(index, *off) else { continue };
            let xi: Vec<S> = (0..n).map(|a| S::from_isize(off[a]).unwrap_or(S::zero())).collect();
            let mut row = vec![S::one()];
            if with_time {
                row.push(tau);
            }
            row.extend_from_slice(&xi);
            for a in 0..n {
                for c in a..n {
                    let w = if a == c { S::half() } else { S::one() };
                    row.push(w * xi[a] * xi[c]);
                }
            }
            rows.push(row);
            rhs.push(u.get(k, j));
        }
    }
    let coef = least_squares(&rows, &rhs)
        .ok_or_else(|| LabError::PreconditionFailed("jet fit is singular (too few neighbours)".into()))?;
    let dx = lat.dx();
    let mut pos = 1;
    let b = if with_time {
        pos += 1;
        coef[1] / u.dt()
    } else {
        S::zero()
    };
    let mut p = Vector::zeros(n);
    for a in 0..n {
        p[a] = coef[pos + a] / dx;
    }
    pos += n;
    let mut x = Mat::zeros(n);
    for a in 0..n {
        for c in a..n {
            let v = coef[pos] / (dx * dx);
            x.set(a, c, v);
            x.set(c, a, v);
            pos += 1;
        }
    }
    Ok(Jet::new(b, p, x))
}

#[derive(Clone, Debug, Serialize)]
pub struct TosArgmax<S> {
    pub t: S,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub value: S,
}

#[derive(Clone, Debug, Serialize)]
pub struct TosMargins<S> {
    pub left_block: S,
    pub right_block: S,
    pub gradient: S,
    pub slope_sum: S,
}

/// JSON record of one terminal theorem-of-sums check.
#[derive(Clone, Debug, Serialize)]
pub struct TosReport<S> {
    pub argmax: TosArgmax<S>,
    pub fitted_jets: [Jet<S>; 2],
    /// Whether a fitted Hessian was lifted to the `−3α` floor.
    pub lifted: [bool; 2],
    pub margins: TosMargins<S>,
    pub pass: bool,
}

/// `w(t, x₁, x₂) = u₁(t, x₁) + u₂(t, x₂) − (α/2)|x₁ − x₂|²`.
fn doubled<S: Scalar>(u1: &GridFunction<S>, u2: &GridFunction<S>, alpha: S, k: usize, i1: usize, i2: usize) -> S {
    let lat = u1.lattice();
    let d = lat.point(i1) - lat.point(i2);
    u1.get(k, i1) + u2.get(k, i2) - alpha * S::half() * d.norm_sq()
}

/// Checks the conclusion of the theorem of sums at a terminal argmax.
///
/// The argmax `(T, ẑ₁, ẑ₂)` must be a lattice local max of `w`; jets are
/// fitted one-sidedly in time, Hessians below `−3α` are lifted to `−3α`
/// (superjets stay superjets when `X` grows), and the report carries the
/// margins of the gradient identities, both block bounds with `ε = 1/α`,
/// and `b₁ + b₂ ≥ b`.
pub fn tos_terminal_check<S: Scalar>(
    u1: &GridFunction<S>,
    u2: &GridFunction<S>,
    alpha: S,
    z1: usize,
    z2: usize,
    b: S,
    tol: Option<S>,
) -> Result<TosReport<S>> {
    u1.check_compatible(u2)?;
    let lat = *u1.lattice();
    let last = u1.n_slices() - 1;
    if z1 >= lat.len() || z2 >= lat.len() {
        return Err(LabError::OffLattice(format!(
            "argmax indices ({z1}, {z2}) outside the lattice"
        )));
    }
    let w0 = doubled(u1, u2, alpha, last, z1, z2);
    let slack = S::epsilon() * S::lit(256.0) * smax(S::one(), w0.abs());
    let unit = lat.offsets_within(lat.dx());
    for k in last.saturating_sub(1)..=last {
        for o1 in &unit {
            let Some(j1) = lat.shift(z1, *o1) else { continue };
            for o2 in &unit {
                let Some(j2) = lat.shift(z2, *o2) else { continue };
                let w = doubled(u1, u2, alpha, k, j1, j2);
                if w > w0 + slack {
                    return Err(LabError::NotAnArgmax {
                        neighbour: format!("(slice {k}, x1 {j1}, x2 {j2})"),
                        excess: (w - w0).as_f64(),
                    });
                }
            }
        }
    }

    let tol = tol.unwrap_or_else(|| default_jet_tol(u1));
    let mut jets = [fit_jet(u1, last, z1, 3, 3)?, fit_jet(u2, last, z2, 3, 3)?];
    let floor = -S::lit(3.0) * alpha;
    let mut lifted = [false; 2];
    for (jet, flag) in jets.iter_mut().zip(lifted.iter_mut()) {
        if jet.x.min_eigenvalue() < floor {
            jet.x = jet.x.map_eigenvalues(|l| smax(l, floor));
            *flag = true;
        }
    }

    let d = lat.point(z1) - lat.point(z2);
    let target = d.scale(alpha);
    let grad_err = smax((jets[0].p - target).norm(), (jets[1].p + target).norm());
    let grad_tol =
        S::two() * (S::two() * alpha + jets[0].x.spectral_norm() + jets[1].x.spectral_norm() + S::one()) * lat.dx();
    let blocks = Mat::block_diag(&jets[0].x, &jets[1].x);
    let left_block = blocks.min_eigenvalue() + S::lit(3.0) * alpha;
    let right_block = (coupling_block(alpha, lat.dim()) - blocks).min_eigenvalue();
    let margins = TosMargins {
        left_block,
        right_block,
        gradient: grad_tol - grad_err,
        slope_sum: jets[0].b + jets[1].b - b + tol,
    };
    let eig = S::eig_tol();
    let pass = margins.left_block >= -eig
        && margins.right_block >= -tol
        && margins.gradient >= S::zero()
        && margins.slope_sum >= S::zero();
    Ok(TosReport {
        argmax: TosArgmax {
            t: u1.horizon(),
            z1: lat.point(z1).to_f64_vec(),
            z2: lat.point(z2).to_f64_vec(),
            value: w0,
        },
        fitted_jets: jets,
        lifted,
        margins,
        pass,
    })
}

/// Lattice argmax of `w` on the final slice (lexicographic first-found).
pub fn terminal_doubled_argmax<S: Scalar>(
    u1: &GridFunction<S>,
    u2: &GridFunction<S>,
    alpha: S,
) -> Result<(usize, usize, S)> {
    u1.check_compatible(u2)?;
    let last = u1.n_slices() - 1;
    let n = u1.lattice().len();
    let mut best = (0, 0, -S::infinity());
    for i1 in 0..n {
        for i2 in 0..n {
            let w = doubled(u1, u2, alpha, last, i1, i2);
            if w > best.2 {
                best = (i1, i2, w);
            }
        }
    }
    Ok(best)
}

/// Whether the global lattice max of `w` over all slices sits on the final slice.
pub fn doubled_max_is_terminal<S: Scalar>(u1: &GridFunction<S>, u2: &GridFunction<S>, alpha: S) -> Result<bool> {
    u1.check_compatible(u2)?;
    let last = u1.n_slices() - 1;
    let n = u1.lattice().len();
    let (_, _, wt) = terminal_doubled_argmax(u1, u2, alpha)?;
    for k in 0..last {
        for i1 in 0..n {
            for i2 in 0..n {
                if doubled(u1, u2, alpha, k, i1, i2) > wt {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Boundary, SpatialLattice};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quad_grid() -> GridFunction<f64> {
        let lat = SpatialLattice::new(1, 1.0, 0.02, Boundary::Clamped).unwrap();
        GridFunction::from_fn_slices(lat, 0.01, 101, |t, x| t + 0.5 * x[0] * x[0])
    }

    fn m1(v: f64) -> Mat<f64> {
        Mat::from_rows(&[&[v]])
    }

    #[test]
    fn smooth_expansion_is_both_jets() {
        let u = quad_grid();
        let z = u.lattice().index_of(&Vector::from_slice(&[0.0])).unwrap();
        let jet = Jet::new(1.0, Vector::from_slice(&[0.0]), m1(1.0));
        let sup = jet_membership(&u, 50, z, &jet, &MembershipOptions::superjet(0.2)).unwrap();
        let sub = jet_membership(&u, 50, z, &jet, &MembershipOptions::subjet(0.2)).unwrap();
        assert!(sup.pass && sub.pass);
    }

    #[test]
    fn larger_hessian_is_only_a_superjet() {
        let u = quad_grid();
        let z = u.lattice().index_of(&Vector::from_slice(&[0.0])).unwrap();
        let jet = Jet::new(1.0, Vector::from_slice(&[0.0]), m1(2.0));
        assert!(
            jet_membership(&u, 50, z, &jet, &MembershipOptions::superjet(0.2))
                .unwrap()
                .pass
        );
        let sub = jet_membership(&u, 50, z, &jet, &MembershipOptions::subjet(0.2)).unwrap();
        assert!(!sub.pass);
        assert!(sub.max_violation > 0.0);
    }

    #[test]
    fn terminal_q_jet_with_negative_slope() {
        let lat = SpatialLattice::new(1, 1.0, 0.1, Boundary::Clamped).unwrap();
        let u = GridFunction::from_fn_slices(lat, 0.1, 11, |_, _| 0.0);
        let z = lat.index_of(&Vector::from_slice(&[0.0])).unwrap();
        let jet = Jet::new(-1.0, Vector::zeros(1), Mat::zeros(1));
        let opts = MembershipOptions::superjet(0.3).relative_to_q();
        assert!(jet_membership(&u, 10, z, &jet, &opts).unwrap().pass);
        let err = jet_membership(&u, 10, z, &jet, &MembershipOptions::superjet(0.3));
        assert!(matches!(err, Err(LabError::OffLattice(_))));
    }

    #[test]
    fn terminal_monotonicity_examples() {
        let lat = SpatialLattice::new(1, 1.0, 0.1, Boundary::Clamped).unwrap();
        let z = lat.index_of(&Vector::from_slice(&[0.0])).unwrap();
        let zero = GridFunction::from_fn_slices(lat, 0.1, 11, |_, _| 0.0);
        let r = terminal_monotonicity_check(&zero, z, &Jet::zero(1), 5, 0.1, 0.3).unwrap();
        assert!(r.pass && r.steps.len() == 5);
        let lin = GridFunction::from_fn_slices(lat, 0.1, 11, |t, _| t);
        let jet = Jet::new(1.0, Vector::zeros(1), Mat::zeros(1));
        assert!(terminal_monotonicity_check(&lin, z, &jet, 10, 0.1, 0.3).unwrap().pass);
        let bad = Jet::new(5.0, Vector::zeros(1), Mat::scalar(1, -100.0));
        assert!(matches!(
            terminal_monotonicity_check(&lin, z, &bad, 3, 0.1, 0.3),
            Err(LabError::PreconditionFailed(_))
        ));
    }

    #[test]
    fn matrix_pair_examples() {
        assert!(validate_matrix_pair(&Mat::zeros(2), &Mat::zeros(2), 0.7).pass);
        assert!(validate_matrix_pair(&m1(0.0), &m1(2.0), 1.0).pass);
        let r = validate_matrix_pair(&m1(1.0), &m1(1.0), 1.0);
        assert!(!r.pass && r.right_margin < 0.0);
    }

    #[test]
    fn generated_pairs_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &alpha in &[0.5, 1.0, 10.0] {
            for dim in [1, 2] {
                for _ in 0..200 {
                    let (x, y) = generate_matrix_pair(alpha, dim, &mut rng).unwrap();
                    let r = validate_matrix_pair(&x, &y, alpha);
                    assert!(r.pass && r.order_margin >= -1e-10);
                }
            }
        }
        for _ in 0..100 {
            let (x, y) = generate_matrix_pair(1e-8, 2, &mut rng).unwrap();
            assert!(x.max_abs() <= 4e-8 && y.max_abs() <= 4e-8);
        }
        let (x, y) = generate_matrix_pair(1.0, 1, &mut rng).unwrap();
        assert!(x.get(0, 0) <= 0.0 && y.get(0, 0) - x.get(0, 0) <= 3.0);
    }

    #[test]
    fn coupling_identity() {
        for &alpha in &[0.5, 1.0, 7.0] {
            for dim in [1, 2] {
                let i = Mat::scalar(dim, alpha);
                let a = Mat::blocks(&i, &(-i), &(-i), &i);
                let lhs = a + (a * a).scale(1.0 / alpha);
                assert!((lhs - coupling_block(alpha, dim)).max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fit_recovers_quadratic() {
        let u = quad_grid();
        let z = u.lattice().index_of(&Vector::from_slice(&[0.3])).unwrap();
        let jet = fit_jet(&u, 100, z, 3, 3).unwrap();
        assert!((jet.b - 1.0).abs() < 1e-8);
        assert!((jet.p[0] - 0.3).abs() < 1e-8);
        assert!((jet.x.get(0, 0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fit_in_two_dimensions() {
        let lat = SpatialLattice::<f64>::new(2, 1.0, 0.1, Boundary::Clamped).unwrap();
        let u = GridFunction::from_fn_slices(lat, 0.05, 4, |t, x: &Vector<f64>| {
            2.0 * t + x[0] - x[1] + x[0] * x[1] + 1.5 * x[1] * x[1]
        });
        let z = lat.index_of(&Vector::from_slice(&[0.2, -0.1])).unwrap();
        let jet = fit_jet(&u, 3, z, 3, 3).unwrap();
        assert!((jet.b - 2.0).abs() < 1e-8);
        assert!((jet.p[0] - (1.0 - 0.1)).abs() < 1e-8);
        assert!((jet.p[1] - (-1.0 + 0.2 - 0.3)).abs() < 1e-8);
        assert!((jet.x.get(0, 1) - 1.0).abs() < 1e-6);
        assert!((jet.x.get(1, 1) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn tos_trivial_and_quadratic() {
        let lat = SpatialLattice::<f64>::new(1, 1.0, 0.05, Boundary::Clamped).unwrap();
        let zero = GridFunction::from_fn_slices(lat, 0.05, 6, |_, _| 0.0);
        let z = lat.index_of(&Vector::from_slice(&[0.0])).unwrap();
        let r = tos_terminal_check(&zero, &zero, 1.0, z, z, 0.0, None).unwrap();
        assert!(r.pass);
        assert!(r.fitted_jets[0].x.max_abs() < 1e-10);

        let u1 = GridFunction::from_fn_slices(lat, 0.05, 6, |_, x| -x[0] * x[0]);
        let (a1, a2, _) = terminal_doubled_argmax(&u1, &zero, 1.0).unwrap();
        assert_eq!((a1, a2), (z, z));
        let r = tos_terminal_check(&u1, &zero, 1.0, a1, a2, 0.0, None).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.fitted_jets[0].x.get(0, 0) + 2.0).abs() < 1e-6);

        let err = tos_terminal_check(&u1, &zero, 1.0, z + 3, z, 0.0, None);
        assert!(matches!(err, Err(LabError::NotAnArgmax { .. })));
    }

    #[test]
    fn tos_report_serializes_with_expected_keys() {
        let lat = SpatialLattice::new(1, 1.0, 0.1, Boundary::Clamped).unwrap();
        let zero = GridFunction::from_fn_slices(lat, 0.1, 4, |_, _| 0.0);
        let z = lat.index_of(&Vector::from_slice(&[0.0])).unwrap();
        let r = tos_terminal_check(&zero, &zero, 1.0, z, z, 0.0, None).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in ["left_block", "right_block", "gradient", "slope_sum"] {
            assert!(v["margins"].get(key).is_some());
        }
        assert!(v.get("argmax").is_some() && v.get("fitted_jets").is_some());
    }
}
