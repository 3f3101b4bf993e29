//! Entropy ladder `η_ε`, equilibrium projection and the variational
//! projection `Π^ε_f` onto minimizers of `∫ η_ε f dv` at fixed mass.
//!
//! The ladder takes the integer value `k` on `[(k-1)ε, kε)`, so its edges
//! fall on velocity cell edges of a [`PhaseGrid`]. Minimizers of the ladder
//! moment fill `[0, Nε]` completely, vanish above `(N+1)ε` and may place the
//! remaining mass `ρ - Nε` anywhere in the partial step `[Nε, (N+1)ε]`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::phase_grid::{column_mass, fill_equilibrium, ladder_moment, PhaseGrid};

/// Relative tolerance for mass-equality preconditions.
pub const MASS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyLadder {
    eps: f64,
    m_cap: f64,
}

impl EntropyLadder {
    pub fn new(eps: f64, m_cap: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::domain("eps", eps, "(0, inf)"));
        }
        if !(m_cap > 0.0 && m_cap.is_finite()) {
            return Err(Error::domain("M", m_cap, "(0, inf)"));
        }
        Ok(EntropyLadder { eps, m_cap })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Number of steps, `⌈M/ε⌉`; the last one may be truncated at `M`.
    pub fn steps(&self) -> usize {
        snapped_ratio(self.m_cap, self.eps).ceil() as usize
    }

    /// `η_ε(v) = k` for `v ∈ [(k-1)ε, kε)`.
    pub fn eta(&self, v: f64) -> Result<usize> {
        if !(v >= 0.0 && v < self.m_cap) {
            return Err(Error::domain("v", v, format!("[0, {})", self.m_cap)));
        }
        Ok(snapped_ratio(v, self.eps).floor() as usize + 1)
    }

    /// Step values `1..=steps()`, one entry per step.
    pub fn values(&self) -> Vec<usize> {
        (1..=self.steps()).collect()
    }
}

/// `a / b`, snapped to the nearest integer when within round-off of it, so
/// that `0.6 / 0.2` lands on the left-closed cell it names.
fn snapped_ratio(a: f64, b: f64) -> f64 {
    let q = a / b;
    let r = q.round();
    if (q - r).abs() <= 1e-12 * r.abs().max(1.0) {
        r
    } else {
        q
    }
}

/// Indicator of `[0, ρ]` carrying the same mass as `f_col`.
pub fn equilibrium_projection(f_col: &[f64], grid: &PhaseGrid) -> Vec<f64> {
    if is_equilibrium(f_col) {
        return f_col.to_vec();
    }
    let mut out = vec![0.0; f_col.len()];
    fill_equilibrium(&mut out, column_mass(f_col, grid.dv()), grid.dv());
    out
}

/// Ones, then at most one value in `(0, 1)`, then zeros.
pub fn is_equilibrium(col: &[f64]) -> bool {
    let ones = col.iter().take_while(|&&v| v == 1.0).count();
    let rest = &col[ones..];
    match rest.split_first() {
        None => true,
        Some((&edge, tail)) => (0.0..1.0).contains(&edge) && tail.iter().all(|&v| v == 0.0),
    }
}

/// Closed-form minimum of `∫ η f` exactly as printed alongside the ladder:
/// `ε Σ_{k=0}^{N-1} k + ε N (ρ - Nε)` for `N = ⌊ρ/ε⌋ ≥ 1`, else 0.
///
/// This expression is not the minimum of the integer ladder moment (see
/// [`ladder_min_value`]); it is kept for reporting.
pub fn lemma1_min_value(rho: f64, eps: f64) -> Result<f64> {
    check_rho_eps(rho, eps)?;
    let n = snapped_ratio(rho, eps).floor();
    if n < 1.0 {
        return Ok(0.0);
    }
    Ok(eps * n * (n - 1.0) / 2.0 + eps * n * (rho - n * eps))
}

/// Minimum of `∫ η_ε f dv` over `f ∈ [0,1]`, `∫ f = ρ`, for the integer
/// ladder: `ε N(N+1)/2 + (N+1)(ρ - Nε)`.
pub fn ladder_min_value(rho: f64, eps: f64) -> Result<f64> {
    check_rho_eps(rho, eps)?;
    let n = snapped_ratio(rho, eps).floor();
    Ok(eps * n * (n + 1.0) / 2.0 + (n + 1.0) * (rho - n * eps).max(0.0))
}

fn check_rho_eps(rho: f64, eps: f64) -> Result<()> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::domain("rho", rho, "[0, inf)"));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::domain("eps", eps, "(0, inf)"));
    }
    Ok(())
}

/// Greedy minimization of `Σ η_ε(v_j) f_j dv` subject to `f_j ∈ [0,1]`,
/// `Σ f_j dv = ρ`: cells are filled in ascending ladder order, which is
/// optimal for a linear objective with separable box constraints.
///
/// Ladder values are looked up through `ladder` at cell centres, not through
/// the grid's integer indexing.
pub fn brute_force_min(
    rho: f64,
    ladder: &EntropyLadder,
    grid: &PhaseGrid,
) -> Result<(f64, Vec<f64>)> {
    let m = grid.m_cap();
    if !(rho >= 0.0) || rho > m * (1.0 + 1e-12) {
        return Err(Error::domain("rho", rho, format!("[0, {m}]")));
    }
    let nv = grid.nv();
    let dv = grid.dv();
    let eta: Vec<usize> = (0..nv)
        .map(|j| ladder.eta(grid.v_center(j)))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..nv).collect();
    order.sort_by_key(|&j| eta[j]);

    let mut f = vec![0.0; nv];
    let q = (rho / dv).min(nv as f64);
    let full = q.floor() as usize;
    for (k, &j) in order.iter().enumerate() {
        if k < full {
            f[j] = 1.0;
        } else {
            if k == full {
                f[j] = q - full as f64;
            }
            break;
        }
    }
    let value = f
        .iter()
        .zip(&eta)
        .map(|(fj, &k)| fj * k as f64)
        .sum::<f64>()
        * dv;
    Ok((value, f))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionResult {
    /// The projected column `Π^ε_f`.
    pub pi: Vec<f64>,
    pub rho: f64,
    /// `N = ⌊ρ/ε⌋`.
    pub n_steps: usize,
    /// Width of the fill at the bottom of the partial step (`0` when the
    /// profile is truncated instead).
    pub v0: f64,
    /// `Π^ε_f ≥ f` on the partial step.
    pub dominated: bool,
    pub mass_defect: f64,
}

/// Selects the minimizer of the ladder moment that keeps `f`'s profile on
/// the partial step `[Nε, (N+1)ε]`.
///
/// With `r = ρ - Nε` and `s` the mass of `f` on the partial step:
/// if `s ≤ r`, `Π = max(f, 1_[Nε, Nε+w])` there, with `w` the smallest width
/// giving mass `r`; otherwise `f` is cut from the top so that only its lowest
/// mass `r` remains, and the result is flagged as not dominating `f`.
pub fn variational_projection(f_col: &[f64], grid: &PhaseGrid) -> ProjectionResult {
    let mut pi = vec![0.0; f_col.len()];
    let (n_steps, v0, dominated, rho) = project_into(f_col, grid, &mut pi);
    let mass_defect = (column_mass(&pi, grid.dv()) - rho).abs();
    ProjectionResult {
        pi,
        rho,
        n_steps,
        v0,
        dominated,
        mass_defect,
    }
}

/// Allocation-free core of [`variational_projection`]; returns
/// `(N, v0, dominated, rho)`.
pub(crate) fn project_into(
    f_col: &[f64],
    grid: &PhaseGrid,
    pi: &mut [f64],
) -> (usize, f64, bool, f64) {
    let nv = grid.nv();
    let dv = grid.dv();
    debug_assert_eq!(f_col.len(), nv);
    let rho = column_mass(f_col, dv);
    let mut n_steps = snapped_ratio(rho, grid.eps()).floor().max(0.0) as usize;
    // mass of N whole steps as the cell sum sees it, so that filled cells
    // and ρ are measured the same way
    let full_mass = |n: usize| (n * grid.n_sub()) as f64 * dv;
    if n_steps > 0 && rho < full_mass(n_steps) {
        // ρ sits a hair below a step edge: filling N whole steps would
        // overshoot the mass
        n_steps -= 1;
    }
    if is_equilibrium(f_col) {
        // count whole ladder steps from the filled cells so that the
        // structure (ones below Nε) holds exactly
        let ones = f_col.iter().take_while(|&&v| v == 1.0).count();
        pi.copy_from_slice(f_col);
        return (ones / grid.n_sub(), 0.0, true, rho);
    }
    let partial = grid.ladder_cells(n_steps);
    if partial.is_empty() {
        // ρ = M: the full box is the only feasible column
        pi.fill(1.0);
        return (n_steps, 0.0, true, rho);
    }

    pi[..partial.start].fill(1.0);
    pi[partial.end..].fill(0.0);

    let r = rho - full_mass(n_steps);
    let cell = &f_col[partial.clone()];
    let s = column_mass(cell, dv);
    // mass slack for the case decision, and value slack for snapping a
    // cell to its neighbouring level
    let tol = 8.0 * f64::EPSILON * nv as f64 * (1.0 + rho);
    let snap = 4.0 * f64::EPSILON * nv as f64;
    let out = &mut pi[partial.clone()];

    if s <= r {
        // raise the bottom of the partial step to 1 until the mass matches
        let mut need = r - s;
        let mut w = 0.0;
        for (k, (p, &fk)) in out.iter_mut().zip(cell).enumerate() {
            if need <= 0.0 {
                *p = fk;
                continue;
            }
            let gain = (1.0 - fk) * dv;
            if gain <= need {
                *p = 1.0;
                need -= gain;
                w = (k + 1) as f64 * dv;
            } else {
                let level = fk + need / dv;
                *p = if 1.0 - level <= snap { 1.0 } else { level };
                w = k as f64 * dv + dv * need / gain;
                need = 0.0;
            }
        }
        (n_steps, w, true, rho)
    } else {
        // keep the lowest mass r of f on the partial step
        let mut kept = 0.0;
        for (p, &fk) in out.iter_mut().zip(cell) {
            let m = fk * dv;
            if kept + m <= r {
                *p = fk;
                kept += m;
            } else {
                let level = ((r - kept) / dv).max(0.0);
                *p = if fk - level <= snap { fk } else { level };
                kept = r;
            }
        }
        // an excess within round-off still counts as domination
        (n_steps, 0.0, s - r <= tol, rho)
    }
}

/// The printed closed form `Π = 1_[0, Nε+v0] + 1_[Nε+v0, (N+1)ε] f` with
/// `v0 = max{0, ∫_0^{Nε} f + ∫_{(N+1)ε}^M f - Nε}` clipped to `[0, ε]`.
/// It does not conserve mass for every admissible `f`; reported for comparison only.
pub fn closed_form_projection(f_col: &[f64], grid: &PhaseGrid) -> (Vec<f64>, f64) {
    let dv = grid.dv();
    let rho = column_mass(f_col, dv);
    let n = snapped_ratio(rho, grid.eps()).floor() as usize;
    let partial = grid.ladder_cells(n);
    let below = column_mass(&f_col[..partial.start], dv);
    let above = column_mass(&f_col[partial.end..], dv);
    let v0 = (below + above - n as f64 * grid.eps()).clamp(0.0, grid.eps());
    let mut pi = vec![0.0; f_col.len()];
    pi[..partial.start].fill(1.0);
    let edge = partial.start as f64 * dv + v0;
    for j in partial {
        let lo = j as f64 * dv;
        let covered = ((edge - lo) / dv).clamp(0.0, 1.0);
        pi[j] = covered + (1.0 - covered) * f_col[j];
    }
    (pi, v0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma2Outcome {
    /// `Σ |f - π| dv`.
    pub lhs: f64,
    /// `(3/ε) Σ η_ε (f - π) dv`.
    pub rhs: f64,
    pub holds: bool,
}

/// Checks `∫|f - π| ≤ (3/ε) ∫ η_ε (f - π)` with absolute slack `1e-10`.
pub fn lemma2_check(f_col: &[f64], pi_col: &[f64], grid: &PhaseGrid) -> Result<Lemma2Outcome> {
    let dv = grid.dv();
    let (mf, mp) = (column_mass(f_col, dv), column_mass(pi_col, dv));
    if (mf - mp).abs() > MASS_TOL * mf.max(mp).max(1.0) {
        return Err(Error::Precondition(format!(
            "columns carry different mass: {mf} vs {mp}"
        )));
    }
    let lhs = f_col
        .iter()
        .zip(pi_col)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        * dv;
    let rhs = 3.0 / grid.eps() * (ladder_moment(f_col, grid) - ladder_moment(pi_col, grid));
    Ok(Lemma2Outcome {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-10,
    })
}

/// Convex test functions on `[0, M]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ConvexSample {
    Linear,
    Square,
    /// `v²/2`
    HalfSquare,
    /// `|v - c|`
    Kink(f64),
}

impl ConvexSample {
    pub fn value(&self, v: f64) -> f64 {
        match *self {
            ConvexSample::Linear => v,
            ConvexSample::Square => v * v,
            ConvexSample::HalfSquare => 0.5 * v * v,
            ConvexSample::Kink(c) => (v - c).abs(),
        }
    }

    /// A.e. derivative; the kink uses the sign function.
    pub fn slope(&self, v: f64) -> f64 {
        match *self {
            ConvexSample::Linear => 1.0,
            ConvexSample::Square => 2.0 * v,
            ConvexSample::HalfSquare => v,
            ConvexSample::Kink(c) => {
                if v > c {
                    1.0
                } else if v < c {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            ConvexSample::Linear => "v".into(),
            ConvexSample::Square => "v^2".into(),
            ConvexSample::HalfSquare => "v^2/2".into(),
            ConvexSample::Kink(c) => format!("|v-{c}|"),
        }
    }
}

/// `{v, v², |v-ε|, |v-M/2|, |v-(M-ε)|}`.
pub fn standard_convex_family(grid: &PhaseGrid) -> Vec<ConvexSample> {
    let (m, e) = (grid.m_cap(), grid.eps());
    vec![
        ConvexSample::Linear,
        ConvexSample::Square,
        ConvexSample::Kink(e),
        ConvexSample::Kink(m / 2.0),
        ConvexSample::Kink(m - e),
    ]
}

/// `Σ η(v_j)(f_j - π_j) dv` for each sample.
pub fn gibbs_inequality_values(
    f_col: &[f64],
    pi_col: &[f64],
    grid: &PhaseGrid,
    family: &[ConvexSample],
) -> Vec<f64> {
    family
        .iter()
        .map(|eta| weighted_difference(f_col, pi_col, grid, |v| eta.value(v)))
        .collect()
}

/// Minimum over `family` of `Σ η(v_j)(f_j - π_j) dv`.
pub fn gibbs_inequality_check(
    f_col: &[f64],
    pi_col: &[f64],
    grid: &PhaseGrid,
    family: &[ConvexSample],
) -> f64 {
    gibbs_inequality_values(f_col, pi_col, grid, family)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Minimum over `family` of `Σ η'(v_j)(f_j - π_j) dv`, the kinetic-entropy form.
pub fn kinetic_gibbs_check(
    f_col: &[f64],
    pi_col: &[f64],
    grid: &PhaseGrid,
    family: &[ConvexSample],
) -> f64 {
    family
        .iter()
        .map(|eta| weighted_difference(f_col, pi_col, grid, |v| eta.slope(v)))
        .fold(f64::INFINITY, f64::min)
}

fn weighted_difference(
    f_col: &[f64],
    pi_col: &[f64],
    grid: &PhaseGrid,
    w: impl Fn(f64) -> f64,
) -> f64 {
    f_col
        .iter()
        .zip(pi_col)
        .enumerate()
        .map(|(j, (f, p))| w(grid.v_center(j)) * (f - p))
        .sum::<f64>()
        * grid.dv()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_grid::KineticState;

    fn col_grid(m: f64, nv: usize, eps: f64) -> PhaseGrid {
        PhaseGrid::column(m, nv, eps).unwrap()
    }

    #[test]
    fn ladder_lookup() {
        let l = EntropyLadder::new(0.25, 1.0).unwrap();
        assert_eq!(l.eta(0.0).unwrap(), 1);
        assert_eq!(l.eta(0.25).unwrap(), 2);
        assert_eq!(l.steps(), 4);
        let l = EntropyLadder::new(0.3, 1.0).unwrap();
        assert_eq!(l.eta(0.95).unwrap(), 4);
        assert_eq!(l.steps(), 4);
        assert_eq!(l.values(), vec![1, 2, 3, 4]);
        let l = EntropyLadder::new(0.2, 1.0).unwrap();
        assert_eq!(l.eta(0.6).unwrap(), 4);
        assert!(l.eta(1.0).is_err());
        assert!(l.eta(-0.01).is_err());
    }

    #[test]
    fn ladder_is_non_decreasing() {
        let l = EntropyLadder::new(0.07, 1.0).unwrap();
        let mut prev = 0;
        for k in 0..1000 {
            let e = l.eta(k as f64 / 1000.0).unwrap();
            assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn equilibrium_projection_cases() {
        let g = col_grid(1.0, 4, 0.25);
        let eq = vec![1.0, 0.3, 0.0, 0.0];
        assert_eq!(equilibrium_projection(&eq, &g), eq);
        assert_eq!(equilibrium_projection(&[0.5, 0.5, 0.0, 0.0], &g), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(equilibrium_projection(&[1.0; 4], &g), vec![1.0; 4]);
    }

    #[test]
    fn printed_min_formula() {
        assert_eq!(lemma1_min_value(0.0, 0.3).unwrap(), 0.0);
        assert!((lemma1_min_value(0.5, 0.25).unwrap() - 0.25).abs() < 1e-15);
        assert!((lemma1_min_value(0.3, 0.2).unwrap() - 0.02).abs() < 1e-15);
        assert!(lemma1_min_value(-1.0, 0.2).is_err());
        assert!(lemma1_min_value(0.1, 0.0).is_err());
    }

    #[test]
    fn ladder_min_matches_oracle_on_examples() {
        for (rho, eps, nv) in [(0.5, 0.25, 100), (0.3, 0.2, 50), (0.0, 0.1, 10), (1.0, 0.3, 30)] {
            let g = col_grid(1.0, nv, eps);
            let ladder = EntropyLadder::new(eps, 1.0).unwrap();
            let (value, f) = brute_force_min(rho, &ladder, &g).unwrap();
            let closed = ladder_min_value(rho, eps).unwrap();
            assert!((value - closed).abs() <= eps * g.dv(), "{rho} {eps}: {value} vs {closed}");
            assert!((column_mass(&f, g.dv()) - rho).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_force_edges() {
        let g = col_grid(1.0, 20, 0.25);
        let ladder = EntropyLadder::new(0.25, 1.0).unwrap();
        let (v, f) = brute_force_min(0.0, &ladder, &g).unwrap();
        assert_eq!(v, 0.0);
        assert!(f.iter().all(|&x| x == 0.0));
        let (v, f) = brute_force_min(1.0, &ladder, &g).unwrap();
        assert!(f.iter().all(|&x| x == 1.0));
        // full box: 0.25 * (1 + 2 + 3 + 4)
        assert!((v - 2.5).abs() < 1e-12);
        assert!(brute_force_min(1.2, &ladder, &g).is_err());
    }

    #[test]
    fn brute_force_minimizer_is_shift_invariant() {
        // minimizers of ∫ k f and ∫ (k - 1) f coincide; the oracle fills from the bottom
        let g = col_grid(1.0, 40, 0.2);
        let ladder = EntropyLadder::new(0.2, 1.0).unwrap();
        let (_, f) = brute_force_min(0.37, &ladder, &g).unwrap();
        let mut eq = vec![0.0; 40];
        fill_equilibrium(&mut eq, 0.37, g.dv());
        for (a, b) in f.iter().zip(&eq) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_of_equilibrium_is_identity() {
        let g = col_grid(1.0, 50, 0.2);
        for rho in [0.0, 0.13, 0.4, 0.5, 0.77, 1.0] {
            let s = KineticState::from_macro(g, &[rho]).unwrap();
            let p = variational_projection(s.column(0), &g);
            assert_eq!(p.pi, s.column(0), "rho = {rho}");
            assert!(p.dominated);
            assert_eq!(p.v0, 0.0);
        }
    }

    #[test]
    fn projection_half_column() {
        // ρ = 0.5, N = 2, r = s = 0.1
        let g = col_grid(1.0, 20, 0.2);
        let f = vec![0.5; 20];
        let p = variational_projection(&f, &g);
        assert_eq!(p.n_steps, 2);
        assert!(p.dominated);
        assert_eq!(p.v0, 0.0);
        assert!(p.pi[..8].iter().all(|&x| x == 1.0));
        assert!(p.pi[8..12].iter().all(|&x| x == 0.5));
        assert!(p.pi[12..].iter().all(|&x| x == 0.0));
        assert!((column_mass(&p.pi, g.dv()) - 0.5).abs() < 1e-15);
        // printed v0 formula also gives 0 here
        let (_, v0) = closed_form_projection(&f, &g);
        assert_eq!(v0, 0.0);
    }

    #[test]
    fn projection_truncates_when_domination_is_infeasible() {
        // f = 1 on [0.2, 0.7]: ρ = 0.5, N = 2, r = 0.1, s = 0.2
        let g = col_grid(1.0, 20, 0.2);
        let mut f = vec![0.0; 20];
        f[4..14].fill(1.0);
        let p = variational_projection(&f, &g);
        assert!(!p.dominated);
        assert_eq!(p.n_steps, 2);
        assert!(p.pi[..10].iter().all(|&x| x == 1.0));
        assert!(p.pi[10..].iter().all(|&x| x == 0.0));
        assert!(p.mass_defect < 1e-15);
        // the printed closed form puts mass 0.6 here
        let (closed, _) = closed_form_projection(&f, &g);
        assert!((column_mass(&closed, g.dv()) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn projection_fills_bottom_of_partial_step() {
        // f = 0.375 on [0, 0.8]: ρ = 0.3
        let g = col_grid(1.0, 20, 0.2);
        let mut f = vec![0.0; 20];
        f[..16].fill(0.375);
        let p = variational_projection(&f, &g);
        // N = 1, r = 0.1, s = 0.075, need 0.025 = 0.625 * dv * c  -> c = 0.8 of the first cell
        assert_eq!(p.n_steps, 1);
        assert!(p.dominated);
        assert!((p.v0 - 0.8 * 0.05).abs() < 1e-12);
        assert!((p.pi[4] - (0.375 + 0.5)).abs() < 1e-12);
        assert_eq!(&p.pi[5..8], &[0.375; 3]);
        assert!(p.mass_defect < 1e-15);
        for (a, b) in p.pi[4..8].iter().zip(&f[4..8]) {
            assert!(a >= b);
        }
    }

    #[test]
    fn lemma2_trivial_and_perturbed() {
        let g = col_grid(1.0, 40, 0.25);
        let eq = KineticState::from_macro(g, &[0.25]).unwrap();
        let out = lemma2_check(eq.column(0), eq.column(0), &g).unwrap();
        assert_eq!((out.lhs, out.rhs, out.holds), (0.0, 0.0, true));

        // move δ of mass from the top of [0, ε] to above 2ε
        let mut f = eq.column(0).to_vec();
        f[9] -= 0.4;
        f[25] += 0.4;
        let p = variational_projection(&f, &g);
        assert!(p.dominated);
        let out = lemma2_check(&f, &p.pi, &g).unwrap();
        assert!(out.lhs > 0.0 && out.holds && out.rhs >= out.lhs, "{out:?}");
    }

    #[test]
    fn lemma2_rejects_unequal_mass() {
        let g = col_grid(1.0, 10, 0.2);
        let a = vec![0.5; 10];
        let b = vec![0.4; 10];
        assert!(matches!(lemma2_check(&a, &b, &g), Err(Error::Precondition(_))));
    }

    #[test]
    fn gibbs_zero_on_fixed_points() {
        let g = col_grid(1.0, 40, 0.25);
        let fam = standard_convex_family(&g);
        let eq = KineticState::from_macro(g, &[0.61]).unwrap();
        let p = variational_projection(eq.column(0), &g);
        assert_eq!(gibbs_inequality_check(eq.column(0), &p.pi, &g, &fam), 0.0);
    }

    #[test]
    fn gibbs_monotone_members_hold_and_kinks_can_fail() {
        // f = 1 on [0.4, 0.6], ε = 0.5: dominated, Π = 1 on [0, 0.1] ∪ [0.4, 0.5]
        let g = col_grid(1.0, 20, 0.5);
        let mut f = vec![0.0; 20];
        f[8..12].fill(1.0);
        let p = variational_projection(&f, &g);
        assert!(p.dominated);
        let vals = gibbs_inequality_values(&f, &p.pi, &g, &standard_convex_family(&g));
        assert!(vals[0] >= 0.0 && vals[1] >= 0.0);
        // ∫|v - 1/2| (f - Π) = 0.005 - 0.045
        assert!((vals[3] + 0.04).abs() < 1e-12, "{vals:?}");
        // the derivative form holds for every member
        assert!(kinetic_gibbs_check(&f, &p.pi, &g, &standard_convex_family(&g)) >= -1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn column_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
            (5usize..120, 1usize..10).prop_flat_map(|(steps, n_sub)| {
                let nv = steps * n_sub;
                (Just(nv), Just(n_sub), proptest::collection::vec(0.0f64..=1.0, nv))
            })
        }

        proptest! {
            #[test]
            fn projection_invariants((nv, n_sub, f) in column_strategy()) {
                let eps = n_sub as f64 / nv as f64;
                let g = col_grid(1.0, nv, eps);
                let p = variational_projection(&f, &g);
                prop_assert!(p.mass_defect <= 1e-12 * nv as f64);
                prop_assert!(p.pi.iter().all(|&x| (0.0..=1.0).contains(&x)));
                let cells = g.ladder_cells(p.n_steps);
                prop_assert!(p.pi[..cells.start].iter().all(|&x| x == 1.0));
                prop_assert!(p.pi[cells.end..].iter().all(|&x| x == 0.0));
                if p.dominated {
                    for j in cells {
                        prop_assert!(p.pi[j] >= f[j]);
                    }
                    let l2 = lemma2_check(&f, &p.pi, &g).unwrap();
                    prop_assert!(l2.holds, "{:?}", l2);
                }
                let ladder = EntropyLadder::new(eps, 1.0).unwrap();
                let (best, _) = brute_force_min(p.rho, &ladder, &g).unwrap();
                prop_assert!((ladder_moment(&p.pi, &g) - best).abs() <= eps * g.dv());
            }
        }
    }
}
