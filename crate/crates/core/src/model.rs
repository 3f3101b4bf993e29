//! Flux functions `A: [0, M] -> R^d` and the non-degeneracy scan.
//!
//! Each component is a polynomial (coefficients in ascending degree) or a
//! piecewise polynomial whose pieces are written in the local variable
//! `v - knot`. Derivatives are exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polynomial helpers on ascending-degree coefficient slices.
pub mod poly {
    pub fn eval(coeffs: &[f64], x: f64) -> f64 {
        coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
        coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| k as f64 * c)
            .collect()
    }

    fn trimmed(coeffs: &[f64]) -> &[f64] {
        let len = coeffs
            .iter()
            .rposition(|&c| c != 0.0)
            .map_or(0, |k| k + 1);
        &coeffs[..len]
    }

    /// Real roots of the polynomial strictly inside `(a, b)`, sorted.
    ///
    /// Roots of the derivative split the interval into monotone pieces, each
    /// of which holds at most one root; those are bracketed and bisected.
    /// Roots without a sign change (even multiplicity) are only reported if
    /// they land exactly on a critical point.
    pub fn roots_in(coeffs: &[f64], a: f64, b: f64) -> Vec<f64> {
        let p = trimmed(coeffs);
        match p.len() {
            0 | 1 => Vec::new(),
            2 => {
                let r = -p[0] / p[1];
                if r > a && r < b {
                    vec![r]
                } else {
                    Vec::new()
                }
            }
            _ => {
                let mut nodes = vec![a];
                nodes.extend(roots_in(&derivative(p), a, b));
                nodes.push(b);
                let mut roots: Vec<f64> = Vec::new();
                for w in nodes.windows(2) {
                    let (x0, x1) = (w[0], w[1]);
                    let (p0, p1) = (eval(p, x0), eval(p, x1));
                    if p0 == 0.0 && x0 > a {
                        roots.push(x0);
                        continue;
                    }
                    if p0 * p1 < 0.0 {
                        roots.push(bisect(p, x0, x1, p0));
                    }
                }
                roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + y.abs()));
                roots
            }
        }
    }

    fn bisect(p: &[f64], mut lo: f64, mut hi: f64, p_lo: f64) -> f64 {
        let lo_negative = p_lo < 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let pm = eval(p, mid);
            if pm == 0.0 {
                return mid;
            }
            if (pm < 0.0) == lo_negative {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// One scalar component `A_i`.
#[derive(Debug, Clone, PartialEq)]
pub enum Component {
    Poly(Vec<f64>),
    /// `pieces[k]` applies on `[knots[k], knots[k+1])` in the variable `v - knots[k]`;
    /// the first and last pieces extend beyond the outer knots.
    Spline { knots: Vec<f64>, pieces: Vec<Vec<f64>> },
}

impl Component {
    fn locate(&self, v: f64) -> (&[f64], f64) {
        match self {
            Component::Poly(c) => (c, v),
            Component::Spline { knots, pieces } => {
                let k = knots[1..knots.len() - 1]
                    .iter()
                    .take_while(|&&t| t <= v)
                    .count();
                (&pieces[k], v - knots[k])
            }
        }
    }

    pub fn value(&self, v: f64) -> f64 {
        let (c, s) = self.locate(v);
        poly::eval(c, s)
    }

    pub fn slope(&self, v: f64) -> f64 {
        let (c, s) = self.locate(v);
        c.iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &ck)| acc * s + k as f64 * ck)
    }

    pub fn curvature(&self, v: f64) -> f64 {
        let (c, s) = self.locate(v);
        poly::eval(&poly::derivative(&poly::derivative(c)), s)
    }

    /// Points in `(a, b)` where the slope may change sign: roots of the
    /// slope on each piece plus interior knots.
    pub fn slope_sign_breaks(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = Vec::new();
        match self {
            Component::Poly(c) => out.extend(poly::roots_in(&poly::derivative(c), a, b)),
            Component::Spline { knots, pieces } => {
                let n = pieces.len();
                for (k, piece) in pieces.iter().enumerate() {
                    let lo = if k == 0 { f64::NEG_INFINITY } else { knots[k] };
                    let hi = if k + 1 == n { f64::INFINITY } else { knots[k + 1] };
                    let (lo, hi) = (lo.max(a), hi.min(b));
                    if lo >= hi {
                        continue;
                    }
                    if lo > a {
                        out.push(lo);
                    }
                    let d = poly::derivative(piece);
                    out.extend(
                        poly::roots_in(&d, lo - knots[k], hi - knots[k])
                            .into_iter()
                            .map(|r| r + knots[k]),
                    );
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// Serializable flux description: `{"dim": 1, "poly": [[0.0, 0.0, 0.5]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxDef {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poly: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spline: Option<Vec<SplineDef>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplineDef {
    pub knots: Vec<f64>,
    pub pieces: Vec<Vec<f64>>,
}

impl FluxDef {
    pub fn burgers() -> Self {
        FluxDef::polynomial(vec![vec![0.0, 0.0, 0.5]])
    }

    pub fn polynomial(poly: Vec<Vec<f64>>) -> Self {
        FluxDef {
            dim: poly.len(),
            poly: Some(poly),
            spline: None,
        }
    }

    fn components(&self) -> Result<Vec<Component>> {
        let comps: Vec<Component> = match (&self.poly, &self.spline) {
            (Some(p), None) => {
                if let Some(k) = p.iter().position(|c| c.is_empty()) {
                    return Err(Error::config(
                        format!("flux.poly[{k}]"),
                        "empty coefficient list",
                    ));
                }
                p.iter().cloned().map(Component::Poly).collect()
            }
            (None, Some(s)) => s
                .iter()
                .enumerate()
                .map(|(k, sd)| {
                    let field = format!("flux.spline[{k}]");
                    if sd.knots.len() != sd.pieces.len() + 1 || sd.pieces.is_empty() {
                        return Err(Error::config(field, "need knots.len() == pieces.len() + 1"));
                    }
                    if sd.knots.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(Error::config(field, "knots must be strictly increasing"));
                    }
                    if sd.pieces.iter().any(Vec::is_empty) {
                        return Err(Error::config(field, "empty piece"));
                    }
                    Ok(Component::Spline {
                        knots: sd.knots.clone(),
                        pieces: sd.pieces.clone(),
                    })
                })
                .collect::<Result<_>>()?,
            _ => {
                return Err(Error::config(
                    "flux",
                    "exactly one of `poly` or `spline` must be given",
                ))
            }
        };
        if comps.len() != self.dim || self.dim == 0 {
            return Err(Error::config(
                "flux.dim",
                format!("dim = {} but {} components given", self.dim, comps.len()),
            ));
        }
        Ok(comps)
    }
}

/// A flux `A` restricted to the velocity interval `[0, M]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxSpec {
    components: Vec<Component>,
    m_cap: f64,
    lipschitz_bound: f64,
}

const LIPSCHITZ_SAMPLES: usize = 4096;

impl FluxSpec {
    pub fn new(def: &FluxDef, m_cap: f64) -> Result<Self> {
        if !(m_cap > 0.0 && m_cap.is_finite()) {
            return Err(Error::config("grid.m_cap", "must be positive and finite"));
        }
        let components = def.components()?;
        let mut spec = FluxSpec {
            components,
            m_cap,
            lipschitz_bound: 0.0,
        };
        spec.lipschitz_bound = spec.sampled_speed_bound();
        Ok(spec)
    }

    fn sampled_speed_bound(&self) -> f64 {
        let mut points: Vec<f64> = (0..=LIPSCHITZ_SAMPLES)
            .map(|k| self.m_cap * k as f64 / LIPSCHITZ_SAMPLES as f64)
            .collect();
        // extrema of the slope sit at roots of A''
        for c in &self.components {
            if let Component::Poly(p) = c {
                points.extend(poly::roots_in(
                    &poly::derivative(&poly::derivative(p)),
                    0.0,
                    self.m_cap,
                ));
            }
        }
        points
            .into_iter()
            .map(|v| self.speed_norm(v))
            .fold(0.0, f64::max)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn m_cap(&self) -> f64 {
        self.m_cap
    }

    /// `sup |A'|` over `[0, M]` (Euclidean norm for `d > 1`).
    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    fn check_domain(&self, v: f64) -> Result<()> {
        if (0.0..=self.m_cap).contains(&v) {
            Ok(())
        } else {
            Err(Error::domain("v", v, format!("[0, {}]", self.m_cap)))
        }
    }

    pub fn eval_flux(&self, v: f64) -> Result<Vec<f64>> {
        self.check_domain(v)?;
        Ok(self.components.iter().map(|c| c.value(v)).collect())
    }

    pub fn eval_flux_derivative(&self, v: f64) -> Result<Vec<f64>> {
        self.check_domain(v)?;
        Ok(self.components.iter().map(|c| c.slope(v)).collect())
    }

    /// `A_i'(v)` without the domain check.
    #[inline]
    pub fn speed(&self, i: usize, v: f64) -> f64 {
        self.components[i].slope(v)
    }

    pub fn speed_norm(&self, v: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.slope(v).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatRun {
    pub direction: Vec<f64>,
    pub interval: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NondegeneracyReport {
    pub pass: bool,
    /// Scanned velocity interval, `(-m_bound, m_bound) ∩ [0, M]`.
    pub scanned: (f64, f64),
    pub flagged: Vec<FlatRun>,
}

impl NondegeneracyReport {
    pub fn first_offender(&self) -> Option<&FlatRun> {
        self.flagged.first()
    }
}

/// Scans `v -> A'(v)·σ` for runs of consecutive samples that are constant
/// within `tol`, over a deterministic set of directions `σ`.
pub fn check_nondegeneracy(
    spec: &FluxSpec,
    m_bound: f64,
    n_directions: usize,
    n_samples: usize,
    tol: f64,
) -> Result<NondegeneracyReport> {
    if !(m_bound > 0.0) {
        return Err(Error::domain("m_bound", m_bound, "(0, inf)"));
    }
    if n_samples < 3 {
        return Err(Error::Precondition(format!(
            "n_samples = {n_samples}, need at least 3"
        )));
    }
    let lo = 0.0_f64.max(-m_bound);
    let hi = m_bound.min(spec.m_cap());
    let samples: Vec<f64> = (0..n_samples)
        .map(|k| lo + (hi - lo) * k as f64 / (n_samples - 1) as f64)
        .collect();
    let slopes: Vec<Vec<f64>> = samples
        .iter()
        .map(|&v| spec.components.iter().map(|c| c.slope(v)).collect())
        .collect();

    let mut flagged = Vec::new();
    for sigma in sphere_directions(spec.dim(), n_directions) {
        let g: Vec<f64> = slopes
            .iter()
            .map(|s| s.iter().zip(&sigma).map(|(a, b)| a * b).sum())
            .collect();
        let mut k = 0;
        while k + 1 < g.len() {
            if (g[k + 1] - g[k]).abs() <= tol {
                let start = k;
                while k + 1 < g.len() && (g[k + 1] - g[k]).abs() <= tol {
                    k += 1;
                }
                flagged.push(FlatRun {
                    direction: sigma.clone(),
                    interval: (samples[start], samples[k]),
                });
            } else {
                k += 1;
            }
        }
    }
    Ok(NondegeneracyReport {
        pass: flagged.is_empty(),
        scanned: (lo, hi),
        flagged,
    })
}

/// Deterministic unit directions: `±1` for `d = 1`, equally spaced angles for
/// `d = 2`, Halton points pushed through Box–Muller and normalized otherwise.
pub fn sphere_directions(dim: usize, n: usize) -> Vec<Vec<f64>> {
    match dim {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n.max(1))
            .map(|k| {
                let theta = std::f64::consts::TAU * (k as f64 + 0.5) / n.max(1) as f64;
                vec![theta.cos(), theta.sin()]
            })
            .collect(),
        _ => {
            const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
            let pairs = dim.div_ceil(2);
            (1..=n.max(1))
                .map(|k| {
                    let mut x = Vec::with_capacity(2 * pairs);
                    for p in 0..pairs {
                        let u1 = halton(k, PRIMES[(2 * p) % PRIMES.len()]);
                        let u2 = halton(k, PRIMES[(2 * p + 1) % PRIMES.len()]);
                        let r = (-2.0 * u1.ln()).sqrt();
                        let th = std::f64::consts::TAU * u2;
                        x.push(r * th.cos());
                        x.push(r * th.sin());
                    }
                    x.truncate(dim);
                    let norm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                    x.iter().map(|c| c / norm).collect()
                })
                .collect()
        }
    }
}

fn halton(mut index: usize, base: u32) -> f64 {
    let b = base as usize;
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % b) as f64;
        index /= b;
    }
    r
}
