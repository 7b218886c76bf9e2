//! Distance to the vanishing subspace, estimated from both sides.
//!
//! The tail functional takes the bracket sweep below a cutoff side and is a
//! lower-bound proxy for `limsup_{eps -> 0} [f]_eps`; the upper bound is the
//! best `B`-norm distance to the mollified approximant family. The report
//! carries both, the tail curve, and a consistency flag. A triggered flag
//! indicates under-refinement of the discretization, not a broken theorem.

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::mollifier::{approximant, MollifierParams};
use crate::oscillation::{b_norm, lattice_cap, CurveEntry, OscillationCurve, SelectMode};
use crate::{cast, Real};

/// Two-sided distance estimate with its witnesses.
#[derive(Clone, Debug)]
pub struct DistanceReport<F> {
    /// Max bracket value over lattice sides `<= epsilon_cut` (lower proxy).
    pub tail_lower: F,
    /// `min_t ||f - approximant(f,t)||_B` (upper bound against the
    /// approximant family).
    pub upper: F,
    /// The tail sweep, eps descending.
    pub curve: OscillationCurve<F>,
    pub epsilon_cut: F,
    pub t_grid: Vec<F>,
    /// Set when `tail_lower > upper` beyond the tolerance; indicates
    /// under-refinement.
    pub inconsistent: bool,
    pub tolerance: F,
}

/// Max of [`crate::oscillation::bracket_epsilon`] over the sweep
/// `eps in {m/n : m/n <= eps_cut}`, with the sampled tail curve.
///
/// A lower-bound proxy for `limsup_{eps->0} [f]_eps` at the current grid;
/// refine `n` to tighten it.
pub fn tail_functional<F: Real>(
    f: &GridFunction<F>,
    eps_cut: F,
    mode: SelectMode,
    s: usize,
) -> Result<(F, OscillationCurve<F>)> {
    let n = f.n();
    let slack = F::epsilon() * cast::<F>(64.0);
    if !(eps_cut > F::zero() && eps_cut <= F::one() + slack) {
        return Err(Error::Argument(format!("eps_cut={eps_cut} outside (0,1]")));
    }
    let m_cut = (eps_cut.to_f64().unwrap_or(0.0) * n as f64 * (1.0 + 1e-12)).floor() as usize;
    if m_cut == 0 {
        return Err(Error::Argument(format!(
            "eps_cut={eps_cut} is below the finest lattice side 1/{n}"
        )));
    }
    let m_cut = m_cut.min(n);
    let (_, full) = b_norm_below(f, mode, s, m_cut)?;
    let max = full.entries.iter().map(|e| e.value).fold(F::zero(), F::max);
    Ok((max, full))
}

fn b_norm_below<F: Real>(
    f: &GridFunction<F>,
    mode: SelectMode,
    s: usize,
    m_cut: usize,
) -> Result<(F, OscillationCurve<F>)> {
    use crate::oscillation::bracket_epsilon;
    use rayon::prelude::*;
    let n = f.n();
    let entries: Result<Vec<CurveEntry<F>>> = (1..=m_cut)
        .rev()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&m| {
            let eps = cast::<F>(m as f64) / cast::<F>(n as f64);
            let (value, witness) = bracket_epsilon(f, eps, mode, s)?;
            Ok(CurveEntry {
                epsilon: eps,
                value,
                cap: lattice_cap(n, m, f.d()),
                witness,
            })
        })
        .collect();
    let entries = entries?;
    let max = entries.iter().map(|e| e.value).fold(F::zero(), F::max);
    Ok((max, OscillationCurve { entries }))
}

/// `min_t ||f - approximant(f, t)||_B` over the given `t` grid: a certified
/// upper bound for the distance to the approximant family (not to the whole
/// vanishing subspace). Never increases when the grid is enlarged.
pub fn distance_upper<F: Real>(
    f: &GridFunction<F>,
    t_grid: &[F],
    supersample: usize,
    mode: SelectMode,
    s: usize,
) -> Result<F> {
    if t_grid.is_empty() {
        return Err(Error::Argument("empty t grid".into()));
    }
    let mut best: Option<F> = None;
    for &t in t_grid {
        let params = MollifierParams::new(t, supersample)?;
        let apx = approximant(f, &params)?;
        let diff = f.sub(&apx)?;
        let (norm, _) = b_norm(&diff, mode, s)?;
        best = Some(best.map_or(norm, |b: F| b.min(norm)));
    }
    Ok(best.expect("nonempty t grid"))
}

/// Assembles the two-sided report. `tolerance` is the relative allowance
/// before the inconsistency flag is raised (default 5%).
pub fn distance_report<F: Real>(
    f: &GridFunction<F>,
    eps_cut: F,
    t_grid: &[F],
    supersample: usize,
    mode: SelectMode,
    s: usize,
    tolerance: F,
) -> Result<DistanceReport<F>> {
    let (tail_lower, curve) = tail_functional(f, eps_cut, mode, s)?;
    let upper = distance_upper(f, t_grid, supersample, mode, s)?;
    let inconsistent =
        tail_lower > upper + tolerance * tail_lower.max(upper) + F::epsilon() * cast::<F>(64.0);
    Ok(DistanceReport {
        tail_lower,
        upper,
        curve,
        epsilon_cut: eps_cut,
        t_grid: t_grid.to_vec(),
        inconsistent,
        tolerance,
    })
}
