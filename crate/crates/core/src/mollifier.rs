//! Domain rescaling, tent-kernel mollification, and the smoothed
//! approximant they compose into.
//!
//! The pipeline: `rescale` shrinks the domain through `x -> (1-2t)x + t*1`
//! and averages `f` exactly over each cell image; `mollify` convolves the
//! rescaled function with the tensor-product tent kernel
//! `phi_t(y) = t^-d prod_k (1 - |y_k|/t)_+` by midpoint quadrature on a
//! supersampled lattice; `approximant` scales the result by `(1-2t)^(d-1)`.
//! The approximant stays close to `f` in `L^p` while its oscillation
//! bracket at side `eps` is controlled by the bracket of `f` at side
//! `(1-2t) eps` ([`bracket_transfer_check`]).
//!
//! Points outside `(0,1)^d` are evaluated through the affine pullback of
//! the source function, which is defined on all of `(-t, 1+t)^d`, so the
//! convolution never needs boundary padding.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{cube_average, Cube, GridFunction, MAX_DIM};
use crate::oscillation::{bracket_epsilon, CubeFamily, SelectMode};
use crate::{cast, Real};

/// Mollification parameters: shrink factor `t` and the per-axis
/// supersampling factor for the midpoint quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MollifierParams<F> {
    t: F,
    supersample: usize,
}

pub const DEFAULT_SUPERSAMPLE: usize = 4;

impl<F: Real> MollifierParams<F> {
    pub fn new(t: F, supersample: usize) -> Result<Self> {
        if !(t > F::zero() && t < cast::<F>(0.5)) {
            return Err(Error::Domain(format!("t={t} outside (0, 1/2)")));
        }
        if supersample == 0 {
            return Err(Error::Argument("supersample must be >= 1".into()));
        }
        Ok(MollifierParams { t, supersample })
    }

    pub fn with_default_supersample(t: F) -> Result<Self> {
        Self::new(t, DEFAULT_SUPERSAMPLE)
    }

    pub fn t(&self) -> F {
        self.t
    }

    pub fn supersample(&self) -> usize {
        self.supersample
    }

    /// Per-axis midpoint nodes and raw (unnormalized) tent weights on
    /// `(-t, t)`; the node count is even so the kernel kink sits on a node
    /// boundary and the midpoint rule integrates the tent exactly.
    fn axis_nodes(&self) -> (Vec<F>, Vec<F>) {
        let k = 2 * self.supersample;
        let step = cast::<F>(2.0) * self.t / cast::<F>(k as f64);
        let mut nodes = Vec::with_capacity(k);
        let mut weights = Vec::with_capacity(k);
        for j in 0..k {
            let y = -self.t + (cast::<F>(j as f64) + cast::<F>(0.5)) * step;
            nodes.push(y);
            weights.push(F::one() - (y / self.t).abs());
        }
        (nodes, weights)
    }
}

/// Raw midpoint-quadrature mass of the one-dimensional tent kernel
/// `t^-1 (1 - |y/t|)_+`; exactly 1 up to round-off for any even node count.
pub fn tent_quadrature_mass<F: Real>(params: &MollifierParams<F>) -> F {
    let (_, weights) = params.axis_nodes();
    let k = 2 * params.supersample;
    let step = cast::<F>(2.0) * params.t / cast::<F>(k as f64);
    weights.iter().fold(F::zero(), |a, &w| a + w) * step / params.t
}

/// A rescaled function `g(x) = f((1-2t)x + t*1)`: exact cell averages on the
/// original grid plus the source function for pointwise evaluation on the
/// extended domain `(-t, 1+t)^d`.
#[derive(Clone, Debug)]
pub struct Rescaled<F> {
    values: GridFunction<F>,
    source: GridFunction<F>,
    t: F,
}

impl<F: Real> Rescaled<F> {
    pub fn values(&self) -> &GridFunction<F> {
        &self.values
    }

    pub fn t(&self) -> F {
        self.t
    }
}

/// `g(x) = f((1-2t)x + t*1)` on the same grid: each output cell carries the
/// exact average of `f` over the affine image of the cell (a cube of side
/// `(1-2t)/n`), via exact cell-cube intersection areas.
pub fn rescale<F: Real>(f: &GridFunction<F>, t: F) -> Result<Rescaled<F>> {
    if !(t > F::zero() && t < cast::<F>(0.5)) {
        return Err(Error::Domain(format!("t={t} outside (0, 1/2)")));
    }
    let n = f.n();
    let d = f.d();
    let nf = cast::<F>(n as f64);
    let shrink = F::one() - cast::<F>(2.0) * t;
    let side = shrink / nf;
    let values: Result<Vec<F>> = (0..f.len())
        .into_par_iter()
        .map(|flat| {
            let mut rem = flat;
            let mut anchor = vec![F::zero(); d];
            for k in (0..d).rev() {
                let i = rem % n;
                rem /= n;
                anchor[k] = shrink * cast::<F>(i as f64) / nf + t;
            }
            let q = Cube::new(anchor, side)?;
            cube_average(f, &q)
        })
        .collect();
    Ok(Rescaled {
        values: GridFunction::new(d, n, values?)?,
        source: f.clone(),
        t,
    })
}

/// Tent-kernel mollification `h = phi_t * g` by midpoint quadrature: each
/// output cell is the mean of `h` over `supersample^d` points, and each
/// `h(x)` is the normalized tensor quadrature of `phi_t(y) g(x-y)`.
///
/// The kernel weights are normalized to unit mass, so the output is a convex
/// combination of source values: constants pass through and the range never
/// leaves `[min g, max g]`.
pub fn mollify<F: Real>(g: &Rescaled<F>, params: &MollifierParams<F>) -> Result<GridFunction<F>> {
    if (g.t() - params.t()).abs() > F::epsilon() * cast::<F>(4.0) {
        return Err(Error::Argument(format!(
            "params t={} does not match the rescaled function's t={}",
            params.t(),
            g.t()
        )));
    }
    let f = &g.values;
    let n = f.n();
    let d = f.d();
    let s = params.supersample;
    let (nodes, raw_weights) = params.axis_nodes();
    let k = nodes.len();
    let wsum = raw_weights.iter().fold(F::zero(), |a, &w| a + w);
    let weights: Vec<F> = raw_weights.iter().map(|&w| w / wsum).collect();

    // Per-axis lookup table: source cell index for output position i,
    // sample a, kernel node j.
    let nf = cast::<F>(n as f64);
    let sf = cast::<F>(s as f64);
    let shrink = F::one() - cast::<F>(2.0) * g.t();
    let src_n = g.source.n();
    let src_nf = cast::<F>(src_n as f64);
    let axis_cell: Vec<usize> = (0..n * s * k)
        .map(|flat| {
            let j = flat % k;
            let a = (flat / k) % s;
            let i = flat / (k * s);
            let x = (cast::<F>(i as f64) + (cast::<F>(a as f64) + cast::<F>(0.5)) / sf) / nf;
            let y = shrink * (x - nodes[j]) + g.t();
            let c = (y * src_nf).floor().to_f64().unwrap_or(0.0);
            (c.max(0.0) as usize).min(src_n - 1)
        })
        .collect();

    let src = g.source.values();
    let src_strides = g.source.strides();
    let inv_samples = F::one() / sf.powi(d as i32);
    let values: Vec<F> = (0..f.len())
        .into_par_iter()
        .map(|flat| {
            let mut coords = [0usize; MAX_DIM];
            let mut rem = flat;
            for kk in (0..d).rev() {
                coords[kk] = rem % n;
                rem /= n;
            }
            let mut acc = F::zero();
            let mut sample = [0usize; MAX_DIM];
            loop {
                // h(x) at this sample point.
                let mut hval = F::zero();
                let mut node = [0usize; MAX_DIM];
                loop {
                    let mut w = F::one();
                    let mut idx = 0usize;
                    for kk in 0..d {
                        let flat_axis = (coords[kk] * s + sample[kk]) * k + node[kk];
                        w *= weights[node[kk]];
                        idx += axis_cell[flat_axis] * src_strides[kk];
                    }
                    hval += w * src[idx];
                    // advance node odometer
                    let mut kk = d;
                    loop {
                        if kk == 0 {
                            break;
                        }
                        kk -= 1;
                        node[kk] += 1;
                        if node[kk] < k {
                            break;
                        }
                        node[kk] = 0;
                        if kk == 0 {
                            break;
                        }
                    }
                    if node.iter().take(d).all(|&x| x == 0) {
                        break;
                    }
                }
                acc += hval;
                // advance sample odometer
                let mut kk = d;
                loop {
                    if kk == 0 {
                        break;
                    }
                    kk -= 1;
                    sample[kk] += 1;
                    if sample[kk] < s {
                        break;
                    }
                    sample[kk] = 0;
                    if kk == 0 {
                        break;
                    }
                }
                if sample.iter().take(d).all(|&x| x == 0) {
                    break;
                }
            }
            acc * inv_samples
        })
        .collect();
    GridFunction::new(d, n, values)
}

/// The smoothed approximant `(1-2t)^(d-1) * mollify(rescale(f, t))`.
pub fn approximant<F: Real>(
    f: &GridFunction<F>,
    params: &MollifierParams<F>,
) -> Result<GridFunction<F>> {
    let g = rescale(f, params.t())?;
    let h = mollify(&g, params)?;
    let shrink = F::one() - cast::<F>(2.0) * params.t();
    Ok(h.scaled(shrink.powi((f.d() - 1) as i32)))
}

/// Shrink factors `t = (m - m')/(2m)` that keep `(1-2t) * m/n` on the
/// lattice, listed for error messages.
pub fn admissible_ts(m: usize) -> Vec<f64> {
    (1..m).rev().map(|mp| (m - mp) as f64 / (2.0 * m as f64)).collect()
}

/// Evaluates both sides of the bracket transfer inequality: the bracket of
/// the approximant at side `eps` and the bracket of `f` at side `(1-2t) eps`,
/// with matching candidate refinement. The caller asserts
/// `first <= second + tolerance`.
pub fn bracket_transfer_check<F: Real>(
    f: &GridFunction<F>,
    params: &MollifierParams<F>,
    eps: F,
    mode: SelectMode,
    s: usize,
) -> Result<((F, CubeFamily<F>), (F, CubeFamily<F>))> {
    let n = f.n();
    let m_f = eps.to_f64().unwrap_or(f64::NAN) * n as f64;
    let m = m_f.round();
    if !(m_f.is_finite() && (m_f - m).abs() <= 1e-9 * n as f64) || m < 1.0 || m > n as f64 {
        return Err(Error::Domain(format!("eps={eps} is not a lattice side m/n")));
    }
    let m = m as usize;
    let shrink = F::one() - cast::<F>(2.0) * params.t();
    let mp_f = (shrink * cast::<F>(m as f64)).to_f64().unwrap_or(f64::NAN);
    let mp = mp_f.round();
    if !(mp_f.is_finite() && (mp_f - mp).abs() <= 1e-9 * m as f64) || mp < 1.0 || mp >= m as f64 {
        return Err(Error::Argument(format!(
            "(1-2t)*eps is not representable on the lattice for t={}, eps={eps}; \
             admissible t for this eps: {:?}",
            params.t(),
            admissible_ts(m)
        )));
    }
    let mp = mp as usize;
    let apx = approximant(f, params)?;
    let lhs = bracket_epsilon(&apx, eps, mode, s)?;
    let eps_shrunk = cast::<F>(mp as f64) / cast::<F>(n as f64);
    let rhs = bracket_epsilon(f, eps_shrunk, mode, s)?;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::lp_distance_mod_constants;
    use crate::oscillation::b_norm;
    use crate::synth;

    #[test]
    fn params_validate_t_range() {
        assert!(MollifierParams::new(0.0f64, 4).is_err());
        assert!(MollifierParams::new(0.5f64, 4).is_err());
        assert!(MollifierParams::new(0.25f64, 0).is_err());
        assert!(MollifierParams::new(0.25f64, 4).is_ok());
    }

    #[test]
    fn tent_mass_is_one() {
        for ss in [1usize, 2, 4, 8] {
            let p = MollifierParams::new(0.125f64, ss).unwrap();
            assert!((tent_quadrature_mass(&p) - 1.0).abs() < 1e-12, "ss={ss}");
        }
    }

    #[test]
    fn rescale_preserves_constants_exactly() {
        let f = GridFunction::<f64>::constant(2, 8, -3.5).unwrap();
        let g = rescale(&f, 0.3).unwrap();
        assert!(g.values().values().iter().all(|&v| v == -3.5));
    }

    #[test]
    fn rescale_fixes_centered_step() {
        let f = synth::step::<f64>(1, 16).unwrap();
        let g = rescale(&f, 0.25).unwrap();
        assert_eq!(g.values().values(), f.values());
    }

    #[test]
    fn rescale_converges_in_l1() {
        // Indicator of [0, 1/4): the jump relocates by t(1-2x0)/(1-2t), which
        // bounds the L^1 error and halves roughly with t.
        let n = 64;
        let f = synth::indicator::<f64>(1, n, &[(0.0, 0.25)]).unwrap();
        let mut prev = f64::INFINITY;
        for t in [0.125f64, 0.0625, 0.03125] {
            let g = rescale(&f, t).unwrap();
            let diff = g.values().sub(&f).unwrap().l1_norm();
            let bound = t * 0.5 / (1.0 - 2.0 * t);
            assert!(diff <= bound + 1e-12, "t={t}: {diff} vs {bound}");
            assert!(diff < prev);
            prev = diff;
        }
    }

    #[test]
    fn mollify_preserves_constants() {
        let f = GridFunction::<f64>::constant(2, 8, 2.75).unwrap();
        let p = MollifierParams::new(0.125f64, 4).unwrap();
        let g = rescale(&f, p.t()).unwrap();
        let h = mollify(&g, &p).unwrap();
        assert!(h.values().iter().all(|&v| (v - 2.75).abs() < 1e-12));
    }

    #[test]
    fn mollify_range_containment() {
        for seed in 0..100u64 {
            let f = synth::random::<f64>(1, 16, seed).unwrap();
            let p = MollifierParams::new(0.125f64, 2).unwrap();
            let g = rescale(&f, p.t()).unwrap();
            let h = mollify(&g, &p).unwrap();
            let (lo, hi) = (f.min_value(), f.max_value());
            assert!(h.min_value() >= lo - 1e-12);
            assert!(h.max_value() <= hi + 1e-12);
        }
    }

    #[test]
    fn mollified_step_matches_tent_cdf() {
        // Convolving the centered step with the tent kernel gives the tent
        // CDF: (u+1)^2/2 on [-1,0], 1-(1-u)^2/2 on [0,1], u = (x-1/2)/t.
        let n = 64;
        let t = 0.25f64;
        let f = synth::step::<f64>(1, n).unwrap();
        let ss = 32usize;
        let p = MollifierParams::new(t, ss).unwrap();
        let g = rescale(&f, t).unwrap();
        let h = mollify(&g, &p).unwrap();
        let cdf = |u: f64| -> f64 {
            if u <= -1.0 {
                0.0
            } else if u < 0.0 {
                (u + 1.0) * (u + 1.0) / 2.0
            } else if u < 1.0 {
                1.0 - (1.0 - u) * (1.0 - u) / 2.0
            } else {
                1.0
            }
        };
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut want = 0.0;
            for a in 0..ss {
                let x = (i as f64 + (a as f64 + 0.5) / ss as f64) / n as f64;
                want += cdf((x - 0.5) / t);
            }
            want /= ss as f64;
            worst = worst.max((h.values()[i] - want).abs());
        }
        // CDF granularity of the discrete kernel is ~2/K with K = 2*ss.
        assert!(worst <= 2.0 / (2.0 * ss as f64) + 1e-9, "worst={worst}");
    }

    #[test]
    fn mollify_rejects_mismatched_t() {
        let f = synth::step::<f64>(1, 8).unwrap();
        let g = rescale(&f, 0.25).unwrap();
        let p = MollifierParams::new(0.125f64, 4).unwrap();
        assert!(matches!(mollify(&g, &p), Err(Error::Argument(_))));
    }

    #[test]
    fn approximant_of_constant_scales_and_has_zero_norm() {
        let c = 4.0f64;
        let f = GridFunction::<f64>::constant(2, 8, c).unwrap();
        let p = MollifierParams::new(0.125f64, 2).unwrap();
        let apx = approximant(&f, &p).unwrap();
        let want = (1.0 - 0.25) * c; // (1-2t)^{d-1} c, d=2
        assert!(apx.values().iter().all(|&v| (v - want).abs() < 1e-12));
        let (bn, _) = b_norm(&apx, SelectMode::Greedy, 2).unwrap();
        assert_eq!(bn, 0.0);
    }

    #[test]
    fn approximant_norm_bound_step_d1() {
        let f = synth::step::<f64>(1, 32).unwrap();
        let (base, _) = b_norm(&f, SelectMode::Exact, 2).unwrap();
        for t in [0.125f64, 0.0625] {
            let p = MollifierParams::new(t, 4).unwrap();
            let apx = approximant(&f, &p).unwrap();
            let (norm, _) = b_norm(&apx, SelectMode::Exact, 2).unwrap();
            assert!(norm <= base * 1.02, "t={t}: {norm} vs {base}");
        }
    }

    #[test]
    fn approximant_converges_in_lp() {
        let f = synth::step::<f64>(1, 64).unwrap();
        let mut prev = f64::INFINITY;
        for t in [0.125f64, 0.0625, 0.03125] {
            let p = MollifierParams::new(t, 4).unwrap();
            let apx = approximant(&f, &p).unwrap();
            let dist = lp_distance_mod_constants(&apx, &f, 1.2).unwrap();
            assert!(dist < prev, "t={t}: {dist} !< {prev}");
            prev = dist;
        }
    }

    #[test]
    fn transfer_check_step_d1() {
        let f = synth::step::<f64>(1, 16).unwrap();
        let p = MollifierParams::new(0.25f64, 4).unwrap();
        let ((lhs, _), (rhs, _)) =
            bracket_transfer_check(&f, &p, 0.5, SelectMode::Exact, 2).unwrap();
        assert!(lhs <= rhs + 1e-12, "{lhs} vs {rhs}");
        assert_eq!(rhs, 0.5);
    }

    #[test]
    fn transfer_check_constant_is_zero_zero() {
        let f = GridFunction::<f64>::constant(1, 8, 1.0).unwrap();
        let p = MollifierParams::new(0.25f64, 2).unwrap();
        let ((lhs, _), (rhs, _)) =
            bracket_transfer_check(&f, &p, 0.5, SelectMode::Exact, 2).unwrap();
        assert_eq!((lhs, rhs), (0.0, 0.0));
    }

    #[test]
    fn transfer_check_rejects_unrepresentable_t() {
        let f = synth::step::<f64>(1, 16).unwrap();
        let p = MollifierParams::new(0.3f64, 2).unwrap();
        let err = bracket_transfer_check(&f, &p, 0.5, SelectMode::Exact, 2).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("admissible t"), "{msg}");
    }
}
