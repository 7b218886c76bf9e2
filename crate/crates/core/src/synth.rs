//! Deterministic synthetic test functions and random lattice families.
//!
//! Every generator is a pure function of its parameters (plus a seed for the
//! random ones, via ChaCha), so the same invocation reproduces the same grid
//! bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{BoxIter, Cube, GridFunction, MAX_DIM};
use crate::oscillation::{lattice_cap, CubeFamily};
use crate::{cast, Real};

fn cell_centers(d: usize, n: usize) -> impl Iterator<Item = [f64; MAX_DIM]> {
    let mut hi = [1usize; MAX_DIM];
    for k in 0..d {
        hi[k] = n;
    }
    BoxIter::new(d, [0; MAX_DIM], hi).map(move |idx| {
        let mut x = [0.0f64; MAX_DIM];
        for k in 0..d {
            x[k] = (idx[k] as f64 + 0.5) / n as f64;
        }
        x
    })
}

fn from_cells<F: Real>(d: usize, n: usize, f: impl Fn([usize; MAX_DIM]) -> f64) -> Result<GridFunction<F>> {
    let mut hi = [1usize; MAX_DIM];
    for k in 0..d {
        hi[k] = n;
    }
    let values: Vec<F> = BoxIter::new(d, [0; MAX_DIM], hi)
        .map(|idx| cast::<F>(f(idx)))
        .collect();
    GridFunction::new(d, n, values)
}

pub fn constant<F: Real>(d: usize, n: usize, value: f64) -> Result<GridFunction<F>> {
    GridFunction::constant(d, n, cast::<F>(value))
}

/// Step along the first axis: 0 on `x_1 < 1/2`, 1 on `x_1 >= 1/2`.
pub fn step<F: Real>(d: usize, n: usize) -> Result<GridFunction<F>> {
    from_cells(d, n, |idx| if idx[0] < n / 2 { 0.0 } else { 1.0 })
}

/// `+/-1` checkerboard with blocks of side `scale`; `scale * n` must be a
/// whole number of cells.
pub fn checkerboard<F: Real>(d: usize, n: usize, scale: f64) -> Result<GridFunction<F>> {
    let cells = scale * n as f64;
    let block = cells.round();
    if !(cells.is_finite() && (cells - block).abs() <= 1e-9 * n as f64) || block < 1.0 {
        return Err(Error::Argument(format!(
            "checkerboard scale {scale} is not a whole number of cells on an n={n} grid"
        )));
    }
    let block = block as usize;
    from_cells(d, n, move |idx| {
        let parity: usize = (0..d).map(|k| idx[k] / block).sum();
        if parity % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    })
}

/// Indicator of the box `prod_k [lo_k, hi_k)`, assigned by cell center.
pub fn indicator<F: Real>(d: usize, n: usize, rect: &[(f64, f64)]) -> Result<GridFunction<F>> {
    if rect.len() != d {
        return Err(Error::Argument(format!(
            "indicator rectangle has {} axes, expected {d}",
            rect.len()
        )));
    }
    let rect = rect.to_vec();
    from_cells(d, n, move |idx| {
        let inside = (0..d).all(|k| {
            let c = (idx[k] as f64 + 0.5) / n as f64;
            c >= rect[k].0 && c < rect[k].1
        });
        if inside {
            1.0
        } else {
            0.0
        }
    })
}

/// Multiscale cascade: unit-amplitude checkerboards at scales `1/2, 1/4, ...`
/// summed over `depth` levels, so every resolved scale carries comparable
/// oscillation.
pub fn cascade<F: Real>(d: usize, n: usize, depth: usize) -> Result<GridFunction<F>> {
    if depth == 0 {
        return Err(Error::Argument("cascade depth must be >= 1".into()));
    }
    let mut acc = GridFunction::<F>::constant(d, n, F::zero())?;
    for level in 1..=depth {
        let denom = 1usize << level;
        if n % denom != 0 {
            return Err(Error::Argument(format!(
                "cascade depth {depth} needs n divisible by {denom}, got n={n}"
            )));
        }
        let board = checkerboard::<F>(d, n, 1.0 / denom as f64)?;
        acc = GridFunction::new(
            d,
            n,
            acc.values()
                .iter()
                .zip(board.values())
                .map(|(&a, &b)| a + b)
                .collect(),
        )?;
    }
    Ok(acc)
}

/// Default cascade depth for an `n`-grid: every dyadic scale down to
/// two-cell blocks.
pub fn cascade_depth(n: usize) -> usize {
    let mut depth = 0;
    let mut denom = 2;
    while n % denom == 0 && n / denom >= 2 {
        depth += 1;
        denom *= 2;
    }
    depth.max(1)
}

/// Random piecewise-constant function: iid uniform values in `[-1, 1)`.
pub fn random<F: Real>(d: usize, n: usize, seed: u64) -> Result<GridFunction<F>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = n.pow(d as u32);
    let values: Vec<F> = (0..len).map(|_| cast::<F>(rng.gen_range(-1.0..1.0))).collect();
    GridFunction::new(d, n, values)
}

/// Sampled smooth function `f(x) = prod_k x_k` at cell centers.
pub fn smooth<F: Real>(d: usize, n: usize) -> Result<GridFunction<F>> {
    let values: Vec<F> = cell_centers(d, n)
        .map(|x| cast::<F>((0..d).map(|k| x[k]).product::<f64>()))
        .collect();
    GridFunction::new(d, n, values)
}

/// Sampled log singularity `|log |x - x0||` at cell centers. The default
/// center `(1/2, ..., 1/2)` sits on a cell corner for even `n`, keeping all
/// samples finite.
pub fn log_singularity<F: Real>(d: usize, n: usize, center: Option<&[f64]>) -> Result<GridFunction<F>> {
    let center: Vec<f64> = match center {
        Some(c) if c.len() == d => c.to_vec(),
        Some(c) => {
            return Err(Error::Argument(format!(
                "log singularity center has {} coordinates, expected {d}",
                c.len()
            )))
        }
        None => vec![0.5; d],
    };
    let values: Vec<F> = cell_centers(d, n)
        .map(|x| {
            let r2: f64 = (0..d).map(|k| (x[k] - center[k]).powi(2)).sum();
            let r = r2.sqrt();
            if r == 0.0 {
                return Err(Error::Argument(
                    "log singularity center coincides with a cell center".into(),
                ));
            }
            Ok(cast::<F>(r.ln().abs()))
        })
        .collect::<Result<_>>()?;
    GridFunction::new(d, n, values)
}

/// Random valid family of lattice cubes of side `m/n`: rejection-sampled
/// disjoint anchors, at most `cap` cubes when constrained.
///
/// With `aligned` the anchors are restricted to multiples of `m` (tiling
/// positions), which places every cube in the refinement-1 candidate set of
/// the bracket solvers.
pub fn random_lattice_family<F: Real>(
    rng: &mut ChaCha8Rng,
    d: usize,
    n: usize,
    m: usize,
    constrained: bool,
    aligned: bool,
) -> Result<CubeFamily<F>> {
    if m == 0 || m > n {
        return Err(Error::Argument(format!("lattice side m={m} outside 1..={n}")));
    }
    let cap = if constrained {
        lattice_cap(n, m, d)
    } else {
        (n / m).pow(d as u32)
    };
    let want = rng.gen_range(1..=cap.max(1));
    let mut offsets: Vec<Vec<usize>> = Vec::new();
    let mut tries = 0;
    while offsets.len() < want && tries < 200 {
        tries += 1;
        let cand: Vec<usize> = (0..d)
            .map(|_| {
                if aligned {
                    m * rng.gen_range(0..=((n - m) / m))
                } else {
                    rng.gen_range(0..=(n - m))
                }
            })
            .collect();
        let disjoint = offsets
            .iter()
            .all(|o| (0..d).any(|k| o[k].abs_diff(cand[k]) >= m));
        if disjoint {
            offsets.push(cand);
        }
    }
    let cubes: Vec<Cube<F>> = offsets
        .iter()
        .map(|o| Cube::from_lattice(n, m, o))
        .collect::<Result<_>>()?;
    CubeFamily::new(
        cast::<F>(m as f64) / cast::<F>(n as f64),
        cubes,
        constrained,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oscillation::{b_norm, SelectMode};

    #[test]
    fn generators_are_deterministic() {
        let a = random::<f64>(2, 8, 42).unwrap();
        let b = random::<f64>(2, 8, 42).unwrap();
        assert_eq!(a.values(), b.values());
        let c = random::<f64>(2, 8, 43).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn step_has_bmo_half_downstream() {
        let f = step::<f64>(1, 16).unwrap();
        let (b, _) = b_norm(&f, SelectMode::Exact, 2).unwrap();
        assert_eq!(b, 0.5);
    }

    #[test]
    fn checkerboard_needs_whole_blocks() {
        assert!(checkerboard::<f64>(2, 10, 0.25).is_err());
        let f = checkerboard::<f64>(2, 8, 0.25).unwrap();
        assert_eq!(f.value_at(&[0, 0]), 1.0);
        assert_eq!(f.value_at(&[0, 2]), -1.0);
        assert_eq!(f.value_at(&[2, 2]), 1.0);
    }

    #[test]
    fn indicator_of_lower_quadrant() {
        let f = indicator::<f64>(2, 8, &[(0.0, 0.5), (0.0, 0.5)]).unwrap();
        assert_eq!(f.value_at(&[0, 0]), 1.0);
        assert_eq!(f.value_at(&[3, 3]), 1.0);
        assert_eq!(f.value_at(&[4, 0]), 0.0);
        assert_eq!(f.integral(), 0.25);
    }

    #[test]
    fn cascade_sums_unit_checkerboards() {
        let f = cascade::<f64>(2, 16, cascade_depth(16)).unwrap();
        assert_eq!(cascade_depth(16), 3);
        let max = f.max_value();
        assert!(max <= 3.0 + 1e-12);
    }

    #[test]
    fn log_singularity_is_finite_on_even_grids() {
        let f = log_singularity::<f64>(2, 16, None).unwrap();
        assert!(f.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn random_families_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let fam = random_lattice_family::<f64>(&mut rng, 2, 8, 2, true, false).unwrap();
            assert!(fam.len() >= 1);
            assert!(fam.len() <= 4);
        }
    }
}
