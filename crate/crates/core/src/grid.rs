//! Piecewise-constant functions on uniform grids over `(0,1)^d` and the
//! exact integral calculus on them: box sums via summed-area tables, cube
//! averages and mean oscillations via exact cell-cube intersection areas,
//! and `L^p` distances modulo constants.
//!
//! All lengths are in units of the unit-cube side. Cell `(i_1, ..., i_d)`
//! covers the half-open box `prod_k [i_k/n, (i_k+1)/n)`; values are stored
//! row-major with the last axis fastest.

use crate::accum::{NeumaierSum, TwoFloat};
use crate::error::{Error, Result};
use crate::{cast, Real};

pub const MAX_DIM: usize = 3;

/// Relative slack used when validating float geometry built from rationals.
pub(crate) fn geom_slack<F: Real>() -> F {
    F::epsilon() * cast(64.0)
}

/// Piecewise-constant real function on a uniform `n^d` grid over `(0,1)^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<F> {
    d: usize,
    n: usize,
    values: Vec<F>,
}

impl<F: Real> GridFunction<F> {
    /// Builds a grid function, checking dimension, length and finiteness.
    pub fn new(d: usize, n: usize, values: Vec<F>) -> Result<Self> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::Domain(format!("dimension d={d} outside 1..={MAX_DIM}")));
        }
        if n == 0 {
            return Err(Error::Domain("grid must have n >= 1 cells per axis".into()));
        }
        let len = n.pow(d as u32);
        if values.len() != len {
            return Err(Error::Domain(format!(
                "value array has length {}, expected n^d = {len}",
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("grid values must all be finite".into()));
        }
        Ok(GridFunction { d, n, values })
    }

    pub fn constant(d: usize, n: usize, c: F) -> Result<Self> {
        Self::new(d, n, vec![c; n.pow(d as u32)])
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row-major strides, last axis fastest. Unused axes get stride 0.
    pub(crate) fn strides(&self) -> [usize; MAX_DIM] {
        let mut s = [0usize; MAX_DIM];
        let mut acc = 1;
        for k in (0..self.d).rev() {
            s[k] = acc;
            acc *= self.n;
        }
        s
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.d);
        let s = self.strides();
        coords.iter().zip(s.iter()).map(|(&c, &st)| c * st).sum()
    }

    pub fn value_at(&self, coords: &[usize]) -> F {
        self.values[self.index(coords)]
    }

    /// Side length of one cell, `1/n`.
    pub fn cell_side(&self) -> F {
        F::one() / cast::<F>(self.n as f64)
    }

    /// Volume of one cell, `n^-d`.
    pub fn cell_volume(&self) -> F {
        self.cell_side().powi(self.d as i32)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.d == other.d && self.n == other.n
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape {
                expected_d: self.d,
                expected_n: self.n,
                got_d: other.d,
                got_n: other.n,
            })
        }
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        GridFunction {
            d: self.d,
            n: self.n,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn shifted(&self, c: F) -> Self {
        self.map(|v| v + c)
    }

    pub fn scaled(&self, alpha: F) -> Self {
        self.map(|v| alpha * v)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        Ok(GridFunction {
            d: self.d,
            n: self.n,
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    /// `L^1` norm over `(0,1)^d`.
    pub fn l1_norm(&self) -> F {
        let mut acc = NeumaierSum::new();
        for &v in &self.values {
            acc.add(v.abs());
        }
        acc.value() * self.cell_volume()
    }

    /// Integral over the whole domain.
    pub fn integral(&self) -> F {
        let mut acc = NeumaierSum::new();
        for &v in &self.values {
            acc.add(v);
        }
        acc.value() * self.cell_volume()
    }

    pub fn mean(&self) -> F {
        self.integral()
    }

    pub fn min_value(&self) -> F {
        self.values.iter().copied().fold(F::infinity(), F::min)
    }

    pub fn max_value(&self) -> F {
        self.values.iter().copied().fold(F::neg_infinity(), F::max)
    }
}

/// Axis-aligned cube inside the closed unit cube.
#[derive(Clone, Debug, PartialEq)]
pub struct Cube<F> {
    anchor: Vec<F>,
    side: F,
}

impl<F: Real> Cube<F> {
    /// Builds a cube from its lower corner and side, validating containment.
    pub fn new(anchor: Vec<F>, side: F) -> Result<Self> {
        let d = anchor.len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::Domain(format!("cube dimension {d} outside 1..={MAX_DIM}")));
        }
        let slack = geom_slack::<F>();
        if !(side > F::zero() && side <= F::one() + slack) {
            return Err(Error::Domain(format!("cube side {side} outside (0,1]")));
        }
        for &a in &anchor {
            if !(a >= -slack && a + side <= F::one() + slack) {
                return Err(Error::Domain(format!(
                    "cube [{a}, {}] not contained in the unit cube",
                    a + side
                )));
            }
        }
        Ok(Cube { anchor, side })
    }

    /// Lattice cube of side `m/n` anchored at `offset/n`.
    pub fn from_lattice(n: usize, m: usize, offset: &[usize]) -> Result<Self> {
        if m == 0 || m > n {
            return Err(Error::Domain(format!("lattice side m={m} outside 1..=n={n}")));
        }
        if offset.iter().any(|&o| o > n - m) {
            return Err(Error::Domain(format!(
                "lattice offset {offset:?} exceeds n-m={}",
                n - m
            )));
        }
        let nf = cast::<F>(n as f64);
        let anchor = offset.iter().map(|&o| cast::<F>(o as f64) / nf).collect();
        Ok(Cube {
            anchor,
            side: cast::<F>(m as f64) / nf,
        })
    }

    pub fn d(&self) -> usize {
        self.anchor.len()
    }

    pub fn anchor(&self) -> &[F] {
        &self.anchor
    }

    pub fn side(&self) -> F {
        self.side
    }

    pub fn volume(&self) -> F {
        self.side.powi(self.d() as i32)
    }

    /// Recovers `(m, offset)` with `side = m/n`, `anchor = offset/n`, if this
    /// cube sits on the `n`-lattice (within round-off slack).
    pub fn lattice_form(&self, n: usize) -> Option<(usize, Vec<usize>)> {
        let nf = n as f64;
        let tol = 64.0 * f64::EPSILON * nf;
        let snap = |x: F| -> Option<usize> {
            let v = x.to_f64()? * nf;
            let r = v.round();
            if (v - r).abs() <= tol && r >= 0.0 {
                Some(r as usize)
            } else {
                None
            }
        };
        let m = snap(self.side)?;
        if m == 0 || m > n {
            return None;
        }
        let offset: Option<Vec<usize>> = self.anchor.iter().map(|&a| snap(a)).collect();
        let offset = offset?;
        if offset.iter().all(|&o| o + m <= n) {
            Some((m, offset))
        } else {
            None
        }
    }
}

/// Per-axis intersection of a cube with the grid cells: first covered cell
/// and the overlap length of each covered cell, in units of the cell side.
pub(crate) struct AxisOverlap<F> {
    pub start: usize,
    pub weights: Vec<F>,
}

pub(crate) fn axis_overlap<F: Real>(n: usize, lo: F, hi: F) -> AxisOverlap<F> {
    let nf = cast::<F>(n as f64);
    let lo = lo.max(F::zero());
    let hi = hi.min(F::one());
    let lo_n = lo * nf;
    let hi_n = hi * nf;
    let first = lo_n.floor().to_f64().unwrap_or(0.0).max(0.0) as usize;
    let first = first.min(n.saturating_sub(1));
    let mut weights = Vec::new();
    let mut i = first;
    while i < n {
        let cell_lo = cast::<F>(i as f64);
        let cell_hi = cast::<F>((i + 1) as f64);
        let w = hi_n.min(cell_hi) - lo_n.max(cell_lo);
        if w <= F::zero() {
            if i == first {
                // Degenerate round-off: the interval starts exactly at the
                // right face of `first`. Move on.
                i += 1;
                continue;
            }
            break;
        }
        weights.push(w.min(F::one()));
        i += 1;
    }
    if weights.is_empty() {
        weights.push(F::zero());
    }
    AxisOverlap {
        start: first.min(n - 1),
        weights,
    }
}

/// Iterates row-major over the integer box `prod_k [lo_k, hi_k)`.
#[derive(Clone)]
pub(crate) struct BoxIter {
    d: usize,
    lo: [usize; MAX_DIM],
    hi: [usize; MAX_DIM],
    cur: [usize; MAX_DIM],
    done: bool,
}

impl BoxIter {
    pub fn new(d: usize, lo: [usize; MAX_DIM], hi: [usize; MAX_DIM]) -> Self {
        let done = (0..d).any(|k| lo[k] >= hi[k]);
        BoxIter {
            d,
            lo,
            hi,
            cur: lo,
            done,
        }
    }
}

impl Iterator for BoxIter {
    type Item = [usize; MAX_DIM];

    fn next(&mut self) -> Option<[usize; MAX_DIM]> {
        if self.done {
            return None;
        }
        let out = self.cur;
        let mut k = self.d;
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.cur[k] += 1;
            if self.cur[k] < self.hi[k] {
                break;
            }
            self.cur[k] = self.lo[k];
        }
        Some(out)
    }
}

/// Summed-area table over a grid function: cumulative sums of cell values
/// over all lower-left boxes, stored double-width so that box sums keep full
/// precision even when the cumulative entries are large.
#[derive(Clone, Debug)]
pub struct SummedTable<F> {
    d: usize,
    n: usize,
    sums: Vec<TwoFloat<F>>,
}

/// Builds the summed-area table of `f`.
///
/// The table has `(n+1)^d` entries; entry `(i_1,...,i_d)` holds the sum of
/// all cell values with coordinates strictly below `i` on every axis, so box
/// sums come out of `2^d`-term inclusion-exclusion.
pub fn prefix_sum<F: Real>(f: &GridFunction<F>) -> SummedTable<F> {
    let d = f.d();
    let n = f.n();
    let side = n + 1;
    let len = side.pow(d as u32);
    let mut sums = vec![TwoFloat::zero(); len];

    let mut strides = [0usize; MAX_DIM];
    let mut acc = 1;
    for k in (0..d).rev() {
        strides[k] = acc;
        acc *= side;
    }

    // Seed the interior with the cell values.
    let f_strides = f.strides();
    let mut hi = [1usize; MAX_DIM];
    hi[..d].copy_from_slice(&vec![n; d]);
    for idx in BoxIter::new(d, [0; MAX_DIM], hi) {
        let src: usize = (0..d).map(|k| idx[k] * f_strides[k]).sum();
        let dst: usize = (0..d).map(|k| (idx[k] + 1) * strides[k]).sum();
        sums[dst] = TwoFloat::from_single(f.values()[src]);
    }

    // Cumulate along each axis in turn.
    for axis in 0..d {
        let step = strides[axis];
        let mut hi = [1usize; MAX_DIM];
        for k in 0..d {
            hi[k] = if k == axis { n } else { side };
        }
        for idx in BoxIter::new(d, [0; MAX_DIM], hi) {
            let base: usize = (0..d)
                .map(|k| if k == axis { (idx[k] + 1) * strides[k] } else { idx[k] * strides[k] })
                .sum();
            sums[base] = sums[base].add(sums[base - step]);
        }
    }

    SummedTable { d, n, sums }
}

impl<F: Real> SummedTable<F> {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn strides(&self) -> [usize; MAX_DIM] {
        let mut s = [0usize; MAX_DIM];
        let mut acc = 1;
        for k in (0..self.d).rev() {
            s[k] = acc;
            acc *= self.n + 1;
        }
        s
    }

    /// Sum of cell values over the integer box `prod_k [lo_k, hi_k)`.
    pub fn box_sum(&self, lo: &[usize], hi: &[usize]) -> F {
        debug_assert_eq!(lo.len(), self.d);
        debug_assert_eq!(hi.len(), self.d);
        let strides = self.strides();
        let mut total = TwoFloat::zero();
        for mask in 0..(1usize << self.d) {
            let mut idx = 0usize;
            let mut picks_lo = 0u32;
            for k in 0..self.d {
                let coord = if mask & (1 << k) != 0 {
                    picks_lo += 1;
                    lo[k]
                } else {
                    hi[k]
                };
                idx += coord * strides[k];
            }
            let term = self.sums[idx];
            total = total.add(if picks_lo % 2 == 0 { term } else { term.neg() });
        }
        total.value()
    }

    /// Integral of `f` over the lattice box (box sum scaled by cell volume).
    pub fn box_integral(&self, lo: &[usize], hi: &[usize]) -> F {
        let vol = (F::one() / cast::<F>(self.n as f64)).powi(self.d as i32);
        self.box_sum(lo, hi) * vol
    }

    /// Average of `f` over the lattice cube `(m, offset)`.
    pub fn lattice_cube_average(&self, m: usize, offset: &[usize]) -> F {
        let hi: Vec<usize> = offset.iter().map(|&o| o + m).collect();
        self.box_sum(offset, &hi) / cast::<F>((m.pow(self.d as u32)) as f64)
    }
}

/// Weighted traversal of the cells meeting a cube: calls `visit(value,
/// weight)` with the intersection volume in cell units (`prod_k w_k`).
fn for_each_cell_weight<F: Real>(
    f: &GridFunction<F>,
    q: &Cube<F>,
    mut visit: impl FnMut(F, F),
) -> Result<()> {
    if q.d() != f.d() {
        return Err(Error::Shape {
            expected_d: f.d(),
            expected_n: f.n(),
            got_d: q.d(),
            got_n: f.n(),
        });
    }
    let n = f.n();
    let overlaps: Vec<AxisOverlap<F>> = (0..f.d())
        .map(|k| axis_overlap(n, q.anchor()[k], q.anchor()[k] + q.side()))
        .collect();
    let mut lo = [0usize; MAX_DIM];
    let mut hi = [1usize; MAX_DIM];
    for k in 0..f.d() {
        lo[k] = 0;
        hi[k] = overlaps[k].weights.len();
    }
    let strides = f.strides();
    for idx in BoxIter::new(f.d(), lo, hi) {
        let mut w = F::one();
        let mut cell = 0usize;
        for k in 0..f.d() {
            w *= overlaps[k].weights[idx[k]];
            cell += (overlaps[k].start + idx[k]) * strides[k];
        }
        if w > F::zero() {
            visit(f.values()[cell], w);
        }
    }
    Ok(())
}

/// Average of `f` over the cube `q`, `(1/|Q|) int_Q f`.
///
/// Lattice and non-lattice cubes alike are handled through exact cell-cube
/// intersection volumes. The mean is computed as a weighted mean, shifted by
/// the first covered value, so constants come back unchanged bit-for-bit.
pub fn cube_average<F: Real>(f: &GridFunction<F>, q: &Cube<F>) -> Result<F> {
    let mut mass = NeumaierSum::new();
    let mut dev = NeumaierSum::new();
    let mut base = None;
    for_each_cell_weight(f, q, |v, w| {
        let b = *base.get_or_insert(v);
        mass.add(w);
        dev.add((v - b) * w);
    })?;
    let base = base.ok_or_else(|| Error::Domain("cube covers no cells".into()))?;
    Ok(base + dev.value() / mass.value())
}

/// Mean oscillation `M(f,Q) = (1/|Q|) int_Q |f - f_Q|`.
///
/// Zero iff `f` is a.e. constant on `Q`; needs a second weighted pass since
/// `|f - f_Q|` is not linear in box sums.
pub fn mean_oscillation<F: Real>(f: &GridFunction<F>, q: &Cube<F>) -> Result<F> {
    let avg = cube_average(f, q)?;
    let mut mass = NeumaierSum::new();
    let mut acc = NeumaierSum::new();
    for_each_cell_weight(f, q, |v, w| {
        mass.add(w);
        acc.add((v - avg).abs() * w);
    })?;
    Ok(acc.value() / mass.value())
}

/// Mean absolute deviation from an arbitrary constant, `(1/|Q|) int_Q |f-c|`.
pub fn mean_abs_deviation<F: Real>(f: &GridFunction<F>, q: &Cube<F>, c: F) -> Result<F> {
    let mut mass = NeumaierSum::new();
    let mut acc = NeumaierSum::new();
    for_each_cell_weight(f, q, |v, w| {
        mass.add(w);
        acc.add((v - c).abs() * w);
    })?;
    Ok(acc.value() / mass.value())
}

/// `min_c || f - g - c ||_{L^p}`: the `L^p` distance in the quotient modulo
/// constants.
///
/// For `p = 2` the optimal shift is the mean difference (closed form); for
/// other `p >= 1` the objective is convex in `c` and a golden-section search
/// over `[min(h), max(h)]` locates the minimum.
pub fn lp_distance_mod_constants<F: Real>(
    f: &GridFunction<F>,
    g: &GridFunction<F>,
    p: F,
) -> Result<F> {
    f.check_shape(g)?;
    if p < F::one() {
        return Err(Error::Domain(format!("exponent p={p} must be >= 1")));
    }
    let h = f.sub(g)?;
    let two = cast::<F>(2.0);
    if (p - two).abs() <= F::epsilon() * two {
        let c = h.mean();
        let mut acc = NeumaierSum::new();
        for &v in h.values() {
            let t = v - c;
            acc.add(t * t);
        }
        return Ok((acc.value() * h.cell_volume()).sqrt());
    }

    let objective = |c: F| -> F {
        let mut acc = NeumaierSum::new();
        for &v in h.values() {
            acc.add((v - c).abs().powf(p));
        }
        (acc.value() * h.cell_volume()).powf(F::one() / p)
    };

    let (mut a, mut b) = (h.min_value(), h.max_value());
    if b - a <= F::zero() {
        return Ok(F::zero());
    }
    let inv_phi = cast::<F>(0.618_033_988_749_894_9);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    let width_tol = (b - a) * F::epsilon() * cast::<F>(8.0);
    let mut iters = 0usize;
    while b - a > width_tol && iters < 300 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = objective(x2);
        }
        iters += 1;
    }
    Ok(objective((a + b) / two))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_grid(rng: &mut StdRng, d: usize, n: usize) -> GridFunction<f64> {
        let len = n.pow(d as u32);
        let values = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        GridFunction::new(d, n, values).unwrap()
    }

    fn direct_box_sum(f: &GridFunction<f64>, lo: [usize; MAX_DIM], hi: [usize; MAX_DIM]) -> f64 {
        let strides = f.strides();
        BoxIter::new(f.d(), lo, hi)
            .map(|idx| {
                let i: usize = (0..f.d()).map(|k| idx[k] * strides[k]).sum();
                f.values()[i]
            })
            .sum()
    }

    #[test]
    fn prefix_sum_constant_grid_gives_box_volumes() {
        let f = GridFunction::constant(2, 4, 1.0).unwrap();
        let table = prefix_sum(&f);
        for m in 1..=4usize {
            for ox in 0..=(4 - m) {
                for oy in 0..=(4 - m) {
                    let integral = table.box_integral(&[ox, oy], &[ox + m, oy + m]);
                    let vol = (m as f64 / 4.0).powi(2);
                    assert!((integral - vol).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn prefix_sum_single_cell_mass() {
        let mut values = vec![0.0; 16];
        values[2 * 4 + 1] = 1.0; // cell (2,1)
        let f = GridFunction::new(2, 4, values).unwrap();
        let table = prefix_sum(&f);
        assert_eq!(table.box_integral(&[2, 1], &[3, 2]), 1.0 / 16.0);
        assert_eq!(table.box_integral(&[0, 0], &[4, 4]), 1.0 / 16.0);
        assert_eq!(table.box_integral(&[0, 0], &[2, 1]), 0.0);
    }

    #[test]
    fn prefix_sum_matches_direct_summation() {
        let mut rng = StdRng::seed_from_u64(7);
        for d in 1..=3usize {
            let n = 8;
            let f = random_grid(&mut rng, d, n);
            let table = prefix_sum(&f);
            for _ in 0..200 {
                let mut lo = [0usize; MAX_DIM];
                let mut hi = [1usize; MAX_DIM];
                for k in 0..d {
                    let a = rng.gen_range(0..n);
                    let b = rng.gen_range(a + 1..=n);
                    lo[k] = a;
                    hi[k] = b;
                }
                let direct = direct_box_sum(&f, lo, hi);
                let fast = table.box_sum(&lo[..d], &hi[..d]);
                assert!(
                    (direct - fast).abs() <= 1e-12 * (1.0 + direct.abs()),
                    "d={d} lo={lo:?} hi={hi:?}: {direct} vs {fast}"
                );
            }
        }
    }

    #[test]
    fn cube_average_of_constant_is_constant() {
        let f = GridFunction::<f64>::constant(2, 8, 3.25).unwrap();
        let q = Cube::new(vec![0.13, 0.4], 0.37).unwrap();
        assert!((cube_average(&f, &q).unwrap() - 3.25).abs() < 1e-14);
    }

    #[test]
    fn cube_average_step_on_unit_interval() {
        let f = GridFunction::new(1, 2, vec![0.0, 1.0]).unwrap();
        let q = Cube::new(vec![0.0], 1.0).unwrap();
        assert_eq!(cube_average(&f, &q).unwrap(), 0.5);
    }

    #[test]
    fn cube_average_lattice_matches_cell_mean() {
        let mut rng = StdRng::seed_from_u64(11);
        let f = random_grid(&mut rng, 2, 4);
        let q = Cube::from_lattice(4, 2, &[1, 2]).unwrap();
        let direct = (f.value_at(&[1, 2]) + f.value_at(&[1, 3]) + f.value_at(&[2, 2])
            + f.value_at(&[2, 3]))
            / 4.0;
        assert!((cube_average(&f, &q).unwrap() - direct).abs() < 1e-14);
        let table = prefix_sum(&f);
        assert!((table.lattice_cube_average(2, &[1, 2]) - direct).abs() < 1e-14);
    }

    #[test]
    fn cube_outside_domain_is_rejected() {
        assert!(Cube::<f64>::new(vec![0.7], 0.5).is_err());
        assert!(Cube::<f64>::new(vec![-0.1], 0.5).is_err());
        assert!(Cube::<f64>::new(vec![0.0, 0.0], 1.5).is_err());
    }

    #[test]
    fn mean_oscillation_constant_is_zero() {
        let f = GridFunction::constant(2, 6, -2.0).unwrap();
        let q = Cube::new(vec![0.1, 0.2], 0.55).unwrap();
        assert_eq!(mean_oscillation(&f, &q).unwrap(), 0.0);
    }

    #[test]
    fn mean_oscillation_of_balanced_step_is_half() {
        let f = GridFunction::new(1, 2, vec![0.0, 1.0]).unwrap();
        let q = Cube::new(vec![0.0], 1.0).unwrap();
        assert_eq!(mean_oscillation(&f, &q).unwrap(), 0.5);
    }

    #[test]
    fn mean_oscillation_matches_direct_summation() {
        let mut rng = StdRng::seed_from_u64(13);
        let f = random_grid(&mut rng, 2, 6);
        for _ in 0..50 {
            let m = rng.gen_range(1..=6usize);
            let ox = rng.gen_range(0..=(6 - m));
            let oy = rng.gen_range(0..=(6 - m));
            let q = Cube::from_lattice(6, m, &[ox, oy]).unwrap();
            // Direct two-pass oracle over whole cells.
            let cells: Vec<f64> = BoxIter::new(2, [ox, oy, 0], [ox + m, oy + m, 1])
                .map(|idx| f.value_at(&[idx[0], idx[1]]))
                .collect();
            let mean = cells.iter().sum::<f64>() / cells.len() as f64;
            let direct = cells.iter().map(|v| (v - mean).abs()).sum::<f64>() / cells.len() as f64;
            let got = mean_oscillation(&f, &q).unwrap();
            assert!((got - direct).abs() <= 1e-12, "m={m}: {got} vs {direct}");
        }
    }

    #[test]
    fn oscillation_shift_and_scale_invariance() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..20 {
            let f = random_grid(&mut rng, 2, 5);
            let q = Cube::new(vec![rng.gen_range(0.0..0.4), rng.gen_range(0.0..0.4)], 0.5).unwrap();
            let base = mean_oscillation(&f, &q).unwrap();
            let c = rng.gen_range(-5.0..5.0);
            let alpha: f64 = rng.gen_range(-3.0..3.0);
            let shifted = mean_oscillation(&f.shifted(c), &q).unwrap();
            let scaled = mean_oscillation(&f.scaled(alpha), &q).unwrap();
            assert!((shifted - base).abs() <= 1e-12 * (1.0 + c.abs()));
            assert!((scaled - alpha.abs() * base).abs() <= 1e-12 * (1.0 + alpha.abs()));
        }
    }

    #[test]
    fn oscillation_bounded_by_twice_any_deviation() {
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..20 {
            let f = random_grid(&mut rng, 1, 16);
            let q = Cube::new(vec![0.25], 0.5).unwrap();
            let osc = mean_oscillation(&f, &q).unwrap();
            let mut sorted: Vec<f64> = f.values().to_vec();
            sorted.sort_by(f64::total_cmp);
            let median = sorted[sorted.len() / 2];
            for c in [median, 0.0] {
                let dev = mean_abs_deviation(&f, &q, c).unwrap();
                assert!(osc <= 2.0 * dev + 1e-12);
            }
        }
    }

    #[test]
    fn lattice_form_round_trip() {
        let q = Cube::<f64>::from_lattice(8, 3, &[2, 4]).unwrap();
        assert_eq!(q.lattice_form(8), Some((3, vec![2, 4])));
        let off = Cube::<f64>::new(vec![0.1, 0.1], 0.3).unwrap();
        assert_eq!(off.lattice_form(8), None);
    }

    #[test]
    fn lp_distance_quotients_out_constants() {
        let mut rng = StdRng::seed_from_u64(23);
        let f = random_grid(&mut rng, 2, 6);
        let g = f.shifted(7.0);
        for p in [1.0, 1.2, 2.0] {
            let dist = lp_distance_mod_constants(&f, &g, p).unwrap();
            assert!(dist <= 1e-10, "p={p}: {dist}");
        }
    }

    #[test]
    fn lp_distance_p2_is_standard_deviation() {
        let mut rng = StdRng::seed_from_u64(29);
        let f = random_grid(&mut rng, 1, 32);
        let zero = GridFunction::constant(1, 32, 0.0).unwrap();
        let mean = f.mean();
        let var = f.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 32.0;
        let got = lp_distance_mod_constants(&f, &zero, 2.0).unwrap();
        assert!((got - var.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn lp_distance_matches_fine_scan_oracle() {
        let mut rng = StdRng::seed_from_u64(31);
        let f = random_grid(&mut rng, 1, 12);
        let g = random_grid(&mut rng, 1, 12);
        let p = 1.2;
        let got = lp_distance_mod_constants(&f, &g, p).unwrap();
        // Fine scan over the shift constant.
        let h = f.sub(&g).unwrap();
        let (lo, hi) = (h.min_value(), h.max_value());
        let mut best = f64::INFINITY;
        let steps = 2_000_000usize;
        for i in 0..=steps {
            let c = lo + (hi - lo) * i as f64 / steps as f64;
            let val = (h.values().iter().map(|v| (v - c).abs().powf(p)).sum::<f64>() / 12.0)
                .powf(1.0 / p);
            best = best.min(val);
        }
        assert!((got - best).abs() <= 1e-8, "{got} vs {best}");
    }

    #[test]
    fn mismatched_grids_error() {
        let f = GridFunction::constant(2, 4, 0.0).unwrap();
        let g = GridFunction::constant(2, 5, 0.0).unwrap();
        assert!(matches!(
            lp_distance_mod_constants(&f, &g, 2.0),
            Err(Error::Shape { .. })
        ));
    }
}
