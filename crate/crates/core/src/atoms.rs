//! Predual atoms and their finite `l^1` combinations.
//!
//! An atom is a grid function `g` tied to a constrained cube family at side
//! `eps`: it is supported on the family union, bounded by `eps^(d-1)/|Q|` on
//! each cube, and has zero mean on each cube. Pairing an atom against `f`
//! via `int f g` is then controlled by the family value of `f`, which is the
//! computable heart of the predual norm bounds: the evaluation of a finite
//! atomic functional never exceeds `sum |lambda_n|` times the `B`-norm of
//! `f`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::accum::NeumaierSum;
use crate::error::{Error, Result};
use crate::grid::{BoxIter, GridFunction, MAX_DIM};
use crate::oscillation::{b_norm, CubeFamily, SelectMode};
use crate::synth;
use crate::{cast, Real};

/// Mean-zero building block supported on a constrained cube family.
#[derive(Clone, Debug)]
pub struct Atom<F> {
    family: CubeFamily<F>,
    values: GridFunction<F>,
}

impl<F: Real> Atom<F> {
    /// Ties a grid function to a family. Structural requirements (matching
    /// dimension, lattice-aligned constrained family) are enforced here;
    /// the analytic atom conditions are the business of [`validate_atom`],
    /// which reports rather than rejects.
    pub fn new(family: CubeFamily<F>, values: GridFunction<F>) -> Result<Self> {
        if !family.constrained() {
            return Err(Error::Family("atoms require a constrained family".into()));
        }
        if family.is_empty() {
            return Err(Error::Family("atoms require a non-empty family".into()));
        }
        if family.cubes()[0].d() != values.d() {
            return Err(Error::Family(format!(
                "family dimension {} does not match grid dimension {}",
                family.cubes()[0].d(),
                values.d()
            )));
        }
        if family.lattice_form(values.n()).is_none() {
            return Err(Error::Family(
                "atom families must be lattice-aligned on the value grid".into(),
            ));
        }
        Ok(Atom { family, values })
    }

    pub fn family(&self) -> &CubeFamily<F> {
        &self.family
    }

    pub fn values(&self) -> &GridFunction<F> {
        &self.values
    }

    pub fn epsilon(&self) -> F {
        self.family.side()
    }

    /// The per-cube sup bound `eps^(d-1)/|Q|`.
    pub fn sup_bound(&self) -> F {
        let d = self.values.d();
        self.epsilon().powi((d - 1) as i32) / self.epsilon().powi(d as i32)
    }

    fn cube_cells(&self) -> (usize, Vec<Vec<usize>>) {
        self.family
            .lattice_form(self.values.n())
            .expect("checked at construction")
    }
}

/// Worst-violation report for the three atom conditions.
#[derive(Clone, Debug)]
pub struct ValidationReport<F> {
    /// Largest |g| outside the family union.
    pub support_violation: F,
    /// Largest per-cube excess of |g| over the sup bound.
    pub bound_excess: F,
    /// Largest per-cube |mean of g| (the mean-zero condition scaled by |Q|).
    pub mean_violation: F,
    pub tol: F,
    pub valid: bool,
}

/// Checks the atom conditions at tolerance `tol`: support inside the family
/// union, `|g| <= eps^(d-1)/|Q| + tol` per cube, and `|int_Q g| <= tol |Q|`
/// per cube. Reports worst violations instead of erroring.
pub fn validate_atom<F: Real>(atom: &Atom<F>, tol: F) -> ValidationReport<F> {
    let g = atom.values();
    let d = g.d();
    let strides = g.strides();
    let (m, offsets) = atom.cube_cells();

    let mut inside = vec![false; g.len()];
    let mut bound_excess = F::zero();
    let mut mean_violation = F::zero();
    let bound = atom.sup_bound();
    for off in &offsets {
        let mut lo = [0usize; MAX_DIM];
        let mut hi = [1usize; MAX_DIM];
        for k in 0..d {
            lo[k] = off[k];
            hi[k] = off[k] + m;
        }
        let mut sup = F::zero();
        let mut mean = NeumaierSum::new();
        let mut count = 0usize;
        for idx in BoxIter::new(d, lo, hi) {
            let cell: usize = (0..d).map(|k| idx[k] * strides[k]).sum();
            inside[cell] = true;
            sup = sup.max(g.values()[cell].abs());
            mean.add(g.values()[cell]);
            count += 1;
        }
        bound_excess = bound_excess.max(sup - bound);
        mean_violation = mean_violation.max((mean.value() / cast::<F>(count as f64)).abs());
    }

    let mut support_violation = F::zero();
    for (cell, &is_in) in inside.iter().enumerate() {
        if !is_in {
            support_violation = support_violation.max(g.values()[cell].abs());
        }
    }

    let valid = support_violation <= tol && bound_excess <= tol && mean_violation <= tol;
    ValidationReport {
        support_violation,
        bound_excess,
        mean_violation,
        tol,
        valid,
    }
}

/// Projects a raw grid function onto a valid atom for the family: restrict
/// to the family union, subtract the per-cube mean on each cube, then scale
/// by the largest `sigma <= 1` that enforces the sup bound.
///
/// Subtract-then-scale (rather than clipping) preserves the mean-zero
/// condition and the bound simultaneously. A per-cube-constant input comes
/// back as the zero atom; an input already satisfying all three conditions
/// comes back unchanged.
pub fn make_atom<F: Real>(family: CubeFamily<F>, raw: &GridFunction<F>) -> Result<Atom<F>> {
    let atom = Atom::new(family, GridFunction::constant(raw.d(), raw.n(), F::zero())?)?;
    let (m, offsets) = atom.cube_cells();
    let d = raw.d();
    let strides = raw.strides();
    let mut out = vec![F::zero(); raw.len()];
    let mut max_abs = F::zero();
    for off in &offsets {
        let mut lo = [0usize; MAX_DIM];
        let mut hi = [1usize; MAX_DIM];
        for k in 0..d {
            lo[k] = off[k];
            hi[k] = off[k] + m;
        }
        let mut mean = NeumaierSum::new();
        let mut count = 0usize;
        for idx in BoxIter::new(d, lo, hi) {
            let cell: usize = (0..d).map(|k| idx[k] * strides[k]).sum();
            mean.add(raw.values()[cell]);
            count += 1;
        }
        let mean = mean.value() / cast::<F>(count as f64);
        for idx in BoxIter::new(d, lo, hi) {
            let cell: usize = (0..d).map(|k| idx[k] * strides[k]).sum();
            let v = raw.values()[cell] - mean;
            out[cell] = v;
            max_abs = max_abs.max(v.abs());
        }
    }
    let bound = atom.sup_bound();
    let sigma = if max_abs > bound {
        bound / max_abs
    } else {
        F::one()
    };
    if sigma < F::one() {
        for v in &mut out {
            *v = *v * sigma;
        }
    }
    Atom::new(atom.family, GridFunction::new(d, raw.n(), out)?)
}

/// `int f g` over the domain; constants pair to zero against mean-zero atoms.
pub fn pair<F: Real>(f: &GridFunction<F>, atom: &Atom<F>) -> Result<F> {
    let g = atom.values();
    if !f.same_shape(g) {
        return Err(Error::Shape {
            expected_d: f.d(),
            expected_n: f.n(),
            got_d: g.d(),
            got_n: g.n(),
        });
    }
    let mut acc = NeumaierSum::new();
    for (&a, &b) in f.values().iter().zip(g.values()) {
        acc.add(a * b);
    }
    Ok(acc.value() * f.cell_volume())
}

/// Finite `l^1` combination of atoms, with an explicit bound on the `l^1`
/// mass of any truncated tail.
#[derive(Clone, Debug)]
pub struct AtomicFunctional<F> {
    terms: Vec<(F, Atom<F>)>,
    tail_bound: F,
}

impl<F: Real> AtomicFunctional<F> {
    pub fn new(terms: Vec<(F, Atom<F>)>) -> Self {
        AtomicFunctional {
            terms,
            tail_bound: F::zero(),
        }
    }

    /// Marks this functional as the truncation of a longer series whose
    /// dropped terms have `l^1` mass at most `tail_bound`.
    pub fn with_tail_bound(mut self, tail_bound: F) -> Self {
        self.tail_bound = tail_bound;
        self
    }

    pub fn terms(&self) -> &[(F, Atom<F>)] {
        &self.terms
    }

    pub fn tail_bound(&self) -> F {
        self.tail_bound
    }

    /// `sum |lambda_n|` over the stored terms.
    pub fn coefficient_l1(&self) -> F {
        let mut acc = NeumaierSum::new();
        for (lambda, _) in &self.terms {
            acc.add(lambda.abs());
        }
        acc.value()
    }
}

/// `sum_n lambda_n int f g_n`, evaluated term by term in storage order.
pub fn functional_value<F: Real>(f: &GridFunction<F>, phi: &AtomicFunctional<F>) -> Result<F> {
    let mut acc = NeumaierSum::new();
    for (lambda, atom) in phi.terms() {
        acc.add(*lambda * pair(f, atom)?);
    }
    Ok(acc.value())
}

/// Empirical lower bound for the functional norm: the best ratio
/// `|phi(f)| / ||f||_B` over the probe set. Probes with vanishing norm are
/// skipped; an empty or all-degenerate probe set is an error.
pub fn empirical_functional_norm<F: Real>(
    phi: &AtomicFunctional<F>,
    probes: &[GridFunction<F>],
    mode: SelectMode,
    s: usize,
) -> Result<F> {
    if probes.is_empty() {
        return Err(Error::Argument("empty probe set".into()));
    }
    let mut best: Option<F> = None;
    for probe in probes {
        let (norm, _) = b_norm(probe, mode, s)?;
        if norm <= F::zero() {
            continue;
        }
        let ratio = functional_value(probe, phi)?.abs() / norm;
        best = Some(best.map_or(ratio, |b: F| b.max(ratio)));
    }
    best.ok_or_else(|| Error::Argument("no probe with positive norm".into()))
}

/// Default probe set: the sign pattern of each atom, scaled indicators of
/// dyadic boxes, and seeded random grids. Sign-matched probes realize the
/// single-atom pairing bound up to discretization.
pub fn default_probes<F: Real>(
    phi: &AtomicFunctional<F>,
    d: usize,
    n: usize,
    random_count: usize,
    seed: u64,
) -> Result<Vec<GridFunction<F>>> {
    let mut probes = Vec::new();
    for (_, atom) in phi.terms() {
        probes.push(atom.values().map(|v| {
            if v > F::zero() {
                F::one()
            } else if v < F::zero() {
                -F::one()
            } else {
                F::zero()
            }
        }));
    }
    let mut rect = vec![(0.0, 0.5); d];
    probes.push(synth::indicator::<F>(d, n, &rect)?.scaled(cast::<F>(2.0)));
    rect = vec![(0.25, 0.75); d];
    probes.push(synth::indicator::<F>(d, n, &rect)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_count {
        let sub_seed: u64 = rand::Rng::gen(&mut rng);
        probes.push(synth::random::<F>(d, n, sub_seed)?);
    }
    Ok(probes)
}
