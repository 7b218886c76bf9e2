//! The capped oscillation bracket and its relatives.
//!
//! For a side `eps` and a function `f`, the bracket `[f]_eps` is
//! `eps^(d-1) * sup_F sum_{Q in F} M(f,Q)` over families `F` of pairwise
//! interior-disjoint `eps`-cubes with `|F| <= floor(eps^(1-d))`. The
//! supremum here runs over an explicit candidate set: cubes of side
//! `m/n` anchored on the lattice of step `eps/s`, so computed values are
//! certified lower bounds of the continuum bracket and are exact over the
//! candidate set when an exact solver is used.
//!
//! Three solvers select the family: a cardinality-capped interval-scheduling
//! dynamic program (`Exact`, d=1 only), branch and bound over the candidate
//! conflict graph (`Bnb`, small candidate counts), and descending-weight
//! greedy (`Greedy`, a lower bound at any size). A brute-force enumerator
//! ([`oracle_family_value`]) supplies ground truth on tiny instances.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{
    geom_slack, mean_oscillation, prefix_sum, BoxIter, Cube, GridFunction, MAX_DIM,
};
use crate::{cast, Real};

/// Candidate-count ceiling for the branch-and-bound solver.
pub const BNB_CANDIDATE_LIMIT: usize = 40;

/// Candidate-count ceiling for the exhaustive oracle.
pub const ORACLE_CANDIDATE_LIMIT: usize = 24;

/// Family-selection strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectMode {
    /// Cardinality-capped weighted-interval-scheduling DP; d = 1 only,
    /// optimal over the candidate set.
    Exact,
    /// Branch and bound over the conflict graph; optimal, limited to
    /// [`BNB_CANDIDATE_LIMIT`] candidates.
    Bnb,
    /// Descending-weight greedy with disjointness check; a lower bound.
    Greedy,
}

impl std::str::FromStr for SelectMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SelectMode::Exact),
            "bnb" => Ok(SelectMode::Bnb),
            "greedy" => Ok(SelectMode::Greedy),
            other => Err(Error::Argument(format!(
                "unknown mode '{other}' (expected exact|bnb|greedy)"
            ))),
        }
    }
}

impl std::fmt::Display for SelectMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SelectMode::Exact => write!(f, "exact"),
            SelectMode::Bnb => write!(f, "bnb"),
            SelectMode::Greedy => write!(f, "greedy"),
        }
    }
}

/// Pairwise interior-disjoint equal-side cubes, optionally subject to the
/// cardinality cap `floor(eps^(1-d))`.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeFamily<F> {
    side: F,
    cubes: Vec<Cube<F>>,
    constrained: bool,
}

impl<F: Real> CubeFamily<F> {
    /// Builds and validates a family. Cubes are stored sorted by anchor so
    /// iteration order (and every reduction over it) is deterministic.
    pub fn new(side: F, mut cubes: Vec<Cube<F>>, constrained: bool) -> Result<Self> {
        let slack = geom_slack::<F>();
        if !(side > F::zero() && side <= F::one() + slack) {
            return Err(Error::Family(format!("family side {side} outside (0,1]")));
        }
        for c in &cubes {
            if (c.side() - side).abs() > slack * side.max(F::one()) {
                return Err(Error::Family(format!(
                    "cube side {} differs from family side {side}",
                    c.side()
                )));
            }
        }
        if let Some(first) = cubes.first() {
            let d = first.d();
            if cubes.iter().any(|c| c.d() != d) {
                return Err(Error::Family("cubes of mixed dimension".into()));
            }
            for i in 0..cubes.len() {
                for j in (i + 1)..cubes.len() {
                    if !interiors_disjoint(&cubes[i], &cubes[j], slack) {
                        return Err(Error::Family(format!(
                            "cubes {:?} and {:?} have overlapping interiors",
                            cubes[i].anchor(),
                            cubes[j].anchor()
                        )));
                    }
                }
            }
            if constrained {
                let cap = max_family_cardinality(side, d)?;
                if cubes.len() > cap {
                    return Err(Error::Family(format!(
                        "constrained family has {} cubes, cap is {cap}",
                        cubes.len()
                    )));
                }
            }
        }
        cubes.sort_by(|a, b| {
            a.anchor()
                .iter()
                .zip(b.anchor().iter())
                .map(|(x, y)| x.partial_cmp(y).expect("finite anchors"))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Ok(CubeFamily {
            side,
            cubes,
            constrained,
        })
    }

    pub fn empty(side: F, constrained: bool) -> Self {
        CubeFamily {
            side,
            cubes: Vec::new(),
            constrained,
        }
    }

    pub fn side(&self) -> F {
        self.side
    }

    pub fn cubes(&self) -> &[Cube<F>] {
        &self.cubes
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn constrained(&self) -> bool {
        self.constrained
    }

    /// Lattice form `(m, offsets-per-cube)` of all cubes on the `n`-grid.
    pub fn lattice_form(&self, n: usize) -> Option<(usize, Vec<Vec<usize>>)> {
        let mut m = None;
        let mut offs = Vec::with_capacity(self.cubes.len());
        for c in &self.cubes {
            let (cm, off) = c.lattice_form(n)?;
            if *m.get_or_insert(cm) != cm {
                return None;
            }
            offs.push(off);
        }
        Some((m.unwrap_or(0), offs))
    }
}

fn interiors_disjoint<F: Real>(a: &Cube<F>, b: &Cube<F>, slack: F) -> bool {
    let side = a.side().min(b.side());
    (0..a.d()).any(|k| (a.anchor()[k] - b.anchor()[k]).abs() >= side - slack * cast::<F>(4.0))
}

/// Sampled map `eps -> [f]_eps` with the witness family for each sample,
/// `eps` descending.
#[derive(Clone, Debug)]
pub struct OscillationCurve<F> {
    pub entries: Vec<CurveEntry<F>>,
}

#[derive(Clone, Debug)]
pub struct CurveEntry<F> {
    pub epsilon: F,
    pub value: F,
    pub cap: usize,
    pub witness: CubeFamily<F>,
}

impl<F: Real> OscillationCurve<F> {
    /// Entry achieving the maximum value (first such in eps-descending
    /// order), if any.
    pub fn argmax(&self) -> Option<&CurveEntry<F>> {
        let mut best: Option<&CurveEntry<F>> = None;
        for e in &self.entries {
            if best.map_or(true, |b| e.value > b.value) {
                best = Some(e);
            }
        }
        best
    }
}

/// `floor(eps^(1-d))`: the largest admissible family cardinality at side
/// `eps`. Always 1 when `d = 1`.
///
/// A one-ulp-scale nudge keeps the floor stable when `eps^(1-d)` lands on an
/// integer up to round-off; for lattice sides `m/n` this matches the exact
/// rational floor computed by [`lattice_cap`].
pub fn max_family_cardinality<F: Real>(eps: F, d: usize) -> Result<usize> {
    if d == 0 || d > MAX_DIM {
        return Err(Error::Domain(format!("dimension d={d} outside 1..={MAX_DIM}")));
    }
    let slack = geom_slack::<F>();
    if !(eps > F::zero() && eps <= F::one() + slack) {
        return Err(Error::Domain(format!("eps={eps} outside (0,1]")));
    }
    if d == 1 {
        return Ok(1);
    }
    let raw = (F::one() / eps).powi((d - 1) as i32);
    let nudged = raw * (F::one() + F::epsilon() * cast::<F>(16.0));
    Ok(nudged
        .floor()
        .to_usize()
        .ok_or_else(|| Error::Domain(format!("cap overflow at eps={eps}")))?
        .max(1))
}

/// Exact cardinality cap for the lattice side `m/n`:
/// `floor((n/m)^(d-1))` computed in integers.
pub fn lattice_cap(n: usize, m: usize, d: usize) -> usize {
    let p = (d - 1) as u32;
    (((n as u128).pow(p)) / ((m as u128).pow(p))) as usize
}

/// `eps^(d-1) * sum_{Q in F} M(f, Q)`, the value a family contributes to the
/// bracket. Empty families contribute zero.
pub fn family_value<F: Real>(f: &GridFunction<F>, family: &CubeFamily<F>) -> Result<F> {
    validate_family_for(f, family)?;
    let mut sum = F::zero();
    for q in family.cubes() {
        sum += mean_oscillation(f, q)?;
    }
    Ok(family.side().powi((f.d() - 1) as i32) * sum)
}

fn validate_family_for<F: Real>(f: &GridFunction<F>, family: &CubeFamily<F>) -> Result<()> {
    if let Some(q) = family.cubes().first() {
        if q.d() != f.d() {
            return Err(Error::Family(format!(
                "family dimension {} does not match grid dimension {}",
                q.d(),
                f.d()
            )));
        }
    }
    Ok(())
}

/// The operator a family induces: `eps^(d-1) (1/|Q|) sum_Q chi_Q (f - f_Q)`,
/// a grid function supported on the union of the family.
///
/// Cubes must be lattice-aligned so that the output is again piecewise
/// constant on the same grid; its `L^1` norm equals [`family_value`].
pub fn family_operator<F: Real>(
    f: &GridFunction<F>,
    family: &CubeFamily<F>,
) -> Result<GridFunction<F>> {
    validate_family_for(f, family)?;
    let n = f.n();
    let d = f.d();
    let (m, offsets) = family
        .lattice_form(n)
        .ok_or_else(|| Error::Family("family operator requires lattice-aligned cubes".into()))?;
    let table = prefix_sum(f);
    let mut out = vec![F::zero(); f.len()];
    let strides = f.strides();
    let factor = family.side().powi((d - 1) as i32) / family.side().powi(d as i32);
    for off in &offsets {
        let avg = table.lattice_cube_average(m, off);
        let mut lo = [0usize; MAX_DIM];
        let mut hi = [1usize; MAX_DIM];
        for k in 0..d {
            lo[k] = off[k];
            hi[k] = off[k] + m;
        }
        for idx in BoxIter::new(d, lo, hi) {
            let cell: usize = (0..d).map(|k| idx[k] * strides[k]).sum();
            out[cell] = factor * (f.values()[cell] - avg);
        }
    }
    GridFunction::new(d, n, out)
}

// ---------------------------------------------------------------------------
// Candidate machinery
// ---------------------------------------------------------------------------

/// Candidate cubes for side `m/n`: anchors `j * m/(s n)` per axis,
/// `j = 0..=j_max` with `j_max = floor(s (n-m)/m)`. Two candidates have
/// disjoint interiors iff their `j` indices differ by at least `s` on some
/// axis, so all conflict checks are integer comparisons.
struct CandidateGrid {
    d: usize,
    n: usize,
    m: usize,
    s: usize,
    j_max: usize,
}

impl CandidateGrid {
    fn new(d: usize, n: usize, m: usize, s: usize) -> Result<Self> {
        if s == 0 {
            return Err(Error::Argument("refinement s must be >= 1".into()));
        }
        if m == 0 || m > n {
            return Err(Error::Domain(format!("lattice side m={m} outside 1..={n}")));
        }
        Ok(CandidateGrid {
            d,
            n,
            m,
            s,
            j_max: s * (n - m) / m,
        })
    }

    fn per_axis(&self) -> usize {
        self.j_max + 1
    }

    fn total(&self) -> usize {
        self.per_axis().pow(self.d as u32)
    }

    fn side<F: Real>(&self) -> F {
        cast::<F>(self.m as f64) / cast::<F>(self.n as f64)
    }

    fn anchor_coord<F: Real>(&self, j: usize) -> F {
        cast::<F>((j * self.m) as f64) / cast::<F>((self.s * self.n) as f64)
    }

    fn cube<F: Real>(&self, j: &[usize; MAX_DIM]) -> Cube<F> {
        let anchor: Vec<F> = (0..self.d).map(|k| self.anchor_coord(j[k])).collect();
        Cube::new(anchor, self.side()).expect("candidate cubes are inside the domain")
    }

    fn disjoint(&self, a: &[usize; MAX_DIM], b: &[usize; MAX_DIM]) -> bool {
        (0..self.d).any(|k| a[k].abs_diff(b[k]) >= self.s)
    }
}

struct Candidate<F> {
    j: [usize; MAX_DIM],
    weight: F,
}

/// Evaluates `M(f, Q)` for every candidate, in lexicographic `j` order.
fn candidate_weights<F: Real>(f: &GridFunction<F>, grid: &CandidateGrid) -> Vec<Candidate<F>> {
    let per = grid.per_axis();
    let mut hi = [1usize; MAX_DIM];
    for k in 0..grid.d {
        hi[k] = per;
    }
    BoxIter::new(grid.d, [0; MAX_DIM], hi)
        .map(|j| {
            let cube = grid.cube::<F>(&j);
            let weight = mean_oscillation(f, &cube).expect("candidate cube is valid");
            Candidate { j, weight }
        })
        .collect()
}

fn family_from_js<F: Real>(
    grid: &CandidateGrid,
    js: &[[usize; MAX_DIM]],
    constrained: bool,
) -> CubeFamily<F> {
    let cubes: Vec<Cube<F>> = js.iter().map(|j| grid.cube(j)).collect();
    CubeFamily::new(grid.side(), cubes, constrained).expect("solver families are valid")
}

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

/// d=1 cardinality-capped weighted interval scheduling.
///
/// Candidates are the full index range `0..=j_max`; candidate `j` occupies
/// `[j, j+s)` in index units. A suffix DP over (index, remaining cap) gives
/// the optimum; the forward reconstruction prefers the earliest
/// positive-weight candidate consistent with optimality, which yields the
/// lexicographically smallest witness among minimal optimal families.
fn solve_dp_1d<F: Real>(cands: &[Candidate<F>], s: usize, cap: usize) -> (Vec<[usize; MAX_DIM]>, F) {
    let len = cands.len();
    let max_picks = len.div_ceil(s);
    let cap = cap.min(max_picks).max(1);
    // suffix[i][c]: best value from candidates i.. with at most c picks.
    let cols = cap + 1;
    let mut suffix = vec![F::zero(); (len + s) * cols];
    let at = |i: usize, c: usize| i * cols + c;
    for i in (0..len).rev() {
        for c in 1..=cap {
            let skip = suffix[at(i + 1, c)];
            let take = cands[i].weight + suffix[at(i + s, c - 1)];
            suffix[at(i, c)] = if take > skip { take } else { skip };
        }
    }
    let total = suffix[at(0, cap)];
    let mut picked = Vec::new();
    let mut i = 0usize;
    let mut c = cap;
    let mut target = total;
    while i < len && c > 0 {
        let take = cands[i].weight + suffix[at(i + s, c - 1)];
        if cands[i].weight > F::zero() && take == target {
            picked.push(cands[i].j);
            target = target - cands[i].weight;
            c -= 1;
            i += s;
        } else {
            i += 1;
        }
    }
    (picked, total)
}

struct BnbState<'a, F> {
    grid: &'a CandidateGrid,
    cands: &'a [Candidate<F>],
    order: &'a [usize],
    best_value: F,
    best_set: Vec<[usize; MAX_DIM]>,
    chosen: Vec<usize>,
}

fn sorted_js<F>(cands: &[Candidate<F>], chosen: &[usize]) -> Vec<[usize; MAX_DIM]> {
    let mut js: Vec<[usize; MAX_DIM]> = chosen.iter().map(|&i| cands[i].j).collect();
    js.sort();
    js
}

fn bnb_recurse<F: Real>(st: &mut BnbState<'_, F>, pos: usize, cap_left: usize, value: F) {
    if value > st.best_value {
        st.best_value = value;
        st.best_set = sorted_js(st.cands, &st.chosen);
    } else if value == st.best_value && !st.best_set.is_empty() {
        let js = sorted_js(st.cands, &st.chosen);
        if !js.is_empty() && js < st.best_set {
            st.best_set = js;
        }
    }
    if pos >= st.order.len() || cap_left == 0 {
        return;
    }
    // Disjoint-remainder upper bound: top remaining weights compatible with
    // the chosen set, conflicts among the remainder ignored.
    let mut bound = value;
    let mut picked = 0usize;
    for &i in &st.order[pos..] {
        if picked >= cap_left {
            break;
        }
        if st
            .chosen
            .iter()
            .all(|&c| st.grid.disjoint(&st.cands[c].j, &st.cands[i].j))
        {
            bound = bound + st.cands[i].weight;
            picked += 1;
        }
    }
    if bound < st.best_value {
        return;
    }
    let cand = st.order[pos];
    let compatible = st
        .chosen
        .iter()
        .all(|&c| st.grid.disjoint(&st.cands[c].j, &st.cands[cand].j));
    if compatible {
        st.chosen.push(cand);
        let w = st.cands[cand].weight;
        bnb_recurse(st, pos + 1, cap_left - 1, value + w);
        st.chosen.pop();
    }
    bnb_recurse(st, pos + 1, cap_left, value);
}

/// Branch and bound over the candidate conflict graph, weight-sorted
/// branching, include-first.
fn solve_bnb<F: Real>(
    grid: &CandidateGrid,
    cands: &[Candidate<F>],
    cap: usize,
) -> (Vec<[usize; MAX_DIM]>, F) {
    let mut order: Vec<usize> = (0..cands.len())
        .filter(|&i| cands[i].weight > F::zero())
        .collect();
    order.sort_by(|&a, &b| {
        cands[b]
            .weight
            .partial_cmp(&cands[a].weight)
            .expect("finite weights")
            .then(cands[a].j.cmp(&cands[b].j))
    });
    let mut st = BnbState {
        grid,
        cands,
        order: &order,
        best_value: F::zero(),
        best_set: Vec::new(),
        chosen: Vec::new(),
    };
    bnb_recurse(&mut st, 0, cap, F::zero());
    (st.best_set, st.best_value)
}

/// Descending-weight greedy: scan candidates by (weight desc, anchor asc),
/// keep every positive-weight cube disjoint from those already taken, up to
/// the cap. A lower bound for the optimal family value.
fn solve_greedy<F: Real>(
    grid: &CandidateGrid,
    cands: &[Candidate<F>],
    cap: usize,
) -> (Vec<[usize; MAX_DIM]>, F) {
    let mut order: Vec<usize> = (0..cands.len())
        .filter(|&i| cands[i].weight > F::zero())
        .collect();
    order.sort_by(|&a, &b| {
        cands[b]
            .weight
            .partial_cmp(&cands[a].weight)
            .expect("finite weights")
            .then(cands[a].j.cmp(&cands[b].j))
    });
    let mut picked: Vec<usize> = Vec::new();
    let mut value = F::zero();
    for &i in &order {
        if picked.len() >= cap {
            break;
        }
        if picked
            .iter()
            .all(|&p| grid.disjoint(&cands[p].j, &cands[i].j))
        {
            value = value + cands[i].weight;
            picked.push(i);
        }
    }
    let mut js: Vec<[usize; MAX_DIM]> = picked.iter().map(|&i| cands[i].j).collect();
    js.sort();
    (js, value)
}

fn snap_lattice_side<F: Real>(f: &GridFunction<F>, eps: F) -> Result<usize> {
    let n = f.n();
    let v = eps.to_f64().unwrap_or(f64::NAN) * n as f64;
    let m = v.round();
    if !(v.is_finite() && (v - m).abs() <= 64.0 * f64::EPSILON * n as f64) || m < 1.0 || m > n as f64
    {
        return Err(Error::Domain(format!(
            "eps={eps} is not a lattice side m/n with 1 <= m <= n={n}"
        )));
    }
    Ok(m as usize)
}

fn solve_at<F: Real>(
    f: &GridFunction<F>,
    m: usize,
    s: usize,
    mode: SelectMode,
    constrained: bool,
) -> Result<CubeFamily<F>> {
    let grid = CandidateGrid::new(f.d(), f.n(), m, s)?;
    let cap = if constrained {
        lattice_cap(f.n(), m, f.d())
    } else {
        usize::MAX
    };
    if mode == SelectMode::Exact && f.d() != 1 {
        return Err(Error::Argument(
            "exact mode is the d=1 interval-scheduling DP; use bnb or greedy for d >= 2".into(),
        ));
    }
    if mode == SelectMode::Bnb && grid.total() > BNB_CANDIDATE_LIMIT {
        return Err(Error::Capacity {
            candidates: grid.total(),
            limit: BNB_CANDIDATE_LIMIT,
        });
    }
    let cands = candidate_weights(f, &grid);
    let (mut js, _) = match mode {
        SelectMode::Exact => solve_dp_1d(&cands, s, cap),
        SelectMode::Bnb => solve_bnb(&grid, &cands, cap),
        SelectMode::Greedy => solve_greedy(&grid, &cands, cap),
    };
    if js.is_empty() {
        // All weights vanish (e.g. constant f): report the first candidate
        // as a zero-value witness rather than an empty family.
        js.push([0usize; MAX_DIM]);
    }
    Ok(family_from_js(&grid, &js, constrained))
}

/// Selects a constrained family maximizing the summed mean oscillation at
/// side `eps = m/n` over the step-`eps/s` anchor lattice.
///
/// Ties are broken toward the lexicographically smallest anchor sequence.
pub fn select_family<F: Real>(
    f: &GridFunction<F>,
    eps: F,
    mode: SelectMode,
    s: usize,
) -> Result<CubeFamily<F>> {
    let m = snap_lattice_side(f, eps)?;
    solve_at(f, m, s, mode, true)
}

/// `[f]_eps` over the candidate set: the family value of the selected family
/// together with the witness. Exact over the candidate set for `exact`/`bnb`
/// modes; a certified lower bound of the continuum bracket in all modes.
pub fn bracket_epsilon<F: Real>(
    f: &GridFunction<F>,
    eps: F,
    mode: SelectMode,
    s: usize,
) -> Result<(F, CubeFamily<F>)> {
    let family = select_family(f, eps, mode, s)?;
    let value = family_value(f, &family)?;
    Ok((value, family))
}

/// `sup_eps [f]_eps` over the sweep `eps in {m/n : 1 <= m <= n}`, with the
/// full sampled curve (eps descending).
pub fn b_norm<F: Real>(
    f: &GridFunction<F>,
    mode: SelectMode,
    s: usize,
) -> Result<(F, OscillationCurve<F>)> {
    let n = f.n();
    let entries: Result<Vec<CurveEntry<F>>> = (1..=n)
        .rev()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&m| {
            let family = solve_at(f, m, s, mode, true)?;
            let value = family_value(f, &family)?;
            Ok(CurveEntry {
                epsilon: family.side(),
                value,
                cap: lattice_cap(n, m, f.d()),
                witness: family,
            })
        })
        .collect();
    let entries = entries?;
    let max = entries.iter().map(|e| e.value).fold(F::zero(), F::max);
    Ok((max, OscillationCurve { entries }))
}

/// Discrete BMO norm: `sup M(f,Q)` over every candidate cube of every side
/// `m/n` with anchor refinement `s`.
pub fn bmo_norm<F: Real>(f: &GridFunction<F>, s: usize) -> Result<F> {
    if s == 0 {
        return Err(Error::Argument("refinement s must be >= 1".into()));
    }
    let n = f.n();
    let per_side: Vec<F> = (1..=n)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&m| {
            let grid = CandidateGrid::new(f.d(), n, m, s).expect("validated above");
            candidate_weights(f, &grid)
                .into_iter()
                .map(|c| c.weight)
                .fold(F::zero(), F::max)
        })
        .collect();
    Ok(per_side.into_iter().fold(F::zero(), F::max))
}

/// Unconstrained (BV-type) functional: the cap is removed and the optimal
/// family is approximated by full shifted tilings, one per anchor offset in
/// `{0..s-1}^d`, maximized over side and offset.
///
/// The best constrained family is folded into the maximum as well (any
/// constrained family is also an unconstrained one), so this functional
/// dominates the capped bracket at every side by construction.
pub fn bv_functional<F: Real>(f: &GridFunction<F>, s: usize) -> Result<F> {
    if s == 0 {
        return Err(Error::Argument("refinement s must be >= 1".into()));
    }
    let n = f.n();
    let d = f.d();
    let per_side: Result<Vec<F>> = (1..=n)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&m| {
            let grid = CandidateGrid::new(d, n, m, s)?;
            let cands = candidate_weights(f, &grid);
            let per = grid.per_axis();
            let eps_pow = grid.side::<F>().powi((d - 1) as i32);
            let mut best = F::zero();
            // One tiling per offset vector o in {0..s-1}^d: cubes at indices
            // j_k = o_k + i*s.
            let mut offset_hi = [1usize; MAX_DIM];
            for k in 0..d {
                offset_hi[k] = s.min(per);
            }
            for offset in BoxIter::new(d, [0; MAX_DIM], offset_hi) {
                let mut sum = F::zero();
                let mut tile_hi = [1usize; MAX_DIM];
                for k in 0..d {
                    tile_hi[k] = (per - offset[k]).div_ceil(s);
                }
                for t in BoxIter::new(d, [0; MAX_DIM], tile_hi) {
                    let mut idx = 0usize;
                    for k in 0..d {
                        idx = idx * per + (offset[k] + t[k] * s);
                    }
                    sum += cands[idx].weight;
                }
                best = best.max(eps_pow * sum);
            }
            let cap = lattice_cap(n, m, d);
            let (_, greedy_val) = solve_greedy(&grid, &cands, cap);
            best = best.max(eps_pow * greedy_val);
            Ok(best)
        })
        .collect();
    Ok(per_side?.into_iter().fold(F::zero(), F::max))
}

/// Anisotropic discrete total variation: sum over interior faces of
/// |jump| x face measure.
pub fn discrete_tv<F: Real>(f: &GridFunction<F>) -> F {
    let n = f.n();
    let d = f.d();
    let strides = f.strides();
    let face = (F::one() / cast::<F>(n as f64)).powi((d - 1) as i32);
    let mut total = F::zero();
    for axis in 0..d {
        let mut hi = [1usize; MAX_DIM];
        for k in 0..d {
            hi[k] = if k == axis { n - 1 } else { n };
        }
        for idx in BoxIter::new(d, [0; MAX_DIM], hi) {
            let i: usize = (0..d).map(|k| idx[k] * strides[k]).sum();
            total += (f.values()[i + strides[axis]] - f.values()[i]).abs();
        }
    }
    total * face
}

/// Brute-force maximum family value over every disjoint candidate subset
/// (respecting the cap when `constrained`); ground truth for the solvers.
///
/// Candidates live on the same step-`eps/s` anchor lattice the solvers use.
pub fn oracle_family_value<F: Real>(
    f: &GridFunction<F>,
    eps: F,
    constrained: bool,
    s: usize,
) -> Result<F> {
    let m = snap_lattice_side(f, eps)?;
    let grid = CandidateGrid::new(f.d(), f.n(), m, s)?;
    if grid.total() > ORACLE_CANDIDATE_LIMIT {
        return Err(Error::Capacity {
            candidates: grid.total(),
            limit: ORACLE_CANDIDATE_LIMIT,
        });
    }
    let cands = candidate_weights(f, &grid);
    let cap = if constrained {
        lattice_cap(f.n(), m, f.d())
    } else {
        usize::MAX
    };

    fn recurse<F: Real>(
        grid: &CandidateGrid,
        cands: &[Candidate<F>],
        pos: usize,
        cap_left: usize,
        chosen: &mut Vec<usize>,
        value: F,
        best: &mut F,
    ) {
        if value > *best {
            *best = value;
        }
        if pos >= cands.len() || cap_left == 0 {
            return;
        }
        if chosen
            .iter()
            .all(|&c| grid.disjoint(&cands[c].j, &cands[pos].j))
        {
            chosen.push(pos);
            recurse(
                grid,
                cands,
                pos + 1,
                cap_left - 1,
                chosen,
                value + cands[pos].weight,
                best,
            );
            chosen.pop();
        }
        recurse(grid, cands, pos + 1, cap_left, chosen, value, best);
    }

    let mut best = F::zero();
    let mut chosen = Vec::new();
    recurse(&grid, &cands, 0, cap, &mut chosen, F::zero(), &mut best);
    Ok(best * grid.side::<F>().powi((f.d() - 1) as i32))
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

    fn step_1d(n: usize) -> GridFunction<f64> {
        let values = (0..n).map(|i| if i < n / 2 { 0.0 } else { 1.0 }).collect();
        GridFunction::new(1, n, values).unwrap()
    }

    #[test]
    fn cardinality_cap_examples() {
        assert_eq!(max_family_cardinality(0.3, 1).unwrap(), 1);
        assert_eq!(max_family_cardinality(0.5, 2).unwrap(), 2);
        assert_eq!(max_family_cardinality(0.3, 3).unwrap(), 11);
        assert!(max_family_cardinality(0.0, 2).is_err());
        assert!(max_family_cardinality(1.5, 2).is_err());
    }

    #[test]
    fn cap_float_matches_lattice_integers() {
        for d in 1..=3usize {
            for n in 1..=24usize {
                for m in 1..=n {
                    let eps = m as f64 / n as f64;
                    assert_eq!(
                        max_family_cardinality(eps, d).unwrap(),
                        lattice_cap(n, m, d).max(1),
                        "d={d} m={m} n={n}"
                    );
                }
            }
        }
    }

    #[test]
    fn family_value_empty_is_zero() {
        let f = GridFunction::<f64>::constant(2, 4, 1.0).unwrap();
        let fam = CubeFamily::empty(0.5, true);
        assert_eq!(family_value(&f, &fam).unwrap(), 0.0);
    }

    #[test]
    fn family_value_step_full_interval() {
        let f = step_1d(8);
        let q = Cube::new(vec![0.0], 1.0).unwrap();
        let fam = CubeFamily::new(1.0, vec![q], true).unwrap();
        assert_eq!(family_value(&f, &fam).unwrap(), 0.5);
    }

    #[test]
    fn family_rejects_overlap_and_cap_violations() {
        let a = Cube::<f64>::new(vec![0.0, 0.0], 0.5).unwrap();
        let b = Cube::<f64>::new(vec![0.25, 0.25], 0.5).unwrap();
        assert!(CubeFamily::new(0.5, vec![a, b], true).is_err());
        // cap for eps=1/2, d=2 is 2; three disjoint cubes exceed it
        let c1 = Cube::<f64>::new(vec![0.0, 0.0], 0.5).unwrap();
        let c2 = Cube::<f64>::new(vec![0.5, 0.0], 0.5).unwrap();
        let c3 = Cube::<f64>::new(vec![0.0, 0.5], 0.5).unwrap();
        assert!(CubeFamily::new(0.5, vec![c1.clone(), c2.clone(), c3.clone()], true).is_err());
        assert!(CubeFamily::new(0.5, vec![c1, c2, c3], false).is_ok());
    }

    #[test]
    fn shared_faces_are_allowed() {
        let c1 = Cube::<f64>::new(vec![0.0, 0.0], 0.5).unwrap();
        let c2 = Cube::<f64>::new(vec![0.5, 0.0], 0.5).unwrap();
        assert!(CubeFamily::new(0.5, vec![c1, c2], true).is_ok());
    }

    #[test]
    fn family_operator_constant_is_zero() {
        let f = GridFunction::<f64>::constant(2, 4, 3.0).unwrap();
        let q = Cube::from_lattice(4, 2, &[1, 1]).unwrap();
        let fam = CubeFamily::new(0.5, vec![q], true).unwrap();
        let out = family_operator(&f, &fam).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn family_operator_single_cube_formula() {
        let mut rng = StdRng::seed_from_u64(3);
        let f = random_grid(&mut rng, 2, 4);
        let q = Cube::from_lattice(4, 2, &[0, 2]).unwrap();
        let fam = CubeFamily::new(0.5, vec![q.clone()], true).unwrap();
        let out = family_operator(&f, &fam).unwrap();
        let avg = crate::grid::cube_average(&f, &q).unwrap();
        let factor = 0.5f64.powi(1) / 0.25; // eps^{d-1} / |Q|
        for x in 0..4 {
            for y in 0..4 {
                let got = out.value_at(&[x, y]);
                if x < 2 && y >= 2 {
                    let want = factor * (f.value_at(&[x, y]) - avg);
                    assert!((got - want).abs() < 1e-12);
                } else {
                    assert_eq!(got, 0.0);
                }
            }
        }
    }

    #[test]
    fn family_operator_l1_norm_equals_family_value() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..10 {
            let f = random_grid(&mut rng, 2, 8);
            let q1 = Cube::from_lattice(8, 2, &[0, 0]).unwrap();
            let q2 = Cube::from_lattice(8, 2, &[4, 3]).unwrap();
            let fam = CubeFamily::new(0.25, vec![q1, q2], true).unwrap();
            let out = family_operator(&f, &fam).unwrap();
            let fv = family_value(&f, &fam).unwrap();
            assert!((out.l1_norm() - fv).abs() <= 1e-12);
        }
    }

    #[test]
    fn trivial_estimate_holds() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let f = random_grid(&mut rng, 2, 8);
            let m = [1usize, 2, 4][rng.gen_range(0..3)];
            let fam = select_family(&f, m as f64 / 8.0, SelectMode::Greedy, 2).unwrap();
            let value = family_value(&f, &fam).unwrap();
            let bound = 2.0 / fam.side() * f.l1_norm();
            assert!(value <= bound + 1e-12, "{value} vs {bound}");
        }
    }

    #[test]
    fn select_family_constant_gives_zero_single_cube() {
        let f = GridFunction::<f64>::constant(1, 8, 2.0).unwrap();
        for mode in [SelectMode::Exact, SelectMode::Bnb, SelectMode::Greedy] {
            let fam = select_family(&f, 0.25, mode, 2).unwrap();
            assert_eq!(fam.len(), 1);
            assert_eq!(family_value(&f, &fam).unwrap(), 0.0);
        }
    }

    #[test]
    fn dp_matches_subset_oracle_d1() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..60 {
            let n = rng.gen_range(2..=16usize);
            let m = rng.gen_range(1..=n);
            let s = rng.gen_range(1..=2usize);
            if CandidateGrid::new(1, n, m, s).unwrap().total() > ORACLE_CANDIDATE_LIMIT {
                continue;
            }
            let f = random_grid(&mut rng, 1, n);
            let eps = m as f64 / n as f64;
            let dp = bracket_epsilon(&f, eps, SelectMode::Exact, s).unwrap().0;
            let oracle = oracle_family_value(&f, eps, true, s).unwrap();
            assert!(
                (dp - oracle).abs() <= 1e-14,
                "n={n} m={m} s={s}: {dp} vs {oracle}"
            );
        }
    }

    #[test]
    fn bnb_matches_subset_oracle_d2() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..40 {
            let n = rng.gen_range(2..=6usize);
            let m = rng.gen_range(1..=n);
            if CandidateGrid::new(2, n, m, 1).unwrap().total() > ORACLE_CANDIDATE_LIMIT {
                continue;
            }
            let f = random_grid(&mut rng, 2, n);
            let eps = m as f64 / n as f64;
            let bnb = bracket_epsilon(&f, eps, SelectMode::Bnb, 1).unwrap().0;
            let oracle = oracle_family_value(&f, eps, true, 1).unwrap();
            assert!((bnb - oracle).abs() <= 1e-14, "n={n} m={m}: {bnb} vs {oracle}");
        }
    }

    #[test]
    fn bnb_capacity_error_mentions_greedy() {
        let f = GridFunction::<f64>::constant(2, 16, 0.0).unwrap();
        let err = select_family(&f, 1.0 / 16.0, SelectMode::Bnb, 2).unwrap_err();
        match &err {
            Error::Capacity { candidates, limit } => {
                assert!(candidates > limit);
                assert!(err.to_string().contains("greedy"));
            }
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn exact_mode_rejected_above_d1() {
        let f = GridFunction::<f64>::constant(2, 4, 0.0).unwrap();
        assert!(matches!(
            select_family(&f, 0.5, SelectMode::Exact, 1),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn bracket_step_straddles_jump() {
        // d=1 step: any eps whose candidate grid can straddle the jump
        // symmetrically yields exactly 1/2.
        let f = step_1d(8);
        for m in [2usize, 4, 8] {
            let eps = m as f64 / 8.0;
            let (v, w) = bracket_epsilon(&f, eps, SelectMode::Exact, 2).unwrap();
            assert_eq!(v, 0.5, "eps={eps}");
            assert_eq!(w.len(), 1);
        }
    }

    #[test]
    fn bracket_monotone_in_refinement() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..20 {
            let f = random_grid(&mut rng, 1, 12);
            let mut prev = f64::NEG_INFINITY;
            for s in [1usize, 2, 4, 8] {
                let (v, _) = bracket_epsilon(&f, 0.25, SelectMode::Exact, s).unwrap();
                assert!(v >= prev - 1e-12, "s={s}: {v} < {prev}");
                prev = prev.max(v);
            }
        }
    }

    #[test]
    fn b_norm_constant_is_zero() {
        let f = GridFunction::<f64>::constant(2, 6, 42.0).unwrap();
        let (v, curve) = b_norm(&f, SelectMode::Greedy, 2).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(curve.entries.len(), 6);
        assert!(curve
            .entries
            .windows(2)
            .all(|w| w[0].epsilon > w[1].epsilon));
    }

    #[test]
    fn b_norm_equals_bmo_in_d1() {
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..20 {
            let n = rng.gen_range(2..=32usize);
            let f = random_grid(&mut rng, 1, n);
            let (b, _) = b_norm(&f, SelectMode::Exact, 2).unwrap();
            let bmo = bmo_norm(&f, 2).unwrap();
            assert!((b - bmo).abs() <= 1e-12, "n={n}: {b} vs {bmo}");
        }
    }

    #[test]
    fn b_norm_homogeneous_and_shift_invariant() {
        let mut rng = StdRng::seed_from_u64(23);
        let f = random_grid(&mut rng, 2, 6);
        let (base, _) = b_norm(&f, SelectMode::Greedy, 2).unwrap();
        let alpha = -2.5f64;
        let (scaled, _) = b_norm(&f.scaled(alpha), SelectMode::Greedy, 2).unwrap();
        assert!((scaled - alpha.abs() * base).abs() <= 1e-12 * (1.0 + base));
        let (shifted, _) = b_norm(&f.shifted(3.75), SelectMode::Greedy, 2).unwrap();
        assert!((shifted - base).abs() <= 1e-12);
    }

    #[test]
    fn b_norm_below_bmo_norm() {
        let mut rng = StdRng::seed_from_u64(29);
        for _ in 0..20 {
            let d = rng.gen_range(1..=2usize);
            let n = rng.gen_range(2..=12usize);
            let f = random_grid(&mut rng, d, n);
            let mode = if d == 1 {
                SelectMode::Exact
            } else {
                SelectMode::Greedy
            };
            let (b, _) = b_norm(&f, mode, 2).unwrap();
            let bmo = bmo_norm(&f, 2).unwrap();
            assert!(b <= bmo + 1e-12, "d={d} n={n}: {b} vs {bmo}");
        }
    }

    #[test]
    fn bmo_step_is_half() {
        let f = step_1d(16);
        assert_eq!(bmo_norm(&f, 2).unwrap(), 0.5);
    }

    #[test]
    fn bv_dominates_b_norm() {
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..15 {
            let d = rng.gen_range(1..=2usize);
            let n = rng.gen_range(2..=10usize);
            let f = random_grid(&mut rng, d, n);
            let mode = if d == 1 {
                SelectMode::Exact
            } else {
                SelectMode::Greedy
            };
            let (b, _) = b_norm(&f, mode, 2).unwrap();
            let bv = bv_functional(&f, 2).unwrap();
            assert!(bv >= b - 1e-12, "d={d} n={n}: bv={bv} < b={b}");
        }
    }

    #[test]
    fn discrete_tv_examples() {
        let c = GridFunction::<f64>::constant(2, 8, 5.0).unwrap();
        assert_eq!(discrete_tv(&c), 0.0);
        let f = step_1d(8);
        assert_eq!(discrete_tv(&f), 1.0);
        // indicator of [0,1/2]^2 on an even grid: the boundary inside the
        // open square is two faces of length 1/2.
        let n = 8;
        let values: Vec<f64> = BoxIter::new(2, [0; MAX_DIM], [n, n, 1])
            .map(|idx| {
                if idx[0] < n / 2 && idx[1] < n / 2 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let ind = GridFunction::new(2, n, values).unwrap();
        assert!((discrete_tv(&ind) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn oracle_rejects_oversized_instances() {
        let f = GridFunction::<f64>::constant(2, 8, 0.0).unwrap();
        assert!(matches!(
            oracle_family_value(&f, 1.0 / 8.0, true, 1),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn curve_entries_match_their_witnesses() {
        let mut rng = StdRng::seed_from_u64(37);
        let f = random_grid(&mut rng, 2, 5);
        let (_, curve) = b_norm(&f, SelectMode::Greedy, 2).unwrap();
        for e in &curve.entries {
            let recomputed = family_value(&f, &e.witness).unwrap();
            assert_eq!(e.value, recomputed);
        }
    }
}
