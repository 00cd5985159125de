//! Strict and relaxed controls on a time grid.
//!
//! Relaxed controls are tabular: per (time step, state bin) a probability
//! row over the action grid, normalized on construction. Strict controls
//! are tables, feedback rules, or the rapidly switching approximations
//! produced by [`chattering`]. A chattered control freezes its weights at
//! the state observed at the start of each coarse step, so it stays adapted.
//!
//! Tabular controls serialize to a plain text format (one header, then one
//! line per (step, bin) row); floats are written with 17 significant digits
//! so a round-trip reproduces the table bit-exactly.

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::textio::{fmt_f64, parse_f64};

/// Uniform binning of the state axis; states outside `[lo, hi]` clamp to the
/// boundary bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBinning {
    lo: f64,
    hi: f64,
    bins: usize,
}

impl StateBinning {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("state range [{lo}, {hi}] is invalid")));
        }
        if bins == 0 {
            return Err(Error::invalid("state binning needs at least one bin"));
        }
        Ok(Self { lo, hi, bins })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn bin(&self, x: f64) -> usize {
        if !(x > self.lo) {
            return 0;
        }
        if x >= self.hi {
            return self.bins - 1;
        }
        let f = (x - self.lo) / (self.hi - self.lo) * self.bins as f64;
        (f as usize).min(self.bins - 1)
    }

    pub fn center(&self, b: usize) -> f64 {
        let w = (self.hi - self.lo) / self.bins as f64;
        self.lo + (b as f64 + 0.5) * w
    }
}

/// Index of the largest entry; ties break toward the lowest index.
pub fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

type RuleFn = Arc<dyn Fn(usize, f64) -> usize + Send + Sync>;

#[derive(Clone)]
enum StrictPolicy {
    /// `idx[k * bins + b]`, one action index per (step, bin).
    Table { binning: StateBinning, idx: Vec<u16> },
    /// Feedback rule `(step on the control grid, state) -> action index`.
    Rule { name: String, f: RuleFn },
    /// Rapid-switching layout on a refined grid; `layout[(coarse * bins + b) * m + s]`
    /// looked up with the state frozen at the coarse step start.
    Chattered {
        binning: StateBinning,
        m: usize,
        layout: Vec<u16>,
    },
}

/// An action-valued control on a time grid.
#[derive(Clone)]
pub struct StrictControl {
    grid: TimeGrid,
    n_actions: usize,
    policy: StrictPolicy,
}

impl std::fmt::Debug for StrictControl {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.policy {
            StrictPolicy::Table { .. } => "table",
            StrictPolicy::Rule { name, .. } => name.as_str(),
            StrictPolicy::Chattered { m, .. } => return write!(f, "StrictControl(chattered m={m})"),
        };
        write!(f, "StrictControl({kind}, K={})", self.grid.steps())
    }
}

impl StrictControl {
    pub fn from_table(
        grid: TimeGrid,
        binning: StateBinning,
        n_actions: usize,
        idx: Vec<u16>,
    ) -> Result<Self> {
        if n_actions == 0 || n_actions > u16::MAX as usize {
            return Err(Error::invalid("action count out of range"));
        }
        if idx.len() != grid.steps() * binning.bins() {
            return Err(Error::invalid(format!(
                "strict table needs {} entries, got {}",
                grid.steps() * binning.bins(),
                idx.len()
            )));
        }
        if idx.iter().any(|&i| i as usize >= n_actions) {
            return Err(Error::invalid("strict table contains out-of-range action index"));
        }
        Ok(Self {
            grid,
            n_actions,
            policy: StrictPolicy::Table { binning, idx },
        })
    }

    /// Control that plays one fixed action everywhere.
    pub fn constant(grid: TimeGrid, n_actions: usize, index: usize) -> Result<Self> {
        if index >= n_actions {
            return Err(Error::invalid("constant action index out of range"));
        }
        let binning = StateBinning::new(-1.0, 1.0, 1)?;
        Self::from_table(grid, binning, n_actions, vec![index as u16; grid.steps()])
    }

    /// Feedback rule; `name` labels the rule in control fingerprints.
    pub fn from_rule(
        grid: TimeGrid,
        n_actions: usize,
        name: impl Into<String>,
        f: impl Fn(usize, f64) -> usize + Send + Sync + 'static,
    ) -> Self {
        Self {
            grid,
            n_actions,
            policy: StrictPolicy::Rule {
                name: name.into(),
                f: Arc::new(f),
            },
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Materialize any control as a (step, bin) table by sampling bin centers.
    pub fn tabulate(&self, binning: StateBinning) -> Result<StrictControl> {
        let bound = self.bind(&self.grid)?;
        let k_steps = self.grid.steps();
        let mut idx = Vec::with_capacity(k_steps * binning.bins());
        for k in 0..k_steps {
            for b in 0..binning.bins() {
                let x = binning.center(b);
                idx.push(bound.action(k, x, x) as u16);
            }
        }
        StrictControl::from_table(self.grid, binning, self.n_actions, idx)
    }

    /// Resolve this control against a simulation grid. Fails unless the
    /// simulation grid refines the control grid exactly.
    pub fn bind(&self, sim_grid: &TimeGrid) -> Result<BoundStrict<'_>> {
        let ratio = self.grid.refinement_ratio(sim_grid)?;
        Ok(BoundStrict { control: self, ratio })
    }

    /// Structural fingerprint used to match controls against path bundles.
    pub fn stamp(&self) -> u64 {
        let mut h = Fnv::new();
        h.u64(self.grid.steps() as u64);
        h.f64(self.grid.horizon());
        h.u64(self.n_actions as u64);
        match &self.policy {
            StrictPolicy::Table { binning, idx } => {
                h.u64(1);
                h.binning(binning);
                for &i in idx {
                    h.u64(i as u64);
                }
            }
            StrictPolicy::Rule { name, f } => {
                h.u64(2);
                for b in name.as_bytes() {
                    h.u64(*b as u64);
                }
                // probe the rule at a fixed lattice so equal rules match
                let k_max = self.grid.steps();
                for probe in 0..64usize {
                    let k = (probe * 31) % k_max;
                    let x = -4.0 + 0.125 * probe as f64;
                    h.u64(f(k, x) as u64);
                }
            }
            StrictPolicy::Chattered { binning, m, layout } => {
                h.u64(3);
                h.binning(binning);
                h.u64(*m as u64);
                for &i in layout {
                    h.u64(i as u64);
                }
            }
        }
        h.finish()
    }

    /// Period, in control-grid steps, at which the frozen-state anchor must
    /// be refreshed. 1 means the anchor is unused.
    pub fn anchor_period(&self) -> usize {
        match &self.policy {
            StrictPolicy::Chattered { m, .. } => *m,
            _ => 1,
        }
    }
}

/// A strict control resolved against a simulation grid.
#[derive(Clone, Copy)]
pub struct BoundStrict<'a> {
    control: &'a StrictControl,
    ratio: usize,
}

impl<'a> BoundStrict<'a> {
    /// Action index at simulation step `k`; `anchor` is the state at the most
    /// recent coarse-step start (equal to `x` for non-chattered controls).
    #[inline]
    pub fn action(&self, k: usize, x: f64, anchor: f64) -> usize {
        let kc = k / self.ratio;
        match &self.control.policy {
            StrictPolicy::Table { binning, idx } => {
                idx[kc * binning.bins() + binning.bin(x)] as usize
            }
            StrictPolicy::Rule { f, .. } => f(kc, x),
            StrictPolicy::Chattered { binning, m, layout } => {
                let coarse = kc / m;
                let sub = kc % m;
                let b = binning.bin(anchor);
                layout[(coarse * binning.bins() + b) * m + sub] as usize
            }
        }
    }

    /// Anchor refresh period in simulation steps.
    pub fn anchor_period(&self) -> usize {
        self.control.anchor_period() * self.ratio
    }

    pub fn n_actions(&self) -> usize {
        self.control.n_actions
    }
}

/// A measure-valued (relaxed) control: per (step, bin) a probability row
/// over the action grid. Rows are renormalized on construction and must sum
/// to one within 1e-12 afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedControl {
    grid: TimeGrid,
    binning: StateBinning,
    n_actions: usize,
    weights: Vec<f64>, // steps * bins * n_actions
}

impl RelaxedControl {
    pub fn from_weights(
        grid: TimeGrid,
        binning: StateBinning,
        n_actions: usize,
        mut weights: Vec<f64>,
    ) -> Result<Self> {
        let rows = grid.steps() * binning.bins();
        if n_actions == 0 {
            return Err(Error::invalid("relaxed control needs at least one action"));
        }
        if weights.len() != rows * n_actions {
            return Err(Error::invalid(format!(
                "weight table needs {} entries, got {}",
                rows * n_actions,
                weights.len()
            )));
        }
        for row in 0..rows {
            let slice = &mut weights[row * n_actions..(row + 1) * n_actions];
            let mut sum = 0.0;
            for w in slice.iter() {
                if !w.is_finite() || *w < 0.0 {
                    return Err(Error::NegativeWeight {
                        weight: *w,
                        step: row / binning.bins(),
                        state: binning.center(row % binning.bins()),
                    });
                }
                sum += *w;
            }
            if !(sum > 0.0) {
                return Err(Error::invalid(format!(
                    "weight row {row} sums to {sum}; cannot normalize"
                )));
            }
            for w in slice.iter_mut() {
                *w /= sum;
            }
        }
        Ok(Self {
            grid,
            binning,
            n_actions,
            weights,
        })
    }

    /// Construct from rows already normalized (used by deserialization,
    /// which must not perturb stored bits).
    fn from_normalized(
        grid: TimeGrid,
        binning: StateBinning,
        n_actions: usize,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let rows = grid.steps() * binning.bins();
        if weights.len() != rows * n_actions {
            return Err(Error::invalid("weight table has wrong size"));
        }
        for row in 0..rows {
            let slice = &weights[row * n_actions..(row + 1) * n_actions];
            let sum: f64 = slice.iter().sum();
            if slice.iter().any(|w| *w < 0.0 || !w.is_finite()) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "stored weight row {row} is not a probability row (sum {sum})"
                )));
            }
        }
        Ok(Self {
            grid,
            binning,
            n_actions,
            weights,
        })
    }

    /// Same probability row everywhere.
    pub fn constant(
        grid: TimeGrid,
        binning: StateBinning,
        row: &[f64],
    ) -> Result<Self> {
        let rows = grid.steps() * binning.bins();
        let mut weights = Vec::with_capacity(rows * row.len());
        for _ in 0..rows {
            weights.extend_from_slice(row);
        }
        Self::from_weights(grid, binning, row.len(), weights)
    }

    pub fn uniform(grid: TimeGrid, binning: StateBinning, n_actions: usize) -> Result<Self> {
        let row = vec![1.0 / n_actions as f64; n_actions];
        Self::constant(grid, binning, &row)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn binning(&self) -> StateBinning {
        self.binning
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn row(&self, k: usize, bin: usize) -> &[f64] {
        let start = (k * self.binning.bins() + bin) * self.n_actions;
        &self.weights[start..start + self.n_actions]
    }

    pub fn row_mut(&mut self, k: usize, bin: usize) -> &mut [f64] {
        let start = (k * self.binning.bins() + bin) * self.n_actions;
        &mut self.weights[start..start + self.n_actions]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bind(&self, sim_grid: &TimeGrid) -> Result<BoundRelaxed<'_>> {
        let ratio = self.grid.refinement_ratio(sim_grid)?;
        Ok(BoundRelaxed { control: self, ratio })
    }

    /// Strict control choosing the heaviest action per (step, bin); ties
    /// break toward the lowest action index.
    pub fn argmax_table(&self) -> StrictControl {
        let rows = self.grid.steps() * self.binning.bins();
        let idx = (0..rows)
            .map(|r| {
                argmax_lowest(&self.weights[r * self.n_actions..(r + 1) * self.n_actions]) as u16
            })
            .collect();
        StrictControl::from_table(self.grid, self.binning, self.n_actions, idx)
            .expect("argmax table is structurally valid")
    }

    pub fn stamp(&self) -> u64 {
        let mut h = Fnv::new();
        h.u64(0x52454c58); // tag
        h.u64(self.grid.steps() as u64);
        h.f64(self.grid.horizon());
        h.binning(&self.binning);
        h.u64(self.n_actions as u64);
        for w in &self.weights {
            h.f64(*w);
        }
        h.finish()
    }

    /// Write the documented tabular text format.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "meanfield-control relaxed v1")?;
        writeln!(w, "horizon = {}", fmt_f64(self.grid.horizon()))?;
        writeln!(w, "steps = {}", self.grid.steps())?;
        writeln!(w, "state_lo = {}", fmt_f64(self.binning.lo))?;
        writeln!(w, "state_hi = {}", fmt_f64(self.binning.hi))?;
        writeln!(w, "bins = {}", self.binning.bins)?;
        writeln!(w, "actions = {}", self.n_actions)?;
        for k in 0..self.grid.steps() {
            for b in 0..self.binning.bins() {
                write!(w, "{k} {b}")?;
                for v in self.row(k, b) {
                    write!(w, " {}", fmt_f64(*v))?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// Read the tabular text format back; bit-exact inverse of `write_to`.
    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let mut next = || -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(Error::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                }),
                None => Err(Error::Parse {
                    line: 0,
                    msg: "unexpected end of file".into(),
                }),
            }
        };
        let (ln, magic) = next()?;
        if magic.trim() != "meanfield-control relaxed v1" {
            return Err(Error::Parse {
                line: ln,
                msg: format!("unrecognized header {magic:?}"),
            });
        }
        let mut field = |key: &str| -> Result<String> {
            let (ln, l) = next()?;
            let (k, v) = l.split_once('=').ok_or_else(|| Error::Parse {
                line: ln,
                msg: format!("expected `{key} = ...`"),
            })?;
            if k.trim() != key {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected key {key}, got {}", k.trim()),
                });
            }
            Ok(v.trim().to_string())
        };
        let horizon = parse_f64(&field("horizon")?)
            .ok_or_else(|| Error::Parse { line: 2, msg: "bad horizon".into() })?;
        let steps: usize = field("steps")?
            .parse()
            .map_err(|_| Error::Parse { line: 3, msg: "bad steps".into() })?;
        let lo = parse_f64(&field("state_lo")?)
            .ok_or_else(|| Error::Parse { line: 4, msg: "bad state_lo".into() })?;
        let hi = parse_f64(&field("state_hi")?)
            .ok_or_else(|| Error::Parse { line: 5, msg: "bad state_hi".into() })?;
        let bins: usize = field("bins")?
            .parse()
            .map_err(|_| Error::Parse { line: 6, msg: "bad bins".into() })?;
        let n: usize = field("actions")?
            .parse()
            .map_err(|_| Error::Parse { line: 7, msg: "bad actions".into() })?;
        let grid = TimeGrid::new(horizon, steps)?;
        let binning = StateBinning::new(lo, hi, bins)?;
        let mut weights = vec![0.0; steps * bins * n];
        let mut seen = vec![false; steps * bins];
        for _ in 0..steps * bins {
            let (ln, l) = next()?;
            let mut it = l.split_whitespace();
            let k: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse { line: ln, msg: "bad step index".into() })?;
            let b: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse { line: ln, msg: "bad bin index".into() })?;
            if k >= steps || b >= bins {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("row ({k}, {b}) out of range"),
                });
            }
            let row = k * bins + b;
            if seen[row] {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("duplicate row ({k}, {b})"),
                });
            }
            seen[row] = true;
            for i in 0..n {
                let v = it
                    .next()
                    .and_then(parse_f64)
                    .ok_or_else(|| Error::Parse {
                        line: ln,
                        msg: format!("row ({k}, {b}) needs {n} weights"),
                    })?;
                weights[row * n + i] = v;
            }
            if it.next().is_some() {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("row ({k}, {b}) has extra fields"),
                });
            }
        }
        Self::from_normalized(grid, binning, n, weights)
    }
}

/// A relaxed control resolved against a simulation grid.
#[derive(Clone, Copy)]
pub struct BoundRelaxed<'a> {
    control: &'a RelaxedControl,
    ratio: usize,
}

impl<'a> BoundRelaxed<'a> {
    #[inline]
    pub fn row(&self, k: usize, x: f64) -> &'a [f64] {
        let kc = k / self.ratio;
        self.control.row(kc, self.control.binning.bin(x))
    }

    pub fn n_actions(&self) -> usize {
        self.control.n_actions
    }
}

/// Embed a tabular strict control as the relaxed control putting full mass
/// on the chosen action at every (step, bin).
pub fn delta_embedding(u: &StrictControl) -> Result<RelaxedControl> {
    match &u.policy {
        StrictPolicy::Table { binning, idx } => {
            let n = u.n_actions;
            let mut weights = vec![0.0; idx.len() * n];
            for (row, &i) in idx.iter().enumerate() {
                weights[row * n + i as usize] = 1.0;
            }
            RelaxedControl::from_weights(u.grid, *binning, n, weights)
        }
        _ => Err(Error::invalid(
            "delta_embedding needs a tabular strict control; call tabulate() first",
        )),
    }
}

/// A relaxed control together with the number of sub-steps per coarse step
/// its chattering approximation uses.
#[derive(Debug, Clone)]
pub struct ChatteringSchedule {
    pub base: RelaxedControl,
    pub m: usize,
}

impl ChatteringSchedule {
    pub fn new(base: RelaxedControl, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("chattering needs m >= 1"));
        }
        Ok(Self { base, m })
    }
}

/// Largest-remainder action counts for one coarse step: `c_i` sub-steps for
/// action `i` with `sum c_i = m` and `|c_i - m w_i| < 1`.
fn quota_counts(weights: &[f64], m: usize, counts: &mut Vec<usize>) {
    counts.clear();
    let mut rem: Vec<(f64, usize)> = Vec::with_capacity(weights.len());
    let mut assigned = 0usize;
    for (i, w) in weights.iter().enumerate() {
        let exact = m as f64 * w;
        let fl = exact.floor();
        counts.push(fl as usize);
        assigned += fl as usize;
        rem.push((exact - fl, i));
    }
    let mut leftover = m - assigned.min(m);
    if leftover > 0 {
        rem.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        for (_, i) in rem {
            if leftover == 0 {
                break;
            }
            counts[i] += 1;
            leftover -= 1;
        }
    }
}

/// Balanced sequencing of the counted actions: at each sub-step pick the
/// action with the largest remaining integer quota deficit, ties toward the
/// lowest index. Keeps every prefix of the layout close to proportional.
fn balanced_layout(counts: &[usize], m: usize, out: &mut Vec<u16>) {
    out.clear();
    let n = counts.len();
    let mut placed = vec![0usize; n];
    for s in 0..m {
        let mut best = usize::MAX;
        let mut best_deficit = i64::MIN;
        for i in 0..n {
            if placed[i] >= counts[i] {
                continue;
            }
            let deficit = (counts[i] * (s + 1)) as i64 - (placed[i] * m) as i64;
            if deficit > best_deficit {
                best_deficit = deficit;
                best = i;
            }
        }
        debug_assert!(best != usize::MAX);
        placed[best] += 1;
        out.push(best as u16);
    }
}

/// Strict control on the grid refined by `m` whose occupation fractions
/// approximate the base weights: per coarse step the action counts are the
/// largest-remainder rounding of `m * weights`, laid out in balanced order,
/// with the weights frozen at the coarse-step-start state.
pub fn chattering(schedule: &ChatteringSchedule) -> Result<StrictControl> {
    let base = &schedule.base;
    let m = schedule.m;
    let fine = base.grid.refine(m)?;
    let bins = base.binning.bins();
    let n = base.n_actions;
    let mut layout = Vec::with_capacity(base.grid.steps() * bins * m);
    let mut counts = Vec::with_capacity(n);
    let mut block = Vec::with_capacity(m);
    for k in 0..base.grid.steps() {
        for b in 0..bins {
            quota_counts(base.row(k, b), m, &mut counts);
            balanced_layout(&counts, m, &mut block);
            layout.extend_from_slice(&block);
        }
    }
    Ok(StrictControl {
        grid: fine,
        n_actions: n,
        policy: StrictPolicy::Chattered {
            binning: base.binning,
            m,
            layout,
        },
    })
}

/// Fraction of refined sub-steps each action occupies, for a base whose
/// weights do not depend on the state (so the anchor is irrelevant).
pub fn occupation_fractions(chattered: &StrictControl) -> Result<Vec<f64>> {
    match &chattered.policy {
        StrictPolicy::Chattered { layout, .. } => {
            let mut counts = vec![0usize; chattered.n_actions];
            for &i in layout {
                counts[i as usize] += 1;
            }
            let total = layout.len() as f64;
            Ok(counts.iter().map(|c| *c as f64 / total).collect())
        }
        _ => Err(Error::invalid("occupation_fractions needs a chattered control")),
    }
}

/// Product-measure distance between two strict controls, estimated along a
/// simulated ensemble: the time-mass of `{(particle, step): u != v}` divided
/// by the particle count. Exact integer counting, so it is symmetric and
/// satisfies the triangle inequality without Monte Carlo slack.
pub fn control_distance(
    u: &StrictControl,
    v: &StrictControl,
    paths: &crate::sim::PathBundle,
) -> Result<f64> {
    let grid = paths.grid();
    let bu = u.bind(&grid)?;
    let bv = v.bind(&grid)?;
    let n = paths.particles();
    let k_steps = grid.steps();
    let pu = bu.anchor_period();
    let pv = bv.anchor_period();
    let mut disagreements = 0usize;
    for p in 0..n {
        let mut anchor_u = paths.state(p, 0);
        let mut anchor_v = anchor_u;
        for k in 0..k_steps {
            let x = paths.state(p, k);
            if k % pu == 0 {
                anchor_u = x;
            }
            if k % pv == 0 {
                anchor_v = x;
            }
            if bu.action(k, x, anchor_u) != bv.action(k, x, anchor_v) {
                disagreements += 1;
            }
        }
    }
    Ok(grid.dt() * (disagreements as f64 / n as f64))
}

/// FNV-1a over 64-bit words; used for structural control fingerprints.
pub(crate) struct Fnv(u64);

impl Fnv {
    pub fn new() -> Self {
        Fnv(0xcbf29ce484222325)
    }

    pub fn u64(&mut self, v: u64) {
        let mut x = self.0;
        for b in v.to_le_bytes() {
            x ^= b as u64;
            x = x.wrapping_mul(0x100000001b3);
        }
        self.0 = x;
    }

    pub fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    pub fn binning(&mut self, b: &StateBinning) {
        self.f64(b.lo);
        self.f64(b.hi);
        self.u64(b.bins as u64);
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}
