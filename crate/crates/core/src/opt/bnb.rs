//! Depth-first branch and bound for [`HitProblem`].
//!
//! Items are branched include/exclude, preferring items of the tightest
//! uncovered set. The concave deviation term `-u_i |φ_i - c_i|` is bounded
//! from below by its chord over the feature's reachable range, which gives
//! every free item a linear marginal.

use super::{approx_cmp, HitProblem, Score, Selection};
use std::cmp::Ordering;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum State {
    Free,
    In,
    Out,
}

enum Branch {
    Leaf,
    Item(usize, bool),
}

pub(super) struct Search<'a> {
    p: &'a HitProblem,
    state: Vec<State>,
    lo: Vec<i64>,
    hi: Vec<i64>,
    item_covers: Vec<Vec<usize>>,
    cover_in: Vec<u32>,
    cover_free: Vec<u32>,
    item_excl: Vec<Vec<usize>>,
    excl_in: Vec<u32>,
    excl_out: Vec<u32>,
    feature_items: Vec<Vec<usize>>,
    total_in: usize,
    trail: Vec<usize>,
    eff0: Vec<f64>,
    eff1: Vec<f64>,
    best: Option<(Score, Vec<usize>)>,
    found: bool,
}

impl<'a> Search<'a> {
    pub(super) fn new(p: &'a HitProblem, cutoff: Option<(Score, &[usize])>) -> Self {
        let n = p.num_items();
        let nf = p.num_features;
        let mut item_covers = vec![Vec::new(); n];
        for (c, set) in p.covers.iter().enumerate() {
            for &j in set {
                item_covers[j].push(c);
            }
        }
        let mut item_excl = vec![Vec::new(); n];
        for (m, set) in p.exclusions.iter().enumerate() {
            for &j in set {
                item_excl[j].push(m);
            }
        }
        let mut feature_items = vec![Vec::new(); nf];
        let mut hi = vec![0i64; nf];
        for (j, fs) in p.features.iter().enumerate() {
            for &f in fs {
                feature_items[f].push(j);
                hi[f] += 1;
            }
        }
        Search {
            p,
            state: vec![State::Free; n],
            lo: vec![0; nf],
            hi,
            item_covers,
            cover_in: vec![0; p.covers.len()],
            cover_free: p.covers.iter().map(|c| c.len() as u32).collect(),
            item_excl,
            excl_in: vec![0; p.exclusions.len()],
            excl_out: vec![0; p.exclusions.len()],
            feature_items,
            total_in: 0,
            trail: Vec::new(),
            eff0: vec![0.0; n],
            eff1: vec![0.0; n],
            best: cutoff.map(|(s, ids)| (s, ids.to_vec())),
            found: false,
        }
    }

    pub(super) fn run(mut self) -> Option<Selection> {
        let mut ok = true;
        for &j in &self.p.forced.clone() {
            match self.state[j] {
                State::Free => self.set_item(j, State::In),
                State::In => {}
                State::Out => ok = false,
            }
        }
        if ok {
            self.dfs();
        }
        if !self.found {
            return None;
        }
        let (score, items) = self.best.take().expect("found implies best");
        let features = self.p.feature_counts(&items);
        Some(Selection {
            items,
            score,
            features,
        })
    }

    fn set_item(&mut self, j: usize, to: State) {
        debug_assert_eq!(self.state[j], State::Free);
        self.state[j] = to;
        for &c in &self.item_covers[j] {
            self.cover_free[c] -= 1;
            if to == State::In {
                self.cover_in[c] += 1;
            }
        }
        for &m in &self.item_excl[j] {
            if to == State::In {
                self.excl_in[m] += 1;
            } else {
                self.excl_out[m] += 1;
            }
        }
        for &f in &self.p.features[j] {
            if to == State::In {
                self.lo[f] += 1;
            } else {
                self.hi[f] -= 1;
            }
        }
        if to == State::In {
            self.total_in += 1;
        }
        self.trail.push(j);
    }

    fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            {
                let j = self.trail.pop().expect("trail longer than mark");
                {
                    let was = self.state[j];
                    self.state[j] = State::Free;
                    for &c in &self.item_covers[j] {
                        self.cover_free[c] += 1;
                        if was == State::In {
                            self.cover_in[c] -= 1;
                        }
                    }
                    for &m in &self.item_excl[j] {
                        if was == State::In {
                            self.excl_in[m] -= 1;
                        } else {
                            self.excl_out[m] -= 1;
                        }
                    }
                    for &f in &self.p.features[j] {
                        if was == State::In {
                            self.lo[f] -= 1;
                        } else {
                            self.hi[f] += 1;
                        }
                    }
                    if was == State::In {
                        self.total_in -= 1;
                    }
                }
            }
        }
    }

    fn force_contributors(&mut self, f: usize, to: State) -> bool {
        let mut changed = false;
        for k in 0..self.feature_items[f].len() {
            let j = self.feature_items[f][k];
            if self.state[j] == State::Free {
                self.set_item(j, to);
                changed = true;
            }
        }
        changed
    }

    /// Fixpoint of the cheap inferences. Returns false on a dead end.
    fn propagate(&mut self) -> bool {
        let p = self.p;
        loop {
            let mut changed = false;

            for c in 0..p.covers.len() {
                if self.cover_in[c] > 0 {
                    continue;
                }
                match self.cover_free[c] {
                    0 => return false,
                    1 => {
                        let j = *p.covers[c]
                            .iter()
                            .find(|&&j| self.state[j] == State::Free)
                            .expect("one free item");
                        self.set_item(j, State::In);
                        changed = true;
                    }
                    _ => {}
                }
            }

            if let Some(r) = &p.side.nondomination {
                let mut candidate = None;
                let mut count = 0;
                for f in 0..p.num_features {
                    if self.lo[f] < r[f] {
                        count += 1;
                        candidate = Some(f);
                    }
                }
                if count == 0 {
                    return false;
                }
                if count == 1 {
                    let f = candidate.expect("count is one");
                    if self.lo[f] == r[f] - 1 && self.hi[f] > self.lo[f] {
                        changed |= self.force_contributors(f, State::Out);
                    }
                }
            }

            if let Some(r) = &p.side.inequality {
                if (0..p.num_features).all(|f| self.lo[f] == r[f] && self.hi[f] == r[f]) {
                    return false;
                }
            }

            for m in 0..p.exclusions.len() {
                let size = p.exclusions[m].len() as u32;
                let outside_in = self.total_in as u32 - self.excl_in[m];
                if self.excl_in[m] == size {
                    if outside_in > 0 {
                        return false;
                    }
                    for j in 0..self.state.len() {
                        if self.state[j] == State::Free {
                            self.set_item(j, State::Out);
                            changed = true;
                        }
                    }
                } else if self.excl_out[m] == 0 && self.excl_in[m] == size - 1 && outside_in > 0 {
                    let j = *p.exclusions[m]
                        .iter()
                        .find(|&&j| self.state[j] == State::Free)
                        .expect("one free member");
                    self.set_item(j, State::Out);
                    changed = true;
                }
            }

            if !changed {
                return true;
            }
        }
    }

    /// Lower bound per tier over all completions of the current node, or
    /// `None` if the node has no feasible completion. Fills `eff0`/`eff1`
    /// with the per-item marginal objective of free items.
    fn bound(&mut self) -> Option<Score> {
        let p = self.p;
        let n = p.num_items();
        let mut lb = Score::default();
        for j in 0..n {
            self.eff0[j] = 0.0;
            self.eff1[j] = 0.0;
            match self.state[j] {
                State::In => lb.secondary += p.costs[j],
                State::Free => self.eff1[j] = p.costs[j],
                State::Out => {}
            }
        }
        if let Some(d) = &p.side.deviation {
            for f in 0..p.num_features {
                let u = d.weights[f];
                let (tier0, wt) = if u.is_infinite() {
                    (true, 1.0)
                } else {
                    (false, d.gamma * u)
                };
                if wt <= 0.0 {
                    continue;
                }
                let c = d.reference[f];
                let (lo, hi) = (self.lo[f], self.hi[f]);
                // the chord underestimates the concave -wt|x - c| on [lo, hi]
                let g = |x: i64| -wt * (x - c).abs() as f64;
                let (constant, gain) = if lo == hi {
                    (g(lo), 0.0)
                } else {
                    (g(lo), (g(hi) - g(lo)) / (hi - lo) as f64)
                };
                let eff = if tier0 { &mut self.eff0 } else { &mut self.eff1 };
                if tier0 {
                    lb.primary += constant;
                } else {
                    lb.secondary += constant;
                }
                if gain != 0.0 {
                    for &j in &self.feature_items[f] {
                        if self.state[j] == State::Free {
                            eff[j] += gain;
                        }
                    }
                }
            }
        }
        for j in 0..n {
            if self.state[j] == State::Free {
                lb.primary += self.eff0[j].min(0.0);
                lb.secondary += self.eff1[j].min(0.0);
            }
        }
        // disjoint packing of uncovered sets: each needs one more item
        let mut used: Vec<bool> = Vec::new();
        for (c, set) in p.covers.iter().enumerate() {
            if self.cover_in[c] > 0 {
                continue;
            }
            if used.is_empty() {
                used = vec![false; n];
            }
            let free: Vec<usize> = set
                .iter()
                .copied()
                .filter(|&j| self.state[j] == State::Free)
                .collect();
            if free.iter().any(|&j| used[j]) {
                continue;
            }
            let m0 = free.iter().map(|&j| self.eff0[j].max(0.0)).fold(f64::INFINITY, f64::min);
            let m1 = free.iter().map(|&j| self.eff1[j].max(0.0)).fold(f64::INFINITY, f64::min);
            lb.primary += m0;
            lb.secondary += m1;
            for j in free {
                used[j] = true;
            }
        }
        let (p0, p1) = self.exclusion_penalty();
        lb.primary += p0;
        lb.secondary += p1;
        Some(lb)
    }

    /// Extra cost, per tier, of keeping clear of strict supersets of known
    /// exclusions: a completion containing all of `m` must drop one of its
    /// free items or drop every item outside `m`. Drops of items with a
    /// negative marginal are what the item bound did not pay for.
    fn exclusion_penalty(&self) -> (f64, f64) {
        let p = self.p;
        let n = self.state.len();
        let (mut single0, mut single1) = (0.0f64, 0.0f64);
        let (mut packed0, mut packed1) = (0.0f64, 0.0f64);
        let mut used: Vec<bool> = Vec::new();
        let mut in_m: Vec<bool> = Vec::new();
        for (m, set) in p.exclusions.iter().enumerate() {
            if self.excl_out[m] > 0 || self.excl_in[m] as usize == set.len() {
                continue;
            }
            let mut a0 = f64::INFINITY;
            let mut a1 = f64::INFINITY;
            for &j in set {
                if self.state[j] == State::Free {
                    a0 = a0.min((-self.eff0[j]).max(0.0));
                    a1 = a1.min((-self.eff1[j]).max(0.0));
                }
            }
            if a0 <= 0.0 && a1 <= 0.0 {
                continue;
            }
            let exact_possible = self.total_in == self.excl_in[m] as usize;
            if exact_possible {
                if in_m.is_empty() {
                    in_m = vec![false; n];
                }
                for &j in set {
                    in_m[j] = true;
                }
                let (mut b0, mut b1) = (0.0, 0.0);
                for j in 0..n {
                    if self.state[j] == State::Free && !in_m[j] {
                        b0 += (-self.eff0[j]).max(0.0);
                        b1 += (-self.eff1[j]).max(0.0);
                    }
                }
                for &j in set {
                    in_m[j] = false;
                }
                single0 = single0.max(a0.min(b0));
                single1 = single1.max(a1.min(b1));
            } else {
                single0 = single0.max(a0);
                single1 = single1.max(a1);
                if used.is_empty() {
                    used = vec![false; n];
                }
                let free = || set.iter().copied().filter(|&j| self.state[j] == State::Free);
                if free().any(|j| used[j]) {
                    continue;
                }
                packed0 += a0;
                packed1 += a1;
                for j in free() {
                    used[j] = true;
                }
            }
        }
        (single0.max(packed0), single1.max(packed1))
    }

    /// Smallest item sequence any completion could produce, ignoring
    /// feasibility.
    fn min_sequence(&self) -> Vec<usize> {
        let max_in = (0..self.state.len()).rev().find(|&j| self.state[j] == State::In);
        match max_in {
            None => Vec::new(),
            Some(m) => (0..=m).filter(|&j| self.state[j] != State::Out).collect(),
        }
    }

    fn prunable(&self, lb: &Score) -> bool {
        let Some((best, ids)) = &self.best else {
            return false;
        };
        match lb.compare(best) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => self.min_sequence().as_slice() >= ids.as_slice(),
        }
    }

    fn choose(&self) -> Branch {
        let p = self.p;
        let mut tightest: Option<(u32, usize)> = None;
        for c in 0..p.covers.len() {
            if self.cover_in[c] == 0 && tightest.is_none_or(|(k, _)| self.cover_free[c] < k) {
                tightest = Some((self.cover_free[c], c));
            }
        }
        if let Some((_, c)) = tightest {
            let j = p.covers[c]
                .iter()
                .copied()
                .filter(|&j| self.state[j] == State::Free)
                .min_by(|&a, &b| self.marginal_cmp(a, b).then(a.cmp(&b)))
                .expect("uncovered set has a free item");
            return Branch::Item(j, true);
        }

        let free = (0..self.state.len()).filter(|&j| self.state[j] == State::Free);
        match free.min_by(|&a, &b| self.marginal_cmp(a, b).then(a.cmp(&b))) {
            None => Branch::Leaf,
            Some(j) => {
                let improving = self.eff0[j] < 0.0 || (self.eff0[j] == 0.0 && self.eff1[j] < 0.0);
                Branch::Item(j, improving)
            }
        }
    }

    fn marginal_cmp(&self, a: usize, b: usize) -> Ordering {
        approx_cmp(self.eff0[a], self.eff0[b]).then(approx_cmp(self.eff1[a], self.eff1[b]))
    }

    fn leaf(&mut self) {
        let p = self.p;
        let items: Vec<usize> = (0..self.state.len())
            .filter(|&j| self.state[j] == State::In)
            .collect();
        if !p.is_feasible(&items) {
            return;
        }
        let score = p.score(&items);
        let better = match &self.best {
            None => true,
            Some((s, ids)) => super::candidate_cmp((&score, &items), (s, ids)) == Ordering::Less,
        };
        if better {
            self.best = Some((score, items));
            self.found = true;
        }
    }

    fn dfs(&mut self) {
        let mark = self.trail.len();
        if self.propagate() {
            if let Some(lb) = self.bound() {
                if !self.prunable(&lb) {
                    match self.choose() {
                        Branch::Leaf => self.leaf(),
                        Branch::Item(j, include_first) => {
                            let order = if include_first {
                                [State::In, State::Out]
                            } else {
                                [State::Out, State::In]
                            };
                            for s in order {
                                let m = self.trail.len();
                                self.set_item(j, s);
                                self.dfs();
                                self.undo(m);
                            }
                        }
                    }
                }
            }
        }
        self.undo(mark);
    }
}
