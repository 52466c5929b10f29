//! Brute-force reference implementations shared by integration tests. None
//! of this goes through the SAT kernel or the optimizer.

#![allow(dead_code)]

use stepwise_core::explain::{ExplContext, Item};
use stepwise_core::model::Category;

pub const POOL4: &str = include_str!("../../../../data/sudoku/pool4.txt");

pub fn pool4() -> Vec<&'static str> {
    POOL4.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

/// Cells of 4x4 unit `u`: rows 0..4, columns 4..8, blocks 8..12.
pub fn unit_cells(u: usize) -> [usize; 4] {
    match u {
        0..=3 => [u * 4, u * 4 + 1, u * 4 + 2, u * 4 + 3],
        4..=7 => {
            let c = u - 4;
            [c, 4 + c, 8 + c, 12 + c]
        }
        _ => {
            let b = u - 8;
            let (r0, c0) = (b / 2 * 2, b % 2 * 2);
            [r0 * 4 + c0, r0 * 4 + c0 + 1, (r0 + 1) * 4 + c0, (r0 + 1) * 4 + c0 + 1]
        }
    }
}

/// Is there a 4x4 grid with the given cell values, `not` excluded, and all
/// active units holding distinct values?
pub fn sudoku_sat(facts: &[(usize, u8)], units: &[bool; 12], not: Option<(usize, u8)>) -> bool {
    let mut domain = [0b1111u8; 16];
    for &(c, v) in facts {
        domain[c] &= 1 << (v - 1);
    }
    if let Some((c, v)) = not {
        domain[c] &= !(1 << (v - 1));
    }
    if domain.contains(&0) {
        return false;
    }
    let mut peers = [0u16; 16];
    for (u, &on) in units.iter().enumerate() {
        if on {
            let cells = unit_cells(u);
            let mask: u16 = cells.iter().map(|&c| 1u16 << c).sum();
            for &a in &cells {
                peers[a] |= mask & !(1 << a);
            }
        }
    }
    // forward checking: assigning a value removes it from later peers
    fn rec(i: usize, domain: &mut [u8; 16], peers: &[u16; 16]) -> bool {
        if i == 16 {
            return true;
        }
        let d = domain[i];
        for v in 0..4 {
            let bit = 1u8 << v;
            if d & bit == 0 {
                continue;
            }
            let saved = *domain;
            let mut ok = true;
            let mut later = (peers[i] as u32) & !((1u32 << (i + 1)) - 1);
            while later != 0 {
                let p = later.trailing_zeros() as usize;
                later &= later - 1;
                domain[p] &= !bit;
                if domain[p] == 0 {
                    ok = false;
                    break;
                }
            }
            if ok && rec(i + 1, domain, peers) {
                return true;
            }
            *domain = saved;
        }
        false
    }
    rec(0, &mut domain, &peers)
}

/// All MUSes of a 4x4 explanation context, as sorted universe indices
/// including the negated target. Enumerates every subset of the selectable
/// items, using monotonicity to skip supersets of unsatisfiable sets.
pub fn sudoku_muses(ctx: &ExplContext) -> Vec<Vec<usize>> {
    let m = ctx.num_items() - 1;
    assert!(m <= 20, "universe too large for enumeration");
    let neg = ctx.not_target();
    let target = ctx.target;
    let not = Some((target.var, target.value as u8));
    let mut unsat = vec![false; 1 << m];
    let mut out = Vec::new();
    for mask in 0usize..(1 << m) {
        let mut sub_unsat = false;
        let mut bits = mask;
        while bits != 0 {
            let b = bits & bits.wrapping_neg();
            if unsat[mask ^ b] {
                sub_unsat = true;
                break;
            }
            bits ^= b;
        }
        if sub_unsat {
            unsat[mask] = true;
            continue;
        }
        let mut facts = Vec::new();
        let mut units = [false; 12];
        for j in 0..m {
            if mask >> j & 1 == 1 {
                match ctx.items[j] {
                    Item::Fact(f) => facts.push((f.var, f.value as u8)),
                    Item::Group(g) => units[g] = true,
                    Item::NotTarget(_) => unreachable!(),
                }
            }
        }
        if !sudoku_sat(&facts, &units, not) {
            unsat[mask] = true;
            let mut items: Vec<usize> = (0..m).filter(|j| mask >> j & 1 == 1).collect();
            items.push(neg);
            out.push(items);
        }
    }
    out
}

/// Direct evaluation of a step objective: linear item costs minus the
/// weighted L1 deviation, split into (infinite-weight tier, finite tier).
pub fn objective(
    ctx: &ExplContext,
    items: &[usize],
    costs: &[f64],
    deviation: Option<(&[i64], &[f64], f64)>,
) -> (f64, f64) {
    let phi = ctx.features_of(items);
    let mut sec: f64 = items.iter().map(|&j| costs[j]).sum();
    let mut prim = 0.0;
    if let Some((c, u, gamma)) = deviation {
        for i in 0..phi.len() {
            let d = (phi[i] - c[i]).abs() as f64;
            if u[i].is_infinite() {
                prim -= d;
            } else {
                sec -= gamma * u[i] * d;
            }
        }
    }
    (prim, sec)
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-7 * 1f64.max(a.abs()).max(b.abs())
}

pub fn category_of_unit(u: usize) -> Category {
    match u {
        0..=3 => Category::Row,
        4..=7 => Category::Col,
        _ => Category::Block,
    }
}
