//! Multi-index enumeration of Fock outcomes up to a total-photon cutoff.
//!
//! Outcomes are ordered by total photon number; within a level the first
//! mode's count descends. A smaller cutoff therefore enumerates a prefix of a
//! larger one.

/// Binomial coefficient, saturating at `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Number of outcomes with exactly `n` photons in `modes` modes.
pub fn level_size(modes: usize, n: usize) -> usize {
    binomial(n + modes - 1, modes - 1) as usize
}

/// Number of outcomes with fewer than `n` photons in `modes` modes.
pub fn level_offset(modes: usize, n: usize) -> usize {
    if n == 0 {
        0
    } else {
        binomial(n - 1 + modes, modes) as usize
    }
}

/// Position of `c` within its photon-number level.
pub fn rank_in_level(c: &[usize]) -> usize {
    let m = c.len();
    let mut rem: usize = c.iter().sum();
    let mut rank = 0usize;
    for (i, &ci) in c.iter().enumerate().take(m.saturating_sub(1)) {
        if ci < rem {
            let slots = m - i - 1;
            rank += binomial(rem - ci - 1 + slots, slots) as usize;
        }
        rem -= ci;
    }
    rank
}

/// Global index of `c` in total-degree order.
pub fn index_of(c: &[usize]) -> usize {
    let n: usize = c.iter().sum();
    level_offset(c.len(), n) + rank_in_level(c)
}

/// All outcomes with exactly `n` photons, in enumeration order.
pub fn level(modes: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(level_size(modes, n));
    let mut cur = vec![0usize; modes];
    fill(&mut cur, 0, n, &mut out);
    out
}

fn fill(cur: &mut Vec<usize>, pos: usize, rem: usize, out: &mut Vec<Vec<usize>>) {
    let m = cur.len();
    if pos + 1 == m {
        cur[pos] = rem;
        out.push(cur.clone());
        return;
    }
    for v in (0..=rem).rev() {
        cur[pos] = v;
        fill(cur, pos + 1, rem - v, out);
    }
}

/// Outcome at a global index.
pub fn outcome_at(modes: usize, mut index: usize) -> Vec<usize> {
    let mut n = 0;
    loop {
        let size = level_size(modes, n);
        if index < size {
            break;
        }
        index -= size;
        n += 1;
    }
    let mut c = vec![0usize; modes];
    let mut rem = n;
    for i in 0..modes {
        if i + 1 == modes {
            c[i] = rem;
            break;
        }
        let slots = modes - i - 1;
        let mut v = rem;
        loop {
            let block = binomial(rem - v + slots - 1, slots - 1) as usize;
            if index < block {
                break;
            }
            index -= block;
            v -= 1;
        }
        c[i] = v;
        rem -= v;
    }
    c
}
