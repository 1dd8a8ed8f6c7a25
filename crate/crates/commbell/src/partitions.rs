//! Set partitions of {0,..,n-1} into at most `max_blocks` nonempty blocks,
//! enumerated as restricted growth strings (RGS).
//!
//! An RGS `a` assigns element i to block `a[i]` with `a[0] = 0` and
//! `a[i] <= max(a[0..i]) + 1`; capping values at `max_blocks - 1` restricts
//! the block count. Enumeration is lexicographic, which makes the rank of a
//! partition (its 0-based position in the sequence) a stable identifier used
//! for deterministic parallel reductions.

/// Number of RGS of length `n` with at most `max_blocks` blocks, as f64.
///
/// Approximate above ~2^53 but only used to guard enumeration budgets.
pub fn count(n: usize, max_blocks: usize) -> f64 {
    if n == 0 || max_blocks == 0 {
        return if max_blocks == 0 && n > 0 { 0.0 } else { 1.0 };
    }
    // ways[m] = completions from the current position given prefix max m
    let cap = max_blocks.min(n);
    let mut ways = vec![1.0f64; cap];
    for _ in (1..n).rev() {
        let mut next = vec![0.0f64; cap];
        for m in 0..cap {
            next[m] = (m + 1) as f64 * ways[m];
            if m + 1 < cap {
                next[m] += ways[m + 1];
            }
        }
        ways = next;
    }
    ways[0]
}

/// Lexicographic RGS stepper with incrementally maintained prefix maxima;
/// the first `fixed` positions never change.
struct Stepper {
    a: Vec<u8>,
    maxes: Vec<u8>,
    cap: u8,
    fixed: usize,
}

impl Stepper {
    fn new(prefix: &[u8], n: usize, max_blocks: usize) -> Stepper {
        debug_assert!(!prefix.is_empty() && prefix.len() <= n);
        let mut a = vec![0u8; n];
        a[..prefix.len()].copy_from_slice(prefix);
        let mut maxes = vec![0u8; n];
        let mut m = 0u8;
        for i in 0..n {
            m = m.max(a[i]);
            maxes[i] = m;
        }
        Stepper {
            a,
            maxes,
            cap: (max_blocks.min(n) - 1) as u8,
            fixed: prefix.len(),
        }
    }

    /// Step to the successor; false when the range is exhausted.
    fn advance(&mut self) -> bool {
        let n = self.a.len();
        for i in (self.fixed.max(1)..n).rev() {
            let limit = (self.maxes[i - 1] + 1).min(self.cap);
            if self.a[i] < limit {
                self.a[i] += 1;
                self.maxes[i] = self.maxes[i - 1].max(self.a[i]);
                for j in i + 1..n {
                    self.a[j] = 0;
                    self.maxes[j] = self.maxes[j - 1];
                }
                return true;
            }
        }
        false
    }
}

/// Visit every RGS of length `n` with at most `max_blocks` blocks in
/// lexicographic order. The callback receives the string and its rank.
pub fn for_each(n: usize, max_blocks: usize, mut f: impl FnMut(&[u8], u64)) {
    if n == 0 || max_blocks == 0 {
        return;
    }
    let mut stepper = Stepper::new(&[0], n, max_blocks);
    let mut rank = 0u64;
    loop {
        f(&stepper.a, rank);
        rank += 1;
        if !stepper.advance() {
            return;
        }
    }
}

/// All valid RGS prefixes of length `len`, each with the rank of its first
/// completion, in lexicographic order. Splitting enumeration by prefix keeps
/// ranks globally consistent across workers.
pub fn prefixes(n: usize, max_blocks: usize, len: usize) -> Vec<(Vec<u8>, u64)> {
    assert!(len >= 1 && len <= n);
    let cap = max_blocks.min(n);
    let mut out = Vec::new();
    let mut stepper = Stepper::new(&[0], len, max_blocks.min(len));
    // a length-len stepper caps values at min(max_blocks, len) - 1, which is
    // exactly the set of valid prefixes of longer strings
    let mut rank = 0u64;
    loop {
        let m = stepper.maxes[len - 1] as usize;
        out.push((stepper.a.clone(), rank));
        let completions = count_completions(n - len, m, cap);
        rank = rank
            .checked_add(completions)
            .expect("enumeration count fits u64 under the search guard");
        if !stepper.advance() {
            return out;
        }
    }
}

/// Completions of a prefix with `remaining` positions and prefix max `m`.
fn count_completions(remaining: usize, m: usize, cap: usize) -> u64 {
    let mut ways = vec![1u64; cap];
    for _ in 0..remaining {
        let mut next = vec![0u64; cap];
        for mm in 0..cap {
            next[mm] = (mm as u64 + 1) * ways[mm];
            if mm + 1 < cap {
                next[mm] += ways[mm + 1];
            }
        }
        ways = next;
    }
    ways[m]
}

/// Visit the completions of `prefix` (the prefix itself counts as the first
/// one) in lexicographic order, passing absolute ranks from `start_rank` on.
pub fn for_each_completion(
    prefix: &[u8],
    n: usize,
    max_blocks: usize,
    start_rank: u64,
    mut f: impl FnMut(&[u8], u64),
) {
    let mut stepper = Stepper::new(prefix, n, max_blocks);
    let mut rank = start_rank;
    loop {
        f(&stepper.a, rank);
        rank += 1;
        if !stepper.advance() {
            return;
        }
    }
}
