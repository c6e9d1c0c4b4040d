//! States as canonical multisets of link TTLs, their enumeration and the
//! counting formulas for the full and viable-reduced state spaces.
//!
//! States are enumerated in graded lexicographic order: by number of links
//! first, then lexicographically over the non-increasing TTL tuple. The
//! position of a state in the full enumeration is computable directly from
//! its TTLs (see [`Ranker`]), which is how ids are resolved without hashing.

use std::fmt;

use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Largest supported TTL; TTLs are stored as bytes.
pub const MAX_TTL: u32 = u8::MAX as u32;

/// A multiset of link TTLs stored in non-increasing order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct State {
    ttls: SmallVec<[u8; 16]>,
}

impl State {
    pub fn empty() -> Self {
        State::default()
    }

    /// Sorts arbitrary TTLs into canonical order, checking each lies in
    /// `[1, t_max]`.
    pub fn canonicalize(ttls: &[u32], t_max: u32) -> Result<Self> {
        let mut out: SmallVec<[u8; 16]> = SmallVec::with_capacity(ttls.len());
        for &t in ttls {
            if t < 1 || t > t_max || t > MAX_TTL {
                return Err(Error::domain(format!("TTL {t} outside [1, {t_max}]")));
            }
            out.push(t as u8);
        }
        out.sort_unstable_by(|a, b| b.cmp(a));
        Ok(State { ttls: out })
    }

    /// Wraps TTLs that are already sorted non-increasing and non-zero.
    pub(crate) fn from_sorted(ttls: &[u8]) -> Self {
        debug_assert!(ttls.windows(2).all(|w| w[0] >= w[1]));
        debug_assert!(ttls.iter().all(|&t| t > 0));
        State {
            ttls: SmallVec::from_slice(ttls),
        }
    }

    pub fn ttls(&self) -> &[u8] {
        &self.ttls
    }

    pub fn len(&self) -> usize {
        self.ttls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ttls.is_empty()
    }

    /// Smallest TTL, `None` for the empty state.
    pub fn min_ttl(&self) -> Option<u32> {
        self.ttls.last().map(|&t| t as u32)
    }

    pub fn is_absorbing(&self, n: usize) -> bool {
        self.len() == n
    }

    /// Number of viable links: the largest `j` with `t_j > n - j`.
    pub fn viable_count(&self, n: usize) -> usize {
        viable_count(&self.ttls, n)
    }

    /// The state formed by the viable links only.
    pub fn viable_projection(&self, n: usize) -> State {
        let k = self.viable_count(n);
        State::from_sorted(&self.ttls[..k])
    }

    /// Ages every link by one step and drops expired links.
    pub fn decayed(&self) -> State {
        let mut ttls: SmallVec<[u8; 16]> = self
            .ttls
            .iter()
            .filter(|&&t| t > 1)
            .map(|&t| t - 1)
            .collect();
        ttls.shrink_to_fit();
        State { ttls }
    }

    /// Inserts a link of the given TTL, keeping canonical order.
    pub fn with_link(&self, ttl: u8) -> State {
        debug_assert!(ttl > 0);
        let mut ttls = self.ttls.clone();
        let pos = ttls.iter().position(|&t| t < ttl).unwrap_or(ttls.len());
        ttls.insert(pos, ttl);
        State { ttls }
    }

    /// Comma-joined TTLs, empty string for the empty state.
    pub fn key(&self) -> String {
        let parts: Vec<String> = self.ttls.iter().map(|t| t.to_string()).collect();
        parts.join(",")
    }

    /// Parses a key written by [`State::key`]; the TTLs must already be in
    /// canonical order.
    pub fn from_key(key: &str, t_max: u32) -> Result<Self> {
        let key = key.trim();
        if key.is_empty() {
            return Ok(State::empty());
        }
        let mut ttls = Vec::new();
        for part in key.split(',') {
            let t: u32 = part
                .trim()
                .parse()
                .map_err(|_| Error::domain(format!("bad state key {key:?}")))?;
            ttls.push(t);
        }
        if ttls.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::domain(format!(
                "state key {key:?} is not in canonical order"
            )));
        }
        State::canonicalize(&ttls, t_max)
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.key())
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            write!(f, "∅")
        } else {
            write!(f, "{{{}}}", self.key())
        }
    }
}

/// Viable-link count on a canonical TTL slice.
pub fn viable_count(ttls: &[u8], n: usize) -> usize {
    // t_j > n - j holds on a prefix, since t_j is non-increasing and n - j
    // is decreasing only by one per step; scan from the back.
    (1..=ttls.len())
        .rev()
        .find(|&j| (ttls[j - 1] as usize) + j > n)
        .unwrap_or(0)
}

/// Exact binomial coefficient, `None` on `u128` overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        // acc = C(n, j) here; C(n, j) * (n - j) is divisible by j + 1
        acc = acc.checked_mul((n - j) as u128)? / (j as u128 + 1);
    }
    Some(acc)
}

/// Number of multisets of size `k` drawn from `t` values.
pub fn multichoose(t: u64, k: u64) -> Option<u128> {
    if k == 0 {
        return Some(1);
    }
    if t == 0 {
        return Some(0);
    }
    binomial(t + k - 1, k)
}

fn check_counting_args(n: usize, t_max: u32) -> Result<()> {
    if n < 2 {
        return Err(Error::domain(format!("n must be at least 2, got {n}")));
    }
    if n > t_max as usize {
        return Err(Error::Infeasible { n, t_max });
    }
    Ok(())
}

/// Number of non-absorbing states, `C(t_max + n - 1, n - 1)`.
pub fn count_states(n: usize, t_max: u32) -> Result<u128> {
    check_counting_args(n, t_max)?;
    binomial(t_max as u64 + n as u64 - 1, n as u64 - 1).ok_or(Error::Overflow("state count"))
}

/// Number of states consisting only of viable links,
/// `1 + sum_{m=1}^{n-1} C(t_max + 2m - n - 1, m)`.
pub fn count_reduced(n: usize, t_max: u32) -> Result<u128> {
    check_counting_args(n, t_max)?;
    let mut total: u128 = 1;
    for m in 1..n as u64 {
        // values allowed for m viable links: (n - m, t_max]
        let c =
            multichoose(t_max as u64 + m - n as u64, m).ok_or(Error::Overflow("reduced count"))?;
        total = total
            .checked_add(c)
            .ok_or(Error::Overflow("reduced count"))?;
    }
    Ok(total)
}

/// `(1 + t_max / (n - 1))^(n - 1)`, a lower bound on [`count_states`].
pub fn state_count_lower_bound(n: usize, t_max: u32) -> Result<f64> {
    if n < 2 {
        return Err(Error::domain(format!("n must be at least 2, got {n}")));
    }
    if (t_max as usize) + 1 < n {
        return Err(Error::domain(format!(
            "lower bound needs t_max >= n - 1, got t_max = {t_max}"
        )));
    }
    let k = (n - 1) as f64;
    Ok((1.0 + t_max as f64 / k).powf(k))
}

/// Computes the position of a state in the full graded-lexicographic
/// enumeration.
#[derive(Debug, Clone)]
pub struct Ranker {
    n: usize,
    t_max: u32,
    /// offsets[m] = number of states with fewer than m links
    offsets: Vec<usize>,
    /// below[k][t] = number of non-increasing tails of length k + 1 over
    /// values < t, i.e. C(t - 1 + k, k + 1)
    below: Vec<Vec<usize>>,
    total: usize,
}

impl Ranker {
    pub fn new(n: usize, t_max: u32) -> Result<Self> {
        check_counting_args(n, t_max)?;
        if t_max > MAX_TTL {
            return Err(Error::domain(format!(
                "t_max {t_max} exceeds supported maximum {MAX_TTL}"
            )));
        }
        let to_usize = |v: u128| usize::try_from(v).map_err(|_| Error::Overflow("state rank"));
        let mut offsets = Vec::with_capacity(n + 1);
        let mut acc = 0usize;
        for m in 0..=n {
            offsets.push(acc);
            let c = to_usize(
                multichoose(t_max as u64, m as u64).ok_or(Error::Overflow("state rank"))?,
            )?;
            acc = acc.checked_add(c).ok_or(Error::Overflow("state rank"))?;
        }
        let mut below = Vec::with_capacity(n);
        for k in 0..n {
            let mut row = Vec::with_capacity(t_max as usize + 1);
            for t in 0..=t_max as u64 {
                let v = if t == 0 {
                    0
                } else {
                    to_usize(
                        binomial(t - 1 + k as u64, k as u64 + 1)
                            .ok_or(Error::Overflow("state rank"))?,
                    )?
                };
                row.push(v);
            }
            below.push(row);
        }
        let total = offsets_total(&offsets, n);
        Ok(Ranker {
            n,
            t_max,
            offsets,
            total,
            below,
        })
    }

    /// Number of non-absorbing states.
    pub fn total(&self) -> usize {
        self.total
    }

    /// Rank of a canonical TTL slice with fewer than `n` links.
    #[inline]
    pub fn rank(&self, ttls: &[u8]) -> usize {
        let m = ttls.len();
        debug_assert!(m < self.n);
        let mut r = self.offsets[m];
        for (i, &t) in ttls.iter().enumerate() {
            r += self.below[m - 1 - i][t as usize];
        }
        r
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_max(&self) -> u32 {
        self.t_max
    }
}

fn offsets_total(offsets: &[usize], n: usize) -> usize {
    offsets[n]
}

const NO_ID: u32 = u32::MAX;

/// Indexed list of the non-absorbing states for given `(n, t_max)`,
/// optionally restricted to states made only of viable links.
#[derive(Debug, Clone)]
pub struct StateSpace {
    n: usize,
    t_max: u32,
    reduced: bool,
    states: Vec<State>,
    ranker: Ranker,
    /// full-space rank -> id in this space
    local: Vec<u32>,
}

impl StateSpace {
    pub fn enumerate(n: usize, t_max: u32, reduced: bool) -> Result<Self> {
        let ranker = Ranker::new(n, t_max)?;
        if ranker.total() >= NO_ID as usize {
            return Err(Error::Overflow("state id"));
        }
        let mut states = Vec::new();
        let mut local = vec![NO_ID; ranker.total()];
        let mut buf = Vec::with_capacity(n);
        for m in 0..n {
            push_tuples(&mut buf, m, t_max as u8, &mut |ttls| {
                if !reduced || viable_count(ttls, n) == ttls.len() {
                    local[ranker.rank(ttls)] = states.len() as u32;
                    states.push(State::from_sorted(ttls));
                }
            });
        }
        Ok(StateSpace {
            n,
            t_max,
            reduced,
            states,
            ranker,
            local,
        })
    }

    pub fn full(n: usize, t_max: u32) -> Result<Self> {
        Self::enumerate(n, t_max, false)
    }

    pub fn reduced(n: usize, t_max: u32) -> Result<Self> {
        Self::enumerate(n, t_max, true)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_max(&self) -> u32 {
        self.t_max
    }

    pub fn is_reduced(&self) -> bool {
        self.reduced
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn state(&self, id: usize) -> &State {
        &self.states[id]
    }

    /// Id of the empty state, always 0.
    pub fn empty_id(&self) -> usize {
        0
    }

    pub fn ranker(&self) -> &Ranker {
        &self.ranker
    }

    /// Id of a canonical TTL slice, if it belongs to this space.
    #[inline]
    pub fn id_of_ttls(&self, ttls: &[u8]) -> Option<usize> {
        if ttls.len() >= self.n || ttls.iter().any(|&t| t == 0 || t as u32 > self.t_max) {
            return None;
        }
        match self.local[self.ranker.rank(ttls)] {
            NO_ID => None,
            id => Some(id as usize),
        }
    }

    pub fn id_of(&self, state: &State) -> Option<usize> {
        self.id_of_ttls(state.ttls())
    }

    /// Id used by a policy on this space for an arbitrary non-absorbing
    /// state: the state itself on a full space, its viable projection on a
    /// reduced space.
    #[inline]
    pub fn lookup_ttls(&self, ttls: &[u8]) -> Option<usize> {
        if self.reduced {
            self.id_of_ttls(&ttls[..viable_count(ttls, self.n)])
        } else {
            self.id_of_ttls(ttls)
        }
    }
}

/// Calls `f` on every non-increasing tuple of length `m` over `[1, max]`, in
/// lexicographic order.
fn push_tuples(buf: &mut Vec<u8>, m: usize, max: u8, f: &mut dyn FnMut(&[u8])) {
    if buf.len() == m {
        f(buf);
        return;
    }
    let bound = buf.last().copied().unwrap_or(max);
    for t in 1..=bound {
        buf.push(t);
        push_tuples(buf, m, max, f);
        buf.pop();
    }
}
