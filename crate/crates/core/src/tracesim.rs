//! Execution-trace similarity: 2*|LCS| / (#lines(t1) + #lines(t2)) over
//! trace lines as atoms.

use num_rational::Ratio;
use thiserror::Error;

/// A solver execution trace, one normalized line per entry. Only trailing
/// whitespace is stripped; identifiers are deliberately left alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub lines: Vec<String>,
}

impl Trace {
    pub fn from_text(text: &str) -> Self {
        Trace {
            lines: text
                .lines()
                .map(|l| l.trim_end().to_string())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("both traces are empty")]
    BothEmpty,
}

pub type Similarity = Ratio<u64>;

/// Longest-common-subsequence length over lines, linear-space DP.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Exact similarity in [0, 1].
pub fn sim(t1: &Trace, t2: &Trace) -> Result<Similarity, SimError> {
    let denom = (t1.len() + t2.len()) as u64;
    if denom == 0 {
        return Err(SimError::BothEmpty);
    }
    let lcs = lcs_len(&t1.lines, &t2.lines) as u64;
    Ok(Ratio::new(2 * lcs, denom))
}

/// Element k is sim(seed, steps[k]); an empty-vs-empty pair yields None.
pub fn similarity_curve(seed: &Trace, steps: &[Trace]) -> Vec<Option<Similarity>> {
    steps.iter().map(|t| sim(seed, t).ok()).collect()
}

/// Pointwise average of several curves, skipping null entries. The result
/// is as long as the longest input curve.
pub fn average_curves(curves: &[Vec<Option<Similarity>>]) -> Vec<Option<Similarity>> {
    let len = curves.iter().map(|c| c.len()).max().unwrap_or(0);
    (0..len)
        .map(|k| {
            let values: Vec<Similarity> = curves
                .iter()
                .filter_map(|c| c.get(k).copied().flatten())
                .collect();
            if values.is_empty() {
                None
            } else {
                let sum: Similarity = values.iter().copied().sum();
                Some(sum / Ratio::from_integer(values.len() as u64))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trace(lines: &[&str]) -> Trace {
        Trace {
            lines: lines.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Exponential brute force: best LCS over all subsequences of `a`.
    fn brute_lcs(a: &[String], b: &[String]) -> usize {
        let n = a.len();
        let mut best = 0;
        for mask in 0u32..(1 << n) {
            let sub: Vec<&String> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
            if sub.len() <= best {
                continue;
            }
            // check sub is a subsequence of b
            let mut j = 0;
            for y in b {
                if j < sub.len() && sub[j] == y {
                    j += 1;
                }
            }
            if j == sub.len() {
                best = sub.len();
            }
        }
        best
    }

    #[test]
    fn identical_traces_score_one() {
        let t = trace(&["a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k"]);
        assert_eq!(sim(&t, &t).unwrap(), Ratio::from_integer(1));
    }

    #[test]
    fn ten_of_eleven_lines() {
        // eleven-line traces differing in exactly one line
        let mut a: Vec<String> = (0..11).map(|i| format!("line{i}")).collect();
        let b = a.clone();
        a[4] = "changed".to_string();
        let ta = Trace { lines: a };
        let tb = Trace { lines: b };
        assert_eq!(sim(&ta, &tb).unwrap(), Ratio::new(10, 11));
    }

    #[test]
    fn disjoint_traces_score_zero() {
        let a = trace(&["x", "y"]);
        let b = trace(&["p", "q", "r"]);
        assert_eq!(sim(&a, &b).unwrap(), Ratio::new(0, 1));
    }

    #[test]
    fn empty_vs_nonempty_is_zero_both_empty_is_error() {
        let e = trace(&[]);
        let t = trace(&["a"]);
        assert_eq!(sim(&e, &t).unwrap(), Ratio::new(0, 1));
        assert_eq!(sim(&e, &e), Err(SimError::BothEmpty));
    }

    #[test]
    fn trailing_whitespace_normalized_only() {
        let a = Trace::from_text("foo  \nBar #23\n");
        let b = Trace::from_text("foo\nBar #24\n");
        // identifiers are not canonicalized: #23 vs #24 differ
        assert_eq!(sim(&a, &b).unwrap(), Ratio::new(2, 4));
    }

    #[test]
    fn curve_of_ones_and_decreasing_fixture() {
        let seed: Vec<String> = (0..40).map(|i| format!("l{i}")).collect();
        let seed = Trace { lines: seed };
        let same = vec![seed.clone(), seed.clone()];
        assert!(similarity_curve(&seed, &same)
            .iter()
            .all(|s| *s == Some(Ratio::from_integer(1))));
        // each step rewrites one more line
        let steps: Vec<Trace> = (1..=10)
            .map(|k| {
                let mut lines = seed.lines.clone();
                for line in lines.iter_mut().take(k) {
                    *line = format!("rewritten-{line}");
                }
                Trace { lines }
            })
            .collect();
        let curve = similarity_curve(&seed, &steps);
        for w in curve.windows(2) {
            assert!(w[0].unwrap() > w[1].unwrap());
        }
    }

    #[test]
    fn average_curves_pointwise() {
        let a = vec![Some(Ratio::new(1u64, 2)), Some(Ratio::new(1, 4))];
        let b = vec![Some(Ratio::new(1u64, 2)), None, Some(Ratio::new(1, 8))];
        let avg = average_curves(&[a, b]);
        assert_eq!(
            avg,
            vec![
                Some(Ratio::new(1, 2)),
                Some(Ratio::new(1, 4)),
                Some(Ratio::new(1, 8))
            ]
        );
    }

    proptest! {
        #[test]
        fn dp_matches_brute_force(
            a in proptest::collection::vec("[abc]", 0..8),
            b in proptest::collection::vec("[abc]", 0..8),
        ) {
            prop_assume!(!a.is_empty() || !b.is_empty());
            let dp = lcs_len(&a, &b);
            prop_assert_eq!(dp, brute_lcs(&a, &b));
        }

        #[test]
        fn sim_symmetric_and_bounded(
            a in proptest::collection::vec("[ab]", 0..10),
            b in proptest::collection::vec("[ab]", 0..10),
        ) {
            prop_assume!(!a.is_empty() || !b.is_empty());
            let ta = Trace { lines: a };
            let tb = Trace { lines: b };
            let s = sim(&ta, &tb).unwrap();
            prop_assert_eq!(s, sim(&tb, &ta).unwrap());
            prop_assert!(s >= Ratio::new(0, 1) && s <= Ratio::from_integer(1));
        }
    }
}
