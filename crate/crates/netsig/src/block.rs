//! Block matrices declaring the target meso-scale structure.
//!
//! Entry +1 rewards an excess of edges between a pair of groups, -1 rewards a
//! deficit, 0 ignores the pair. An all-zero last row/column marks an
//! "unassigned" group whose nodes never contribute to the statistic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockMatrix {
    k: usize,
    /// Row-major k*k entries in {-1, 0, +1}.
    entries: Vec<i8>,
    unassigned: bool,
}

/// JSON form: `{"size": K, "entries": [[...]], "unassigned": bool}`.
#[derive(Debug, Deserialize)]
struct BlockMatrixDoc {
    size: usize,
    entries: Vec<Vec<i8>>,
    #[serde(default)]
    unassigned: bool,
}

impl BlockMatrix {
    pub fn from_rows(rows: Vec<Vec<i8>>, unassigned: bool) -> Result<BlockMatrix> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::BlockMatrix("empty matrix".into()));
        }
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::BlockMatrix(format!("matrix is not {k}x{k}")));
        }
        let entries: Vec<i8> = rows.into_iter().flatten().collect();
        if entries.iter().any(|e| !matches!(e, -1..=1)) {
            return Err(Error::BlockMatrix("entries must be in {-1, 0, 1}".into()));
        }
        for a in 0..k {
            for b in (a + 1)..k {
                if entries[a * k + b] != entries[b * k + a] {
                    return Err(Error::BlockMatrix(format!("asymmetric at ({a},{b})")));
                }
            }
        }
        if entries.iter().all(|&e| e == 0) {
            return Err(Error::BlockMatrix("no nonzero entry".into()));
        }
        if unassigned {
            let last = k - 1;
            let row_ok = (0..k).all(|b| entries[last * k + b] == 0);
            let col_ok = (0..k).all(|a| entries[a * k + last] == 0);
            if !row_ok || !col_ok {
                return Err(Error::BlockMatrix(
                    "unassigned group requires an all-zero last row and column".into(),
                ));
            }
        }
        Ok(BlockMatrix {
            k,
            entries,
            unassigned,
        })
    }

    /// +1 diagonal / -1 off-diagonal over `k` structural groups, plus an
    /// all-zero unassigned group when requested.
    pub fn assortative(k: usize, unassigned: bool) -> Result<BlockMatrix> {
        if k == 0 {
            return Err(Error::usage("need at least one group"));
        }
        let total = if unassigned { k + 1 } else { k };
        let mut rows = vec![vec![0i8; total]; total];
        for a in 0..k {
            for b in 0..k {
                rows[a][b] = if a == b { 1 } else { -1 };
            }
        }
        BlockMatrix::from_rows(rows, unassigned)
    }

    /// Patterns studied on the karate club: `bipartite`, `repulsive`, and
    /// `double_core_periphery`.
    pub fn named_pattern(name: &str) -> Result<BlockMatrix> {
        match name {
            "bipartite" => BlockMatrix::from_rows(vec![vec![-1, 1], vec![1, -1]], false),
            "repulsive" => BlockMatrix::from_rows(vec![vec![-1, 0], vec![0, 0]], true),
            "double_core_periphery" => BlockMatrix::from_rows(
                vec![
                    vec![1, 1, -1, -1],
                    vec![1, -1, -1, -1],
                    vec![-1, -1, 1, 1],
                    vec![-1, -1, 1, -1],
                ],
                false,
            ),
            other => Err(Error::usage(format!("unknown pattern {other:?}"))),
        }
    }

    pub fn parse_json(doc: &str) -> Result<BlockMatrix> {
        let parsed: BlockMatrixDoc = serde_json::from_str(doc)?;
        if parsed.entries.len() != parsed.size {
            return Err(Error::BlockMatrix(format!(
                "size field {} does not match {} rows",
                parsed.size,
                parsed.entries.len()
            )));
        }
        BlockMatrix::from_rows(parsed.entries, parsed.unassigned)
    }

    /// Total group count K, including the unassigned group when present.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn has_unassigned(&self) -> bool {
        self.unassigned
    }

    pub fn entry(&self, a: usize, b: usize) -> i8 {
        self.entries[a * self.k + b]
    }

    pub fn rows(&self) -> Vec<Vec<i8>> {
        self.entries.chunks(self.k).map(|c| c.to_vec()).collect()
    }

    /// Apply a permutation of group indices: entry (a,b) of the result is
    /// entry (perm[a], perm[b]) of self. Used by relabeling-invariance tests.
    pub fn permuted(&self, perm: &[usize]) -> BlockMatrix {
        assert_eq!(perm.len(), self.k);
        let mut entries = vec![0i8; self.k * self.k];
        for a in 0..self.k {
            for b in 0..self.k {
                entries[a * self.k + b] = self.entry(perm[a], perm[b]);
            }
        }
        BlockMatrix {
            k: self.k,
            entries,
            unassigned: false,
        }
    }
}
