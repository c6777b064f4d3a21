//! Set partitions indexing the basis of permutation-equivariant linear maps.

use std::fmt;

use crate::error::{Error, Result};

/// Largest partitioned set supported (tensor orders `k + l <= 4`).
pub const MAX_PARTITION_SIZE: usize = 4;

/// A set partition of `{0, .., m-1}` stored as its restricted growth
/// string: `rgs[i]` is the block of element `i`, blocks numbered by first
/// occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    rgs: Vec<usize>,
}

impl Partition {
    pub fn from_rgs(rgs: Vec<usize>) -> Result<Self> {
        let mut next = 0;
        for &b in &rgs {
            if b > next {
                return Err(Error::Input(format!("{rgs:?} is not a restricted growth string")));
            }
            if b == next {
                next += 1;
            }
        }
        Ok(Self { rgs })
    }

    /// Equality pattern of an index tuple.
    pub fn pattern_of(tuple: &[usize]) -> Self {
        let mut seen: Vec<usize> = Vec::with_capacity(tuple.len());
        let rgs = tuple
            .iter()
            .map(|v| match seen.iter().position(|s| s == v) {
                Some(b) => b,
                None => {
                    seen.push(*v);
                    seen.len() - 1
                }
            })
            .collect();
        Self { rgs }
    }

    pub fn rgs(&self) -> &[usize] {
        &self.rgs
    }

    pub fn size(&self) -> usize {
        self.rgs.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.rgs.iter().max().map_or(0, |m| m + 1)
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.num_blocks()];
        for (i, &b) in self.rgs.iter().enumerate() {
            blocks[b].push(i);
        }
        blocks
    }

    /// Dense code of the pattern, unique for sizes up to 4.
    pub(crate) fn code(&self) -> usize {
        self.rgs.iter().fold(0, |acc, &b| acc * MAX_PARTITION_SIZE + b)
    }
}

impl fmt::Display for Partition {
    /// One-based block notation, e.g. `{{1,2},{3}}`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (bi, block) in self.blocks().iter().enumerate() {
            if bi > 0 {
                f.write_str(",")?;
            }
            let items: Vec<String> = block.iter().map(|i| (i + 1).to_string()).collect();
            write!(f, "{{{}}}", items.join(","))?;
        }
        f.write_str("}")
    }
}

/// All set partitions of `m` elements, in lexicographic order of their
/// restricted growth strings.
pub fn enumerate_partitions(m: usize) -> Result<Vec<Partition>> {
    if !(1..=MAX_PARTITION_SIZE).contains(&m) {
        return Err(Error::Unsupported(format!(
            "set partitions of {m} elements (supported: 1..={MAX_PARTITION_SIZE})"
        )));
    }
    let mut out = Vec::new();
    let mut rgs = vec![0usize; m];
    extend(&mut rgs, 1, 0, &mut out);
    Ok(out)
}

fn extend(rgs: &mut Vec<usize>, at: usize, max: usize, out: &mut Vec<Partition>) {
    if at == rgs.len() {
        out.push(Partition { rgs: rgs.clone() });
        return;
    }
    for b in 0..=max + 1 {
        rgs[at] = b;
        extend(rgs, at + 1, max.max(b), out);
    }
}

/// Bell number `b(m)` for `m <= 4`; `b(0) = 1`.
pub fn bell(m: usize) -> usize {
    [1, 1, 2, 5, 15][m]
}
