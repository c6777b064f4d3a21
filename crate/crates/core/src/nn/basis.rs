//! Exact-equality-pattern basis of equivariant linear maps between node
//! tensors of orders `k` and `l`.
//!
//! Basis element `γ` (a partition of the `k + l` index slots) sends `x` to
//! the tensor whose entry at output index `j` is the sum of `x[i]` over all
//! input indices `i` for which the concatenated tuple `(i, j)` has equality
//! pattern exactly `γ`. Elements have disjoint supports, so for `n >= k + l`
//! they are linearly independent and there are `b(k + l)` of them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::partition::{enumerate_partitions, Partition};
use super::tensor::{NodeTensor, MAX_NODES};
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

/// Precomputed `(input position, output position, pattern)` triples.
#[derive(Debug)]
pub struct BasisTable {
    pub k: usize,
    pub l: usize,
    pub n: usize,
    /// Partitions of `k + l`, in canonical order.
    pub partitions: Vec<Partition>,
    /// Partitions of `l` used for the bias.
    pub bias_partitions: Vec<Partition>,
    pub entries: Vec<(u32, u32, u8)>,
    /// Pattern index (into `bias_partitions`) of every output position.
    pub out_pattern: Vec<u8>,
    /// Per pattern: how many input entries feed one output entry.
    pub fan_in: Vec<usize>,
}

fn partitions_or_trivial(m: usize) -> Result<Vec<Partition>> {
    if m == 0 {
        Ok(vec![Partition::from_rgs(Vec::new())?])
    } else {
        enumerate_partitions(m)
    }
}

fn decode(mut pos: usize, n: usize, order: usize, out: &mut [usize]) {
    for slot in (0..order).rev() {
        out[slot] = pos % n;
        pos /= n;
    }
}

impl BasisTable {
    pub fn new(k: usize, l: usize, n: usize) -> Result<Self> {
        if k > 2 || l > 2 || k + l == 0 {
            return Err(Error::Unsupported(format!("equivariant map of orders ({k}, {l})")));
        }
        if n < k + l {
            return Err(Error::Input(format!(
                "n = {n} < k + l = {}: basis elements degenerate",
                k + l
            )));
        }
        if n > MAX_NODES {
            return Err(Error::Input(format!("n = {n} exceeds the dense limit of {MAX_NODES}")));
        }
        let partitions = partitions_or_trivial(k + l)?;
        let bias_partitions = partitions_or_trivial(l)?;
        let code_of: HashMap<usize, u8> = partitions
            .iter()
            .enumerate()
            .map(|(i, p)| (p.code(), i as u8))
            .collect();
        let bias_code: HashMap<usize, u8> = bias_partitions
            .iter()
            .enumerate()
            .map(|(i, p)| (p.code(), i as u8))
            .collect();

        let (n_in, n_out) = (n.pow(k as u32), n.pow(l as u32));
        let mut tuple = vec![0usize; k + l];
        let mut entries = Vec::with_capacity(n_in * n_out);
        let mut fan_in = vec![0usize; partitions.len()];
        for op in 0..n_out {
            decode(op, n, l, &mut tuple[k..]);
            for ip in 0..n_in {
                decode(ip, n, k, &mut tuple[..k]);
                let p = code_of[&Partition::pattern_of(&tuple).code()];
                entries.push((ip as u32, op as u32, p));
                if op == 0 {
                    fan_in[p as usize] += 1;
                }
            }
        }
        // Output position 0 has the all-equal pattern; other output
        // patterns can see more inputs, so take the maximum.
        for op in 1..n_out {
            let mut counts = vec![0usize; partitions.len()];
            for e in &entries[op * n_in..(op + 1) * n_in] {
                counts[e.2 as usize] += 1;
            }
            for (f, c) in fan_in.iter_mut().zip(counts) {
                *f = (*f).max(c);
            }
        }
        let out_pattern = (0..n_out)
            .map(|op| {
                decode(op, n, l, &mut tuple[..l]);
                bias_code[&Partition::pattern_of(&tuple[..l]).code()]
            })
            .collect();
        Ok(Self {
            k,
            l,
            n,
            partitions,
            bias_partitions,
            entries,
            out_pattern,
            fan_in,
        })
    }
}

/// Shared table for `(k, l, n)`.
pub fn basis_table(k: usize, l: usize, n: usize) -> Result<Arc<BasisTable>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize, usize), Arc<BasisTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().expect("basis cache poisoned").get(&(k, l, n)) {
        return Ok(Arc::clone(t));
    }
    let table = Arc::new(BasisTable::new(k, l, n)?);
    cache
        .lock()
        .expect("basis cache poisoned")
        .insert((k, l, n), Arc::clone(&table));
    Ok(table)
}

/// Applies a single basis element channel-wise.
pub fn basis_apply<T: Scalar>(gamma: &Partition, x: &NodeTensor<T>, l: usize) -> Result<NodeTensor<T>> {
    let k = x.order;
    check_dim("basis element size", k + l, gamma.size())?;
    let table = basis_table(k, l, x.n)?;
    let p = table
        .partitions
        .iter()
        .position(|q| q == gamma)
        .expect("partition of k + l");
    let mut out = NodeTensor::zeros(l, x.n, x.channels);
    for &(ip, op, q) in &table.entries {
        if q as usize == p {
            let src = x.at(ip as usize);
            for (o, &v) in out.at_mut(op as usize).iter_mut().zip(src) {
                *o += v;
            }
        }
    }
    Ok(out)
}
