//! Smolyak sparse grids on `[0,1]^m` built from nested Clenshaw–Curtis rules.
//!
//! The combination runs over multi-indices `i` with `|i| <= level`, where
//! 1-D level 0 is the midpoint and level `l >= 1` has `2^l + 1` nodes. With
//! this convention the 10-dimensional level-2 grid has 221 points.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::artifact::sha256_hex;
use crate::error::{Error, Result};
use crate::reduction::fmt_f64;

pub const MAX_RULE_LEVEL: usize = 12;
pub const DEFAULT_POINT_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Rule1D {
    pub level: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn node_count(level: usize) -> usize {
    if level == 0 {
        1
    } else {
        (1usize << level) + 1
    }
}

/// Nested Clenshaw–Curtis rule on `[0,1]` with unit total weight.
pub fn clenshaw_curtis_1d(level: usize) -> Result<Rule1D> {
    if level > MAX_RULE_LEVEL {
        return Err(Error::InvalidArgument(format!(
            "Clenshaw-Curtis level {level} above the limit of {MAX_RULE_LEVEL}"
        )));
    }
    let n = node_count(level);
    if n == 1 {
        return Ok(Rule1D {
            level,
            nodes: vec![0.5],
            weights: vec![1.0],
        });
    }
    let big_n = n - 1;
    let mut nodes = vec![0.0; n];
    for (j, x) in nodes.iter_mut().enumerate().take(big_n / 2 + 1) {
        *x = 0.5 * (1.0 - (PI * j as f64 / big_n as f64).cos());
    }
    nodes[0] = 0.0;
    nodes[big_n / 2] = 0.5;
    for j in big_n / 2 + 1..n {
        nodes[j] = 1.0 - nodes[big_n - j];
    }

    let mut weights = vec![0.0; n];
    for (j, w) in weights.iter_mut().enumerate() {
        let theta = PI * j as f64 / big_n as f64;
        let mut acc = 1.0;
        for k in 1..=big_n / 2 {
            let b = if 2 * k == big_n { 1.0 } else { 2.0 };
            acc -= b / (4.0 * (k * k) as f64 - 1.0) * (2.0 * k as f64 * theta).cos();
        }
        let c = if j == 0 || j == big_n { 1.0 } else { 2.0 };
        // Weights on [-1,1] sum to 2; halve for the unit interval.
        *w = 0.5 * c * acc / big_n as f64;
    }
    for j in big_n / 2 + 1..n {
        weights[j] = weights[big_n - j];
    }
    Ok(Rule1D { level, nodes, weights })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseGrid {
    pub dim: usize,
    pub level: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub point_ids: Vec<String>,
}

/// Distinct-point count of the nested combination, without building it.
pub fn smolyak_point_count(dim: usize, level: usize) -> u128 {
    let new_nodes = |l: usize| -> u128 {
        match l {
            0 => 1,
            1 => 2,
            _ => 1u128 << (l - 1).min(100),
        }
    };
    // counts[b] = number of points using at most budget b over the dims seen so far.
    let mut counts = vec![1u128; level + 1];
    for _ in 0..dim {
        let mut next = vec![0u128; level + 1];
        for (b, slot) in next.iter_mut().enumerate() {
            for l in 0..=b {
                *slot = slot.saturating_add(new_nodes(l).saturating_mul(counts[b - l]));
            }
        }
        counts = next;
    }
    counts[level]
}

pub fn smolyak_grid(dim: usize, level: usize) -> Result<SparseGrid> {
    smolyak_grid_capped(dim, level, DEFAULT_POINT_CAP)
}

pub fn smolyak_grid_capped(dim: usize, level: usize, cap: usize) -> Result<SparseGrid> {
    if dim == 0 {
        return Err(Error::InvalidArgument("sparse grid dimension must be >= 1".into()));
    }
    if level > MAX_RULE_LEVEL || smolyak_point_count(dim, level) > cap as u128 {
        return Err(Error::GridTooLarge { dim, level, cap });
    }
    let rules: Vec<Rule1D> = (0..=level).map(clenshaw_curtis_1d).collect::<Result<_>>()?;

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();

    let lowest = (level + 1).saturating_sub(dim);
    for multi in multi_indices_up_to(dim, level) {
        let total: usize = multi.iter().sum();
        if total < lowest {
            continue;
        }
        let gap = level - total;
        let sign = if gap.is_multiple_of(2) { 1.0 } else { -1.0 };
        let coeff = sign * binomial(dim - 1, gap) as f64;

        let sizes: Vec<usize> = multi.iter().map(|&l| rules[l].nodes.len()).collect();
        let mut counter = vec![0usize; dim];
        loop {
            let mut pt = Vec::with_capacity(dim);
            let mut w = coeff;
            for d in 0..dim {
                let r = &rules[multi[d]];
                pt.push(r.nodes[counter[d]]);
                w *= r.weights[counter[d]];
            }
            let key = point_key(&pt);
            match index.get(&key) {
                Some(&slot) => weights[slot] += w,
                None => {
                    index.insert(key, points.len());
                    points.push(pt);
                    weights.push(w);
                }
            }
            if !advance(&mut counter, &sizes) {
                break;
            }
        }
    }

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let width = order.len().to_string().len();
    let point_ids = (0..order.len()).map(|i| format!("p{i:0width$}")).collect();
    Ok(SparseGrid {
        dim,
        level,
        points: order.iter().map(|&i| points[i].clone()).collect(),
        weights: order.iter().map(|&i| weights[i]).collect(),
        point_ids,
    })
}

/// Dedup key: every coordinate rounded to 14 significant digits.
fn point_key(pt: &[f64]) -> String {
    pt.iter()
        .map(|x| {
            let x = if *x == 0.0 { 0.0 } else { *x };
            format!("{x:.13e}")
        })
        .collect::<Vec<_>>()
        .join(",")
}

fn advance(counter: &mut [usize], sizes: &[usize]) -> bool {
    for d in (0..counter.len()).rev() {
        counter[d] += 1;
        if counter[d] < sizes[d] {
            return true;
        }
        counter[d] = 0;
    }
    false
}

/// All `i ∈ ℕ^dim` with `|i| <= budget`, in lexicographic order.
pub(crate) fn multi_indices_up_to(dim: usize, budget: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; dim];
    fill(&mut out, &mut cur, 0, budget);
    out
}

fn fill(out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>, pos: usize, left: usize) {
    if pos == cur.len() {
        out.push(cur.clone());
        return;
    }
    for v in 0..=left {
        cur[pos] = v;
        fill(out, cur, pos + 1, left - v);
    }
    cur[pos] = 0;
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

pub fn grid_quadrature(grid: &SparseGrid, values: &[f64]) -> Result<f64> {
    if values.len() != grid.points.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {} grid points",
            values.len(),
            grid.points.len()
        )));
    }
    Ok(grid.weights.iter().zip(values).map(|(w, v)| w * v).sum())
}

/// Companion to the design CSV; the hash covers the CSV bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignManifest {
    pub dim: usize,
    pub level: usize,
    pub weights: Vec<f64>,
    pub content_hash: String,
}

impl SparseGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `point_id,theta_1,...,theta_m`, one row per point.
    pub fn design_csv(&self) -> Vec<u8> {
        let mut out = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["point_id".to_string()];
        header.extend((1..=self.dim).map(|i| format!("theta_{i}")));
        out.write_record(&header).expect("in-memory write");
        for (id, pt) in self.point_ids.iter().zip(&self.points) {
            let mut rec = vec![id.clone()];
            rec.extend(pt.iter().map(|v| fmt_f64(*v)));
            out.write_record(&rec).expect("in-memory write");
        }
        out.into_inner().expect("in-memory flush")
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(&self.design_csv())
    }

    pub fn manifest(&self) -> DesignManifest {
        DesignManifest {
            dim: self.dim,
            level: self.level,
            weights: self.weights.clone(),
            content_hash: self.content_hash(),
        }
    }

    pub fn write_design<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.design_csv())?;
        Ok(())
    }

    /// Rebuilds a grid from its design CSV and manifest, refusing a hash mismatch.
    pub fn read_design<R: Read>(mut r: R, manifest: &DesignManifest, source: &str) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let hash = sha256_hex(&bytes);
        if hash != manifest.content_hash {
            return Err(Error::Provenance(format!(
                "design {source} hash {hash} does not match manifest {}",
                manifest.content_hash
            )));
        }
        let bad = |reason: String| Error::Format {
            path: source.to_string(),
            reason,
        };
        let mut rdr = csv::Reader::from_reader(bytes.as_slice());
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("point_id") || header.len() != manifest.dim + 1 {
            return Err(bad("expected header point_id,theta_1..theta_m".into()));
        }
        let mut points = Vec::new();
        let mut ids = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            ids.push(rec[0].to_string());
            let pt = rec
                .iter()
                .skip(1)
                .map(|f| f.parse::<f64>().map_err(|_| bad(format!("bad number {f:?}"))))
                .collect::<Result<Vec<_>>>()?;
            points.push(pt);
        }
        if points.len() != manifest.weights.len() {
            return Err(bad(format!(
                "{} points but {} weights in manifest",
                points.len(),
                manifest.weights.len()
            )));
        }
        Ok(SparseGrid {
            dim: manifest.dim,
            level: manifest.level,
            points,
            weights: manifest.weights.clone(),
            point_ids: ids,
        })
    }
}
