//! Grouping of frequency pairs `(k1, k2)` by `(|k1|, |k2|, angle)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::invariant::{InvariantTensor, Space};

/// How the angle between `k1` and `k2` is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AngleConvention {
    /// Unsigned angle in `[0, pi]`.
    #[default]
    Unsigned,
    /// Counter-clockwise angle from `k1` to `k2` in `[0, 2 pi)`.
    Signed,
}

impl AngleConvention {
    pub fn range(&self) -> f64 {
        match self {
            AngleConvention::Unsigned => PI,
            AngleConvention::Signed => 2.0 * PI,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BinKey {
    Regular {
        r1: u32,
        r2: u32,
        angle: u32,
    },
    /// Pairs where `k1` or `k2` is the zero frequency and the angle is undefined.
    Degenerate {
        r1: u32,
        r2: u32,
    },
}

impl BinKey {
    pub fn is_degenerate(&self) -> bool {
        matches!(self, BinKey::Degenerate { .. })
    }
}

/// Values within this distance below an integer are floored to that integer,
/// so lattice angles such as `pi/4` land in the bin they belong to exactly.
const SNAP: f64 = 1e-9;

fn snapped_floor(x: f64) -> u32 {
    (x + SNAP).floor() as u32
}

fn norm(p: Point) -> f64 {
    ((p[0] * p[0] + p[1] * p[1]) as f64).sqrt()
}

fn angle_between(k1: Point, k2: Point, convention: AngleConvention) -> f64 {
    let cross = (k1[0] * k2[1] - k1[1] * k2[0]) as f64;
    let dot = (k1[0] * k2[0] + k1[1] * k2[1]) as f64;
    match convention {
        AngleConvention::Unsigned => cross.abs().atan2(dot),
        AngleConvention::Signed => {
            let a = cross.atan2(dot);
            if a < 0.0 {
                a + 2.0 * PI
            } else {
                a
            }
        }
    }
}

/// `(floor(b1 |k1|), floor(b1 |k2|), floor(b2 theta))` with the unsigned angle.
/// Fails when either frequency is zero.
pub fn bin_map(k1: Point, k2: Point, b1: f64, b2: f64) -> Result<(u32, u32, u32)> {
    bin_map_with(k1, k2, b1, b2, AngleConvention::Unsigned)
}

pub fn bin_map_with(
    k1: Point,
    k2: Point,
    b1: f64,
    b2: f64,
    convention: AngleConvention,
) -> Result<(u32, u32, u32)> {
    if !(b1 > 0.0 && b2 > 0.0) {
        return Err(Error::InvalidArgument("bin scales must be positive".into()));
    }
    if k1 == [0, 0] || k2 == [0, 0] {
        return Err(Error::InvalidArgument(
            "angle undefined for the zero frequency".into(),
        ));
    }
    let theta = angle_between(k1, k2, convention);
    Ok((
        snapped_floor(b1 * norm(k1)),
        snapped_floor(b1 * norm(k2)),
        snapped_floor(b2 * theta),
    ))
}

/// Parameters of a binning scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinningParams {
    pub b1: f64,
    pub b2: f64,
    pub one_per_bin: bool,
    pub include_degenerate: bool,
    pub angle: AngleConvention,
}

impl Default for BinningParams {
    fn default() -> Self {
        BinningParams {
            b1: 1.0,
            b2: 16.0 / PI,
            one_per_bin: false,
            include_degenerate: true,
            angle: AngleConvention::Unsigned,
        }
    }
}

/// Partition of all frequency pairs of the `4n x 4n` grid into bins.
#[derive(Clone, Debug)]
pub struct BinningScheme {
    pub n: usize,
    pub params: BinningParams,
    pub keys: Vec<BinKey>,
    /// Bin id of every pair `k1 * plane + k2`.
    pair_bin: Vec<u32>,
    /// CSR layout of the members of each bin, in increasing pair order.
    offsets: Vec<usize>,
    members: Vec<u32>,
}

impl BinningScheme {
    pub fn build(n: usize, params: BinningParams) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("n must be >= 2, got {n}")));
        }
        if !(params.b1 > 0.0 && params.b2 > 0.0) {
            return Err(Error::InvalidArgument("bin scales must be positive".into()));
        }
        let grid = Grid::new(n);
        let plane = grid.len();
        // the closing edge theta = range joins the last angular bin
        let top = ((params.b2 * params.angle.range()) - SNAP).ceil().max(1.0) as u32 - 1;
        let radial: Vec<u32> = (0..plane)
            .map(|k| snapped_floor(params.b1 * norm(grid.point(k))))
            .collect();
        let mut raw = Vec::with_capacity(plane * plane);
        for k1 in 0..plane {
            let p1 = grid.point(k1);
            for k2 in 0..plane {
                let p2 = grid.point(k2);
                let key = if p1 == [0, 0] || p2 == [0, 0] {
                    BinKey::Degenerate {
                        r1: radial[k1],
                        r2: radial[k2],
                    }
                } else {
                    let theta = angle_between(p1, p2, params.angle);
                    BinKey::Regular {
                        r1: radial[k1],
                        r2: radial[k2],
                        angle: snapped_floor(params.b2 * theta).min(top),
                    }
                };
                raw.push(key);
            }
        }
        let mut ids: BTreeMap<BinKey, u32> = raw.iter().map(|&k| (k, 0)).collect();
        for (i, v) in ids.values_mut().enumerate() {
            *v = i as u32;
        }
        let keys: Vec<BinKey> = ids.keys().copied().collect();
        let pair_bin: Vec<u32> = raw.iter().map(|k| ids[k]).collect();
        let mut counts = vec![0usize; keys.len()];
        for &b in &pair_bin {
            counts[b as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(keys.len() + 1);
        offsets.push(0);
        for c in &counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        let mut fill = offsets.clone();
        let mut members = vec![0u32; pair_bin.len()];
        for (pair, &b) in pair_bin.iter().enumerate() {
            members[fill[b as usize]] = pair as u32;
            fill[b as usize] += 1;
        }
        Ok(BinningScheme {
            n,
            params,
            keys,
            pair_bin,
            offsets,
            members,
        })
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.n)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn bin_of(&self, pair: usize) -> usize {
        self.pair_bin[pair] as usize
    }

    pub fn members(&self, bin: usize) -> &[u32] {
        &self.members[self.offsets[bin]..self.offsets[bin + 1]]
    }

    pub fn size(&self, bin: usize) -> usize {
        self.offsets[bin + 1] - self.offsets[bin]
    }

    /// Lexicographically smallest `(k1, k2)` of a bin.
    pub fn representative(&self, bin: usize) -> usize {
        let g = self.grid();
        let plane = g.len();
        *self
            .members(bin)
            .iter()
            .min_by_key(|&&p| {
                let p = p as usize;
                let a = g.point(p / plane);
                let b = g.point(p % plane);
                (a, b)
            })
            .expect("bins are never empty") as usize
    }

    /// Bins entering the cost.
    pub fn active(&self, bin: usize) -> bool {
        self.params.include_degenerate || !self.keys[bin].is_degenerate()
    }

    /// `(pair, bin)` for every pair that contributes to the binned sums.
    pub fn contributions(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for bin in 0..self.len() {
            if !self.active(bin) {
                continue;
            }
            if self.params.one_per_bin {
                out.push((self.representative(bin), bin));
            } else {
                out.extend(self.members(bin).iter().map(|&p| (p as usize, bin)));
            }
        }
        out
    }

    /// Binned sums of a frequency-domain tensor (zero for inactive bins).
    pub fn bin_tensor(&self, tensor: &InvariantTensor) -> Result<Vec<Complex64>> {
        if tensor.space != Space::Frequency {
            return Err(Error::SchemeMismatch(
                "binning needs a frequency-domain tensor".into(),
            ));
        }
        if tensor.n != self.n {
            return Err(Error::SchemeMismatch(format!(
                "tensor n={} but scheme n={}",
                tensor.n, self.n
            )));
        }
        let data = tensor.complex().expect("frequency tensor is complex");
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        for (pair, bin) in self.contributions() {
            out[bin] += data[pair];
        }
        Ok(out)
    }
}
