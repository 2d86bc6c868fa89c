//! Weighted multivariate histograms and their linear-blend frequency polygon.
//!
//! Bin heights live on a dense node array that carries one guard node on
//! every face, so the multilinear blend between adjacent bin midpoints is
//! defined out to half a bin beyond the histogram box. The blend of a
//! histogram integrates to exactly its normaliser.
//!
//! Sampling is by sequential conditional inversion: the marginal of the
//! first coordinate is piecewise linear, and so is each following
//! coordinate's conditional given the earlier ones. Every step inverts a
//! piecewise-quadratic CDF in closed form, consuming one uniform per
//! coordinate, which keeps the map from the unit cube monotone in each
//! coordinate.

use std::io::{self, Write};

use crate::error::{Error, Result};

/// Histogram bins of common width `h` on a box.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: f64,
    lower: Vec<f64>,
    bins: Vec<usize>,
}

pub const MAX_DIM: usize = 3;

impl Grid {
    pub fn new(width: f64, lower: Vec<f64>, bins: Vec<usize>) -> Result<Self> {
        if lower.is_empty() || lower.len() > MAX_DIM || lower.len() != bins.len() {
            return Err(Error::Domain(format!(
                "grid dimension must be 1..={MAX_DIM} with matching bin counts"
            )));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::Domain(format!("bin width must be positive, got {width}")));
        }
        if bins.contains(&0) {
            return Err(Error::Domain("every dimension needs a bin".into()));
        }
        Ok(Grid { width, lower, bins })
    }

    /// Smallest symmetric grid of width `h` whose box contains `[-ρ, ρ]^dim`.
    pub fn centered(dim: usize, half_width: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Domain(format!("bin width must be positive, got {width}")));
        }
        let bins = (2.0 * half_width / width).floor() as usize + 1;
        let lower = -(bins as f64) * width / 2.0;
        Grid::new(width, vec![lower; dim], vec![bins; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn total_bins(&self) -> usize {
        self.bins.iter().product()
    }

    /// Histogram box `[lower, lower + bins h)` per dimension.
    pub fn histogram_box(&self) -> Vec<(f64, f64)> {
        self.lower
            .iter()
            .zip(&self.bins)
            .map(|(&l, &b)| (l, l + b as f64 * self.width))
            .collect()
    }

    /// Region where the blend is defined: outer guard midpoint to outer guard midpoint.
    pub fn support(&self) -> Vec<(f64, f64)> {
        let h = self.width;
        self.histogram_box()
            .into_iter()
            .map(|(a, b)| (a - 0.5 * h, b + 0.5 * h))
            .collect()
    }

    pub fn support_volume(&self) -> f64 {
        self.support().iter().map(|(a, b)| b - a).product()
    }

    fn nodes(&self, i: usize) -> usize {
        self.bins[i] + 2
    }

    fn cells(&self, i: usize) -> usize {
        self.bins[i] + 1
    }

    fn node_total(&self) -> usize {
        (0..self.dim()).map(|i| self.nodes(i)).product()
    }

    /// Position of node `j` along dimension `i`; node 0 is the lower guard.
    pub fn node_position(&self, i: usize, j: usize) -> f64 {
        self.lower[i] + (j as f64 - 0.5) * self.width
    }

    fn flat(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for (i, &j) in idx.iter().enumerate() {
            f = f * self.nodes(i) + j;
        }
        f
    }

    /// Node index of the bin containing `x`, if `x` lies in the histogram box.
    fn bin_node(&self, x: &[f64]) -> Option<usize> {
        let mut f = 0;
        for i in 0..self.dim() {
            let p = (x[i] - self.lower[i]) / self.width;
            if !(p >= 0.0) || p >= self.bins[i] as f64 {
                return None;
            }
            f = f * self.nodes(i) + p as usize + 1;
        }
        Some(f)
    }
}

/// Linear blend frequency polygon over a [`Grid`].
#[derive(Debug, Clone)]
pub struct LbfpDensity {
    grid: Grid,
    heights: Vec<f64>,
    normalizer: f64,
    tables: Tables,
}

/// Prefix sums used by the sampler.
#[derive(Debug, Clone, Default)]
struct Tables {
    /// First-coordinate marginal at each node.
    marg0: Vec<f64>,
    prefix0: Vec<f64>,
    /// Marginal over dims >= 2, indexed `[j0][j1]` (dim >= 2).
    marg01: Vec<f64>,
    prefix1: Vec<f64>,
    prefix2: Vec<f64>,
}

impl LbfpDensity {
    /// Builds a density from raw node heights (guard nodes included) whose
    /// blend integrates to `normalizer`.
    pub fn from_node_heights(grid: Grid, heights: Vec<f64>, normalizer: f64) -> Result<Self> {
        if heights.len() != grid.node_total() {
            return Err(Error::DimensionMismatch {
                expected: grid.node_total(),
                actual: heights.len(),
            });
        }
        if heights.iter().any(|h| !(*h >= 0.0) || !h.is_finite()) {
            return Err(Error::Domain("heights must be finite and non-negative".into()));
        }
        if !(normalizer > 0.0) {
            return Err(Error::EmptyEstimate);
        }
        let tables = Tables::build(&grid, &heights);
        Ok(LbfpDensity {
            grid,
            heights,
            normalizer,
            tables,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Raw node heights, guards included.
    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// Height of bin `bin` (zero-based, guards excluded) after normalisation.
    pub fn bin_height(&self, bin: &[usize]) -> f64 {
        let idx: Vec<usize> = bin.iter().map(|b| b + 1).collect();
        self.heights[self.grid.flat(&idx)] / self.normalizer
    }

    /// Density value; zero outside the support.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let mut cell = [0usize; MAX_DIM];
        let mut frac = [0f64; MAX_DIM];
        for i in 0..g.dim() {
            let p = (x[i] - g.node_position(i, 0)) / g.width;
            let cells = g.cells(i);
            if !(p >= 0.0) || p > cells as f64 {
                return 0.0;
            }
            let c = (p.floor() as usize).min(cells - 1);
            cell[i] = c;
            frac[i] = p - c as f64;
        }
        self.blend(&cell[..g.dim()], &frac[..g.dim()]) / self.normalizer
    }

    /// Multilinear blend of the `2^dim` nodes around `cell`, unnormalised.
    fn blend(&self, cell: &[usize], frac: &[f64]) -> f64 {
        let g = &self.grid;
        let k = cell.len();
        let mut total = 0.0;
        for corner in 0..(1usize << k) {
            let mut w = 1.0;
            let mut f = 0;
            for i in 0..k {
                let up = (corner >> (k - 1 - i)) & 1;
                w *= if up == 1 { frac[i] } else { 1.0 - frac[i] };
                f = f * g.nodes(i) + cell[i] + up;
            }
            if w != 0.0 {
                total += w * self.heights[f];
            }
        }
        total
    }

    /// Exact probability mass of the cell spanned by nodes `cell` .. `cell + 1`.
    pub fn cell_mass(&self, cell: &[usize]) -> f64 {
        let g = &self.grid;
        let k = g.dim();
        let mut sum = 0.0;
        for corner in 0..(1usize << k) {
            let mut f = 0;
            for i in 0..k {
                let up = (corner >> (k - 1 - i)) & 1;
                f = f * g.nodes(i) + cell[i] + up;
            }
            sum += self.heights[f];
        }
        g.width.powi(k as i32) * sum / (1usize << k) as f64 / self.normalizer
    }

    /// Number of cells per dimension.
    pub fn cell_counts(&self) -> Vec<usize> {
        (0..self.dim()).map(|i| self.grid.cells(i)).collect()
    }

    /// Sum of all cell masses (one for a normalised density).
    pub fn total_mass(&self) -> f64 {
        let counts = self.cell_counts();
        let mut idx = vec![0usize; counts.len()];
        let mut total = 0.0;
        loop {
            total += self.cell_mass(&idx);
            if !advance(&mut idx, &counts) {
                return total;
            }
        }
    }

    /// Mixture `(1 - β) q + β U(support)`, itself a blend with lifted nodes.
    pub fn defensive_mixture(&self, beta: f64) -> Result<LbfpDensity> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::Domain(format!("mixture weight must be in [0,1), got {beta}")));
        }
        let floor = beta / self.grid.support_volume();
        let heights = self
            .heights
            .iter()
            .map(|h| (1.0 - beta) * h / self.normalizer + floor)
            .collect();
        LbfpDensity::from_node_heights(self.grid.clone(), heights, 1.0)
    }

    /// Maps `dim` uniforms to a point; returns the density at that point.
    pub fn sample(&self, uniforms: &[f64], out: &mut [f64]) -> f64 {
        let g = &self.grid;
        let h = g.width;
        let t = &self.tables;
        let k = g.dim();
        let mut cell = [0usize; MAX_DIM];
        let mut frac = [0f64; MAX_DIM];

        let c0 = g.cells(0);
        let (c, s) = invert(|j| t.marg0[j], |c| t.prefix0[c], c0, h, uniforms[0]);
        cell[0] = c;
        frac[0] = s / h;

        if k >= 2 {
            let n1 = g.nodes(1);
            let c1 = g.cells(1);
            let (a, b) = (cell[0], cell[0] + 1);
            let (wa, wb) = (1.0 - frac[0], frac[0]);
            let node = |j: usize| wa * t.marg01[a * n1 + j] + wb * t.marg01[b * n1 + j];
            let pre = |c: usize| wa * t.prefix1[a * (c1 + 1) + c] + wb * t.prefix1[b * (c1 + 1) + c];
            let (c, s) = invert(node, pre, c1, h, uniforms[1]);
            cell[1] = c;
            frac[1] = s / h;
        }

        if k == 3 {
            let n1 = g.nodes(1);
            let n2 = g.nodes(2);
            let c2 = g.cells(2);
            let rows = [
                (cell[0] * n1 + cell[1], (1.0 - frac[0]) * (1.0 - frac[1])),
                (cell[0] * n1 + cell[1] + 1, (1.0 - frac[0]) * frac[1]),
                ((cell[0] + 1) * n1 + cell[1], frac[0] * (1.0 - frac[1])),
                ((cell[0] + 1) * n1 + cell[1] + 1, frac[0] * frac[1]),
            ];
            let node = |j: usize| rows.iter().map(|&(r, w)| w * self.heights[r * n2 + j]).sum::<f64>();
            let pre = |c: usize| rows.iter().map(|&(r, w)| w * t.prefix2[r * (c2 + 1) + c]).sum::<f64>();
            let (c, s) = invert(node, pre, c2, h, uniforms[2]);
            cell[2] = c;
            frac[2] = s / h;
        }

        for i in 0..k {
            out[i] = g.node_position(i, cell[i]) + frac[i] * h;
        }
        self.blend(&cell[..k], &frac[..k]) / self.normalizer
    }

    /// Plain-text dump: bin midpoint coordinates followed by the normalised height.
    pub fn write_grid<W: Write>(&self, mut w: W) -> io::Result<()> {
        let counts: Vec<usize> = (0..self.dim()).map(|i| self.grid.nodes(i)).collect();
        let mut idx = vec![0usize; counts.len()];
        loop {
            for (i, &j) in idx.iter().enumerate() {
                write!(w, "{} ", self.grid.node_position(i, j))?;
            }
            writeln!(w, "{}", self.heights[self.grid.flat(&idx)] / self.normalizer)?;
            if !advance(&mut idx, &counts) {
                return Ok(());
            }
        }
    }
}

/// Row-major odometer increment; false once every index wrapped.
fn advance(idx: &mut [usize], counts: &[usize]) -> bool {
    for i in (0..idx.len()).rev() {
        idx[i] += 1;
        if idx[i] < counts[i] {
            return true;
        }
        idx[i] = 0;
    }
    false
}

/// Inverts the CDF of a piecewise-linear density given by its node values
/// and cumulative cell masses at uniform `v`. Returns the cell and offset.
#[inline]
fn invert(
    node: impl Fn(usize) -> f64,
    prefix: impl Fn(usize) -> f64,
    cells: usize,
    h: f64,
    v: f64,
) -> (usize, f64) {
    let total = prefix(cells);
    let target = v * total;
    // Smallest c with prefix(c + 1) > target.
    let (mut lo, mut hi) = (0usize, cells);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if prefix(mid + 1) > target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    if lo == cells {
        // Rounding put the target at the very top.
        let mut c = cells - 1;
        while c > 0 && prefix(c + 1) <= prefix(c) {
            c -= 1;
        }
        return (c, h);
    }
    let c = lo;
    let r = (target - prefix(c)).max(0.0);
    let (g0, g1) = (node(c), node(c + 1));
    let disc = (g0 * g0 + 2.0 * (g1 - g0) * r / h).max(0.0);
    let denom = g0 + disc.sqrt();
    let s = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
    (c, s.clamp(0.0, h))
}

impl Tables {
    fn build(grid: &Grid, heights: &[f64]) -> Tables {
        let h = grid.width;
        let k = grid.dim();
        let trap = |n: usize, j: usize| if j == 0 || j + 1 == n { 0.5 * h } else { h };
        let prefix_of = |row: &[f64]| -> Vec<f64> {
            let mut p = Vec::with_capacity(row.len());
            p.push(0.0);
            let mut acc = 0.0;
            for w in row.windows(2) {
                acc += 0.5 * h * (w[0] + w[1]);
                p.push(acc);
            }
            p
        };
        let mut t = Tables::default();
        match k {
            1 => {
                t.marg0 = heights.to_vec();
            }
            2 => {
                let (n0, n1) = (grid.nodes(0), grid.nodes(1));
                t.marg01 = heights.to_vec();
                t.marg0 = (0..n0)
                    .map(|a| (0..n1).map(|b| trap(n1, b) * heights[a * n1 + b]).sum())
                    .collect();
                t.prefix1 = (0..n0).flat_map(|a| prefix_of(&heights[a * n1..(a + 1) * n1])).collect();
            }
            _ => {
                let (n0, n1, n2) = (grid.nodes(0), grid.nodes(1), grid.nodes(2));
                t.marg01 = (0..n0 * n1)
                    .map(|r| (0..n2).map(|c| trap(n2, c) * heights[r * n2 + c]).sum())
                    .collect();
                t.marg0 = (0..n0)
                    .map(|a| (0..n1).map(|b| trap(n1, b) * t.marg01[a * n1 + b]).sum())
                    .collect();
                t.prefix1 = (0..n0).flat_map(|a| prefix_of(&t.marg01[a * n1..(a + 1) * n1])).collect();
                t.prefix2 = (0..n0 * n1).flat_map(|r| prefix_of(&heights[r * n2..(r + 1) * n2])).collect();
            }
        }
        t.prefix0 = prefix_of(&t.marg0);
        t
    }
}

/// Weighted histogram of `points` (row-major, `grid.dim()` coordinates each)
/// turned into its blend. Bin heights are `Σ w / (M h^dim)` and the
/// normaliser is `Σ w / M`, so the density integrates to one.
pub fn build_weighted_histogram(points: &[f64], weights: &[f64], grid: Grid) -> Result<LbfpDensity> {
    let k = grid.dim();
    let m = weights.len();
    if points.len() != m * k {
        return Err(Error::DimensionMismatch {
            expected: m * k,
            actual: points.len(),
        });
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Domain("weights must be finite and non-negative".into()));
    }
    let mut heights = vec![0.0; grid.node_total()];
    let mut total = 0.0;
    for (x, &w) in points.chunks_exact(k).zip(weights) {
        let node = grid
            .bin_node(x)
            .ok_or_else(|| Error::Domain(format!("point {x:?} outside the histogram box")))?;
        heights[node] += w;
        total += w;
    }
    if !(total > 0.0) {
        return Err(Error::EmptyEstimate);
    }
    let scale = 1.0 / (m as f64 * grid.width.powi(k as i32));
    for v in heights.iter_mut() {
        *v *= scale;
    }
    LbfpDensity::from_node_heights(grid, heights, total / m as f64)
}
