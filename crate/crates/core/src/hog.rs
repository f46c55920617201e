//! Histogram of Oriented Gradients for 30x30 texel windows.
//!
//! Gradients are hard-assigned to one of nine 20-degree unsigned orientation
//! bins. Each bin is kept as a magnitude channel with its own integral table,
//! so any 4x4 cell histogram costs nine rectangle sums. The 30 px window is
//! tiled by a 7x7 grid of whole cells anchored at the top-left (the last two
//! rows and columns are unused); 2x2-cell blocks at a one-cell stride give
//! 6x6 = 36 blocks and a 1296-value descriptor.
//!
//! Descriptor layout: blocks in row-major order, the four cells of a block in
//! row-major order, bins ascending. Bin `k` covers `[20k, 20k + 20)` degrees.

use crate::error::{Error, Result};
use crate::imagecore::{sobel_gradients, GradientField, GrayImage, IntegralTable};

pub const DESCRIPTOR_LEN: usize = 1296;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HogParams {
    pub cell_size: usize,
    /// Block side in cells.
    pub block_cells: usize,
    /// Block stride in cells.
    pub block_stride: usize,
    pub bins: usize,
    pub bin_width_deg: f64,
    pub window: usize,
    /// Added inside the square root of the block L2 norm.
    pub epsilon: f64,
}

impl Default for HogParams {
    fn default() -> Self {
        Self {
            cell_size: 4,
            block_cells: 2,
            block_stride: 1,
            bins: 9,
            bin_width_deg: 20.0,
            window: 30,
            epsilon: 1e-3,
        }
    }
}

impl HogParams {
    pub fn cells_per_side(&self) -> usize {
        self.window / self.cell_size
    }

    pub fn blocks_per_side(&self) -> usize {
        (self.cells_per_side() - self.block_cells) / self.block_stride + 1
    }

    pub fn block_len(&self) -> usize {
        self.block_cells * self.block_cells * self.bins
    }

    pub fn descriptor_len(&self) -> usize {
        self.blocks_per_side() * self.blocks_per_side() * self.block_len()
    }

    fn validate(&self) -> Result<()> {
        if self.cell_size == 0
            || self.block_cells == 0
            || self.block_stride == 0
            || self.bins == 0
            || self.cells_per_side() < self.block_cells
        {
            return Err(Error::Parameter(format!("inconsistent HOG geometry {self:?}")));
        }
        if ((self.bins as f64) * self.bin_width_deg - 180.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "{} bins of {} degrees do not cover 180",
                self.bins, self.bin_width_deg
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HogDescriptor {
    values: Vec<f64>,
}

impl HogDescriptor {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One magnitude channel per orientation bin, with integral tables.
#[derive(Debug, Clone)]
pub struct OrientationBinStack {
    pub width: usize,
    pub height: usize,
    pub channels: Vec<Vec<f64>>,
    pub tables: Vec<IntegralTable>,
}

/// Bin index for an unsigned orientation in degrees.
#[inline]
pub fn bin_index(orientation_deg: f64, params: &HogParams) -> usize {
    ((orientation_deg / params.bin_width_deg).floor().max(0.0) as usize).min(params.bins - 1)
}

pub fn bin_gradients(grad: &GradientField, params: &HogParams) -> OrientationBinStack {
    let n = grad.width * grad.height;
    let mut channels = vec![vec![0.0; n]; params.bins];
    for (i, (&m, &theta)) in grad.magnitude.iter().zip(&grad.orientation).enumerate() {
        channels[bin_index(theta, params)][i] = m;
    }
    let tables = channels
        .iter()
        .map(|c| IntegralTable::from_values(grad.width, grad.height, c))
        .collect();
    OrientationBinStack {
        width: grad.width,
        height: grad.height,
        channels,
        tables,
    }
}

/// Gradient + binning for a full image; reuse the stack for every window.
pub fn bin_image(img: &GrayImage, params: &HogParams) -> Result<OrientationBinStack> {
    Ok(bin_gradients(&sobel_gradients(img)?, params))
}

pub fn extract(window: &GrayImage, params: &HogParams) -> Result<HogDescriptor> {
    if window.dims() != (params.window, params.window) {
        return Err(Error::Dimension(format!(
            "HOG window must be {0}x{0}, got {1}x{2}",
            params.window,
            window.width(),
            window.height()
        )));
    }
    let stack = bin_image(window, params)?;
    extract_at(&stack, (0, 0), params)
}

pub fn extract_at(
    bins: &OrientationBinStack,
    top_left: (usize, usize),
    params: &HogParams,
) -> Result<HogDescriptor> {
    params.validate()?;
    let (x0, y0) = top_left;
    if x0 + params.window > bins.width || y0 + params.window > bins.height {
        return Err(Error::Bounds(format!(
            "{0}x{0} window at ({x0},{y0}) outside {1}x{2}",
            params.window, bins.width, bins.height
        )));
    }
    let cells = params.cells_per_side();
    let cs = params.cell_size;
    // Unnormalized cell histograms, [cy][cx][bin].
    let mut hist = vec![0.0; cells * cells * params.bins];
    for cy in 0..cells {
        for cx in 0..cells {
            let base = (cy * cells + cx) * params.bins;
            for (b, table) in bins.tables.iter().enumerate() {
                // Empty bins can come back as -1 ulp from the table differences.
                hist[base + b] = table.sum_unchecked(x0 + cx * cs, y0 + cy * cs, cs, cs).max(0.0);
            }
        }
    }
    Ok(HogDescriptor {
        values: assemble_blocks(&hist, params),
    })
}

/// Concatenate L2-normalized 2x2-cell blocks from a per-cell histogram grid.
pub(crate) fn assemble_blocks(hist: &[f64], params: &HogParams) -> Vec<f64> {
    let cells = params.cells_per_side();
    let blocks = params.blocks_per_side();
    let mut out = Vec::with_capacity(params.descriptor_len());
    let mut block = Vec::with_capacity(params.block_len());
    for by in 0..blocks {
        for bx in 0..blocks {
            block.clear();
            for dy in 0..params.block_cells {
                for dx in 0..params.block_cells {
                    let cy = by * params.block_stride + dy;
                    let cx = bx * params.block_stride + dx;
                    let base = (cy * cells + cx) * params.bins;
                    block.extend_from_slice(&hist[base..base + params.bins]);
                }
            }
            let norm = (block.iter().map(|v| v * v).sum::<f64>() + params.epsilon).sqrt();
            out.extend(block.iter().map(|v| v / norm));
        }
    }
    out
}
