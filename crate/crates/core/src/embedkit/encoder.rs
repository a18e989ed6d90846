//! Deterministic stand-in for the pretrained vision tower.
//!
//! Each frame is cut into a `grid × grid` patch lattice; the per-patch RGB means go
//! through a fixed linear map drawn from the encoder seed.

use numkit::{SplitMix64, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::frames::Frame;
use crate::error::{invalid, Result};

/// Per-frame feature maps stored as `(frames · grid · grid) × dim` rows,
/// ordered (frame, y, x).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMaps {
    pub frames: usize,
    pub grid: usize,
    pub dim: usize,
    pub data: Tensor,
}

impl FeatureMaps {
    pub fn new(frames: usize, grid: usize, dim: usize, data: Tensor) -> Result<Self> {
        if data.shape() != [frames * grid * grid, dim] {
            return Err(invalid(format!(
                "feature tensor {:?} does not hold {frames} maps of {grid}x{grid}x{dim}",
                data.shape()
            )));
        }
        Ok(Self { frames, grid, dim, data })
    }

    /// Rows of frame `i`.
    pub fn frame(&self, i: usize) -> &[f64] {
        let per = self.grid * self.grid * self.dim;
        &self.data.data()[i * per..(i + 1) * per]
    }

    /// Keeps only the listed frames, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.grid * self.grid * self.dim);
        for &i in indices {
            if i >= self.frames {
                return Err(invalid(format!("frame {i} out of {}", self.frames)));
            }
            data.extend_from_slice(self.frame(i));
        }
        let t = Tensor::new(vec![indices.len() * self.grid * self.grid, self.dim], data)?;
        Self::new(indices.len(), self.grid, self.dim, t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub grid: usize,
    pub dim: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct MockEncoder {
    config: EncoderConfig,
    /// 3 × dim
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl MockEncoder {
    pub fn new(config: EncoderConfig) -> Self {
        let mut rng = SplitMix64::derive(config.seed, "mock-encoder");
        let weight = Tensor::randn(&[3, config.dim], 1.0, &mut rng).into_data();
        let bias = Tensor::randn(&[config.dim], 0.1, &mut rng).into_data();
        Self { config, weight, bias }
    }

    pub fn config(&self) -> EncoderConfig {
        self.config
    }

    fn encode_one(&self, frame: &Frame) -> Result<Vec<f64>> {
        let g = self.config.grid;
        if frame.height < g || frame.width < g {
            return Err(invalid(format!(
                "frame {}x{} is smaller than the {g}x{g} grid",
                frame.height, frame.width
            )));
        }
        let d = self.config.dim;
        let mut out = Vec::with_capacity(g * g * d);
        for py in 0..g {
            let (y0, y1) = (py * frame.height / g, (py + 1) * frame.height / g);
            for px in 0..g {
                let (x0, x1) = (px * frame.width / g, (px + 1) * frame.width / g);
                let mut mean = [0.0f64; 3];
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = frame.pixel(y, x);
                        for c in 0..3 {
                            mean[c] += f64::from(p[c]);
                        }
                    }
                }
                let count = ((y1 - y0) * (x1 - x0)) as f64;
                for m in &mut mean {
                    *m /= count;
                }
                for j in 0..d {
                    let mut v = self.bias[j];
                    for c in 0..3 {
                        v += mean[c] * self.weight[c * d + j];
                    }
                    out.push(v);
                }
            }
        }
        Ok(out)
    }

    /// Encodes frames independently (in parallel); output order matches input order.
    pub fn encode(&self, frames: &[Frame]) -> Result<FeatureMaps> {
        if frames.is_empty() {
            return Err(invalid("no frames to encode"));
        }
        let per: Vec<Vec<f64>> = frames.par_iter().map(|f| self.encode_one(f)).collect::<Result<_>>()?;
        let g = self.config.grid;
        let data = Tensor::new(vec![frames.len() * g * g, self.config.dim], per.concat())?;
        FeatureMaps::new(frames.len(), g, self.config.dim, data)
    }
}
