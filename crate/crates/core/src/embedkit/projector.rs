//! Trainable projector: a 2-layer MLP into the LM width, then 2×2 average pooling
//! and flattening, giving `T = (grid/2)²` high-resolution tokens per frame. The
//! compressed per-frame embedding is the mean of those tokens.

use numkit::{Bound, ParamStore, SplitMix64, Tape, Tensor, Var};

use super::encoder::FeatureMaps;
use crate::error::{invalid, Result};

pub const W1: &str = "proj.w1";
pub const B1: &str = "proj.b1";
pub const W2: &str = "proj.w2";
pub const B2: &str = "proj.b2";

/// Tokens per frame after pooling a `grid × grid` map. Odd grids are rejected
/// rather than padded.
pub fn tokens_per_frame(grid: usize) -> Result<usize> {
    if grid == 0 || grid % 2 != 0 {
        return Err(invalid(format!("grid {grid} must be even and non-zero for 2x2 pooling")));
    }
    Ok((grid / 2) * (grid / 2))
}

pub fn init_projector(store: &mut ParamStore, enc_dim: usize, dim: usize, seed: u64) {
    let mut rng = SplitMix64::derive(seed, "projector");
    store.insert(W1, Tensor::randn(&[enc_dim, dim], (1.0 / enc_dim as f64).sqrt(), &mut rng));
    store.insert(B1, Tensor::zeros(&[dim]));
    store.insert(W2, Tensor::randn(&[dim, dim], (1.0 / dim as f64).sqrt(), &mut rng));
    store.insert(B2, Tensor::zeros(&[dim]));
}

/// `(N·T) × C` high-resolution visual embeddings on the tape.
pub fn project_and_pool(tape: &mut Tape<'_>, params: &Bound, features: &FeatureMaps) -> Result<Var> {
    tokens_per_frame(features.grid)?;
    let x = tape.constant(features.data.clone())?;
    let h = tape.matmul(x, params.var(W1)?)?;
    let h = tape.add_row(h, params.var(B1)?)?;
    let h = tape.gelu(h)?;
    let h = tape.matmul(h, params.var(W2)?)?;
    let h = tape.add_row(h, params.var(B2)?)?;
    Ok(tape.avg_pool_2x2(h, features.frames, features.grid)?)
}

/// Mean over the token axis: `(N·T) × C` → `N × C`.
pub fn compress(tape: &mut Tape<'_>, high_res: Var, frames: usize, tokens: usize) -> Result<Var> {
    if tokens == 0 {
        return Err(invalid("embedding length must be at least 1"));
    }
    let c = tape.value(high_res).cols();
    let cube = tape.reshape(high_res, &[frames, tokens, c])?;
    Ok(tape.mean_pool(cube, 1)?)
}

/// Value-level visual embeddings for one video.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameEmbeddings {
    /// `N × T × C`
    pub high_res: Tensor,
    /// `N × C`
    pub compressed: Tensor,
    pub frame_indices: Vec<usize>,
    pub tokens_per_frame: usize,
    pub dim: usize,
}

impl FrameEmbeddings {
    pub fn from_features(params: &ParamStore, features: &FeatureMaps, frame_indices: Vec<usize>) -> Result<Self> {
        if frame_indices.len() != features.frames {
            return Err(invalid("one source index is needed per feature map"));
        }
        if frame_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("frame indices must be strictly increasing"));
        }
        let t = tokens_per_frame(features.grid)?;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape)?;
        let hr = project_and_pool(&mut tape, &bound, features)?;
        let comp = compress(&mut tape, hr, features.frames, t)?;
        let dim = tape.value(hr).cols();
        let high_res = tape.value(hr).clone().reshape(&[features.frames, t, dim])?;
        Ok(Self { high_res, compressed: tape.value(comp).clone(), frame_indices, tokens_per_frame: t, dim })
    }

    pub fn frames(&self) -> usize {
        self.compressed.rows()
    }

    /// High-res embeddings flattened to `(N·T) × C`.
    pub fn high_res_rows(&self) -> Tensor {
        self.high_res.clone().reshape(&[self.frames() * self.tokens_per_frame, self.dim]).expect("same size")
    }
}

/// Mean over the `T` axis of an `N × T × C` tensor.
pub fn compress_values(high_res: &Tensor) -> Result<Tensor> {
    if high_res.rank() != 3 {
        return Err(invalid(format!("expected N x T x C, got {:?}", high_res.shape())));
    }
    let mut tape = Tape::new();
    let x = tape.constant(high_res.clone())?;
    let m = tape.mean_pool(x, 1)?;
    Ok(tape.value(m).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_arithmetic() {
        assert_eq!(tokens_per_frame(6).unwrap(), 9);
        assert_eq!(tokens_per_frame(26).unwrap(), 169);
        assert!(tokens_per_frame(27).is_err());
    }

    #[test]
    fn compress_identity_and_constants() {
        let x = Tensor::new(vec![2, 1, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(compress_values(&x).unwrap().data(), x.data());
        let c = Tensor::full(&[2, 5, 3], -0.75);
        assert!(compress_values(&c).unwrap().data().iter().all(|&v| v == -0.75));
    }

    #[test]
    fn compress_matches_brute_force_mean() {
        let mut rng = SplitMix64::new(9);
        let x = Tensor::randn(&[3, 4, 2], 1.0, &mut rng);
        let got = compress_values(&x).unwrap();
        for n in 0..3 {
            for c in 0..2 {
                let mut s = 0.0;
                for t in 0..4 {
                    s += x.data()[(n * 4 + t) * 2 + c];
                }
                assert!((got.data()[n * 2 + c] - s / 4.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_maps_pool_to_constant_tokens() {
        let mut store = ParamStore::new();
        init_projector(&mut store, 4, 6, 1);
        let data = Tensor::full(&[6 * 6, 4], 0.3);
        let maps = FeatureMaps::new(1, 6, 4, data).unwrap();
        let emb = FrameEmbeddings::from_features(&store, &maps, vec![0]).unwrap();
        assert_eq!(emb.high_res.shape(), &[1, 9, 6]);
        let first = emb.high_res.data()[..6].to_vec();
        for tok in emb.high_res.data().chunks(6) {
            for (a, b) in tok.iter().zip(&first) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn odd_grid_is_rejected() {
        let mut store = ParamStore::new();
        init_projector(&mut store, 2, 3, 1);
        let maps = FeatureMaps::new(1, 3, 2, Tensor::zeros(&[9, 2])).unwrap();
        assert!(FrameEmbeddings::from_features(&store, &maps, vec![0]).is_err());
    }
}
