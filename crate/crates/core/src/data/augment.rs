use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Training-batch augmentation. Never applied to auxiliary sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentRecipe {
    #[default]
    None,
    /// Zero-pad by `pad`, take a random `crop x crop` window, then mirror
    /// horizontally with probability 0.5 when `flip` is set.
    CropFlip { pad: usize, crop: usize, flip: bool },
}

impl AugmentRecipe {
    pub fn validate(&self, input_shape: &[usize]) -> Result<()> {
        match *self {
            AugmentRecipe::None => Ok(()),
            AugmentRecipe::CropFlip { pad, crop, .. } => {
                let [_, h, w] = input_shape else {
                    return Err(Error::config(
                        "dataset.augment",
                        format!("crop_flip needs [C, H, W] samples, got {input_shape:?}"),
                    ));
                };
                if crop == 0 || crop > h + 2 * pad || crop > w + 2 * pad {
                    return Err(Error::config(
                        "dataset.augment.crop",
                        format!("crop {crop} does not fit {h}x{w} padded by {pad}"),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Mirrors every `[C, H, W]` sample of `batch` left to right.
pub fn hflip(batch: &Tensor) -> Result<Tensor> {
    let &[n, c, h, w] = batch.shape() else {
        return Err(Error::Shape(format!(
            "hflip needs [N, C, H, W], got {:?}",
            batch.shape()
        )));
    };
    let src = batch.data();
    let mut out = vec![0.0; src.len()];
    for plane in 0..n * c {
        for y in 0..h {
            let base = (plane * h + y) * w;
            for x in 0..w {
                out[base + x] = src[base + w - 1 - x];
            }
        }
    }
    Tensor::new(batch.shape().to_vec(), out)
}

pub fn augment<R: Rng + ?Sized>(
    batch: &Tensor,
    recipe: &AugmentRecipe,
    rng: &mut R,
) -> Result<Tensor> {
    let (pad, crop, flip) = match *recipe {
        AugmentRecipe::None => return Ok(batch.clone()),
        AugmentRecipe::CropFlip { pad, crop, flip } => (pad, crop, flip),
    };
    let &[n, c, h, w] = batch.shape() else {
        return Err(Error::Shape(format!(
            "augmentation needs [N, C, H, W], got {:?}",
            batch.shape()
        )));
    };
    recipe.validate(&[c, h, w])?;
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let src = batch.data();
    let mut out = vec![0.0; n * c * crop * crop];
    for s in 0..n {
        let oy = rng.random_range(0..=ph - crop);
        let ox = rng.random_range(0..=pw - crop);
        let mirror = flip && rng.random_bool(0.5);
        for ch in 0..c {
            for y in 0..crop {
                let sy = (oy + y) as isize - pad as isize;
                for x in 0..crop {
                    let cx = if mirror { crop - 1 - x } else { x };
                    let sx = (ox + cx) as isize - pad as isize;
                    let v = if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                        0.0
                    } else {
                        src[((s * c + ch) * h + sy as usize) * w + sx as usize]
                    };
                    out[((s * c + ch) * crop + y) * crop + x] = v;
                }
            }
        }
    }
    Tensor::new(vec![n, c, crop, crop], out)
}
