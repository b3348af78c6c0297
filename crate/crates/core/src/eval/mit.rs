//! Reader for object directories laid out like the MIT intrinsic images
//! dataset: `diffuse.png`, `shading.png` and `mask.png`, 16-bit linear.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{load_image, load_mask, Transfer};
use crate::raster::{LinearImage, Mask};

#[derive(Clone, Debug, PartialEq)]
pub struct MitObject {
    pub name: String,
    /// The diffuse photograph, used as the fragment.
    pub diffuse: LinearImage,
    /// Reference shading, one channel.
    pub shading: LinearImage,
    pub mask: Mask,
}

/// Loads one object directory.
pub fn load_mit_object(dir: impl AsRef<Path>) -> Result<MitObject> {
    let dir = dir.as_ref();
    let diffuse = load_image(dir.join("diffuse.png"), Transfer::Linear)?;
    let shading = load_image(dir.join("shading.png"), Transfer::Linear)?;
    let mask = load_mask(dir.join("mask.png"))?;
    if diffuse.dims() != mask.dims() || shading.dims() != mask.dims() {
        return Err(Error::mismatch("dataset images differ in size"));
    }
    let diffuse = match diffuse.channels() {
        3 => diffuse,
        1 => {
            let data = diffuse.as_slice().iter().flat_map(|&v| [v; 3]).collect();
            LinearImage::from_vec(diffuse.width(), diffuse.height(), 3, data)?
        }
        c => return Err(Error::mismatch(format!("diffuse image has {c} channels"))),
    };
    let shading = if shading.channels() == 1 {
        shading
    } else {
        // Gray shading stored as RGB: average the channels.
        let c = shading.channels();
        LinearImage::from_fn(shading.dims(), |i| (0..c).map(|ch| shading.get(i, ch)).sum::<f64>() / c as f64)?
    };
    let name = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("object")
        .to_string();
    Ok(MitObject {
        name,
        diffuse,
        shading,
        mask,
    })
}
