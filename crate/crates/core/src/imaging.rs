//! Pixel-exact raster operations on 8-bit RGB images.

use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::{GridSpec, Permutation};
use crate::taskgen::BoxInstance;

/// An 8-bit RGB image. Alpha is dropped and grayscale promoted on load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage(RgbImage);

impl RasterImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self(RgbImage::new(width, height))
    }

    pub fn from_fn(width: u32, height: u32, f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut f = f;
        Self(RgbImage::from_fn(width, height, |x, y| Rgb(f(x, y))))
    }

    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        Self(RgbImage::from_pixel(width, height, Rgb(color)))
    }

    pub fn from_rgb(img: RgbImage) -> Self {
        Self(img)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_owned(),
            source,
        })?;
        Ok(Self(img.to_rgb8()))
    }

    /// Writes a PNG regardless of the extension of `path`.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.0
            .save_with_format(path, ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_owned(),
                source,
            })
    }

    pub fn width(&self) -> u32 {
        self.0.width()
    }

    pub fn height(&self) -> u32 {
        self.0.height()
    }

    pub fn dims(&self) -> (u32, u32) {
        self.0.dimensions()
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        self.0.get_pixel(x, y).0
    }

    pub fn as_rgb(&self) -> &RgbImage {
        &self.0
    }

    pub fn into_rgb(self) -> RgbImage {
        self.0
    }

    /// Copy of the pixels inside `rect`.
    pub fn crop(&self, rect: PixelRect) -> Result<Self> {
        self.check_rect(rect)?;
        let mut out = RgbImage::new(rect.width(), rect.height());
        copy_block(&self.0, rect.x1, rect.y1, &mut out, 0, 0, rect.width(), rect.height());
        Ok(Self(out))
    }

    fn check_rect(&self, rect: PixelRect) -> Result<()> {
        if rect.x2 > self.width() || rect.y2 > self.height() {
            return Err(Error::invalid_input(format!(
                "rect {rect:?} outside {}x{} image",
                self.width(),
                self.height()
            )));
        }
        Ok(())
    }
}

/// Row-wise copy of a `w x h` block between buffers.
#[allow(clippy::too_many_arguments)]
fn copy_block(src: &RgbImage, sx: u32, sy: u32, dst: &mut RgbImage, dx: u32, dy: u32, w: u32, h: u32) {
    let row_bytes = w as usize * 3;
    let src_stride = src.width() as usize * 3;
    let dst_stride = dst.width() as usize * 3;
    let src_raw = src.as_raw();
    let dst_raw: &mut [u8] = dst;
    for r in 0..h as usize {
        let s = (sy as usize + r) * src_stride + sx as usize * 3;
        let d = (dy as usize + r) * dst_stride + dx as usize * 3;
        dst_raw[d..d + row_bytes].copy_from_slice(&src_raw[s..s + row_bytes]);
    }
}

/// Integer pixel rectangle `[x1, x2) x [y1, y2)`, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl PixelRect {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Result<Self> {
        if x1 >= x2 || y1 >= y2 {
            return Err(Error::invalid_argument(format!(
                "empty rect ({x1},{y1},{x2},{y2})"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn from_origin(x: u32, y: u32, width: u32, height: u32) -> Result<Self> {
        Self::new(x, y, x + width, y + height)
    }

    pub fn width(&self) -> u32 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> u32 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    pub fn contains(&self, other: &PixelRect) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && other.x2 <= self.x2 && other.y2 <= self.y2
    }

    pub fn as_array(&self) -> [i64; 4] {
        [self.x1, self.y1, self.x2, self.y2].map(i64::from)
    }

    /// `"x1,y1,x2,y2"`, the answer format of box questions.
    pub fn render(&self) -> String {
        format!("{},{},{},{}", self.x1, self.y1, self.x2, self.y2)
    }
}

/// Separator bands drawn between puzzle pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskConfig {
    pub gap_px: u32,
    pub fill: [u8; 3],
}

impl MaskConfig {
    pub const DEFAULT_GAP: u32 = 4;

    pub fn disabled() -> Self {
        Self {
            gap_px: 0,
            fill: [0, 0, 0],
        }
    }

    pub fn with_gap(gap_px: u32) -> Self {
        Self {
            gap_px,
            fill: [0, 0, 0],
        }
    }

    pub fn enabled(&self) -> bool {
        self.gap_px > 0
    }
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self::disabled()
    }
}

/// Drops bottom rows and right columns so the image divides evenly into `grid`.
pub fn trim_to_grid(img: &RasterImage, grid: GridSpec) -> Result<RasterImage> {
    let (w, h) = img.dims();
    if h < grid.rows() || w < grid.cols() {
        return Err(Error::invalid_input(format!(
            "{w}x{h} image is smaller than grid {grid}"
        )));
    }
    let tw = w / grid.cols() * grid.cols();
    let th = h / grid.rows() * grid.rows();
    if (tw, th) == (w, h) {
        return Ok(img.clone());
    }
    img.crop(PixelRect { x1: 0, y1: 0, x2: tw, y2: th })
}

/// Cuts an evenly divisible image into `m*n` patches in row-major order.
pub fn slice_patches(img: &RasterImage, grid: GridSpec) -> Result<Vec<RasterImage>> {
    let (w, h) = img.dims();
    if w % grid.cols() != 0 || h % grid.rows() != 0 {
        return Err(Error::invalid_input(format!(
            "{w}x{h} image does not divide into grid {grid}; trim it first"
        )));
    }
    slice_with_gap(img, grid, w / grid.cols(), h / grid.rows(), 0)
}

/// Cuts a composed (possibly masked) puzzle image back into its slot patches.
pub fn slice_composed(
    img: &RasterImage,
    grid: GridSpec,
    patch_w: u32,
    patch_h: u32,
    mask: MaskConfig,
) -> Result<Vec<RasterImage>> {
    let expected = composed_dims(grid, patch_w, patch_h, mask);
    if img.dims() != expected {
        return Err(Error::invalid_input(format!(
            "composed image is {:?}, expected {expected:?}",
            img.dims()
        )));
    }
    slice_with_gap(img, grid, patch_w, patch_h, mask.gap_px)
}

fn slice_with_gap(
    img: &RasterImage,
    grid: GridSpec,
    patch_w: u32,
    patch_h: u32,
    gap: u32,
) -> Result<Vec<RasterImage>> {
    let mut out = Vec::with_capacity(grid.piece_count() as usize);
    for r in 0..grid.rows() {
        for c in 0..grid.cols() {
            let x = c * (patch_w + gap);
            let y = r * (patch_h + gap);
            out.push(img.crop(PixelRect::from_origin(x, y, patch_w, patch_h)?)?);
        }
    }
    Ok(out)
}

/// `(width, height)` of a composed puzzle image.
pub fn composed_dims(grid: GridSpec, patch_w: u32, patch_h: u32, mask: MaskConfig) -> (u32, u32) {
    (
        patch_w * grid.cols() + (grid.cols() - 1) * mask.gap_px,
        patch_h * grid.rows() + (grid.rows() - 1) * mask.gap_px,
    )
}

/// Lays out `patches` so that shuffled slot `x` shows patch
/// `perm.origin_of(x)`.
pub fn compose_shuffled(
    patches: &[RasterImage],
    perm: &Permutation,
    grid: GridSpec,
    mask: MaskConfig,
) -> Result<RasterImage> {
    let n = grid.piece_count() as usize;
    if patches.len() != n || perm.len() != n {
        return Err(Error::invalid_input(format!(
            "grid {grid} needs {n} patches and a {n}-permutation, got {} and {}",
            patches.len(),
            perm.len()
        )));
    }
    let (pw, ph) = patches[0].dims();
    if let Some(bad) = patches.iter().position(|p| p.dims() != (pw, ph)) {
        return Err(Error::invalid_input(format!(
            "patch {} is {:?}, expected {:?}",
            bad + 1,
            patches[bad].dims(),
            (pw, ph)
        )));
    }
    let (w, h) = composed_dims(grid, pw, ph, mask);
    let mut out = RgbImage::from_pixel(w, h, Rgb(mask.fill));
    for (slot, &origin) in perm.as_slice().iter().enumerate() {
        let slot = slot as u32;
        let x = (slot % grid.cols()) * (pw + mask.gap_px);
        let y = (slot / grid.cols()) * (ph + mask.gap_px);
        copy_block(patches[origin as usize - 1].as_rgb(), 0, 0, &mut out, x, y, pw, ph);
    }
    Ok(RasterImage(out))
}

/// Inverse of [`compose_shuffled`]: restores the unshuffled image.
pub fn unshuffle(
    composed: &RasterImage,
    perm: &Permutation,
    grid: GridSpec,
    patch_w: u32,
    patch_h: u32,
    mask: MaskConfig,
) -> Result<RasterImage> {
    let slots = slice_composed(composed, grid, patch_w, patch_h, mask)?;
    compose_shuffled(&slots, &perm.inverse(), grid, MaskConfig::disabled())
}

/// Renders a box puzzle: slot `s` receives the pixels of the patch rect of
/// region `swap_perm.origin_of(s)`. Pixels outside the patch rects are
/// untouched.
pub fn render_box_swap(img: &RasterImage, plan: &BoxInstance) -> Result<RasterImage> {
    let n = plan.grid.piece_count() as usize;
    if plan.patch_rects.len() != n || plan.swap_perm.len() != n {
        return Err(Error::invalid_input(format!(
            "box plan for grid {} needs {n} patch rects",
            plan.grid
        )));
    }
    let first = plan.patch_rects[0];
    for rect in &plan.patch_rects {
        img.check_rect(*rect)?;
        if (rect.width(), rect.height()) != (first.width(), first.height()) {
            return Err(Error::invalid_input("box patches differ in size"));
        }
    }
    let mut out = img.0.clone();
    for (slot, &origin) in plan.swap_perm.as_slice().iter().enumerate() {
        let src = plan.patch_rects[origin as usize - 1];
        let dst = plan.patch_rects[slot];
        copy_block(&img.0, src.x1, src.y1, &mut out, dst.x1, dst.y1, src.width(), src.height());
    }
    Ok(RasterImage(out))
}
