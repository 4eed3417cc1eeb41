//! Dense float images and binary maps.
//!
//! Images are stored row-major, channel-interleaved (`H×W×C`), with values
//! nominally in `[0, 1]`. Persisted artifacts are 8-bit PNGs; [`Image::quantize`]
//! reproduces exactly what a PNG round trip yields.

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use image::imageops::FilterType;
use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{bail_dim, Error, Result};

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            bail_dim!(
                "buffer of {} values does not hold {width}x{height}x{channels}",
                data.len()
            );
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// Builds an image from `f(x, y, c)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Values of one pixel across channels.
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if !self.same_shape(other) {
            bail_dim!(
                "{}x{}x{} vs {}x{}x{}",
                self.width,
                self.height,
                self.channels,
                other.width,
                other.height,
                other.channels
            );
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn clamped(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    /// Grayscale version using BT.601 weights. Single-channel images are
    /// returned as-is.
    pub fn luminance(&self) -> Image {
        match self.channels {
            1 => self.clone(),
            3 => {
                let data = self
                    .data
                    .chunks_exact(3)
                    .map(|p| {
                        LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2]
                    })
                    .collect();
                Image {
                    width: self.width,
                    height: self.height,
                    channels: 1,
                    data,
                }
            }
            c => panic!("luminance of a {c}-channel image"),
        }
    }

    /// Rounds every value to the nearest 8-bit level, as a PNG round trip would.
    pub fn quantize(&self) -> Image {
        let data = self.data.iter().map(|&v| to_u8(v) as f32 / 255.0).collect();
        Image {
            data,
            ..self.clone()
        }
    }

    /// Columns `[x0, x0 + width)`.
    pub fn crop_columns(&self, x0: usize, width: usize) -> Result<Image> {
        if x0 + width > self.width {
            bail_dim!("columns {x0}..{} exceed width {}", x0 + width, self.width);
        }
        let mut data = Vec::with_capacity(width * self.height * self.channels);
        for y in 0..self.height {
            let start = (y * self.width + x0) * self.channels;
            data.extend_from_slice(&self.data[start..start + width * self.channels]);
        }
        Image::new(width, self.height, self.channels, data)
    }

    pub fn from_rgb8(img: &RgbImage) -> Image {
        let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        Image {
            width: img.width() as usize,
            height: img.height() as usize,
            channels: 3,
            data,
        }
    }

    pub fn from_luma8(img: &GrayImage) -> Image {
        let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        Image {
            width: img.width() as usize,
            height: img.height() as usize,
            channels: 1,
            data,
        }
    }

    /// 8-bit RGB rendering. Grayscale images are replicated across channels.
    pub fn to_rgb8(&self) -> RgbImage {
        let mut out: RgbImage = ImageBuffer::new(self.width as u32, self.height as u32);
        for (x, y, px) in out.enumerate_pixels_mut() {
            let p = self.pixel(x as usize, y as usize);
            *px = match self.channels {
                1 => Rgb([to_u8(p[0]); 3]),
                _ => Rgb([to_u8(p[0]), to_u8(p[1]), to_u8(p[2])]),
            };
        }
        out
    }

    pub fn to_luma8(&self) -> GrayImage {
        let gray = self.luminance();
        GrayImage::from_raw(
            self.width as u32,
            self.height as u32,
            gray.data.iter().map(|&v| to_u8(v)).collect(),
        )
        .expect("buffer size matches dimensions")
    }

    /// Loads an 8-bit PNG as RGB, optionally resizing to `size×size` with a
    /// bilinear (triangle) filter.
    pub fn load_rgb(path: &Path, size: Option<usize>) -> Result<Image> {
        let img = image::open(path)?.to_rgb8();
        let img = match size {
            Some(s) if img.width() as usize != s || img.height() as usize != s => {
                image::imageops::resize(&img, s as u32, s as u32, FilterType::Triangle)
            }
            _ => img,
        };
        Ok(Image::from_rgb8(&img))
    }

    /// Bilinear (triangle filter) resize through the 8-bit representation.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Image {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let resized = |img: &RgbImage| {
            image::imageops::resize(img, width as u32, height as u32, FilterType::Triangle)
        };
        match self.channels {
            1 => Image::from_rgb8(&resized(&self.to_rgb8()))
                .luminance()
                .quantize(),
            _ => Image::from_rgb8(&resized(&self.to_rgb8())),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        match self.channels {
            1 => {
                let img: ImageBuffer<Luma<u8>, Vec<u8>> = GrayImage::from_raw(
                    self.width as u32,
                    self.height as u32,
                    self.data.iter().map(|&v| to_u8(v)).collect(),
                )
                .expect("buffer size matches dimensions");
                img.save(path)?;
            }
            _ => self.to_rgb8().save(path)?,
        }
        Ok(())
    }

    /// `1×C×H×W` tensor.
    pub fn to_tensor(&self, device: &Device, dtype: DType) -> Result<Tensor> {
        let t = Tensor::from_slice(&self.data, (self.height, self.width, self.channels), device)?
            .permute((2, 0, 1))?
            .unsqueeze(0)?
            .to_dtype(dtype)?
            .contiguous()?;
        Ok(t)
    }

    /// Stacks same-shaped images into an `N×C×H×W` tensor.
    pub fn batch_to_tensor(images: &[&Image], device: &Device, dtype: DType) -> Result<Tensor> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty image batch".into()))?;
        let mut ts = Vec::with_capacity(images.len());
        for img in images {
            first.ensure_same_shape(img)?;
            ts.push(img.to_tensor(device, dtype)?);
        }
        Ok(Tensor::cat(&ts, 0)?)
    }

    /// Inverse of [`Image::to_tensor`]; accepts `C×H×W` or `1×C×H×W`.
    pub fn from_tensor(t: &Tensor) -> Result<Image> {
        let t = match t.rank() {
            4 => t.squeeze(0)?,
            3 => t.clone(),
            r => bail_dim!("expected rank 3 or 4 tensor, got rank {r}"),
        };
        let (c, h, w) = t.dims3()?;
        let data = t
            .permute((1, 2, 0))?
            .to_dtype(DType::F32)?
            .flatten_all()?
            .to_vec1::<f32>()?;
        Image::new(w, h, c, data)
    }
}

#[inline]
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary `H×W` map with values in `{0, 1}`. Used for masks (1 = missing) and
/// edge maps (1 = edge).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMap {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

/// Missing-region mask: 1 marks a missing pixel.
pub type Mask = BinaryMap;

/// Edge map: 1 marks an edge pixel.
pub type EdgeMap = BinaryMap;

impl BinaryMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![1; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y) as u8);
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Fails unless every value is 0 or 1.
    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            bail_dim!("{} values for a {width}x{height} map", data.len());
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument(
                "binary map values must be 0 or 1".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    /// Fraction of set pixels.
    pub fn coverage(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.count() as f64 / self.data.len() as f64
    }

    pub fn matches_image(&self, img: &Image) -> bool {
        self.width == img.width() && self.height == img.height()
    }

    pub fn ensure_matches(&self, img: &Image) -> Result<()> {
        if !self.matches_image(img) {
            bail_dim!(
                "map is {}x{}, image is {}x{}",
                self.width,
                self.height,
                img.width(),
                img.height()
            );
        }
        Ok(())
    }

    pub fn to_image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }

    /// Thresholds a single-channel image at 0.5 (`>= 0.5` maps to 1).
    pub fn threshold(img: &Image) -> Result<Self> {
        if img.channels() != 1 {
            bail_dim!("expected single-channel image, got {}", img.channels());
        }
        Ok(Self {
            width: img.width(),
            height: img.height(),
            data: img.data().iter().map(|&v| (v >= 0.5) as u8).collect(),
        })
    }

    pub fn to_tensor(&self, device: &Device, dtype: DType) -> Result<Tensor> {
        self.to_image().to_tensor(device, dtype)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_image().save_png(path)
    }
}
