use std::fs;
use std::path::Path;

use ndarray::{Array3, ArrayView3};

use crate::error::{Error, Result};
use crate::kv::{format_kv, parse_kv, require};

pub const RAW_FRAMES_FILE: &str = "frames.raw";
pub const RAW_MANIFEST_FILE: &str = "frames.manifest";

/// Dimensions of a contiguous raw frame file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameManifest {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub count: usize,
}

impl FrameManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let map = parse_kv(text)?;
        let dtype: String = require(&map, "dtype")?;
        if dtype != "u8" {
            return Err(Error::Validation(format!("unsupported frame dtype {dtype:?}")));
        }
        let m = Self {
            width: require(&map, "width")?,
            height: require(&map, "height")?,
            channels: require(&map, "channels")?,
            count: require(&map, "count")?,
        };
        if m.channels != 3 {
            return Err(Error::Validation(format!("expected 3 channels, got {}", m.channels)));
        }
        if m.width == 0 || m.height == 0 {
            return Err(Error::Validation("frame dimensions must be positive".into()));
        }
        m.byte_len()
            .ok_or_else(|| Error::Validation("frame store size overflows".into()))?;
        Ok(m)
    }

    pub fn format(&self) -> String {
        format_kv([
            ("width", self.width.to_string()),
            ("height", self.height.to_string()),
            ("channels", self.channels.to_string()),
            ("count", self.count.to_string()),
            ("dtype", "u8".to_string()),
        ])
    }

    pub fn byte_len(&self) -> Option<usize> {
        self.width
            .checked_mul(self.height)?
            .checked_mul(self.channels)?
            .checked_mul(self.count)
    }
}

/// RGB8 frames of one trial, stored contiguously as `(frame, y, x, channel)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frames {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Frames {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        let frame = width * height * 3;
        if frame == 0 || !data.len().is_multiple_of(frame) {
            return Err(Error::Shape(format!(
                "{} bytes is not a whole number of {width}x{height} RGB frames",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.frame_bytes()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn frame_bytes(&self) -> usize {
        self.width * self.height * 3
    }

    /// Frame `i` as an `(H, W, 3)` view.
    pub fn frame(&self, i: usize) -> ArrayView3<'_, u8> {
        let n = self.frame_bytes();
        ArrayView3::from_shape((self.height, self.width, 3), &self.data[i * n..(i + 1) * n]).expect("frame slice")
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    /// Keeps frames at the given indices, in order.
    pub fn select(&self, indices: impl IntoIterator<Item = usize>) -> Self {
        let n = self.frame_bytes();
        let mut data = Vec::new();
        for i in indices {
            data.extend_from_slice(&self.data[i * n..(i + 1) * n]);
        }
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn manifest(&self) -> FrameManifest {
        FrameManifest {
            width: self.width,
            height: self.height,
            channels: 3,
            count: self.len(),
        }
    }

    pub fn write_raw(&self, dir: &Path) -> Result<()> {
        let raw = dir.join(RAW_FRAMES_FILE);
        fs::write(&raw, &self.data).map_err(|e| Error::io(&raw, e))?;
        let man = dir.join(RAW_MANIFEST_FILE);
        fs::write(&man, self.manifest().format()).map_err(|e| Error::io(&man, e))
    }

    pub fn read_raw(dir: &Path) -> Result<Self> {
        let man = dir.join(RAW_MANIFEST_FILE);
        let text = fs::read_to_string(&man).map_err(|e| Error::io(&man, e))?;
        let manifest = FrameManifest::parse(&text)?;
        let raw = dir.join(RAW_FRAMES_FILE);
        let data = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
        Self::from_raw(manifest, data)
    }

    pub fn from_raw(manifest: FrameManifest, data: Vec<u8>) -> Result<Self> {
        if Some(data.len()) != manifest.byte_len() {
            return Err(Error::Validation(format!(
                "raw frame file has {} bytes, manifest declares {:?}",
                data.len(),
                manifest.byte_len()
            )));
        }
        Ok(Self {
            width: manifest.width,
            height: manifest.height,
            data,
        })
    }

    /// Loads every `*.png` in `dir` in lexicographic filename order.
    pub fn read_png_dir(dir: &Path) -> Result<Self> {
        let mut names: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
            .collect();
        names.sort();
        let mut dims = None;
        let mut data = Vec::new();
        for path in &names {
            let img = image::open(path)?.to_rgb8();
            let d = img.dimensions();
            if *dims.get_or_insert(d) != d {
                return Err(Error::Validation(format!(
                    "{} is {}x{}, expected {:?}",
                    path.display(),
                    d.0,
                    d.1,
                    dims
                )));
            }
            data.extend_from_slice(img.as_raw());
        }
        let (w, h) = dims.ok_or_else(|| Error::Validation(format!("no PNG frames in {}", dir.display())))?;
        Self::new(w as usize, h as usize, data)
    }

    /// Writes frames as zero-padded `000000.png`, `000001.png`, …
    pub fn write_png_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let n = self.frame_bytes();
        for (i, chunk) in self.data.chunks(n).enumerate() {
            let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, chunk.to_vec())
                .expect("frame buffer size");
            img.save(dir.join(format!("{i:06}.png")))?;
        }
        Ok(())
    }

    /// Frame `i` as normalized `(H, W, 3)` intensities in `[0, 1]`.
    pub fn frame_f32(&self, i: usize) -> Array3<f32> {
        self.frame(i).mapv(|v| v as f32 / 255.0)
    }
}
