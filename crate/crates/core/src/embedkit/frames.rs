//! Frame ingestion: raw frame files, image directories and synthetic videos.
//!
//! Raw frame file layout (all little-endian):
//!
//! ```text
//! magic  b"RAWF"
//! u32    height
//! u32    width
//! u32    frame count
//! f32    count × height × width × 3 values in [0, 1], row-major (y, x, channel)
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use numkit::SplitMix64;
use rand::Rng;

use crate::error::{invalid, Error, Result};

pub const RAW_MAGIC: &[u8; 4] = b"RAWF";

/// One RGB image, `height × width × 3` floats in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(invalid(format!(
                "frame of {height}x{width} needs {} values, got {}",
                height * width * 3,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Self { height, width, data }
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let o = (y * self.width + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }
}

#[derive(Clone, Debug)]
pub struct VideoFrames {
    pub video_id: String,
    pub frames: Vec<Frame>,
    pub fps: f64,
    pub duration_s: f64,
}

impl VideoFrames {
    pub fn new(video_id: impl Into<String>, frames: Vec<Frame>, fps: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(invalid("video has no frames"));
        }
        if !(fps > 0.0) {
            return Err(invalid(format!("fps must be positive, got {fps}")));
        }
        let (h, w) = (frames[0].height, frames[0].width);
        if frames.iter().any(|f| f.height != h || f.width != w) {
            return Err(invalid("frames differ in size"));
        }
        let duration_s = frames.len() as f64 / fps;
        Ok(Self { video_id: video_id.into(), frames, fps, duration_s })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Timestamp in seconds of source frame `i`.
    pub fn timestamp(&self, i: usize) -> f64 {
        i as f64 / self.fps
    }
}

pub fn write_raw_frames(path: &Path, frames: &[Frame]) -> Result<()> {
    let first = frames.first().ok_or_else(|| invalid("no frames to write"))?;
    let mut out = Vec::with_capacity(16 + frames.len() * first.data.len() * 4);
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(first.height as u32).to_le_bytes());
    out.extend_from_slice(&(first.width as u32).to_le_bytes());
    out.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    for f in frames {
        if f.height != first.height || f.width != first.width {
            return Err(invalid("frames differ in size"));
        }
        for v in &f.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_raw_frames(path: &Path, video_id: &str, fps: f64) -> Result<VideoFrames> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..4] != RAW_MAGIC {
        return Err(Error::Format(format!("{}: not a raw frame file", path.display())));
    }
    let word = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize;
    let (h, w, count) = (word(4), word(8), word(12));
    let per = h * w * 3;
    let need = 16 + count * per * 4;
    if bytes.len() != need {
        return Err(Error::Format(format!(
            "{}: expected {need} bytes for {count} frames of {h}x{w}, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let mut frames = Vec::with_capacity(count);
    for f in 0..count {
        let start = 16 + f * per * 4;
        let data = bytes[start..start + per * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        frames.push(Frame::new(h, w, data)?);
    }
    VideoFrames::new(video_id, frames, fps)
}

/// Loads every PNG/JPEG in `dir`, in file-name order.
pub fn read_image_dir(dir: &Path, video_id: &str, fps: f64) -> Result<VideoFrames> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    paths.sort();
    let mut frames = Vec::with_capacity(paths.len());
    for p in paths {
        let img = image::open(&p)
            .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(|b| f32::from(b) / 255.0).collect();
        frames.push(Frame::new(h as usize, w as usize, data)?);
    }
    VideoFrames::new(video_id, frames, fps)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthPattern {
    MovingBlob,
}

/// Parsed form of `frames=K seed=S pattern=moving-blob [size=P] [fps=F]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub frames: usize,
    pub seed: u64,
    pub pattern: SynthPattern,
    pub size: usize,
    pub fps: f64,
}

impl FromStr for SynthSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut spec = SynthSpec { frames: 0, seed: 0, pattern: SynthPattern::MovingBlob, size: 24, fps: 1.0 };
        for part in s.split(|c: char| c.is_whitespace() || c == ',').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| invalid(format!("synth option `{part}` is not key=value")))?;
            let bad = || invalid(format!("bad value for {k}: {v}"));
            match k {
                "frames" => spec.frames = v.parse().map_err(|_| bad())?,
                "seed" => spec.seed = v.parse().map_err(|_| bad())?,
                "size" => spec.size = v.parse().map_err(|_| bad())?,
                "fps" => spec.fps = v.parse().map_err(|_| bad())?,
                "pattern" => {
                    spec.pattern = match v {
                        "moving-blob" => SynthPattern::MovingBlob,
                        other => return Err(invalid(format!("unknown synth pattern {other}"))),
                    }
                }
                other => return Err(invalid(format!("unknown synth option {other}"))),
            }
        }
        if spec.frames == 0 {
            return Err(invalid("synth video needs frames >= 1"));
        }
        Ok(spec)
    }
}

/// A seeded Gaussian blob drifting across a flat background.
pub fn synth_video(spec: &SynthSpec, video_id: &str) -> Result<VideoFrames> {
    let mut rng = SplitMix64::derive(spec.seed, "synth-video");
    let n = spec.size as f32;
    let bg: f32 = rng.random_range(0.05..0.3);
    let color = [rng.random_range(0.4f32..1.0), rng.random_range(0.4f32..1.0), rng.random_range(0.4f32..1.0)];
    let start = (rng.random_range(0.1..0.9) * n, rng.random_range(0.1..0.9) * n);
    let end = (rng.random_range(0.1..0.9) * n, rng.random_range(0.1..0.9) * n);
    let radius = 0.15 * n;
    let frames = (0..spec.frames)
        .map(|f| {
            let t = if spec.frames > 1 { f as f32 / (spec.frames - 1) as f32 } else { 0.0 };
            let cy = start.0 + (end.0 - start.0) * t;
            let cx = start.1 + (end.1 - start.1) * t;
            let mut data = Vec::with_capacity(spec.size * spec.size * 3);
            for y in 0..spec.size {
                for x in 0..spec.size {
                    let d2 = (y as f32 - cy).powi(2) + (x as f32 - cx).powi(2);
                    let a = (-d2 / (2.0 * radius * radius)).exp();
                    for c in color {
                        data.push((bg * (1.0 - a) + c * a).clamp(0.0, 1.0));
                    }
                }
            }
            Frame { height: spec.size, width: spec.size, data }
        })
        .collect();
    VideoFrames::new(video_id, frames, spec.fps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_spec_parses_cli_form() {
        let s: SynthSpec = "frames=12 seed=7 pattern=moving-blob".parse().unwrap();
        assert_eq!(s.frames, 12);
        assert_eq!(s.seed, 7);
        assert!("frames=0 seed=1".parse::<SynthSpec>().is_err());
        assert!("frames=3 pattern=spiral".parse::<SynthSpec>().is_err());
    }

    #[test]
    fn raw_file_round_trip() {
        let spec: SynthSpec = "frames=3 seed=2 size=8".parse().unwrap();
        let v = synth_video(&spec, "v").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.raw");
        write_raw_frames(&p, &v.frames).unwrap();
        let back = read_raw_frames(&p, "v", 1.0).unwrap();
        assert_eq!(back.frames, v.frames);
        assert_eq!(back.duration_s, 3.0);
    }

    #[test]
    fn raw_file_rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.raw");
        fs::write(&p, b"NOPE0000000000000000").unwrap();
        assert!(read_raw_frames(&p, "x", 1.0).is_err());
        let mut ok = Vec::from(&RAW_MAGIC[..]);
        for v in [2u32, 2, 1] {
            ok.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&p, &ok).unwrap();
        assert!(read_raw_frames(&p, "x", 1.0).is_err());
    }

    #[test]
    fn video_requires_uniform_frames() {
        let a = Frame::filled(4, 4, [0.0; 3]);
        let b = Frame::filled(4, 5, [0.0; 3]);
        assert!(VideoFrames::new("v", vec![a, b], 1.0).is_err());
        assert!(VideoFrames::new("v", vec![], 1.0).is_err());
    }

    #[test]
    fn image_dir_loads_sorted() {
        let dir = tempfile::tempdir().unwrap();
        for (name, level) in [("b.png", 200u8), ("a.png", 10u8)] {
            let img = image::RgbImage::from_pixel(4, 3, image::Rgb([level, level, level]));
            img.save(dir.path().join(name)).unwrap();
        }
        let v = read_image_dir(dir.path(), "dir", 2.0).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!((v.frames[0].height, v.frames[0].width), (3, 4));
        assert!((v.frames[0].data[0] - 10.0 / 255.0).abs() < 1e-6);
        assert_eq!(v.duration_s, 1.0);
    }
}
