//! Image buffers and on-disk formats: 8-bit PNG for color, and a raw
//! little-endian f32 grid with a 16-byte header (magic, width, height) for
//! depth maps.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// RGB image with channels in [0, 1].
pub type RgbImage = Grid<Vector3<f64>>;

pub fn luma(image: &RgbImage) -> Grid<f64> {
    let data = image
        .as_slice()
        .iter()
        .map(|c| (c.x + c.y + c.z) / 3.0)
        .collect();
    Grid::from_vec(image.width(), image.height(), data)
}

pub fn save_png(image: &RgbImage, path: &Path) -> Result<()> {
    let mut buf = image::RgbImage::new(image.width() as u32, image.height() as u32);
    for (i, j, c) in image.iter_pixels() {
        let px = [
            (c.x.clamp(0.0, 1.0) * 255.0).round() as u8,
            (c.y.clamp(0.0, 1.0) * 255.0).round() as u8,
            (c.z.clamp(0.0, 1.0) * 255.0).round() as u8,
        ];
        buf.put_pixel(i as u32, j as u32, image::Rgb(px));
    }
    buf.save(path)
        .map_err(|e| Error::ingestion(path, format!("png encode failed: {e}")))
}

pub fn load_png(path: &Path) -> Result<RgbImage> {
    let img = image::open(path)
        .map_err(|e| Error::ingestion(path, format!("png decode failed: {e}")))?
        .into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Grid::filled(w, h, Vector3::zeros());
    for (i, j, px) in img.enumerate_pixels() {
        *out.get_mut(i as usize, j as usize) = Vector3::new(
            px.0[0] as f64 / 255.0,
            px.0[1] as f64 / 255.0,
            px.0[2] as f64 / 255.0,
        );
    }
    Ok(out)
}

const F32_MAGIC: &[u8; 8] = b"GSLF32G1";

pub fn write_f32_grid(grid: &Grid<f64>, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + grid.len() * 4);
    buf.extend_from_slice(F32_MAGIC);
    buf.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    buf.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    for v in grid.as_slice() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_f32_grid(path: &Path) -> Result<Grid<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[0..8] != F32_MAGIC {
        return Err(Error::ingestion(path, "bad f32 grid magic"));
    }
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if bytes.len() != 16 + w * h * 4 {
        return Err(Error::ingestion(path, "f32 grid size mismatch"));
    }
    let data = (0..w * h)
        .map(|idx| {
            f32::from_le_bytes(bytes[16 + idx * 4..16 + idx * 4 + 4].try_into().unwrap()) as f64
        })
        .collect();
    Ok(Grid::from_vec(w, h, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_quantizes_to_8bit() {
        let dir = tempfile::tempdir().unwrap();
        let mut img: RgbImage = Grid::filled(5, 4, Vector3::zeros());
        for (idx, px) in img.as_mut_slice().iter_mut().enumerate() {
            *px = Vector3::new(
                (idx as f64 * 13.0 % 255.0) / 255.0,
                (idx as f64 * 7.0 % 255.0) / 255.0,
                (idx as f64 * 3.0 % 255.0) / 255.0,
            );
        }
        let path = dir.path().join("img.png");
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        for (a, b) in img.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).amax() < 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn f32_grid_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::from_vec(3, 2, vec![0.0, 1.5, 2.25, -3.0, 4.125, 5.0]);
        let path = dir.path().join("g.f32");
        write_f32_grid(&grid, &path).unwrap();
        let back = read_f32_grid(&path).unwrap();
        assert_eq!(back.as_slice(), grid.as_slice());
        std::fs::write(dir.path().join("bad.f32"), b"short").unwrap();
        assert!(read_f32_grid(&dir.path().join("bad.f32")).is_err());
    }
}
