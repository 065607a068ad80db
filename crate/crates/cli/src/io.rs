use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ddm_core::data::{pixel_to_byte, PIXELS, SIDE};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

fn parent_of(path: &Path) -> CliResult<PathBuf> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
    Ok(parent)
}

fn file_name(path: &Path) -> CliResult<String> {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| CliError::Config(format!("{} has no file name", path.display())))
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let parent = parent_of(path)?;
    let mut tmp = tempfile::Builder::new()
        .prefix(&format!(".{}.", file_name(path)?))
        .tempfile_in(&parent)
        .map_err(|e| CliError::io(&parent, e))?;
    tmp.write_all(bytes)
        .map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// A fresh, empty directory next to `target` for staging its contents.
pub fn staging_dir(target: &Path) -> CliResult<PathBuf> {
    let parent = parent_of(target)?;
    let dir = tempfile::Builder::new()
        .prefix(&format!(".{}.staging.", file_name(target)?))
        .tempdir_in(&parent)
        .map_err(|e| CliError::io(&parent, e))?;
    Ok(dir.keep())
}

/// Moves `staging` to `target`, replacing any previous directory there.
pub fn replace_dir_atomically(staging: &Path, target: &Path) -> CliResult<()> {
    if target.exists() {
        let parent = parent_of(target)?;
        let old = tempfile::Builder::new()
            .prefix(&format!(".{}.old.", file_name(target)?))
            .tempdir_in(&parent)
            .map_err(|e| CliError::io(&parent, e))?
            .keep();
        fs::remove_dir(&old).map_err(|e| CliError::io(&old, e))?;
        fs::rename(target, &old).map_err(|e| CliError::io(target, e))?;
        fs::rename(staging, target).map_err(|e| CliError::io(target, e))?;
        fs::remove_dir_all(&old).map_err(|e| CliError::io(&old, e))?;
    } else {
        fs::rename(staging, target).map_err(|e| CliError::io(target, e))?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Grid of `⌈√n⌉` columns by `⌈n / cols⌉` rows.
pub fn grid_dims(n: usize) -> (usize, usize) {
    let cols = (n as f64).sqrt().ceil() as usize;
    let cols = cols.max(1);
    (cols, n.div_ceil(cols))
}

fn encode_png(
    width: usize,
    height: usize,
    color: png::ColorType,
    data: &[u8],
) -> CliResult<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| CliError::Png(e.to_string()))?;
        writer
            .write_image_data(data)
            .map_err(|e| CliError::Png(e.to_string()))?;
    }
    Ok(out)
}

/// Tiles 28×28 images in `[-1, 1]` into one grayscale PNG; empty cells are black.
pub fn image_grid_png(images: &[f32]) -> CliResult<Vec<u8>> {
    let n = images.len() / PIXELS;
    if n == 0 || images.len() % PIXELS != 0 {
        return Err(CliError::Mismatch(
            "image grid needs whole 28x28 images".into(),
        ));
    }
    let (cols, rows) = grid_dims(n);
    let (w, h) = (cols * SIDE, rows * SIDE);
    let mut buf = vec![0u8; w * h];
    for (k, img) in images.chunks_exact(PIXELS).enumerate() {
        let (gx, gy) = ((k % cols) * SIDE, (k / cols) * SIDE);
        for y in 0..SIDE {
            for x in 0..SIDE {
                buf[(gy + y) * w + gx + x] = pixel_to_byte(img[y * SIDE + x]);
            }
        }
    }
    encode_png(w, h, png::ColorType::Grayscale, &buf)
}

/// One bar per value, with a whisker from `lo` to `hi`; all inputs in `[0, 1]`.
pub fn bar_chart_png(bars: &[(f64, f64, f64)]) -> CliResult<Vec<u8>> {
    const BAR: usize = 40;
    const GAP: usize = 20;
    const HEIGHT: usize = 240;
    let w = GAP + bars.len().max(1) * (BAR + GAP);
    let mut buf = vec![255u8; w * HEIGHT * 3];
    let mut put = |x: usize, y: usize, rgb: [u8; 3]| {
        if x < w && y < HEIGHT {
            let i = (y * w + x) * 3;
            buf[i..i + 3].copy_from_slice(&rgb);
        }
    };
    let level = |v: f64| HEIGHT - 1 - ((v.clamp(0.0, 1.0) * (HEIGHT - 1) as f64).round() as usize);
    for x in 0..w {
        put(x, HEIGHT - 1, [0, 0, 0]);
    }
    for (i, &(median, lo, hi)) in bars.iter().enumerate() {
        let x0 = GAP + i * (BAR + GAP);
        for y in level(median)..HEIGHT - 1 {
            for x in x0..x0 + BAR {
                put(x, y, [70, 110, 180]);
            }
        }
        let mid = x0 + BAR / 2;
        for y in level(hi)..=level(lo) {
            put(mid, y, [200, 40, 40]);
        }
        for x in mid - 6..=mid + 6 {
            put(x, level(hi), [200, 40, 40]);
            put(x, level(lo), [200, 40, 40]);
        }
    }
    encode_png(w, HEIGHT, png::ColorType::Rgb, &buf)
}

/// Metadata written next to a raw sample dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDumpInfo {
    pub condition_id: usize,
    pub condition: String,
    pub seed: u64,
    pub count: usize,
    pub shape: Vec<usize>,
    pub checkpoint_fingerprint: String,
}

pub fn sample_stem(condition_id: usize, seed: u64) -> String {
    format!("samples_c{condition_id:02}_s{seed}")
}

/// Writes `<stem>.f32`, `<stem>.json` and `<stem>.png` into `dir`.
pub fn write_sample_dump(dir: &Path, info: &SampleDumpInfo, images: &[f32]) -> CliResult<PathBuf> {
    let stem = sample_stem(info.condition_id, info.seed);
    let raw: Vec<u8> = images.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_atomic(&dir.join(format!("{stem}.f32")), &raw)?;
    write_atomic(&dir.join(format!("{stem}.png")), &image_grid_png(images)?)?;
    write_json(&dir.join(format!("{stem}.json")), info)?;
    Ok(dir.join(format!("{stem}.f32")))
}

/// Reads every dump in `dir`, ordered by file name.
pub fn read_sample_dumps(dir: &Path) -> CliResult<Vec<(SampleDumpInfo, Vec<f32>)>> {
    let mut sidecars: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name()
                    .is_some_and(|n| n.to_string_lossy().starts_with("samples_c"))
        })
        .collect();
    sidecars.sort();
    let mut out = Vec::with_capacity(sidecars.len());
    for side in sidecars {
        let info: SampleDumpInfo = read_json(&side)?;
        let raw_path = side.with_extension("f32");
        let raw = fs::read(&raw_path).map_err(|e| CliError::io(&raw_path, e))?;
        if raw.len() != info.count * PIXELS * 4 {
            return Err(CliError::Mismatch(format!(
                "{} holds {} bytes, sidecar promises {} images",
                raw_path.display(),
                raw.len(),
                info.count
            )));
        }
        let images = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        out.push((info, images));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_layout() {
        assert_eq!(grid_dims(16), (4, 4));
        assert_eq!(grid_dims(10), (4, 3));
        assert_eq!(grid_dims(1), (1, 1));
        assert_eq!(grid_dims(500), (23, 22));
    }

    #[test]
    fn png_has_grid_size() {
        let png_bytes = image_grid_png(&vec![0.0; 10 * PIXELS]).unwrap();
        let decoder = png::Decoder::new(std::io::Cursor::new(png_bytes));
        let reader = decoder.read_info().unwrap();
        let info = reader.info();
        assert_eq!((info.width, info.height), (4 * 28, 3 * 28));
    }

    #[test]
    fn atomic_write_replaces() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("sub/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(tmp.path().join("sub")).unwrap().count(), 1);
    }

    #[test]
    fn directory_replacement() {
        let tmp = tempfile::tempdir().unwrap();
        let target = tmp.path().join("ck");
        for round in 0..2 {
            let s = staging_dir(&target).unwrap();
            fs::write(s.join("f"), [round]).unwrap();
            replace_dir_atomically(&s, &target).unwrap();
            assert_eq!(fs::read(target.join("f")).unwrap(), [round]);
        }
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 1);
    }
}
