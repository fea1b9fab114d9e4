//! Portable float map (grayscale `Pf`) reader and writer.
//!
//! Layout: `Pf\n<width> <height>\n<scale>\n` followed by `width * height`
//! 32-bit floats. A negative scale means little-endian. Rows are stored
//! bottom-to-top, so the first row in the file is the last image row.
//! We always write scale `-1.0`.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::DepthMap;

pub fn write_pfm<W: Write>(out: &mut W, map: &DepthMap) -> std::io::Result<()> {
    write!(out, "Pf\n{} {}\n-1.0\n", map.width, map.height)?;
    let w = map.width as usize;
    let mut buf = Vec::with_capacity(map.values.len() * 4);
    for row in map.values.chunks_exact(w).rev() {
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)
}

pub fn read_pfm<R: BufRead>(input: &mut R) -> std::result::Result<DepthMap, String> {
    let mut header = Vec::new();
    while header.len() < 3 {
        let mut line = String::new();
        if input.read_line(&mut line).map_err(|e| e.to_string())? == 0 {
            return Err("truncated header".into());
        }
        let line = line.trim();
        if !line.is_empty() && !line.starts_with('#') {
            header.push(line.to_string());
        }
    }
    match header[0].as_str() {
        "Pf" => {}
        "PF" => return Err("color PFM not supported for depth maps".into()),
        other => return Err(format!("bad magic '{other}'")),
    }
    let dims: Vec<u32> = header[1]
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| format!("bad dimension '{s}'")))
        .collect::<std::result::Result<_, _>>()?;
    let [width, height] = dims[..] else {
        return Err("expected '<width> <height>'".into());
    };
    let scale: f32 = header[2].parse().map_err(|_| format!("bad scale '{}'", header[2]))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err("scale must be non-zero".into());
    }
    let little = scale < 0.0;
    let n = width as usize * height as usize;
    let mut raw = vec![0u8; n * 4];
    input.read_exact(&mut raw).map_err(|_| "truncated pixel data".to_string())?;
    let mut values = vec![0f32; n];
    let w = width as usize;
    for (file_row, chunk) in raw.chunks_exact(w * 4).enumerate() {
        let row = height as usize - 1 - file_row;
        for (col, b) in chunk.chunks_exact(4).enumerate() {
            let bytes = [b[0], b[1], b[2], b[3]];
            values[row * w + col] = if little {
                f32::from_le_bytes(bytes)
            } else {
                f32::from_be_bytes(bytes)
            };
        }
    }
    Ok(DepthMap { width, height, values })
}

pub fn save(path: &Path, map: &DepthMap) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_pfm(&mut out, map).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<DepthMap> {
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    read_pfm(&mut std::io::BufReader::new(file)).map_err(|msg| Error::Image {
        path: path.to_path_buf(),
        msg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_stored_bottom_to_top() {
        // 2x2: top row (1, 2), bottom row (3, 4)
        let map = DepthMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut bytes = Vec::new();
        write_pfm(&mut bytes, &map).unwrap();
        let header = b"Pf\n2 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        let first = f32::from_le_bytes(bytes[header.len()..header.len() + 4].try_into().unwrap());
        assert_eq!(first, 3.0);
        let back = read_pfm(&mut &bytes[..]).unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn big_endian_input() {
        let mut bytes = b"Pf\n1 2\n1.0\n".to_vec();
        bytes.extend_from_slice(&5.0f32.to_be_bytes());
        bytes.extend_from_slice(&7.0f32.to_be_bytes());
        let map = read_pfm(&mut &bytes[..]).unwrap();
        assert_eq!(map.values, vec![7.0, 5.0]);
    }

    #[test]
    fn sentinels_survive_bit_exact() {
        let map = DepthMap::new(3, 1, vec![f32::NAN, -1.0, 0.25]).unwrap();
        let mut bytes = Vec::new();
        write_pfm(&mut bytes, &map).unwrap();
        let back = read_pfm(&mut &bytes[..]).unwrap();
        assert!(back.values[0].is_nan());
        assert_eq!(back.values[1..], [-1.0, 0.25]);
        assert!(!back.has_depth(0) && !back.has_depth(1) && back.has_depth(2));
    }

    #[test]
    fn truncated_data_rejected() {
        let bytes = b"Pf\n4 4\n-1.0\n\0\0\0\0".to_vec();
        assert!(read_pfm(&mut &bytes[..]).is_err());
        assert!(read_pfm(&mut &b"P6\n1 1\n255\n"[..]).is_err());
    }
}
