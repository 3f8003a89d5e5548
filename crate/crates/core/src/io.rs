//! Text and image formats: CSV tables, the plain-text problem container,
//! 16-bit graymaps with a sidecar, and `key=value` configuration files.
//!
//! Floats are written with 17 significant digits, which round-trips every
//! finite `f64` exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::sensing::{ObservationMode, SaturatedObservations, SensingMatrix, Side};

/// `{:.16e}`: one digit before the point and sixteen after.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("not a count: {s:?}")))
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// A CSV table with `# ` comment lines before the header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            comments: Vec::new(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            for line in c.lines() {
                out.push_str("# ");
                out.push_str(line);
                out.push('\n');
            }
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut t = CsvTable::default();
        let mut have_header = false;
        for (ln, line) in text.lines().enumerate() {
            if let Some(c) = line.strip_prefix('#') {
                if !have_header {
                    t.comments.push(c.strip_prefix(' ').unwrap_or(c).to_string());
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            if !have_header {
                t.header = cells;
                have_header = true;
            } else {
                if cells.len() != t.header.len() {
                    return Err(Error::Parse(format!(
                        "line {}: {} cells, header has {}",
                        ln + 1,
                        cells.len(),
                        t.header.len()
                    )));
                }
                t.rows.push(cells);
            }
        }
        if !have_header {
            return Err(Error::Parse("no header line".into()));
        }
        Ok(t)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.render().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Writes a `views x bins` sinogram as CSV, one row per view.
pub fn write_sinogram_csv(path: &Path, values: &[f64], views: usize, bins: usize, comments: &[String]) -> Result<()> {
    if values.len() != views * bins {
        return Err(Error::Dimension(format!("{} values for {views}x{bins}", values.len())));
    }
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    for row in values.chunks(bins.max(1)) {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Reads a sinogram CSV; returns `(values, views, bins)`.
pub fn read_sinogram_csv(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let text = read_text(path)?;
    let mut values = Vec::new();
    let mut bins = None;
    let mut views = 0;
    for (ln, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line.split(',').map(parse_f64).collect::<Result<_>>()?;
        match bins {
            None => bins = Some(row.len()),
            Some(b) if b != row.len() => {
                return Err(Error::Parse(format!(
                    "{}: line {} has {} bins, expected {b}",
                    path.display(),
                    ln + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        values.extend(row);
        views += 1;
    }
    let bins = bins.ok_or_else(|| Error::Parse(format!("{}: empty sinogram", path.display())))?;
    Ok((values, views, bins))
}

/// Plain-text problem container: a `d m n seed` header, the `m` rows of
/// `U`, then one `p psi y s` line per reading (`y` is `+1`, `-1` or `0`).
pub fn render_problem(u: &SensingMatrix, obs: &SaturatedObservations, seed: u64) -> String {
    use crate::linalg::LinearOperator;
    let (m, d) = (u.rows(), u.cols());
    let mut out = format!("{d} {m} {} {seed}\n", obs.saturated_count());
    for i in 0..m {
        let cells: Vec<String> = u.row(i).iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    for i in 0..m {
        let y = match obs.y[i] {
            Some(Side::Upper) => "1",
            Some(Side::Lower) => "-1",
            None => "0",
        };
        out.push_str(&format!(
            "{} {} {} {}\n",
            fmt_f64(obs.p[i]),
            u8::from(obs.psi[i]),
            y,
            fmt_f64(obs.s[i])
        ));
    }
    out
}

pub fn parse_problem(text: &str) -> Result<(SensingMatrix, SaturatedObservations, u64)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Parse("missing header".into()))?
        .split_whitespace()
        .collect();
    if header.len() != 4 {
        return Err(Error::Parse("header must be `d m n seed`".into()));
    }
    let d = parse_usize(header[0])?;
    let m = parse_usize(header[1])?;
    let n = parse_usize(header[2])?;
    let seed = header[3]
        .parse::<u64>()
        .map_err(|_| Error::Parse(format!("bad seed {:?}", header[3])))?;
    let mut data = Vec::with_capacity(m * d);
    for i in 0..m {
        let line = lines.next().ok_or_else(|| Error::Parse(format!("missing matrix row {i}")))?;
        let row: Vec<f64> = line.split_whitespace().map(parse_f64).collect::<Result<_>>()?;
        if row.len() != d {
            return Err(Error::Parse(format!("matrix row {i} has {} entries, expected {d}", row.len())));
        }
        data.extend(row);
    }
    let u = SensingMatrix::from_rows(m, d, data)?;
    let mut obs = SaturatedObservations::all_analog(vec![0.0; m]);
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..m {
        let line = lines.next().ok_or_else(|| Error::Parse(format!("missing reading {i}")))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(Error::Parse(format!("reading {i}: expected `p psi y s`")));
        }
        obs.p[i] = parse_f64(f[0])?;
        obs.psi[i] = match f[1] {
            "0" => false,
            "1" => true,
            other => return Err(Error::Parse(format!("reading {i}: bad psi {other:?}"))),
        };
        obs.y[i] = match f[2] {
            "1" | "+1" => Some(Side::Upper),
            "-1" => Some(Side::Lower),
            "0" => None,
            other => return Err(Error::Parse(format!("reading {i}: bad y {other:?}"))),
        };
        obs.s[i] = parse_f64(f[3])?;
        match obs.y[i] {
            Some(Side::Upper) => hi = obs.s[i],
            Some(Side::Lower) => lo = obs.s[i],
            None => {}
        }
    }
    obs.s_minus = lo;
    obs.s_plus = hi;
    obs.mode = ObservationMode::Clamped;
    obs.validate()?;
    if obs.saturated_count() != n {
        return Err(Error::Parse(format!(
            "header says n={n}, found {} saturated readings",
            obs.saturated_count()
        )));
    }
    Ok((u, obs, seed))
}

pub fn write_problem(path: &Path, u: &SensingMatrix, obs: &SaturatedObservations, seed: u64) -> Result<()> {
    write_file(path, render_problem(u, obs, seed).as_bytes())
}

pub fn read_problem(path: &Path) -> Result<(SensingMatrix, SaturatedObservations, u64)> {
    parse_problem(&read_text(path)?)
}

/// Image metadata stored beside a graymap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageMeta {
    pub nx: usize,
    pub ny: usize,
    pub pixel_size: f64,
    pub window_min: f64,
    pub window_max: f64,
}

/// Sidecar path of a graymap: `img.pgm` -> `img.pgm.txt`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

/// Binary 16-bit graymap (`P5`, maxval 65535, big-endian), values mapped
/// linearly from `[window_min, window_max]` and clamped. Row 0 is the top.
pub fn encode_pgm16(values: &[f64], meta: &ImageMeta) -> Result<Vec<u8>> {
    if values.len() != meta.nx * meta.ny {
        return Err(Error::Dimension(format!(
            "{} values for a {}x{} image",
            values.len(),
            meta.nx,
            meta.ny
        )));
    }
    if !(meta.window_max > meta.window_min) {
        return Err(Error::InvalidSpec("image window must have max > min".into()));
    }
    let mut out = format!("P5\n{} {}\n65535\n", meta.nx, meta.ny).into_bytes();
    let span = meta.window_max - meta.window_min;
    for &v in values {
        let t = ((v - meta.window_min) / span * 65535.0).round();
        let q = if t.is_nan() { 0.0 } else { t.clamp(0.0, 65535.0) } as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    Ok(out)
}

pub fn decode_pgm16(bytes: &[u8], window_min: f64, window_max: f64) -> Result<(Vec<f64>, usize, usize)> {
    // Header: magic, width, height, maxval separated by whitespace, then a
    // single whitespace byte.
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated graymap header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).to_string());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::Parse(format!("not a binary graymap: {:?}", fields[0])));
    }
    let nx = parse_usize(&fields[1])?;
    let ny = parse_usize(&fields[2])?;
    let maxval = parse_usize(&fields[3])?;
    if maxval != 65535 {
        return Err(Error::Parse(format!("expected maxval 65535, got {maxval}")));
    }
    let body = bytes.get(pos..).unwrap_or(&[]);
    if body.len() != 2 * nx * ny {
        return Err(Error::Parse(format!("graymap body has {} bytes, expected {}", body.len(), 2 * nx * ny)));
    }
    let span = window_max - window_min;
    let values = body
        .chunks_exact(2)
        .map(|c| window_min + u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0 * span)
        .collect();
    Ok((values, nx, ny))
}

pub fn render_sidecar(meta: &ImageMeta) -> String {
    format!(
        "nx={}\nny={}\npixel_size={}\nwindow_min={}\nwindow_max={}\n",
        meta.nx,
        meta.ny,
        fmt_f64(meta.pixel_size),
        fmt_f64(meta.window_min),
        fmt_f64(meta.window_max)
    )
}

pub fn write_pgm16(path: &Path, values: &[f64], meta: &ImageMeta) -> Result<()> {
    write_file(path, &encode_pgm16(values, meta)?)?;
    write_file(&sidecar_path(path), render_sidecar(meta).as_bytes())
}

/// Reads a graymap and its sidecar, returning values in original units.
pub fn read_pgm16(path: &Path) -> Result<(Vec<f64>, ImageMeta)> {
    let cfg = parse_config(&read_text(&sidecar_path(path))?)?;
    let get = |k: &str| {
        cfg.get(k)
            .ok_or_else(|| Error::Parse(format!("sidecar missing {k}")))
    };
    let meta = ImageMeta {
        nx: parse_usize(get("nx")?)?,
        ny: parse_usize(get("ny")?)?,
        pixel_size: parse_f64(get("pixel_size")?)?,
        window_min: parse_f64(get("window_min")?)?,
        window_max: parse_f64(get("window_max")?)?,
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (values, nx, ny) = decode_pgm16(&bytes, meta.window_min, meta.window_max)?;
    if (nx, ny) != (meta.nx, meta.ny) {
        return Err(Error::Parse("graymap size disagrees with its sidecar".into()));
    }
    Ok((values, meta))
}

/// Parses `key=value` lines; `#` starts a comment, blank lines are skipped.
/// Later keys override earlier ones.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key=value, got {raw:?}", ln + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Parse(format!("line {}: empty key", ln + 1)));
        }
        map.insert(k.to_string(), v.trim().to_string());
    }
    Ok(map)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_config(&read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::saturate_measurements;

    #[test]
    fn pi_round_trips_exactly() {
        let s = fmt_f64(std::f64::consts::PI);
        assert_eq!(s, "3.1415926535897931e0");
        assert_eq!(parse_f64(&s).unwrap().to_bits(), std::f64::consts::PI.to_bits());
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.0, -0.0, 1e-300, -2.5e17, 0.1 + 0.2, f64::MIN_POSITIVE, f64::MAX] {
            assert_eq!(parse_f64(&fmt_f64(v)).unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.comments.push("seed=3".into());
        assert_eq!(t.render(), "# seed=3\na,b\n");
        assert_eq!(CsvTable::parse(&t.render()).unwrap(), t);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(CsvTable::parse("a,b\n1,2\n3\n").is_err());
    }

    #[test]
    fn problem_container_round_trips() {
        let u = SensingMatrix::from_rows(3, 2, vec![0.1, -0.2, 1.0 / 3.0, 4.0, 5.5, -6.0]).unwrap();
        let obs = saturate_measurements(&[-2.0, 0.0, 3.0], -1.0, 2.0).unwrap();
        let text = render_problem(&u, &obs, 42);
        assert!(text.starts_with("2 3 2 42\n"));
        let (u2, obs2, seed) = parse_problem(&text).unwrap();
        assert_eq!(u2, u);
        assert_eq!(obs2, obs);
        assert_eq!(seed, 42);
    }

    #[test]
    fn two_by_two_graymap_fixture() {
        let meta = ImageMeta {
            nx: 2,
            ny: 2,
            pixel_size: 1.0,
            window_min: 0.0,
            window_max: 1.0,
        };
        let bytes = encode_pgm16(&[0.0, 1.0, 0.5, 2.0], &meta).unwrap();
        let mut want = b"P5\n2 2\n65535\n".to_vec();
        // 0 -> 0x0000, 1 -> 0xFFFF, 0.5 -> round(32767.5) = 32768 = 0x8000,
        // 2 clamps to 0xFFFF.
        want.extend_from_slice(&[0x00, 0x00, 0xFF, 0xFF, 0x80, 0x00, 0xFF, 0xFF]);
        assert_eq!(bytes, want);
        let (v, nx, ny) = decode_pgm16(&bytes, 0.0, 1.0).unwrap();
        assert_eq!((nx, ny), (2, 2));
        assert!((v[2] - 0.5).abs() <= 0.5 / 65535.0);
    }

    #[test]
    fn graymap_file_round_trips_to_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let meta = ImageMeta {
            nx: 3,
            ny: 2,
            pixel_size: 0.5,
            window_min: -1.0,
            window_max: 2.0,
        };
        let vals = [-1.0, 0.0, 0.123, 1.5, 2.0, 0.7];
        write_pgm16(&path, &vals, &meta).unwrap();
        let (back, meta2) = read_pgm16(&path).unwrap();
        assert_eq!(meta2, meta);
        for (a, b) in vals.iter().zip(&back) {
            assert!((a - b).abs() <= 0.5 * 3.0 / 65535.0 + 1e-15);
        }
    }

    #[test]
    fn config_parsing() {
        let cfg = parse_config("# comment\nseed = 7\n\ntrials=3 # inline\nseed=8\n").unwrap();
        assert_eq!(cfg["seed"], "8");
        assert_eq!(cfg["trials"], "3");
        assert!(parse_config("novalue\n").is_err());
        assert!(parse_config("=3\n").is_err());
    }

    #[test]
    fn sinogram_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let v: Vec<f64> = (0..6).map(|i| i as f64 / 7.0).collect();
        write_sinogram_csv(&path, &v, 2, 3, &["views=2".into()]).unwrap();
        let (back, views, bins) = read_sinogram_csv(&path).unwrap();
        assert_eq!((views, bins), (2, 3));
        assert_eq!(back, v);
    }
}
