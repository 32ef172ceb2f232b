use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{load_png, read_json, save_png, write_json};
use crate::error::{Error, Result};
use crate::lightfield::{LightField, Provenance};

pub const META_FILE: &str = "meta.json";
pub const DEFAULT_PATTERN: &str = "view_{t:02}_{s:02}.png";

/// Contents of `meta.json` in a light field directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LfMeta {
    pub rows: usize,
    pub cols: usize,
    pub width: usize,
    pub height: usize,
    pub pattern: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Free-form description of how the field was produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<serde_json::Value>,
}

/// Expands `{t}`, `{s}`, `{t:0N}` and `{s:0N}` in `pattern`. Widths are
/// always zero-padded.
pub fn view_file_name(pattern: &str, t: usize, s: usize) -> Result<String> {
    let mut out = String::with_capacity(pattern.len());
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| Error::InvalidArgument(format!("unterminated placeholder in pattern '{pattern}'")))?;
        let token = &rest[open + 1..open + close];
        let (name, width) = match token.split_once(':') {
            Some((n, spec)) => {
                let digits = spec.strip_prefix('0').unwrap_or(spec);
                let w = digits
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("bad width '{spec}' in pattern '{pattern}'")))?;
                (n, w)
            }
            None => (token, 0),
        };
        let value = match name {
            "t" => t,
            "s" => s,
            _ => return Err(Error::InvalidArgument(format!("unknown placeholder '{{{token}}}' in pattern '{pattern}'"))),
        };
        out.push_str(&format!("{value:0width$}"));
        rest = &rest[open + close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Writes every view as an 8-bit PNG plus `meta.json`.
pub fn save_lf(lf: &LightField, dir: &Path, seed: Option<u64>, source: Option<serde_json::Value>) -> Result<LfMeta> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (height, width) = lf.view_size();
    let meta = LfMeta {
        rows: lf.rows(),
        cols: lf.cols(),
        width,
        height,
        pattern: DEFAULT_PATTERN.into(),
        provenance: lf.provenance(),
        seed,
        source,
    };
    for t in 0..lf.rows() {
        for s in 0..lf.cols() {
            save_png(lf.view(t, s), &dir.join(view_file_name(&meta.pattern, t, s)?))?;
        }
    }
    write_json(&meta, &dir.join(META_FILE))?;
    Ok(meta)
}

pub fn load_lf(dir: &Path) -> Result<(LightField, LfMeta)> {
    let meta_path = dir.join(META_FILE);
    let meta: LfMeta = read_json(&meta_path)?;
    if meta.rows == 0 || meta.cols == 0 {
        return Err(Error::format(&meta_path, "rows and cols must be positive"));
    }
    let pngs = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .count();
    if pngs != meta.rows * meta.cols {
        return Err(Error::format(
            &meta_path,
            format!("declares {}x{} views but the directory holds {pngs} PNG files", meta.rows, meta.cols),
        ));
    }
    let mut views = Vec::with_capacity(meta.rows * meta.cols);
    for t in 0..meta.rows {
        for s in 0..meta.cols {
            let path = dir.join(view_file_name(&meta.pattern, t, s)?);
            let img = load_png(&path)?;
            if img.size() != (meta.height, meta.width) {
                return Err(Error::format(
                    &path,
                    format!("is {}x{} but meta declares {}x{}", img.width(), img.height(), meta.width, meta.height),
                ));
            }
            views.push(img);
        }
    }
    Ok((LightField::new(meta.rows, meta.cols, views, meta.provenance)?, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::Image;

    #[test]
    fn pattern_expansion() {
        assert_eq!(view_file_name(DEFAULT_PATTERN, 3, 12).unwrap(), "view_03_12.png");
        assert_eq!(view_file_name("v{t}-{s:3}.png", 1, 2).unwrap(), "v1-002.png");
        assert!(view_file_name("{u}.png", 0, 0).is_err());
        assert!(view_file_name("{t.png", 0, 0).is_err());
    }

    fn small_lf() -> LightField {
        let views = (0..6).map(|i| Image::constant(4, 5, [i as f32 / 10.0, 0.5, 1.0]).unwrap()).collect();
        LightField::new(2, 3, views, Provenance::Sparse { alpha: 2 }).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let lf = small_lf();
        save_lf(&lf, dir.path(), Some(7), None).unwrap();
        let (back, meta) = load_lf(dir.path()).unwrap();
        assert_eq!(meta.seed, Some(7));
        assert_eq!(back.provenance(), Provenance::Sparse { alpha: 2 });
        for (a, b) in back.views().iter().zip(lf.views()) {
            assert!(a.max_abs_diff(b) <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn missing_view_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        save_lf(&small_lf(), dir.path(), None, None).unwrap();
        fs::remove_file(dir.path().join("view_01_02.png")).unwrap();
        let err = load_lf(dir.path()).unwrap_err().to_string();
        assert!(err.contains("meta.json") && err.contains("5 PNG"), "{err}");
        fs::write(dir.path().join("view_01_02.png"), b"not a png").unwrap();
        let err = load_lf(dir.path()).unwrap_err().to_string();
        assert!(err.contains("view_01_02.png"), "{err}");
    }
}
