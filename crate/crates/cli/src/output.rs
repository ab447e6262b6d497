use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use reducing_atlas::monodromy::write_paths_csv;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::pipeline::{Outcome, ResidualRow};
use crate::CliError;

pub const REPORT: &str = "report.json";
pub const ATLAS: &str = "atlas.json";
pub const PATHS: &str = "paths.csv";
pub const RESIDUALS: &str = "residuals.csv";

/// Pretty JSON with every float printed to 17 significant digits.
pub struct FloatFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Default for FloatFormatter<'_> {
    fn default() -> Self {
        Self { inner: PrettyFormatter::new() }
    }
}

impl Formatter for FloatFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        write!(w, "{:.16e}", f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FloatFormatter::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

#[derive(Serialize)]
struct AtlasFile<'a> {
    fiber_size: usize,
    orbit_count: usize,
    /// `orbit_of[i][j]` is the orbit containing the pair `(i, j)`.
    orbit_of: Vec<Vec<usize>>,
    canonical_reps: &'a [(usize, usize)],
    generators: Vec<&'a [usize]>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    body(&mut w).and_then(|()| w.flush()).map_err(io_err(path))
}

pub fn write_residuals_csv<W: Write>(out: W, rows: &[ResidualRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "residual", "tolerance", "pass"])?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            format!("{:.16e}", r.residual),
            format!("{:.16e}", r.tolerance),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the run artifacts into `dir`; returns the paths written.
///
/// `atlas.json` and `paths.csv` need a successful analysis; `residuals.csv` is
/// header-only when verification did not run.
pub fn write_outputs(dir: &Path, outcome: &Outcome) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let path = dir.join(REPORT);
    let json = to_json_string(&outcome.report).map_err(|e| CliError::Io { path: path.clone(), source: e.into() })?;
    write_file(&path, |w| w.write_all(json.as_bytes()))?;
    written.push(path);

    let path = dir.join(RESIDUALS);
    let rows = outcome.report.verification.as_ref().map_or(&[][..], |v| &v.residuals[..]);
    write_file(&path, |w| write_residuals_csv(w, rows).map_err(io::Error::other))?;
    written.push(path);

    if let Some(a) = &outcome.analysis {
        let n = a.atlas.fiber_size();
        let file = AtlasFile {
            fiber_size: n,
            orbit_count: a.atlas.orbit_count(),
            orbit_of: (0..n).map(|i| (0..n).map(|j| a.atlas.orbit(i, j)).collect()).collect(),
            canonical_reps: a.atlas.canonical_reps(),
            generators: a.rep.generators().iter().map(|g| g.images()).collect(),
        };
        let path = dir.join(ATLAS);
        let json = to_json_string(&file).map_err(|e| CliError::Io { path: path.clone(), source: e.into() })?;
        write_file(&path, |w| w.write_all(json.as_bytes()))?;
        written.push(path);

        let path = dir.join(PATHS);
        write_file(&path, |w| write_paths_csv(w, &a.rep).map_err(io::Error::other))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_carry_seventeen_digits() {
        let s = to_json_string(&vec![0.1, -2.5e-13, 1.0]).unwrap();
        let v: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(v, vec![0.1, -2.5e-13, 1.0]);
        assert!(s.contains("1.0000000000000001e-1"));
        assert!(s.contains("-2.4999999999999999e-13"));
    }

    #[test]
    fn integers_stay_integers() {
        let s = to_json_string(&(3u64, 4usize)).unwrap();
        assert_eq!(serde_json::from_str::<Vec<u64>>(&s).unwrap(), vec![3, 4]);
        assert!(!s.contains('e'));
    }
}
