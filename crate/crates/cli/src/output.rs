//! Deterministic output helpers: CSV at fixed precision and the binary
//! wavefunction dump.

use crate::failure::Failure;
use hjflow_core::flow::TrajectoryRecord;
use hjflow_core::quantum::{Evolution, WaveGrid};
use hjflow_core::ConstrainedSystem;
use std::io::Write;
use std::path::Path;

/// 17 significant digits; identical inputs produce identical bytes.
pub fn fmt17(x: f64) -> String {
    format!("{:.16e}", x)
}

pub fn trajectory_csv(
    path: &Path,
    sys: &ConstrainedSystem,
    record: &TrajectoryRecord,
    lambdas: Option<&[f64]>,
) -> Result<(), Failure> {
    let file = std::fs::File::create(path)
        .map_err(|e| Failure::input(format!("cannot create '{}': {}", path.display(), e)))?;
    let mut w = std::io::BufWriter::new(file);
    let mut header = vec!["s".to_string()];
    header.extend(sys.parameters.iter().cloned());
    header.extend(sys.coordinates.iter().cloned());
    header.extend(sys.momenta.iter().cloned());
    header.extend(sys.conjugates.iter().cloned());
    header.push("z".to_string());
    header.extend(sys.parameters.iter().map(|p| format!("Hprime_{}", p)));
    if lambdas.is_some() {
        header.push("lambda".to_string());
    }
    writeln!(w, "{}", header.join(","))?;
    for (i, point) in record.points.iter().enumerate() {
        let mut row = vec![fmt17(record.s[i])];
        row.extend(point.parameters.iter().map(|v| fmt17(*v)));
        row.extend(point.coordinates.iter().map(|v| fmt17(*v)));
        row.extend(point.momenta.iter().map(|v| fmt17(*v)));
        row.extend(point.conjugates.iter().map(|v| fmt17(*v)));
        row.push(fmt17(point.action));
        row.extend(record.hprime[i].iter().map(|v| fmt17(*v)));
        if let Some(ls) = lambdas {
            row.push(fmt17(ls[i]));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn observables_csv(path: &Path, evolution: &Evolution) -> Result<(), Failure> {
    let file = std::fs::File::create(path)
        .map_err(|e| Failure::input(format!("cannot create '{}': {}", path.display(), e)))?;
    let mut w = std::io::BufWriter::new(file);
    let d = evolution.final_grid.spec.d;
    let mut header = vec!["x_minus".to_string(), "norm".to_string()];
    header.extend((1..=d).map(|a| format!("mean_x{}", a)));
    header.extend((1..=d).map(|a| format!("mean_p{}", a)));
    header.extend((1..=d).map(|a| format!("spread_x{}", a)));
    writeln!(w, "{}", header.join(","))?;
    for row in &evolution.rows {
        let mut cols = vec![fmt17(row.x_minus), fmt17(row.obs.norm)];
        cols.extend(row.obs.mean_x.iter().map(|v| fmt17(*v)));
        cols.extend(row.obs.mean_p.iter().map(|v| fmt17(*v)));
        cols.extend(row.obs.spread_x.iter().map(|v| fmt17(*v)));
        writeln!(w, "{}", cols.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Binary dump: 8-byte magic `HJFLOWWF`, u32 d, u32 n, f64 l, f64 x_minus
/// (32 bytes total), then interleaved (re, im) doubles in row-major order,
/// all little-endian.
pub fn wavefunction_dump(path: &Path, grid: &WaveGrid) -> Result<(), Failure> {
    let file = std::fs::File::create(path)
        .map_err(|e| Failure::input(format!("cannot create '{}': {}", path.display(), e)))?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(b"HJFLOWWF")?;
    w.write_all(&(grid.spec.d as u32).to_le_bytes())?;
    w.write_all(&(grid.spec.n as u32).to_le_bytes())?;
    w.write_all(&grid.spec.l.to_le_bytes())?;
    w.write_all(&grid.x_minus.to_le_bytes())?;
    for v in &grid.amplitude {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}
