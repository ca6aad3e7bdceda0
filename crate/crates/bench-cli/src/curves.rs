//! Theoretical complexity curves over an (n, epsilon) grid, as CSV.

use std::path::Path;

use anyhow::{Context, Result};
use snvrg::accounting::complexity_curves;

/// Writes one row per (grid point, algorithm) with columns
/// `algorithm,n,epsilon,complexity`. Row order is the grid order: n-major,
/// then epsilon, then the fixed algorithm order of the curve table.
pub fn emit_curves(
    n_grid: &[u64],
    eps_grid: &[f64],
    tau: Option<f64>,
    scale: f64,
    out: &Path,
) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(out).with_context(|| format!("opening {}", out.display()))?;
    writer.write_record(["algorithm", "n", "epsilon", "complexity"])?;
    for &n in n_grid {
        for &eps in eps_grid {
            let points = complexity_curves(n, eps, tau, scale)
                .map_err(|e| anyhow::anyhow!("curve evaluation at n={n}, epsilon={eps}: {e}"))?;
            for point in points {
                writer.write_record([
                    point.algorithm.as_str(),
                    &n.to_string(),
                    &eps.to_string(),
                    &point.complexity.to_string(),
                ])?;
            }
        }
    }
    writer.flush().with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_grid_emits_five_rows() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("curves.csv");
        emit_curves(&[1000], &[1e-2], None, 1.0, &out).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "algorithm,n,epsilon,complexity");
        assert_eq!(lines.len(), 1 + 5);
        assert!(lines[1..].iter().all(|l| l.ends_with(|c: char| c.is_ascii_digit())));
    }

    #[test]
    fn dominance_constant_adds_suboptimality_rows() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("curves.csv");
        emit_curves(&[1000], &[1e-2], Some(2.0), 1.0, &out).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 1 + 10);
        assert!(text.contains("snvrg-pl,"));
    }

    #[test]
    fn csv_round_trips_to_identical_values() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("curves.csv");
        let (n_grid, eps_grid) = (vec![100, 10_000], vec![1e-1, 1e-3]);
        emit_curves(&n_grid, &eps_grid, None, 1.0, &out).unwrap();

        let mut reader = csv::Reader::from_path(&out).unwrap();
        let mut rows = 0;
        for rec in reader.records() {
            let rec = rec.unwrap();
            let n: u64 = rec[1].parse().unwrap();
            let eps: f64 = rec[2].parse().unwrap();
            let value: f64 = rec[3].parse().unwrap();
            let table = complexity_curves(n, eps, None, 1.0).unwrap();
            let expected = table.iter().find(|p| p.algorithm == rec[0]).unwrap();
            assert_eq!(value.to_bits(), expected.complexity.to_bits());
            rows += 1;
        }
        assert_eq!(rows, 2 * 2 * 5);
    }
}
