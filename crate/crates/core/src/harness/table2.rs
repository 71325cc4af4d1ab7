use std::io::Write;

use serde::Serialize;

use crate::adc::{samples_in, solve_budget};
use crate::Result;

/// Published operating points for a 20 mW budget: bit depth, sampling rate in
/// GHz and sample count. The sample counts for 6–8 bits do not follow from
/// the listed rates at 100 ns.
pub const REFERENCE_ADC_TABLE: [(u32, f64, usize); 7] = [
    (2, 10.0, 1000),
    (3, 5.0, 500),
    (4, 2.5, 250),
    (5, 1.25, 125),
    (6, 0.63, 75),
    (7, 0.31, 38),
    (8, 0.16, 19),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table2Row {
    pub bit_depth: u32,
    pub fs_ghz: f64,
    /// `fs_ghz` rounded to two significant figures.
    pub fs_ghz_2sf: f64,
    pub m_formula: usize,
    /// Published count, when the bit depth is in the reference table.
    pub m_reference: Option<usize>,
    /// Count reported in this row: reference value in verbatim mode, formula otherwise.
    pub m: usize,
    /// Reference count differs from `floor(T · reference rate)`.
    pub discrepancy: bool,
}

pub fn round_sig(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits as i32 - 1 - mag);
    (x * scale).round() / scale
}

pub fn emit_table2(
    budget: f64,
    walden_c: f64,
    duration: f64,
    bit_depths: &[u32],
    verbatim: bool,
) -> Result<Vec<Table2Row>> {
    Ok(solve_budget(budget, walden_c, duration, bit_depths)?
        .into_iter()
        .map(|adc| {
            let fs_ghz = adc.sampling_rate / 1e9;
            let reference = REFERENCE_ADC_TABLE
                .iter()
                .find(|r| r.0 == adc.bit_depth);
            let m_reference = reference.map(|r| r.2);
            let discrepancy = reference.is_some_and(|r| samples_in(duration, r.1 * 1e9) != r.2);
            let m = match (verbatim, m_reference) {
                (true, Some(m)) => m,
                _ => adc.sample_count,
            };
            Table2Row {
                bit_depth: adc.bit_depth,
                fs_ghz,
                fs_ghz_2sf: round_sig(fs_ghz, 2),
                m_formula: adc.sample_count,
                m_reference,
                m,
                discrepancy,
            }
        })
        .collect())
}

pub fn write_table2_csv<W: Write>(out: W, rows: &[Table2Row]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adc::{REFERENCE_BUDGET, REFERENCE_DURATION, WALDEN_C};

    #[test]
    fn rounding() {
        assert_eq!(round_sig(10.1215, 2), 10.0);
        assert_eq!(round_sig(0.6326, 2), 0.63);
        assert_eq!(round_sig(0.1581, 2), 0.16);
        assert_eq!(round_sig(0.0, 2), 0.0);
    }

    #[test]
    fn formula_mode_flags_high_depths() {
        let rows = emit_table2(REFERENCE_BUDGET, WALDEN_C, REFERENCE_DURATION, &[2, 3, 4, 5, 6, 7, 8], false).unwrap();
        let flagged: Vec<u32> = rows.iter().filter(|r| r.discrepancy).map(|r| r.bit_depth).collect();
        assert_eq!(flagged, vec![6, 7, 8]);
        assert_eq!(rows[4].m, 63);
        assert_eq!(rows[0].m, 1012);
    }

    #[test]
    fn verbatim_mode_uses_reference_counts() {
        let rows = emit_table2(REFERENCE_BUDGET, WALDEN_C, REFERENCE_DURATION, &[2, 3, 4, 5, 6, 7, 8, 9], true).unwrap();
        let m: Vec<usize> = rows.iter().map(|r| r.m).collect();
        assert_eq!(&m[..7], &[1000, 500, 250, 125, 75, 38, 19]);
        // outside the reference table the formula applies
        assert_eq!(rows[7].m_reference, None);
        assert_eq!(rows[7].m, rows[7].m_formula);
    }
}
