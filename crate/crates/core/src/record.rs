//! Metric rows shared by the ESPD and ES training drivers.

use std::fmt::Write;

/// Column order of every metric CSV.
pub const CSV_HEADER: &str =
    "episode,env_steps,buffer_size,candidates,selected,mean_loss,best_fitness,mean_fitness,eval_success_rate";

/// One row of a training log. Fields that do not apply to a driver are left
/// empty (ES has no buffer, ESPD has no fitness).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeRecord {
    /// Data-collection episodes consumed so far.
    pub episode: u64,
    /// Environment steps so far, including SELECT probes.
    pub env_steps: u64,
    pub buffer_size: Option<usize>,
    pub candidates: Option<usize>,
    pub selected: Option<usize>,
    pub mean_loss: Option<f64>,
    pub best_fitness: Option<f64>,
    pub mean_fitness: Option<f64>,
    pub eval_success: Option<f64>,
}

fn opt<T: std::fmt::Display>(out: &mut String, v: Option<T>) {
    out.push(',');
    if let Some(v) = v {
        write!(out, "{v}").expect("write to string");
    }
}

impl EpisodeRecord {
    pub fn csv_row(&self) -> String {
        let mut out = format!("{},{}", self.episode, self.env_steps);
        opt(&mut out, self.buffer_size);
        opt(&mut out, self.candidates);
        opt(&mut out, self.selected);
        opt(&mut out, self.mean_loss);
        opt(&mut out, self.best_fitness);
        opt(&mut out, self.mean_fitness);
        opt(&mut out, self.eval_success);
        out
    }
}

/// Header plus one line per record, newline-terminated.
pub fn to_csv(records: &[EpisodeRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Last evaluation success rate in a log, if any was recorded.
pub fn final_success(records: &[EpisodeRecord]) -> Option<f64> {
    records.iter().rev().find_map(|r| r.eval_success)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_has_header_arity() {
        let r = EpisodeRecord {
            episode: 3,
            env_steps: 150,
            mean_loss: Some(0.5),
            ..Default::default()
        };
        let row = r.csv_row();
        assert_eq!(row, "3,150,,,,0.5,,,");
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
    }

    #[test]
    fn final_success_skips_unevaluated_rows() {
        let rows = vec![
            EpisodeRecord {
                eval_success: Some(0.2),
                ..Default::default()
            },
            EpisodeRecord::default(),
        ];
        assert_eq!(final_success(&rows), Some(0.2));
        assert_eq!(final_success(&[]), None);
    }
}
