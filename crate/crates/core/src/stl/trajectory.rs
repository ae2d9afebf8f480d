use std::io::{Read, Write};

use super::StlError;

/// Discrete-time signal `x_0..x_T` with its step duration.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    states: Vec<Vec<f64>>,
    dt: f64,
}

impl Trajectory {
    pub fn new(states: Vec<Vec<f64>>, dt: f64) -> Result<Self, StlError> {
        let Some(first) = states.first() else {
            return Err(StlError::InvalidTrajectory(
                "trajectory needs at least one state".into(),
            ));
        };
        let dim = first.len();
        if let Some(k) = states.iter().position(|s| s.len() != dim) {
            return Err(StlError::InvalidTrajectory(format!(
                "state {k} has dimension {}, expected {dim}",
                states[k].len()
            )));
        }
        if !(dt > 0.0) {
            return Err(StlError::InvalidTrajectory(
                "step duration must be positive".into(),
            ));
        }
        Ok(Self { states, dt })
    }

    /// Index of the last state (`T`).
    pub fn last_step(&self) -> usize {
        self.states.len() - 1
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t]
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    /// Writes `t,x0,x1,...` with `t` in seconds.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), StlError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim()).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for (k, s) in self.states.iter().enumerate() {
            let mut row = vec![(k as f64 * self.dt).to_string()];
            row.extend(s.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| StlError::Csv(e.to_string()))?;
        Ok(())
    }

    /// Reads the `x<i>` columns of a CSV with a `t` column; other columns
    /// (episode trace extras such as `p` or `reward`) are ignored.
    ///
    /// The step duration is taken from the first two `t` values, or
    /// `default_dt` for a single-row file.
    pub fn read_csv<R: Read>(input: R, default_dt: f64) -> Result<Self, StlError> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let t_col = headers
            .iter()
            .position(|h| h.trim() == "t")
            .ok_or_else(|| StlError::Csv("missing `t` column".into()))?;
        let mut cols: Vec<(usize, usize)> = headers
            .iter()
            .enumerate()
            .filter_map(|(c, h)| {
                h.trim()
                    .strip_prefix('x')
                    .and_then(|n| n.parse::<usize>().ok())
                    .map(|i| (i, c))
            })
            .collect();
        cols.sort_unstable();
        if cols.is_empty() || cols.iter().enumerate().any(|(k, &(i, _))| k != i) {
            return Err(StlError::Csv("state columns must be x0..x{n-1}".into()));
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64, StlError> {
                let field = rec.get(c).unwrap_or("").trim();
                field.parse::<f64>().map_err(|_| {
                    StlError::Csv(format!("row {}: `{field}` is not a number", line + 1))
                })
            };
            times.push(num(t_col)?);
            states.push(
                cols.iter()
                    .map(|&(_, c)| num(c))
                    .collect::<Result<Vec<_>, _>>()?,
            );
        }
        let dt = if times.len() >= 2 {
            times[1] - times[0]
        } else {
            default_dt
        };
        Self::new(states, dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(Trajectory::new(vec![], 0.1).is_err());
        assert!(Trajectory::new(vec![vec![0.0], vec![0.0, 1.0]], 0.1).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let tr = Trajectory::new(
            vec![vec![0.1, -2.5], vec![1.0 / 3.0, 7.0], vec![1e-17, 0.0]],
            0.2,
        )
        .unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x0,x1\n"));
        let back = Trajectory::read_csv(buf.as_slice(), 1.0).unwrap();
        assert_eq!(back.states(), tr.states());
        assert!((back.dt() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn extra_columns_are_ignored() {
        let text = "t,x0,x1,p,r,chi_bitmask,reward\n0,1,2,0,0,1,0.5\n0.1,3,4,1,2,1,1.5\n";
        let tr = Trajectory::read_csv(text.as_bytes(), 1.0).unwrap();
        assert_eq!(tr.states(), &[vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn malformed_rows() {
        assert!(Trajectory::read_csv("t,x0\n0,abc\n".as_bytes(), 1.0).is_err());
        assert!(Trajectory::read_csv("t,x1\n0,1\n".as_bytes(), 1.0).is_err());
        assert!(Trajectory::read_csv("x0\n1\n".as_bytes(), 1.0).is_err());
    }
}
