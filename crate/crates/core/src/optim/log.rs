use std::io::Write;

/// One row of the training log. Terms a model does not have are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub total: f64,
    pub data: f64,
    pub sp: f64,
    pub pde: Option<f64>,
    pub bcs: Option<f64>,
    pub lambda_data: f64,
    pub lambda_sp: f64,
    pub lambda_pde: Option<f64>,
    pub lambda_bcs: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossLog {
    pub records: Vec<LossRecord>,
}

const HEADER: [&str; 11] = [
    "iteration",
    "loss_total",
    "loss_data",
    "loss_sp",
    "loss_pde",
    "loss_bcs",
    "lambda_data",
    "lambda_sp",
    "lambda_pde",
    "lambda_bcs",
    "wall_seconds",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl LossLog {
    pub fn push(&mut self, record: LossRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&LossRecord> {
        self.records.last()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HEADER)?;
        for r in &self.records {
            w.write_record([
                r.iteration.to_string(),
                format!("{:e}", r.total),
                format!("{:e}", r.data),
                format!("{:e}", r.sp),
                opt(r.pde),
                opt(r.bcs),
                format!("{:e}", r.lambda_data),
                format!("{:e}", r.lambda_sp),
                opt(r.lambda_pde),
                opt(r.lambda_bcs),
                format!("{:.6}", r.wall_seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Log rows without the wall-clock column, for reproducibility checks.
    pub fn deterministic_rows(&self) -> Vec<[f64; 10]> {
        let nan = f64::NAN;
        self.records
            .iter()
            .map(|r| {
                [
                    r.iteration as f64,
                    r.total,
                    r.data,
                    r.sp,
                    r.pde.unwrap_or(nan),
                    r.bcs.unwrap_or(nan),
                    r.lambda_data,
                    r.lambda_sp,
                    r.lambda_pde.unwrap_or(nan),
                    r.lambda_bcs.unwrap_or(nan),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dp_rows_leave_pinn_columns_empty() {
        let mut log = LossLog::default();
        log.push(LossRecord {
            iteration: 3,
            total: 0.5,
            data: 0.25,
            sp: 0.25,
            pde: None,
            bcs: None,
            lambda_data: 1.0,
            lambda_sp: 1.0,
            lambda_pde: None,
            lambda_bcs: None,
            wall_seconds: 0.125,
        });
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), HEADER.join(","));
        assert_eq!(lines.next().unwrap(), "3,5e-1,2.5e-1,2.5e-1,,,1e0,1e0,,,0.125000");
    }
}
