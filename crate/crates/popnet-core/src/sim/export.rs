//! CSV export of usage series.
//!
//! The layout is pinned — downstream tooling parses it — and floats are
//! rendered with Rust's shortest-roundtrip formatting, so equal series always
//! export to byte-identical files:
//!
//! ```text
//! t,instance_id,pop,usage,limit,expected
//! 1,c0001,pop1,0.125,0.125,0.125
//! 1,__pop_aggregate__,pop1,0.125,0.125,0.125
//! ```
//!
//! Per-PoP aggregate rows carry the reserved instance id
//! [`POP_AGGREGATE_ID`]. Events (rejections, releases) are not rows; they
//! live in [`UsageSeries::events`](crate::sim::UsageSeries).

use std::io::Write;

use crate::error::Result;
use crate::sim::UsageSeries;

/// Reserved `instance_id` of per-PoP aggregate rows.
pub const POP_AGGREGATE_ID: &str = "__pop_aggregate__";

pub const CSV_HEADER: &str = "t,instance_id,pop,usage,limit,expected";

impl UsageSeries {
    /// The series as one CSV string.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.samples.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for sample in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                sample.t_s, sample.instance, sample.pop, sample.usage, sample.limit,
                sample.expected
            ));
        }
        out
    }

    /// Writes the CSV to `writer`; returns the number of data rows.
    pub fn write_csv<W: Write>(&self, writer: &mut W) -> Result<usize> {
        writer.write_all(self.to_csv().as_bytes())?;
        Ok(self.samples.len())
    }
}
