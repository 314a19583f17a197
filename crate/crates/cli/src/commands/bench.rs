use std::fmt::Write as _;
use std::time::Instant;

use mol::linops::ComplexImage;
use mol::solver::{deq_backward, solve_fixed_point};
use mol::training::unrolled_reference;
use serde::{Deserialize, Serialize};

use super::synthetic_problems;
use crate::error::CliError;
use crate::RunContext;

pub const BENCH_FILE: &str = "bench.csv";
pub const SUMMARY_FILE: &str = "bench.json";
pub const UNROLLS: [usize; 4] = [1, 2, 5, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    /// DEQ buffer count on each problem.
    pub deq_buffers: Vec<f64>,
    /// Mean unrolled buffer count for each entry of `unrolls`.
    pub unrolled_buffers: Vec<f64>,
    pub unrolls: Vec<usize>,
    /// Unrolled buffers at the largest unroll count over the largest DEQ count.
    pub ratio: f64,
}

pub fn run(ctx: &RunContext) -> Result<(), CliError> {
    let w = ctx.require_checkpoint()?;
    let cfg = ctx.config.solver_config()?;
    let problems = synthetic_problems(ctx)?;
    let mut csv = String::from("mode,unrolls,buffers,seconds,nfe\n");
    let mut deq_buffers = Vec::new();
    let mut unrolled = vec![0.0; UNROLLS.len()];
    for p in &problems {
        let start = Instant::now();
        let fwd = solve_fixed_point(&w, &p.op, &p.measurement, None, &cfg)?;
        let bwd = deq_backward(&w, &p.op, &fwd.solution, &fwd.solution.sub(&p.truth), &cfg)?;
        let seconds = start.elapsed().as_secs_f64();
        let buffers = fwd.memory.sequential_peak(&bwd.memory).total();
        deq_buffers.push(buffers);
        writeln!(csv, "deq,0,{buffers},{seconds:.6},{}", fwd.nfe).unwrap();

        let truth = p.truth.clone();
        let grad = move |x: &ComplexImage| x.sub(&truth);
        for (slot, &k) in UNROLLS.iter().enumerate() {
            let start = Instant::now();
            let r = unrolled_reference(&w, &p.op, &p.measurement, k, &cfg, &grad)?;
            let seconds = start.elapsed().as_secs_f64();
            let buffers = r.buffers_retained();
            unrolled[slot] += buffers / problems.len() as f64;
            writeln!(csv, "unrolled,{k},{buffers},{seconds:.6},{k}").unwrap();
        }
    }
    let deq_max = deq_buffers.iter().copied().fold(0.0, f64::max);
    let summary = BenchSummary {
        ratio: unrolled[UNROLLS.len() - 1] / deq_max,
        deq_buffers,
        unrolled_buffers: unrolled,
        unrolls: UNROLLS.to_vec(),
    };
    eprintln!("unrolled({})/deq buffer ratio {:.3}", UNROLLS[UNROLLS.len() - 1], summary.ratio);
    ctx.write_file(BENCH_FILE, csv)?;
    ctx.write_file(SUMMARY_FILE, serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    Ok(())
}
