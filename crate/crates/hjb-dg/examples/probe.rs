use hjb_dg::experiments::{run_tauq, TauqParams};
use std::time::Instant;

fn main() {
    for (cap, base) in [(5u32, 3usize), (4, 4), (5, 4)] {
        let t0 = Instant::now();
        let params = TauqParams {
            n_values: vec![6],
            mesh_cap: cap,
            p_base: base,
            ..Default::default()
        };
        match run_tauq(&params) {
            Ok(out) => println!(
                "cap={cap} base={base}: dof_x={} err_X={:.3e} took {:?}",
                out.dof_x[0], out.rel_x[0], t0.elapsed()
            ),
            Err(e) => println!("cap={cap} base={base}: FAILED {e}"),
        }
    }
}
