//! Splits the benchmark dynamics into orthogonal and Schur-stable parts and reports the
//! reachability data used by the drift constraint.

use ofspc::{decompose, SystemSpec};

fn main() -> ofspc::Result<()> {
    let spec = SystemSpec::benchmark(1.0);
    let dec = decompose(&spec)?;
    println!("d_o = {}, d_s = {}, kappa = {}", dec.d_o, dec.d_s, dec.kappa);
    println!("A_o =\n{:.4}", dec.a_o);
    println!("A_s = {:.4}", dec.a_s);
    println!("R_kappa =\n{:.4}", dec.r_kappa);
    println!("transform condition number = {:.3e}", dec.condition);
    for u_max in [0.1, 1.0, 20.0] {
        println!("zeta_max(u_max = {u_max}) = {:.6}", dec.zeta_bound(u_max)?);
    }
    Ok(())
}
