//! Solves one recalculation of the policy QP at a state far from the origin and compares it
//! with the open-loop drift policy that certifies feasibility.

use ofspc::control_loop::{Experiment, SimConfig};
use ofspc::ocp::{build_qp, fallback_point, objective_value, solve_ocp, triggered_rows};
use ofspc::{PsiSpec, SystemSpec, Vector};

fn main() -> ofspc::Result<()> {
    let u_max = 0.5;
    let cfg = SimConfig::new(SystemSpec::benchmark(u_max), PsiSpec::sigmoid())?;
    let exp = Experiment::estimate(cfg, 50_000, 0)?;
    let ctx = exp.context(u_max)?;

    let x_hat = Vector::from_vec(vec![1.0, 4.0, -3.0, 0.5]);
    let y = Vector::from_vec(vec![1.2, 3.7, -2.6, 0.9]);
    let psi0 = ctx.psi0(&x_hat, &y);
    let x_hat_o = ctx.dec.orthogonal_part(&x_hat);
    let (prob, _) = build_qp(&ctx, &x_hat, &psi0);
    println!(
        "QP: {} variables, {} constraints",
        prob.num_vars(),
        prob.num_constraints()
    );
    println!("triggered drift rows: {:?}", triggered_rows(&ctx, &x_hat_o));

    let sol = solve_ocp(&ctx, &x_hat, &y)?;
    let fb = fallback_point(&ctx, &x_hat_o)?;
    println!(
        "QP objective     {:.4} ({} iterations)",
        sol.objective_value, sol.iterations
    );
    println!("drift objective  {:.4}", objective_value(&ctx, &x_hat, &psi0, &fb));
    println!("first-stage mean input {:.4}", sol.params.eta_stage(0)[0]);
    println!(
        "smallest hard-bound margin {:.2e}",
        sol.params.hard_bound_margin(ctx.psi.psi_max, u_max).min()
    );
    Ok(())
}
