//! Solves a small box- and inequality-constrained QP and prints the KKT residuals.

use ofspc::qpsolver::{kkt_residuals, solve};
use ofspc::{Mat, QpProblem, QpSettings, Vector};

fn main() -> ofspc::Result<()> {
    // min (x - 2)^2 + (y - 1)^2 + x y  s.t.  x + y <= 1, -1 <= x, y <= 1
    let prob = QpProblem {
        p: Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]),
        q: Vector::from_vec(vec![-4.0, -2.0]),
        a: Mat::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0]),
        l: Vector::from_vec(vec![f64::NEG_INFINITY, -1.0, -1.0]),
        u: Vector::from_vec(vec![1.0, 1.0, 1.0]),
    };
    let sol = solve(&prob, &QpSettings::default(), None)?;
    println!(
        "status {:?} after {} iterations (polished: {})",
        sol.status, sol.iterations, sol.polished
    );
    println!("z = {:.9}", sol.z.transpose());
    println!("y = {:.9}", sol.dual.transpose());
    println!("{:?}", kkt_residuals(&prob, &sol.z, &sol.dual));
    Ok(())
}
