//! Closed-form equilibrium of the benchmark and a check of the stationary
//! HJB equation on a grid.
//!
//!     cargo run --example oracle -- [sigma] [beta]

use mfcg::eval::GridSpec;
use mfcg::LqParams;

fn main() -> mfcg::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut p = LqParams::default();
    if let Some(s) = args.next() {
        p.sigma = s.parse().expect("sigma");
    }
    if let Some(b) = args.next() {
        p.beta = b.parse().expect("beta");
    }
    p.validate()?;
    let sol = p.analytical_solution()?;
    println!("gamma2 {:.7}  gamma1 {:+.7}  gamma0 {:.7}", sol.gamma2, sol.gamma1, sol.gamma0);
    println!("m {:.7}  limit std {:.7}", sol.m, sol.limit_std());

    let grid = GridSpec::around_limit(&sol);
    println!("default grid [{:.6}, {:.6}] step {}", grid.lower, grid.upper, grid.step);
    let worst = grid.points().iter().map(|&x| sol.hjb_residual(x, &p).abs()).fold(0.0, f64::max);
    println!("max HJB residual on grid {worst:.2e}");

    println!("{:>8} {:>10} {:>10}", "x", "v(x)", "alpha(x)");
    for x in [-1.0, -0.5, 0.0, sol.m, 0.5, 1.0] {
        println!("{x:>8.4} {:>10.5} {:>+10.5}", sol.value(x), sol.optimal_control(x));
    }
    Ok(())
}
