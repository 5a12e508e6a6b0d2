//! Average squared gradient norm vs. horizon T, with Q and batch size
//! both set to ceil(sqrt(T)).

use fedbcd::harness::{logistic_task, rate_shape};

fn main() -> fedbcd::Result<()> {
    let task = logistic_task()?;
    let pts = rate_shape(&task.train, &task.config, &[64, 256, 1024, 4096])?;
    println!("{:>6} {:>4} {:>11} {:>7} {:>12} {:>12}", "T", "Q", "eta", "rounds", "avg |g|^2", "x sqrt(T)");
    for p in &pts {
        println!(
            "{:>6} {:>4} {:>11.4e} {:>7} {:>12.4e} {:>12.4}",
            p.t,
            p.q,
            p.eta,
            p.rounds,
            p.avg_grad_norm_sq,
            p.avg_grad_norm_sq * (p.t as f64).sqrt()
        );
    }
    Ok(())
}
