//! Temperature-scaled log-sum-exp between the mean-free sum and the hard max.

use blendsp::softmax::{entropy, eps_log_sum_exp, gibbs_normalize, Temperature};

fn main() {
    let v = [0.7, -0.2, 1.1, 1.1 - 1e-12];
    let bound = (v.len() as f64).ln();
    println!("{:>8} {:>12} {:>12}  gibbs", "t", "lse - max", "t ln n");
    for t in [0.0, 1e-3, 0.1, 1.0, 10.0] {
        let t = Temperature::new(t).unwrap();
        let lse = eps_log_sum_exp(&v, t).unwrap();
        let p = gibbs_normalize(&v, t).unwrap();
        println!(
            "{:>8} {:>12.3e} {:>12.3e}  {:.4?}  H={:.4}",
            t.value(),
            lse - 1.1,
            t.value() * bound,
            p,
            entropy(&p).unwrap()
        );
    }
}
