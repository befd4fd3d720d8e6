//! Runs the four loss modes on the blob task for a few seeds and prints the
//! test-set feature statistics.
//!
//!     cargo run --release -p lshkd --example ablation -- [seeds]

use lshkd::trainer::feature_stats;
use lshkd::trainer::{distill, train_vanilla, BlobTask, DistillConfig, LossMode};

fn main() -> lshkd::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let task = BlobTask::calibrated();
    let modes = [LossMode::Ce, LossMode::L2, LossMode::Lsh, LossMode::Lshl2];
    let mut sums = vec![(0.0, 0.0, 0.0, 0.0); modes.len()];
    for seed in 1..=seeds {
        let (train, test) = task.data(seed)?;
        let teacher = task.train_teacher(seed, &train)?;
        let student = task.init_student(seed, true)?;
        let t_acc = lshkd::trainer::accuracy(&teacher, &test)?;
        for (m, &mode) in modes.iter().enumerate() {
            let cfg = DistillConfig {
                loss_mode: mode,
                seed,
                ..DistillConfig::default()
            };
            let model = if mode == LossMode::Ce {
                train_vanilla(&student, &train, None, &cfg)?.model
            } else {
                distill(&teacher, &student, &train, None, &cfg)?.model
            };
            let s = feature_stats(&teacher, &model, &test)?;
            println!(
                "seed {seed} teacher {t_acc:.3} {:>6}: angle {:6.2} deg  |f_t| {:6.2}  |f_s| {:6.2}  acc {:.3}",
                mode.name(),
                s.mean_angle_deg,
                s.mean_teacher_norm,
                s.mean_student_norm,
                s.accuracy
            );
            sums[m].0 += s.mean_angle_deg;
            sums[m].1 += s.accuracy;
            sums[m].2 += s.mean_student_norm;
            sums[m].3 += s.mean_teacher_norm;
        }
    }
    let n = seeds as f64;
    for (m, mode) in modes.iter().enumerate() {
        println!(
            "mean {:>6}: angle {:6.2} deg  |f_s| {:6.2}  |f_t| {:6.2}  acc {:.3}",
            mode.name(),
            sums[m].0 / n,
            sums[m].2 / n,
            sums[m].3 / n,
            sums[m].1 / n
        );
    }
    Ok(())
}
