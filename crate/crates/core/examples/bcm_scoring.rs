//! Scores task results by complexity class and prints the table.

use fnstream::bcm::{load_results, score_results, Complexity, TaskResult};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("class    weight  C=0  C=0.5  C=1");
    for (class, a) in [(Complexity::Basic, 1), (Complexity::Medium, 4), (Complexity::Complex, 9)] {
        let raw: Vec<f64> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&c| fnstream::bcm::raw_score(&TaskResult::new("", a, c)).unwrap())
            .collect();
        println!("{:<8} {:>6}  {:>3}  {:>5}  {:>3}", format!("{class:?}"), class.weight(), raw[0], raw[1], raw[2]);
    }

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/results/synthetic.json");
    let report = score_results(&load_results(path)?)?;
    println!();
    for t in &report.tasks {
        println!("{:<6} |A|={:<2} C={:<3} {:?} raw={} normalized={}", t.task, t.action_count, t.correctness, t.complexity, t.raw, t.normalized);
    }
    println!("mean normalized score: {}", report.mean_normalized.unwrap_or(0.0));
    Ok(())
}
