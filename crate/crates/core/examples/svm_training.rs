//! Train a linear SVM on two gaussian blobs and round-trip the model through disk.

use partforge::svm::{
    load_models, primal_objective, save_models, train_svm, LinearModel, ModelKind, SolverConfig, TrainMeta,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blob(rng: &mut ChaCha8Rng, n: usize, center: [f32; 2]) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| {
            let u: f32 = rng.gen_range(-1.0..1.0);
            let v: f32 = rng.gen_range(-1.0..1.0);
            vec![center[0] + u, center[1] + v]
        })
        .collect()
}

fn main() -> partforge::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pos = blob(&mut rng, 200, [1.5, 1.0]);
    let neg = blob(&mut rng, 300, [-1.0, -1.0]);
    let p: Vec<&[f32]> = pos.iter().map(Vec::as_slice).collect();
    let n: Vec<&[f32]> = neg.iter().map(Vec::as_slice).collect();

    for c in [0.01, 0.1, 1.0] {
        let sol = train_svm(&p, &n, c, 0.0, &SolverConfig::default())?;
        let check = primal_objective(&sol.weights, sol.bias, &p, &n, c);
        let errors = p
            .iter()
            .filter(|x| sol.weights[0] * f64::from(x[0]) + sol.weights[1] * f64::from(x[1]) + sol.bias <= 0.0)
            .count()
            + n.iter()
                .filter(|x| sol.weights[0] * f64::from(x[0]) + sol.weights[1] * f64::from(x[1]) + sol.bias >= 0.0)
                .count();
        println!(
            "C={c:<5} w=[{:.3}, {:.3}] b={:.3} objective {:.4} (recomputed {:.4}), {errors} training errors",
            sol.weights[0], sol.weights[1], sol.bias, sol.objective, check
        );
    }

    let sol = train_svm(&p, &n, 0.1, 0.0, &SolverConfig::default())?;
    let mut model = LinearModel::new(
        ModelKind::Classifier,
        [1, 1, 2],
        sol.weights.iter().map(|w| *w as f32).collect(),
        sol.bias,
    )?;
    model.label = Some("blob".into());
    model.meta = TrainMeta {
        c_reg: 0.1,
        rounds: 0,
        objective: sol.objective,
    };
    let path = std::env::temp_dir().join("partforge-svm-example.jsonl");
    save_models(&path, std::slice::from_ref(&model))?;
    let back = load_models(&path)?;
    println!("round trip through {}: identical = {}", path.display(), back == [model]);
    Ok(())
}
