mod support;

use support::gradcheck::{check, oracle_forward, random_instance, Loss, REL_TOL};

fn run(loss: Loss, seeds: std::ops::Range<u64>) {
    for seed in seeds {
        let inst = random_instance(seed);
        let r = check(&inst, loss);
        assert!(r.coords > 0);
        assert!(
            r.max_rel_err < REL_TOL,
            "{loss:?} seed {seed}: rel err {:.3e} at {:?}",
            r.max_rel_err,
            r.worst
        );
    }
}

#[test]
fn answer_xent_matches_finite_differences() {
    run(Loss::AnswerXent, 0..100);
}

#[test]
fn feedback_xent_matches_finite_differences() {
    run(Loss::FeedbackXent, 1000..1100);
}

#[test]
fn reinforce_surrogate_matches_finite_differences() {
    run(Loss::Reinforce, 2000..2100);
}

#[test]
fn baseline_mse_matches_finite_differences() {
    run(Loss::BaselineMse, 3000..3100);
}

#[test]
fn forward_matches_straight_line_oracle() {
    for seed in 0..200 {
        let inst = random_instance(seed);
        let (answer, u_n, feedback) = oracle_forward(&inst);
        let t = inst.params.forward_fp(inst.query(), &inst.candidates, inst.action, &inst.pool).unwrap();
        for (a, b) in t.answer_probs.iter().zip(&answer) {
            assert!((a - b).abs() < 1e-10, "seed {seed}");
        }
        for (a, b) in t.final_state().iter().zip(&u_n) {
            assert!((a - b).abs() < 1e-10, "seed {seed}");
        }
        let fp = t.fp.unwrap();
        assert_eq!(fp.feedback_probs.len(), feedback.len());
        for (a, b) in fp.feedback_probs.iter().zip(&feedback) {
            assert!((a - b).abs() < 1e-10, "seed {seed}");
        }
        let s: f64 = t.answer_probs.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        for att in &t.attention {
            assert!((att.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(att.iter().all(|x| *x >= 0.0));
        }
    }
}

/// d=3, L=4, K=2, N=2 as a fixed case.
#[test]
fn forward_fixed_shape_matches_oracle() {
    let mut inst = random_instance(77);
    let cfg = dialearn::memnet::ModelConfig {
        dim: 3,
        hops: 2,
        ..inst.params.config
    };
    inst.params = dialearn::memnet::ModelParams::init(cfg, 5).unwrap();
    inst.memories = vec![vec![1, 2], vec![3]];
    inst.candidates = vec![vec![4], vec![5], vec![6], vec![7, 8]];
    inst.action = 2;
    let (answer, _, _) = oracle_forward(&inst);
    let t = inst.params.forward_answer(inst.query(), &inst.candidates);
    for (a, b) in t.answer_probs.iter().zip(&answer) {
        assert!((a - b).abs() < 1e-10);
    }
}
