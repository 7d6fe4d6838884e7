use mqan::data::tasks::{lookup, registry, DECATHLON};
use mqan::data::{Difficulty, TaskSpec};
use mqan::trainer::{lr_at, next_task, CurriculumSpec, ScheduleSpec, Strategy};
use proptest::prelude::*;

fn specs(names: &[&str]) -> Vec<TaskSpec> {
    names.iter().map(|n| lookup(n).unwrap()).collect()
}

#[test]
fn learning_rate_points() {
    let s = ScheduleSpec::default();
    assert_eq!(lr_at(800, &s), 2.5e-3);
    assert_eq!(lr_at(400, &s), 1.25e-3);
    assert_eq!(lr_at(3200, &s), 1.25e-3);
}

#[test]
fn learning_rate_is_continuous_at_warmup() {
    let s = ScheduleSpec::default();
    let gap = (lr_at(801, &s) - lr_at(800, &s)).abs();
    assert!(gap < 2.5e-3 / 1000.0, "{gap}");
    assert!(lr_at(799, &s) < lr_at(800, &s));
}

#[test]
fn anti_curriculum_on_synthetic_analogs() {
    let order = specs(&["classify", "copy_span", "generate"]);
    let switch = 50;
    let spec = CurriculumSpec { strategy: Strategy::AntiSquad, switch };
    let copy = 1;
    for i in 0..switch {
        assert_eq!(next_task(i, &spec, &order).unwrap(), copy, "iteration {i}");
    }
    let after: Vec<usize> = (switch..switch + 300).map(|i| next_task(i, &spec, &order).unwrap()).collect();
    for (k, &t) in after.iter().enumerate() {
        assert_eq!(t, k % 3);
    }
}

#[test]
fn anti_curriculum_with_several_phase_one_tasks() {
    let order = specs(&["squad", "sst", "iwslt", "woz", "cnn_dm"]);
    let spec = CurriculumSpec { strategy: Strategy::AntiSquadIwsltCnndm, switch: 9 };
    let before: Vec<usize> = (0..9).map(|i| next_task(i, &spec, &order).unwrap()).collect();
    assert_eq!(before, vec![0, 2, 4, 0, 2, 4, 0, 2, 4]);
    let after: Vec<usize> = (9..19).map(|i| next_task(i, &spec, &order).unwrap()).collect();
    assert_eq!(after, vec![0, 1, 2, 3, 4, 0, 1, 2, 3, 4]);
}

#[test]
fn curriculum_phase_one_is_the_easy_set() {
    let listed = ["sst", "qa_srl", "qa_zre", "woz", "wikisql", "mwsc"];
    let reg = registry();
    let real: Vec<TaskSpec> = reg.iter().filter(|t| DECATHLON.contains(&t.name.as_str())).cloned().collect();
    let spec = CurriculumSpec { strategy: Strategy::Curriculum, switch: 1 };
    let phase: Vec<&str> = spec.phase_one(&real).iter().map(|&i| real[i].name.as_str()).collect();
    assert_eq!(phase, listed);
    let easy: Vec<&str> = real.iter().filter(|t| t.difficulty == Difficulty::Easy).map(|t| t.name.as_str()).collect();
    assert_eq!(easy, listed);
}

#[test]
fn fully_joint_cycles_in_order() {
    let order = specs(&DECATHLON);
    let spec = CurriculumSpec::fully_joint();
    for i in 0..100 {
        assert_eq!(next_task(i, &spec, &order).unwrap(), i % 10);
    }
}

proptest! {
    #[test]
    fn nonincreasing_after_warmup(k in 800usize..1_000_000, step in 1usize..10_000) {
        let s = ScheduleSpec::default();
        prop_assert!(lr_at(k + step, &s) <= lr_at(k, &s));
    }

    #[test]
    fn linear_warmup(k in 1usize..800) {
        let s = ScheduleSpec::default();
        prop_assert!((lr_at(k, &s) - 2.5e-3 * k as f64 / 800.0).abs() < 1e-18);
        prop_assert!(lr_at(k, &s) < lr_at(k + 1, &s));
    }

    #[test]
    fn phase_one_respected(switch in 1usize..200, iter in 0usize..400, which in 0usize..4) {
        let strategy = [Strategy::Curriculum, Strategy::AntiSquad, Strategy::AntiSquadIwsltCnndm, Strategy::AntiPlusMnli][which];
        let order = specs(&DECATHLON);
        let spec = CurriculumSpec { strategy, switch };
        let t = next_task(iter, &spec, &order).unwrap();
        if iter < switch {
            prop_assert!(strategy.phase_one().contains(&order[t].name.as_str()));
        } else {
            prop_assert_eq!(t, (iter - switch) % order.len());
        }
    }
}
